fn main() {
    std::process::exit(nlut::cli::run(std::env::args_os()));
}
