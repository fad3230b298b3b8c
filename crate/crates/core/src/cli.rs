//! The `nlut` command line.
//!
//! Exit codes: 0 on success, 1 when a command fails on its inputs, 2 on
//! malformed invocations.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::{self, compression_report_bytes, read_header_bytes};
use crate::eval::{
    blend_reconstruct, evaluate_model_hald, evaluate_model_images, invert_lut, reconstruct_lut, DEFAULT_HALD_LEVEL,
    FULL_HALD_LEVEL,
};
use crate::image::RgbImage;
use crate::lut::{hald_decode, hald_encode, parse_cube, write_cube, HaldSpec, Lut3D};
use crate::nn::{IndexVector, ModelConfig, SizeClass, DEFAULT_HIDDEN, DEFAULT_LIPSCHITZ};
use crate::train::{
    build_empirical_distribution_capped, fit, ColorDistribution, EmpiricalPool, LossKind, Preset, TrainConfig,
    POOL_CAP,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const CUBE_PRECISION: usize = 6;
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "ppm"];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Domain(_) => EXIT_DOMAIN,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Domain(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Attaches a path to a domain error.
fn at<T, E: std::fmt::Display>(path: &Path, r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn domain<T, E: std::fmt::Display>(r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError::Domain(e.to_string()))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "nlut", version, about = "Embed many 3D color LUTs in one compact neural model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a set of LUTs and write a checkpoint.
    Fit(FitArgs),
    /// Extract one embedded LUT as a .cube file.
    Reconstruct(ReconstructArgs),
    /// Compare a checkpoint against its source LUTs.
    Eval(EvalArgs),
    /// Extract the inverse of an embedded LUT from an invertible model.
    Invert(InvertArgs),
    /// Extract a mixture of embedded LUTs.
    Blend(BlendArgs),
    /// Convert between .cube files and Hald images, or apply a LUT.
    Hald {
        #[command(subcommand)]
        command: HaldCommand,
    },
    /// Print a checkpoint header.
    Info(InfoArgs),
    /// Build an empirical color pool from images.
    Dist(DistArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizeArg {
    Tiny,
    Small,
    Medium,
    Large,
}

impl From<SizeArg> for SizeClass {
    fn from(s: SizeArg) -> Self {
        match s {
            SizeArg::Tiny => SizeClass::Tiny,
            SizeArg::Small => SizeClass::Small,
            SizeArg::Medium => SizeClass::Medium,
            SizeArg::Large => SizeClass::Large,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    L2,
    Deltae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Paper,
    Desk,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// LUT files (.cube or Hald images) or directories of them.
    #[arg(long, required = true, num_args = 1..)]
    pub luts: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "tiny")]
    pub size: SizeArg,
    /// Override the number of residual blocks.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Hidden widths as `w1,w2,w3`.
    #[arg(long, value_parser = parse_hidden)]
    pub hidden: Option<[usize; 3]>,
    #[arg(long, value_enum, default_value = "l2")]
    pub loss: LossArg,
    /// `uniform`, a pool file written by `dist`, or a directory of images.
    #[arg(long, default_value = "uniform")]
    pub dist: String,
    /// Images whose colors form the training distribution.
    #[arg(long, num_args = 1.., conflicts_with = "dist")]
    pub images: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: PresetArg,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_halve_every: Option<usize>,
    /// Train only this many randomly chosen LUTs per step.
    #[arg(long)]
    pub luts_per_step: Option<usize>,
    /// Constrain every block to be contractive so the model can be inverted.
    #[arg(long)]
    pub invertible: bool,
    #[arg(long, default_value_t = DEFAULT_LIPSCHITZ)]
    pub sn_coeff: f64,
    /// Normalize each layer to the full coefficient instead of sharing it.
    #[arg(long)]
    pub strict_sn: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Also write the training log as JSON lines to this path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub index: usize,
    #[arg(long, default_value_t = 33)]
    pub res: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub luts: Vec<PathBuf>,
    /// Evaluate on these images instead of a Hald lattice.
    #[arg(long, num_args = 1..)]
    pub images: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_HALD_LEVEL)]
    pub hald_level: usize,
    /// Use every 8-bit color (Hald level 16).
    #[arg(long, conflicts_with = "hald_level")]
    pub full: bool,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Write the JSON report here (`-` for stdout).
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub index: usize,
    #[arg(long, default_value_t = 33)]
    pub res: usize,
    /// Fixed-point iterations per block.
    #[arg(long, default_value_t = 500)]
    pub inv_iters: usize,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BlendArgs {
    pub checkpoint: PathBuf,
    /// One weight per embedded LUT, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub weights: Vec<f64>,
    #[arg(long, default_value_t = 33)]
    pub res: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum HaldCommand {
    /// Write a LUT as a Hald image, resampling it to the level's lattice.
    Encode {
        lut: PathBuf,
        #[arg(long, default_value_t = 8)]
        hald_level: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a Hald image and write it as a .cube file.
    Decode {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a LUT to an image.
    Apply {
        lut: PathBuf,
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub images: Vec<PathBuf>,
    #[arg(long, default_value_t = POOL_CAP)]
    pub cap: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => with_threads(a.threads, || cmd_eval(a)),
        Command::Invert(a) => with_threads(a.threads, || cmd_invert(a)),
        Command::Blend(a) => cmd_blend(a),
        Command::Hald { command } => cmd_hald(command),
        Command::Info(a) => cmd_info(a),
        Command::Dist(a) => cmd_dist(a),
    }
}

fn with_threads<T>(threads: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T>
where
    T: Send,
{
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let pool = domain(rayon::ThreadPoolBuilder::new().num_threads(threads).build())?;
    pool.install(f)
}

fn parse_hidden(s: &str) -> Result<[usize; 3], String> {
    let widths: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("`{t}` is not a width")))
        .collect::<Result<_, _>>()?;
    widths
        .try_into()
        .map_err(|_| "expected three comma-separated widths".to_string())
}

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Expands directories into their matching files, sorted by file name.
fn expand(paths: &[PathBuf], exts: &[&str]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = at(p, fs::read_dir(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && has_extension(f, exts))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(CliError::Domain(format!("{}: no matching files", p.display())));
            }
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Reads a `.cube` file or a Hald image.
pub fn read_lut(path: &Path) -> CliResult<Lut3D> {
    if has_extension(path, &IMAGE_EXTENSIONS) {
        let img = at(path, RgbImage::load(path))?;
        at(path, hald_decode(&img))
    } else {
        let text = at(path, fs::read_to_string(path))?;
        at(path, parse_cube(&text))
    }
}

/// LUTs from files and directories, named by file stem.
pub fn read_luts(paths: &[PathBuf]) -> CliResult<(Vec<Lut3D>, Vec<String>)> {
    let mut exts = IMAGE_EXTENSIONS.to_vec();
    exts.push("cube");
    let files = expand(paths, &exts)?;
    let luts = files.iter().map(|f| read_lut(f)).collect::<CliResult<Vec<_>>>()?;
    let names = files
        .iter()
        .map(|f| f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    Ok((luts, names))
}

pub fn read_images(paths: &[PathBuf]) -> CliResult<Vec<RgbImage>> {
    expand(paths, &IMAGE_EXTENSIONS)?
        .iter()
        .map(|f| at(f, RgbImage::load(f)))
        .collect()
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    at(path, fs::write(path, text))
}

fn write_lut(path: &Path, lut: &Lut3D) -> CliResult<()> {
    write_text(path, &write_cube(lut, CUBE_PRECISION))
}

fn load_model(path: &Path) -> CliResult<crate::nn::LutNetModel> {
    at(path, checkpoint::load(path))
}

#[derive(Debug, Serialize)]
struct FitEcho<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    distribution: String,
    luts: Vec<String>,
    parameter_count: usize,
    checkpoint_bytes: usize,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn fit_distribution(a: &FitArgs) -> CliResult<(ColorDistribution, String)> {
    if !a.images.is_empty() {
        let images = read_images(&a.images)?;
        let pool = domain(build_empirical_distribution_capped(&images, POOL_CAP))?;
        let desc = format!("empirical: {} images, {} pixels, stride {}", images.len(), pool.len(), pool.stride());
        return Ok((ColorDistribution::Empirical(pool), desc));
    }
    if a.dist.eq_ignore_ascii_case("uniform") {
        return Ok((ColorDistribution::Uniform, "uniform".into()));
    }
    let path = Path::new(&a.dist);
    if path.is_dir() {
        let images = read_images(&[path.to_path_buf()])?;
        let pool = domain(build_empirical_distribution_capped(&images, POOL_CAP))?;
        let desc = format!("empirical: {} ({} pixels, stride {})", path.display(), pool.len(), pool.stride());
        return Ok((ColorDistribution::Empirical(pool), desc));
    }
    if !path.exists() {
        return Err(usage(format!("--dist must be `uniform`, a pool file or an image directory, got `{}`", a.dist)));
    }
    let pool = at(path, EmpiricalPool::from_bytes(&at(path, fs::read(path))?))?;
    let desc = format!("empirical: {} ({} pixels, stride {})", path.display(), pool.len(), pool.stride());
    Ok((ColorDistribution::Empirical(pool), desc))
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let (luts, names) = read_luts(&a.luts)?;
    let mut model_config = if a.invertible {
        ModelConfig::invertible(a.blocks.unwrap_or(8), luts.len())
    } else {
        ModelConfig::for_size(a.size.into(), luts.len())
    };
    if let Some(d) = a.blocks {
        model_config.blocks = d;
    }
    if let Some(h) = a.hidden {
        model_config.hidden = h;
    } else if !a.invertible {
        model_config.hidden = DEFAULT_HIDDEN;
    }
    model_config.lipschitz_coeff = a.sn_coeff;
    model_config.strict_paper_sn = a.strict_sn;
    model_config.validate().map_err(|e| usage(e.to_string()))?;

    let mut config = TrainConfig::preset(match a.preset {
        PresetArg::Paper => Preset::Paper,
        PresetArg::Desk => Preset::Desk,
    });
    config.loss = match a.loss {
        LossArg::L2 => LossKind::L2,
        LossArg::Deltae => LossKind::DeltaE,
    };
    config.seed = a.seed;
    config.threads = a.threads;
    if let Some(v) = a.iters {
        config.total_iters = v;
    }
    if let Some(v) = a.batch {
        config.batch_size = v;
    }
    if let Some(v) = a.lr {
        config.lr = v;
    }
    if let Some(v) = a.lr_halve_every {
        config.lr_halve_every = v;
    }
    if let Some(k) = a.luts_per_step {
        config.luts_per_step = crate::train::LutSubset::Random(k);
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let (dist, dist_desc) = fit_distribution(&a)?;

    let echo_config = |bytes| FitEcho {
        model: &model_config,
        train: &config,
        distribution: dist_desc.clone(),
        luts: names.clone(),
        parameter_count: model_config.parameter_count(),
        checkpoint_bytes: bytes,
    };
    eprintln!("{}", serde_json::to_string(&echo_config(0)).expect("plain data"));

    let out = domain(fit(&luts, &model_config, &config, &dist))?;
    let mut model = out.model;
    domain(model.set_lut_names(names.clone()))?;
    let bytes = at(&a.out, checkpoint::save(&model, &a.out))?;
    write_text(&sidecar(&a.out, ".log"), &out.log.to_text())?;
    if let Some(p) = &a.json {
        write_text(p, &out.log.to_json_lines())?;
    }
    let echo = serde_json::to_string_pretty(&echo_config(bytes)).expect("plain data");
    write_text(&sidecar(&a.out, ".config.json"), &echo)?;

    println!("{:>5}  {:<24} {:>9}", "index", "name", "dE_M");
    for (i, (name, de)) in names.iter().zip(&out.log.final_delta_e).enumerate() {
        println!("{i:>5}  {name:<24} {de:>9.4}");
    }
    println!("wrote {} ({bytes} bytes)", a.out.display());
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> CliResult<()> {
    let model = load_model(&a.checkpoint)?;
    let lut = domain(reconstruct_lut(&model, a.index, a.res))?;
    write_lut(&a.out, &lut)
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let bytes = at(&a.checkpoint, fs::read(&a.checkpoint))?;
    let model = at(&a.checkpoint, checkpoint::from_bytes(&bytes))?;
    let (luts, _) = read_luts(&a.luts)?;
    let report = if a.images.is_empty() {
        let level = if a.full { FULL_HALD_LEVEL } else { a.hald_level };
        domain(evaluate_model_hald(&model, &luts, level))?
    } else {
        let images = read_images(&a.images)?;
        let id = a.images.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
        domain(evaluate_model_images(&model, &luts, &images, &id))?
    };
    let report = report.with_compression(compression_report_bytes(&bytes, &luts));
    match &a.json {
        Some(p) if p.as_os_str() == "-" => println!("{}", report.to_json()),
        Some(p) => {
            write_text(p, &report.to_json())?;
            print!("{}", report.to_table());
        }
        None => print!("{}", report.to_table()),
    }
    Ok(())
}

fn cmd_invert(a: InvertArgs) -> CliResult<()> {
    let model = load_model(&a.checkpoint)?;
    let lut = domain(invert_lut(&model, a.index, a.res, a.inv_iters))?;
    write_lut(&a.out, &lut)
}

fn cmd_blend(a: BlendArgs) -> CliResult<()> {
    let model = load_model(&a.checkpoint)?;
    let weights = IndexVector::from_weights(a.weights).map_err(|e| usage(e.to_string()))?;
    let lut = domain(blend_reconstruct(&model, &weights, a.res))?;
    write_lut(&a.out, &lut)
}

fn cmd_hald(command: HaldCommand) -> CliResult<()> {
    match command {
        HaldCommand::Encode { lut, hald_level, out } => {
            let spec = HaldSpec::new(hald_level).map_err(|e| usage(e.to_string()))?;
            let src = read_lut(&lut)?;
            let resampled = if src.size() == spec.lut_size() {
                src
            } else {
                domain(Lut3D::from_fn(spec.lut_size(), |p| src.apply_clamped(p)))?
            };
            let img = domain(hald_encode(&resampled, spec))?;
            at(&out, img.save(&out))
        }
        HaldCommand::Decode { image, out } => {
            let lut = read_lut(&image)?;
            write_lut(&out, &lut)
        }
        HaldCommand::Apply { lut, image, out } => {
            let lut = read_lut(&lut)?;
            let img = at(&image, RgbImage::load(&image))?;
            at(&out, lut.apply_image(&img).save(&out))
        }
    }
}

fn cmd_info(a: InfoArgs) -> CliResult<()> {
    let bytes = at(&a.checkpoint, fs::read(&a.checkpoint))?;
    let header = at(&a.checkpoint, read_header_bytes(&bytes))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&header).expect("plain data"));
        return Ok(());
    }
    let config = header.model_config();
    println!("format version  {}", header.version);
    println!("blocks          {}", header.blocks);
    println!("hidden          {:?}", header.hidden);
    println!("luts            {}", header.num_luts);
    println!("half range      {}", header.half_range);
    println!("invertible      {}", header.invertible);
    println!("strict sn       {}", header.strict_paper_sn);
    println!("sn coefficient  {}", header.lipschitz_coeff);
    println!("parameters      {}", config.parameter_count());
    println!("file bytes      {}", bytes.len());
    for (i, name) in header.lut_names.iter().enumerate() {
        println!("  {i:>5}  {name}");
    }
    Ok(())
}

fn cmd_dist(a: DistArgs) -> CliResult<()> {
    let images = read_images(&a.images)?;
    let pool = domain(build_empirical_distribution_capped(&images, a.cap))?;
    at(&a.out, fs::write(&a.out, pool.to_bytes()))?;
    println!(
        "{} images, {} pixels (stride {}), {:.1}% of 16^3 color voxels empty",
        images.len(),
        pool.len(),
        pool.stride(),
        100.0 * pool.empty_voxel_fraction(16)
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("nlut").chain(args.iter().copied()))
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn fit_flags() {
        let cli = parse(&[
            "fit", "--luts", "a", "b", "--size", "small", "--hidden", "8,16,8", "--loss", "deltae", "--preset",
            "paper", "--seed", "4", "--out", "m.nlut",
        ])
        .unwrap();
        let Command::Fit(a) = cli.command else { panic!() };
        assert_eq!(a.luts.len(), 2);
        assert_eq!(a.size, SizeArg::Small);
        assert_eq!(a.hidden, Some([8, 16, 8]));
        assert!(parse(&["fit", "--luts", "a", "--hidden", "8,16", "--out", "m"]).is_err());
        assert_eq!(a.loss, LossArg::Deltae);
        assert_eq!(a.sn_coeff, 0.97);
        assert_eq!(a.seed, 4);
    }

    #[test]
    fn invert_defaults() {
        let Command::Invert(a) = parse(&["invert", "m", "--index", "0", "--out", "x"]).unwrap().command else {
            panic!()
        };
        assert_eq!((a.inv_iters, a.res), (500, 33));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["nlut", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["nlut", "fit", "--out", "x"]), EXIT_USAGE);
        assert_eq!(run(["nlut", "eval", "m", "--luts", "d", "--full", "--hald-level", "3"]), EXIT_USAGE);
    }

    #[test]
    fn missing_files_exit_1() {
        assert_eq!(run(["nlut", "info", "/nonexistent/model.nlut"]), EXIT_DOMAIN);
    }

    #[test]
    fn blend_accepts_negative_weights() {
        let Command::Blend(a) = parse(&["blend", "m", "--weights", "-0.5,1.5", "--out", "x"]).unwrap().command else {
            panic!()
        };
        assert_eq!(a.weights, vec![-0.5, 1.5]);
    }
}
