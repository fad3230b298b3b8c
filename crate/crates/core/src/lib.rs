pub mod checkpoint;
pub mod cli;
pub mod color;
pub mod eval;
pub mod image;
pub mod lut;
pub mod nn;
pub mod train;
