//! The `NLUT` binary checkpoint format and compression reporting.
//!
//! Layout, all little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `NLUT` | 4 bytes |
//! | format version | u32 |
//! | blocks `D` | u32 |
//! | hidden widths | 3 × u32 |
//! | LUT count `N` | u32 |
//! | half range `a` | f32 |
//! | flags (bit 0 invertible, bit 1 strict per-layer normalization) | u32 |
//! | Lipschitz coefficient `c` | f32 |
//! | `N` names | u32 byte length + UTF-8 each |
//!
//! followed by, for every block in order, `W₁..W₄` row-major (`out × in`),
//! actnorm scale, actnorm shift and the `N × h₁` embedding, all f32.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lut::Lut3D;
use crate::nn::{LutNetModel, ModelConfig, NnError, ResidualBlock};

pub const MAGIC: [u8; 4] = *b"NLUT";
pub const FORMAT_VERSION: u32 = 1;

const FLAG_INVERTIBLE: u32 = 1;
const FLAG_STRICT_SN: u32 = 2;
const FIXED_HEADER_BYTES: usize = 4 + 4 + 4 + 12 + 4 + 4 + 4 + 4;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not an NLUT checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (this build reads version {FORMAT_VERSION})")]
    VersionUnsupported { found: u32 },
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, file has {len}")]
    TruncatedPayload { offset: usize, needed: usize, len: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("unknown flag bits {0:#x}")]
    UnknownFlags(u32),
    #[error("LUT name is not valid UTF-8")]
    BadName,
    #[error("checkpoint describes an invalid model: {0}")]
    Model(#[from] NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Header fields as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub blocks: u32,
    pub hidden: [u32; 3],
    pub num_luts: u32,
    pub half_range: f32,
    pub invertible: bool,
    pub strict_paper_sn: bool,
    pub lipschitz_coeff: f32,
    pub lut_names: Vec<String>,
}

impl CheckpointHeader {
    fn from_model(model: &LutNetModel) -> Self {
        let c = model.config();
        Self {
            version: FORMAT_VERSION,
            blocks: c.blocks as u32,
            hidden: c.hidden.map(|h| h as u32),
            num_luts: c.num_luts as u32,
            half_range: c.half_range as f32,
            invertible: c.invertible,
            strict_paper_sn: c.strict_paper_sn,
            lipschitz_coeff: c.lipschitz_coeff as f32,
            lut_names: model.lut_names().to_vec(),
        }
    }

    /// Model configuration described by this header. Real-valued fields are
    /// widened through their shortest decimal form, so `0.83f32` comes back
    /// as `0.83` and reloading reproduces the saved model exactly.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            blocks: self.blocks as usize,
            hidden: self.hidden.map(|h| h as usize),
            num_luts: self.num_luts as usize,
            half_range: widen(self.half_range),
            invertible: self.invertible,
            lipschitz_coeff: widen(self.lipschitz_coeff),
            strict_paper_sn: self.strict_paper_sn,
        }
    }

    pub fn byte_len(&self) -> usize {
        FIXED_HEADER_BYTES + self.lut_names.iter().map(|n| 4 + n.len()).sum::<usize>()
    }
}

fn widen(v: f32) -> f64 {
    v.to_string().parse().expect("f32 display is a valid f64 literal")
}

/// Exact checkpoint size in bytes for a configuration and LUT names.
pub fn checkpoint_size(config: &ModelConfig, lut_names: &[String]) -> usize {
    FIXED_HEADER_BYTES + lut_names.iter().map(|n| 4 + n.len()).sum::<usize>() + 4 * config.parameter_count()
}

/// Serializes a model to its canonical byte stream.
pub fn to_bytes(model: &LutNetModel) -> Vec<u8> {
    let header = CheckpointHeader::from_model(model);
    let mut out = Vec::with_capacity(checkpoint_size(model.config(), model.lut_names()));
    out.extend_from_slice(&MAGIC);
    for v in [header.version, header.blocks, header.hidden[0], header.hidden[1], header.hidden[2], header.num_luts] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&header.half_range.to_le_bytes());
    let flags = ((header.invertible as u32) * FLAG_INVERTIBLE) | ((header.strict_paper_sn as u32) * FLAG_STRICT_SN);
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&header.lipschitz_coeff.to_le_bytes());
    for name in &header.lut_names {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for slice in model.param_slices() {
        for &v in slice {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::TruncatedPayload {
                offset: self.pos,
                needed: n,
                len: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn read_header(r: &mut Reader) -> Result<CheckpointHeader, CheckpointError> {
    if r.bytes.len() < 4 || r.bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    r.pos = 4;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::VersionUnsupported { found: version });
    }
    let blocks = r.u32()?;
    let hidden = [r.u32()?, r.u32()?, r.u32()?];
    let num_luts = r.u32()?;
    let half_range = r.f32()?;
    let flags = r.u32()?;
    if flags & !(FLAG_INVERTIBLE | FLAG_STRICT_SN) != 0 {
        return Err(CheckpointError::UnknownFlags(flags));
    }
    let lipschitz_coeff = r.f32()?;
    let header = CheckpointHeader {
        version,
        blocks,
        hidden,
        num_luts,
        half_range,
        invertible: flags & FLAG_INVERTIBLE != 0,
        strict_paper_sn: flags & FLAG_STRICT_SN != 0,
        lipschitz_coeff,
        lut_names: Vec::new(),
    };
    // validate before trusting the counts for allocation
    header.model_config().validate()?;
    let mut lut_names = Vec::with_capacity(num_luts as usize);
    for _ in 0..num_luts {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        lut_names.push(String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::BadName)?);
    }
    Ok(CheckpointHeader { lut_names, ..header })
}

/// Reads only the header, for inspection.
pub fn read_header_bytes(bytes: &[u8]) -> Result<CheckpointHeader, CheckpointError> {
    read_header(&mut Reader { bytes, pos: 0 })
}

pub fn from_bytes(bytes: &[u8]) -> Result<LutNetModel, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let header = read_header(&mut r)?;
    let config = header.model_config();
    let payload = 4 * config.parameter_count();
    let data = r.take(payload)?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    let blocks = (0..config.blocks)
        .map(|_| ResidualBlock::zeros(config.hidden, config.num_luts))
        .collect();
    let mut model = LutNetModel::from_parts(config, blocks, header.lut_names)?;
    let mut values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    for slice in model.param_slices_mut() {
        for v in slice.iter_mut() {
            *v = values.next().expect("payload sized from config");
        }
    }
    Ok(model)
}

/// Writes the checkpoint and returns the number of bytes written.
pub fn save(model: &LutNetModel, path: impl AsRef<Path>) -> Result<usize, CheckpointError> {
    let bytes = to_bytes(model);
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(bytes.len())
}

pub fn load(path: impl AsRef<Path>) -> Result<LutNetModel, CheckpointError> {
    from_bytes(&fs::read(path)?)
}

/// Size of a checkpoint next to the LUTs it replaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub checkpoint_bytes: usize,
    /// Checkpoint after raw deflate at the highest level.
    pub compressed_checkpoint_bytes: usize,
    /// LUTs stored as raw f32 lattices, `3 · 4 · n³` bytes each.
    pub lut_bytes: usize,
    pub num_luts: usize,
    /// `100 · (1 − checkpoint / luts)`; negative when the model is larger.
    pub ratio_percent: f64,
    pub compressed_ratio_percent: f64,
}

pub fn deflate_len(bytes: &[u8]) -> usize {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::best());
    enc.write_all(bytes).expect("in-memory write");
    enc.finish().expect("in-memory write").len()
}

pub fn compression_report_bytes(checkpoint: &[u8], luts: &[Lut3D]) -> CompressionReport {
    let lut_bytes: usize = luts.iter().map(|l| 12 * l.size().pow(3)).sum();
    let compressed = deflate_len(checkpoint);
    let ratio = |model: usize| 100.0 * (1.0 - model as f64 / lut_bytes as f64);
    CompressionReport {
        checkpoint_bytes: checkpoint.len(),
        compressed_checkpoint_bytes: compressed,
        lut_bytes,
        num_luts: luts.len(),
        ratio_percent: ratio(checkpoint.len()),
        compressed_ratio_percent: ratio(compressed),
    }
}

pub fn compression_report(model_path: impl AsRef<Path>, luts: &[Lut3D]) -> Result<CompressionReport, CheckpointError> {
    Ok(compression_report_bytes(&fs::read(model_path)?, luts))
}
