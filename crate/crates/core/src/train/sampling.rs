//! Training color distributions: uniform over the 8-bit cube or the
//! empirical pixel distribution of an image set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::image::RgbImage;

/// Largest pool kept in memory; bigger inputs are subsampled with a stride.
pub const POOL_CAP: usize = 1 << 26;

const POOL_MAGIC: &[u8; 4] = b"NPOL";
const POOL_VERSION: u32 = 1;

/// A multiset of 8-bit pixels, possibly strided down from a larger corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalPool {
    pixels: Vec<[u8; 3]>,
    stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColorDistribution {
    /// Each channel i.i.d. uniform over `0..=255`.
    Uniform,
    Empirical(EmpiricalPool),
}

impl EmpiricalPool {
    pub fn new(pixels: Vec<[u8; 3]>, stride: usize) -> Result<Self, TrainError> {
        if pixels.is_empty() {
            return Err(TrainError::EmptyPool);
        }
        Ok(Self {
            pixels,
            stride: stride.max(1),
        })
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Fraction of the `bins³` voxels of the color cube that no pixel falls in.
    pub fn empty_voxel_fraction(&self, bins: usize) -> f64 {
        let bins = bins.clamp(1, 256);
        let mut seen = vec![false; bins * bins * bins];
        let bin = |v: u8| v as usize * bins / 256;
        for p in &self.pixels {
            seen[bin(p[0]) + bins * (bin(p[1]) + bins * bin(p[2]))] = true;
        }
        seen.iter().filter(|s| !**s).count() as f64 / seen.len() as f64
    }

    /// `NPOL` | version u32 | stride u32 | count u64 | RGB bytes, little endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 3 * self.pixels.len());
        out.extend_from_slice(POOL_MAGIC);
        out.extend_from_slice(&POOL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.stride as u32).to_le_bytes());
        out.extend_from_slice(&(self.pixels.len() as u64).to_le_bytes());
        out.extend(self.pixels.iter().flatten());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let bad = |m: &str| TrainError::BadPool(m.to_string());
        if bytes.len() < 20 || &bytes[..4] != POOL_MAGIC {
            return Err(bad("missing NPOL header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != POOL_VERSION {
            return Err(bad(&format!("unsupported pool version {version}")));
        }
        let stride = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let payload = &bytes[20..];
        if payload.len() != count.saturating_mul(3) {
            return Err(bad("pixel payload length disagrees with header"));
        }
        let pixels = payload.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        Self::new(pixels, stride)
    }
}

/// Pools every pixel of `images`, striding when the total exceeds `cap`.
pub fn build_empirical_distribution_capped(images: &[RgbImage], cap: usize) -> Result<EmpiricalPool, TrainError> {
    let total: usize = images.iter().map(|i| i.pixel_count()).sum();
    if images.is_empty() || total == 0 {
        return Err(TrainError::EmptyInput);
    }
    let stride = total.div_ceil(cap.max(1));
    let pixels = images.iter().flat_map(|i| i.pixels()).step_by(stride).collect();
    EmpiricalPool::new(pixels, stride)
}

pub fn build_empirical_distribution(images: &[RgbImage]) -> Result<ColorDistribution, TrainError> {
    Ok(ColorDistribution::Empirical(build_empirical_distribution_capped(
        images, POOL_CAP,
    )?))
}

/// Counter-based generator: the stream is selected by `call_index`, so the
/// colors drawn for a given iteration do not depend on any earlier draw.
pub fn stream_rng(seed: u64, call_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(call_index);
    rng
}

pub fn sample_colors(
    dist: &ColorDistribution,
    count: usize,
    seed: u64,
    call_index: u64,
) -> Result<Vec<[u8; 3]>, TrainError> {
    if count == 0 {
        return Err(TrainError::BadConfig("sample count must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, call_index);
    match dist {
        ColorDistribution::Uniform => Ok((0..count).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()),
        ColorDistribution::Empirical(pool) => {
            if pool.is_empty() {
                return Err(TrainError::EmptyPool);
            }
            Ok((0..count)
                .map(|_| pool.pixels[rng.gen_range(0..pool.len())])
                .collect())
        }
    }
}
