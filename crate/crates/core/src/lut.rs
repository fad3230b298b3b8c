//! 3D lattice LUTs: trilinear lookup, `.cube` text I/O, Hald images and a
//! small family of synthetic LUTs used for experiments.
//!
//! Tables are stored with the red index varying fastest, then green, then
//! blue, which is both the `.cube` convention and the Hald pixel order.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::color::quantize_unit;
use crate::image::RgbImage;

pub const MIN_SIZE: usize = 2;
pub const MAX_SIZE: usize = 256;

/// Slack allowed when validating table values against the domain, to absorb
/// printing noise in third-party `.cube` files.
const DOMAIN_SLACK: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum LutError {
    #[error("LUT_3D_SIZE keyword missing")]
    MissingSize,
    #[error("expected {expected} table entries, found {found}")]
    EntryCountMismatch { expected: usize, found: usize },
    #[error("line {line}: malformed number `{token}`")]
    MalformedNumber { line: usize, token: String },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("value {value} outside domain [{min}, {max}]")]
    OutOfDomain { value: f64, min: f64, max: f64 },
    #[error("lattice size {0} outside [2, 256]")]
    BadSize(usize),
    #[error("LUT size {lut} does not match Hald level {level} (needs {needed})")]
    SizeMismatch { lut: usize, level: usize, needed: usize },
    #[error("{width}x{height} image is not a Hald image")]
    NotAHaldSize { width: usize, height: usize },
    #[error("bad parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lut3D {
    size: usize,
    table: Vec<[f64; 3]>,
    domain_min: [f64; 3],
    domain_max: [f64; 3],
    title: Option<String>,
}

impl Lut3D {
    /// Builds a LUT over the unit domain after validating every invariant.
    pub fn new(size: usize, table: Vec<[f64; 3]>) -> Result<Self, LutError> {
        Self::with_domain(size, table, [0.0; 3], [1.0; 3])
    }

    pub fn with_domain(
        size: usize,
        mut table: Vec<[f64; 3]>,
        domain_min: [f64; 3],
        domain_max: [f64; 3],
    ) -> Result<Self, LutError> {
        if !(MIN_SIZE..=MAX_SIZE).contains(&size) {
            return Err(LutError::BadSize(size));
        }
        let expected = size * size * size;
        if table.len() != expected {
            return Err(LutError::EntryCountMismatch {
                expected,
                found: table.len(),
            });
        }
        for c in 0..3 {
            if !(domain_min[c].is_finite() && domain_max[c].is_finite() && domain_min[c] < domain_max[c]) {
                return Err(LutError::BadParameter(format!(
                    "domain [{}, {}] on channel {c}",
                    domain_min[c], domain_max[c]
                )));
            }
        }
        for entry in &mut table {
            for c in 0..3 {
                let (lo, hi) = (domain_min[c], domain_max[c]);
                let v = entry[c];
                if !v.is_finite() || v < lo - DOMAIN_SLACK || v > hi + DOMAIN_SLACK {
                    return Err(LutError::OutOfDomain {
                        value: v,
                        min: lo,
                        max: hi,
                    });
                }
                entry[c] = v.clamp(lo, hi);
            }
        }
        Ok(Self {
            size,
            table,
            domain_min,
            domain_max,
            title: None,
        })
    }

    pub fn identity(size: usize) -> Result<Self, LutError> {
        Self::from_fn(size, |rgb| rgb)
    }

    /// Samples `f` at every lattice point of the unit cube.
    pub fn from_fn(size: usize, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Result<Self, LutError> {
        if !(MIN_SIZE..=MAX_SIZE).contains(&size) {
            return Err(LutError::BadSize(size));
        }
        let table = lattice_points(size).map(&mut f).collect();
        Self::new(size, table)
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn table(&self) -> &[[f64; 3]] {
        &self.table
    }

    pub fn domain_min(&self) -> [f64; 3] {
        self.domain_min
    }

    pub fn domain_max(&self) -> [f64; 3] {
        self.domain_max
    }

    pub fn title(&self) -> Option<&str> {
        self.title.as_deref()
    }

    #[inline]
    pub fn index(&self, r: usize, g: usize, b: usize) -> usize {
        r + self.size * (g + self.size * b)
    }

    #[inline]
    pub fn entry(&self, r: usize, g: usize, b: usize) -> [f64; 3] {
        self.table[self.index(r, g, b)]
    }

    /// Trilinear lookup of a single color. Inputs outside the domain are an
    /// error; see [`Lut3D::apply_clamped`] for the forgiving variant.
    pub fn sample(&self, rgb: [f64; 3]) -> Result<[f64; 3], LutError> {
        for c in 0..3 {
            let (lo, hi) = (self.domain_min[c], self.domain_max[c]);
            if !(rgb[c] >= lo && rgb[c] <= hi) {
                return Err(LutError::OutOfDomain {
                    value: rgb[c],
                    min: lo,
                    max: hi,
                });
            }
        }
        Ok(self.sample_unchecked(rgb))
    }

    fn sample_unchecked(&self, rgb: [f64; 3]) -> [f64; 3] {
        let last = (self.size - 1) as f64;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for c in 0..3 {
            let t = (rgb[c] - self.domain_min[c]) / (self.domain_max[c] - self.domain_min[c]) * last;
            let i = (t.floor() as isize).clamp(0, self.size as isize - 2) as usize;
            base[c] = i;
            frac[c] = t - i as f64;
        }
        let [r, g, b] = base;
        let [fr, fg, fb] = frac;
        let s = self.size;
        let i000 = r + s * (g + s * b);
        let (dr, dg, db) = (1, s, s * s);
        let t = &self.table;
        let mut out = [0.0; 3];
        for c in 0..3 {
            let c00 = t[i000][c] + (t[i000 + dr][c] - t[i000][c]) * fr;
            let c10 = t[i000 + dg][c] + (t[i000 + dg + dr][c] - t[i000 + dg][c]) * fr;
            let c01 = t[i000 + db][c] + (t[i000 + db + dr][c] - t[i000 + db][c]) * fr;
            let c11 = t[i000 + db + dg][c] + (t[i000 + db + dg + dr][c] - t[i000 + db + dg][c]) * fr;
            let c0 = c00 + (c10 - c00) * fg;
            let c1 = c01 + (c11 - c01) * fg;
            out[c] = c0 + (c1 - c0) * fb;
        }
        out
    }

    /// Trilinear interpolation of a batch of colors.
    pub fn apply_trilinear(&self, colors: &[[f64; 3]]) -> Result<Vec<[f64; 3]>, LutError> {
        colors.iter().map(|&c| self.sample(c)).collect()
    }

    /// Interpolation with inputs clamped into the domain first.
    pub fn apply_clamped(&self, rgb: [f64; 3]) -> [f64; 3] {
        let mut x = rgb;
        for c in 0..3 {
            x[c] = if x[c].is_nan() {
                self.domain_min[c]
            } else {
                x[c].clamp(self.domain_min[c], self.domain_max[c])
            };
        }
        self.sample_unchecked(x)
    }

    /// Applies the LUT to every pixel of an 8-bit image.
    pub fn apply_image(&self, image: &RgbImage) -> RgbImage {
        let pixels: Vec<[u8; 3]> = image
            .pixels()
            .map(|p| {
                let out = self.apply_clamped(code_to_unit(p));
                [quantize_unit(out[0]), quantize_unit(out[1]), quantize_unit(out[2])]
            })
            .collect();
        RgbImage::from_pixels(image.width(), image.height(), &pixels).expect("same shape")
    }

    /// Number of bytes the lattice occupies as a raw binary f32 array.
    pub fn raw_f32_bytes(&self) -> usize {
        self.table.len() * 3 * 4
    }
}

#[inline]
pub fn code_to_unit(p: [u8; 3]) -> [f64; 3] {
    [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
}

/// Unit-cube lattice coordinates in table order (red fastest).
pub fn lattice_points(size: usize) -> impl Iterator<Item = [f64; 3]> {
    let last = (size - 1) as f64;
    (0..size * size * size).map(move |i| {
        let r = i % size;
        let g = (i / size) % size;
        let b = i / (size * size);
        [r as f64 / last, g as f64 / last, b as f64 / last]
    })
}

// ---------------------------------------------------------------------------
// .cube text format

pub fn parse_cube(text: &str) -> Result<Lut3D, LutError> {
    let mut title = None;
    let mut size = None;
    let mut domain_min = [0.0; 3];
    let mut domain_max = [1.0; 3];
    let mut table = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or_default();
        match head {
            "TITLE" => {
                let rest = line["TITLE".len()..].trim();
                title = Some(rest.trim_matches('"').to_string());
            }
            "LUT_3D_SIZE" => {
                let token = parts.next().unwrap_or_default();
                let n: usize = token.parse().map_err(|_| LutError::MalformedNumber {
                    line: line_no,
                    token: token.to_string(),
                })?;
                if !(MIN_SIZE..=MAX_SIZE).contains(&n) {
                    return Err(LutError::BadSize(n));
                }
                size = Some(n);
                table.reserve(n * n * n);
            }
            "DOMAIN_MIN" => domain_min = parse_triple(parts, line_no)?,
            "DOMAIN_MAX" => domain_max = parse_triple(parts, line_no)?,
            "LUT_1D_SIZE" | "LUT_1D_INPUT_RANGE" | "LUT_3D_INPUT_RANGE" => {
                return Err(LutError::MalformedLine {
                    line: line_no,
                    message: format!("unsupported keyword {head}"),
                });
            }
            _ if head.starts_with(|c: char| c.is_ascii_alphabetic()) && head.parse::<f64>().is_err() => {
                return Err(LutError::MalformedLine {
                    line: line_no,
                    message: format!("unknown keyword {head}"),
                });
            }
            _ => table.push(parse_triple(line.split_whitespace(), line_no)?),
        }
    }

    let size = size.ok_or(LutError::MissingSize)?;
    let expected = size * size * size;
    if table.len() != expected {
        return Err(LutError::EntryCountMismatch {
            expected,
            found: table.len(),
        });
    }
    let mut lut = Lut3D::with_domain(size, table, domain_min, domain_max)?;
    lut.title = title;
    Ok(lut)
}

fn parse_triple<'a>(mut parts: impl Iterator<Item = &'a str>, line: usize) -> Result<[f64; 3], LutError> {
    let mut out = [0.0f64; 3];
    for v in &mut out {
        let token = parts.next().ok_or_else(|| LutError::MalformedLine {
            line,
            message: "expected three values".into(),
        })?;
        *v = token.parse().map_err(|_| LutError::MalformedNumber {
            line,
            token: token.to_string(),
        })?;
        if !v.is_finite() {
            return Err(LutError::MalformedNumber {
                line,
                token: token.to_string(),
            });
        }
    }
    if parts.next().is_some() {
        return Err(LutError::MalformedLine {
            line,
            message: "more than three values".into(),
        });
    }
    Ok(out)
}

fn push_fixed(out: &mut String, v: f64, precision: usize) {
    let start = out.len();
    write!(out, "{v:.precision$}").unwrap();
    // "-0.000" -> "0.000"
    if out[start..].starts_with('-') && out[start + 1..].bytes().all(|b| b == b'0' || b == b'.') {
        out.remove(start);
    }
}

/// Serializes to `.cube` text with `precision` decimals and LF line ends.
/// Domain lines are only emitted for non-unit domains.
pub fn write_cube(lut: &Lut3D, precision: usize) -> String {
    let mut out = String::with_capacity(lut.table.len() * (3 * (precision + 3)) + 64);
    if let Some(title) = &lut.title {
        writeln!(out, "TITLE \"{title}\"").unwrap();
    }
    let triple = |out: &mut String, key: &str, v: [f64; 3]| {
        out.push_str(key);
        for x in v {
            out.push(' ');
            push_fixed(out, x, precision);
        }
        out.push('\n');
    };
    if lut.domain_min != [0.0; 3] || lut.domain_max != [1.0; 3] {
        triple(&mut out, "DOMAIN_MIN", lut.domain_min);
        triple(&mut out, "DOMAIN_MAX", lut.domain_max);
    }
    writeln!(out, "LUT_3D_SIZE {}", lut.size).unwrap();
    for e in &lut.table {
        push_fixed(&mut out, e[0], precision);
        out.push(' ');
        push_fixed(&mut out, e[1], precision);
        out.push(' ');
        push_fixed(&mut out, e[2], precision);
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Hald images

/// A Hald level `ℓ`: an `ℓ³ × ℓ³` image holding an `(ℓ²)³`-entry LUT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaldSpec {
    level: usize,
}

impl HaldSpec {
    pub fn new(level: usize) -> Result<Self, LutError> {
        // level 16 gives a 256³ lattice, the largest LUT we represent
        if !(2..=16).contains(&level) {
            return Err(LutError::BadParameter(format!("Hald level {level} outside [2, 16]")));
        }
        Ok(Self { level })
    }

    /// Recovers the level from an image side length, if it is a cube.
    pub fn from_side(side: usize) -> Option<Self> {
        (2..=16).find(|l| l * l * l == side).map(|level| Self { level })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn lut_size(&self) -> usize {
        self.level * self.level
    }

    pub fn image_side(&self) -> usize {
        self.level * self.level * self.level
    }

    pub fn color_count(&self) -> usize {
        self.image_side() * self.image_side()
    }

    /// All input colors of this level as 8-bit codes, in table order.
    pub fn input_codes(&self) -> Vec<[u8; 3]> {
        let n = self.lut_size();
        lattice_points(n)
            .map(|p| [quantize_unit(p[0]), quantize_unit(p[1]), quantize_unit(p[2])])
            .collect()
    }

    /// All input colors as exact lattice coordinates in the unit cube.
    pub fn input_colors(&self) -> Vec<[f64; 3]> {
        lattice_points(self.lut_size()).collect()
    }
}

pub fn hald_encode(lut: &Lut3D, spec: HaldSpec) -> Result<RgbImage, LutError> {
    if lut.size != spec.lut_size() {
        return Err(LutError::SizeMismatch {
            lut: lut.size,
            level: spec.level,
            needed: spec.lut_size(),
        });
    }
    let side = spec.image_side();
    let data = lut
        .table
        .iter()
        .flat_map(|e| [quantize_unit(e[0]), quantize_unit(e[1]), quantize_unit(e[2])])
        .collect();
    Ok(RgbImage::new(side, side, data).expect("hald shape"))
}

pub fn hald_decode(image: &RgbImage) -> Result<Lut3D, LutError> {
    let not_hald = LutError::NotAHaldSize {
        width: image.width(),
        height: image.height(),
    };
    if image.width() != image.height() {
        return Err(not_hald);
    }
    let spec = HaldSpec::from_side(image.width()).ok_or(not_hald)?;
    let table = image.pixels().map(code_to_unit).collect();
    Lut3D::new(spec.lut_size(), table)
}

// ---------------------------------------------------------------------------
// Synthetic LUTs

#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticKind {
    Identity,
    Gamma(f64),
    ChannelMix([[f64; 3]; 3]),
    Grayscale,
    SigmoidContrast(f64),
    RandomSmooth { seed: u64, amplitude: f64 },
}

/// Rec. 709 luma weights applied to encoded values.
const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Number of sinusoidal terms per channel in `RandomSmooth`.
const SMOOTH_TERMS: usize = 6;

impl SyntheticKind {
    /// Parses `identity`, `gamma:2.2`, `mix:m00,m01,...,m22`, `grayscale`,
    /// `sigmoid:6` and `smooth:SEED:AMPLITUDE`.
    pub fn parse(s: &str) -> Result<Self, LutError> {
        let bad = || LutError::BadParameter(format!("cannot parse synthetic LUT `{s}`"));
        let mut it = s.split(':');
        let kind = it.next().ok_or_else(bad)?;
        let num = |t: Option<&str>| t.and_then(|v| v.parse::<f64>().ok()).ok_or_else(bad);
        match kind {
            "identity" => Ok(Self::Identity),
            "grayscale" | "gray" => Ok(Self::Grayscale),
            "gamma" => Ok(Self::Gamma(num(it.next())?)),
            "sigmoid" => Ok(Self::SigmoidContrast(num(it.next())?)),
            "smooth" => {
                let seed = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                Ok(Self::RandomSmooth {
                    seed,
                    amplitude: num(it.next())?,
                })
            }
            "mix" => {
                let vals: Vec<f64> = it
                    .next()
                    .ok_or_else(bad)?
                    .split(',')
                    .map(|v| v.parse().map_err(|_| bad()))
                    .collect::<Result<_, _>>()?;
                if vals.len() != 9 {
                    return Err(bad());
                }
                let mut m = [[0.0; 3]; 3];
                for (i, v) in vals.into_iter().enumerate() {
                    m[i / 3][i % 3] = v;
                }
                Ok(Self::ChannelMix(m))
            }
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::Gamma(g) => format!("gamma:{g}"),
            Self::ChannelMix(m) => format!(
                "mix:{}",
                m.iter().flatten().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
            ),
            Self::Grayscale => "grayscale".into(),
            Self::SigmoidContrast(k) => format!("sigmoid:{k}"),
            Self::RandomSmooth { seed, amplitude } => format!("smooth:{seed}:{amplitude}"),
        }
    }
}

struct SmoothField {
    // per channel: (frequency vector, phase, weight)
    terms: [[([f64; 3], f64, f64); SMOOTH_TERMS]; 3],
}

impl SmoothField {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = [[([0.0; 3], 0.0, 0.0); SMOOTH_TERMS]; 3];
        for channel in terms.iter_mut() {
            let mut total = 0.0;
            for t in channel.iter_mut() {
                let mut freq = [0.0; 3];
                while freq == [0.0; 3] {
                    for f in &mut freq {
                        *f = rng.gen_range(0..=2) as f64;
                    }
                }
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                let weight = rng.gen_range(0.2..1.0);
                total += weight;
                *t = (freq, phase, weight);
            }
            for t in channel.iter_mut() {
                t.2 /= total;
            }
        }
        Self { terms }
    }

    /// Perturbation in `[-1, 1]` per channel.
    fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (c, channel) in self.terms.iter().enumerate() {
            out[c] = channel
                .iter()
                .map(|(f, phase, w)| {
                    let arg = std::f64::consts::PI * (f[0] * x[0] + f[1] * x[1] + f[2] * x[2]) + phase;
                    w * arg.sin()
                })
                .sum();
        }
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Deterministic synthetic LUT of the given kind and lattice size.
pub fn make_synthetic_lut(kind: &SyntheticKind, size: usize) -> Result<Lut3D, LutError> {
    if !(MIN_SIZE..=MAX_SIZE).contains(&size) {
        return Err(LutError::BadSize(size));
    }
    let bad = |what: &str| Err(LutError::BadParameter(what.to_string()));
    let lut = match kind {
        SyntheticKind::Identity => Lut3D::identity(size),
        SyntheticKind::Gamma(g) => {
            if !(g.is_finite() && *g > 0.0) {
                return bad("gamma must be positive and finite");
            }
            Lut3D::from_fn(size, |x| x.map(|v| v.powf(*g)))
        }
        SyntheticKind::ChannelMix(m) => {
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return bad("mix matrix must be finite");
            }
            Lut3D::from_fn(size, |x| {
                let mut y = [0.0; 3];
                for (r, row) in m.iter().enumerate() {
                    y[r] = (row[0] * x[0] + row[1] * x[1] + row[2] * x[2]).clamp(0.0, 1.0);
                }
                y
            })
        }
        SyntheticKind::Grayscale => Lut3D::from_fn(size, |x| {
            let y = LUMA[0] * x[0] + LUMA[1] * x[1] + LUMA[2] * x[2];
            [y; 3]
        }),
        SyntheticKind::SigmoidContrast(k) => {
            if !(k.is_finite() && *k > 0.0) {
                return bad("sigmoid contrast must be positive and finite");
            }
            let lo = sigmoid(-k / 2.0);
            let hi = sigmoid(k / 2.0);
            Lut3D::from_fn(size, |x| x.map(|v| ((sigmoid(k * (v - 0.5)) - lo) / (hi - lo)).clamp(0.0, 1.0)))
        }
        SyntheticKind::RandomSmooth { seed, amplitude } => {
            if !(amplitude.is_finite() && *amplitude >= 0.0) {
                return bad("amplitude must be non-negative and finite");
            }
            let field = SmoothField::new(*seed);
            Lut3D::from_fn(size, |x| {
                let p = field.eval(x);
                [
                    (x[0] + amplitude * p[0]).clamp(0.0, 1.0),
                    (x[1] + amplitude * p[1]).clamp(0.0, 1.0),
                    (x[2] + amplitude * p[2]).clamp(0.0, 1.0),
                ]
            })
        }
    }?;
    Ok(lut.with_title(kind.name()))
}

/// A LUT with independent uniform entries; useful as a worst case in tests.
pub fn random_lut(size: usize, seed: u64) -> Result<Lut3D, LutError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Lut3D::from_fn(size, |_| [rng.gen(), rng.gen(), rng.gen()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cube_text() -> String {
        let mut s = String::from("# corners\nLUT_3D_SIZE 2\n");
        for b in 0..2 {
            for g in 0..2 {
                for r in 0..2 {
                    s.push_str(&format!("{r} {g} {b}\n"));
                }
            }
        }
        s
    }

    #[test]
    fn parse_identity() {
        let lut = parse_cube(&identity_cube_text()).unwrap();
        assert_eq!(lut, Lut3D::identity(2).unwrap());
    }

    #[test]
    fn parse_accepts_crlf_title_and_domain() {
        let text = identity_cube_text()
            .replace("# corners\n", "TITLE \"warm look\"\r\nDOMAIN_MIN 0 0 0\r\nDOMAIN_MAX 1 1 1\r\n")
            .replace('\n', "\r\n");
        let lut = parse_cube(&text).unwrap();
        assert_eq!(lut.title(), Some("warm look"));
        assert_eq!(lut.size(), 2);
    }

    #[test]
    fn parse_errors() {
        let text = identity_cube_text();
        let seven: String = text.lines().take(9).map(|l| format!("{l}\n")).collect();
        assert_eq!(
            parse_cube(&seven),
            Err(LutError::EntryCountMismatch { expected: 8, found: 7 })
        );
        assert_eq!(parse_cube("0 0 0\n"), Err(LutError::MissingSize));
        assert!(matches!(
            parse_cube(&text.replace("1 1 1", "1 1 x")),
            Err(LutError::MalformedNumber { line: 10, .. })
        ));
        assert!(matches!(
            parse_cube(&text.replace("1 1 1", "1 1 1.5")),
            Err(LutError::OutOfDomain { .. })
        ));
        assert!(matches!(
            parse_cube(&text.replace("LUT_3D_SIZE 2", "LUT_3D_SIZE 1")),
            Err(LutError::BadSize(1))
        ));
    }

    #[test]
    fn write_identity_corners() {
        let text = write_cube(&Lut3D::identity(2).unwrap(), 6);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "LUT_3D_SIZE 2");
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[8], "1.000000 1.000000 1.000000");
        assert_eq!(lines[1], "0.000000 0.000000 0.000000");
    }

    #[test]
    fn write_is_idempotent() {
        let lut = random_lut(5, 1).unwrap().with_title("r");
        let once = write_cube(&lut, 6);
        let twice = write_cube(&parse_cube(&once).unwrap(), 6);
        assert_eq!(once, twice);
    }

    #[test]
    fn write_parse_round_trip_error() {
        let lut = random_lut(16, 9).unwrap();
        let back = parse_cube(&write_cube(&lut, 6)).unwrap();
        let max = lut
            .table()
            .iter()
            .zip(back.table())
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max);
        assert!(max <= 5e-7, "{max}");
    }

    #[test]
    fn non_unit_domain_round_trips() {
        let lut = Lut3D::with_domain(2, vec![[0.5; 3]; 8], [0.0; 3], [2.0; 3]).unwrap();
        let text = write_cube(&lut, 4);
        assert!(text.contains("DOMAIN_MAX 2.0000 2.0000 2.0000"));
        let back = parse_cube(&text).unwrap();
        assert_eq!(back.domain_max(), [2.0; 3]);
        assert_eq!(back.sample([2.0, 1.0, 0.0]).unwrap(), [0.5; 3]);
    }

    #[test]
    fn identity_interpolates_exactly() {
        for n in [2, 3, 17] {
            let lut = Lut3D::identity(n).unwrap();
            let out = lut.sample([0.3, 0.7, 0.05]).unwrap();
            for (o, e) in out.iter().zip([0.3, 0.7, 0.05]) {
                assert!((o - e).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn lattice_points_hit_table_entries() {
        let lut = random_lut(4, 2).unwrap();
        for (p, e) in lattice_points(4).zip(lut.table()) {
            assert_eq!(lut.sample(p).unwrap(), *e);
        }
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let lut = Lut3D::identity(3).unwrap();
        assert!(matches!(lut.sample([1.01, 0.0, 0.0]), Err(LutError::OutOfDomain { .. })));
        assert!(lut.sample([f64::NAN, 0.0, 0.0]).is_err());
        assert_eq!(lut.apply_clamped([1.5, -0.5, 0.25]), [1.0, 0.0, 0.25]);
    }

    #[test]
    fn hald_identity_level_two() {
        let spec = HaldSpec::new(2).unwrap();
        let img = hald_encode(&Lut3D::identity(4).unwrap(), spec).unwrap();
        assert_eq!((img.width(), img.height()), (8, 8));
        assert_eq!(img.pixel(0, 0), [0, 0, 0]);
        assert_eq!(img.pixel(7, 7), [255, 255, 255]);
        assert_eq!(hald_decode(&img).unwrap(), Lut3D::identity(4).unwrap());
        assert!(matches!(
            hald_encode(&Lut3D::identity(5).unwrap(), spec),
            Err(LutError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn hald_decode_rejects_non_cube_sides() {
        let img = RgbImage::filled(9, 9, [0, 0, 0]);
        assert!(matches!(hald_decode(&img), Err(LutError::NotAHaldSize { .. })));
        let img = RgbImage::filled(8, 27, [0, 0, 0]);
        assert!(matches!(hald_decode(&img), Err(LutError::NotAHaldSize { .. })));
    }

    #[test]
    fn hald_level_sixteen_covers_every_code() {
        let spec = HaldSpec::new(16).unwrap();
        assert_eq!(spec.image_side(), 4096);
        assert_eq!(spec.lut_size(), 256);
        let codes = spec.input_codes();
        assert_eq!(codes.len(), 1 << 24);
        let mut seen = vec![false; 1 << 24];
        for c in codes {
            seen[c[0] as usize | (c[1] as usize) << 8 | (c[2] as usize) << 16] = true;
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn hald_encode_decode_encode_is_stable() {
        let lut = random_lut(9, 4).unwrap();
        let spec = HaldSpec::new(3).unwrap();
        let a = hald_encode(&lut, spec).unwrap();
        let b = hald_encode(&hald_decode(&a).unwrap(), spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_identity_entries() {
        let lut = make_synthetic_lut(&SyntheticKind::Identity, 33).unwrap();
        assert_eq!(lut.entry(3, 8, 32), [3.0 / 32.0, 8.0 / 32.0, 1.0]);
    }

    #[test]
    fn synthetic_grayscale_collapses_channels() {
        let lut = make_synthetic_lut(&SyntheticKind::Grayscale, 9).unwrap();
        let e = lut.sample([1.0, 0.0, 0.0]).unwrap();
        assert_eq!(e[0], e[1]);
        assert_eq!(e[1], e[2]);
        assert!((e[0] - 0.2126).abs() < 1e-12);
    }

    #[test]
    fn synthetic_smooth_respects_amplitude() {
        let kind = SyntheticKind::RandomSmooth { seed: 7, amplitude: 0.1 };
        let lut = make_synthetic_lut(&kind, 17).unwrap();
        let mut max = 0.0f64;
        for (p, e) in lattice_points(17).zip(lut.table()) {
            for c in 0..3 {
                max = max.max((p[c] - e[c]).abs());
            }
        }
        assert!(max <= 0.1 + 1e-12, "{max}");
        assert!(max > 0.01, "perturbation too weak: {max}");
        assert_eq!(lut, make_synthetic_lut(&kind, 17).unwrap());
    }

    #[test]
    fn synthetic_parameters_validated() {
        assert!(make_synthetic_lut(&SyntheticKind::Gamma(-1.0), 5).is_err());
        assert!(make_synthetic_lut(&SyntheticKind::SigmoidContrast(f64::NAN), 5).is_err());
        assert!(make_synthetic_lut(&SyntheticKind::Identity, 1).is_err());
        let s = make_synthetic_lut(&SyntheticKind::SigmoidContrast(6.0), 5).unwrap();
        assert_eq!(s.entry(0, 0, 0), [0.0; 3]);
        assert!((s.entry(4, 4, 4)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_kind_names_parse_back() {
        for kind in [
            SyntheticKind::Identity,
            SyntheticKind::Gamma(2.2),
            SyntheticKind::Grayscale,
            SyntheticKind::SigmoidContrast(5.0),
            SyntheticKind::RandomSmooth { seed: 3, amplitude: 0.2 },
            SyntheticKind::ChannelMix([[0.9, 0.1, 0.0], [0.0, 1.0, 0.0], [0.1, 0.0, 0.9]]),
        ] {
            assert_eq!(SyntheticKind::parse(&kind.name()).unwrap(), kind);
        }
    }
}
