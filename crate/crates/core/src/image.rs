//! Minimal 8-bit RGB raster type with binary PPM (P6) I/O.
//!
//! PPM is handled natively so Hald images are written bit-exactly; PNG and
//! JPEG inputs are decoded through the `image` crate.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed PPM header: {0}")]
    BadHeader(&'static str),
    #[error("unsupported PPM maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),
    #[error("PPM payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("pixel buffer of {len} bytes does not match {width}x{height} RGB")]
    BufferSize { width: usize, height: usize, len: usize },
    #[error("decode: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::BufferSize {
                width,
                height,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Interleaved RGB bytes, row-major from the top-left corner.
    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[[u8; 3]]) -> Result<Self, ImageError> {
        Self::new(width, height, pixels.iter().flatten().copied().collect())
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut cursor = PpmCursor { bytes, pos: 0 };
        if cursor.token()? != b"P6" {
            return Err(ImageError::BadHeader("magic is not P6"));
        }
        let width = cursor.number()? as usize;
        let height = cursor.number()? as usize;
        let maxval = cursor.number()?;
        if maxval != 255 {
            return Err(ImageError::UnsupportedMaxval(maxval));
        }
        // exactly one whitespace byte separates the header from the raster
        if cursor.pos >= bytes.len() || !bytes[cursor.pos].is_ascii_whitespace() {
            return Err(ImageError::BadHeader("missing raster separator"));
        }
        let start = cursor.pos + 1;
        let expected = width * height * 3;
        let found = bytes.len().saturating_sub(start);
        if found < expected {
            return Err(ImageError::Truncated { expected, found });
        }
        Self::new(width, height, bytes[start..start + expected].to_vec())
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        f.write_all(&self.encode_ppm())?;
        f.flush()?;
        Ok(())
    }

    /// Loads a PPM natively, anything else through the `image` crate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(b"P6") {
            return Self::decode_ppm(&bytes);
        }
        let decoded = image::load_from_memory(&bytes)
            .map_err(|e| ImageError::Decode(e.to_string()))?
            .into_rgb8();
        let (w, h) = decoded.dimensions();
        Self::new(w as usize, h as usize, decoded.into_raw())
    }

    /// Writes PNG when the extension asks for it, PPM otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            image::save_buffer(
                path,
                &self.data,
                self.width as u32,
                self.height as u32,
                image::ExtendedColorType::Rgb8,
            )
            .map_err(|e| ImageError::Decode(e.to_string()))
        } else {
            self.write_ppm(path)
        }
    }
}

struct PpmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PpmCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::BadHeader("unexpected end of header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<u32, ImageError> {
        std::str::from_utf8(self.token()?)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(ImageError::BadHeader("expected a decimal number"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let img = RgbImage::new(2, 1, vec![1, 2, 3, 250, 251, 252]).unwrap();
        let bytes = img.encode_ppm();
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(RgbImage::decode_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn ppm_header_comments() {
        let mut bytes = b"P6\n# made by hand\n1 1\n# c\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        let img = RgbImage::decode_ppm(&bytes).unwrap();
        assert_eq!(img.pixel(0, 0), [9, 8, 7]);
    }

    #[test]
    fn ppm_errors() {
        assert!(matches!(
            RgbImage::decode_ppm(b"P3\n1 1\n255\n"),
            Err(ImageError::BadHeader(_))
        ));
        assert!(matches!(
            RgbImage::decode_ppm(b"P6\n1 1\n65535\n"),
            Err(ImageError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            RgbImage::decode_ppm(b"P6\n2 2\n255\n\x00\x01"),
            Err(ImageError::Truncated { expected: 12, found: 2 })
        ));
    }

    #[test]
    fn png_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::new(2, 2, (0..12).map(|v| v * 20).collect()).unwrap();
        let p = dir.path().join("x.png");
        img.save(&p).unwrap();
        assert_eq!(RgbImage::load(&p).unwrap(), img);
        let q = dir.path().join("x.ppm");
        img.save(&q).unwrap();
        assert_eq!(RgbImage::load(&q).unwrap(), img);
    }
}
