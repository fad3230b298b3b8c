//! Shared fixtures for integration tests.
#![allow(dead_code)]

use nlut::image::RgbImage;
use nlut::lut::{make_synthetic_lut, Lut3D, SyntheticKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Synthetic LUTs built from a list of kind strings.
pub fn synthetic_luts(kinds: &[&str], size: usize) -> Vec<Lut3D> {
    kinds
        .iter()
        .map(|k| make_synthetic_lut(&SyntheticKind::parse(k).unwrap(), size).unwrap())
        .collect()
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Smooth value noise on a coarse grid, bilinearly upsampled.
fn value_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, cells: usize) -> Vec<f64> {
    let grid: Vec<f64> = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen::<f64>()).collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let fx = x as f64 / w as f64 * cells as f64;
            let fy = y as f64 / h as f64 * cells as f64;
            let (ix, iy) = (fx as usize, fy as usize);
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let at = |i: usize, j: usize| grid[j * (cells + 1) + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            out[y * w + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}

/// Outdoor-like scenes: a sky gradient over textured ground with a few
/// muted objects, global lighting and sensor noise. Colors concentrate in
/// low-saturation regions the way photographs do.
pub fn natural_like_image(seed: u64, w: usize, h: usize) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.gen_range(0.3..0.6) * h as f64;
    let sky_hue = rng.gen_range(0.55..0.64);
    let ground_hue = rng.gen_range(0.08..0.33);
    let exposure = rng.gen_range(0.6..1.0);
    let texture = value_noise(&mut rng, w, h, 8);
    let fine = value_noise(&mut rng, w, h, 24);
    let objects: Vec<([f64; 2], f64, [f64; 3])> = (0..rng.gen_range(2..5))
        .map(|_| {
            let center = [rng.gen_range(0.0..w as f64), rng.gen_range(horizon..h as f64)];
            let radius = rng.gen_range(0.08..0.2) * w as f64;
            let color = hsv(rng.gen(), rng.gen_range(0.1..0.5), rng.gen_range(0.2..0.8));
            (center, radius, color)
        })
        .collect();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let yf = y as f64;
            let mut rgb = if yf < horizon {
                let t = yf / horizon;
                hsv(sky_hue, 0.25 + 0.35 * t, 0.95 - 0.25 * t + 0.05 * fine[i])
            } else {
                let t = (yf - horizon) / (h as f64 - horizon);
                hsv(
                    ground_hue + 0.05 * (texture[i] - 0.5),
                    0.3 + 0.3 * texture[i],
                    0.25 + 0.35 * texture[i] + 0.15 * fine[i] - 0.1 * t,
                )
            };
            for (center, radius, color) in &objects {
                let d = ((x as f64 - center[0]).powi(2) + (yf - center[1]).powi(2)).sqrt();
                if d < *radius {
                    let shade = 1.0 - 0.4 * d / radius;
                    rgb = color.map(|c| c * shade * (0.85 + 0.3 * fine[i]));
                }
            }
            let light = exposure * (0.9 + 0.2 * x as f64 / w as f64);
            pixels.push(rgb.map(|c| {
                let v = c * light + rng.gen_range(-0.01..0.01);
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            }));
        }
    }
    RgbImage::from_pixels(w, h, &pixels).unwrap()
}

pub fn natural_like_images(first_seed: u64, count: usize) -> Vec<RgbImage> {
    (0..count as u64)
        .map(|k| natural_like_image(first_seed + k, 96, 64))
        .collect()
}
