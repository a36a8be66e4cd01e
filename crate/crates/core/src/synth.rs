//! Deterministic synthetic test clips.
//!
//! Real footage is bulky; these generators produce natural-looking content
//! (smooth gradients, translating texture, mild noise) with enough motion
//! and detail to exercise every coding mode, reproducibly from a seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{save_yuv, Frame, FrameError};

/// Kind of generated content.
#[derive(Clone, Copy, Debug)]
pub enum SynthKind {
    /// Smooth background plus a translating value-noise texture layer and
    /// light sensor-style noise; sub-pixel motion exercises half-pel paths.
    MovingTexture {
        /// Texture translation in pixels per frame.
        velocity: (f64, f64),
    },
    /// Static textured background with a small moving sprite; produces
    /// fine quadtree splits around the sprite and skips elsewhere.
    MovingSprite,
    /// Uniform gray.
    StaticGray(u8),
    /// Uniform gray with a +/-3 dither on the first frame, static after.
    DitherGray,
}

/// Periodic value noise: random lattice, bilinear interpolation.
struct ValueNoise {
    grid: Vec<f64>,
    n: usize,
    cell: f64,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, n: usize, cell: f64, amplitude: f64) -> Self {
        let grid = (0..n * n)
            .map(|_| rng.gen_range(-amplitude..amplitude))
            .collect();
        ValueNoise { grid, n, cell }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let gx = (x / self.cell).rem_euclid(self.n as f64);
        let gy = (y / self.cell).rem_euclid(self.n as f64);
        let x0 = gx.floor() as usize % self.n;
        let y0 = gy.floor() as usize % self.n;
        let x1 = (x0 + 1) % self.n;
        let y1 = (y0 + 1) % self.n;
        let fx = gx.fract();
        let fy = gy.fract();
        let g = |ix: usize, iy: usize| self.grid[iy * self.n + ix];
        let top = g(x0, y0) * (1.0 - fx) + g(x1, y0) * fx;
        let bot = g(x0, y1) * (1.0 - fx) + g(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

fn clamp_pixel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Generates `frames` frames of `width x height` content. Dimensions must
/// be even; they are padded to the coding-tree size like loaded clips.
pub fn synthetic_clip(
    kind: SynthKind,
    width: usize,
    height: usize,
    frames: usize,
    seed: u64,
) -> Result<Vec<Frame>, FrameError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(frames);
    match kind {
        SynthKind::StaticGray(level) => {
            for _ in 0..frames {
                let y = vec![level; width * height];
                let c = vec![128u8; width * height / 4];
                out.push(Frame::from_planes(width, height, &y, &c, &c)?);
            }
        }
        SynthKind::DitherGray => {
            let mut y0 = vec![120u8; width * height];
            for p in y0.iter_mut() {
                *p = (*p as i32 + rng.gen_range(-3..=3)) as u8;
            }
            let c = vec![128u8; width * height / 4];
            let first = Frame::from_planes(width, height, &y0, &c, &c)?;
            for _ in 0..frames {
                out.push(first.clone());
            }
        }
        SynthKind::MovingTexture { velocity } => {
            let coarse = ValueNoise::new(&mut rng, 10, 24.0, 45.0);
            let fine = ValueNoise::new(&mut rng, 24, 5.0, 22.0);
            let chroma_field = ValueNoise::new(&mut rng, 8, 40.0, 30.0);
            let noise_seed: u64 = rng.gen();
            for t in 0..frames {
                let (ox, oy) = (velocity.0 * t as f64, velocity.1 * t as f64);
                let mut y = vec![0u8; width * height];
                let mut frame_noise =
                    ChaCha8Rng::seed_from_u64(noise_seed.wrapping_add(t as u64));
                for py in 0..height {
                    for px in 0..width {
                        let gradient = 110.0 + 30.0 * (px as f64 / width as f64)
                            - 18.0 * (py as f64 / height as f64);
                        let tex = coarse.sample(px as f64 + ox, py as f64 + oy)
                            + fine.sample(px as f64 + ox, py as f64 + oy);
                        let n = frame_noise.gen_range(-2.0..2.0);
                        y[py * width + px] = clamp_pixel(gradient + tex + n);
                    }
                }
                let (cw, ch) = (width / 2, height / 2);
                let mut u = vec![0u8; cw * ch];
                let mut v = vec![0u8; cw * ch];
                for py in 0..ch {
                    for px in 0..cw {
                        let s = chroma_field.sample(px as f64 * 2.0 + ox, py as f64 * 2.0 + oy);
                        u[py * cw + px] = clamp_pixel(118.0 + s);
                        v[py * cw + px] = clamp_pixel(132.0 - 0.7 * s);
                    }
                }
                out.push(Frame::from_planes(width, height, &y, &u, &v)?);
            }
        }
        SynthKind::MovingSprite => {
            let background = ValueNoise::new(&mut rng, 16, 9.0, 28.0);
            let sprite = ValueNoise::new(&mut rng, 6, 3.0, 60.0);
            let c = vec![128u8; width * height / 4];
            for t in 0..frames {
                let mut y = vec![0u8; width * height];
                for py in 0..height {
                    for px in 0..width {
                        y[py * width + px] =
                            clamp_pixel(120.0 + background.sample(px as f64, py as f64));
                    }
                }
                // A 12x12 sprite moving diagonally at 1.5 px/frame.
                let sx = (6.0 + 1.5 * t as f64) % (width as f64 - 14.0);
                let sy = (4.0 + 1.5 * t as f64) % (height as f64 - 14.0);
                for dy in 0..12 {
                    for dx in 0..12 {
                        let px = sx as usize + dx;
                        let py = sy as usize + dy;
                        y[py * width + px] =
                            clamp_pixel(60.0 + sprite.sample(dx as f64, dy as f64));
                    }
                }
                out.push(Frame::from_planes(width, height, &y, &c, &c)?);
            }
        }
    }
    Ok(out)
}

/// Generates a clip and writes it as a raw 4:2:0 file; returns the frames.
pub fn write_synthetic_yuv(
    kind: SynthKind,
    width: usize,
    height: usize,
    frames: usize,
    seed: u64,
    path: &Path,
) -> Result<Vec<Frame>, FrameError> {
    let clip = synthetic_clip(kind, width, height, frames, seed)?;
    save_yuv(&clip, path, width, height)?;
    Ok(clip)
}
