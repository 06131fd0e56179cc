//! Seeded toy saliency dataset: bright rectangles on a textured dark
//! background.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::manifest::{write_manifest, Manifest, Record};
use super::pnm::PnmImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Rectangle sides are drawn from this fraction range of the image side.
    pub min_frac: f64,
    pub max_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            min_frac: 0.25,
            max_frac: 0.6,
        }
    }
}

/// Returns `(image, mask)` for one sample.
pub fn synth_sample(cfg: &SynthConfig, rng: &mut impl Rng) -> (PnmImage, PnmImage) {
    let (w, h) = (cfg.width, cfg.height);
    let side = |n: usize, rng: &mut dyn rand::RngCore| {
        let lo = ((n as f64 * cfg.min_frac).round() as usize).max(1);
        let hi = ((n as f64 * cfg.max_frac).round() as usize).clamp(lo, n);
        rng.random_range(lo..=hi)
    };
    let rw = side(w, rng);
    let rh = side(h, rng);
    let x0 = rng.random_range(0..=w - rw);
    let y0 = rng.random_range(0..=h - rh);

    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..0.25));
    let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.7..0.95));
    // stripe texture with a random orientation and period
    let period = rng.random_range(3.0..9.0);
    let (fx, fy) = {
        let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
        (a.cos() / period, a.sin() / period)
    };
    let stripe_amp = rng.random_range(0.03..0.1);

    let mut rgb = Vec::with_capacity(w * h * 3);
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let inside = x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh;
            let phase = (x as f64 * fx + y as f64 * fy) * std::f64::consts::TAU;
            for c in 0..3 {
                let noise = rng.random_range(-0.06..0.06);
                let v = if inside {
                    fg[c] + noise * 0.5
                } else {
                    base[c] + stripe_amp * phase.sin() + noise
                };
                rgb.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            mask.push(if inside { 255 } else { 0 });
        }
    }
    (PnmImage::rgb(w, h, rgb), PnmImage::gray(w, h, mask))
}

/// Writes `count` samples as `<prefix>_NNNN.ppm` / `<prefix>_NNNN.pgm` into
/// `dir` plus a manifest `<prefix>.tsv` with relative paths.
pub fn write_synthetic_set(
    dir: &Path,
    prefix: &str,
    count: usize,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count);
    let mut relative = Vec::with_capacity(count);
    for i in 0..count {
        let (img, mask) = synth_sample(cfg, &mut rng);
        let img_name = format!("{prefix}_{i:04}.ppm");
        let mask_name = format!("{prefix}_{i:04}.mask.pgm");
        img.write(&dir.join(&img_name))?;
        mask.write(&dir.join(&mask_name))?;
        relative.push(Record {
            image: img_name.into(),
            mask: mask_name.into(),
        });
        records.push(Record {
            image: dir.join(format!("{prefix}_{i:04}.ppm")),
            mask: dir.join(format!("{prefix}_{i:04}.mask.pgm")),
        });
    }
    let path = dir.join(format!("{prefix}.tsv"));
    write_manifest(&Manifest::new(relative), &path)?;
    Ok(Manifest {
        records,
        source: path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_binary() {
        let cfg = SynthConfig::default();
        let a = synth_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let b = synth_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert!(a.1.data.iter().all(|&v| v == 0 || v == 255));
        let salient = a.1.data.iter().filter(|&&v| v == 255).count();
        assert!(salient >= 16 * 16);
    }
}
