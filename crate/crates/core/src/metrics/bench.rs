//! Runtime harness. Each measurement starts before the image file is opened
//! and stops once the full-resolution map exists; writing results is not
//! timed. Images are processed strictly one at a time.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::InputMode;
use crate::error::{Error, Result};
use crate::inference::predict_file;
use crate::network::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub preset: String,
    pub input_mode: InputMode,
    pub images: usize,
    pub repeats: usize,
    /// Number of timed runs, `images * repeats`.
    pub n: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

pub fn bench_runtime<P: AsRef<Path>>(
    net: &Network,
    images: &[P],
    repeats: usize,
    mode: InputMode,
) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    if images.is_empty() {
        return Err(Error::InvalidArgument("no images to benchmark".into()));
    }
    let mut samples = Vec::with_capacity(images.len() * repeats);
    for _ in 0..repeats {
        for path in images {
            let path = path.as_ref();
            let start = Instant::now();
            let map = predict_file(net, path, mode)?;
            samples.push(start.elapsed().as_secs_f64());
            drop(map);
        }
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BenchReport {
        preset: net.config().name.clone(),
        input_mode: mode,
        images: images.len(),
        repeats,
        n,
        // the mean of finitely many samples can drift past min/max by an ulp
        mean_seconds: mean.clamp(min, max),
        min_seconds: min,
        max_seconds: max,
    })
}

pub fn image_paths(manifest: &crate::data::Manifest) -> Vec<PathBuf> {
    manifest.records.iter().map(|r| r.image.clone()).collect()
}
