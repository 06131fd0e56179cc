//! Saliency benchmark metrics: PR and ROC curves over the 256 fixed
//! thresholds, trapezoidal AUC, maximal F-measure and MAE.
//!
//! Conventions:
//! - a pixel is predicted salient at threshold `t` when its 8-bit value is `>= t`;
//! - every curve carries 256 threshold points plus a synthetic origin
//!   (stored last with threshold 256: precision 1, recall = tpr = fpr = 0);
//! - `|M| = 0` gives precision 1, `|G| = 0` gives recall = tpr = 1 and
//!   `|not G| = 0` gives fpr 0.
//!
//! With these choices the trapezoidal ROC area equals the tie-aware ranking
//! statistic `P(pos > neg) + P(pos == neg) / 2` exactly.

pub mod bench;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BETA2: f64 = 0.3;
pub const LEVELS: usize = 256;
pub const ORIGIN_THRESHOLD: u16 = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

fn single_channel(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.dims3()? {
        (1, h, w) => Ok((h, w)),
        (c, _, _) => Err(Error::shape(format!("{what} must have 1 channel, got {c}"))),
    }
}

/// `round(255 * clamp(s, 0, 1))`, halves rounded up.
pub fn quantize_value(s: f64) -> u8 {
    (s.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn quantize(saliency: &Tensor) -> Result<QuantizedMap> {
    let (h, w) = single_channel(saliency, "saliency map")?;
    if !saliency.all_finite() {
        return Err(Error::NonFinite("saliency map".into()));
    }
    Ok(QuantizedMap {
        width: w,
        height: h,
        values: saliency.data().iter().map(|&s| quantize_value(s)).collect(),
    })
}

pub fn binarize(map: &QuantizedMap, t: u8) -> Vec<bool> {
    map.values.iter().map(|&v| v >= t).collect()
}

fn gt_bits(gt: &Tensor, width: usize, height: usize) -> Result<Vec<bool>> {
    let (h, w) = single_channel(gt, "ground truth")?;
    if (h, w) != (height, width) {
        return Err(Error::DimensionMismatch {
            image: (width, height),
            mask: (w, h),
        });
    }
    gt.data()
        .iter()
        .enumerate()
        .map(|(index, &v)| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            value => Err(Error::NonBinaryTarget { index, value }),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: u16,
    pub precision: f64,
    pub recall: f64,
    pub tpr: f64,
    pub fpr: f64,
}

impl CurvePoint {
    fn origin() -> Self {
        Self {
            threshold: ORIGIN_THRESHOLD,
            precision: 1.0,
            recall: 0.0,
            tpr: 0.0,
            fpr: 0.0,
        }
    }
}

/// Precision / recall / TPR / FPR from the confusion counts at one threshold.
pub fn rates(tp: usize, fp: usize, n_pos: usize, n_neg: usize) -> (f64, f64, f64) {
    let detected = tp + fp;
    let precision = if detected == 0 {
        1.0
    } else {
        tp as f64 / detected as f64
    };
    let recall = if n_pos == 0 {
        1.0
    } else {
        tp as f64 / n_pos as f64
    };
    let fpr = if n_neg == 0 {
        0.0
    } else {
        fp as f64 / n_neg as f64
    };
    (precision, recall, fpr)
}

/// 257 points: thresholds `0..=255` in order, then the origin.
pub fn pr_roc_curve(map: &QuantizedMap, gt: &Tensor) -> Result<Vec<CurvePoint>> {
    let bits = gt_bits(gt, map.width, map.height)?;
    let mut pos = [0usize; LEVELS];
    let mut neg = [0usize; LEVELS];
    for (&v, &g) in map.values.iter().zip(&bits) {
        if g {
            pos[v as usize] += 1;
        } else {
            neg[v as usize] += 1;
        }
    }
    let n_pos: usize = pos.iter().sum();
    let n_neg: usize = neg.iter().sum();
    let mut points = vec![CurvePoint::origin(); LEVELS + 1];
    let (mut tp, mut fp) = (0, 0);
    for t in (0..LEVELS).rev() {
        tp += pos[t];
        fp += neg[t];
        let (precision, recall, fpr) = rates(tp, fp, n_pos, n_neg);
        points[t] = CurvePoint {
            threshold: t as u16,
            precision,
            recall,
            tpr: recall,
            fpr,
        };
    }
    Ok(points)
}

/// Trapezoidal area under the ROC points, sorted by fpr then tpr.
pub fn auc(curve: &[CurvePoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

pub fn f_measure(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

/// Maximum F over the threshold points and the smallest threshold reaching it.
pub fn max_f_measure(curve: &[CurvePoint], beta2: f64) -> (f64, u16) {
    let mut best = (0.0, 0u16);
    let mut seen = false;
    for p in curve.iter().filter(|p| p.threshold < ORIGIN_THRESHOLD) {
        let f = f_measure(p.precision, p.recall, beta2);
        if !seen || f > best.0 || (f == best.0 && p.threshold < best.1) {
            best = (f, p.threshold);
            seen = true;
        }
    }
    best
}

/// Mean absolute error after clamping the saliency map to `[0, 1]`.
pub fn mae(saliency: &Tensor, gt: &Tensor) -> Result<f64> {
    let (h, w) = single_channel(saliency, "saliency map")?;
    let bits = gt_bits(gt, w, h)?;
    let sum: f64 = saliency
        .data()
        .iter()
        .zip(&bits)
        .map(|(&s, &g)| (s.clamp(0.0, 1.0) - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(sum / (w * h) as f64)
}

/// Pointwise mean of per-image curves.
pub fn mean_curve(curves: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
    let n = curves.len().max(1) as f64;
    (0..=LEVELS)
        .map(|i| {
            let mut p = CurvePoint {
                threshold: if i == LEVELS {
                    ORIGIN_THRESHOLD
                } else {
                    i as u16
                },
                precision: 0.0,
                recall: 0.0,
                tpr: 0.0,
                fpr: 0.0,
            };
            for c in curves {
                p.precision += c[i].precision;
                p.recall += c[i].recall;
                p.tpr += c[i].tpr;
                p.fpr += c[i].fpr;
            }
            p.precision /= n;
            p.recall /= n;
            p.tpr /= n;
            p.fpr /= n;
            p
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub auc: f64,
    pub max_f: f64,
    pub max_f_threshold: u16,
    pub mae: f64,
    pub curve: Vec<CurvePoint>,
}

pub fn evaluate_image(name: &str, saliency: &Tensor, gt: &Tensor) -> Result<ImageMetrics> {
    let q = quantize(saliency)?;
    let curve = pr_roc_curve(&q, gt)?;
    let (max_f, max_f_threshold) = max_f_measure(&curve, BETA2);
    Ok(ImageMetrics {
        name: name.to_string(),
        auc: auc(&curve),
        max_f,
        max_f_threshold,
        mae: mae(saliency, gt)?,
        curve,
    })
}

/// Dataset summary: mean per-image AUC and MAE, max-F of the mean PR curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub image_count: usize,
    pub auc: f64,
    pub max_f: f64,
    pub max_f_threshold: u16,
    pub mae: f64,
    pub beta2: f64,
    pub mean_runtime_seconds: Option<f64>,
    /// The binarization grid; the origin point uses threshold 256.
    pub thresholds: Vec<u16>,
    pub mean_curve: Vec<CurvePoint>,
    pub images: Vec<ImageMetrics>,
}

impl MetricsReport {
    pub fn from_images(
        images: Vec<ImageMetrics>,
        mean_runtime_seconds: Option<f64>,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("no images to summarize".into()));
        }
        let n = images.len() as f64;
        let curves: Vec<_> = images.iter().map(|m| m.curve.clone()).collect();
        let mean_curve = mean_curve(&curves);
        let (max_f, max_f_threshold) = max_f_measure(&mean_curve, BETA2);
        Ok(Self {
            image_count: images.len(),
            auc: images.iter().map(|m| m.auc).sum::<f64>() / n,
            max_f,
            max_f_threshold,
            mae: images.iter().map(|m| m.mae).sum::<f64>() / n,
            beta2: BETA2,
            mean_runtime_seconds,
            thresholds: (0..LEVELS as u16).collect(),
            mean_curve,
            images,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("t,precision,recall,tpr,fpr\n");
    for p in curve {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.threshold, p.precision, p.recall, p.tpr, p.fpr
        );
    }
    out
}
