//! Pixel-wise saliency losses.
//!
//! The main loss is a Smooth-L1 regression over all pixels plus an extra
//! Smooth-L1 term over salient pixels weighted by `beta * N- / N`, the whole
//! sum averaged over the `N` pixels. Euclidean and cross-entropy losses are
//! kept as controls.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    WeightedSmoothL1,
    Euclidean,
    CrossEntropy,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::WeightedSmoothL1 => "weighted-smooth-l1",
            LossKind::Euclidean => "euclidean",
            LossKind::CrossEntropy => "cross-entropy",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted-smooth-l1" => Ok(LossKind::WeightedSmoothL1),
            "euclidean" => Ok(LossKind::Euclidean),
            "cross-entropy" => Ok(LossKind::CrossEntropy),
            other => Err(Error::InvalidConfig(format!("unknown loss kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::WeightedSmoothL1,
            beta: 1.0,
            epsilon: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta must be a non-negative finite number, got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LossResult {
    pub value: f64,
    /// d loss / d prediction, same shape as the prediction.
    pub grad: Tensor,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn smooth_l1(z: f64) -> f64 {
    let a = z.abs();
    if a <= 1.0 {
        0.5 * z * z
    } else {
        a - 0.5
    }
}

pub fn smooth_l1_grad(z: f64) -> f64 {
    if z.abs() <= 1.0 {
        z
    } else {
        z.signum()
    }
}

pub fn total_loss(prediction: &Tensor, target: &Tensor, config: &LossConfig) -> Result<LossResult> {
    config.validate()?;
    if prediction.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ",
            prediction.shape(),
            target.shape()
        )));
    }
    if prediction.is_empty() {
        return Err(Error::shape("loss over an empty map"));
    }
    let mut n_pos = 0usize;
    for (index, &y) in target.data().iter().enumerate() {
        if y == 1.0 {
            n_pos += 1;
        } else if y != 0.0 {
            return Err(Error::NonBinaryTarget { index, value: y });
        }
    }
    let n = prediction.len();
    let n_neg = n - n_pos;
    let inv_n = 1.0 / n as f64;
    let pairs = prediction.data().iter().zip(target.data());

    let (value, grad): (f64, Vec<f64>) = match config.kind {
        LossKind::WeightedSmoothL1 => {
            if n_pos == 0 {
                log::warn!("target has no salient pixels; salient-region term is empty");
            }
            let region_weight = config.beta * n_neg as f64 * inv_n;
            let mut global = 0.0;
            let mut region = 0.0;
            let grad = pairs
                .map(|(&p, &y)| {
                    let z = p - y;
                    let psi = smooth_l1(z);
                    global += psi;
                    let weight = if y == 1.0 {
                        region += psi;
                        1.0 + region_weight
                    } else {
                        1.0
                    };
                    inv_n * smooth_l1_grad(z) * weight
                })
                .collect();
            (inv_n * (global + region_weight * region), grad)
        }
        LossKind::Euclidean => {
            let mut sum = 0.0;
            let grad = pairs
                .map(|(&p, &y)| {
                    let z = p - y;
                    sum += z * z;
                    inv_n * z
                })
                .collect();
            (0.5 * inv_n * sum, grad)
        }
        LossKind::CrossEntropy => {
            let eps = config.epsilon;
            let mut sum = 0.0;
            let grad = pairs
                .map(|(&p, &y)| {
                    let q = p.clamp(eps, 1.0 - eps);
                    sum += if y == 1.0 { q.ln() } else { (1.0 - q).ln() };
                    if p < eps || p > 1.0 - eps {
                        0.0
                    } else if y == 1.0 {
                        -inv_n / q
                    } else {
                        inv_n / (1.0 - q)
                    }
                })
                .collect();
            (-inv_n * sum, grad)
        }
    };

    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "{} loss value {value}",
            config.kind
        )));
    }
    Ok(LossResult {
        value,
        grad: Tensor::from_vec(prediction.shape(), grad)?,
        n_pos,
        n_neg,
    })
}
