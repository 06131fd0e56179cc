use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Mode;

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|x| x.max(0.0))
}

/// `grad_out` masked by `input > 0`.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(format!(
            "relu grad_out {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Keep-mask sampled by one training-mode dropout forward.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
}

impl DropoutMask {
    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn kept_fraction(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len().max(1) as f64
    }

    fn apply(&self, t: &Tensor) -> Result<Tensor> {
        if t.len() != self.keep.len() {
            return Err(Error::shape(format!(
                "dropout mask covers {} units, tensor has {}",
                self.keep.len(),
                t.len()
            )));
        }
        let data = t
            .data()
            .iter()
            .zip(&self.keep)
            .map(|(&x, &k)| if k { x * self.scale } else { 0.0 })
            .collect();
        Tensor::from_vec(t.shape(), data)
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at training
/// time so inference is a pass-through.
#[derive(Debug, Clone)]
pub struct DropoutState {
    rate: f64,
    mode: Mode,
    mask: Option<DropoutMask>,
    rng: ChaCha8Rng,
}

impl DropoutState {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self {
            rate,
            mode: Mode::Inference,
            mask: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.mask = None;
    }

    pub fn last_mask(&self) -> Option<&DropoutMask> {
        self.mask.as_ref()
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if self.mode == Mode::Inference || self.rate == 0.0 {
            self.mask = None;
            return Ok(input.clone());
        }
        let keep = (0..input.len())
            .map(|_| self.rng.random::<f64>() >= self.rate)
            .collect();
        let mask = DropoutMask {
            keep,
            scale: 1.0 / (1.0 - self.rate),
        };
        let out = mask.apply(input)?;
        self.mask = Some(mask);
        Ok(out)
    }

    /// Applies the mask of the most recent forward call; identity when that
    /// call sampled no mask.
    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        dropout_backward(self.mask.as_ref(), grad_out)
    }
}

pub fn dropout_backward(mask: Option<&DropoutMask>, grad_out: &Tensor) -> Result<Tensor> {
    match mask {
        Some(m) => m.apply(grad_out),
        None => Ok(grad_out.clone()),
    }
}
