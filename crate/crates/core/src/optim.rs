//! Momentum SGD with weight decay, the "step" learning-rate policy and the
//! single-image training loop.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::loss::{total_loss, LossConfig};
use crate::network::{derive_seed, Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub step_size: usize,
    pub gamma: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_iter: usize,
    pub validation_period: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            step_size: 3000,
            gamma: 0.1,
            momentum: 0.9,
            weight_decay: 0.0005,
            max_iter: 12000,
            validation_period: 500,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if self.step_size == 0 || self.validation_period == 0 {
            return bad("step_size and validation_period must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        Ok(())
    }
}

/// `base_lr * gamma ^ floor(iter / step_size)`.
pub fn lr_at_iter(config: &TrainConfig, iter: usize) -> Result<f64> {
    if iter >= config.max_iter {
        return Err(Error::InvalidArgument(format!(
            "iteration {iter} is outside [0, {})",
            config.max_iter
        )));
    }
    let steps = (iter / config.step_size) as i32;
    Ok(config.base_lr * config.gamma.powi(steps))
}

/// `v <- momentum * v - lr * (g + decay * w); w <- w + v`
pub fn sgd_update(
    weights: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    decay: f64,
) {
    for ((w, &g), v) in weights.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * (g + decay * *w);
        *w += *v;
    }
}

#[derive(Debug, Clone)]
struct Velocity {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    velocities: Vec<Velocity>,
    iteration: usize,
}

impl OptimizerState {
    pub fn new(net: &Network) -> Self {
        let velocities = net
            .conv_params()
            .map(|p| Velocity {
                weights: vec![0.0; p.weights.len()],
                bias: vec![0.0; p.bias.len()],
            })
            .collect();
        Self {
            velocities,
            iteration: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }
}

/// One update of every conv/fcn layer. Weight decay applies to weights only.
pub fn sgd_step(
    net: &mut Network,
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if grads.layers.len() != state.velocities.len() {
        return Err(Error::shape(format!(
            "{} gradient sets for {} parameterized layers",
            grads.layers.len(),
            state.velocities.len()
        )));
    }
    for (i, (g, p)) in grads.layers.iter().zip(net.conv_params()).enumerate() {
        if g.weights.shape() != p.weights.shape() || g.bias.len() != p.bias.len() {
            return Err(Error::shape(format!(
                "gradient shape mismatch at layer {i}"
            )));
        }
        if !(g.weights.all_finite() && g.bias.iter().all(|b| b.is_finite())) {
            return Err(Error::NonFinite(format!(
                "gradient of layer {i} at iteration {}",
                state.iteration
            )));
        }
    }
    for ((p, g), v) in net
        .conv_params_mut()
        .zip(&grads.layers)
        .zip(&mut state.velocities)
    {
        sgd_update(
            p.weights.data_mut(),
            g.weights.data(),
            &mut v.weights,
            lr,
            config.momentum,
            config.weight_decay,
        );
        sgd_update(&mut p.bias, &g.bias, &mut v.bias, lr, config.momentum, 0.0);
    }
    state.iteration += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration,lr,train_loss,val_loss\n");
    for r in rows {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.iteration, r.lr, r.train_loss, val);
    }
    out
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    std::fs::write(path, trace_to_csv(rows)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct BestSnapshot {
    pub iteration: usize,
    pub val_loss: f64,
    pub network: Network,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trace: Vec<TraceRow>,
    /// Lowest-validation-loss weights seen, when validation ran.
    pub best: Option<BestSnapshot>,
}

/// Mean loss over `set` in inference mode, computed on raw scores.
pub fn mean_loss(net: &Network, set: &[SamplePair], loss: &LossConfig) -> Result<f64> {
    let losses = set
        .par_iter()
        .map(|s| {
            let scores = net.forward_scores(&s.image)?;
            Ok(total_loss(&scores, &s.mask, loss)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Single-image SGD over `train`, visiting a fresh seeded permutation each
/// epoch. `on_row` sees every trace row as it is produced.
pub fn train_loop(
    net: &mut Network,
    train: &[SamplePair],
    val: &[SamplePair],
    loss: &LossConfig,
    config: &TrainConfig,
    mut on_row: impl FnMut(&TraceRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    loss.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut outcome = TrainOutcome {
        trace: Vec::with_capacity(config.max_iter),
        best: None,
    };
    if config.max_iter == 0 {
        return Ok(outcome);
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.rng_seed, 0));
    net.reseed_dropout(derive_seed(config.rng_seed, 1));
    net.set_mode(Mode::Training);
    let mut state = OptimizerState::new(net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();

    let result = (|| -> Result<()> {
        for iteration in 0..config.max_iter {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            let sample = &train[order[cursor]];
            cursor += 1;

            let lr = lr_at_iter(config, iteration)?;
            let pass = net.forward_cached(&sample.image)?;
            let diverged = |message: String, trace: &[TraceRow]| Error::Diverged {
                iteration,
                message,
                trace: trace.to_vec(),
            };
            let l = match total_loss(pass.scores(), &sample.mask, loss) {
                Ok(l) => l,
                Err(Error::NonFinite(m)) => return Err(diverged(m, &outcome.trace)),
                Err(e) => return Err(e),
            };
            let grads = net.backward(&pass, &l.grad)?;
            if let Err(Error::NonFinite(m)) = sgd_step(net, &grads, &mut state, config, lr) {
                return Err(diverged(m, &outcome.trace));
            }

            let val_loss = if !val.is_empty() && (iteration + 1) % config.validation_period == 0 {
                let v = mean_loss(net, val, loss)?;
                if !v.is_finite() {
                    return Err(diverged(format!("validation loss {v}"), &outcome.trace));
                }
                if outcome.best.as_ref().is_none_or(|b| v < b.val_loss) {
                    let mut snapshot = net.clone();
                    snapshot.set_mode(Mode::Inference);
                    outcome.best = Some(BestSnapshot {
                        iteration: iteration + 1,
                        val_loss: v,
                        network: snapshot,
                    });
                }
                Some(v)
            } else {
                None
            };
            let row = TraceRow {
                iteration,
                lr,
                train_loss: l.value,
                val_loss,
            };
            on_row(&row);
            outcome.trace.push(row);
        }
        Ok(())
    })();
    net.set_mode(Mode::Inference);
    result.map(|()| outcome)
}
