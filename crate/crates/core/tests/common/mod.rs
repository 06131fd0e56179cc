#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssrn_core::loss::{total_loss, LossConfig, LossKind};
use ssrn_core::{Network, NetworkConfig, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn random_mask(rng: &mut impl Rng, h: usize, w: usize, p: f64) -> Tensor {
    let data = (0..h * w).map(|_| f64::from(rng.random_bool(p))).collect();
    Tensor::from_vec(&[1, h, w], data).unwrap()
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = a.abs().max(b.abs());
    if d < 1e-14 {
        0.0
    } else {
        (a - b).abs() / d
    }
}

/// Largest elementwise relative error between two gradient vectors.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Five-point central differences, accurate to `O(h^4)`.
pub fn numeric_grad5(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            let mut at = |d: f64| {
                probe.data_mut()[i] = orig + d;
                f(&probe)
            };
            let v = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            probe.data_mut()[i] = orig;
            v
        })
        .collect()
}

/// Worst elementwise error of the loss gradient against central differences
/// over `cases` random 8x8 problems.
pub fn loss_gradient_max_rel_err(kind: LossKind, cases: u64) -> f64 {
    let mut worst: f64 = 0.0;
    let cfg = LossConfig::new(kind);
    for case in 0..cases {
        let mut r = rng(1000 + case);
        let target = random_mask(&mut r, 8, 8, 0.3);
        let (lo, hi, step) = match kind {
            LossKind::CrossEntropy => (0.02, 0.98, 1e-4),
            _ => (-1.5, 2.5, 1e-3),
        };
        // keep away from the Smooth-L1 knee at |p - y| = 1 by more than the stencil
        let pred = random_tensor(&mut r, &[1, 8, 8], lo, hi);
        let pred = Tensor::from_vec(
            pred.shape(),
            pred.data()
                .iter()
                .zip(target.data())
                .map(|(&p, &y)| {
                    if ((p - y).abs() - 1.0).abs() < 1e-2 {
                        p + 0.03
                    } else {
                        p
                    }
                })
                .collect(),
        )
        .unwrap();
        let analytic = total_loss(&pred, &target, &cfg).unwrap().grad;
        let numeric = numeric_grad5(&pred, step, |pp| {
            total_loss(pp, &target, &cfg).unwrap().value
        });
        worst = worst.max(max_rel_err(analytic.data(), &numeric));
    }
    worst
}

/// Worst error of the micro preset's parameter gradients for the weighted
/// Smooth-L1 loss against central differences.
pub fn micro_network_max_rel_err(seed: u64) -> f64 {
    let mut net = Network::build(NetworkConfig::micro(), seed).unwrap();
    let mut r = rng(seed ^ 0xabc);
    // small random biases move pre-activations off the relu kink
    for p in net.conv_params_mut() {
        p.bias
            .iter_mut()
            .for_each(|b| *b = r.random_range(-0.1..0.1));
    }
    let x = random_tensor(&mut r, &[3, 16, 16], 0.0, 1.0);
    let y = random_mask(&mut r, 16, 16, 0.3);
    let cfg = LossConfig::new(LossKind::WeightedSmoothL1);

    let pass = net.forward_cached(&x).unwrap();
    let l = total_loss(pass.scores(), &y, &cfg).unwrap();
    let grads = net.backward(&pass, &l.grad).unwrap();

    let h = 1e-6;
    // Central differences of a loss of size L carry roundoff near eps * L / h
    // (about 1e-9 here), so entries far below the largest one are measured
    // against a floor of 1e-3 of the gradient's max norm.
    let scale = grads
        .layers
        .iter()
        .flat_map(|g| g.weights.data().iter().chain(&g.bias))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-3 * scale;
    let mut worst: f64 = 0.0;
    let n_layers = grads.layers.len();
    for li in 0..n_layers {
        let n_w = grads.layers[li].weights.len();
        let n_b = grads.layers[li].bias.len();
        for pi in 0..(n_w + n_b) {
            let eval = |delta: f64| {
                let mut probe = net.clone();
                let p = probe.conv_params_mut().nth(li).unwrap();
                if pi < n_w {
                    p.weights.data_mut()[pi] += delta;
                } else {
                    p.bias[pi - n_w] += delta;
                }
                total_loss(&probe.forward_scores(&x).unwrap(), &y, &cfg)
                    .unwrap()
                    .value
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = if pi < n_w {
                grads.layers[li].weights.data()[pi]
            } else {
                grads.layers[li].bias[pi - n_w]
            };
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}
