mod common;

use common::{random_tensor, rng};
use rayon::prelude::*;
use ssrn_core::layers::{conv2d_forward, ConvParams};
use ssrn_core::{Network, NetworkConfig, Tensor};

#[test]
fn micro_output_matches_input_dims() {
    let net = Network::build(NetworkConfig::micro(), 5).unwrap();
    let sizes: Vec<(usize, usize)> = (8..=128)
        .flat_map(|h| (8..=128).map(move |w| (h, w)))
        .collect();
    let bad: Vec<_> = sizes
        .par_iter()
        .filter(|&&(h, w)| {
            let y = net.forward(&Tensor::full(&[3, h, w], 0.5)).unwrap();
            y.shape() != [1, h, w]
        })
        .collect();
    assert!(bad.is_empty(), "mismatched sizes: {bad:?}");
}

#[test]
fn vgg16_basic_map_is_one_eighth() {
    let cfg = NetworkConfig::vgg16();
    for h in (8..=512).step_by(8) {
        for w in (8..=512).step_by(8) {
            assert_eq!(cfg.basic_dims(h, w), (h / 8, w / 8));
        }
    }
    let mut net = Network::build(cfg, 0).unwrap();
    for (h, w) in [(16, 24), (32, 8)] {
        let x = random_tensor(&mut rng(1), &[3, h, w], 0.0, 1.0);
        let pass = net.forward_cached(&x).unwrap();
        assert_eq!(pass.basic_map().shape(), &[1, h / 8, w / 8]);
        assert_eq!(pass.scores().shape(), &[1, h, w]);
    }
}

#[test]
fn vgg16_backbone_parameter_count() {
    assert_eq!(NetworkConfig::vgg16().backbone_parameters(), 14_714_688);
}

#[test]
fn conv_is_linear_without_bias() {
    let mut r = rng(21);
    let w = random_tensor(&mut r, &[4, 3, 3, 3], -1.0, 1.0);
    let p = ConvParams::new(w, vec![0.0; 4], 1, 1).unwrap();
    let x = random_tensor(&mut r, &[3, 9, 7], -1.0, 1.0);
    let y = random_tensor(&mut r, &[3, 9, 7], -1.0, 1.0);
    let (a, b) = (0.7, -1.3);
    let mixed: Vec<f64> = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(p, q)| a * p + b * q)
        .collect();
    let lhs = conv2d_forward(&Tensor::from_vec(&[3, 9, 7], mixed).unwrap(), &p).unwrap();
    let fx = conv2d_forward(&x, &p).unwrap();
    let fy = conv2d_forward(&y, &p).unwrap();
    for ((l, u), v) in lhs.data().iter().zip(fx.data()).zip(fy.data()) {
        assert!((l - (a * u + b * v)).abs() < 1e-12);
    }
}

/// Averages every kernel with its horizontal mirror.
fn symmetrize(net: &mut Network) {
    for p in net.conv_params_mut() {
        let [co, ci, k, _] = *p.weights.shape() else {
            unreachable!()
        };
        let w = p.weights.data_mut();
        for o in 0..co * ci {
            for row in 0..k {
                for col in 0..k / 2 {
                    let a = (o * k + row) * k + col;
                    let b = (o * k + row) * k + (k - 1 - col);
                    let m = 0.5 * (w[a] + w[b]);
                    w[a] = m;
                    w[b] = m;
                }
            }
        }
    }
}

#[test]
fn mirror_equivariance_with_symmetric_kernels() {
    let mut net = Network::build(NetworkConfig::micro(), 8).unwrap();
    symmetrize(&mut net);
    // widths whose pooling grids are mirror-symmetric at every stage
    for (h, w) in [(16, 13), (20, 29), (9, 5)] {
        let x = random_tensor(&mut rng((h * w) as u64), &[3, h, w], 0.0, 1.0);
        let a = net.forward_scores(&x.flip_horizontal().unwrap()).unwrap();
        let b = net.forward_scores(&x).unwrap().flip_horizontal().unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-6, "{h}x{w}");
        }
    }
}

#[test]
fn undersized_input_is_rejected() {
    let net = Network::build(NetworkConfig::micro(), 0).unwrap();
    let min = net.min_input_side();
    assert!(net.forward(&Tensor::zeros(&[3, min - 1, 20])).is_err());
    assert!(net.forward(&Tensor::zeros(&[3, min, min])).is_ok());
}
