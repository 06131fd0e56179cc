mod common;

use common::{random_tensor, rng};
use proptest::prelude::*;
use ssrn_core::layers::{keys_kernel, restore_size};
use ssrn_core::Tensor;

/// Textbook bicubic sample: direct 4x4 double sum with clamped indices.
fn bicubic_direct(src: &Tensor, tw: usize, th: usize) -> Tensor {
    let (c, h, w) = src.dims3().unwrap();
    let k = |x: f64| {
        let x = x.abs();
        let a = -0.5;
        if x <= 1.0 {
            (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
        } else if x < 2.0 {
            a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
        } else {
            0.0
        }
    };
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..th {
            let sy = (oy as f64 + 0.5) * h as f64 / th as f64 - 0.5;
            for ox in 0..tw {
                let sx = (ox as f64 + 0.5) * w as f64 / tw as f64 - 0.5;
                let mut acc = 0.0;
                for iy in (sy.floor() as i64 - 1)..=(sy.floor() as i64 + 2) {
                    for ix in (sx.floor() as i64 - 1)..=(sx.floor() as i64 + 2) {
                        let cy = iy.clamp(0, h as i64 - 1) as usize;
                        let cx = ix.clamp(0, w as i64 - 1) as usize;
                        acc += k(sy - iy as f64)
                            * k(sx - ix as f64)
                            * src.data()[(ch * h + cy) * w + cx];
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::from_vec(&[c, th, tw], out).unwrap()
}

#[test]
fn kernel_matches_closed_form() {
    for i in -250..=250 {
        let x = i as f64 / 100.0;
        let ax = x.abs();
        let expected = if ax <= 1.0 {
            1.5 * ax.powi(3) - 2.5 * ax.powi(2) + 1.0
        } else if ax < 2.0 {
            -0.5 * ax.powi(3) + 2.5 * ax.powi(2) - 4.0 * ax + 2.0
        } else {
            0.0
        };
        assert!((keys_kernel(x) - expected).abs() < 1e-14, "x = {x}");
    }
}

#[test]
fn separable_matches_direct_sum() {
    for (sh, sw, th, tw) in [(4, 5, 32, 40), (3, 3, 7, 11), (8, 8, 3, 5), (2, 9, 13, 4)] {
        let mut r = rng((sh * 31 + sw * 7 + th) as u64);
        let x = random_tensor(&mut r, &[2, sh, sw], -1.0, 1.0);
        let fast = restore_size(&x, tw, th).unwrap();
        let slow = bicubic_direct(&x, tw, th);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12, "{sh}x{sw} -> {th}x{tw}");
        }
    }
}

proptest! {
    #[test]
    fn constants_are_reproduced(sh in 1usize..10, sw in 1usize..10, th in 1usize..40, tw in 1usize..40, v in -3.0f64..3.0) {
        let x = Tensor::full(&[1, sh, sw], v);
        let y = restore_size(&x, tw, th).unwrap();
        prop_assert!(y.data().iter().all(|&o| (o - v).abs() <= 1e-9));
    }

    #[test]
    fn mirror_commutes_with_restore(sh in 1usize..9, sw in 1usize..9, th in 1usize..30, tw in 1usize..30, seed in 0u64..1000) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, &[2, sh, sw], -1.0, 1.0);
        let a = restore_size(&x.flip_horizontal().unwrap(), tw, th).unwrap();
        let b = restore_size(&x, tw, th).unwrap().flip_horizontal().unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() <= 1e-9);
        }
    }

    #[test]
    fn output_has_target_dims(sh in 1usize..12, sw in 1usize..12, th in 1usize..50, tw in 1usize..50) {
        let y = restore_size(&Tensor::zeros(&[3, sh, sw]), tw, th).unwrap();
        prop_assert_eq!(y.shape(), &[3, th, tw]);
    }
}
