//! Size restoration by separable bicubic interpolation.
//!
//! Sampling uses the Keys cubic convolution kernel with `a = -0.5` over a
//! 4x4 neighbourhood, half-pixel-centred coordinates
//! (`src = (dst + 0.5) * in / out - 0.5`) and edge clamping. The operator is
//! linear, so its adjoint is the transposed weight table.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const KEYS_A: f64 = -0.5;

pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four `(source index, weight)` taps for each output position along one axis.
#[derive(Debug, Clone)]
struct AxisTaps {
    src_len: usize,
    taps: Vec<[(usize, f64); 4]>,
}

impl AxisTaps {
    fn new(src_len: usize, dst_len: usize) -> Self {
        let scale = src_len as f64 / dst_len as f64;
        let last = src_len as isize - 1;
        let taps = (0..dst_len)
            .map(|d| {
                let src = (d as f64 + 0.5) * scale - 0.5;
                let base = src.floor();
                let i0 = base as isize;
                let mut t = [(0usize, 0.0); 4];
                for (j, slot) in t.iter_mut().enumerate() {
                    let i = i0 - 1 + j as isize;
                    let w = keys_kernel(src - i as f64);
                    *slot = (i.clamp(0, last) as usize, w);
                }
                t
            })
            .collect();
        Self { src_len, taps }
    }
}

fn check_dims(h: usize, w: usize, th: usize, tw: usize) -> Result<()> {
    if h == 0 || w == 0 || th == 0 || tw == 0 {
        return Err(Error::shape(format!(
            "size restoration needs non-empty maps, got {h}x{w} -> {th}x{tw}"
        )));
    }
    Ok(())
}

/// Resizes every channel of a `(c, h, w)` map to `(c, target_h, target_w)`.
pub fn restore_size(map: &Tensor, target_w: usize, target_h: usize) -> Result<Tensor> {
    let (c, h, w) = map.dims3()?;
    check_dims(h, w, target_h, target_w)?;
    if (h, w) == (target_h, target_w) {
        return Ok(map.clone());
    }
    let rows = AxisTaps::new(h, target_h);
    let cols = AxisTaps::new(w, target_w);
    let mut out = Vec::with_capacity(c * target_h * target_w);
    let mut tmp = vec![0.0; target_h * w];
    for ch in 0..c {
        let src = map.channel(ch);
        // vertical pass: h x w -> target_h x w
        for (oy, taps) in rows.taps.iter().enumerate() {
            let dst = &mut tmp[oy * w..(oy + 1) * w];
            dst.fill(0.0);
            for &(iy, wy) in taps {
                let line = &src[iy * w..(iy + 1) * w];
                for (d, s) in dst.iter_mut().zip(line) {
                    *d += wy * s;
                }
            }
        }
        // horizontal pass
        for oy in 0..target_h {
            let line = &tmp[oy * w..(oy + 1) * w];
            out.extend(
                cols.taps
                    .iter()
                    .map(|taps| taps.iter().map(|&(ix, wx)| wx * line[ix]).sum::<f64>()),
            );
        }
    }
    Tensor::from_vec(&[c, target_h, target_w], out)
}

/// Adjoint of [`restore_size`]: maps a `(c, target_h, target_w)` gradient back
/// onto the `(c, src_h, src_w)` source grid.
pub fn restore_size_adjoint(grad: &Tensor, src_w: usize, src_h: usize) -> Result<Tensor> {
    let (c, th, tw) = grad.dims3()?;
    check_dims(src_h, src_w, th, tw)?;
    if (src_h, src_w) == (th, tw) {
        return Ok(grad.clone());
    }
    let rows = AxisTaps::new(src_h, th);
    let cols = AxisTaps::new(src_w, tw);
    debug_assert_eq!(rows.src_len, src_h);
    debug_assert_eq!(cols.src_len, src_w);
    let mut out = vec![0.0; c * src_h * src_w];
    let mut tmp = vec![0.0; th * src_w];
    for ch in 0..c {
        let g = grad.channel(ch);
        tmp.fill(0.0);
        for oy in 0..th {
            let line = &g[oy * tw..(oy + 1) * tw];
            let acc = &mut tmp[oy * src_w..(oy + 1) * src_w];
            for (taps, &v) in cols.taps.iter().zip(line) {
                for &(ix, wx) in taps {
                    acc[ix] += wx * v;
                }
            }
        }
        let plane = &mut out[ch * src_h * src_w..(ch + 1) * src_h * src_w];
        for (oy, taps) in rows.taps.iter().enumerate() {
            let line = &tmp[oy * src_w..(oy + 1) * src_w];
            for &(iy, wy) in taps {
                let dst = &mut plane[iy * src_w..(iy + 1) * src_w];
                for (d, s) in dst.iter_mut().zip(line) {
                    *d += wy * s;
                }
            }
        }
    }
    Tensor::from_vec(&[c, src_h, src_w], out)
}
