//! 3x3 max pooling with padding 1. Padded cells never win the max.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const POOL_KERNEL: usize = 3;
pub const POOL_PADDING: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolParams {
    stride: usize,
}

impl PoolParams {
    pub fn new(stride: usize) -> Result<Self> {
        match stride {
            1 | 2 => Ok(Self { stride }),
            _ => Err(Error::InvalidConfig(format!(
                "pool stride must be 1 or 2, got {stride}"
            ))),
        }
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// `ceil(n / 2)` for stride 2, `n` for stride 1.
    pub fn output_len(&self, n: usize) -> usize {
        (n + 2 * POOL_PADDING - POOL_KERNEL) / self.stride + 1
    }
}

/// Winning input position for every output cell of a forward call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

pub fn maxpool_forward(input: &Tensor, params: PoolParams) -> Result<(Tensor, PoolIndices)> {
    let (c, h, w) = input.dims3()?;
    if h == 0 || w == 0 {
        return Err(Error::shape("pool input has an empty spatial extent"));
    }
    let (oh, ow) = (params.output_len(h), params.output_len(w));
    let s = params.stride;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            let y0 = (oy * s).saturating_sub(POOL_PADDING);
            let y1 = (oy * s + POOL_KERNEL - POOL_PADDING).min(h);
            for ox in 0..ow {
                let x0 = (ox * s).saturating_sub(POOL_PADDING);
                let x1 = (ox * s + POOL_KERNEL - POOL_PADDING).min(w);
                let mut best = f64::NEG_INFINITY;
                let mut at = usize::MAX;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let idx = base + iy * w + ix;
                        if x[idx] > best || at == usize::MAX {
                            best = x[idx];
                            at = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(at);
            }
        }
    }
    let output = Tensor::from_vec(&[c, oh, ow], out)?;
    let indices = PoolIndices {
        input_shape: input.shape().to_vec(),
        output_shape: output.shape().to_vec(),
        argmax,
    };
    Ok((output, indices))
}

pub fn maxpool_backward(
    indices: &PoolIndices,
    grad_out: &Tensor,
    input_shape: &[usize],
) -> Result<Tensor> {
    if indices.input_shape != input_shape {
        return Err(Error::shape(format!(
            "pool indices were recorded for input {:?}, not {:?}",
            indices.input_shape, input_shape
        )));
    }
    if grad_out.shape() != indices.output_shape.as_slice() {
        return Err(Error::shape(format!(
            "pool grad_out has shape {:?}, forward output was {:?}",
            grad_out.shape(),
            indices.output_shape
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let len = grad.len();
    let g = grad.data_mut();
    for (&at, &v) in indices.argmax.iter().zip(grad_out.data()) {
        if at >= len {
            return Err(Error::shape(format!("pool index {at} out of range")));
        }
        g[at] += v;
    }
    Ok(grad)
}
