//! 2-D convolution over a single `(channels, height, width)` map, lowered to
//! a matrix product with im2col.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    /// `(out_channels, in_channels, k, k)`
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Vec<f64>, stride: usize, padding: usize) -> Result<Self> {
        let [co, _, kh, kw] = *weights.shape() else {
            return Err(Error::shape(format!(
                "conv weights must be 4-d, got {:?}",
                weights.shape()
            )));
        };
        if kh != kw || !(kh == 1 || kh == 3) {
            return Err(Error::InvalidConfig(format!(
                "conv kernel must be 1x1 or 3x3, got {kh}x{kw}"
            )));
        }
        if bias.len() != co {
            return Err(Error::shape(format!(
                "bias has {} entries for {} output channels",
                bias.len(),
                co
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("conv stride must be positive".into()));
        }
        Ok(Self {
            weights,
            bias,
            stride,
            padding,
        })
    }

    /// Zero-initialized "same" convolution: padding 1 for 3x3, 0 for 1x1.
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            vec![0.0; out_channels],
            1,
            kernel / 2,
        )
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        let span = |n: usize| {
            (n + 2 * self.padding)
                .checked_sub(k)
                .map(|v| v / self.stride + 1)
        };
        match (span(h), span(w)) {
            (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((oh, ow)),
            _ => Err(Error::shape(format!(
                "{h}x{w} input gives an empty output for a {k}x{k} kernel with padding {}",
                self.padding
            ))),
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel() == 1 && self.stride == 1 && self.padding == 0
    }

    fn check_input(&self, input: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input.dims3()?;
        if c != self.in_channels() {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                c
            )));
        }
        if h == 0 || w == 0 {
            return Err(Error::shape("conv input has an empty spatial extent"));
        }
        Ok((c, h, w))
    }
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Input coordinate feeding output `(oy, ox)` through kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad)?;
        (iy < self.h && ix < self.w).then_some((iy, ix))
    }
}

fn im2col(input: &[f64], g: &Geometry) -> Vec<f64> {
    let mut cols = vec![0.0; g.rows() * g.cols()];
    for c in 0..g.c {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                            dst[oy * g.ow + ox] = plane[iy * g.w + ix];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &Geometry) -> Vec<f64> {
    let mut out = vec![0.0; g.c * g.h * g.w];
    for c in 0..g.c {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                            plane[iy * g.w + ix] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

fn view(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view shape")
}

fn view_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix view shape")
}

fn geometry(input: &Tensor, params: &ConvParams) -> Result<Geometry> {
    let (c, h, w) = params.check_input(input)?;
    let (oh, ow) = params.output_dims(h, w)?;
    Ok(Geometry {
        c,
        h,
        w,
        k: params.kernel(),
        stride: params.stride,
        pad: params.padding,
        oh,
        ow,
    })
}

pub fn conv2d_forward(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    let g = geometry(input, params)?;
    let co = params.out_channels();
    let lowered;
    let cols: &[f64] = if params.is_pointwise() {
        input.data()
    } else {
        lowered = im2col(input.data(), &g);
        &lowered
    };

    let mut out = Vec::with_capacity(co * g.cols());
    for &b in &params.bias {
        out.extend(std::iter::repeat_n(b, g.cols()));
    }
    general_mat_mul(
        1.0,
        &view(params.weights.data(), co, g.rows()),
        &view(cols, g.rows(), g.cols()),
        1.0,
        &mut view_mut(&mut out, co, g.cols()),
    );
    Tensor::from_vec(&[co, g.oh, g.ow], out)
}

/// Gradients of `sum(grad_out * conv2d_forward(input, params))` with respect
/// to the input, the weights and the bias.
pub fn conv2d_backward(
    input: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let g = geometry(input, params)?;
    let co = params.out_channels();
    if grad_out.shape() != [co, g.oh, g.ow] {
        return Err(Error::shape(format!(
            "conv grad_out has shape {:?}, forward output is {:?}",
            grad_out.shape(),
            [co, g.oh, g.ow]
        )));
    }
    let go = view(grad_out.data(), co, g.cols());

    let bias = go.rows().into_iter().map(|r| r.sum()).collect();

    let lowered;
    let cols: &[f64] = if params.is_pointwise() {
        input.data()
    } else {
        lowered = im2col(input.data(), &g);
        &lowered
    };
    let mut gw = vec![0.0; co * g.rows()];
    general_mat_mul(
        1.0,
        &go,
        &view(cols, g.rows(), g.cols()).t(),
        0.0,
        &mut view_mut(&mut gw, co, g.rows()),
    );

    let mut gcols = vec![0.0; g.rows() * g.cols()];
    general_mat_mul(
        1.0,
        &view(params.weights.data(), co, g.rows()).t(),
        &go,
        0.0,
        &mut view_mut(&mut gcols, g.rows(), g.cols()),
    );
    let gin = if params.is_pointwise() {
        gcols
    } else {
        col2im(&gcols, &g)
    };

    Ok(ConvGrads {
        input: Tensor::from_vec(input.shape(), gin)?,
        weights: Tensor::from_vec(params.weights.shape(), gw)?,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones_kernel() -> ConvParams {
        ConvParams::new(Tensor::full(&[1, 1, 3, 3], 1.0), vec![0.0], 1, 1).unwrap()
    }

    #[test]
    fn all_ones_3x3() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &ones_kernel()).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert_eq!(y.data(), &[4., 6., 4., 6., 9., 6., 4., 6., 4.]);
    }

    #[test]
    fn identity_pointwise_kernel() {
        let x = Tensor::from_vec(&[1, 2, 3], vec![1., -2., 3., 0.5, 7., -1.]).unwrap();
        let p = ConvParams::new(Tensor::full(&[1, 1, 1, 1], 1.0), vec![0.0], 1, 0).unwrap();
        assert_eq!(conv2d_forward(&x, &p).unwrap(), x);
        let g = conv2d_backward(&x, &p, &x).unwrap();
        assert_eq!(g.input, x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut p = ConvParams::zeros(2, 3, 3).unwrap();
        p.weights
            .data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = i as f64);
        p.bias = vec![0.5, -1.0, 2.0];
        let y = conv2d_forward(&Tensor::zeros(&[2, 4, 5]), &p).unwrap();
        for c in 0..3 {
            assert!(y.channel(c).iter().all(|&v| v == p.bias[c]));
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut p = ones_kernel();
        p.bias[0] = 3.0;
        let x = Tensor::full(&[1, 4, 4], 2.0);
        let g = conv2d_backward(&x, &p, &Tensor::zeros(&[1, 4, 4])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert_eq!(g.bias, vec![0.0]);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let x = Tensor::zeros(&[2, 3, 3]);
        assert!(matches!(
            conv2d_forward(&x, &ones_kernel()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn rejects_empty_output() {
        let p = ConvParams::new(Tensor::zeros(&[1, 1, 3, 3]), vec![0.0], 1, 0).unwrap();
        assert!(conv2d_forward(&Tensor::zeros(&[1, 2, 2]), &p).is_err());
    }

    #[test]
    fn rejects_bad_grad_shape() {
        let x = Tensor::zeros(&[1, 3, 3]);
        assert!(conv2d_backward(&x, &ones_kernel(), &Tensor::zeros(&[1, 2, 2])).is_err());
    }

    #[test]
    fn strided_output_dims() {
        let p = ConvParams::new(Tensor::zeros(&[1, 1, 3, 3]), vec![0.0], 2, 1).unwrap();
        assert_eq!(p.output_dims(5, 6).unwrap(), (3, 3));
    }
}
