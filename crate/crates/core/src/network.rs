//! The saliency score regression network.
//!
//! Layout, front to back: convolutional stages (3x3 conv + ReLU, repeated,
//! then a 3x3 max-pool), a cascade of 1x1 "fully convolutional" regression
//! layers (ReLU + dropout after all but the last), and a size-restoration
//! layer that resizes the single-channel basic map back to the input size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    conv2d_backward, conv2d_forward, dropout_backward, maxpool_backward, maxpool_forward,
    relu_backward, relu_forward, restore_size, restore_size_adjoint, ConvParams, DropoutMask,
    DropoutState, Mode, PoolIndices, PoolParams,
};
use crate::tensor::Tensor;

pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalActivation {
    /// Linear scores, clamped to `[0, 1]` on output.
    LinearClamp,
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub name: String,
    pub stage_layer_counts: Vec<usize>,
    pub stage_channels: Vec<usize>,
    pub pool_strides: Vec<usize>,
    pub fcn_channels: Vec<usize>,
    pub dropout_rate: f64,
    pub final_activation: FinalActivation,
}

impl NetworkConfig {
    pub fn vgg16() -> Self {
        Self {
            name: "vgg16".into(),
            stage_layer_counts: vec![2, 2, 3, 3, 3],
            stage_channels: vec![64, 128, 256, 512, 512],
            pool_strides: vec![2, 2, 2, 1, 1],
            fcn_channels: vec![1024, 1024, 1],
            dropout_rate: 0.5,
            final_activation: FinalActivation::LinearClamp,
        }
    }

    /// Scaled-down preset for desk-scale tests.
    pub fn micro() -> Self {
        Self {
            name: "micro".into(),
            stage_layer_counts: vec![1, 1],
            stage_channels: vec![8, 16],
            pool_strides: vec![2, 2],
            fcn_channels: vec![32, 1],
            dropout_rate: 0.5,
            final_activation: FinalActivation::LinearClamp,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "vgg16" => Ok(Self::vgg16()),
            "micro" => Ok(Self::micro()),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?} (expected \"vgg16\" or \"micro\")"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stage_layer_counts.len();
        if n == 0 || self.stage_channels.len() != n || self.pool_strides.len() != n {
            return Err(Error::InvalidConfig(format!(
                "stage layer counts ({}), stage channels ({}) and pool strides ({}) must have the same non-zero length",
                n,
                self.stage_channels.len(),
                self.pool_strides.len()
            )));
        }
        if self.stage_layer_counts.contains(&0) || self.stage_channels.contains(&0) {
            return Err(Error::InvalidConfig(
                "stage layer counts and channel widths must be positive".into(),
            ));
        }
        for &s in &self.pool_strides {
            PoolParams::new(s)?;
        }
        match self.fcn_channels.last() {
            Some(1) => {}
            _ => {
                return Err(Error::InvalidConfig(
                    "the last fully convolutional layer must have exactly 1 channel".into(),
                ))
            }
        }
        if self.fcn_channels.contains(&0) {
            return Err(Error::InvalidConfig("fcn widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Total spatial down-sampling factor of the backbone.
    pub fn downsample_factor(&self) -> usize {
        self.pool_strides.iter().product()
    }

    /// Spatial dims of the basic (pre-restoration) map for an `h x w` input.
    pub fn basic_dims(&self, h: usize, w: usize) -> (usize, usize) {
        self.pool_strides.iter().fold((h, w), |(h, w), &s| {
            let p = PoolParams::new(s).expect("validated pool stride");
            (p.output_len(h), p.output_len(w))
        })
    }

    /// Conv shapes in network order as `(in, out, kernel)`.
    pub fn conv_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = Vec::new();
        let mut c_in = INPUT_CHANNELS;
        for (&count, &c_out) in self.stage_layer_counts.iter().zip(&self.stage_channels) {
            for _ in 0..count {
                shapes.push((c_in, c_out, 3));
                c_in = c_out;
            }
        }
        for &c_out in &self.fcn_channels {
            shapes.push((c_in, c_out, 1));
            c_in = c_out;
        }
        shapes
    }

    pub fn num_parameters(&self) -> usize {
        self.conv_shapes()
            .iter()
            .map(|&(i, o, k)| k * k * i * o + o)
            .sum()
    }

    pub fn backbone_parameters(&self) -> usize {
        let n_backbone: usize = self.stage_layer_counts.iter().sum();
        self.conv_shapes()
            .iter()
            .take(n_backbone)
            .map(|&(i, o, k)| k * k * i * o + o)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(ConvParams),
    Relu,
    Pool(PoolParams),
    /// Index into the network's dropout states.
    Dropout(usize),
    Restore,
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Pool(PoolIndices),
    Dropout(Option<DropoutMask>),
}

/// Activations recorded by [`Network::forward_cached`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    input_hw: (usize, usize),
    layer_inputs: Vec<Tensor>,
    aux: Vec<Aux>,
    scores: Tensor,
    clamp: bool,
}

impl ForwardPass {
    /// Raw full-resolution scores (before the output clamp).
    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    /// The low-resolution map fed to size restoration.
    pub fn basic_map(&self) -> &Tensor {
        self.layer_inputs.last().expect("restore layer input")
    }

    pub fn output(&self) -> Tensor {
        if self.clamp {
            clamp_unit(&self.scores)
        } else {
            self.scores.clone()
        }
    }

    pub fn input_hw(&self) -> (usize, usize) {
        self.input_hw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// One entry per conv/fcn layer, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<ParamGrad>,
}

impl Gradients {
    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.all_finite() && g.bias.iter().all(|b| b.is_finite()))
    }
}

pub fn clamp_unit(t: &Tensor) -> Tensor {
    t.map(|v| v.clamp(0.0, 1.0))
}

/// Gradient through the output clamp: 1 on `[0, 1]` (boundary included), 0 outside.
pub fn clamp_backward(scores: &Tensor, grad: &Tensor) -> Result<Tensor> {
    if scores.shape() != grad.shape() {
        return Err(Error::shape("clamp gradient shape mismatch"));
    }
    let data = scores
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&s, &g)| if (0.0..=1.0).contains(&s) { g } else { 0.0 })
        .collect();
    Tensor::from_vec(scores.shape(), data)
}

/// Subtracts each channel's mean.
pub fn center_image(image: &Tensor) -> Result<Tensor> {
    let (c, h, w) = image.dims3()?;
    let plane = h * w;
    let mut data = image.data().to_vec();
    for ch in 0..c {
        let s = &mut data[ch * plane..(ch + 1) * plane];
        let mean = s.iter().sum::<f64>() / plane as f64;
        s.iter_mut().for_each(|v| *v -= mean);
    }
    Tensor::from_vec(image.shape(), data)
}

pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
    dropouts: Vec<DropoutState>,
    mode: Mode,
}

impl Network {
    /// Builds a network with fan-in scaled uniform weights
    /// `U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))` and zero biases.
    pub fn build(config: NetworkConfig, init_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        Self::assemble(config, init_seed, |c_in, c_out, k| {
            let fan_in = (c_in * k * k) as f64;
            let bound = (6.0 / fan_in).sqrt();
            let n = c_out * c_in * k * k;
            let w = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::from_vec(&[c_out, c_in, k, k], w)
        })
    }

    /// Builds a network with every weight and bias set to zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        Self::assemble(config, 0, |c_in, c_out, k| {
            Ok(Tensor::zeros(&[c_out, c_in, k, k]))
        })
    }

    fn assemble(
        config: NetworkConfig,
        seed: u64,
        mut weights: impl FnMut(usize, usize, usize) -> Result<Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut dropouts = Vec::new();
        let mut shapes = config.conv_shapes().into_iter();
        let mut conv = |shapes: &mut std::vec::IntoIter<(usize, usize, usize)>| -> Result<Layer> {
            let (c_in, c_out, k) = shapes.next().expect("conv shape");
            let w = weights(c_in, c_out, k)?;
            Ok(Layer::Conv(ConvParams::new(w, vec![0.0; c_out], 1, k / 2)?))
        };
        for (stage, &count) in config.stage_layer_counts.iter().enumerate() {
            for _ in 0..count {
                layers.push(conv(&mut shapes)?);
                layers.push(Layer::Relu);
            }
            layers.push(Layer::Pool(PoolParams::new(config.pool_strides[stage])?));
        }
        let n_fcn = config.fcn_channels.len();
        for i in 0..n_fcn {
            layers.push(conv(&mut shapes)?);
            if i + 1 < n_fcn {
                layers.push(Layer::Relu);
                layers.push(Layer::Dropout(dropouts.len()));
                let stream = dropouts.len() as u64;
                dropouts.push(DropoutState::new(
                    config.dropout_rate,
                    derive_seed(seed, stream),
                )?);
            } else if config.final_activation == FinalActivation::Relu {
                layers.push(Layer::Relu);
            }
        }
        layers.push(Layer::Restore);
        Ok(Self {
            config,
            layers,
            dropouts,
            mode: Mode::Inference,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        for d in &mut self.dropouts {
            d.set_mode(mode);
        }
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        for (i, d) in self.dropouts.iter_mut().enumerate() {
            d.reseed(derive_seed(seed, i as u64));
        }
    }

    pub fn conv_params(&self) -> impl Iterator<Item = &ConvParams> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv(p) => Some(p),
            _ => None,
        })
    }

    pub fn conv_params_mut(&mut self) -> impl Iterator<Item = &mut ConvParams> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Conv(p) => Some(p),
            _ => None,
        })
    }

    pub fn num_parameters(&self) -> usize {
        self.conv_params().map(ConvParams::num_parameters).sum()
    }

    /// Depth counted as weighted layers plus size restoration
    /// (17 for the vgg16 preset).
    pub fn depth(&self) -> usize {
        self.conv_params().count() + 1
    }

    pub fn min_input_side(&self) -> usize {
        self.config.downsample_factor()
    }

    fn check_image(&self, image: &Tensor) -> Result<(usize, usize)> {
        let (c, h, w) = image.dims3()?;
        if c != INPUT_CHANNELS {
            return Err(Error::shape(format!(
                "network expects {INPUT_CHANNELS} input channels, got {c}"
            )));
        }
        let min = self.min_input_side();
        if h < min || w < min {
            return Err(Error::InputTooSmall {
                height: h,
                width: w,
                min,
            });
        }
        Ok((h, w))
    }

    /// Inference forward producing the final saliency map (clamped to
    /// `[0, 1]` for [`FinalActivation::LinearClamp`]).
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let scores = self.forward_scores(image)?;
        Ok(match self.config.final_activation {
            FinalActivation::LinearClamp => clamp_unit(&scores),
            FinalActivation::Relu => scores,
        })
    }

    /// Raw full-resolution scores. Dropout is bypassed regardless of mode and
    /// no activation cache is kept.
    pub fn forward_scores(&self, image: &Tensor) -> Result<Tensor> {
        let (h, w) = self.check_image(image)?;
        let mut x = center_image(image)?;
        for layer in &self.layers {
            x = match layer {
                Layer::Conv(p) => conv2d_forward(&x, p)?,
                Layer::Relu => relu_forward(&x),
                Layer::Pool(p) => maxpool_forward(&x, *p)?.0,
                Layer::Dropout(_) => x,
                Layer::Restore => restore_size(&x, w, h)?,
            };
        }
        Ok(x)
    }

    /// Forward pass that records what [`Network::backward`] needs. Dropout
    /// samples fresh masks when the network is in training mode.
    pub fn forward_cached(&mut self, image: &Tensor) -> Result<ForwardPass> {
        let (h, w) = self.check_image(image)?;
        let mut x = center_image(image)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, a) = match layer {
                Layer::Conv(p) => (conv2d_forward(&x, p)?, Aux::None),
                Layer::Relu => (relu_forward(&x), Aux::None),
                Layer::Pool(p) => {
                    let (y, idx) = maxpool_forward(&x, *p)?;
                    (y, Aux::Pool(idx))
                }
                Layer::Dropout(slot) => {
                    let d = &mut self.dropouts[*slot];
                    let y = d.forward(&x)?;
                    (y, Aux::Dropout(d.last_mask().cloned()))
                }
                Layer::Restore => (restore_size(&x, w, h)?, Aux::None),
            };
            layer_inputs.push(std::mem::replace(&mut x, y));
            aux.push(a);
        }
        Ok(ForwardPass {
            input_hw: (h, w),
            layer_inputs,
            aux,
            scores: x,
            clamp: self.config.final_activation == FinalActivation::LinearClamp,
        })
    }

    /// Parameter gradients given `d loss / d scores` for the raw scores of `pass`.
    pub fn backward(&self, pass: &ForwardPass, grad_scores: &Tensor) -> Result<Gradients> {
        if pass.layer_inputs.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "forward cache does not belong to this network".into(),
            ));
        }
        if grad_scores.shape() != pass.scores.shape() {
            return Err(Error::shape(format!(
                "score gradient has shape {:?}, scores are {:?}",
                grad_scores.shape(),
                pass.scores.shape()
            )));
        }
        let mut grads = Vec::new();
        let mut g = grad_scores.clone();
        for ((layer, input), aux) in self
            .layers
            .iter()
            .zip(&pass.layer_inputs)
            .zip(&pass.aux)
            .rev()
        {
            g = match (layer, aux) {
                (Layer::Conv(p), _) => {
                    let cg = conv2d_backward(input, p, &g)?;
                    grads.push(ParamGrad {
                        weights: cg.weights,
                        bias: cg.bias,
                    });
                    cg.input
                }
                (Layer::Relu, _) => relu_backward(input, &g)?,
                (Layer::Pool(_), Aux::Pool(idx)) => maxpool_backward(idx, &g, input.shape())?,
                (Layer::Dropout(_), Aux::Dropout(mask)) => dropout_backward(mask.as_ref(), &g)?,
                (Layer::Restore, _) => {
                    let (_, bh, bw) = input.dims3()?;
                    restore_size_adjoint(&g, bw, bh)?
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "forward cache does not belong to this network".into(),
                    ))
                }
            };
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg16_counts() {
        let cfg = NetworkConfig::vgg16();
        assert_eq!(cfg.backbone_parameters(), 14_714_688);
        assert_eq!(cfg.num_parameters(), 16_290_625);
    }

    #[test]
    fn micro_counts() {
        let cfg = NetworkConfig::micro();
        assert_eq!(cfg.num_parameters(), 8 * 28 + 16 * 73 + 32 * 17 + 33);
        let net = Network::build(cfg, 1).unwrap();
        assert_eq!(net.num_parameters(), 1969);
    }

    #[test]
    fn single_pointwise_conv_has_two_parameters() {
        assert_eq!(ConvParams::zeros(1, 1, 1).unwrap().num_parameters(), 2);
    }

    #[test]
    fn depth_is_seventeen_for_vgg16() {
        let net = Network::zeros(NetworkConfig::vgg16()).unwrap();
        assert_eq!(net.depth(), 17);
        assert_eq!(net.num_parameters(), 16_290_625);
    }

    #[test]
    fn basic_dims_follow_ceil_chain() {
        let cfg = NetworkConfig::vgg16();
        assert_eq!(cfg.basic_dims(300, 400), (38, 50));
        assert_eq!(cfg.basic_dims(224, 224), (28, 28));
    }

    #[test]
    fn build_is_deterministic() {
        let a = Network::build(NetworkConfig::micro(), 9).unwrap();
        let b = Network::build(NetworkConfig::micro(), 9).unwrap();
        let c = Network::build(NetworkConfig::micro(), 10).unwrap();
        let wa: Vec<_> = a.conv_params().cloned().collect();
        let wb: Vec<_> = b.conv_params().cloned().collect();
        let wc: Vec<_> = c.conv_params().cloned().collect();
        assert_eq!(wa, wb);
        assert_ne!(wa, wc);
    }

    #[test]
    fn init_within_fan_in_bound() {
        let net = Network::build(NetworkConfig::micro(), 3).unwrap();
        for p in net.conv_params() {
            let bound = (6.0 / (p.in_channels() * p.kernel() * p.kernel()) as f64).sqrt();
            assert!(p.weights.data().iter().all(|w| w.abs() <= bound));
            assert!(p.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = NetworkConfig::micro();
        cfg.fcn_channels = vec![32, 2];
        assert!(Network::build(cfg, 0).is_err());
        let mut cfg = NetworkConfig::micro();
        cfg.pool_strides = vec![2];
        assert!(Network::build(cfg, 0).is_err());
        let mut cfg = NetworkConfig::micro();
        cfg.pool_strides = vec![2, 3];
        assert!(Network::build(cfg, 0).is_err());
        assert!(NetworkConfig::preset("resnet").is_err());
    }

    #[test]
    fn rejects_undersized_input() {
        let net = Network::zeros(NetworkConfig::vgg16()).unwrap();
        let err = net.forward(&Tensor::zeros(&[3, 7, 20])).unwrap_err();
        assert!(matches!(err, Error::InputTooSmall { min: 8, .. }));
        assert!(err.to_string().contains("at least 8x8"));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(NetworkConfig::micro()).unwrap();
        let img = Tensor::full(&[3, 20, 13], 0.4);
        let y = net.forward(&img).unwrap();
        assert_eq!(y.shape(), &[1, 20, 13]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let mut a = Network::build(NetworkConfig::micro(), 0).unwrap();
        let mut cfg = NetworkConfig::micro();
        cfg.fcn_channels = vec![1];
        let b = Network::build(cfg, 0).unwrap();
        let pass = a.forward_cached(&Tensor::zeros(&[3, 8, 8])).unwrap();
        assert!(b.backward(&pass, pass.scores()).is_err());
    }

    #[test]
    fn clamp_gradient_mask() {
        let s = Tensor::from_vec(&[4], vec![-0.1, 0.0, 1.0, 1.2]).unwrap();
        let g = Tensor::full(&[4], 2.0);
        assert_eq!(
            clamp_backward(&s, &g).unwrap().data(),
            &[0.0, 2.0, 2.0, 0.0]
        );
    }

    #[test]
    fn center_removes_channel_means() {
        let img = Tensor::from_vec(&[2, 1, 2], vec![1.0, 3.0, 0.0, 4.0]).unwrap();
        assert_eq!(center_image(&img).unwrap().data(), &[-1.0, 1.0, -2.0, 2.0]);
    }
}
