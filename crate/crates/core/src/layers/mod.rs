//! Differentiable layer primitives.

mod activation;
mod conv;
mod pool;
mod restore;

pub use activation::{dropout_backward, relu_backward, relu_forward, DropoutMask, DropoutState};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub use pool::{
    maxpool_backward, maxpool_forward, PoolIndices, PoolParams, POOL_KERNEL, POOL_PADDING,
};
pub use restore::{keys_kernel, restore_size, restore_size_adjoint, KEYS_A};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Training,
    #[default]
    Inference,
}
