//! Minimal differentiable engine covering exactly the layers the residual
//! classifier needs.
//!
//! Tensors are laid out `(batch, channel, time)`. Every layer offers a pure
//! `eval` path (usable through `&self`, so trained models can be shared across
//! threads) and a caching training path followed by `backward`, which
//! accumulates parameter gradients and returns the input gradient.

mod activation;
mod adam;
mod batchnorm;
mod conv;
pub mod gradcheck;
mod head;
mod params;
mod pool;
mod real;
mod rng;
mod tensor;

pub use activation::{relu, Relu};
pub use adam::{Adam, AdamConfig};
pub use batchnorm::{batchnorm1d, BatchNorm1d, BN_EPS, BN_MOMENTUM};
pub use conv::{
    conv1d_backward, conv1d_backward_with, conv1d_forward, conv1d_forward_with, same_padding, Conv1d, ConvAlgo,
};
pub use head::{linear_softmax_xent, softmax_rows, HeadOutput, LinearSoftmax};
pub use params::{LayerKind, LayerParams};
pub use pool::{global_average_pool, global_average_pool_backward, GlobalAvgPool};
pub use real::Real;
pub use rng::{derive_seed, seeded_rng, SeededRng};
pub use tensor::{Matrix, Tensor3};

/// Forward-pass mode for layers whose behaviour differs between training and
/// inference (batch normalization).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
