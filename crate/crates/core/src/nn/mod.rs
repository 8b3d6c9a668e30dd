//! Neural building blocks with explicit forward and backward passes.
//!
//! Layers hold handles into a [`ParamStore`]; forward passes return a cache
//! that the matching backward pass consumes while accumulating gradients in
//! the store. Every block's analytic backward is checked against central
//! finite differences (see [`gradcheck`]).

pub mod attention;
pub mod conv;
pub mod dsconv;
pub mod gradcheck;
pub mod init;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod param;
pub mod se;

pub use attention::SelfAttention;
pub use conv::{Conv2d, Conv3d, PointwiseConv1d};
pub use dsconv::DsConv1d;
pub use linear::Linear;
pub use loss::{cross_entropy_loss, softmax_rows, CrossEntropyGrad};
pub use norm::{BatchNorm, LayerNorm};
pub use param::{ParamId, ParamStore};
pub use se::{SeBlock, SeGate};

use thiserror::Error;

/// Configuration errors raised while building a model.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{context}: {channels} channels not divisible by reduction ratio {ratio}")]
    SeRatio {
        context: String,
        channels: usize,
        ratio: usize,
    },
    #[error("{context}: model dimension {dim} not divisible by {heads} heads")]
    HeadSplit {
        context: String,
        dim: usize,
        heads: usize,
    },
    #[error("duplicate parameter name '{0}'")]
    DuplicateParam(String),
}
