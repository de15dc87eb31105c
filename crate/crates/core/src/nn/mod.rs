//! Dense tensor engine and the keyword-spotting CNN.
//!
//! Layers are free functions over [`Tensor`] with explicit backward passes.
//! [`Model`] composes five conv → batch-norm → activation blocks, global
//! average pooling and a fully-connected classifier. Everything is generic
//! over [`Scalar`] so gradient checks can run in `f64`.

mod batchnorm;
mod conv;
mod io;
mod layers;
mod model;
mod scalar;
mod tensor;

#[cfg(test)]
pub(crate) mod testutil;

pub use batchnorm::{batchnorm_backward, batchnorm_infer, batchnorm_train, BnCache, BnGrads, BnState};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads};
pub use io::{
    decode_weights, encode_weights, load_weights, save_weights, Provenance, WeightFile,
    FORMAT_VERSION, MAGIC,
};
pub use layers::{
    fc_backward, fc_forward, global_avg_pool_backward, global_avg_pool_forward, relu_backward,
    relu_forward, softmax, softmax_cross_entropy, FcGrads,
};
pub use model::{
    Activation, ArchSpec, BlockGrads, BlockParams, ConvBlockSpec, GradientSet, Model, ModelParams,
    TrainTrace,
};
pub use scalar::Scalar;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch statistics need more than one value per channel, got {0}")]
    DegenerateBatch(usize),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("weight file format mismatch: {0}")]
    FormatVersionMismatch(String),
    #[error("weight file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
