//! Minimal differentiable-numerics core.
//!
//! Dense row-major tensors, the layer set the gaze network needs (forward
//! and backward), the Adam optimizer, and the learning-rate schedules used
//! during training. Everything is generic over [`crate::scalar::Scalar`];
//! the deployed pipeline runs in `f32` while test oracles instantiate the
//! same kernels in `f64`.

mod adam;
pub mod gradcheck;
mod ops;
mod schedule;
mod tensor;

pub use adam::{adam_step, AdamHyper, Parameter};
pub use ops::{
    batchnorm_backward, batchnorm_forward, conv2d_backward, conv2d_forward, fully_connected_backward,
    fully_connected_forward, global_avg_pool_backward, global_avg_pool_forward, mse_loss_backward,
    mse_loss_forward, pool2d_backward, pool2d_forward, relu_backward, relu_forward, BatchNormCache,
    BatchNormGrads, BatchNormState, BnMode, Conv2dGrads, FcGrads, Padding, PoolKind,
};
pub use schedule::{LrSchedule, LrScheduleKind, ScheduleState};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tensor construction and layer kernels.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("numeric fault in {op}: {detail}")]
    NumericFault { op: String, detail: String },
    #[error("batch normalization requires a batch of at least 2 in train mode, got {0}")]
    ZeroBatch(usize),
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NumericsError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
