//! The two-tower convolutional gaze network: eye-crop preprocessing,
//! forward/backward passes, training loop, checkpoints and feature
//! extraction.
//!
//! Each 128x128x3 eye crop runs through a weight-shared tower of three
//! conv / batch-norm / ReLU / pool stages (kernels 7, 5, 3 producing 32,
//! 64, 128 channels), is globally average-pooled and reduced to a compact
//! eye vector; the two eye vectors are summed (the left crop arrives
//! pre-flipped), eye-corner landmarks pass through a small
//! fully-connected branch, and a fusion head ends in a width-4
//! penultimate layer feeding the linear 2-d gaze output in centimeters.

mod checkpoint;
mod net;
mod preprocess;
mod train;

pub use checkpoint::Checkpoint;
pub use net::{EyeBatch, ForwardResult, GazeNet};
pub use preprocess::{preprocess, preprocess_file, resolve_corners, EyeInputs};
pub use train::{
    evaluate, extract_features, resume_training, train, EvalOutcome, FeatureTriple, FrameEval,
    PreparedDataset, PreparedFrame, SkippedFrame, TrainEvent, TrainOutcome,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{LrSchedule, NumericsError, PoolKind};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GZTK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture and training hyperparameters.
///
/// The default configuration is the reference network: towers of
/// (7x7, 32), (5x5, 64), (3x3, 128) with batch-norm eps 1e-3 and
/// momentum 0.9, a 16-16 landmark branch, a 16-8-4 fusion head, and
/// roughly 133k trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazeNetConfig {
    pub crop_size: usize,
    pub tower_channels: [usize; 3],
    pub tower_kernels: [usize; 3],
    pub landmark_units: [usize; 2],
    pub fusion_units: Vec<usize>,
    pub output_dim: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub pooling: PoolKind,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub max_steps: u64,
    /// Validation cadence in optimizer steps.
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for GazeNetConfig {
    fn default() -> Self {
        GazeNetConfig {
            crop_size: 128,
            tower_channels: [32, 64, 128],
            tower_kernels: [7, 5, 3],
            landmark_units: [16, 16],
            fusion_units: vec![16, 8, 4],
            output_dim: 2,
            bn_eps: 1e-3,
            bn_momentum: 0.9,
            pooling: PoolKind::Avg,
            batch_size: 64,
            schedule: LrSchedule::default(),
            max_steps: 50_000,
            eval_every: 500,
            seed: 0,
        }
    }
}

/// Width of the penultimate layer; personalization features depend on it.
pub const PENULTIMATE_WIDTH: usize = 4;

/// Reference trainable-parameter budget and tolerance band.
pub const PARAM_BUDGET: usize = 140_000;
pub const PARAM_BUDGET_TOLERANCE: f64 = 0.10;

impl GazeNetConfig {
    /// Width of the shared eye-reduction layer: matched to the landmark
    /// branch output so the fusion head sees two equal-width halves.
    pub fn eye_feature_width(&self) -> usize {
        self.landmark_units[1]
    }

    /// Structural validation. The penultimate width is pinned to 4 for
    /// every valid config, not merely defaulted.
    pub fn validate(&self) -> Result<(), GazeNetError> {
        let fail = |detail: String| Err(GazeNetError::InvalidConfig { detail });
        if self.fusion_units.is_empty() || *self.fusion_units.last().unwrap() != PENULTIMATE_WIDTH {
            return fail(format!(
                "fusion_units must end in the penultimate width {PENULTIMATE_WIDTH}, got {:?}",
                self.fusion_units
            ));
        }
        if self.output_dim != 2 {
            return fail(format!("output_dim must be 2, got {}", self.output_dim));
        }
        if self.tower_kernels.iter().any(|k| k % 2 == 0 || *k == 0) {
            return fail(format!("tower kernels must be odd, got {:?}", self.tower_kernels));
        }
        if self.tower_channels.contains(&0)
            || self.landmark_units.contains(&0)
            || self.fusion_units.contains(&0)
        {
            return fail("layer widths must be positive".to_string());
        }
        // Three pool stages halve the crop; every stage needs >= 2 px.
        if self.crop_size < 8 || !self.crop_size.is_multiple_of(8) {
            return fail(format!(
                "crop_size must be a positive multiple of 8, got {}",
                self.crop_size
            ));
        }
        if self.batch_size < 2 {
            return fail(format!(
                "batch_size must be at least 2 for batch norm, got {}",
                self.batch_size
            ));
        }
        self.schedule
            .validate()
            .map_err(|detail| GazeNetError::InvalidConfig { detail })?;
        Ok(())
    }

    /// Total trainable parameter count (conv weights/biases, batch-norm
    /// affine terms, fully-connected layers; running stats excluded).
    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        let mut cin = 3;
        for (k, cout) in self.tower_kernels.iter().zip(self.tower_channels) {
            total += k * k * cin * cout + cout; // conv
            total += 2 * cout; // bn gamma + beta
            cin = cout;
        }
        let eye_feat = self.eye_feature_width();
        total += cin * eye_feat + eye_feat; // shared eye reduction
        let mut lin = 8;
        for u in self.landmark_units {
            total += lin * u + u;
            lin = u;
        }
        let mut fin = eye_feat + lin;
        for &u in &self.fusion_units {
            total += fin * u + u;
            fin = u;
        }
        total += fin * self.output_dim + self.output_dim;
        total
    }

    /// Whether the parameter count sits within the reference budget band.
    pub fn within_parameter_budget(&self) -> bool {
        let count = self.parameter_count() as f64;
        let budget = PARAM_BUDGET as f64;
        (count - budget).abs() <= budget * PARAM_BUDGET_TOLERANCE
    }
}

#[derive(Debug, Error)]
pub enum GazeNetError {
    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },
    #[error("degenerate crop: eye corner distance {distance:.2} px below minimum 4 px")]
    DegenerateCrop { distance: f64 },
    #[error("could not decode image {path}: {detail}")]
    DecodeError { path: String, detail: String },
    #[error("numeric fault at step {step}: {detail}")]
    NumericFault { step: u64, detail: String },
    #[error("training split is empty")]
    EmptySplit,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("checkpoint format error: {detail}")]
    CheckpointFormat { detail: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
