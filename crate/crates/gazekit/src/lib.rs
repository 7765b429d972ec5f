//! gazekit: a smartphone gaze-tracking pipeline.
//!
//! The crate covers the full workflow:
//!
//! - [`ingest`]: parse GazeCapture-style participant directories into a
//!   validated JSON Lines manifest.
//! - [`splits`]: frame filters plus the participant-disjoint (MIT) and
//!   per-dot (Google) train/validation/test assignments.
//! - [`numerics`]: dense tensors, the layer kernels the gaze network
//!   needs with analytic gradients, Adam, and learning-rate schedules.
//! - [`gazenet`]: eye-crop preprocessing, the two-tower convolutional
//!   gaze regressor, its training loop and portable checkpoints.
//! - [`personalize`]: per-user calibration via epsilon-SVR on penultimate
//!   features and via least-squares similarity transforms.
//! - [`evalviz`]: the mean-Euclidean-distance metric, hierarchical
//!   reports, deterministic SVG scatter plots, and CSV export.
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (`f32`/`f64`);
//! the aliases below pin the concrete types the pipeline uses: `f32`
//! for network training and inference, `f64` for personalization and
//! metrics.

pub mod evalviz;
pub mod gazenet;
pub mod ingest;
pub mod numerics;
pub mod personalize;
pub mod scalar;
pub mod splits;
pub mod synth;

pub use scalar::Scalar;

/// Tensor in deployment precision.
pub type Tensor32 = numerics::Tensor<f32>;
/// Tensor in oracle precision.
pub type Tensor64 = numerics::Tensor<f64>;

/// The gaze network as trained and shipped.
pub type GazeNet32 = gazenet::GazeNet<f32>;
/// Double-precision instantiation used by the gradient-check suites.
pub type GazeNet64 = gazenet::GazeNet<f64>;

/// Per-user SVR personalization model in pipeline precision.
pub type SvrModel64 = personalize::SvrModel<f64>;
/// Similarity transform in pipeline precision.
pub type SimilarityTransform64 = personalize::SimilarityTransform<f64>;
