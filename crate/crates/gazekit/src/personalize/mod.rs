//! Per-user personalization: epsilon-SVR on penultimate features and
//! least-squares similarity transforms on base predictions.
//!
//! The calibration splits mirror the evaluation protocol: a user's
//! frames are divided into a fit set and an eval set; a correction model
//! is fitted on the fit set and both the base model and the corrected
//! predictions are scored on the eval set.

mod affine;
mod calibration;
mod svr;

pub use affine::{apply_affine, fit_affine, SimilarityTransform};
pub use calibration::{
    build_calibration_split, peripheral_calibration_dots, CalibrationSplitSpec,
    CalibrationStrategy, CALIBRATION_DOT_COUNT,
};
pub use svr::{
    fit_svr, predict_svr, rbf_kernel, solve_epsilon_svr, ScalarSvr, SolveStats, SvrModel,
    SvrParams, DEFAULT_EPSILON_GRID,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalviz;
use crate::gazenet::FeatureTriple;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum PersonalizeError {
    #[error("user has {have} frames, need at least {need}")]
    InsufficientFrames { have: usize, need: usize },
    #[error("calibration split needs {need} distinct dots, found {have}")]
    MissingCalibrationDots { have: usize, need: usize },
    #[error(
        "SVR solver hit the iteration cap ({iterations}) with KKT violation {max_violation:.3e}"
    )]
    SolverNonConvergence {
        iterations: usize,
        max_violation: f64,
    },
    #[error("degenerate geometry: predictions are coincident")]
    DegenerateGeometry,
    #[error("calibration split produced an empty {0} set")]
    EmptySplitSide(&'static str),
    #[error("fit set of {have} rows cannot support {folds}-fold cross-validation")]
    TooFewRowsForFolds { have: usize, folds: usize },
}

/// Correction model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Svr,
    Affine,
}

/// Per-user personalization outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonalizationReport {
    pub user: String,
    pub method: Method,
    pub strategy: CalibrationStrategy,
    pub shuffle: bool,
    pub seed: u64,
    pub frames_total: usize,
    pub fit_count: usize,
    pub eval_count: usize,
    pub med_before_cm: f64,
    pub med_after_cm: f64,
    /// `med_before - med_after`; negative when personalization hurt.
    pub enhancement_cm: f64,
    pub chosen_epsilon: Option<f64>,
    pub folds: Option<usize>,
    /// True when the experiment design lets base-training participants
    /// into the personalization sets (the Google-split variants).
    pub leakage_prone: bool,
}

/// Eval-set frame with its corrected prediction, for plots and CSV.
#[derive(Debug, Clone)]
pub struct CorrectedFrame {
    pub key: String,
    pub dot_id: i64,
    pub truth: [f64; 2],
    pub base_pred: [f64; 2],
    pub corrected: [f64; 2],
}

/// Options for the SVR path of [`personalize_user`].
#[derive(Debug, Clone)]
pub struct SvrSearchOptions {
    pub params: SvrParams,
    pub epsilon_grid: Vec<f64>,
    pub folds: usize,
}

impl Default for SvrSearchOptions {
    fn default() -> Self {
        SvrSearchOptions {
            params: SvrParams::default(),
            epsilon_grid: DEFAULT_EPSILON_GRID.to_vec(),
            folds: 3,
        }
    }
}

/// Fits the chosen correction on the user's fit set and reports MED
/// before/after on the eval set.
pub fn personalize_user(
    user: &str,
    frames: &[FeatureTriple],
    method: Method,
    split_spec: &CalibrationSplitSpec,
    svr_options: &SvrSearchOptions,
    leakage_prone: bool,
) -> Result<(PersonalizationReport, Vec<CorrectedFrame>), PersonalizeError> {
    let (fit, eval) = build_calibration_split(frames, split_spec)?;

    let eval_truth: Vec<[f64; 2]> = eval.iter().map(|f| f.truth).collect();
    let eval_base: Vec<[f64; 2]> = eval.iter().map(|f| f.base_pred).collect();
    let med_before = evalviz::med(&eval_base, &eval_truth).expect("eval set nonempty");

    let mut chosen_epsilon = None;
    let mut folds = None;
    let corrected: Vec<[f64; 2]> = match method {
        Method::Svr => {
            let features: Vec<[f64; 4]> = fit.iter().map(|f| f.features).collect();
            let targets: Vec<[f64; 2]> = fit.iter().map(|f| f.truth).collect();
            let model = fit_svr(
                &features,
                &targets,
                &svr_options.params,
                &svr_options.epsilon_grid,
                svr_options.folds,
            )?;
            chosen_epsilon = Some(model.epsilon);
            folds = Some(svr_options.folds);
            let eval_features: Vec<[f64; 4]> = eval.iter().map(|f| f.features).collect();
            predict_svr(&model, &eval_features)
        }
        Method::Affine => {
            let fit_preds: Vec<[f64; 2]> = fit.iter().map(|f| f.base_pred).collect();
            let fit_truth: Vec<[f64; 2]> = fit.iter().map(|f| f.truth).collect();
            let transform = fit_affine(&fit_preds, &fit_truth)?;
            apply_affine(&transform, &eval_base)
        }
    };

    let med_after = evalviz::med(&corrected, &eval_truth).expect("eval set nonempty");
    let report = PersonalizationReport {
        user: user.to_string(),
        method,
        strategy: split_spec.strategy,
        shuffle: split_spec.shuffle,
        seed: split_spec.seed,
        frames_total: frames.len(),
        fit_count: fit.len(),
        eval_count: eval.len(),
        med_before_cm: med_before,
        med_after_cm: med_after,
        enhancement_cm: med_before - med_after,
        chosen_epsilon,
        folds,
        leakage_prone,
    };
    let corrected_frames = eval
        .iter()
        .zip(&corrected)
        .map(|(f, c)| CorrectedFrame {
            key: f.key.clone(),
            dot_id: f.dot_id,
            truth: f.truth,
            base_pred: f.base_pred,
            corrected: *c,
        })
        .collect();
    Ok((report, corrected_frames))
}

/// Participants with the most frames, descending; ties break by id.
pub fn select_top_users(frames: &[FeatureTriple], k: usize) -> Vec<String> {
    let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for f in frames {
        *counts.entry(f.participant.as_str()).or_insert(0) += 1;
    }
    let mut users: Vec<(&str, usize)> = counts.into_iter().collect();
    users.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    users.into_iter().take(k).map(|(u, _)| u.to_string()).collect()
}

/// Aligned-text table over per-user reports, one row per user.
pub fn reports_to_table(reports: &[PersonalizationReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>8} {:>12} {:>12} {:>12} {:>10}\n",
        "user", "frames", "base MED", "after", "enhancement", "epsilon"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<10} {:>8} {:>9.3} cm {:>9.3} cm {:>9.3} cm {:>10}\n",
            r.user,
            r.frames_total,
            r.med_before_cm,
            r.med_after_cm,
            r.enhancement_cm,
            r.chosen_epsilon
                .map_or_else(|| "-".to_string(), |e| format!("{e}")),
        ));
    }
    out
}

pub(crate) fn to_f64_pair<T: Scalar>(p: &[T; 2]) -> [f64; 2] {
    [p[0].to_f64_lossy(), p[1].to_f64_lossy()]
}
