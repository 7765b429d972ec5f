//! Metrics, hierarchical evaluation reports, scatter plots and CSV export.

mod csv_export;
mod scatter;

pub use csv_export::{export_csv, parse_csv, CsvRow};
pub use scatter::{render_scatter, ScatterScene};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("malformed csv at line {line}: {detail}")]
    MalformedCsv { line: usize, detail: String },
}

/// Mean Euclidean Distance in centimeters: the mean over frames of the
/// straight-line distance between predicted and true gaze points.
///
/// ```
/// use gazekit::evalviz::med;
///
/// let preds = [[0.0, 0.0], [1.0, 1.0]];
/// let truth = [[3.0, 4.0], [1.0, 1.0]];
/// assert_eq!(med(&preds, &truth).unwrap(), 2.5);
/// ```
pub fn med<T: Scalar>(preds: &[[T; 2]], truth: &[[T; 2]]) -> Result<f64, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::EmptyInput("med"));
    }
    if preds.len() != truth.len() {
        return Err(EvalError::ShapeMismatch {
            op: "med",
            detail: format!("{} predictions vs {} truths", preds.len(), truth.len()),
        });
    }
    let sum: f64 = preds
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let dx = p[0].to_f64_lossy() - t[0].to_f64_lossy();
            let dy = p[1].to_f64_lossy() - t[1].to_f64_lossy();
            (dx * dx + dy * dy).sqrt()
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

/// Euclidean error of a single prediction/truth pair.
pub fn frame_error(pred: [f64; 2], truth: [f64; 2]) -> f64 {
    let dx = pred[0] - truth[0];
    let dy = pred[1] - truth[1];
    (dx * dx + dy * dy).sqrt()
}

/// Aggregation scope of one report node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Aggregate,
    Split,
    Device,
    User,
    Frame,
}

/// Grouping levels accepted by [`build_report`], outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Split,
    Device,
    User,
    Frame,
}

impl GroupBy {
    fn scope(self) -> Scope {
        match self {
            GroupBy::Split => Scope::Split,
            GroupBy::Device => Scope::Device,
            GroupBy::User => Scope::User,
            GroupBy::Frame => Scope::Frame,
        }
    }
}

/// Per-frame evaluation outcome feeding report aggregation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameResult {
    pub key: String,
    pub participant: String,
    pub device: String,
    pub split: String,
    pub dot_id: i64,
    pub error_cm: f64,
    /// Frame belongs to a designated calibration dot; such frames are
    /// excluded from the "non-calibration" sub-metric.
    pub is_calibration_dot: bool,
}

/// Hierarchical MED report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub scope: Scope,
    pub label: String,
    pub med_cm: f64,
    pub count: usize,
    /// MED over frames not belonging to calibration dots, when any.
    pub non_calibration_med_cm: Option<f64>,
    pub non_calibration_count: usize,
    pub breakdown: Vec<EvalReport>,
}

fn summarize(scope: Scope, label: String, frames: &[&FrameResult]) -> EvalReport {
    let count = frames.len();
    let med_cm = frames.iter().map(|f| f.error_cm).sum::<f64>() / count.max(1) as f64;
    let non_cal: Vec<f64> = frames
        .iter()
        .filter(|f| !f.is_calibration_dot)
        .map(|f| f.error_cm)
        .collect();
    EvalReport {
        scope,
        label,
        med_cm,
        count,
        non_calibration_med_cm: if non_cal.is_empty() {
            None
        } else {
            Some(non_cal.iter().sum::<f64>() / non_cal.len() as f64)
        },
        non_calibration_count: non_cal.len(),
        breakdown: Vec::new(),
    }
}

fn group_label(frame: &FrameResult, by: GroupBy) -> String {
    match by {
        GroupBy::Split => frame.split.clone(),
        GroupBy::Device => frame.device.clone(),
        GroupBy::User => frame.participant.clone(),
        GroupBy::Frame => frame.key.clone(),
    }
}

fn build_level(scope: Scope, label: String, frames: &[&FrameResult], levels: &[GroupBy]) -> EvalReport {
    let mut node = summarize(scope, label, frames);
    if let Some((&level, rest)) = levels.split_first() {
        let mut groups: BTreeMap<String, Vec<&FrameResult>> = BTreeMap::new();
        for f in frames {
            groups.entry(group_label(f, level)).or_default().push(f);
        }
        node.breakdown = groups
            .into_iter()
            .map(|(label, members)| build_level(level.scope(), label, &members, rest))
            .collect();
    }
    node
}

/// Aggregates per-frame errors into a nested report, grouping by the
/// given levels in order. The root is always the full aggregate.
pub fn build_report(frames: &[FrameResult], levels: &[GroupBy]) -> Result<EvalReport, EvalError> {
    if frames.is_empty() {
        return Err(EvalError::EmptyInput("build_report"));
    }
    let refs: Vec<&FrameResult> = frames.iter().collect();
    Ok(build_level(Scope::Aggregate, "all".to_string(), &refs, levels))
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Checks the weighted-mean invariant on every node with children.
    pub fn check_consistency(&self, tol: f64) -> bool {
        if self.breakdown.is_empty() {
            return true;
        }
        let total: usize = self.breakdown.iter().map(|c| c.count).sum();
        let weighted: f64 = self
            .breakdown
            .iter()
            .map(|c| c.med_cm * c.count as f64)
            .sum::<f64>()
            / total as f64;
        total == self.count
            && (weighted - self.med_cm).abs() <= tol
            && self.breakdown.iter().all(|c| c.check_consistency(tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn med_of_identical_points_is_zero() {
        let pts = vec![[1.0f64, 2.0], [3.0, -4.0]];
        assert_eq!(med(&pts, &pts).unwrap(), 0.0);
    }

    #[test]
    fn med_of_three_four_five_triangle() {
        let preds = [[0.0f64, 0.0]];
        let truth = [[3.0f64, 4.0]];
        assert_eq!(med(&preds, &truth).unwrap(), 5.0);
    }

    #[test]
    fn med_averages_pairs() {
        let preds = [[0.0f64, 0.0], [1.0, 1.0]];
        let truth = [[3.0f64, 4.0], [1.0, 1.0]];
        assert_eq!(med(&preds, &truth).unwrap(), 2.5);
    }

    #[test]
    fn med_rejects_empty_and_mismatched() {
        assert!(matches!(
            med::<f64>(&[], &[]),
            Err(EvalError::EmptyInput(_))
        ));
        assert!(matches!(
            med(&[[0.0f64, 0.0]], &[[0.0f64, 0.0], [1.0, 1.0]]),
            Err(EvalError::ShapeMismatch { .. })
        ));
    }

    fn frame(key: &str, user: &str, err: f64) -> FrameResult {
        FrameResult {
            key: key.to_string(),
            participant: user.to_string(),
            device: "iPhone 6".to_string(),
            split: "test".to_string(),
            dot_id: 0,
            error_cm: err,
            is_calibration_dot: false,
        }
    }

    #[test]
    fn single_group_report_equals_med() {
        let frames = vec![frame("a/0", "a", 1.0), frame("a/1", "a", 3.0)];
        let report = build_report(&frames, &[GroupBy::User]).unwrap();
        assert_eq!(report.med_cm, 2.0);
        assert_eq!(report.count, 2);
    }

    #[test]
    fn weighted_mean_of_uneven_groups() {
        // Groups of sizes 1 and 3 with MEDs 4 and 2 aggregate to 2.5.
        let frames = vec![
            frame("a/0", "a", 4.0),
            frame("b/0", "b", 2.0),
            frame("b/1", "b", 2.0),
            frame("b/2", "b", 2.0),
        ];
        let report = build_report(&frames, &[GroupBy::User]).unwrap();
        assert_eq!(report.med_cm, 2.5);
        assert_eq!(report.breakdown.len(), 2);
        assert!(report.check_consistency(1e-9));
    }

    #[test]
    fn grouping_matches_brute_force_regroup() {
        let mut frames = Vec::new();
        for u in 0..5 {
            for f in 0..7 {
                let mut fr = frame(&format!("u{u}/{f}"), &format!("u{u}"), (u * 7 + f) as f64 * 0.1);
                fr.split = if u < 3 { "train" } else { "test" }.to_string();
                frames.push(fr);
            }
        }
        let report = build_report(&frames, &[GroupBy::Split, GroupBy::User]).unwrap();
        assert!(report.check_consistency(1e-9));

        // Independent groupby oracle.
        let mut by_split: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for f in &frames {
            by_split.entry(f.split.as_str()).or_default().push(f.error_cm);
        }
        for child in &report.breakdown {
            let oracle = &by_split[child.label.as_str()];
            let expect = oracle.iter().sum::<f64>() / oracle.len() as f64;
            assert!((child.med_cm - expect).abs() < 1e-12);
            assert_eq!(child.count, oracle.len());
        }
    }

    #[test]
    fn non_calibration_submetric_excludes_calibration_dots() {
        let mut frames = vec![frame("a/0", "a", 1.0), frame("a/1", "a", 5.0)];
        frames[1].is_calibration_dot = true;
        let report = build_report(&frames, &[]).unwrap();
        assert_eq!(report.med_cm, 3.0);
        assert_eq!(report.non_calibration_med_cm, Some(1.0));
        assert_eq!(report.non_calibration_count, 1);
    }
}
