//! Calibration splits: how one user's frames divide into a fit set and
//! an eval set.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gazenet::FeatureTriple;

use super::PersonalizeError;

/// Number of designated calibration dots.
pub const CALIBRATION_DOT_COUNT: usize = 13;

const MIN_FRAMES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationStrategy {
    /// Seeded shuffle (when `shuffle`) then split at `fit_fraction`.
    RandomRatio,
    /// One seeded-random frame per distinct dot forms the fit set.
    UniqueGroundTruth,
    /// First `fit_fraction` of frames in temporal order fit, rest eval.
    NoShuffle,
    /// Frames of the 13 designated calibration dots fit, all others eval.
    Calibration13,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSplitSpec {
    pub strategy: CalibrationStrategy,
    /// Fraction of frames in the fit set (0.7 and 2/3 are the canonical
    /// choices).
    pub fit_fraction: f64,
    pub shuffle: bool,
    pub seed: u64,
    /// Explicit calibration dots when the dataset marks them; otherwise
    /// the 13 dots farthest from the dot centroid are designated.
    #[serde(default)]
    pub calibration_dots: Option<Vec<i64>>,
}

impl Default for CalibrationSplitSpec {
    fn default() -> Self {
        CalibrationSplitSpec {
            strategy: CalibrationStrategy::RandomRatio,
            fit_fraction: 0.7,
            shuffle: true,
            seed: 0,
            calibration_dots: None,
        }
    }
}

/// Designates calibration dots: the `count` unique dots maximizing
/// distance from the centroid of unique dot positions (ties broken by
/// dot id). Input is any sequence of (dot_id, gaze position) pairs;
/// duplicates collapse to the first position seen.
pub fn peripheral_calibration_dots(dots: &[(i64, [f64; 2])], count: usize) -> Vec<i64> {
    let mut positions: BTreeMap<i64, [f64; 2]> = BTreeMap::new();
    for (dot, position) in dots {
        positions.entry(*dot).or_insert(*position);
    }
    if positions.is_empty() {
        return Vec::new();
    }
    let n = positions.len() as f64;
    let cx = positions.values().map(|p| p[0]).sum::<f64>() / n;
    let cy = positions.values().map(|p| p[1]).sum::<f64>() / n;
    let mut ranked: Vec<(i64, f64)> = positions
        .iter()
        .map(|(&d, p)| (d, (p[0] - cx).powi(2) + (p[1] - cy).powi(2)))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.into_iter().take(count).map(|(d, _)| d).collect()
}

/// Divides one user's frames into (fit, eval) sets. Frames must
/// arrive in temporal order; the split never reorders the eval side.
pub fn build_calibration_split<'a>(
    frames: &'a [FeatureTriple],
    spec: &CalibrationSplitSpec,
) -> Result<(Vec<&'a FeatureTriple>, Vec<&'a FeatureTriple>), PersonalizeError> {
    if frames.len() < MIN_FRAMES {
        return Err(PersonalizeError::InsufficientFrames {
            have: frames.len(),
            need: MIN_FRAMES,
        });
    }
    let n = frames.len();
    let (fit_idx, eval_idx): (Vec<usize>, Vec<usize>) = match spec.strategy {
        CalibrationStrategy::RandomRatio | CalibrationStrategy::NoShuffle => {
            let mut order: Vec<usize> = (0..n).collect();
            if spec.strategy == CalibrationStrategy::RandomRatio && spec.shuffle {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                order.shuffle(&mut rng);
            }
            let n_fit = ((n as f64 * spec.fit_fraction).round() as usize).clamp(1, n - 1);
            (order[..n_fit].to_vec(), order[n_fit..].to_vec())
        }
        CalibrationStrategy::UniqueGroundTruth => {
            let mut by_dot: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (i, f) in frames.iter().enumerate() {
                by_dot.entry(f.dot_id).or_default().push(i);
            }
            if by_dot.len() < 2 {
                return Err(PersonalizeError::MissingCalibrationDots {
                    have: by_dot.len(),
                    need: 2,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut fit = Vec::new();
            for indices in by_dot.values() {
                fit.push(indices[rand::Rng::gen_range(&mut rng, 0..indices.len())]);
            }
            let fit_set: BTreeSet<usize> = fit.iter().copied().collect();
            let eval: Vec<usize> = (0..n).filter(|i| !fit_set.contains(i)).collect();
            (fit, eval)
        }
        CalibrationStrategy::Calibration13 => {
            let dots: BTreeSet<i64> = match &spec.calibration_dots {
                Some(list) => list.iter().copied().collect(),
                None => {
                    let distinct: BTreeSet<i64> = frames.iter().map(|f| f.dot_id).collect();
                    if distinct.len() <= CALIBRATION_DOT_COUNT {
                        return Err(PersonalizeError::MissingCalibrationDots {
                            have: distinct.len(),
                            need: CALIBRATION_DOT_COUNT + 1,
                        });
                    }
                    let pairs: Vec<(i64, [f64; 2])> =
                        frames.iter().map(|f| (f.dot_id, f.truth)).collect();
                    peripheral_calibration_dots(&pairs, CALIBRATION_DOT_COUNT)
                        .into_iter()
                        .collect()
                }
            };
            let fit: Vec<usize> = (0..n).filter(|&i| dots.contains(&frames[i].dot_id)).collect();
            let eval: Vec<usize> = (0..n).filter(|&i| !dots.contains(&frames[i].dot_id)).collect();
            (fit, eval)
        }
    };
    if fit_idx.is_empty() {
        return Err(PersonalizeError::EmptySplitSide("fit"));
    }
    if eval_idx.is_empty() {
        return Err(PersonalizeError::EmptySplitSide("eval"));
    }
    Ok((
        fit_idx.iter().map(|&i| &frames[i]).collect(),
        eval_idx.iter().map(|&i| &frames[i]).collect(),
    ))
}
