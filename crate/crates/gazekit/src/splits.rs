//! Frame filters and the two train/validation/test split strategies.
//!
//! The MIT split keeps every participant in exactly one split; the
//! Google split partitions each participant's distinct stimulus dots
//! across all three splits so every participant appears everywhere, one
//! dot never straddling two splits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Manifest, Orientation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitId {
    Train,
    Validation,
    Test,
}

impl SplitId {
    pub const ALL: [SplitId; 3] = [SplitId::Train, SplitId::Validation, SplitId::Test];

    pub fn name(&self) -> &'static str {
        match self {
            SplitId::Train => "train",
            SplitId::Validation => "validation",
            SplitId::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Mit,
    Google,
}

/// Frame filters; enabled predicates compose by conjunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub require_face_valid: bool,
    pub require_eyes_valid: bool,
    pub mobile_only: bool,
    pub portrait_only: bool,
    /// Device-name substrings treated as phones by `mobile_only`.
    pub phone_markers: Vec<String>,
    /// Device-name substrings treated as known non-phones (excluded
    /// silently rather than reported as unknown).
    pub tablet_markers: Vec<String>,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            require_face_valid: false,
            require_eyes_valid: false,
            mobile_only: false,
            portrait_only: false,
            phone_markers: vec!["iPhone".to_string(), "iPod".to_string()],
            tablet_markers: vec!["iPad".to_string()],
        }
    }
}

/// Result of [`apply_filters`]: the surviving subsequence plus the
/// device models that matched neither list (their frames are excluded
/// and reported, not fatal).
#[derive(Debug)]
pub struct FilterOutcome {
    pub manifest: Manifest,
    pub unknown_devices: BTreeMap<String, usize>,
}

/// Keeps the subsequence of records satisfying all enabled predicates;
/// order is preserved.
pub fn apply_filters(manifest: &Manifest, spec: &FilterSpec) -> FilterOutcome {
    let mut unknown_devices: BTreeMap<String, usize> = BTreeMap::new();
    let records = manifest
        .records
        .iter()
        .filter(|r| {
            if spec.require_face_valid && !r.face_valid {
                return false;
            }
            if spec.require_eyes_valid && !r.eyes_valid {
                return false;
            }
            if spec.portrait_only && r.orientation != Orientation::Portrait {
                return false;
            }
            if spec.mobile_only {
                let is_phone = spec.phone_markers.iter().any(|m| r.device_model.contains(m));
                if !is_phone {
                    let is_tablet =
                        spec.tablet_markers.iter().any(|m| r.device_model.contains(m));
                    if !is_tablet {
                        *unknown_devices.entry(r.device_model.clone()).or_insert(0) += 1;
                    }
                    return false;
                }
            }
            true
        })
        .cloned()
        .collect();
    FilterOutcome {
        manifest: Manifest {
            records,
            source_root: manifest.source_root.clone(),
            schema_version: manifest.schema_version,
        },
        unknown_devices,
    }
}

/// Per-participant split labels for the MIT strategy.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Roster {
    pub assignment: BTreeMap<String, SplitId>,
}

impl Roster {
    /// Recovers the dataset's own split labels from `dataset_label`
    /// fields ("train" / "val" / "test"). Participants without a label
    /// are omitted.
    pub fn from_manifest(manifest: &Manifest) -> Roster {
        let mut assignment = BTreeMap::new();
        for r in &manifest.records {
            if let Some(label) = &r.dataset_label {
                let split = match label.as_str() {
                    "train" => Some(SplitId::Train),
                    "val" | "validation" => Some(SplitId::Validation),
                    "test" => Some(SplitId::Test),
                    _ => None,
                };
                if let Some(split) = split {
                    assignment.insert(r.participant_id.clone(), split);
                }
            }
        }
        Roster { assignment }
    }

    /// Seeded random roster with the published participant proportions
    /// (1081 : 45 : 121), for synthetic data without dataset labels.
    pub fn seeded_random(participants: &[&str], seed: u64) -> Roster {
        const WEIGHTS: [f64; 3] = [1081.0, 45.0, 121.0];
        let total: f64 = WEIGHTS.iter().sum();
        let mut ids: Vec<&str> = participants.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let n = ids.len();
        let quota = |w: f64| ((w / total) * n as f64).round() as usize;
        let n_val = quota(WEIGHTS[1]).max(usize::from(n >= 3));
        let n_test = quota(WEIGHTS[2]).max(usize::from(n >= 3));
        let mut assignment = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            let split = if i < n_val {
                SplitId::Validation
            } else if i < n_val + n_test {
                SplitId::Test
            } else {
                SplitId::Train
            };
            assignment.insert(id.to_string(), split);
        }
        Roster { assignment }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub participants: usize,
    pub frames: usize,
}

/// Maps every manifest frame to exactly one split under a named strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub strategy: SplitStrategy,
    pub seed: u64,
    #[serde(default)]
    pub ratios: Option<[f64; 3]>,
    /// Frame key (`participant/frame_index`) to split.
    pub assignment: BTreeMap<String, SplitId>,
    pub counts: BTreeMap<SplitId, SplitCounts>,
    /// Participants assigned train-only because they had too few
    /// distinct dots to populate all three splits (Google strategy).
    #[serde(default)]
    pub train_only_participants: Vec<String>,
}

impl SplitAssignment {
    pub fn split_of(&self, key: &str) -> Option<SplitId> {
        self.assignment.get(key).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assignment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("participant {0} is not covered by the roster")]
    UnassignedParticipant(String),
    #[error("split ratios {0:?} must be positive and sum to 1 within 1e-9")]
    BadRatios([f64; 3]),
    #[error("manifest is empty")]
    EmptyManifest,
}

fn count_splits(
    manifest: &Manifest,
    assignment: &BTreeMap<String, SplitId>,
) -> BTreeMap<SplitId, SplitCounts> {
    let mut frames: BTreeMap<SplitId, usize> = BTreeMap::new();
    let mut participants: BTreeMap<SplitId, BTreeSet<&str>> = BTreeMap::new();
    for r in &manifest.records {
        if let Some(&split) = assignment.get(&r.key()) {
            *frames.entry(split).or_insert(0) += 1;
            participants
                .entry(split)
                .or_default()
                .insert(r.participant_id.as_str());
        }
    }
    SplitId::ALL
        .iter()
        .map(|&s| {
            (
                s,
                SplitCounts {
                    participants: participants.get(&s).map_or(0, BTreeSet::len),
                    frames: frames.get(&s).copied().unwrap_or(0),
                },
            )
        })
        .collect()
}

/// Participant-disjoint split: every frame inherits its participant's
/// roster label.
pub fn mit_split(manifest: &Manifest, roster: &Roster) -> Result<SplitAssignment, SplitError> {
    let mut assignment = BTreeMap::new();
    for r in &manifest.records {
        let split = roster
            .assignment
            .get(&r.participant_id)
            .copied()
            .ok_or_else(|| SplitError::UnassignedParticipant(r.participant_id.clone()))?;
        assignment.insert(r.key(), split);
    }
    let counts = count_splits(manifest, &assignment);
    Ok(SplitAssignment {
        strategy: SplitStrategy::Mit,
        seed: 0,
        ratios: None,
        assignment,
        counts,
        train_only_participants: Vec::new(),
    })
}

/// Default Google-split ratios, derived from the published per-split
/// frame totals 366,940 / 50,946 / 83,849.
pub const GOOGLE_SPLIT_RATIOS: [f64; 3] = [0.731, 0.102, 0.167];

/// Stable per-participant sub-seed so the dot shuffle does not depend
/// on participant iteration order.
fn participant_seed(seed: u64, participant: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in participant.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed
}

/// Largest-remainder partition of `n` items into quotas proportional to
/// `ratios`. Guarantees every part is nonempty when `n >= parts`.
fn largest_remainder(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut remainders = [0f64; 3];
    let mut assigned = 0;
    for i in 0..3 {
        let quota = ratios[i] * n as f64;
        counts[i] = quota.floor() as usize;
        remainders[i] = quota - quota.floor();
        assigned += counts[i];
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].partial_cmp(&remainders[a]).unwrap());
    let mut leftover = n - assigned;
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    // Every split gets at least one dot when feasible; steal from the
    // largest part otherwise.
    if n >= 3 {
        for i in 0..3 {
            if counts[i] == 0 {
                let largest = (0..3).max_by_key(|&j| counts[j]).unwrap();
                counts[largest] -= 1;
                counts[i] += 1;
            }
        }
    }
    counts
}

/// Per-dot split: each participant's distinct dots are shuffled with the
/// seeded generator and partitioned by the ratios; all frames of a dot
/// follow their dot. Participants with fewer than 3 distinct dots are
/// assigned train-only and reported.
pub fn google_split(
    manifest: &Manifest,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    if ratios.iter().any(|&r| r <= 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SplitError::BadRatios(ratios));
    }

    let mut dots_by_participant: BTreeMap<&str, BTreeSet<i64>> = BTreeMap::new();
    for r in &manifest.records {
        dots_by_participant
            .entry(r.participant_id.as_str())
            .or_default()
            .insert(r.dot_id);
    }

    let mut dot_split: BTreeMap<(&str, i64), SplitId> = BTreeMap::new();
    let mut train_only = Vec::new();
    for (participant, dots) in &dots_by_participant {
        let mut dots: Vec<i64> = dots.iter().copied().collect();
        if dots.len() < 3 {
            train_only.push(participant.to_string());
            for d in dots {
                dot_split.insert((participant, d), SplitId::Train);
            }
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(participant_seed(seed, participant));
        dots.shuffle(&mut rng);
        let counts = largest_remainder(dots.len(), &ratios);
        let mut cursor = 0;
        for (split, &take) in SplitId::ALL.iter().zip(counts.iter()) {
            for &d in &dots[cursor..cursor + take] {
                dot_split.insert((participant, d), *split);
            }
            cursor += take;
        }
    }

    let mut assignment = BTreeMap::new();
    for r in &manifest.records {
        let split = dot_split[&(r.participant_id.as_str(), r.dot_id)];
        assignment.insert(r.key(), split);
    }
    let counts = count_splits(manifest, &assignment);
    Ok(SplitAssignment {
        strategy: SplitStrategy::Google,
        seed,
        ratios: Some(ratios),
        assignment,
        counts,
        train_only_participants: train_only,
    })
}

/// Per-split participant/frame counts and per-device frame histograms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsReport {
    pub strategy: SplitStrategy,
    pub seed: u64,
    pub per_split: BTreeMap<SplitId, SplitStats>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SplitStats {
    pub participants: usize,
    pub frames: usize,
    pub device_histogram: BTreeMap<String, usize>,
}

pub fn split_stats(assignment: &SplitAssignment, manifest: &Manifest) -> StatsReport {
    let mut per_split: BTreeMap<SplitId, SplitStats> = SplitId::ALL
        .iter()
        .map(|&s| (s, SplitStats::default()))
        .collect();
    let mut participants: BTreeMap<SplitId, BTreeSet<&str>> = BTreeMap::new();
    for r in &manifest.records {
        if let Some(split) = assignment.split_of(&r.key()) {
            let stats = per_split.get_mut(&split).unwrap();
            stats.frames += 1;
            *stats
                .device_histogram
                .entry(r.device_model.clone())
                .or_insert(0) += 1;
            participants
                .entry(split)
                .or_default()
                .insert(r.participant_id.as_str());
        }
    }
    for (split, stats) in per_split.iter_mut() {
        stats.participants = participants.get(split).map_or(0, BTreeSet::len);
    }
    StatsReport {
        strategy: assignment.strategy,
        seed: assignment.seed,
        per_split,
    }
}

impl StatsReport {
    /// Aligned-text table: one row per split plus per-device breakdown.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>14} {:>12}\n",
            "split", "participants", "frames"
        ));
        for (split, stats) in &self.per_split {
            out.push_str(&format!(
                "{:<12} {:>14} {:>12}\n",
                split.name(),
                stats.participants,
                stats.frames
            ));
        }
        out.push('\n');
        out.push_str(&format!("{:<12} {:<24} {:>12}\n", "split", "device", "frames"));
        for (split, stats) in &self.per_split {
            for (device, frames) in &stats.device_histogram {
                out.push_str(&format!(
                    "{:<12} {:<24} {:>12}\n",
                    split.name(),
                    device,
                    frames
                ));
            }
        }
        out
    }
}
