//! Manifest serialization (JSON Lines) and validation.
//!
//! File format: the first line is a header object carrying
//! `schema_version` and `source_root`; every following line is one
//! [`FrameRecord`]. Files that start directly with a record are also
//! accepted (header defaults apply), which is the entry path for
//! non-GazeCapture data prepared by other tools.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use super::{FrameRecord, IngestError, Manifest, MANIFEST_SCHEMA_VERSION};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    source_root: String,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Header {
            schema_version: self.schema_version,
            source_root: self.source_root.display().to_string(),
        };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let file = fs::File::create(path).map_err(|e| IngestError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| IngestError::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn from_jsonl(text: &str, origin: &Path) -> Result<Self, IngestError> {
        let mut records = Vec::new();
        let mut schema_version = MANIFEST_SCHEMA_VERSION;
        let mut source_root = origin
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 {
                if let Ok(header) = serde_json::from_str::<Header>(line) {
                    schema_version = header.schema_version;
                    source_root = header.source_root.into();
                    continue;
                }
            }
            let record: FrameRecord =
                serde_json::from_str(line).map_err(|e| IngestError::MalformedManifest {
                    file: origin.display().to_string(),
                    line: i + 1,
                    detail: e.to_string(),
                })?;
            records.push(record);
        }
        Ok(Manifest {
            records,
            source_root,
            schema_version,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text =
            fs::read_to_string(path).map_err(|e| IngestError::io(path.display().to_string(), e))?;
        Self::from_jsonl(&text, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnresolvedImagePath,
    EyeBoxOutOfBounds,
    CornersOutsideInflatedBox,
    DuplicateKey,
    NonFiniteGaze,
    OrderViolation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub record_key: String,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn path_escapes_root(rel: &str) -> bool {
    let p = Path::new(rel);
    p.is_absolute() || p.components().any(|c| matches!(c, Component::ParentDir))
}

/// Checks manifest invariants without mutating it.
///
/// Violations are report entries, not failures: unresolvable image
/// paths, eye boxes outside the image when `eyes_valid`, corners outside
/// the 25%-inflated eye box, duplicate `(participant, frame)` keys,
/// non-finite gaze, and ordering breaks.
pub fn validate(manifest: &Manifest) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push = |key: String, kind: ViolationKind, message: String| {
        report.violations.push(Violation {
            record_key: key,
            kind,
            message,
        });
    };

    let mut seen = std::collections::BTreeSet::new();
    let mut prev_key: Option<(&str, u32)> = None;
    for record in &manifest.records {
        let key = record.key();

        if path_escapes_root(&record.image_path)
            || !manifest.source_root.join(&record.image_path).is_file()
        {
            push(
                key.clone(),
                ViolationKind::UnresolvedImagePath,
                format!(
                    "{} does not resolve under {}",
                    record.image_path,
                    manifest.source_root.display()
                ),
            );
        }

        if !record.gaze.is_finite() {
            push(
                key.clone(),
                ViolationKind::NonFiniteGaze,
                format!("gaze ({}, {})", record.gaze.x_cm, record.gaze.y_cm),
            );
        }

        if record.eyes_valid {
            if let (Some(w), Some(h)) = (record.image_width, record.image_height) {
                for (side, eye) in [("left", &record.left_eye_box), ("right", &record.right_eye_box)]
                {
                    if !eye.within_bounds(w as f64, h as f64) {
                        push(
                            key.clone(),
                            ViolationKind::EyeBoxOutOfBounds,
                            format!(
                                "{side} eye box ({}, {}, {}, {}) exceeds {w}x{h} image",
                                eye.x, eye.y, eye.w, eye.h
                            ),
                        );
                    }
                }
            }
        }

        if let Some(corners) = &record.eye_corners {
            let checks = [
                ("left_inner", corners.left_inner, &record.left_eye_box),
                ("left_outer", corners.left_outer, &record.left_eye_box),
                ("right_inner", corners.right_inner, &record.right_eye_box),
                ("right_outer", corners.right_outer, &record.right_eye_box),
            ];
            for (name, point, eye_box) in checks {
                if !eye_box.inflated(0.25).contains_point(point[0], point[1]) {
                    push(
                        key.clone(),
                        ViolationKind::CornersOutsideInflatedBox,
                        format!("{name} corner ({}, {}) outside inflated eye box", point[0], point[1]),
                    );
                }
            }
        }

        let this_key = (record.participant_id.as_str(), record.frame_index);
        if !seen.insert(this_key) {
            push(
                key.clone(),
                ViolationKind::DuplicateKey,
                "duplicate (participant_id, frame_index)".to_string(),
            );
        }
        if let Some(prev) = prev_key {
            if prev > this_key {
                push(
                    key.clone(),
                    ViolationKind::OrderViolation,
                    "records not sorted by (participant_id, frame_index)".to_string(),
                );
            }
        }
        prev_key = Some(this_key);
    }
    report
}
