//! Dataset ingestion: GazeCapture-style participant directories in,
//! validated JSON Lines manifest out.
//!
//! The adapter follows the public GazeCapture layout: one directory per
//! participant holding per-frame JSON sidecar arrays plus a `frames/`
//! directory of images; the `gazecapture` adapter documents the exact
//! field-level assumptions. A manifest written by [`Manifest::save`] is the only
//! input every downstream module consumes, so non-GazeCapture data can
//! enter the pipeline by producing that file directly.

mod gazecapture;
mod manifest;

pub use gazecapture::{build_manifest, parse_participant};
pub use manifest::{validate, ValidationReport, Violation, ViolationKind};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ground-truth gaze point in centimeters, camera at the origin.
///
/// `x_cm` increases rightward and `y_cm` downward in the portrait device
/// frame, matching the dataset's camera-relative convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub x_cm: f64,
    pub y_cm: f64,
}

impl GazePoint {
    pub fn new(x_cm: f64, y_cm: f64) -> Self {
        GazePoint { x_cm, y_cm }
    }

    pub fn is_finite(&self) -> bool {
        self.x_cm.is_finite() && self.y_cm.is_finite()
    }
}

/// Axis-aligned rectangle in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl PixelRect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        PixelRect { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Rectangle grown by `factor` of its size around its center.
    pub fn inflated(&self, factor: f64) -> PixelRect {
        let dw = self.w * factor;
        let dh = self.h * factor;
        PixelRect {
            x: self.x - dw / 2.0,
            y: self.y - dh / 2.0,
            w: self.w + dw,
            h: self.h + dh,
        }
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px <= self.x + self.w && py >= self.y && py <= self.y + self.h
    }

    pub fn within_bounds(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

/// Device orientation at capture time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Portrait,
    PortraitUpsideDown,
    LandscapeLeft,
    LandscapeRight,
}

/// Inner and outer eye-corner landmarks, absolute pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeCorners {
    pub left_inner: [f64; 2],
    pub left_outer: [f64; 2],
    pub right_inner: [f64; 2],
    pub right_outer: [f64; 2],
}

/// One captured frame and everything downstream modules need to know
/// about it.
///
/// `image_width`/`image_height` and `dataset_label` are adapter
/// extensions: the first pair records the decoded image header so
/// validation can bounds-check boxes without re-reading files, and the
/// label carries the dataset's own train/val/test tag when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub participant_id: String,
    pub frame_index: u32,
    /// Path of the frame image, relative to the manifest's source root.
    pub image_path: String,
    pub gaze: GazePoint,
    /// Index of the on-screen stimulus dot this frame belongs to.
    pub dot_id: i64,
    pub face_box: PixelRect,
    pub left_eye_box: PixelRect,
    pub right_eye_box: PixelRect,
    #[serde(default)]
    pub eye_corners: Option<EyeCorners>,
    pub device_model: String,
    pub orientation: Orientation,
    pub face_valid: bool,
    pub eyes_valid: bool,
    #[serde(default)]
    pub image_width: Option<u32>,
    #[serde(default)]
    pub image_height: Option<u32>,
    #[serde(default)]
    pub dataset_label: Option<String>,
}

impl FrameRecord {
    /// Stable key `"<participant_id>/<frame_index>"` used by split
    /// assignments and reports.
    pub fn key(&self) -> String {
        format!("{}/{}", self.participant_id, self.frame_index)
    }
}

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Ordered collection of frame records plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<FrameRecord>,
    pub source_root: PathBuf,
    pub schema_version: u32,
}

impl Manifest {
    pub fn new(mut records: Vec<FrameRecord>, source_root: PathBuf) -> Self {
        records.sort_by(|a, b| {
            (a.participant_id.as_str(), a.frame_index)
                .cmp(&(b.participant_id.as_str(), b.frame_index))
        });
        Manifest {
            records,
            source_root,
            schema_version: MANIFEST_SCHEMA_VERSION,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Participant ids in manifest order, deduplicated.
    pub fn participants(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.participant_id.as_str()) {
                out.push(&r.participant_id);
            }
        }
        out.dedup();
        out
    }
}

/// Errors raised while parsing participant directories or manifests.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("participant {participant}: missing sidecar file {file}")]
    MissingSidecar { participant: String, file: String },
    #[error("{file}: malformed JSON at line {line}, column {column} (byte offset {byte_offset})")]
    MalformedJson {
        file: String,
        line: usize,
        column: usize,
        byte_offset: usize,
    },
    #[error(
        "participant {participant}: {file} has {got} entries for field {field}, expected {expected}"
    )]
    LengthMismatch {
        participant: String,
        file: String,
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("{file}: invalid value: {detail}")]
    InvalidValue { file: String, detail: String },
    #[error("manifest {file}: line {line}: {detail}")]
    MalformedManifest {
        file: String,
        line: usize,
        detail: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }
}
