//! Adapter for the public GazeCapture directory layout.
//!
//! Assumed per-participant files, all indexed by frame:
//!
//! - `frames.json` — array of image filenames under `frames/`; the
//!   numeric filename stem is the frame index.
//! - `appleFace.json` — `X`, `Y`, `W`, `H`, `IsValid` arrays; face box in
//!   image pixels.
//! - `appleLeftEye.json`, `appleRightEye.json` — same fields; eye boxes
//!   are relative to the face box top-left corner and are converted to
//!   absolute image coordinates here. `eyes_valid` requires both.
//! - `dotInfo.json` — `DotNum` (stimulus dot index), `XCam`, `YCam`
//!   (ground-truth gaze in cm, camera origin).
//! - `screen.json` — `Orientation` array: 1 portrait, 2 portrait upside
//!   down, 3 landscape left, 4 landscape right.
//! - `info.json` — `DeviceName`, optional `Dataset` split label.
//! - `landmarks.json` (optional) — one entry per frame, `null` or eight
//!   numbers `[left_inner_x, left_inner_y, left_outer_x, left_outer_y,
//!   right_inner_x, right_inner_y, right_outer_x, right_outer_y]` in
//!   absolute image pixels. Frames without landmarks keep
//!   `eye_corners = None`; consumers fall back to eye-box corner proxies.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use super::{
    EyeCorners, FrameRecord, GazePoint, IngestError, Manifest, Orientation, PixelRect,
};

fn read_json(dir: &Path, participant: &str, name: &str) -> Result<Value, IngestError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(IngestError::MissingSidecar {
            participant: participant.to_string(),
            file: name.to_string(),
        });
    }
    let text = fs::read_to_string(&path).map_err(|e| IngestError::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        IngestError::MalformedJson {
            file: path.display().to_string(),
            line,
            column,
            byte_offset: byte_offset(&text, line, column),
        }
    })
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    offset
}

fn field_array<'v>(
    value: &'v Value,
    participant: &str,
    file: &str,
    field: &str,
    expected: usize,
) -> Result<&'v [Value], IngestError> {
    let arr = value
        .get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::InvalidValue {
            file: file.to_string(),
            detail: format!("missing array field {field}"),
        })?;
    if arr.len() != expected {
        return Err(IngestError::LengthMismatch {
            participant: participant.to_string(),
            file: file.to_string(),
            field: field.to_string(),
            expected,
            got: arr.len(),
        });
    }
    Ok(arr)
}

fn as_f64(v: &Value, file: &str) -> Result<f64, IngestError> {
    v.as_f64().ok_or_else(|| IngestError::InvalidValue {
        file: file.to_string(),
        detail: format!("expected number, got {v}"),
    })
}

fn as_bool(v: &Value, file: &str) -> Result<bool, IngestError> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) => Ok(n.as_f64().unwrap_or(0.0) != 0.0),
        other => Err(IngestError::InvalidValue {
            file: file.to_string(),
            detail: format!("expected boolean flag, got {other}"),
        }),
    }
}

struct BoxSidecar {
    rects: Vec<PixelRect>,
    valid: Vec<bool>,
}

fn parse_box_sidecar(
    dir: &Path,
    participant: &str,
    name: &str,
    frames: usize,
) -> Result<BoxSidecar, IngestError> {
    let value = read_json(dir, participant, name)?;
    let xs = field_array(&value, participant, name, "X", frames)?;
    let ys = field_array(&value, participant, name, "Y", frames)?;
    let ws = field_array(&value, participant, name, "W", frames)?;
    let hs = field_array(&value, participant, name, "H", frames)?;
    let valid = field_array(&value, participant, name, "IsValid", frames)?;
    let mut rects = Vec::with_capacity(frames);
    let mut flags = Vec::with_capacity(frames);
    for i in 0..frames {
        rects.push(PixelRect::new(
            as_f64(&xs[i], name)?,
            as_f64(&ys[i], name)?,
            as_f64(&ws[i], name)?,
            as_f64(&hs[i], name)?,
        ));
        flags.push(as_bool(&valid[i], name)?);
    }
    Ok(BoxSidecar {
        rects,
        valid: flags,
    })
}

fn orientation_from_code(code: f64, file: &str) -> Result<Orientation, IngestError> {
    match code as i64 {
        1 => Ok(Orientation::Portrait),
        2 => Ok(Orientation::PortraitUpsideDown),
        3 => Ok(Orientation::LandscapeLeft),
        4 => Ok(Orientation::LandscapeRight),
        other => Err(IngestError::InvalidValue {
            file: file.to_string(),
            detail: format!("orientation code {other} outside 1..=4"),
        }),
    }
}

/// Parses one participant directory into frame records, ordered by frame
/// index. The directory name is the participant id.
pub fn parse_participant(dir: &Path) -> Result<Vec<FrameRecord>, IngestError> {
    let participant = dir
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_default();

    let frames_value = read_json(dir, &participant, "frames.json")?;
    let frame_names: Vec<String> = frames_value
        .as_array()
        .ok_or_else(|| IngestError::InvalidValue {
            file: "frames.json".to_string(),
            detail: "expected a JSON array of filenames".to_string(),
        })?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| IngestError::InvalidValue {
                    file: "frames.json".to_string(),
                    detail: format!("expected string entry, got {v}"),
                })
        })
        .collect::<Result<_, _>>()?;
    let n = frame_names.len();

    let face = parse_box_sidecar(dir, &participant, "appleFace.json", n)?;
    let left = parse_box_sidecar(dir, &participant, "appleLeftEye.json", n)?;
    let right = parse_box_sidecar(dir, &participant, "appleRightEye.json", n)?;

    let dots = read_json(dir, &participant, "dotInfo.json")?;
    let dot_num = field_array(&dots, &participant, "dotInfo.json", "DotNum", n)?.to_vec();
    let x_cam = field_array(&dots, &participant, "dotInfo.json", "XCam", n)?.to_vec();
    let y_cam = field_array(&dots, &participant, "dotInfo.json", "YCam", n)?.to_vec();

    let screen = read_json(dir, &participant, "screen.json")?;
    let orientations = field_array(&screen, &participant, "screen.json", "Orientation", n)?.to_vec();

    let info = read_json(dir, &participant, "info.json")?;
    let device_model = info
        .get("DeviceName")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let dataset_label = info
        .get("Dataset")
        .and_then(Value::as_str)
        .map(str::to_string);

    // Optional landmark sidecar; absent file means no corners anywhere.
    let landmarks: Option<Vec<Value>> = if dir.join("landmarks.json").is_file() {
        let value = read_json(dir, &participant, "landmarks.json")?;
        let arr = value
            .as_array()
            .ok_or_else(|| IngestError::InvalidValue {
                file: "landmarks.json".to_string(),
                detail: "expected a JSON array".to_string(),
            })?
            .clone();
        if arr.len() != n {
            return Err(IngestError::LengthMismatch {
                participant: participant.clone(),
                file: "landmarks.json".to_string(),
                field: "frames".to_string(),
                expected: n,
                got: arr.len(),
            });
        }
        Some(arr)
    } else {
        None
    };

    let mut records = Vec::with_capacity(n);
    for (i, name) in frame_names.iter().enumerate() {
        let frame_index = name
            .split('.')
            .next()
            .and_then(|stem| stem.parse::<u32>().ok())
            .unwrap_or(i as u32);
        let image_rel = format!("{participant}/frames/{name}");
        let image_abs = dir.join("frames").join(name);
        let dims = image::image_dimensions(&image_abs).ok();

        let face_box = face.rects[i];
        // Eye boxes ship relative to the face box top-left.
        let to_abs = |r: PixelRect| PixelRect::new(face_box.x + r.x, face_box.y + r.y, r.w, r.h);
        let left_eye_box = to_abs(left.rects[i]);
        let right_eye_box = to_abs(right.rects[i]);

        let eye_corners = match &landmarks {
            Some(arr) => match &arr[i] {
                Value::Null => None,
                Value::Array(vals) if vals.len() == 8 => {
                    let mut c = [0.0f64; 8];
                    for (j, v) in vals.iter().enumerate() {
                        c[j] = as_f64(v, "landmarks.json")?;
                    }
                    Some(EyeCorners {
                        left_inner: [c[0], c[1]],
                        left_outer: [c[2], c[3]],
                        right_inner: [c[4], c[5]],
                        right_outer: [c[6], c[7]],
                    })
                }
                other => {
                    return Err(IngestError::InvalidValue {
                        file: "landmarks.json".to_string(),
                        detail: format!("frame {i}: expected null or 8 numbers, got {other}"),
                    })
                }
            },
            None => None,
        };

        records.push(FrameRecord {
            participant_id: participant.clone(),
            frame_index,
            image_path: image_rel,
            gaze: GazePoint::new(
                as_f64(&x_cam[i], "dotInfo.json")?,
                as_f64(&y_cam[i], "dotInfo.json")?,
            ),
            dot_id: as_f64(&dot_num[i], "dotInfo.json")? as i64,
            face_box,
            left_eye_box,
            right_eye_box,
            eye_corners,
            device_model: device_model.clone(),
            orientation: orientation_from_code(
                as_f64(&orientations[i], "screen.json")?,
                "screen.json",
            )?,
            face_valid: face.valid[i],
            eyes_valid: left.valid[i] && right.valid[i],
            image_width: dims.map(|d| d.0),
            image_height: dims.map(|d| d.1),
            dataset_label: dataset_label.clone(),
        });
    }
    records.sort_by_key(|r| r.frame_index);
    Ok(records)
}

/// Parses every participant directory under `root` into one manifest,
/// sorted by `(participant_id, frame_index)`.
///
/// Distinct participant directories are parsed concurrently; the result
/// is deterministic because records are re-sorted afterwards.
pub fn build_manifest(root: &Path) -> Result<Manifest, IngestError> {
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| IngestError::io(root.display().to_string(), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let parsed: Result<Vec<Vec<FrameRecord>>, IngestError> = dirs
        .par_iter()
        .map(|dir| parse_participant(dir))
        .collect();
    let records: Vec<FrameRecord> = parsed?.into_iter().flatten().collect();
    Ok(Manifest::new(records, root.to_path_buf()))
}
