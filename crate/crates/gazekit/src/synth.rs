//! Synthetic dataset generation.
//!
//! Generates desk-scale data in which the gaze point is an analytic
//! function of crop content: the red channel mean encodes the
//! x-coordinate and the green channel mean the y-coordinate, scaled by
//! [`GAZE_CODE_SCALE`], plus pixel noise. Three generators share the
//! encoding:
//!
//! - [`synthetic_manifest`]: records only, for split/filter testing.
//! - [`write_fixture_tree`]: a GazeCapture-style directory tree with PNG
//!   frames, exercising the full ingest/preprocess path.
//! - [`synthetic_prepared`]: in-memory network inputs, skipping file IO
//!   for training tests.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gazenet::{EyeInputs, PreparedDataset, PreparedFrame};
use crate::ingest::{FrameRecord, GazePoint, Manifest, Orientation, PixelRect};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

/// Crop value `v` encodes gaze coordinate `v * GAZE_CODE_SCALE` (with
/// the y-code offset by [`GAZE_Y_CENTER`]).
pub const GAZE_CODE_SCALE: f64 = 8.0;
/// Center of the synthetic y range; the screen sits below the camera.
pub const GAZE_Y_CENTER: f64 = 3.5;

const DEVICES: [&str; 5] = ["iPhone 6", "iPhone 6s", "iPhone 5", "iPhone 5s", "iPhone 4S"];

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub participants: usize,
    pub dots_per_participant: usize,
    pub frames_per_dot: usize,
    pub seed: u64,
    /// Frame image side in pixels (fixture tree only).
    pub image_size: u32,
    /// Uniform pixel-noise amplitude in normalized crop units.
    pub noise: f64,
    /// Write a `landmarks.json` sidecar (fixture tree only).
    pub with_landmarks: bool,
    /// Stamp the dataset's own train/val/test labels into `info.json`.
    pub label_datasets: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            participants: 10,
            dots_per_participant: 10,
            frames_per_dot: 4,
            seed: 0,
            image_size: 64,
            noise: 0.02,
            with_landmarks: false,
            label_datasets: true,
        }
    }
}

fn participant_id(index: usize) -> String {
    format!("{:05}", 500 + index)
}

fn participant_rng(spec: &SynthSpec, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e3779b97f4a7c15) ^ index as u64)
}

/// Dot positions for one participant: x in [-3, 3], y in [0.5, 6.5] cm.
fn dot_positions(spec: &SynthSpec, index: usize) -> Vec<GazePoint> {
    let mut rng = participant_rng(spec, index);
    (0..spec.dots_per_participant)
        .map(|_| GazePoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(0.5..6.5)))
        .collect()
}

fn dataset_label(index: usize) -> &'static str {
    match index % 10 {
        8 => "val",
        9 => "test",
        _ => "train",
    }
}

const FACE_BOX: PixelRect = PixelRect {
    x: 8.0,
    y: 8.0,
    w: 48.0,
    h: 48.0,
};
// Relative to the face box, GazeCapture-style.
const LEFT_EYE_REL: PixelRect = PixelRect {
    x: 28.0,
    y: 12.0,
    w: 16.0,
    h: 10.0,
};
const RIGHT_EYE_REL: PixelRect = PixelRect {
    x: 4.0,
    y: 12.0,
    w: 16.0,
    h: 10.0,
};

/// Records only; image paths do not exist on disk.
pub fn synthetic_manifest(spec: &SynthSpec) -> Manifest {
    let mut records = Vec::new();
    for p in 0..spec.participants {
        let id = participant_id(p);
        let dots = dot_positions(spec, p);
        let mut frame = 0u32;
        for (dot_id, gaze) in dots.iter().enumerate() {
            for _ in 0..spec.frames_per_dot {
                records.push(FrameRecord {
                    participant_id: id.clone(),
                    frame_index: frame,
                    image_path: format!("{id}/frames/{frame:05}.png"),
                    gaze: *gaze,
                    dot_id: dot_id as i64,
                    face_box: FACE_BOX,
                    left_eye_box: PixelRect::new(
                        FACE_BOX.x + LEFT_EYE_REL.x,
                        FACE_BOX.y + LEFT_EYE_REL.y,
                        LEFT_EYE_REL.w,
                        LEFT_EYE_REL.h,
                    ),
                    right_eye_box: PixelRect::new(
                        FACE_BOX.x + RIGHT_EYE_REL.x,
                        FACE_BOX.y + RIGHT_EYE_REL.y,
                        RIGHT_EYE_REL.w,
                        RIGHT_EYE_REL.h,
                    ),
                    eye_corners: None,
                    device_model: DEVICES[p % DEVICES.len()].to_string(),
                    orientation: Orientation::Portrait,
                    face_valid: true,
                    eyes_valid: true,
                    image_width: Some(spec.image_size),
                    image_height: Some(spec.image_size),
                    dataset_label: spec
                        .label_datasets
                        .then(|| dataset_label(p).to_string()),
                });
                frame += 1;
            }
        }
    }
    Manifest::new(records, "synthetic://".into())
}

/// Pixel encoding of a gaze point: the value a crop pixel takes before
/// noise, per channel, in [0, 255].
fn encode_pixel(gaze: &GazePoint, noise_r: f64, noise_g: f64, noise_b: f64) -> [u8; 3] {
    let code_x = gaze.x_cm / GAZE_CODE_SCALE;
    let code_y = (gaze.y_cm - GAZE_Y_CENTER) / GAZE_CODE_SCALE;
    let to_byte = |code: f64, noise: f64| -> u8 {
        (127.5 * (1.0 + code + noise)).round().clamp(0.0, 255.0) as u8
    };
    [
        to_byte(code_x, noise_r),
        to_byte(code_y, noise_g),
        to_byte(0.0, noise_b),
    ]
}

/// Writes a GazeCapture-style fixture tree under `root`: per participant
/// the JSON sidecars plus PNG frames whose color encodes the gaze.
pub fn write_fixture_tree(root: &Path, spec: &SynthSpec) -> std::io::Result<()> {
    for p in 0..spec.participants {
        let id = participant_id(p);
        let dir = root.join(&id);
        fs::create_dir_all(dir.join("frames"))?;
        let dots = dot_positions(spec, p);
        let mut rng = participant_rng(spec, p);

        let total = spec.dots_per_participant * spec.frames_per_dot;
        let mut frames = Vec::with_capacity(total);
        let mut dot_num = Vec::with_capacity(total);
        let mut x_cam = Vec::with_capacity(total);
        let mut y_cam = Vec::with_capacity(total);
        let mut frame = 0u32;
        for (dot_id, gaze) in dots.iter().enumerate() {
            for _ in 0..spec.frames_per_dot {
                let name = format!("{frame:05}.png");
                let img = RgbImage::from_fn(spec.image_size, spec.image_size, |x, y| {
                    // Deterministic zero-mean texture plus seeded noise.
                    let tex = (((x * 7 + y * 13) % 16) as f64 - 7.5) / 127.5 * 2.0;
                    let n = spec.noise;
                    Rgb(encode_pixel(
                        gaze,
                        rng.gen_range(-n..n),
                        rng.gen_range(-n..n),
                        rng.gen_range(-n..n) + tex,
                    ))
                });
                img.save(dir.join("frames").join(&name))
                    .map_err(std::io::Error::other)?;
                frames.push(name);
                dot_num.push(dot_id as i64);
                x_cam.push(gaze.x_cm);
                y_cam.push(gaze.y_cm);
                frame += 1;
            }
        }

        let ones = vec![1; total];
        let box_json = |r: &PixelRect| {
            serde_json::json!({
                "X": vec![r.x; total],
                "Y": vec![r.y; total],
                "W": vec![r.w; total],
                "H": vec![r.h; total],
                "IsValid": ones,
            })
        };
        let write = |name: &str, value: serde_json::Value| -> std::io::Result<()> {
            fs::write(dir.join(name), serde_json::to_string(&value).unwrap())
        };
        write("frames.json", serde_json::json!(frames))?;
        write("appleFace.json", box_json(&PixelRect::new(FACE_BOX.x, FACE_BOX.y, FACE_BOX.w, FACE_BOX.h)))?;
        write("appleLeftEye.json", box_json(&LEFT_EYE_REL))?;
        write("appleRightEye.json", box_json(&RIGHT_EYE_REL))?;
        write(
            "dotInfo.json",
            serde_json::json!({"DotNum": dot_num, "XCam": x_cam, "YCam": y_cam}),
        )?;
        write("screen.json", serde_json::json!({"Orientation": vec![1; total]}))?;
        let mut info = serde_json::json!({
            "TotalFrames": total,
            "DeviceName": DEVICES[p % DEVICES.len()],
        });
        if spec.label_datasets {
            info["Dataset"] = serde_json::json!(dataset_label(p));
        }
        write("info.json", info)?;

        if spec.with_landmarks {
            // Corner landmarks at the eye-box edge midpoints, absolute.
            let left = PixelRect::new(
                FACE_BOX.x + LEFT_EYE_REL.x,
                FACE_BOX.y + LEFT_EYE_REL.y,
                LEFT_EYE_REL.w,
                LEFT_EYE_REL.h,
            );
            let right = PixelRect::new(
                FACE_BOX.x + RIGHT_EYE_REL.x,
                FACE_BOX.y + RIGHT_EYE_REL.y,
                RIGHT_EYE_REL.w,
                RIGHT_EYE_REL.h,
            );
            let row = vec![
                left.x,
                left.y + left.h / 2.0,
                left.x + left.w,
                left.y + left.h / 2.0,
                right.x + right.w,
                right.y + right.h / 2.0,
                right.x,
                right.y + right.h / 2.0,
            ];
            write("landmarks.json", serde_json::json!(vec![row; total]))?;
        }
    }
    Ok(())
}

/// In-memory network inputs with the same gaze encoding, one prepared
/// frame per (participant, dot, repeat).
pub fn synthetic_prepared<T: Scalar>(spec: &SynthSpec, crop_size: usize) -> PreparedDataset<T> {
    let mut frames = Vec::new();
    for p in 0..spec.participants {
        let id = participant_id(p);
        let dots = dot_positions(spec, p);
        let mut rng = participant_rng(spec, p).clone();
        let mut frame = 0u32;
        for (dot_id, gaze) in dots.iter().enumerate() {
            for _ in 0..spec.frames_per_dot {
                let code_x = gaze.x_cm / GAZE_CODE_SCALE;
                let code_y = (gaze.y_cm - GAZE_Y_CENTER) / GAZE_CODE_SCALE;
                let gen_crop = |rng: &mut ChaCha8Rng| {
                    let mut data = Vec::with_capacity(crop_size * crop_size * 3);
                    for _ in 0..crop_size * crop_size {
                        data.push(T::from_config(code_x + rng.gen_range(-spec.noise..spec.noise)));
                        data.push(T::from_config(code_y + rng.gen_range(-spec.noise..spec.noise)));
                        data.push(T::from_config(rng.gen_range(-spec.noise..spec.noise)));
                    }
                    Tensor::from_vec(&[crop_size, crop_size, 3], data).unwrap()
                };
                let left_crop = gen_crop(&mut rng);
                let right_crop = gen_crop(&mut rng);
                let mut corners = [T::zero(); 8];
                let nominal = [0.65, 0.4, 0.85, 0.4, 0.25, 0.4, 0.45, 0.4];
                for (c, base) in corners.iter_mut().zip(nominal) {
                    *c = T::from_config(base + rng.gen_range(-0.01..0.01));
                }
                frames.push(PreparedFrame {
                    key: format!("{id}/{frame}"),
                    participant: id.clone(),
                    device: DEVICES[p % DEVICES.len()].to_string(),
                    dot_id: dot_id as i64,
                    inputs: EyeInputs {
                        left_crop,
                        right_crop,
                        corners,
                    },
                    target: [T::from_config(gaze.x_cm), T::from_config(gaze.y_cm)],
                });
                frame += 1;
            }
        }
    }
    PreparedDataset::from_frames(frames)
}
