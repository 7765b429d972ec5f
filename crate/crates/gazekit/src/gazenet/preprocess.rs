//! Eye-crop preprocessing.
//!
//! For each eye a square window centered at the midpoint of the inner
//! and outer corners, with side 1.5x the corner distance, is bilinearly
//! resized to `crop_size` and scaled from [0, 255] to [-1, 1]. Pixels
//! outside the image read as zero. The left crop is mirrored
//! horizontally so both eyes share one tower; left corner coordinates
//! are mirrored to match.

use std::path::Path;

use image::RgbImage;

use crate::ingest::{EyeCorners, FrameRecord};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

use super::GazeNetError;

/// One frame's network inputs: two normalized crops plus the
/// [0, 1]-normalized corner vector
/// `[left_inner_xy, left_outer_xy, right_inner_xy, right_outer_xy]`.
#[derive(Debug, Clone)]
pub struct EyeInputs<T> {
    pub left_crop: Tensor<T>,
    pub right_crop: Tensor<T>,
    pub corners: [T; 8],
}

/// Eye corners for a record: the landmark sidecar when present,
/// otherwise eye-box edge midpoints with "inner" chosen as the edge
/// nearer the midpoint between the two eye centers.
pub fn resolve_corners(record: &FrameRecord) -> EyeCorners {
    if let Some(corners) = record.eye_corners {
        return corners;
    }
    let (lcx, lcy) = record.left_eye_box.center();
    let (rcx, rcy) = record.right_eye_box.center();
    let mid_x = (lcx + rcx) / 2.0;
    let edges = |b: &crate::ingest::PixelRect| ([b.x, b.y + b.h / 2.0], [b.x + b.w, b.y + b.h / 2.0]);
    let pick = |b: &crate::ingest::PixelRect| {
        let (left_edge, right_edge) = edges(b);
        if (left_edge[0] - mid_x).abs() <= (right_edge[0] - mid_x).abs() {
            (left_edge, right_edge) // inner, outer
        } else {
            (right_edge, left_edge)
        }
    };
    let (li, lo) = pick(&record.left_eye_box);
    let (ri, ro) = pick(&record.right_eye_box);
    let _ = (lcy, rcy);
    EyeCorners {
        left_inner: li,
        left_outer: lo,
        right_inner: ri,
        right_outer: ro,
    }
}

/// Bilinear sample with zero padding outside the image.
fn sample(image: &RgbImage, x: f64, y: f64, channel: usize) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let fetch = |ix: f64, iy: f64| -> f64 {
        if ix < 0.0 || iy < 0.0 || ix >= image.width() as f64 || iy >= image.height() as f64 {
            0.0
        } else {
            image.get_pixel(ix as u32, iy as u32)[channel] as f64
        }
    };
    let v00 = fetch(x0, y0);
    let v10 = fetch(x0 + 1.0, y0);
    let v01 = fetch(x0, y0 + 1.0);
    let v11 = fetch(x0 + 1.0, y0 + 1.0);
    v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy
}

/// Extracts one normalized crop; geometry per the module contract.
fn extract_crop<T: Scalar>(
    image: &RgbImage,
    inner: [f64; 2],
    outer: [f64; 2],
    crop_size: usize,
) -> Result<Tensor<T>, GazeNetError> {
    let distance = ((inner[0] - outer[0]).powi(2) + (inner[1] - outer[1]).powi(2)).sqrt();
    if distance < 4.0 {
        return Err(GazeNetError::DegenerateCrop { distance });
    }
    let side = 1.5 * distance;
    let cx = (inner[0] + outer[0]) / 2.0;
    let cy = (inner[1] + outer[1]) / 2.0;
    let left = cx - side / 2.0;
    let top = cy - side / 2.0;
    let step = side / crop_size as f64;

    let mut out = Tensor::zeros(&[crop_size, crop_size, 3]);
    let data = out.data_mut();
    for i in 0..crop_size {
        let sy = top + (i as f64 + 0.5) * step - 0.5;
        for j in 0..crop_size {
            let sx = left + (j as f64 + 0.5) * step - 0.5;
            for c in 0..3 {
                let v = sample(image, sx, sy, c) / 127.5 - 1.0;
                data[(i * crop_size + j) * 3 + c] = T::from_config(v);
            }
        }
    }
    Ok(out)
}

/// Horizontal mirror of an `[s, s, 3]` crop; exact involution.
pub(crate) fn mirror_horizontal<T: Scalar>(crop: &Tensor<T>) -> Tensor<T> {
    let s = crop.shape()[0];
    let mut out = Tensor::zeros(crop.shape());
    let src = crop.data();
    let dst = out.data_mut();
    for i in 0..s {
        for j in 0..s {
            let a = (i * s + j) * 3;
            let b = (i * s + (s - 1 - j)) * 3;
            dst[a..a + 3].copy_from_slice(&src[b..b + 3]);
        }
    }
    out
}

/// Preprocesses a decoded frame into network inputs.
pub fn preprocess<T: Scalar>(
    record: &FrameRecord,
    image: &RgbImage,
    crop_size: usize,
) -> Result<EyeInputs<T>, GazeNetError> {
    let corners = resolve_corners(record);
    let right_crop = extract_crop(image, corners.right_inner, corners.right_outer, crop_size)?;
    let left_raw = extract_crop(image, corners.left_inner, corners.left_outer, crop_size)?;
    let left_crop = mirror_horizontal(&left_raw);

    let w = image.width() as f64;
    let h = image.height() as f64;
    // Left-eye x coordinates are mirrored consistently with the crop flip.
    let norm = [
        (w - corners.left_inner[0]) / w,
        corners.left_inner[1] / h,
        (w - corners.left_outer[0]) / w,
        corners.left_outer[1] / h,
        corners.right_inner[0] / w,
        corners.right_inner[1] / h,
        corners.right_outer[0] / w,
        corners.right_outer[1] / h,
    ];
    let mut corners_t = [T::zero(); 8];
    for (slot, v) in corners_t.iter_mut().zip(norm) {
        *slot = T::from_config(v);
    }
    Ok(EyeInputs {
        left_crop,
        right_crop,
        corners: corners_t,
    })
}

/// Loads, decodes and preprocesses the record's image under `root`.
pub fn preprocess_file<T: Scalar>(
    record: &FrameRecord,
    root: &Path,
    crop_size: usize,
) -> Result<EyeInputs<T>, GazeNetError> {
    let path = root.join(&record.image_path);
    let image = image::open(&path)
        .map_err(|e| GazeNetError::DecodeError {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?
        .to_rgb8();
    preprocess(record, &image, crop_size)
}
