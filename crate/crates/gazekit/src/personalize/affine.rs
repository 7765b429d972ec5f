//! Least-squares similarity transform (scale, rotation, translation)
//! between predicted and true gaze points; closed-form, reflection
//! disallowed by construction.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{to_f64_pair, PersonalizeError};

/// `y = s * R(theta) * p + t` on the gaze plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform<T> {
    pub scale: T,
    /// Rotation in radians, counterclockwise in the (x right, y down)
    /// gaze frame.
    pub rotation: T,
    pub translation: [T; 2],
}

impl<T: Scalar> SimilarityTransform<T> {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: T::one(),
            rotation: T::zero(),
            translation: [T::zero(); 2],
        }
    }

    pub fn apply(&self, p: [T; 2]) -> [T; 2] {
        let (sin, cos) = self.rotation.sin_cos();
        let s = self.scale;
        [
            s * (cos * p[0] - sin * p[1]) + self.translation[0],
            s * (sin * p[0] + cos * p[1]) + self.translation[1],
        ]
    }

    /// Exact inverse; applying then inverting recovers the input.
    pub fn inverse(&self) -> Self {
        let inv_scale = self.scale.recip();
        let (sin, cos) = (-self.rotation).sin_cos();
        let tx = self.translation[0];
        let ty = self.translation[1];
        SimilarityTransform {
            scale: inv_scale,
            rotation: -self.rotation,
            translation: [
                -inv_scale * (cos * tx - sin * ty),
                -inv_scale * (sin * tx + cos * ty),
            ],
        }
    }
}

/// Closed-form orthogonal-Procrustes-with-scale fit minimizing
/// `sum ||s R p + t - y||^2`. The rotation is parametrized directly, so
/// `det(R) = +1` always; reflections cannot occur.
///
/// ```
/// use gazekit::personalize::fit_affine;
///
/// let preds = [[0.0f64, 0.0], [1.0, 0.0], [0.0, 1.0]];
/// let targets = [[1.0f64, -2.0], [2.0, -2.0], [1.0, -1.0]]; // shifted by (1, -2)
/// let t = fit_affine(&preds, &targets).unwrap();
/// assert!((t.scale - 1.0).abs() < 1e-12);
/// assert!((t.translation[0] - 1.0).abs() < 1e-12);
/// ```
pub fn fit_affine<T: Scalar>(
    base_preds: &[[T; 2]],
    targets: &[[T; 2]],
) -> Result<SimilarityTransform<T>, PersonalizeError> {
    let n = base_preds.len();
    if n < 3 || n != targets.len() {
        return Err(PersonalizeError::InsufficientFrames { have: n.min(targets.len()), need: 3 });
    }
    let nf = T::from_usize(n).unwrap();
    let mut pc = [T::zero(); 2];
    let mut yc = [T::zero(); 2];
    for (p, y) in base_preds.iter().zip(targets) {
        pc[0] += p[0];
        pc[1] += p[1];
        yc[0] += y[0];
        yc[1] += y[1];
    }
    for v in pc.iter_mut().chain(yc.iter_mut()) {
        *v /= nf;
    }

    // a = sum(y_hat . p_hat), b = sum(cross(p_hat, y_hat)), both over
    // centered points; norm = sum ||p_hat||^2.
    let mut a = T::zero();
    let mut b = T::zero();
    let mut norm = T::zero();
    for (p, y) in base_preds.iter().zip(targets) {
        let px = p[0] - pc[0];
        let py = p[1] - pc[1];
        let yx = y[0] - yc[0];
        let yy = y[1] - yc[1];
        a = a + yx * px + yy * py;
        b = b + yy * px - yx * py;
        norm = norm + px * px + py * py;
    }
    if norm < T::from_config(1e-18) {
        return Err(PersonalizeError::DegenerateGeometry);
    }
    let rotation = b.atan2(a);
    let scale = (a * a + b * b).sqrt() / norm;
    if scale.is_nan() || scale <= T::zero() {
        return Err(PersonalizeError::DegenerateGeometry);
    }
    let (sin, cos) = rotation.sin_cos();
    let translation = [
        yc[0] - scale * (cos * pc[0] - sin * pc[1]),
        yc[1] - scale * (sin * pc[0] + cos * pc[1]),
    ];
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

/// Applies the transform to every row.
pub fn apply_affine<T: Scalar>(
    transform: &SimilarityTransform<T>,
    preds: &[[T; 2]],
) -> Vec<[f64; 2]> {
    preds
        .iter()
        .map(|p| to_f64_pair(&transform.apply(*p)))
        .collect()
}
