//! Epsilon-SVR trained by sequential pairwise optimization of the dual.
//!
//! The dual is solved in the standard 2n-variable lift: theta stacks the
//! positive-part multipliers alpha over the negative-part alpha*, with
//! sign s = +1 for the first block and -1 for the second, objective
//! `1/2 theta' Qbar theta + p' theta` where `Qbar[(u,i),(v,j)] =
//! s_u s_v K_ij` and `p = [eps - y; eps + y]`, subject to `s' theta = 0`
//! and `0 <= theta <= C`. Each iteration picks the maximal violating
//! pair, solves the two-variable subproblem exactly and clips to the
//! box; convergence is declared when the KKT violation `m - M` drops
//! below `tol`. The kernel matrix is cached dense; fit sets top out
//! around a thousand rows, so the O(n^2) cache is cheap.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::PersonalizeError;

/// Feature dimensionality: the network's penultimate width.
pub const FEATURE_DIM: usize = 4;

/// Epsilon sweep covering 0.01 through 1000 logarithmically.
pub const DEFAULT_EPSILON_GRID: [f64; 11] = [
    0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0,
];

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Convergence threshold on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 20.0,
            gamma: 0.6,
            epsilon: 0.1,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// RBF kernel `exp(-gamma * ||a - b||^2)`.
pub fn rbf_kernel<T: Scalar>(a: &[T; FEATURE_DIM], b: &[T; FEATURE_DIM], gamma: T) -> T {
    let mut sq = T::zero();
    for (x, z) in a.iter().zip(b) {
        let d = *x - *z;
        sq += d * d;
    }
    (-gamma * sq).exp()
}

/// One fitted scalar regressor: support rows with their dual
/// coefficients (`beta = alpha - alpha*`) and the bias.
#[derive(Debug, Clone)]
pub struct ScalarSvr<T> {
    pub support: Vec<[T; FEATURE_DIM]>,
    pub coefficients: Vec<T>,
    pub bias: T,
    pub gamma: T,
}

impl<T: Scalar> ScalarSvr<T> {
    pub fn predict(&self, x: &[T; FEATURE_DIM]) -> T {
        let mut acc = self.bias;
        for (sv, &beta) in self.support.iter().zip(&self.coefficients) {
            acc += beta * rbf_kernel(x, sv, self.gamma);
        }
        acc
    }
}

/// Solver diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_violation: f64,
    /// Zero-variance targets collapsed to a bias-only model.
    pub degenerate_targets: bool,
}

/// Two independent scalar SVRs sharing hyperparameters, one per gaze
/// coordinate.
#[derive(Debug, Clone)]
pub struct SvrModel<T> {
    pub x: ScalarSvr<T>,
    pub y: ScalarSvr<T>,
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

/// Solves one epsilon-insensitive dual. Zero-variance targets short-
/// circuit to a constant predictor at the target mean.
pub fn solve_epsilon_svr<T: Scalar>(
    features: &[[T; FEATURE_DIM]],
    targets: &[T],
    params: &SvrParams,
) -> Result<(ScalarSvr<T>, SolveStats), PersonalizeError> {
    let n = targets.len();
    assert_eq!(features.len(), n, "features and targets must align");
    let gamma = T::from_config(params.gamma);

    let spread = targets
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if spread.1 - spread.0 < T::from_config(1e-12) {
        let mean = targets.iter().copied().sum::<T>() / T::from_usize(n).unwrap();
        return Ok((
            ScalarSvr {
                support: Vec::new(),
                coefficients: Vec::new(),
                bias: mean,
                gamma,
            },
            SolveStats {
                iterations: 0,
                final_violation: 0.0,
                degenerate_targets: true,
            },
        ));
    }

    let c = T::from_config(params.c);
    let eps = T::from_config(params.epsilon);
    let tol = T::from_config(params.tol);

    // Dense kernel cache.
    let mut kernel = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = rbf_kernel(&features[i], &features[j], gamma);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }

    // theta[0..n] = alpha (s=+1), theta[n..2n] = alpha* (s=-1).
    let mut theta = vec![T::zero(); 2 * n];
    let mut grad = vec![T::zero(); 2 * n];
    for i in 0..n {
        grad[i] = eps - targets[i];
        grad[n + i] = eps + targets[i];
    }
    let sign = |t: usize| -> T {
        if t < n {
            T::one()
        } else {
            -T::one()
        }
    };

    let mut iterations = 0;
    let mut violation;
    let (final_m, final_mm) = loop {
        // Maximal violating pair over the feasible direction sets.
        let mut m = T::neg_infinity(); // max over I_up of -s*G
        let mut mm = T::infinity(); // min over I_low of -s*G
        let mut i_up = usize::MAX;
        let mut i_low = usize::MAX;
        for t in 0..2 * n {
            let s_pos = t < n;
            let v = -sign(t) * grad[t];
            let in_up = (s_pos && theta[t] < c) || (!s_pos && theta[t] > T::zero());
            let in_low = (!s_pos && theta[t] < c) || (s_pos && theta[t] > T::zero());
            if in_up && v > m {
                m = v;
                i_up = t;
            }
            if in_low && v < mm {
                mm = v;
                i_low = t;
            }
        }
        violation = m - mm;
        if violation <= tol || i_up == usize::MAX || i_low == usize::MAX {
            break (m, mm);
        }
        if iterations >= params.max_iter {
            return Err(PersonalizeError::SolverNonConvergence {
                iterations,
                max_violation: violation.to_f64_lossy(),
            });
        }
        iterations += 1;

        let (i, j) = (i_up, i_low);
        let (ri, rj) = (i % n, j % n);
        let (si, sj) = (sign(i), sign(j));
        // Direction d: theta_i += s_i*lambda, theta_j -= s_j*lambda.
        let g_dir = si * grad[i] - sj * grad[j]; // negative for a violating pair
        let mut curv = kernel[ri * n + ri] + kernel[rj * n + rj]
            - (T::one() + T::one()) * kernel[ri * n + rj];
        if curv <= T::from_config(1e-12) {
            curv = T::from_config(1e-12);
        }
        let mut lambda = -g_dir / curv;
        // Box limits for both coordinates.
        let cap_i = if si > T::zero() { c - theta[i] } else { theta[i] };
        let cap_j = if sj > T::zero() { theta[j] } else { c - theta[j] };
        lambda = lambda.min(cap_i).min(cap_j).max(T::zero());

        theta[i] = (theta[i] + si * lambda).max(T::zero()).min(c);
        theta[j] = (theta[j] - sj * lambda).max(T::zero()).min(c);

        // Rank-two gradient update: G_t += s_t*lambda*(K[rt,ri]-K[rt,rj]).
        for (t, g) in grad.iter_mut().enumerate() {
            let rt = t % n;
            let delta = kernel[rt * n + ri] - kernel[rt * n + rj];
            *g += sign(t) * lambda * delta;
        }
    };

    // Bias from the KKT bracket [m, M]; free variables collapse it.
    let bias = (final_m + final_mm) / (T::one() + T::one());

    let mut support = Vec::new();
    let mut coefficients = Vec::new();
    for i in 0..n {
        let beta = theta[i] - theta[n + i];
        if beta.abs() > T::from_config(1e-12) {
            support.push(features[i]);
            coefficients.push(beta);
        }
    }
    Ok((
        ScalarSvr {
            support,
            coefficients,
            bias,
            gamma,
        },
        SolveStats {
            iterations,
            final_violation: violation.to_f64_lossy(),
            degenerate_targets: false,
        },
    ))
}

/// Contiguous k-fold ranges over `n` rows in their given order.
fn fold_ranges(n: usize, folds: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(folds);
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Fits the two-output model: epsilon chosen from the grid by k-fold
/// cross-validated MED (ties to the smaller epsilon), then both scalar
/// regressors are refit on the whole fit set with the winner.
pub fn fit_svr<T: Scalar>(
    features: &[[T; FEATURE_DIM]],
    targets: &[[T; 2]],
    params: &SvrParams,
    epsilon_grid: &[f64],
    folds: usize,
) -> Result<SvrModel<T>, PersonalizeError> {
    let n = targets.len();
    if n < folds || folds < 2 {
        return Err(PersonalizeError::TooFewRowsForFolds { have: n, folds });
    }
    let ranges = fold_ranges(n, folds);

    let mut best: Option<(f64, f64)> = None; // (med, epsilon)
    for &epsilon in epsilon_grid {
        let trial = SvrParams {
            epsilon,
            ..*params
        };
        let mut total_dist = 0.0;
        for &(lo, hi) in &ranges {
            let mut train_x = Vec::with_capacity(n - (hi - lo));
            let mut train_y: [Vec<T>; 2] = [Vec::new(), Vec::new()];
            for i in (0..n).filter(|i| *i < lo || *i >= hi) {
                train_x.push(features[i]);
                train_y[0].push(targets[i][0]);
                train_y[1].push(targets[i][1]);
            }
            let (mx, _) = solve_epsilon_svr(&train_x, &train_y[0], &trial)?;
            let (my, _) = solve_epsilon_svr(&train_x, &train_y[1], &trial)?;
            for i in lo..hi {
                let px = mx.predict(&features[i]).to_f64_lossy();
                let py = my.predict(&features[i]).to_f64_lossy();
                let dx = px - targets[i][0].to_f64_lossy();
                let dy = py - targets[i][1].to_f64_lossy();
                total_dist += (dx * dx + dy * dy).sqrt();
            }
        }
        let med = total_dist / n as f64;
        if best.is_none_or(|(b, _)| med < b) {
            best = Some((med, epsilon));
        }
    }
    let (_, epsilon) = best.expect("epsilon grid is nonempty");

    let final_params = SvrParams {
        epsilon,
        ..*params
    };
    let tx: Vec<T> = targets.iter().map(|t| t[0]).collect();
    let ty: Vec<T> = targets.iter().map(|t| t[1]).collect();
    let (x, _) = solve_epsilon_svr(features, &tx, &final_params)?;
    let (y, _) = solve_epsilon_svr(features, &ty, &final_params)?;
    Ok(SvrModel {
        x,
        y,
        c: params.c,
        gamma: params.gamma,
        epsilon,
    })
}

/// `y_hat = sum_i beta_i * exp(-gamma ||x - x_i||^2) + b` per output.
pub fn predict_svr<T: Scalar>(model: &SvrModel<T>, features: &[[T; FEATURE_DIM]]) -> Vec<[f64; 2]> {
    features
        .iter()
        .map(|f| {
            [
                model.x.predict(f).to_f64_lossy(),
                model.y.predict(f).to_f64_lossy(),
            ]
        })
        .collect()
}
