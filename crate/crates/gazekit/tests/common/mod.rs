//! Shared test oracles.
//!
//! `qp_oracle` solves the epsilon-SVR dual as a plain box-and-hyperplane
//! quadratic program, independently of the pairwise solver under test:
//! accelerated projected gradient descent (exact bisection projection
//! onto the simplex-box intersection) down to a loose tolerance, then an
//! exact KKT polish that solves the free-variable linear system by
//! Gaussian elimination. The returned solution carries its own KKT
//! violation certificate; tests must check it before trusting the
//! oracle.

#![allow(dead_code)]

pub struct QpSolution {
    /// beta = alpha - alpha* per training row.
    pub beta: Vec<f64>,
    pub bias: f64,
    /// KKT violation certificate (max over feasible directions).
    pub violation: f64,
}

fn kernel_matrix(features: &[[f64; 4]], gamma: f64) -> Vec<f64> {
    let n = features.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let sq: f64 = features[i]
                .iter()
                .zip(&features[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = (-gamma * sq).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// lambda_max(K) via power iteration, for the gradient step size.
fn spectral_bound(k: &[f64], n: usize) -> f64 {
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 1.0;
    for _ in 0..50 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            let row = &k[i * n..(i + 1) * n];
            w[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if lambda <= 0.0 {
            return 1.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / lambda;
        }
    }
    lambda
}

/// Exact Euclidean projection onto {0 <= theta <= c, sum(s*theta) = 0}
/// by bisection on the hyperplane multiplier.
fn project(z: &mut [f64], n: usize, c: f64) {
    let phi = |nu: f64, z: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (t, &zt) in z.iter().enumerate() {
            let s = if t < n { 1.0 } else { -1.0 };
            acc += s * (zt - s * nu).clamp(0.0, c);
        }
        acc
    };
    let bound = z.iter().fold(0.0f64, |m, v| m.max(v.abs())) + c + 1.0;
    let mut lo = -bound;
    let mut hi = bound;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid, z) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    for (t, zt) in z.iter_mut().enumerate() {
        let s = if t < n { 1.0 } else { -1.0 };
        *zt = (*zt - s * nu).clamp(0.0, c);
    }
}

struct DualProblem<'a> {
    k: &'a [f64],
    n: usize,
    p: Vec<f64>,
    c: f64,
}

impl DualProblem<'_> {
    fn gradient(&self, theta: &[f64], grad: &mut [f64]) {
        let n = self.n;
        // u = alpha - alpha*; grad = [K u; -K u] + p.
        let mut u = vec![0.0; n];
        for i in 0..n {
            u[i] = theta[i] - theta[n + i];
        }
        for i in 0..n {
            let row = &self.k[i * n..(i + 1) * n];
            let ku: f64 = row.iter().zip(&u).map(|(a, b)| a * b).sum();
            grad[i] = ku + self.p[i];
            grad[n + i] = -ku + self.p[n + i];
        }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let n = self.n;
        let mut u = vec![0.0; n];
        for i in 0..n {
            u[i] = theta[i] - theta[n + i];
        }
        let mut quad = 0.0;
        for i in 0..n {
            let row = &self.k[i * n..(i + 1) * n];
            let ku: f64 = row.iter().zip(&u).map(|(a, b)| a * b).sum();
            quad += u[i] * ku;
        }
        let lin: f64 = theta.iter().zip(&self.p).map(|(t, p)| t * p).sum();
        0.5 * quad + lin
    }

    /// KKT bracket (m, M): optimality requires m <= b <= M with
    /// violation m - M <= 0.
    fn kkt_bracket(&self, theta: &[f64], grad: &[f64]) -> (f64, f64) {
        let n = self.n;
        let mut m = f64::NEG_INFINITY;
        let mut mm = f64::INFINITY;
        for (t, (&th, g)) in theta.iter().zip(grad).enumerate() {
            let s = if t < n { 1.0 } else { -1.0 };
            let v = -s * g;
            let in_up = (s > 0.0 && th < self.c) || (s < 0.0 && th > 0.0);
            let in_low = (s < 0.0 && th < self.c) || (s > 0.0 && th > 0.0);
            if in_up && v > m {
                m = v;
            }
            if in_low && v < mm {
                mm = v;
            }
        }
        (m, mm)
    }
}

/// Dense Gaussian elimination with partial pivoting; returns None on a
/// singular system.
fn solve_dense(a: &mut [f64], b: &mut [f64], dim: usize) -> Option<Vec<f64>> {
    for col in 0..dim {
        let mut pivot = col;
        for row in col + 1..dim {
            if a[row * dim + col].abs() > a[pivot * dim + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * dim + col].abs() < 1e-14 {
            return None;
        }
        if pivot != col {
            for k in 0..dim {
                a.swap(col * dim + k, pivot * dim + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * dim + col];
        for row in col + 1..dim {
            let factor = a[row * dim + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..dim {
                a[row * dim + k] -= factor * a[col * dim + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for k in col + 1..dim {
            acc -= a[col * dim + k] * x[k];
        }
        x[col] = acc / a[col * dim + col];
    }
    Some(x)
}

/// Exact solve of the equality-constrained QP restricted to the free
/// variables of `theta`; returns the polished point when it stays
/// feasible.
fn polish(problem: &DualProblem, theta: &[f64]) -> Option<Vec<f64>> {
    let n = problem.n;
    let margin = 1e-7 * problem.c;
    let free: Vec<usize> = (0..2 * n)
        .filter(|&t| theta[t] > margin && theta[t] < problem.c - margin)
        .collect();
    if free.is_empty() {
        return None;
    }
    let f = free.len();
    let dim = f + 1; // free thetas plus the bias b
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let qbar = |t: usize, u: usize| sign(t) * sign(u) * problem.k[(t % n) * n + (u % n)];

    let mut a = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    for (row, &t) in free.iter().enumerate() {
        for (col, &u) in free.iter().enumerate() {
            a[row * dim + col] = qbar(t, u);
        }
        a[row * dim + f] = sign(t);
        let mut bound_term = 0.0;
        for (u, &th) in theta.iter().enumerate() {
            if !free.contains(&u) && th != 0.0 {
                bound_term += qbar(t, u) * th;
            }
        }
        rhs[row] = -problem.p[t] - bound_term;
    }
    let mut bound_sum = 0.0;
    for (u, &th) in theta.iter().enumerate() {
        if !free.contains(&u) {
            bound_sum += sign(u) * th;
        }
    }
    for (col, &u) in free.iter().enumerate() {
        a[f * dim + col] = sign(u);
    }
    rhs[f] = -bound_sum;

    let x = solve_dense(&mut a, &mut rhs, dim)?;
    let mut polished = theta.to_vec();
    for (i, &t) in free.iter().enumerate() {
        if x[i] < -1e-9 || x[i] > problem.c + 1e-9 {
            return None; // left the box; polish invalid
        }
        polished[t] = x[i].clamp(0.0, problem.c);
    }
    Some(polished)
}

/// Independent dense-QP solution of the epsilon-SVR dual.
///
/// Panics if the certificate cannot be driven below `target_violation`;
/// the oracle refuses to hand out untrusted answers.
pub fn qp_oracle(
    features: &[[f64; 4]],
    targets: &[f64],
    c: f64,
    gamma: f64,
    epsilon: f64,
    target_violation: f64,
) -> QpSolution {
    let n = targets.len();
    let k = kernel_matrix(features, gamma);
    let mut p = vec![0.0; 2 * n];
    for i in 0..n {
        p[i] = epsilon - targets[i];
        p[n + i] = epsilon + targets[i];
    }
    let problem = DualProblem { k: &k, n, p, c };
    let step = 1.0 / (2.0 * spectral_bound(&k, n) + 1.0);

    let mut theta = vec![0.0; 2 * n];
    let mut momentum = theta.clone();
    let mut t_prev = 1.0f64;
    let mut grad = vec![0.0; 2 * n];
    let mut best_violation = f64::INFINITY;
    let mut prev_obj = f64::INFINITY;

    for iter in 0..400_000usize {
        problem.gradient(&momentum, &mut grad);
        let mut next: Vec<f64> = momentum
            .iter()
            .zip(&grad)
            .map(|(m, g)| m - step * g)
            .collect();
        project(&mut next, n, c);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
        let beta = (t_prev - 1.0) / t_next;
        for i in 0..2 * n {
            momentum[i] = next[i] + beta * (next[i] - theta[i]);
        }
        theta = next;
        t_prev = t_next;

        if iter % 64 == 0 {
            let obj = problem.objective(&theta);
            if obj > prev_obj {
                // Function restart: drop momentum.
                momentum.copy_from_slice(&theta);
                t_prev = 1.0;
            }
            prev_obj = obj;
            problem.gradient(&theta, &mut grad);
            let (m, mm) = problem.kkt_bracket(&theta, &grad);
            best_violation = m - mm;
            if best_violation < 1e-6 {
                // Try the exact polish once the active set has settled.
                if let Some(polished) = polish(&problem, &theta) {
                    problem.gradient(&polished, &mut grad);
                    let (pm, pmm) = problem.kkt_bracket(&polished, &grad);
                    if pm - pmm < best_violation {
                        theta = polished;
                        momentum.copy_from_slice(&theta);
                        t_prev = 1.0;
                        best_violation = pm - pmm;
                    }
                }
                if best_violation < target_violation {
                    break;
                }
            }
        }
    }

    problem.gradient(&theta, &mut grad);
    let (m, mm) = problem.kkt_bracket(&theta, &grad);
    let violation = (m - mm).min(best_violation);
    assert!(
        violation < target_violation,
        "qp oracle failed to converge: violation {violation:.3e} (target {target_violation:.0e})"
    );
    let bias = 0.5 * (m + mm);
    let beta: Vec<f64> = (0..n).map(|i| theta[i] - theta[n + i]).collect();
    QpSolution {
        beta,
        bias,
        violation,
    }
}

/// Prediction from a raw dual solution.
pub fn qp_predict(
    features: &[[f64; 4]],
    beta: &[f64],
    bias: f64,
    gamma: f64,
    x: &[f64; 4],
) -> f64 {
    let mut acc = bias;
    for (f, &b) in features.iter().zip(beta) {
        if b != 0.0 {
            let mut sq = 0.0;
            for d in 0..4 {
                let diff = x[d] - f[d];
                sq += diff * diff;
            }
            acc += b * (-gamma * sq).exp();
        }
    }
    acc
}
