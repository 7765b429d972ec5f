//! Central finite-difference gradient checking.
//!
//! The checker accumulates in `f64` regardless of the scalar type the
//! network trains in; callers instantiate the generic kernels at `f64`
//! and hand a flat view of the quantity being perturbed.

/// Default perturbation used by the test suites.
pub const DEFAULT_H: f64 = 1e-3;

/// Per-component relative error with a unit floor, so tiny gradients are
/// compared absolutely and large ones relatively.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Outcome of a gradient check over a set of components.
#[derive(Debug, Clone, Copy)]
pub struct CheckOutcome {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Components skipped because the perturbation crossed an activation
    /// kink (the forward fingerprint changed between +h and -h).
    pub skipped: usize,
}

/// Checks `analytic[i]` against a central difference of `f` for every
/// listed component.
///
/// `f` returns the scalar objective plus a fingerprint of the piecewise
/// region the forward pass evaluated in (ReLU masks, pool argmaxes). A
/// component whose +h/-h fingerprints differ sits on a kink where the
/// central difference is meaningless, and is skipped rather than compared.
/// Callers that evaluate smooth functions can return a constant
/// fingerprint.
pub fn check_components<F>(
    mut f: F,
    x: &mut [f64],
    analytic: &[f64],
    components: &[usize],
    h: f64,
) -> CheckOutcome
where
    F: FnMut(&[f64]) -> (f64, u64),
{
    assert_eq!(x.len(), analytic.len());
    let mut outcome = CheckOutcome {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
    };
    for &i in components {
        let orig = x[i];
        x[i] = orig + h;
        let (f_plus, fp_plus) = f(x);
        x[i] = orig - h;
        let (f_minus, fp_minus) = f(x);
        x[i] = orig;
        if fp_plus != fp_minus {
            outcome.skipped += 1;
            continue;
        }
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > outcome.max_rel_err {
            outcome.max_rel_err = err;
        }
        outcome.checked += 1;
    }
    outcome
}

/// [`check_components`] over every component of a smooth objective.
pub fn check_all<F>(mut f: F, x: &mut [f64], analytic: &[f64], h: f64) -> CheckOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let components: Vec<usize> = (0..x.len()).collect();
    check_components(|v| (f(v), 0), x, analytic, &components, h)
}

/// FNV-1a accumulator for activation-pattern fingerprints.
#[derive(Debug, Clone, Copy)]
pub struct Fingerprint(u64);

impl Fingerprint {
    pub fn new() -> Self {
        Fingerprint(0xcbf29ce484222325)
    }

    pub fn push_bit(&mut self, bit: bool) {
        self.0 ^= bit as u64 + 1;
        self.0 = self.0.wrapping_mul(0x100000001b3);
    }

    pub fn push_u64(&mut self, v: u64) {
        self.0 ^= v;
        self.0 = self.0.wrapping_mul(0x100000001b3);
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

impl Default for Fingerprint {
    fn default() -> Self {
        Self::new()
    }
}
