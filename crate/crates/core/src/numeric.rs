//! Scalar numerical building blocks: bracketing root finder, adaptive
//! Simpson quadrature, golden-section search and compensated summation.

use crate::error::{Error, Result};

const MAX_BISECTIONS: usize = 400;
const MAX_SIMPSON_DEPTH: u32 = 48;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Finds a root of `f` on `[a, b]` by bisection.
///
/// `f(a)` and `f(b)` must have opposite signs (a zero at either endpoint is
/// returned immediately). Iteration stops once the bracket is no wider than
/// `width_tol`; the midpoint of the final bracket is returned.
pub fn bisect<F>(mut f: F, a: f64, b: f64, width_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::Convergence(format!(
            "no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= width_tol {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // bracket is down to adjacent floats
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.is_nan() {
            return Err(Error::Convergence(format!("function is NaN at {mid}")));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence(format!(
        "bisection did not reach width {width_tol:e} on [{lo}, {hi}]"
    )))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut ok = true;
    let value = simpson_step(&f, a, b, fa, fm, fb, whole, tol, MAX_SIMPSON_DEPTH, &mut ok);
    if !value.is_finite() {
        return Err(Error::Convergence(format!(
            "quadrature on [{a}, {b}] produced {value}"
        )));
    }
    if !ok {
        return Err(Error::Convergence(format!(
            "adaptive Simpson exceeded depth {MAX_SIMPSON_DEPTH} on [{a}, {b}]"
        )));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    ok: &mut bool,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 || lm <= a || rm >= b {
        *ok = false;
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok)
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
///
/// Returns `(argmax, max)` once the bracket is narrower than `x_tol`.
pub fn golden_section_max<F>(f: F, a: f64, b: f64, x_tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > x_tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        if x1 >= x2 {
            break;
        }
    }
    // the endpoints are candidates too: the objective may peak at a bracket edge
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Central finite difference of `f` at `x` with step `h`.
pub fn central_difference<F>(f: F, x: f64, h: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    (f(x + h) - f(x - h)) / (2.0 * h)
}
