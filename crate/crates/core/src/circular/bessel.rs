//! Modified Bessel functions of the first kind, orders 0 and 1, evaluated in
//! log space (or as the ratio `I1/I0`) so that nothing overflows for large
//! concentrations.

use crate::math::{ln, ln_1p, sqrt, TAU};
use crate::{Error, Result};

use super::KAPPA_MAX;

/// Below this argument the power series is used, above it the asymptotic expansion.
const SERIES_LIMIT: f64 = 15.0;

fn check(kappa: f64) -> Result<()> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::Domain(alloc::format!(
            "Bessel argument must be finite and nonnegative, got {kappa}"
        )));
    }
    Ok(())
}

/// `(I0(x) - 1, I1(x))` by their power series; only used for `x < SERIES_LIMIT`.
fn series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let mut t0 = 1.0;
    let mut t1 = 1.0;
    let mut s0 = 0.0;
    let mut s1 = 1.0;
    let mut k = 1.0;
    loop {
        t0 *= q / (k * k);
        t1 *= q / (k * (k + 1.0));
        s0 += t0;
        s1 += t1;
        if t0 <= s0 * 1e-17 && t1 <= s1 * 1e-17 {
            break;
        }
        k += 1.0;
    }
    (s0, 0.5 * x * s1)
}

/// Scaled asymptotic sums `S_nu(x) = I_nu(x) * sqrt(2 pi x) * exp(-x)` for nu = 0, 1.
///
/// Each series is summed until its terms stop shrinking; at `x >= 15` the
/// smallest term is below 1e-13.
fn asymptotic(x: f64) -> (f64, f64) {
    let sum = |nu2: f64| {
        let mut term = 1.0;
        let mut total = 1.0;
        let mut k = 1.0;
        loop {
            let odd = 2.0 * k - 1.0;
            let next = term * (odd * odd - nu2) / (8.0 * k * x);
            if next.abs() >= term.abs() || next == 0.0 {
                break;
            }
            total += next;
            if next.abs() < 1e-17 * total.abs() {
                break;
            }
            term = next;
            k += 1.0;
        }
        total
    };
    (sum(0.0), sum(4.0))
}

/// `log I0(kappa)`, finite for every finite nonnegative argument.
pub fn log_bessel_i0(kappa: f64) -> Result<f64> {
    check(kappa)?;
    Ok(log_i0_unchecked(kappa))
}

pub(crate) fn log_i0_unchecked(kappa: f64) -> f64 {
    if kappa < SERIES_LIMIT {
        ln_1p(series(kappa).0)
    } else {
        let (s0, _) = asymptotic(kappa);
        kappa - 0.5 * ln(TAU * kappa) + ln(s0)
    }
}

/// The mean resultant length `A(kappa) = I1(kappa) / I0(kappa)`, in `[0, 1)`.
pub fn bessel_ratio(kappa: f64) -> Result<f64> {
    check(kappa)?;
    Ok(ratio_unchecked(kappa))
}

pub(crate) fn ratio_unchecked(kappa: f64) -> f64 {
    if kappa == 0.0 {
        0.0
    } else if kappa < SERIES_LIMIT {
        let (tail, i1) = series(kappa);
        let i0 = 1.0 + tail;
        i1 / i0
    } else {
        let (s0, s1) = asymptotic(kappa);
        s1 / s0
    }
}

/// `dA/dkappa = 1 - A/kappa - A^2`.
fn ratio_derivative(kappa: f64, a: f64) -> f64 {
    if kappa < 1e-8 {
        0.5
    } else {
        1.0 - a / kappa - a * a
    }
}

/// Piecewise closed-form starting point for the inverse.
fn initial_guess(r: f64) -> f64 {
    if r < 0.53 {
        2.0 * r + r * r * r + 5.0 * r * r * r * r * r / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        1.0 / (r * r * r - 4.0 * r * r + 3.0 * r)
    }
}

const NEWTON_ITERS: usize = 50;

/// Functional inverse of [`bessel_ratio`], by safeguarded Newton-Raphson.
///
/// The result is clamped to `[0, KAPPA_MAX]`: any `r` at or beyond
/// `A(KAPPA_MAX)` maps to `KAPPA_MAX`.
pub fn inv_bessel_ratio(r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Domain(alloc::format!(
            "Bessel ratio inverse needs 0 <= r < 1, got {r}"
        )));
    }
    Ok(inv_ratio_unchecked(r))
}

pub(crate) fn inv_ratio_unchecked(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= ratio_unchecked(KAPPA_MAX) {
        return KAPPA_MAX;
    }
    let (mut lo, mut hi) = (0.0, KAPPA_MAX);
    let mut kappa = initial_guess(r).clamp(0.0, KAPPA_MAX);
    let tol = 4.0 * f64::EPSILON * r;
    for _ in 0..NEWTON_ITERS {
        let a = ratio_unchecked(kappa);
        let residual = a - r;
        if residual.abs() <= tol {
            break;
        }
        if residual > 0.0 {
            hi = kappa;
        } else {
            lo = kappa;
        }
        let mut next = kappa - residual / ratio_derivative(kappa, a);
        if !(next > lo && next < hi) {
            next = if hi.is_finite() && hi < KAPPA_MAX {
                0.5 * (lo + hi)
            } else {
                // Geometric step toward the upper clamp.
                sqrt(lo.max(1.0) * hi)
            };
        }
        if (next - kappa).abs() <= 1e-15 * kappa {
            kappa = next;
            break;
        }
        kappa = next;
    }
    kappa
}
