//! Circular primitives: wrapped angles and von Mises densities.

mod bessel;

pub use bessel::{bessel_ratio, inv_bessel_ratio, log_bessel_i0};
pub(crate) use bessel::{inv_ratio_unchecked, log_i0_unchecked, ratio_unchecked};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::{acos, atan2, cos, fmod, hypot, ln, sin, sqrt, PI, TAU};
use crate::{Error, Result};

/// Upper clamp on every concentration.
pub const KAPPA_MAX: f64 = 1e6;
/// Resultant concentrations below this are treated as exactly uniform.
pub const EPS_KAPPA: f64 = 1e-12;

/// `log(2 pi)`, minus the log density of the uniform circular distribution.
pub const LOG_TAU: f64 = 1.837_877_066_409_345_3;

/// An angle in radians, always in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Wraps a finite value into `(-pi, pi]`.
    pub fn new(x: f64) -> Result<Angle> {
        wrap_angle(x)
    }

    /// Wraps without the finiteness check; NaN propagates.
    #[inline]
    pub(crate) fn wrap(x: f64) -> Angle {
        if x > -PI && x <= PI {
            return Angle(x);
        }
        let mut r = fmod(x, TAU);
        if r <= -PI {
            r += TAU;
        } else if r > PI {
            r -= TAU;
        }
        Angle(r)
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    /// Geodesic distance on the circle, in `[0, pi]`.
    pub fn distance(self, other: Angle) -> f64 {
        let d = (self.0 - other.0).abs();
        d.min(TAU - d)
    }

    /// Wrapped sum.
    pub fn rotate(self, delta: f64) -> Angle {
        Angle::wrap(self.0 + delta)
    }
}

/// Reduces `x` modulo `2 pi` into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> Result<Angle> {
    if !x.is_finite() {
        return Err(Error::Domain(alloc::format!("angle must be finite, got {x}")));
    }
    Ok(Angle::wrap(x))
}

/// A von Mises density with mean direction and concentration.
///
/// A concentration of zero is the uniform density; its mean is kept but
/// carries no meaning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VonMises {
    pub mean: Angle,
    concentration: f64,
}

impl VonMises {
    /// Validates `concentration >= 0` and clamps it to [`KAPPA_MAX`].
    pub fn new(mean: Angle, concentration: f64) -> Result<VonMises> {
        if !(concentration >= 0.0) {
            return Err(Error::Domain(alloc::format!(
                "concentration must be nonnegative, got {concentration}"
            )));
        }
        Ok(VonMises::clamped(mean, concentration))
    }

    #[inline]
    pub(crate) fn clamped(mean: Angle, concentration: f64) -> VonMises {
        VonMises { mean, concentration: concentration.min(KAPPA_MAX) }
    }

    pub fn uniform() -> VonMises {
        VonMises { mean: Angle::ZERO, concentration: 0.0 }
    }

    #[inline]
    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    pub fn log_pdf(&self, x: Angle) -> f64 {
        vm_log_pdf(x, self)
    }
}

/// `log[exp(k cos(x - m)) / (2 pi I0(k))]`.
pub fn vm_log_pdf(x: Angle, d: &VonMises) -> f64 {
    let k = d.concentration;
    if k == 0.0 {
        return -LOG_TAU;
    }
    k * cos(x.0 - d.mean.0) - LOG_TAU - log_i0_unchecked(k)
}

/// Product of two von Mises densities, renormalized.
///
/// When the resultant concentration falls below [`EPS_KAPPA`] the result is
/// uniform with the mean of `a`.
pub fn vm_multiply(a: &VonMises, b: &VonMises) -> VonMises {
    let (ka, kb) = (a.concentration, b.concentration);
    if kb == 0.0 {
        return *a;
    }
    if ka == 0.0 {
        return *b;
    }
    let c = ka * cos(a.mean.0) + kb * cos(b.mean.0);
    let s = ka * sin(a.mean.0) + kb * sin(b.mean.0);
    let k = hypot(c, s);
    if k < EPS_KAPPA {
        return VonMises { mean: a.mean, concentration: 0.0 };
    }
    VonMises::clamped(Angle::wrap(atan2(s, c)), k)
}

/// Von Mises approximation to the convolution of `state` with a zero-mean
/// von Mises kernel of concentration `kappa_z`: the mean is kept and
/// `A(k') = A(k) A(kappa_z)`.
pub fn vm_convolve_approx(state: &VonMises, kappa_z: f64) -> VonMises {
    convolve_with_ratio(state, ratio_unchecked(kappa_z.clamp(0.0, KAPPA_MAX)))
}

/// Same as [`vm_convolve_approx`] with the kernel's Bessel ratio precomputed.
/// `kernel_ratio = A(kappa_z)^g` applies `g` consecutive transitions at once.
pub(crate) fn convolve_with_ratio(state: &VonMises, kernel_ratio: f64) -> VonMises {
    if state.concentration == 0.0 || kernel_ratio <= 0.0 {
        return VonMises { mean: state.mean, concentration: 0.0 };
    }
    let r = ratio_unchecked(state.concentration) * kernel_ratio;
    let k = inv_ratio_unchecked(r).min(state.concentration);
    VonMises { mean: state.mean, concentration: k }
}

/// Exact log predictive density of an observation `x` with emission
/// concentration `obs_conc`, given the (predicted) state density:
/// `log I0(|obs_conc e^{ix} + k e^{i m}|) - log(2 pi I0(obs_conc) I0(k))`.
pub fn vm_exact_conv_log_density(x: Angle, obs_conc: f64, state: &VonMises) -> f64 {
    let k = state.concentration;
    if k == 0.0 || obs_conc == 0.0 {
        return -LOG_TAU;
    }
    let r2 = obs_conc * obs_conc + k * k + 2.0 * obs_conc * k * cos(x.0 - state.mean.0);
    let r = sqrt(r2.max(0.0));
    log_i0_unchecked(r) - LOG_TAU - log_i0_unchecked(obs_conc) - log_i0_unchecked(k)
}

/// Draws from `d` (Best-Fisher rejection sampler; normal approximation for
/// concentrations above 1e6).
pub fn vm_sample<R: Rng + ?Sized>(d: &VonMises, rng: &mut R) -> Angle {
    let kappa = d.concentration;
    if kappa < 1e-8 {
        return Angle::wrap(PI * (2.0 * rng.random::<f64>() - 1.0));
    }
    if kappa >= KAPPA_MAX {
        let z: f64 = rng.sample(StandardNormal);
        return Angle::wrap(d.mean.0 + z / sqrt(kappa));
    }
    let s = if kappa < 1e-5 {
        1.0 / kappa + kappa
    } else {
        let r = 1.0 + sqrt(1.0 + 4.0 * kappa * kappa);
        let rho = (r - sqrt(2.0 * r)) / (2.0 * kappa);
        (1.0 + rho * rho) / (2.0 * rho)
    };
    let w = loop {
        let u: f64 = rng.random();
        let z = cos(PI * u);
        let w = (1.0 + s * z) / (s + z);
        let y = kappa * (s - w);
        let v: f64 = rng.random();
        if y * (2.0 - y) - v >= 0.0 || (v > 0.0 && ln(y / v) + 1.0 - y >= 0.0) {
            break w;
        }
    };
    let mut theta = acos(w.clamp(-1.0, 1.0));
    if rng.random::<f64>() < 0.5 {
        theta = -theta;
    }
    Angle::wrap(d.mean.0 + theta)
}

/// Circular mean and mean resultant length of a set of angles.
pub fn circular_mean(angles: impl IntoIterator<Item = Angle>) -> (Angle, f64) {
    let (mut c, mut s, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        c += cos(a.0);
        s += sin(a.0);
        n += 1;
    }
    if n == 0 {
        return (Angle::ZERO, 0.0);
    }
    (Angle::wrap(atan2(s, c)), hypot(c, s) / n as f64)
}

#[cfg(test)]
mod tests;
