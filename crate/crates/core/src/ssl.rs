//! SSL frames: validation, DOA extraction and the equivalent von Mises
//! summary `(rho, mu)` of a frame.

use alloc::vec::Vec;

use crate::circular::{Angle, EPS_KAPPA};
use crate::math::{atan2, cos, exp, hypot, sin, TAU};
use crate::{Error, Result};

/// Probability floor applied to every SSL bin.
pub const FLOOR_EPS: f64 = 1e-10;

/// Angular bin centres `b_j = wrap(2 pi j / N)`, with cached trig values.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    angles: Vec<Angle>,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl BinLayout {
    pub fn new(n_bins: usize) -> Result<BinLayout> {
        if n_bins == 0 {
            return Err(Error::InvalidInput("layout needs at least one bin".into()));
        }
        let raw: Vec<f64> = (0..n_bins).map(|j| TAU * j as f64 / n_bins as f64).collect();
        let cos: Vec<f64> = raw.iter().map(|&b| cos(b)).collect();
        let sin: Vec<f64> = raw.iter().map(|&b| sin(b)).collect();
        // atan2 of the cached pair keeps a one-hot summary bit-identical to its bin angle.
        let angles = cos.iter().zip(&sin).map(|(&c, &s)| Angle::wrap(atan2(s, c))).collect();
        Ok(BinLayout { angles, cos, sin })
    }

    pub fn n_bins(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[Angle] {
        &self.angles
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.n_bins() as f64
    }

    /// `(sum p_i cos b_i, sum p_i sin b_i)`.
    pub fn resultant(&self, probs: &[f64]) -> (f64, f64) {
        let c = probs.iter().zip(&self.cos).map(|(p, c)| p * c).sum();
        let s = probs.iter().zip(&self.sin).map(|(p, s)| p * s).sum();
        (c, s)
    }

    /// Bin probabilities of a von Mises discretized onto this layout,
    /// `p_i ∝ exp(kappa cos(b_i - mean))`.
    pub fn discretized_von_mises(&self, mean: Angle, kappa: f64) -> Vec<f64> {
        let (cm, sm) = (cos(mean.radians()), sin(mean.radians()));
        let mut p: Vec<f64> = self
            .cos
            .iter()
            .zip(&self.sin)
            .map(|(c, s)| exp(kappa * (c * cm + s * sm - 1.0)))
            .collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }
}

/// A validated SSL frame: strictly positive bins summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SslVector(Vec<f64>);

impl SslVector {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Floors at [`FLOOR_EPS`] and renormalizes an accumulated (unnormalized)
    /// nonnegative vector, e.g. a sum of frames.
    pub(crate) fn from_nonnegative(mut raw: Vec<f64>) -> SslVector {
        raw.iter_mut().for_each(|v| *v = v.max(FLOOR_EPS));
        let total: f64 = raw.iter().sum();
        raw.iter_mut().for_each(|v| *v /= total);
        SslVector(raw)
    }
}

/// Equivalent von Mises summary of an SSL frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslSummary {
    pub rho: f64,
    pub mu: Angle,
}

/// Checks the length and sign of `raw`, floors at [`FLOOR_EPS`] and renormalizes.
pub fn validate_ssl(raw: &[f64], layout: &BinLayout) -> Result<SslVector> {
    if raw.len() != layout.n_bins() {
        return Err(Error::InvalidInput(alloc::format!(
            "SSL frame has {} bins, layout has {}",
            raw.len(),
            layout.n_bins()
        )));
    }
    if let Some(bad) = raw.iter().find(|v| !v.is_finite() || **v < -1e-9) {
        return Err(Error::InvalidInput(alloc::format!("SSL entry {bad} is negative or non-finite")));
    }
    if !raw.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidInput("SSL frame is all zero".into()));
    }
    Ok(SslVector::from_nonnegative(raw.to_vec()))
}

/// Angle of the largest bin; ties go to the lowest index.
pub fn ssl_to_doa(s: &SslVector, layout: &BinLayout) -> Angle {
    let mut best = 0;
    for (i, &p) in s.0.iter().enumerate() {
        if p > s.0[best] {
            best = i;
        }
    }
    layout.angles[best]
}

/// `rho = kappa_phi * |resultant|`, `mu = arg(resultant)`.
///
/// Uses `sum_ij s_i s_j cos(b_i - b_j) = |sum_i s_i e^{i b_i}|^2`; when the
/// resultant vanishes `mu` defaults to the first bin angle.
pub fn ssl_summarize(s: &SslVector, layout: &BinLayout, kappa_phi: f64) -> SslSummary {
    let (c, sn) = layout.resultant(&s.0);
    let r = hypot(c, sn);
    if r < EPS_KAPPA {
        return SslSummary { rho: 0.0, mu: layout.angles[0] };
    }
    SslSummary { rho: kappa_phi * r, mu: Angle::wrap(atan2(sn, c)) }
}

/// `sum_j exp(kappa_phi cos(b_j - z))` on `n_eval` equispaced values of `z`
/// in `[-pi, pi)`.
pub fn denominator_profile(kappa_phi: f64, layout: &BinLayout, n_eval: usize) -> Result<Vec<f64>> {
    if n_eval < 2 {
        return Err(Error::InvalidInput("denominator profile needs n_eval >= 2".into()));
    }
    Ok(eval_grid(n_eval)
        .map(|z| {
            let (cz, sz) = (cos(z), sin(z));
            layout
                .cos
                .iter()
                .zip(&layout.sin)
                .map(|(c, s)| exp(kappa_phi * (c * cz + s * sz)))
                .sum()
        })
        .collect())
}

/// The `z` values used by [`denominator_profile`].
pub fn eval_grid(n_eval: usize) -> impl Iterator<Item = f64> {
    (0..n_eval).map(move |i| -core::f64::consts::PI + TAU * i as f64 / n_eval as f64)
}

/// `(max - min) / mean` of a profile; zero for a constant profile.
pub fn flatness(profile: &[f64]) -> f64 {
    if profile.is_empty() {
        return 0.0;
    }
    let max = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = profile.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = profile.iter().sum::<f64>() / profile.len() as f64;
    (max - min) / mean
}
