//! von Mises Kalman filter over a circular location.
//!
//! The belief is a von Mises density. Prediction widens it with the
//! approximate convolution against the transition kernel; an update multiplies
//! in one von Mises factor per measurement. Each frame is scored with the
//! exact convolution of the emission with the predicted belief, so the
//! sequence log-likelihood is `sum_t log p(x_t | x_1..x_{t-1})`.

use alloc::vec::Vec;

use crate::circular::{
    convolve_with_ratio, ratio_unchecked, vm_exact_conv_log_density, vm_multiply, Angle,
    VonMises, KAPPA_MAX,
};
use crate::math::powi;
use crate::ssl::SslSummary;
use crate::{Error, Result};

/// Transition concentration `kappa_z` and observation concentration `kappa_phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    pub kappa_z: f64,
    pub kappa_phi: f64,
}

impl KalmanParams {
    pub fn new(kappa_z: f64, kappa_phi: f64) -> Result<KalmanParams> {
        for (name, v) in [("kappa_z", kappa_z), ("kappa_phi", kappa_phi)] {
            if !(0.0..=KAPPA_MAX).contains(&v) {
                return Err(Error::Domain(alloc::format!(
                    "{name} must lie in [0, {KAPPA_MAX}], got {v}"
                )));
            }
        }
        Ok(KalmanParams { kappa_z, kappa_phi })
    }
}

/// One location measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    /// A direction of arrival, emitted with concentration `kappa_phi`.
    Doa(Angle),
    /// An SSL frame reduced to its equivalent `(rho, mu)`.
    Ssl(SslSummary),
}

impl Measurement {
    /// The emission as a von Mises factor over the state.
    pub fn factor(&self, params: &KalmanParams) -> VonMises {
        match *self {
            Measurement::Doa(phi) => VonMises::clamped(phi, params.kappa_phi),
            Measurement::Ssl(s) => VonMises::clamped(s.mu, s.rho),
        }
    }
}

/// Everything observed at one frame: nothing, or one measurement per channel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameObservation {
    pub measurements: Vec<Measurement>,
}

impl FrameObservation {
    pub fn empty() -> FrameObservation {
        FrameObservation::default()
    }

    pub fn doa(phi: Angle) -> FrameObservation {
        FrameObservation { measurements: alloc::vec![Measurement::Doa(phi)] }
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub belief: VonMises,
    pub frame_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub total_log_likelihood: f64,
    pub per_frame_log_likelihood: Vec<f64>,
    /// Frames carrying at least one measurement.
    pub observed_frame_count: usize,
    pub final_state: FilterState,
}

/// Uniform belief at frame 0.
pub fn init_state() -> FilterState {
    FilterState { belief: VonMises::uniform(), frame_index: 0 }
}

/// Advances the belief by one transition.
pub fn predict(state: &FilterState, params: &KalmanParams) -> FilterState {
    FilterState {
        belief: convolve_with_ratio(&state.belief, ratio_unchecked(params.kappa_z)),
        frame_index: state.frame_index + 1,
    }
}

/// Multiplies in one factor per measurement; an empty frame leaves the belief alone.
pub fn update(state: &FilterState, obs: &FrameObservation, params: &KalmanParams) -> FilterState {
    score_and_update(state, &obs.measurements, params).1
}

/// `log p(x_t | past)` for a predicted state; 0 for an empty frame.
///
/// Measurements sharing a frame are scored by the chain rule, each against
/// the belief already updated with the ones before it.
pub fn frame_log_likelihood(state: &FilterState, obs: &FrameObservation, params: &KalmanParams) -> f64 {
    score_and_update(state, &obs.measurements, params).0
}

fn score_and_update(
    state: &FilterState,
    measurements: &[Measurement],
    params: &KalmanParams,
) -> (f64, FilterState) {
    let mut belief = state.belief;
    let mut ll = 0.0;
    for m in measurements {
        let f = m.factor(params);
        ll += vm_exact_conv_log_density(f.mean, f.concentration(), &belief);
        belief = vm_multiply(&belief, &f);
    }
    (ll, FilterState { belief, frame_index: state.frame_index })
}

/// Filters a dense frame sequence. Frame 0 is scored against the uniform
/// prior; every later frame is predicted first.
pub fn sequence_log_likelihood(observations: &[FrameObservation], params: &KalmanParams) -> Result<TrackResult> {
    if observations.is_empty() {
        return Err(Error::InvalidInput("cannot filter an empty sequence".into()));
    }
    let kernel_ratio = ratio_unchecked(params.kappa_z);
    let mut state = init_state();
    let mut per_frame = Vec::with_capacity(observations.len());
    let mut observed = 0;
    for (t, obs) in observations.iter().enumerate() {
        if t > 0 {
            state = FilterState {
                belief: convolve_with_ratio(&state.belief, kernel_ratio),
                frame_index: state.frame_index + 1,
            };
        }
        let (ll, next) = score_and_update(&state, &obs.measurements, params);
        if !obs.is_empty() {
            observed += 1;
        }
        per_frame.push(ll);
        state = next;
    }
    Ok(TrackResult {
        total_log_likelihood: per_frame.iter().sum(),
        per_frame_log_likelihood: per_frame,
        observed_frame_count: observed,
        final_state: state,
    })
}

/// Log-likelihood of a sparse stream of `(frame index, measurement)` pairs
/// sorted by frame; entries sharing an index form one frame.
///
/// A run of `g` frames between observations is crossed in one step, since
/// the approximate convolution composes as `A(k') = A(k) A(kappa_z)^g`.
/// Returns the total and the number of distinct observed frames.
pub fn sparse_log_likelihood(stream: &[(u64, Measurement)], params: &KalmanParams) -> (f64, usize) {
    let kernel_ratio = ratio_unchecked(params.kappa_z);
    let mut belief = VonMises::uniform();
    let mut prev: Option<u64> = None;
    let mut total = 0.0;
    let mut frames = 0;
    for &(t, m) in stream {
        if prev != Some(t) {
            if let Some(p) = prev {
                debug_assert!(t > p, "stream must be sorted by frame");
                let gap = t - p;
                let ratio = if gap == 1 { kernel_ratio } else { powi(kernel_ratio, gap) };
                belief = convolve_with_ratio(&belief, ratio);
            }
            prev = Some(t);
            frames += 1;
        }
        let f = m.factor(params);
        total += vm_exact_conv_log_density(f.mean, f.concentration(), &belief);
        belief = vm_multiply(&belief, &f);
    }
    (total, frames)
}
