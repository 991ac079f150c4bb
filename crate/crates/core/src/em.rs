//! EM estimation of `kappa_z` and `kappa_phi` from DOA sequences.
//!
//! The E-step runs a forward-backward pass on a uniform angular grid: the
//! transition is a banded circular convolution with the discretized von Mises
//! kernel, emissions are evaluated pointwise. The M-step inverts the Bessel
//! ratio on the posterior mean cosines of observation residuals and of state
//! increments. Candidate parameters are scored with the tracker's own
//! sequence log-likelihood.

use alloc::vec;
use alloc::vec::Vec;

use crate::circular::{inv_ratio_unchecked, Angle, KAPPA_MAX};
use crate::math::{cos, exp, TAU};
use crate::tracker::{sequence_log_likelihood, FrameObservation, KalmanParams, Measurement};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Number of quadrature points on the circle.
    pub grid_size: usize,
    /// Stop once the relative log-likelihood gain of an iteration drops below this.
    pub min_rel_improvement: f64,
    /// `(low, high)` clamp applied to both concentrations after each M-step.
    pub kappa_bounds: (f64, f64),
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { max_iters: 50, grid_size: 720, min_rel_improvement: 1e-6, kappa_bounds: (1e-3, KAPPA_MAX) }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.kappa_bounds;
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if self.grid_size < 360 {
            return Err(Error::InvalidInput("grid_size must be at least 360".into()));
        }
        if !(lo >= 1e-3 && lo <= hi && hi <= KAPPA_MAX) {
            return Err(Error::InvalidInput(alloc::format!(
                "kappa_bounds must satisfy 1e-3 <= low <= high <= {KAPPA_MAX}"
            )));
        }
        if !(self.min_rel_improvement >= 0.0) {
            return Err(Error::InvalidInput("min_rel_improvement must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmIterate {
    pub kappa_z: f64,
    pub kappa_phi: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    /// The starting point, scored before any update.
    pub initial: EmIterate,
    /// One row per completed E/M iteration.
    pub iterations: Vec<EmIterate>,
}

/// Smoothed state posteriors of one sequence on the quadrature grid.
#[derive(Debug, Clone)]
pub struct SmoothedSequence {
    pub grid: Vec<Angle>,
    /// Per frame, nonnegative weights summing to one.
    pub posteriors: Vec<Vec<f64>>,
    /// `E[cos(z_{t+1} - z_t)]` for each transition.
    pub transition_cos: Vec<f64>,
    /// `E[cos(phi - z_t)]` for each DOA measurement, in frame order.
    pub observation_cos: Vec<f64>,
}

/// Sufficient statistics pooled over sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PosteriorStats {
    pub observation_cos_sum: f64,
    pub observation_count: usize,
    pub transition_cos_sum: f64,
    pub transition_count: usize,
}

impl PosteriorStats {
    pub fn from_smoothed(s: &SmoothedSequence) -> PosteriorStats {
        PosteriorStats {
            observation_cos_sum: s.observation_cos.iter().sum(),
            observation_count: s.observation_cos.len(),
            transition_cos_sum: s.transition_cos.iter().sum(),
            transition_count: s.transition_cos.len(),
        }
    }

    pub fn merge(&mut self, other: &PosteriorStats) {
        self.observation_cos_sum += other.observation_cos_sum;
        self.observation_count += other.observation_count;
        self.transition_cos_sum += other.transition_cos_sum;
        self.transition_count += other.transition_count;
    }
}

/// Entries of a normalized vector below this fraction of its maximum are
/// skipped when convolving directly.
const SKIP_REL: f64 = 1e-25;
/// Kernel taps below this fraction of the peak are dropped.
const KERNEL_REL: f64 = 1e-25;
/// Fourier coefficients below this fraction of the mean are dropped.
const SPECTRAL_REL: f64 = 1e-17;

/// Discretized zero-mean transition kernel, applied either directly over the
/// offsets `-lo..=hi` or through a truncated Fourier series, whichever is
/// cheaper.
struct Kernel {
    method: Method,
}

enum Method {
    Band { lo: usize, weights: Vec<f64>, cos_weights: Vec<f64> },
    Spectral { coef: Vec<f64>, cos_coef: Vec<f64>, basis: Vec<Vec<f64>> },
}

impl Kernel {
    fn new(grid_size: usize, kappa: f64) -> Kernel {
        let g = grid_size;
        let step = TAU / g as f64;
        let tap = |d: i64| exp(kappa * (cos(step * d as f64) - 1.0));
        let norm: f64 = (0..g as i64).map(tap).sum();
        let mut h = 0usize;
        while 2 * (h + 1) < g && tap(h as i64 + 1) >= KERNEL_REL {
            h += 1;
        }
        let (lo, hi) = if 2 * (h + 1) >= g { (g / 2, g - 1 - g / 2) } else { (h, h) };
        let band_width = lo + hi + 1;

        let cos_tab: Vec<f64> = (0..g).map(|m| cos(step * m as f64)).collect();
        let taps: Vec<f64> = (0..g as i64).map(|d| tap(d) / norm).collect();
        let coef_at = |k: usize, extra: Option<&[f64]>| -> f64 {
            (0..g)
                .map(|d| taps[d] * cos_tab[(k * d) % g] * extra.map_or(1.0, |c| c[d]))
                .sum()
        };
        let mut coef = Vec::new();
        let mut cos_coef = Vec::new();
        // each retained mode costs four multiply-adds per grid point
        while 4 * coef.len() < band_width && 2 * coef.len() < g {
            let k = coef.len();
            let c = coef_at(k, None);
            let cc = coef_at(k, Some(&cos_tab));
            coef.push(c);
            cos_coef.push(cc);
            if k > 0 && c.abs() < SPECTRAL_REL && cc.abs() < SPECTRAL_REL {
                let basis = (0..coef.len())
                    .flat_map(|k| {
                        let c = (0..g).map(|i| cos_tab[(k * i) % g]).collect();
                        let s = (0..g).map(|i| crate::math::sin(step * ((k * i) % g) as f64)).collect();
                        [c, s]
                    })
                    .collect();
                return Kernel { method: Method::Spectral { coef, cos_coef, basis } };
            }
        }
        let offsets = -(lo as i64)..=(hi as i64);
        let weights: Vec<f64> = offsets.clone().map(|d| tap(d) / norm).collect();
        let cos_weights = offsets.zip(&weights).map(|(d, w)| w * cos(step * d as f64)).collect();
        Kernel { method: Method::Band { lo, weights, cos_weights } }
    }

    /// Transition step `out = K * x`. Keeps in `memo` what [`Kernel::backward`]
    /// later needs about `x`.
    fn forward(&self, x: &[f64], memo: &mut Vec<f64>, scratch: &mut Vec<f64>, out: &mut [f64]) {
        match &self.method {
            Method::Band { lo, weights, .. } => {
                band_apply(*lo, weights, x, scratch, out);
                memo.clear();
                memo.extend_from_slice(out);
            }
            Method::Spectral { coef, basis, .. } => {
                analyze(basis, coef.len(), x, memo);
                synthesize(coef, basis, memo, out);
            }
        }
    }

    /// Backward step `out = K * w`, returning `(sum w (Kc * x), sum w (K * x))`
    /// where `Kc` is the kernel weighted by the cosine of its offset and `x`
    /// is the input whose `memo` came from [`Kernel::forward`].
    fn backward(&self, w: &[f64], x: &[f64], memo: &[f64], scratch: &mut Vec<f64>, modes: &mut Vec<f64>, out: &mut [f64]) -> (f64, f64) {
        match &self.method {
            Method::Band { lo, weights, cos_weights } => {
                band_apply(*lo, cos_weights, x, scratch, out);
                let num = dot(w, out);
                let den = dot(w, memo);
                band_apply(*lo, weights, w, scratch, out);
                (num, den)
            }
            Method::Spectral { coef, cos_coef, basis } => {
                analyze(basis, coef.len(), w, modes);
                let g = w.len() as f64;
                let inner = |c: &[f64]| {
                    c.iter()
                        .enumerate()
                        .map(|(k, ck)| {
                            let s = if k == 0 { 1.0 } else { 2.0 };
                            s * ck * (modes[2 * k] * memo[2 * k] + modes[2 * k + 1] * memo[2 * k + 1])
                        })
                        .sum::<f64>()
                        / g
                };
                let moments = (inner(cos_coef), inner(coef));
                synthesize(coef, basis, modes, out);
                moments
            }
        }
    }
}

fn band_apply(lo: usize, taps: &[f64], x: &[f64], ext: &mut Vec<f64>, out: &mut [f64]) {
    let g = x.len();
    let width = taps.len();
    ext.clear();
    ext.resize(g + width - 1, 0.0);
    let cutoff = x.iter().copied().fold(0.0, f64::max) * SKIP_REL;
    for (i, &xi) in x.iter().enumerate() {
        if xi <= cutoff {
            continue;
        }
        for (e, w) in ext[i..i + width].iter_mut().zip(taps) {
            *e += xi * w;
        }
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    // ext[e] holds grid position e - lo
    for (e, v) in ext.iter().enumerate() {
        out[(e + 2 * g - lo) % g] += v;
    }
}

/// Dot product with independent partial sums so the loop pipelines.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Cosine and sine moments of `x` for the first `n_modes` frequencies.
fn analyze(basis: &[Vec<f64>], n_modes: usize, x: &[f64], modes: &mut Vec<f64>) {
    modes.clear();
    for k in 0..n_modes {
        modes.push(dot(x, &basis[2 * k]));
        modes.push(dot(x, &basis[2 * k + 1]));
    }
}

/// Inverse transform of `coef * modes`, clipped at zero.
fn synthesize(coef: &[f64], basis: &[Vec<f64>], modes: &[f64], out: &mut [f64]) {
    let g = out.len() as f64;
    out.iter_mut().for_each(|v| *v = 0.0);
    for (k, c) in coef.iter().enumerate() {
        let scale = if k == 0 { 1.0 } else { 2.0 } * c / g;
        let (a, b) = (modes[2 * k] * scale, modes[2 * k + 1] * scale);
        for ((o, ck), sk) in out.iter_mut().zip(&basis[2 * k]).zip(&basis[2 * k + 1]) {
            *o += a * ck + b * sk;
        }
    }
    out.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn normalize(v: &mut [f64]) -> f64 {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    total
}

fn doa_angles(obs: &FrameObservation) -> Result<impl Iterator<Item = Angle> + '_> {
    if obs.measurements.iter().any(|m| matches!(m, Measurement::Ssl(_))) {
        return Err(Error::InvalidInput("EM fits DOA observations only".into()));
    }
    Ok(obs.measurements.iter().map(|m| match m {
        Measurement::Doa(a) => *a,
        Measurement::Ssl(s) => s.mu,
    }))
}

/// Forward-backward smoothing on a `grid_size`-point grid.
///
/// Empty frames have emission 1. Requires at least two frames and DOA-only
/// measurements.
pub fn smooth_posteriors(
    observations: &[FrameObservation],
    params: &KalmanParams,
    grid_size: usize,
) -> Result<SmoothedSequence> {
    if observations.len() < 2 {
        return Err(Error::InvalidInput("smoothing needs at least two frames".into()));
    }
    if grid_size < 3 {
        return Err(Error::InvalidInput("grid too small".into()));
    }
    let g = grid_size;
    let step = TAU / g as f64;
    let grid_cos: Vec<f64> = (0..g).map(|i| cos(step * i as f64)).collect();
    let grid_sin: Vec<f64> = (0..g).map(|i| crate::math::sin(step * i as f64)).collect();
    let kernel = Kernel::new(g, params.kappa_z);
    let t_len = observations.len();

    // Emissions, scaled to a unit maximum per frame.
    let mut emissions: Vec<Option<Vec<f64>>> = Vec::with_capacity(t_len);
    for obs in observations {
        let mut logit = vec![0.0; g];
        let mut any = false;
        for phi in doa_angles(obs)? {
            any = true;
            let (c, s) = (cos(phi.radians()), crate::math::sin(phi.radians()));
            for i in 0..g {
                logit[i] += params.kappa_phi * (c * grid_cos[i] + s * grid_sin[i]);
            }
        }
        if any {
            let max = logit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            logit.iter_mut().for_each(|v| *v = exp(*v - max));
            emissions.push(Some(logit));
        } else {
            emissions.push(None);
        }
    }

    let mut ext = Vec::new();
    let mut memos = vec![Vec::new(); t_len];
    let mut alpha = vec![vec![0.0; g]; t_len];
    let mut pred = vec![vec![0.0; g]; t_len];
    for t in 0..t_len {
        if t == 0 {
            pred[0].iter_mut().for_each(|v| *v = 1.0 / g as f64);
        } else {
            kernel.forward(&alpha[t - 1], &mut memos[t - 1], &mut ext, &mut pred[t]);
        }
        let a = &mut alpha[t];
        a.copy_from_slice(&pred[t]);
        if let Some(e) = &emissions[t] {
            a.iter_mut().zip(e).for_each(|(x, w)| *x *= w);
        }
        normalize(a);
    }

    let mut beta = vec![1.0 / g as f64; g];
    let mut posteriors = vec![Vec::new(); t_len];
    let mut transition_cos = vec![0.0; t_len - 1];
    let mut weighted = vec![0.0; g];
    let mut modes = Vec::new();
    let gamma = |t: usize, beta: &[f64]| {
        let mut p: Vec<f64> = alpha[t].iter().zip(beta).map(|(a, b)| a * b).collect();
        normalize(&mut p);
        p
    };
    posteriors[t_len - 1] = gamma(t_len - 1, &beta);
    for t in (0..t_len - 1).rev() {
        weighted.copy_from_slice(&beta);
        if let Some(e) = &emissions[t + 1] {
            weighted.iter_mut().zip(e).for_each(|(x, w)| *x *= w);
        }
        let (num, den) = kernel.backward(&weighted, &alpha[t], &memos[t], &mut ext, &mut modes, &mut beta);
        transition_cos[t] = num / den;
        normalize(&mut beta);
        posteriors[t] = gamma(t, &beta);
    }

    let mut observation_cos = Vec::new();
    for (t, obs) in observations.iter().enumerate() {
        for phi in doa_angles(obs)? {
            let (c, s) = (cos(phi.radians()), crate::math::sin(phi.radians()));
            let e: f64 = posteriors[t]
                .iter()
                .enumerate()
                .map(|(i, p)| p * (c * grid_cos[i] + s * grid_sin[i]))
                .sum();
            observation_cos.push(e);
        }
    }

    Ok(SmoothedSequence {
        grid: (0..g).map(|i| Angle::wrap(step * i as f64)).collect(),
        posteriors,
        transition_cos,
        observation_cos,
    })
}

fn invert_clamped(mean_cos: f64, bounds: (f64, f64)) -> f64 {
    let r = mean_cos.clamp(0.0, 1.0);
    let k = if r >= 1.0 { KAPPA_MAX } else { inv_ratio_unchecked(r) };
    k.clamp(bounds.0, bounds.1)
}

/// Bessel-ratio inversion of the pooled mean cosines, clamped to `bounds`.
pub fn m_step(stats: &PosteriorStats, bounds: (f64, f64)) -> Result<KalmanParams> {
    if stats.observation_count == 0 || stats.transition_count == 0 {
        return Err(Error::NoUsableSequence);
    }
    let obs = stats.observation_cos_sum / stats.observation_count as f64;
    let trans = stats.transition_cos_sum / stats.transition_count as f64;
    KalmanParams::new(invert_clamped(trans, bounds), invert_clamped(obs, bounds))
}

/// Drops leading and trailing empty frames, which carry no information.
fn trim(seq: &[FrameObservation]) -> &[FrameObservation] {
    let first = seq.iter().position(|o| !o.is_empty());
    let last = seq.iter().rposition(|o| !o.is_empty());
    match (first, last) {
        (Some(a), Some(b)) => &seq[a..=b],
        _ => &[],
    }
}

fn total_log_likelihood(seqs: &[&[FrameObservation]], params: &KalmanParams) -> Result<f64> {
    seqs.iter()
        .map(|s| sequence_log_likelihood(s, params).map(|r| r.total_log_likelihood))
        .sum()
}

/// E-step statistics for one sequence, for callers that parallelize the E-step.
pub fn sequence_stats(seq: &[FrameObservation], params: &KalmanParams, grid_size: usize) -> Result<PosteriorStats> {
    smooth_posteriors(seq, params, grid_size).map(|s| PosteriorStats::from_smoothed(&s))
}

/// Sequences kept by [`fit`]: trimmed, with at least two observed frames.
pub fn usable_sequences(sequences: &[Vec<FrameObservation>]) -> Vec<&[FrameObservation]> {
    sequences
        .iter()
        .map(|s| trim(s))
        .filter(|s| s.iter().filter(|o| !o.is_empty()).count() >= 2)
        .collect()
}

/// Runs EM from `init`, returning the best-scoring iterate (the initial
/// point included) and the trace.
pub fn fit(sequences: &[Vec<FrameObservation>], init: KalmanParams, config: &EmConfig) -> Result<(KalmanParams, EmTrace)> {
    fit_with(sequences, init, config, |seqs, params, grid| {
        let mut total = PosteriorStats::default();
        for s in seqs {
            total.merge(&sequence_stats(s, params, grid)?);
        }
        Ok(total)
    })
}

/// [`fit`] with a caller-supplied E-step reduction over the usable sequences.
pub fn fit_with<F>(
    sequences: &[Vec<FrameObservation>],
    init: KalmanParams,
    config: &EmConfig,
    mut e_step: F,
) -> Result<(KalmanParams, EmTrace)>
where
    F: FnMut(&[&[FrameObservation]], &KalmanParams, usize) -> Result<PosteriorStats>,
{
    config.validate()?;
    let seqs = usable_sequences(sequences);
    if seqs.is_empty() {
        return Err(Error::NoUsableSequence);
    }
    let (lo, hi) = config.kappa_bounds;
    let mut params = KalmanParams::new(init.kappa_z.clamp(lo, hi), init.kappa_phi.clamp(lo, hi))?;
    let initial_ll = total_log_likelihood(&seqs, &params)?;
    let initial = EmIterate { kappa_z: params.kappa_z, kappa_phi: params.kappa_phi, log_likelihood: initial_ll };
    let mut best = (params, initial_ll);
    let mut prev = initial_ll;
    let mut iterations = Vec::new();
    for _ in 0..config.max_iters {
        let stats = e_step(&seqs, &params, config.grid_size)?;
        params = m_step(&stats, config.kappa_bounds)?;
        let ll = total_log_likelihood(&seqs, &params)?;
        iterations.push(EmIterate { kappa_z: params.kappa_z, kappa_phi: params.kappa_phi, log_likelihood: ll });
        if ll > best.1 {
            best = (params, ll);
        }
        let gain = (ll - prev) / prev.abs().max(f64::MIN_POSITIVE);
        prev = ll;
        if gain < config.min_rel_improvement {
            break;
        }
    }
    Ok((best.0, EmTrace { initial, iterations }))
}
