//! Discrete-grid forward algorithm used as an independent oracle for the
//! von Mises filter. Transitions are applied as an FFT circular convolution;
//! emission densities are normalized numerically on the grid, so no Bessel
//! function from the crate under test is involved.

use circletrack_core::tracker::{FrameObservation, KalmanParams, Measurement};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

pub struct GridOracle {
    n: usize,
    kernel_hat: Vec<Complex<f64>>,
    planner: FftPlanner<f64>,
}

/// `exp(kappa (cos(d) - 1))` on the grid offsets, normalized to sum one.
fn vm_kernel(n: usize, kappa: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|i| (kappa * ((TAU * i as f64 / n as f64).cos() - 1.0)).exp())
        .collect();
    let t: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / t).collect()
}

impl GridOracle {
    pub fn new(n: usize, kappa_z: f64) -> GridOracle {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut kernel_hat: Vec<Complex<f64>> =
            vm_kernel(n, kappa_z).into_iter().map(|v| Complex::new(v, 0.0)).collect();
        fft.process(&mut kernel_hat);
        GridOracle { n, kernel_hat, planner }
    }

    fn convolve(&mut self, p: &[f64]) -> Vec<f64> {
        let fwd = self.planner.plan_fft_forward(self.n);
        let inv = self.planner.plan_fft_inverse(self.n);
        let mut buf: Vec<Complex<f64>> = p.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        inv.process(&mut buf);
        buf.iter().map(|c| (c.re / self.n as f64).max(0.0)).collect()
    }

    /// Emission density over the grid states, as a continuous density in the
    /// observation (grid integral normalization).
    fn emission(&self, mean: f64, kappa: f64) -> Vec<f64> {
        let h = TAU / self.n as f64;
        let raw: Vec<f64> = (0..self.n)
            .map(|i| (kappa * ((mean - h * i as f64).cos() - 1.0)).exp())
            .collect();
        let norm: f64 = raw.iter().sum::<f64>() * h;
        raw.into_iter().map(|v| v / norm).collect()
    }

    pub fn log_likelihood(&mut self, seq: &[FrameObservation], params: &KalmanParams) -> f64 {
        let n = self.n;
        let mut p = vec![1.0 / n as f64; n];
        let mut total = 0.0;
        for (t, obs) in seq.iter().enumerate() {
            if t > 0 {
                p = self.convolve(&p);
            }
            for m in &obs.measurements {
                let (mean, kappa) = match *m {
                    Measurement::Doa(phi) => (phi.radians(), params.kappa_phi),
                    Measurement::Ssl(s) => (s.mu.radians(), s.rho),
                };
                let e = self.emission(mean, kappa);
                let lik: f64 = p.iter().zip(&e).map(|(a, b)| a * b).sum();
                total += lik.ln();
                p.iter_mut().zip(&e).for_each(|(a, b)| *a *= b / lik);
            }
        }
        total
    }
}

/// Random DOA/SSL sequence drawn from the tracker's own generative model:
/// 20% empty frames, 10% frames with a second measurement.
pub fn random_model_sequence<R: rand::Rng>(
    rng: &mut R,
    len: usize,
    params: &KalmanParams,
) -> Vec<FrameObservation> {
    use circletrack_core::circular::{vm_sample, Angle, VonMises};
    use circletrack_core::ssl::SslSummary;
    let mut z = Angle::new(rng.random_range(-3.1..3.1)).unwrap();
    let step = VonMises::new(Angle::ZERO, params.kappa_z).unwrap();
    let draw = |rng: &mut R, z: Angle| -> Measurement {
        if rng.random::<f64>() < 0.5 {
            let e = VonMises::new(z, params.kappa_phi).unwrap();
            Measurement::Doa(vm_sample(&e, rng))
        } else {
            let rho = params.kappa_phi * rng.random_range(0.3..1.0);
            let e = VonMises::new(z, rho).unwrap();
            Measurement::Ssl(SslSummary { rho, mu: vm_sample(&e, rng) })
        }
    };
    (0..len)
        .map(|t| {
            if t > 0 {
                z = z.rotate(vm_sample(&step, rng).radians());
            }
            let u: f64 = rng.random();
            let k = if u < 0.2 { 0 } else if u < 0.3 { 2 } else { 1 };
            FrameObservation { measurements: (0..k).map(|_| draw(rng, z)).collect() }
        })
        .collect()
}
