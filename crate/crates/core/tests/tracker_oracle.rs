mod support;

use circletrack_core::circular::{vm_sample, Angle, VonMises};
use circletrack_core::rng::substream;
use circletrack_core::tracker::{sequence_log_likelihood, FrameObservation, KalmanParams};
use rand::Rng;
use support::grid::{random_model_sequence, GridOracle};

fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn two_identical_doas_match_grid() {
    let p = KalmanParams::new(10.0, 5.0).unwrap();
    let seq = vec![FrameObservation::doa(Angle::new(0.7).unwrap()); 2];
    let ll = sequence_log_likelihood(&seq, &p).unwrap().total_log_likelihood;
    let grid = GridOracle::new(3600, p.kappa_z).log_likelihood(&seq, &p);
    assert!(rel_err(ll, grid) <= 0.01, "{ll} vs {grid}");
}

#[test]
fn fifty_model_doa_frames_match_grid() {
    let p = KalmanParams::new(20.0, 8.0).unwrap();
    let mut rng = substream(2024, "oracle-doa", 0);
    let step = VonMises::new(Angle::ZERO, p.kappa_z).unwrap();
    let mut z = Angle::new(rng.random_range(-3.0..3.0)).unwrap();
    let seq: Vec<FrameObservation> = (0..50)
        .map(|_| {
            z = z.rotate(vm_sample(&step, &mut rng).radians());
            FrameObservation::doa(vm_sample(&VonMises::new(z, p.kappa_phi).unwrap(), &mut rng))
        })
        .collect();
    let ll = sequence_log_likelihood(&seq, &p).unwrap().total_log_likelihood;
    let grid = GridOracle::new(3600, p.kappa_z).log_likelihood(&seq, &p);
    assert!(rel_err(ll, grid) <= 0.01, "{ll} vs {grid}");
}

/// Per observed frame the approximate prediction stays close to the exact
/// grid recursion; outlying observations far in the predictive tail are
/// where the two differ most.
#[test]
fn model_sequences_track_grid_per_frame() {
    let mut rng = substream(99, "oracle-model", 0);
    for _ in 0..30 {
        let p = KalmanParams::new(rng.random_range(0.5..100.0), rng.random_range(0.5..100.0)).unwrap();
        let len = rng.random_range(2..=100);
        let seq = random_model_sequence(&mut rng, len, &p);
        let r = sequence_log_likelihood(&seq, &p).unwrap();
        let grid = GridOracle::new(3600, p.kappa_z).log_likelihood(&seq, &p);
        let per_frame = (r.total_log_likelihood - grid).abs() / r.observed_frame_count.max(1) as f64;
        assert!(per_frame < 0.05, "{p:?}: {} vs {grid}", r.total_log_likelihood);
    }
}

#[test]
fn uniform_outliers_expose_the_convolution_approximation() {
    // Observations unrelated to any track sit in the predictive tails, where
    // the von Mises stand-in for the convolution is least accurate.
    let p = KalmanParams::new(20.0, 8.0).unwrap();
    let mut rng = substream(2024, "oracle-uniform", 0);
    let seq: Vec<FrameObservation> = (0..50)
        .map(|_| FrameObservation::doa(Angle::new(rng.random_range(-3.1..3.1)).unwrap()))
        .collect();
    let ll = sequence_log_likelihood(&seq, &p).unwrap().total_log_likelihood;
    let grid = GridOracle::new(3600, p.kappa_z).log_likelihood(&seq, &p);
    assert!(rel_err(ll, grid) < 0.15);
}
