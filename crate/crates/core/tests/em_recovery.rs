use circletrack_core::circular::{vm_sample, VonMises};
use circletrack_core::em::{fit, EmConfig};
use circletrack_core::rng::substream;
use circletrack_core::tracker::{FrameObservation, KalmanParams};
use rand::Rng;

fn simulate(seed: u64, count: u64, len: usize, truth: &KalmanParams) -> Vec<Vec<FrameObservation>> {
    (0..count)
        .map(|i| {
            let mut rng = substream(seed, "em-recovery", i);
            let mut z = vm_sample(&VonMises::uniform(), &mut rng);
            (0..len)
                .map(|t| {
                    if t > 0 {
                        z = vm_sample(&VonMises::new(z, truth.kappa_z).unwrap(), &mut rng);
                    }
                    FrameObservation::doa(vm_sample(&VonMises::new(z, truth.kappa_phi).unwrap(), &mut rng))
                })
                .collect()
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b
}

#[test]
fn recovers_reference_parameters() {
    let truth = KalmanParams::new(50.0, 20.0).unwrap();
    let seqs = simulate(2024, 10, 500, &truth);
    let (est, trace) = fit(&seqs, KalmanParams::new(5.0, 5.0).unwrap(), &EmConfig::default()).unwrap();
    assert!(rel(est.kappa_z, 50.0) <= 0.2, "{est:?} after {} iterations", trace.iterations.len());
    assert!(rel(est.kappa_phi, 20.0) <= 0.2, "{est:?}");
}

#[test]
fn truth_is_near_a_fixed_point() {
    let truth = KalmanParams::new(50.0, 20.0).unwrap();
    let seqs = simulate(7, 10, 500, &truth);
    let (_, trace) = fit(&seqs, truth, &EmConfig::default()).unwrap();
    let init = trace.initial.log_likelihood;
    let last = trace.iterations.last().unwrap().log_likelihood;
    assert!(last >= init - 0.005 * init.abs(), "{last} vs {init}");
}

#[test]
fn random_truths_median_error() {
    let mut rng = substream(99, "em-truths", 0);
    let mut errs_z = Vec::new();
    let mut errs_phi = Vec::new();
    for k in 0..5 {
        let truth = KalmanParams::new(rng.random_range(2.0..200.0), rng.random_range(2.0..200.0)).unwrap();
        let seqs = simulate(500 + k, 10, 500, &truth);
        let (est, _) = fit(&seqs, KalmanParams::new(5.0, 5.0).unwrap(), &EmConfig::default()).unwrap();
        errs_z.push(rel(est.kappa_z, truth.kappa_z));
        errs_phi.push(rel(est.kappa_phi, truth.kappa_phi));
    }
    errs_z.sort_by(f64::total_cmp);
    errs_phi.sort_by(f64::total_cmp);
    assert!(errs_z[2] <= 0.25 && errs_phi[2] <= 0.25, "{errs_z:?} {errs_phi:?}");
}
