use super::*;
use crate::rng::substream;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::vec::Vec;

/// Midpoint-rule integral of `f` over one period with `n` points.
fn quad(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = TAU / n as f64;
    (0..n).map(|i| f(-PI + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

fn vm(mean: f64, k: f64) -> VonMises {
    VonMises::new(Angle::wrap(mean), k).unwrap()
}

#[test]
fn wrap_examples() {
    assert!((wrap_angle(3.0 * FRAC_PI_2).unwrap().radians() + FRAC_PI_2).abs() < 1e-15);
    assert_eq!(wrap_angle(PI).unwrap().radians(), PI);
    assert_eq!(wrap_angle(-PI).unwrap().radians(), PI);
    assert!(wrap_angle(f64::INFINITY).is_err());
    assert!(wrap_angle(f64::NAN).is_err());
}

#[test]
fn log_pdf_examples() {
    let u = vm(0.3, 0.0);
    assert!((u.log_pdf(Angle::wrap(0.3)) + 1.837_877_066_409_345).abs() < 1e-12);
    // I0(2) = 2.2795853023360673
    let d = vm(0.3, 2.0);
    let expected = 2.0 - (TAU * 2.279_585_302_336_067_3).ln();
    assert!((d.log_pdf(Angle::wrap(0.3)) - expected).abs() < 1e-12);
}

#[test]
fn log_pdf_integrates_to_one() {
    for &k in &[0.0, 0.1, 1.0, 10.0, 100.0] {
        let d = vm(1.1, k);
        let total = quad(3600, |x| d.log_pdf(Angle::wrap(x)).exp());
        assert!((total - 1.0).abs() < 1e-8, "k={k} total={total}");
    }
}

#[test]
fn multiply_examples() {
    let p = vm_multiply(&vm(0.7, 1.5), &vm(0.7, 2.5));
    assert!((p.concentration() - 4.0).abs() < 1e-12);
    assert!(p.mean.distance(Angle::wrap(0.7)) < 1e-12);

    let p = vm_multiply(&vm(0.7, 3.0), &vm(0.7 + PI, 3.0));
    assert!(p.concentration() < 1e-9);

    let p = vm_multiply(&vm(0.0, 2.0), &vm(FRAC_PI_2, 2.0));
    assert!((p.concentration() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    assert!(p.mean.distance(Angle::wrap(FRAC_PI_4)) < 1e-12);
}

#[test]
fn convolve_examples() {
    let s = vm(0.4, 3.0);
    let c = vm_convolve_approx(&s, KAPPA_MAX);
    assert_eq!(c.mean, s.mean);
    assert!((c.concentration() - 3.0).abs() < 1e-4);

    let c = vm_convolve_approx(&s, 0.0);
    assert_eq!(c.concentration(), 0.0);

    // A(2) = 0.697774657964008; A^-1(A(2)^2) by bisection on the ratio.
    let c = vm_convolve_approx(&vm(0.0, 2.0), 2.0);
    let target = 0.697_774_657_964_008f64.powi(2);
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio_unchecked(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((c.concentration() - lo).abs() < 1e-9);
    assert!((c.concentration() - 1.1).abs() < 0.05);
}

#[test]
fn exact_conv_examples() {
    let uniform = vm(0.2, 0.0);
    assert!((vm_exact_conv_log_density(Angle::wrap(2.0), 7.0, &uniform) + LOG_TAU).abs() < 1e-14);

    let st = vm(0.5, 3.0);
    let v = vm_exact_conv_log_density(Angle::wrap(0.5), 4.0, &st);
    let expected = log_i0_unchecked(7.0) - LOG_TAU - log_i0_unchecked(4.0) - log_i0_unchecked(3.0);
    assert!((v - expected).abs() < 1e-12);
}

/// Dense-grid oracle: `int vm(x | z, kappa) vm(z | state) dz`.
fn conv_grid(x: f64, kappa: f64, state: &VonMises) -> f64 {
    let obs = |z: f64| vm(z, kappa).log_pdf(Angle::wrap(x)).exp();
    quad(3600, |z| obs(z) * state.log_pdf(Angle::wrap(z)).exp()).ln()
}

#[test]
fn exact_conv_matches_grid_quadrature() {
    let st = vm(0.0, 3.0);
    let v = vm_exact_conv_log_density(Angle::wrap(1.0), 5.0, &st);
    assert!((v - conv_grid(1.0, 5.0, &st)).abs() < 1e-6);

    let mut rng = substream(11, "conv-grid", 0);
    for _ in 0..100 {
        let x = rng.random_range(-PI..PI);
        let kappa = rng.random_range(0.0..60.0);
        let st = vm(rng.random_range(-PI..PI), rng.random_range(0.0..60.0));
        let v = vm_exact_conv_log_density(Angle::wrap(x), kappa, &st);
        let g = conv_grid(x, kappa, &st);
        assert!((v - g).abs() < 1e-6, "x={x} k={kappa} st={st:?}: {v} vs {g}");
    }
}

#[test]
fn exact_conv_is_a_density() {
    for &(kappa, k, m) in &[(5.0, 3.0, 0.0), (0.5, 40.0, 2.0), (80.0, 80.0, -3.0)] {
        let st = vm(m, k);
        let total = quad(3600, |x| vm_exact_conv_log_density(Angle::wrap(x), kappa, &st).exp());
        assert!((total - 1.0).abs() < 1e-6);
    }
}

#[test]
fn sampling_uniform_has_small_resultant() {
    let mut rng = substream(3, "sample", 0);
    let d = VonMises::uniform();
    let draws: Vec<Angle> = (0..100_000).map(|_| vm_sample(&d, &mut rng)).collect();
    assert!(circular_mean(draws).1 <= 0.01);
}

#[test]
fn sampling_concentrated_mean_and_spread() {
    let mut rng = substream(3, "sample", 1);
    let d = vm(1.0, 50.0);
    let draws: Vec<Angle> = (0..100_000).map(|_| vm_sample(&d, &mut rng)).collect();
    let (mean, r) = circular_mean(draws);
    assert!(mean.distance(Angle::wrap(1.0)) < 0.02);
    assert!((r - ratio_unchecked(50.0)).abs() < 2e-3);
}

#[test]
fn sampling_is_deterministic() {
    let d = vm(-2.0, 4.0);
    let a = vm_sample(&d, &mut substream(5, "s", 0));
    let b = vm_sample(&d, &mut substream(5, "s", 0));
    assert_eq!(a, b);
    let huge = vm(0.5, KAPPA_MAX);
    assert!(vm_sample(&huge, &mut substream(5, "s", 1)).distance(Angle::wrap(0.5)) < 0.01);
}

fn close(a: &VonMises, b: &VonMises) -> bool {
    (a.concentration() - b.concentration()).abs() <= 1e-10 * (1.0 + a.concentration())
        && (a.concentration() < 1e-9 || a.mean.distance(b.mean) <= 1e-10)
}

proptest! {
    #[test]
    fn wrap_is_congruent(x in -1e4f64..1e4) {
        let a = wrap_angle(x).unwrap().radians();
        prop_assert!(a > -PI && a <= PI);
        let k = ((x - a) / TAU).round();
        prop_assert!((x - a - k * TAU).abs() < 1e-9);
    }

    #[test]
    fn ratio_roundtrip(k in 0.0f64..1e4) {
        let back = inv_bessel_ratio(bessel_ratio(k).unwrap()).unwrap();
        prop_assert!((back - k).abs() <= 1e-6 * k.max(1e-12), "k={} back={}", k, back);
    }

    #[test]
    fn ratio_is_monotone(k in 0.0f64..1e5, dk in 1e-3f64..10.0) {
        prop_assert!(ratio_unchecked(k + dk) >= ratio_unchecked(k));
    }

    #[test]
    fn multiply_commutes_and_associates(
        m1 in -PI..PI, k1 in 0.0f64..100.0,
        m2 in -PI..PI, k2 in 0.0f64..100.0,
        m3 in -PI..PI, k3 in 0.0f64..100.0,
    ) {
        let (a, b, c) = (vm(m1, k1), vm(m2, k2), vm(m3, k3));
        prop_assert!(close(&vm_multiply(&a, &b), &vm_multiply(&b, &a)));
        let left = vm_multiply(&vm_multiply(&a, &b), &c);
        let right = vm_multiply(&a, &vm_multiply(&b, &c));
        // Mean direction is ill-conditioned when the product is nearly uniform.
        if left.concentration() > 1e-3 {
            prop_assert!((left.concentration() - right.concentration()).abs() <= 1e-10 * (1.0 + left.concentration()));
            prop_assert!(left.mean.distance(right.mean) <= 1e-10 * (1.0 + 100.0 / left.concentration()));
        }
    }

    #[test]
    fn convolution_never_sharpens(m in -PI..PI, k in 0.0f64..1e4, kz in 0.0f64..1e4) {
        let c = vm_convolve_approx(&vm(m, k), kz);
        prop_assert!(c.concentration() <= k.min(kz) + 1e-9);
    }
}
