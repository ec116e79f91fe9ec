//! Geometry, mode and noise-statistics checks against closed forms.

use std::f64::consts::PI;

use modeflux::correlation::{Correlation, CorrelationModel, PathSynthesizer, SynthesisOptions};
use modeflux::geometry::{find_turning_points, mode_count_for_width, WidthProfile};
use modeflux::modes::{beta_propagating, eigenfunction, mu};
use modeflux::Error;

#[test]
fn linear_profile_turning_points_match_closed_form() {
    // 2D crosses the integers 5 and 4 at D = 2.5 and D = 2.0.
    let profile = WidthProfile::PiecewiseLinear { z: vec![-400.0, 0.0], d: vec![1.9, 2.6] };
    let layout = find_turning_points(2.0 * PI, &profile, 450.0).unwrap();
    let expected = [-400.0 * 0.1 / 0.7, -400.0 * 0.6 / 0.7];
    assert_eq!(layout.left_turning_points.len(), 2);
    for (z, e) in layout.left_turning_points.iter().zip(expected) {
        assert!((z - e).abs() < 1e-9, "{z} vs {e}");
    }
    assert_eq!((layout.n0, layout.n_min), (5, 3));
    let counts: Vec<usize> = layout.left_sectors().iter().map(|s| s.2).collect();
    assert_eq!(counts, vec![5, 4, 3]);
    assert!(layout.right_turning_points.is_empty());
}

#[test]
fn capped_ramp_is_continuously_differentiable() {
    let p = WidthProfile::linear_capped(-1000.0, 0.0, 20.0, 20.49, 0.2, 19.999, 20.491).unwrap();
    for z0 in [-1000.2, -1000.0, -999.8, -0.2, 0.0, 0.2] {
        let h = 1e-7;
        let (d_minus, s_minus) = p.evaluate(z0 - h);
        let (d_plus, s_plus) = p.evaluate(z0 + h);
        assert!((d_plus - d_minus).abs() < 1e-6, "jump in D at {z0}");
        assert!((s_plus - s_minus).abs() < 1e-4, "jump in D' at {z0}: {s_minus} vs {s_plus}");
    }
    let fd = (p.d_at(-500.0 + 1e-3) - p.d_at(-500.0 - 1e-3)) / 2e-3;
    assert!((fd - p.d_prime_at(-500.0)).abs() < 1e-9);
    assert!((p.d_at(-2000.0) - 19.999).abs() < 1e-15 && (p.d_at(100.0) - 20.491).abs() < 1e-15);
}

#[test]
fn non_monotone_profile_is_rejected() {
    let bad = WidthProfile::tabulated(vec![-2.0, -1.0, 0.0], vec![2.6, 2.0, 2.6]);
    let err = bad.and_then(|p| find_turning_points(2.0 * PI, &p, 3.0).map(|_| ()));
    assert!(matches!(err, Err(Error::NonMonotoneProfile { .. })), "{err:?}");
}

#[test]
fn dispersion_relation_and_mode_count() {
    let k = 2.0 * PI;
    for d in [0.7, 2.6, 20.25, 20.49] {
        let n = mode_count_for_width(k, d);
        assert!(mu(n, d) < k && mu(n + 1, d) >= k);
        for j in 1..=n {
            let b = beta_propagating(k, j, d).unwrap();
            assert!((b * b + mu(j, d).powi(2) - k * k).abs() < 1e-11 * k * k);
        }
        assert!(beta_propagating(k, n + 1, d).is_err());
    }
}

#[test]
fn eigenfunctions_are_orthonormal_by_simpson_rule() {
    let d = 2.6;
    let n = 4000;
    let h = d / n as f64;
    for j in 1..=5 {
        for q in j..=5 {
            let mut s = 0.0;
            for i in 0..=n {
                let rho = -0.5 * d + i as f64 * h;
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * eigenfunction(j, rho, d).unwrap() * eigenfunction(q, rho, d).unwrap();
            }
            s *= h / 3.0;
            let expected = if j == q { 1.0 } else { 0.0 };
            assert!((s - expected).abs() < 1e-10, "({j},{q}): {s}");
        }
    }
}

#[test]
fn gaussian_spectrum_is_the_fourier_transform_of_the_autocorrelation() {
    let corr = Correlation::unit(CorrelationModel::Gaussian);
    for beta in [0.0, 0.5, 1.97, 4.0] {
        // Trapezoid rule on a Gaussian is spectrally accurate.
        let h = 0.01;
        let s: f64 = (-1200..=1200).map(|i| {
            let z = i as f64 * h;
            (-0.5 * z * z).exp() * (beta * z).cos()
        }).sum::<f64>() * h;
        assert!((corr.psd(beta) - s).abs() < 1e-12, "beta {beta}: {} vs {s}", corr.psd(beta));
    }
    // Physical correlation length: R̂_ℓ(β) = ℓ R̂(ℓβ).
    let scaled = Correlation::new(CorrelationModel::Gaussian, 3.0).unwrap();
    for beta in [0.1, 0.6, 1.97] {
        assert!((scaled.psd(beta) - 3.0 * corr.psd(3.0 * beta)).abs() < 1e-14);
    }
}

#[test]
fn synthesized_paths_reproduce_the_autocorrelation() {
    let dz = 0.05;
    let synth = PathSynthesizer::new(&CorrelationModel::Gaussian, 0.0, 20.0, dz, SynthesisOptions::default()).unwrap();
    let n_paths = 4000;
    let lags = [0usize, 10, 20, 40];
    let mut acc = [0.0; 4];
    let mut slope = 0.0;
    for stream in 0..n_paths {
        let p = synth.synthesize(7, stream);
        let nu = &p.values[0];
        for (a, &lag) in acc.iter_mut().zip(&lags) {
            *a += nu[100] * nu[100 + lag];
        }
        slope += p.values[1][100] * p.values[1][100];
    }
    for (a, &lag) in acc.iter().zip(&lags) {
        let emp = a / n_paths as f64;
        let exact = (-0.5 * (lag as f64 * dz).powi(2)).exp();
        assert!((emp - exact).abs() < 0.1, "lag {lag}: {emp} vs {exact}");
    }
    // E[ν′²] = −R″(0) = 1 for the unit Gaussian.
    let emp_slope = slope / n_paths as f64;
    assert!((emp_slope - 1.0).abs() < 0.1, "{emp_slope}");
    // Identical seeds and streams give identical paths.
    assert_eq!(synth.synthesize(7, 3).values, synth.synthesize(7, 3).values);
}
