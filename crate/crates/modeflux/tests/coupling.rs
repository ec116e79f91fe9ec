//! Coupling coefficients against independent oracles.

use std::f64::consts::PI;

use modeflux::correlation::{Correlation, CorrelationModel};
use modeflux::coupling::{coupling_set, length_scales, CouplingOptions};

fn preset() -> (f64, f64, Correlation) {
    (2.0 * PI, 0.003f64.sqrt(), Correlation::new(CorrelationModel::Gaussian, 3.0).unwrap())
}

/// κ_j at D = 20.49 from a Faddeeva-function closed form of the Laplace
/// integral summed over 20 000 evanescent modes.
const KAPPA_ORACLE: [(usize, f64); 5] = [
    (1, -0.000_298_310_433_690_061_4),
    (7, -0.014_436_825_086_835_274),
    (20, -0.109_962_710_345_013_34),
    (39, 0.566_677_552_242_822),
    (40, 1.965_795_936_225_007_5),
];

#[test]
fn kappa_matches_closed_form_oracle() {
    let (k, sigma, corr) = preset();
    let set = coupling_set(k, sigma, &corr, 20.49, 40, 0.0, &CouplingOptions::default()).unwrap();
    for (j, expected) in KAPPA_ORACLE {
        let got = set.kappa[j - 1];
        assert!((got - expected).abs() < 1e-8 * expected.abs(), "j={j}: {got} vs {expected}");
        assert!(set.kappa_tail_bound[j - 1] < 1e-8 * got.abs());
    }
}

#[test]
fn kappa_cutoff_doubling_is_stable() {
    let (k, sigma, corr) = preset();
    let base = coupling_set(k, sigma, &corr, 20.49, 40, 0.0, &CouplingOptions::default()).unwrap();
    let opts = CouplingOptions { evanescent_cutoff: 400, ..Default::default() };
    let doubled = coupling_set(k, sigma, &corr, 20.49, 40, 0.0, &opts).unwrap();
    for j in 0..40 {
        let rel = (base.kappa[j] - doubled.kappa[j]).abs() / doubled.kappa[j].abs();
        assert!(rel < 1e-8, "j={}: rel change {rel:e}", j + 1);
    }
}

#[test]
fn gc_is_symmetric_generator() {
    let (k, sigma, corr) = preset();
    let set = coupling_set(k, sigma, &corr, 20.25, 40, 0.0, &CouplingOptions::default()).unwrap();
    let scale = set.gc.amax();
    for j in 0..40 {
        let row: f64 = (0..40).map(|l| set.gc[(j, l)]).sum();
        assert!(row.abs() < 1e-13 * scale);
        let col: f64 = (0..40).map(|l| set.gs[(l, j)]).sum();
        assert!(col.abs() < 1e-13 * set.gs.amax());
        for l in 0..40 {
            assert_eq!(set.gc[(j, l)], set.gc[(l, j)]);
            if l != j {
                assert!(set.gc[(j, l)] >= 0.0);
            }
        }
    }
    let ls = length_scales(&set).unwrap();
    assert!(ls.spectrum[0].abs() < 1e-10 * scale && ls.null_vector_deviation < 1e-8);
    for j in 0..40 {
        assert!(ls.smf[j] <= ls.tmf[j] * (1.0 + 1e-12));
    }
}

#[test]
fn sine_transform_matches_dawson_oracle() {
    // ∫₀^∞ e^{−ζ²/2} sin(βζ) dζ = √2·F(β/√2) with Dawson's F, here checked
    // against composite Simpson on [0, 12].
    let corr = Correlation::unit(CorrelationModel::Gaussian);
    for beta in [0.3, 1.0, 2.5, 6.0] {
        let n = 24_000;
        let h = 12.0 / n as f64;
        let f = |z: f64| (-0.5 * z * z).exp() * (beta * z).sin();
        let mut s = f(0.0) + f(12.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let simpson = s * h / 3.0;
        assert!((corr.sine_half_transform(beta) - simpson).abs() < 1e-11, "beta={beta}");
    }
}
