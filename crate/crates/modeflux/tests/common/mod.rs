//! Shared fixtures: the five-mode scaled toy guide used by the Monte Carlo
//! checks, and a symbolic generator-action oracle for two-mode moments.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use modeflux::correlation::{Correlation, CorrelationModel};
use modeflux::coupling::CouplingOptions;
use modeflux::geometry::WidthProfile;
use modeflux::montecarlo::{McConfig, McGuide};
use modeflux::transport::{evolve_moments, source_amplitudes, ChainStart, GuideCoupling, MomentState, Side, SourceSpec, TransportOptions};
use nalgebra::DMatrix;
use num_complex::Complex64;

pub const TOY_SIGMA: f64 = 0.7;
pub const TOY_K: f64 = 2.0 * PI;

/// Opening 2.6 at the source, narrowing linearly (one turning point at
/// z = −1, five → four modes). The Monte Carlo sector is [−0.5, 0].
pub fn toy_profile() -> WidthProfile {
    WidthProfile::PiecewiseLinear { z: vec![-1.5, 0.0], d: vec![2.45, 2.6] }
}

pub fn toy_guide() -> McGuide {
    McGuide { k: TOY_K, sigma: TOY_SIGMA, model: CorrelationModel::Gaussian, profile: toy_profile(), curvature: 0.0 }
}

pub fn toy_checkpoints() -> Vec<f64> {
    (1..=10).map(|i| -0.05 * i as f64).collect()
}

pub fn toy_config(epsilon: f64, n_trajectories: usize) -> McConfig {
    McConfig {
        epsilon,
        n_trajectories,
        step: epsilon / 10.0,
        seed: 11,
        include_sigma2_terms: false,
        include_slow_terms: true,
        z_left: -0.5,
        z_right: 0.0,
        n_modes: 5,
        checkpoints: toy_checkpoints(),
    }
}

/// Left-going source amplitudes of a point source at D/7 off the wall.
pub fn toy_source() -> Vec<Complex64> {
    let spec = SourceSpec { f: Complex64::new(1.0, 0.0), rho_star: 2.6 / 7.0 };
    source_amplitudes(&spec, TOY_K, 2.6).unwrap().0
}

/// Diffusion-limit moments at the toy checkpoints.
pub fn toy_prediction(init: &[Complex64]) -> Vec<MomentState> {
    let corr = Correlation::unit(CorrelationModel::Gaussian);
    let profile = toy_profile();
    let provider = GuideCoupling::new(TOY_K, TOY_SIGMA, &corr, &profile, CouplingOptions::default());
    let mut opts = TransportOptions::new(0.0);
    opts.mean_amplitudes = true;
    evolve_moments(&ChainStart::from_amplitudes(init), Side::Left, 0, 0.0, -0.5, &toy_checkpoints(), &provider, &opts).unwrap()
}

/// Polynomials in (P_1, P_2) as exponent → coefficient maps.
type Poly = BTreeMap<(u32, u32), f64>;

fn d(p: &Poly, var: usize) -> Poly {
    let mut out = Poly::new();
    for (&(a, b), &c) in p {
        let (e, na, nb) = if var == 0 { (a, a.wrapping_sub(1), b) } else { (b, a, b.wrapping_sub(1)) };
        if e > 0 {
            *out.entry((na, nb)).or_default() += c * e as f64;
        }
    }
    out
}

fn mul_monomial(p: &Poly, m: (u32, u32), c: f64) -> Poly {
    p.iter().map(|(&(a, b), &v)| ((a + m.0, b + m.1), v * c)).collect()
}

fn add(acc: &mut Poly, p: &Poly) {
    for (&k, &v) in p {
        *acc.entry(k).or_default() += v;
    }
}

/// 𝓛f = Σ_{a≠b} G_ab [P_aP_b(∂_a − ∂_b)∂_a f + (P_b − P_a)∂_a f].
pub fn generator(g: &DMatrix<f64>, f: &Poly) -> Poly {
    let unit = |i: usize| if i == 0 { (1, 0) } else { (0, 1) };
    let mut out = Poly::new();
    for a in 0..2 {
        for b in 0..2 {
            if a == b {
                continue;
            }
            let gab = g[(a, b)];
            let da = d(f, a);
            let daa = d(&da, a);
            let dba = d(&da, b);
            let papb = (1, 1);
            add(&mut out, &mul_monomial(&daa, papb, gab));
            add(&mut out, &mul_monomial(&dba, papb, -gab));
            add(&mut out, &mul_monomial(&da, unit(b), gab));
            add(&mut out, &mul_monomial(&da, unit(a), -gab));
        }
    }
    out
}

/// Matrix A of the generator acting on the degree-two monomials
/// (P₁², P₁P₂, P₂²): 𝓛(m_i) = Σ_c A_ic m_c. Left-going second moments then
/// obey ∂_z E[m] = −A E[m].
pub fn generator_action_matrix(gc: &DMatrix<f64>) -> DMatrix<f64> {
    let monomials = [(2u32, 0u32), (1, 1), (0, 2)];
    let mut a = DMatrix::zeros(3, 3);
    for (i, &m) in monomials.iter().enumerate() {
        let img = generator(gc, &BTreeMap::from([(m, 1.0)]));
        for (&k, &v) in &img {
            let col = monomials.iter().position(|&x| x == k).expect("closed at degree two");
            a[(i, col)] += v;
        }
    }
    a
}
