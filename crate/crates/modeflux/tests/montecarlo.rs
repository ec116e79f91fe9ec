//! Pre-limit trajectories against the diffusion-limit moment equations.

mod common;

use common::*;
use modeflux::correlation::{Correlation, CorrelationModel, PathSynthesizer, SynthesisOptions};
use modeflux::coupling::{coupling_set, CouplingOptions, CouplingSet};
use modeflux::error::Result;
use modeflux::montecarlo::{assemble_upsilon_bb, compare_to_moments, integrate_trajectory, run_ensemble, McConfig, McGrid, McGuide, UpsilonFlags};
use modeflux::transport::{evolve_moments, ChainStart, CouplingProvider, GuideCoupling, MomentState, Side, TransportOptions};
use modeflux::geometry::WidthProfile;
use nalgebra::DMatrix;
use num_complex::Complex64;

#[test]
fn upsilon_reductions() {
    let path = PathSynthesizer::new(&CorrelationModel::Gaussian, 0.0, 50.0, 0.01, SynthesisOptions::default()).unwrap().synthesize(3, 0);
    let psi = [0.3, 1.1, -0.4];
    let off = UpsilonFlags { sigma2_terms: false, slow_terms: false };
    let u = assemble_upsilon_bb(0.2, &path, TOY_K, 0.0, 0.01, 2.6, 0.1, 0.0, &psi, off).unwrap();
    assert!(u.iter().all(|v| v.norm() == 0.0));
    let on = UpsilonFlags { sigma2_terms: true, slow_terms: true };
    let a = assemble_upsilon_bb(0.2, &path, TOY_K, 0.0, 0.01, 2.6, 0.1, 0.0, &psi, on).unwrap();
    let b = assemble_upsilon_bb(0.3, &path, TOY_K, 0.0, 0.01, 2.6, 0.1, 0.0, &psi, on).unwrap();
    assert_eq!(a, b, "noise-free entries depend only on the deterministic data");
    // D′ couples modes of equal parity only (curvature is zero here).
    assert!(a[(0, 2)].norm() > 0.0 && a[(0, 1)].norm() == 0.0 && a[(0, 0)].norm() == 0.0);
    assert!(assemble_upsilon_bb(0.6, &path, TOY_K, 0.5, 0.01, 2.6, 0.0, 0.0, &psi, off).is_err(), "ζ = 60 lies beyond the path");
}

/// Maximum drift of Σ|b_j|² for a noise-free, curved two-mode guide.
fn deterministic_drift(epsilon: f64, step: f64) -> f64 {
    let guide = McGuide { k: TOY_K, sigma: 0.0, model: CorrelationModel::Gaussian, profile: WidthProfile::PiecewiseLinear { z: vec![-1.0, 0.0], d: vec![1.5, 2.5] }, curvature: 0.4 };
    let mc = McConfig { epsilon, n_trajectories: 2, step, seed: 1, include_sigma2_terms: false, include_slow_terms: true, z_left: -0.5, z_right: 0.0, n_modes: 2, checkpoints: vec![-0.25, -0.5] };
    let init = [Complex64::new(0.8, 0.1), Complex64::new(-0.2, 0.5)];
    let stats = run_ensemble(&init, &guide, &mc).unwrap();
    let moved: f64 = (0..2).map(|j| (stats.mean_amp[1][j] - init[j]).norm()).sum();
    assert!(moved > 1e-6, "slow terms couple the modes");
    stats.max_energy_drift
}

#[test]
fn deterministic_drift_is_first_order_in_epsilon_and_step_independent() {
    let d3 = deterministic_drift(1e-3, 1e-4);
    let d4 = deterministic_drift(1e-4, 1e-5);
    let d4_half = deterministic_drift(1e-4, 5e-6);
    println!("deterministic drift: {d3:e} (eps 1e-3), {d4:e} (eps 1e-4), {d4_half:e} (half step)");
    assert!((d3 / d4 - 10.0).abs() < 0.5, "drift is O(eps): {}", d3 / d4);
    assert!((d4 - d4_half).abs() < 1e-6 * d4.max(1e-12) + 1e-12, "the integrator adds no drift");
    assert!(d4 < 1e-4);
}

#[test]
fn single_trajectory_is_bit_identical() {
    let guide = toy_guide();
    let mc = toy_config(1e-2, 2);
    let grid = McGrid::new(&guide, &mc).unwrap();
    let span = (grid.nodes.len() - 1) as f64 * grid.dzeta;
    let synth = PathSynthesizer::new(&guide.model, grid.zeta0, span, grid.dzeta, SynthesisOptions::default()).unwrap();
    let a = integrate_trajectory(&toy_source(), &grid, &synth.synthesize(5, 9), &guide, &mc).unwrap();
    let b = integrate_trajectory(&toy_source(), &grid, &synth.synthesize(5, 9), &guide, &mc).unwrap();
    assert_eq!(a, b);
}

#[test]
fn halving_the_step_moves_means_by_less_than_one_standard_error() {
    let guide = toy_guide();
    let mc = toy_config(1e-2, 400);
    let mut fine = mc.clone();
    fine.step = mc.step / 2.0;
    let a = run_ensemble(&toy_source(), &guide, &mc).unwrap();
    let b = run_ensemble(&toy_source(), &guide, &fine).unwrap();
    for c in 0..a.z.len() {
        for j in 0..5 {
            let diff = (a.mean_power[c][j] - b.mean_power[c][j]).abs();
            assert!(diff < a.power_std_err[c][j], "checkpoint {c} mode {j}: {diff:e} vs {:e}", a.power_std_err[c][j]);
        }
    }
}

#[test]
fn moments_compared_to_themselves_give_zero_scores() {
    let stats = run_ensemble(&toy_source(), &toy_guide(), &toy_config(1e-2, 50)).unwrap();
    let own: Vec<MomentState> = (0..stats.z.len())
        .map(|c| {
            let p = &stats.mean_power[c];
            let m = DMatrix::from_fn(5, 5, |j, l| stats.covariance[c][(j, l)] + p[j] * p[l]);
            MomentState { z: stats.z[c], sector: 0, mean_amps: vec![], mean_powers: p.clone(), second_moments: m }
        })
        .collect();
    let rep = compare_to_moments(&stats, &own, 5, 3.0).unwrap();
    assert!(rep.max_abs_power_z < 1e-12 && rep.max_abs_variance_z < 1e-9, "{} {}", rep.max_abs_power_z, rep.max_abs_variance_z);
    assert!(rep.pass);
    assert!(compare_to_moments(&stats, &own[..9], 5, 3.0).is_err());
}

/// Doubles the Gc coupling between modes 4 and 5 (keeping the generator
/// structure).
struct Corrupted<'a>(GuideCoupling<'a>);

impl CouplingProvider for Corrupted<'_> {
    fn coupling(&self, z: f64, n_prop: usize, phase_terms: bool) -> Result<CouplingSet> {
        let mut s = self.0.coupling(z, n_prop, phase_terms)?;
        let g = s.gc[(3, 4)];
        s.gc[(3, 4)] += g;
        s.gc[(4, 3)] += g;
        s.gc[(3, 3)] -= g;
        s.gc[(4, 4)] -= g;
        Ok(s)
    }
}

#[test]
fn corrupted_generator_is_detected() {
    let init = toy_source();
    let stats = run_ensemble(&init, &toy_guide(), &toy_config(3e-3, 2000)).unwrap();
    let corr = Correlation::unit(CorrelationModel::Gaussian);
    let profile = toy_profile();
    let bad = Corrupted(GuideCoupling::new(TOY_K, TOY_SIGMA, &corr, &profile, CouplingOptions::default()));
    let mut opts = TransportOptions::new(0.0);
    opts.mean_amplitudes = false;
    let pred = evolve_moments(&ChainStart::from_amplitudes(&init), Side::Left, 0, 0.0, -0.5, &toy_checkpoints(), &bad, &opts).unwrap();
    let rep = compare_to_moments(&stats, &pred, 4, 3.0).unwrap();
    let first: f64 = rep.power_z_scores[0][3..].iter().map(|z| z.abs()).fold(0.0, f64::max);
    let last: f64 = rep.power_z_scores[9][3..].iter().map(|z| z.abs()).fold(0.0, f64::max);
    println!("corrupted: first {first:.2} last {last:.2} max {:.2}", rep.max_abs_power_z);
    assert!(!rep.pass && last > first && last > 3.0);
}

#[test]
fn mean_amplitude_decay_matches_limit_rate() {
    // Constant opening so the predicted rate is a single number per mode.
    let guide = McGuide { profile: WidthProfile::Constant { d: 2.6 }, ..toy_guide() };
    let mut mc = toy_config(1e-3, 2000);
    mc.include_sigma2_terms = true;
    let init = toy_source();
    let stats = run_ensemble(&init, &guide, &mc).unwrap();
    let set = coupling_set(TOY_K, TOY_SIGMA, &Correlation::unit(CorrelationModel::Gaussian), 2.6, 5, 0.0, &CouplingOptions::default()).unwrap();
    let rates = set.amplitude_decay_rates();
    for j in [0usize, 1] {
        // Least-squares slope of log|⟨b_j⟩| against |z| through the source value.
        let xs: Vec<f64> = std::iter::once(0.0).chain(stats.z.iter().map(|z| -z)).collect();
        let ys: Vec<f64> = std::iter::once(init[j].norm().ln()).chain(stats.mean_amp.iter().map(|a| a[j].norm().ln())).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        println!("mode {}: empirical rate {:.4}, limit {:.4}", j + 1, -slope, rates[j]);
        assert!((-slope - rates[j]).abs() < 0.1 * rates[j]);
    }
}
