//! Direct integration of the pre-limit stochastic mode-coupling system.
//!
//! In scaled variables (z in units of the slow length L, transverse lengths
//! and wavenumbers in units of the correlation length ℓ) the left-going
//! amplitudes obey ∂_z b = Υ⁽ᵇᵇ⁾(z) b, whose entries combine the fast noise
//! ν(z/ε) and its derivatives with the rapidly rotating phases
//! exp[(i/ε)∫(β_q − β_j)]. The phases are accumulated by Gauss–Legendre
//! quadrature of β_j and applied exactly at every Runge–Kutta stage, so the
//! step only has to resolve the noise, not the carrier.
//!
//! Ensembles of independent trajectories provide empirical moments that are
//! compared against the diffusion-limit moment equations of
//! [`crate::transport`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::correlation::{CorrelationModel, NoisePath, PathSynthesizer, SynthesisOptions};
use crate::coupling::{gamma_unchecked, second_order_coupling, slow_coupling};
use crate::error::{Error, Result};
use crate::geometry::WidthProfile;
use crate::quadrature::gauss_legendre_rule;
use crate::transport::MomentState;

/// Which optional terms enter Υ⁽ᵇᵇ⁾.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UpsilonFlags {
    /// Second-order noise terms σ²(γ + iβθ) and σ²g_j.
    pub sigma2_terms: bool,
    /// Deterministic couplings γ° + iβθ° from curvature and width changes.
    pub slow_terms: bool,
}

/// Guide and noise description in scaled units.
#[derive(Debug, Clone, PartialEq)]
pub struct McGuide {
    pub k: f64,
    /// Scaled noise amplitude σ̃.
    pub sigma: f64,
    /// Unit-correlation-length model of ν.
    pub model: CorrelationModel,
    pub profile: WidthProfile,
    /// Axis curvature (constant along the guide).
    pub curvature: f64,
}

/// Monte Carlo run parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub epsilon: f64,
    pub n_trajectories: usize,
    /// Slow-variable step; must not exceed ε/10.
    pub step: f64,
    pub seed: u64,
    pub include_sigma2_terms: bool,
    pub include_slow_terms: bool,
    /// Integration runs from `z_right` down to `z_left`.
    pub z_left: f64,
    pub z_right: f64,
    pub n_modes: usize,
    /// Points (between `z_left` and `z_right`) where the state is recorded.
    pub checkpoints: Vec<f64>,
}

impl McConfig {
    pub fn flags(&self) -> UpsilonFlags {
        UpsilonFlags { sigma2_terms: self.include_sigma2_terms, slow_terms: self.include_slow_terms }
    }

    /// Check the invariants: step ≤ ε/10, n ≥ 2, ordered bounds, checkpoints
    /// inside the sector.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 0.1) {
            return Err(Error::ValidationError(format!("epsilon must lie in (0, 0.1], got {}", self.epsilon)));
        }
        if !(self.step > 0.0 && self.step <= self.epsilon / 10.0 * (1.0 + 1e-12)) {
            return Err(Error::StepTooCoarse(format!("step {} exceeds epsilon/10 = {}", self.step, self.epsilon / 10.0)));
        }
        if self.n_trajectories < 2 {
            return Err(Error::ValidationError("at least two trajectories are required".into()));
        }
        if !(self.z_left < self.z_right) {
            return Err(Error::ValidationError("mc sector needs z_left < z_right".into()));
        }
        if self.n_modes == 0 {
            return Err(Error::ValidationError("mc needs at least one mode".into()));
        }
        if self.checkpoints.iter().any(|&z| z < self.z_left || z > self.z_right) {
            return Err(Error::GridMismatch("checkpoints must lie inside the mc sector".into()));
        }
        Ok(())
    }
}

/// Deterministic coefficients of Υ⁽ᵇᵇ⁾ at one point of the slow variable.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCoefficients {
    pub z: f64,
    pub beta: Vec<f64>,
    pub mu2: Vec<f64>,
    /// e^{iψ_j}, ψ_j = (1/ε)∫₀^z β_j.
    pub phase: Vec<Complex64>,
    /// Γ_jq/(2√(β_jβ_q)) (row-major, zero diagonal).
    c_gamma: Vec<f64>,
    /// β_qΘ_jq/(2√(β_jβ_q)).
    c_theta: Vec<f64>,
    /// (γ°_jq + iβ_qθ°_jq)/(2√(β_jβ_q)).
    c_slow: Vec<Complex64>,
    /// 1/(2√(β_jβ_q)).
    c_norm: Vec<f64>,
}

impl NodeCoefficients {
    /// Coefficients at `z` given the accumulated phases ψ_j.
    pub fn new(k: f64, d: f64, d_prime: f64, curvature: f64, psi: &[f64], z: f64) -> Result<Self> {
        let n = psi.len();
        let mut beta = Vec::with_capacity(n);
        let mut mu2 = Vec::with_capacity(n);
        for j in 1..=n {
            beta.push(crate::modes::beta_propagating(k, j, d)?);
            let m = crate::modes::mu(j, d);
            mu2.push(m * m);
        }
        let mut c_gamma = vec![0.0; n * n];
        let mut c_theta = vec![0.0; n * n];
        let mut c_slow = vec![Complex64::new(0.0, 0.0); n * n];
        let mut c_norm = vec![0.0; n * n];
        for j in 0..n {
            for q in 0..n {
                if j == q {
                    continue;
                }
                let norm = 0.5 / (beta[j] * beta[q]).sqrt();
                let g = gamma_unchecked(j + 1, q + 1);
                c_norm[j * n + q] = norm;
                c_gamma[j * n + q] = g * norm;
                c_theta[j * n + q] = beta[q] * 2.0 * g * norm;
                let (go, to) = slow_coupling(j + 1, q + 1, k, d, d_prime, curvature)?;
                c_slow[j * n + q] = Complex64::new(go, beta[q] * to) * norm;
            }
        }
        Ok(Self { z, beta, mu2, phase: psi.iter().map(|&p| Complex64::from_polar(1.0, p)).collect(), c_gamma, c_theta, c_slow, c_norm })
    }

    /// Fill `out` (row-major N×N) with Υ⁽ᵇᵇ⁾ for noise sample
    /// (ν, ν′, ν″) and amplitude factor s = σ/√ε.
    pub fn fill(&self, nu: [f64; 3], sigma: f64, epsilon: f64, flags: UpsilonFlags, out: &mut [Complex64]) {
        let n = self.beta.len();
        let s = sigma / epsilon.sqrt();
        let s2 = sigma * sigma;
        let [v0, v1, v2] = nu;
        for j in 0..n {
            for q in 0..n {
                let idx = j * n + q;
                if j == q {
                    // conj(i/(2β_j)[sμ_j²ν + σ²g_j]).
                    let mut h = s * self.mu2[j] * v0;
                    if flags.sigma2_terms {
                        let jf = (j + 1) as f64;
                        let g = -0.75 * self.mu2[j] * v0 * v0 - ((std::f64::consts::PI * jf).powi(2) / 12.0 + 1.0 / 16.0) * v1 * v1;
                        h += s2 * g;
                    }
                    out[idx] = Complex64::new(0.0, -h / (2.0 * self.beta[j]));
                    continue;
                }
                // Brace of the a-block entry, later conjugated.
                let mut brace = Complex64::new(s * self.c_gamma[idx] * v2, s * self.c_theta[idx] * v1);
                if flags.sigma2_terms {
                    let (gm, th) = second_order_coupling(j + 1, q + 1, v0, v1, v2).expect("distinct indices");
                    brace += Complex64::new(gm, self.beta[q] * th) * (s2 * self.c_norm[idx]);
                }
                if flags.slow_terms {
                    brace += self.c_slow[idx];
                }
                // Υ^(aa) = −i e^{i(ψ_q − ψ_j)}·brace; Υ^(bb) is its conjugate.
                let e = self.phase[q] * self.phase[j].conj();
                let aa = Complex64::new(0.0, -1.0) * e * brace;
                out[idx] = aa.conj();
            }
        }
    }
}

/// Assemble Υ⁽ᵇᵇ⁾ at `z` from a noise path, given the accumulated phases ψ_j.
#[allow(clippy::too_many_arguments)]
pub fn assemble_upsilon_bb(
    z: f64,
    path: &NoisePath,
    k: f64,
    sigma: f64,
    epsilon: f64,
    d: f64,
    d_prime: f64,
    curvature: f64,
    psi: &[f64],
    flags: UpsilonFlags,
) -> Result<DMatrix<Complex64>> {
    let n = psi.len();
    let nu = path.sample(z / epsilon)?;
    let node = NodeCoefficients::new(k, d, d_prime, curvature, psi, z)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
    node.fill([nu[0], nu[1], nu[2]], sigma, epsilon, flags, &mut buf);
    Ok(DMatrix::from_row_slice(n, n, &buf))
}

/// Precomputed deterministic data for every Runge–Kutta stage point.
#[derive(Debug, Clone)]
pub struct McGrid {
    /// Stage points z_right − m·h/2, m = 0..2·steps.
    pub nodes: Vec<NodeCoefficients>,
    pub step: f64,
    pub steps: usize,
    /// Step indices at which checkpoints are recorded.
    pub checkpoint_steps: Vec<usize>,
    pub checkpoints: Vec<f64>,
    pub zeta0: f64,
    pub dzeta: f64,
}

impl McGrid {
    /// Build the stage grid for a configuration. The step is shrunk to the
    /// largest value not exceeding `mc.step` for which an integer number of
    /// steps spans the sector and every checkpoint falls on a step boundary.
    pub fn new(guide: &McGuide, mc: &McConfig) -> Result<Self> {
        mc.validate()?;
        let span = mc.z_right - mc.z_left;
        let first = (span / mc.step - 1e-9).ceil() as usize;
        let aligned = |steps: usize| -> Option<Vec<usize>> {
            let h = span / steps as f64;
            mc.checkpoints
                .iter()
                .map(|&c| {
                    let x = (mc.z_right - c) / h;
                    let r = x.round();
                    ((x - r).abs() <= 1e-6).then_some(r as usize)
                })
                .collect()
        };
        let (steps, checkpoint_steps) = (first..=4 * first)
            .find_map(|m| aligned(m).map(|cs| (m, cs)))
            .ok_or_else(|| Error::GridMismatch(format!("no step <= {} puts every checkpoint on the step grid", mc.step)))?;
        let h = span / steps as f64;
        let n = mc.n_modes;
        let rule = gauss_legendre_rule(6);
        let half = 0.5 * h;
        let mut psi = vec![0.0; n];
        // ψ at z_right from the source plane z = 0.
        if mc.z_right != 0.0 {
            phase_increment(guide, 0.0, mc.z_right, mc.epsilon, &rule, &mut psi)?;
        }
        let mut nodes = Vec::with_capacity(2 * steps + 1);
        for m in 0..=2 * steps {
            let z = mc.z_right - m as f64 * half;
            if m > 0 {
                phase_increment(guide, z + half, z, mc.epsilon, &rule, &mut psi)?;
            }
            let (d, dp) = guide.profile.evaluate(z);
            nodes.push(NodeCoefficients::new(guide.k, d, dp, guide.curvature, &psi, z)?);
        }
        Ok(Self { nodes, step: h, steps, checkpoint_steps, checkpoints: mc.checkpoints.clone(), zeta0: mc.z_left / mc.epsilon, dzeta: half / mc.epsilon })
    }
}

/// ψ_j += (1/ε)∫_{from}^{to} β_j(z) dz by Gauss–Legendre quadrature.
fn phase_increment(guide: &McGuide, from: f64, to: f64, epsilon: f64, rule: &(Vec<f64>, Vec<f64>), psi: &mut [f64]) -> Result<()> {
    let c = 0.5 * (from + to);
    let r = 0.5 * (to - from);
    for (x, w) in rule.0.iter().zip(&rule.1) {
        let d = guide.profile.d_at(c + r * x);
        for (j, p) in psi.iter_mut().enumerate() {
            *p += w * r * crate::modes::beta_propagating(guide.k, j + 1, d)? / epsilon;
        }
    }
    Ok(())
}

/// State of one trajectory at the checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub amplitudes: Vec<Vec<Complex64>>,
    /// max_z |Σ|b_j(z)|² − Σ|b_j(z_right)|²| over the integration.
    pub max_energy_drift: f64,
}

/// Integrate one trajectory with classical RK4 on the stage grid.
pub fn integrate_trajectory(init: &[Complex64], grid: &McGrid, path: &NoisePath, guide: &McGuide, mc: &McConfig) -> Result<Trajectory> {
    let n = init.len();
    if n != mc.n_modes {
        return Err(Error::LayoutMismatch(format!("{} initial amplitudes for {} modes", n, mc.n_modes)));
    }
    let nodes = grid.nodes.len();
    if (path.dzeta - grid.dzeta).abs() > 1e-12 * grid.dzeta || (path.zeta0 - grid.zeta0).abs() > 1e-9 * grid.zeta0.abs().max(1.0) || path.len() < nodes {
        return Err(Error::PathCoverage { needed: grid.zeta0 + grid.dzeta * (nodes - 1) as f64, start: path.zeta0, end: path.zeta_end() });
    }
    let flags = mc.flags();
    // Node m sits at ζ = zeta0 + (nodes − 1 − m)·dζ on the path grid.
    let sample = |m: usize| {
        let i = nodes - 1 - m;
        [path.values[0][i], path.values[1][i], path.values[2][i]]
    };
    let mut ups = [vec![Complex64::new(0.0, 0.0); n * n], vec![Complex64::new(0.0, 0.0); n * n], vec![Complex64::new(0.0, 0.0); n * n]];
    let apply = |u: &[Complex64], b: &[Complex64], out: &mut [Complex64]| {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for q in 0..n {
                acc += u[j * n + q] * b[q];
            }
            out[j] = acc;
        }
    };
    let mut b = init.to_vec();
    let e0: f64 = b.iter().map(|v| v.norm_sqr()).sum();
    let mut drift: f64 = 0.0;
    let mut out = Vec::with_capacity(grid.checkpoint_steps.len());
    let mut next_cp = 0;
    let record = |step: usize, b: &[Complex64], out: &mut Vec<Vec<Complex64>>, next_cp: &mut usize| {
        while *next_cp < grid.checkpoint_steps.len() && grid.checkpoint_steps[*next_cp] == step {
            out.push(b.to_vec());
            *next_cp += 1;
        }
    };
    record(0, &b, &mut out, &mut next_cp);
    let h = -grid.step;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n]);
    let mut tmp = vec![Complex64::new(0.0, 0.0); n];
    grid.nodes[0].fill(sample(0), guide.sigma, mc.epsilon, flags, &mut ups[0]);
    for step in 0..grid.steps {
        let m = 2 * step;
        grid.nodes[m + 1].fill(sample(m + 1), guide.sigma, mc.epsilon, flags, &mut ups[1]);
        grid.nodes[m + 2].fill(sample(m + 2), guide.sigma, mc.epsilon, flags, &mut ups[2]);
        apply(&ups[0], &b, &mut k1);
        for j in 0..n {
            tmp[j] = b[j] + k1[j] * (0.5 * h);
        }
        apply(&ups[1], &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = b[j] + k2[j] * (0.5 * h);
        }
        apply(&ups[1], &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = b[j] + k3[j] * h;
        }
        apply(&ups[2], &tmp, &mut k4);
        for j in 0..n {
            b[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
        ups.swap(0, 2);
        let e: f64 = b.iter().map(|v| v.norm_sqr()).sum();
        drift = drift.max((e - e0).abs());
        if !e.is_finite() {
            return Err(Error::StepTooCoarse(format!("trajectory diverged at z = {}", grid.nodes[m + 2].z)));
        }
        record(step + 1, &b, &mut out, &mut next_cp);
    }
    Ok(Trajectory { amplitudes: out, max_energy_drift: drift })
}

/// Empirical statistics of an ensemble at the checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub z: Vec<f64>,
    pub n_trajectories: usize,
    pub n_modes: usize,
    pub mean_amp: Vec<Vec<Complex64>>,
    pub mean_power: Vec<Vec<f64>>,
    /// Sample StD/√n of each mode power.
    pub power_std_err: Vec<Vec<f64>>,
    pub covariance: Vec<DMatrix<f64>>,
    /// Largest pathwise drift of the total power over all trajectories.
    pub max_energy_drift: f64,
    /// Mode powers per checkpoint and trajectory, in trajectory order.
    #[serde(skip)]
    pub power_samples: Vec<Vec<Vec<f64>>>,
}

impl EnsembleStats {
    /// Sample variance of Σ_{j<m} P_j at checkpoint `c` and its standard
    /// error √((m₄ − s⁴)/n).
    pub fn partial_power_variance(&self, c: usize, m: usize) -> (f64, f64) {
        let xs: Vec<f64> = self.power_samples[c].iter().map(|p| p[..m].iter().sum()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        (var, ((m4 - var * var).max(0.0) / n).sqrt())
    }
}

/// Run `mc.n_trajectories` independent trajectories in parallel; trajectory
/// i uses noise stream i of `mc.seed`, and the reduction runs in index order,
/// so results do not depend on the thread schedule.
pub fn run_ensemble(init: &[Complex64], guide: &McGuide, mc: &McConfig) -> Result<EnsembleStats> {
    let grid = McGrid::new(guide, mc)?;
    let span = (grid.nodes.len() - 1) as f64 * grid.dzeta;
    let synth = PathSynthesizer::new(&guide.model, grid.zeta0, span, grid.dzeta, SynthesisOptions::default())?;
    let trajectories: Vec<Trajectory> = (0..mc.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let path = synth.synthesize(mc.seed, i as u64);
            integrate_trajectory(init, &grid, &path, guide, mc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(&trajectories, &grid.checkpoints, mc.n_modes))
}

fn reduce(trajs: &[Trajectory], z: &[f64], n: usize) -> EnsembleStats {
    let nt = trajs.len();
    let ntf = nt as f64;
    let mut mean_amp = Vec::with_capacity(z.len());
    let mut mean_power = Vec::with_capacity(z.len());
    let mut std_err = Vec::with_capacity(z.len());
    let mut covariance = Vec::with_capacity(z.len());
    let mut samples = Vec::with_capacity(z.len());
    for c in 0..z.len() {
        let powers: Vec<Vec<f64>> = trajs.iter().map(|t| t.amplitudes[c].iter().map(|b| b.norm_sqr()).collect()).collect();
        let amp: Vec<Complex64> = (0..n).map(|j| pairwise_sum_c(&trajs.iter().map(|t| t.amplitudes[c][j]).collect::<Vec<_>>()) / ntf).collect();
        let mean: Vec<f64> = (0..n).map(|j| pairwise_sum(&powers.iter().map(|p| p[j]).collect::<Vec<_>>()) / ntf).collect();
        let cov = DMatrix::from_fn(n, n, |j, l| pairwise_sum(&powers.iter().map(|p| (p[j] - mean[j]) * (p[l] - mean[l])).collect::<Vec<_>>()) / (ntf - 1.0));
        std_err.push((0..n).map(|j| (cov[(j, j)] / ntf).sqrt()).collect());
        mean_amp.push(amp);
        mean_power.push(mean);
        covariance.push(cov);
        samples.push(powers);
    }
    EnsembleStats {
        z: z.to_vec(),
        n_trajectories: nt,
        n_modes: n,
        mean_amp,
        mean_power,
        power_std_err: std_err,
        covariance,
        max_energy_drift: trajs.iter().map(|t| t.max_energy_drift).fold(0.0, f64::max),
        power_samples: samples,
    }
}

fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

fn pairwise_sum_c(x: &[Complex64]) -> Complex64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let mid = x.len() / 2;
    pairwise_sum_c(&x[..mid]) + pairwise_sum_c(&x[mid..])
}

/// z-scores of an ensemble against predicted moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub z: Vec<f64>,
    /// (empirical − predicted)/standard error per checkpoint and mode.
    pub power_z_scores: Vec<Vec<f64>>,
    pub variance_empirical: Vec<f64>,
    pub variance_predicted: Vec<f64>,
    pub variance_std_err: Vec<f64>,
    pub variance_z_scores: Vec<f64>,
    /// Modes included in the compared power sum.
    pub summed_modes: usize,
    pub max_abs_power_z: f64,
    pub max_abs_variance_z: f64,
    /// RMS of (empirical − predicted) mean power over checkpoints and modes.
    pub rms_power_bias: f64,
    pub threshold: f64,
    pub comparisons: usize,
    /// Expected number of |z| > threshold exceedances under the null.
    pub expected_false_alarms: f64,
    pub pass: bool,
    pub note: String,
}

/// Compare an ensemble with moment states at the same checkpoints; the
/// variance comparison uses the sum of the first `summed_modes` powers.
pub fn compare_to_moments(stats: &EnsembleStats, predicted: &[MomentState], summed_modes: usize, threshold: f64) -> Result<ComparisonReport> {
    if predicted.len() != stats.z.len() {
        return Err(Error::GridMismatch(format!("{} predicted states for {} checkpoints", predicted.len(), stats.z.len())));
    }
    if summed_modes == 0 || summed_modes > stats.n_modes {
        return Err(Error::GridMismatch(format!("cannot sum {summed_modes} of {} modes", stats.n_modes)));
    }
    let mut power_z = Vec::new();
    let mut var_emp = Vec::new();
    let mut var_pred = Vec::new();
    let mut var_se = Vec::new();
    let mut var_z = Vec::new();
    let mut sq = 0.0;
    let mut count = 0usize;
    for (c, state) in predicted.iter().enumerate() {
        if (state.z - stats.z[c]).abs() > 1e-9 * stats.z[c].abs().max(1.0) || state.mean_powers.len() != stats.n_modes {
            return Err(Error::GridMismatch(format!("checkpoint {c}: z = {} vs {}", state.z, stats.z[c])));
        }
        let zs: Vec<f64> = (0..stats.n_modes)
            .map(|j| {
                let diff = stats.mean_power[c][j] - state.mean_powers[j];
                sq += diff * diff;
                count += 1;
                z_score(diff, stats.power_std_err[c][j])
            })
            .collect();
        power_z.push(zs);
        let (v, se) = stats.partial_power_variance(c, summed_modes);
        let pv = state.partial_power_std(summed_modes).powi(2);
        var_emp.push(v);
        var_pred.push(pv);
        var_se.push(se);
        var_z.push(z_score(v - pv, se));
    }
    let max_p = power_z.iter().flatten().fold(0.0f64, |a, z| a.max(z.abs()));
    let max_v = var_z.iter().fold(0.0f64, |a, z| a.max(z.abs()));
    let comparisons = count + var_z.len();
    let tail = erfc(threshold / std::f64::consts::SQRT_2);
    Ok(ComparisonReport {
        z: stats.z.clone(),
        power_z_scores: power_z,
        variance_empirical: var_emp,
        variance_predicted: var_pred,
        variance_std_err: var_se,
        variance_z_scores: var_z,
        summed_modes,
        max_abs_power_z: max_p,
        max_abs_variance_z: max_v,
        rms_power_bias: (sq / count as f64).sqrt(),
        threshold,
        comparisons,
        expected_false_alarms: comparisons as f64 * tail,
        pass: max_p <= threshold && max_v <= threshold,
        note: format!(
            "{comparisons} correlated comparisons at |z| <= {threshold}; about {:.2} exceedances expected by chance if independent",
            comparisons as f64 * tail
        ),
    })
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff.abs() < 1e-14 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Complementary error function (Numerical Recipes rational approximation,
/// relative error < 1.2e−7), adequate for false-alarm estimates.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96 + t * (0.096_784_18 + t * (-0.186_288_06 + t * (0.278_868_07 + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn toy(sigma: f64) -> McGuide {
        McGuide { k: 2.0 * PI, sigma, model: CorrelationModel::Gaussian, profile: WidthProfile::Constant { d: 2.6 }, curvature: 0.0 }
    }

    fn config(n: usize) -> McConfig {
        McConfig {
            epsilon: 1e-2,
            n_trajectories: n,
            step: 1e-3,
            seed: 7,
            include_sigma2_terms: false,
            include_slow_terms: true,
            z_left: -0.2,
            z_right: 0.0,
            n_modes: 5,
            checkpoints: vec![0.0, -0.1, -0.2],
        }
    }

    #[test]
    fn zero_sigma_keeps_amplitudes() {
        let init: Vec<Complex64> = (0..5).map(|j| Complex64::new(0.1 * j as f64, 0.3)).collect();
        let stats = run_ensemble(&init, &toy(0.0), &config(2)).unwrap();
        for c in 0..3 {
            for j in 0..5 {
                assert!((stats.mean_amp[c][j] - init[j]).norm() < 1e-15);
                assert_eq!(stats.power_std_err[c][j], 0.0);
            }
        }
    }

    #[test]
    fn trajectories_are_reproducible() {
        let init = vec![Complex64::new(1.0, 0.0); 5];
        let a = run_ensemble(&init, &toy(0.5), &config(4)).unwrap();
        let b = run_ensemble(&init, &toy(0.5), &config(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let mut mc = config(2);
        mc.step = 2e-3;
        assert!(matches!(mc.validate(), Err(Error::StepTooCoarse(_))));
    }

    #[test]
    fn erfc_values() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-7);
        assert!((erfc(3.0 / std::f64::consts::SQRT_2) - 0.002_699_796).abs() < 1e-8);
    }
}
