//! Deterministic coefficients of the random mode-coupling problem.
//!
//! * Leading fluctuation couplings Γ_jq, Θ_jq and their second-order
//!   companions γ_jq, θ_jq (functions of the noise sample).
//! * Couplings γ°_jq, θ°_jq due to axis curvature and slow width changes.
//! * The diffusion-limit matrices G⁽ᶜ⁾ (power exchange), G⁽⁰⁾ and G⁽ˢ⁾
//!   (phase diffusion and drift) and the phase drift κ_j, whose evanescent
//!   series is summed explicitly up to a cutoff and completed by an
//!   asymptotic tail with a reported error bound.
//! * Length scales (scattering and transport mean free paths, equipartition
//!   distance) and the forward-scattering diagnostic.
//!
//! Formulas are written in physical units: with a correlation length ℓ the
//! spectral quantities are R̂_ℓ(β) = ℓR̂(ℓβ), R″_ℓ(0) = R″(0)/ℓ², so the same
//! code serves the wavelength-unit presets and the scaled (ℓ = 1) toy.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::correlation::{Correlation, CorrelationModel};
use crate::error::{Error, Result};
use crate::modes::{beta_evanescent, mu, ModeBasis};
use crate::quadrature::gauss_legendre_rule;

/// Default number of evanescent terms summed explicitly in κ_j.
pub const DEFAULT_EVANESCENT_CUTOFF: usize = 200;

/// Default β floor as a fraction of k.
pub const DEFAULT_BETA_FLOOR_FRACTION: f64 = 1e-6;

/// Default threshold on R̂(β_j + β_l)/R̂(0) for the forward-scattering flag.
pub const DEFAULT_FORWARD_THRESHOLD: f64 = 1e-3;

/// Relative tolerance on the κ evanescent tail.
pub const KAPPA_TAIL_TOLERANCE: f64 = 1e-8;

/// Leading coupling coefficients Γ_jq = jq(−1)^{j+q}/(q² − j²) and Θ_jq = 2Γ_jq.
pub fn gamma_theta(j: usize, q: usize) -> Result<(f64, f64)> {
    if j == q {
        return Err(Error::EqualIndices(j));
    }
    let g = gamma_unchecked(j, q);
    Ok((g, 2.0 * g))
}

#[inline]
pub(crate) fn gamma_unchecked(j: usize, q: usize) -> f64 {
    let (jf, qf) = (j as f64, q as f64);
    let sign = if (j + q).is_multiple_of(2) { 1.0 } else { -1.0 };
    jf * qf * sign / (qf * qf - jf * jf)
}

/// Second-order fluctuation couplings (γ_jq, θ_jq) for a noise sample
/// (ν, ν′, ν″) at the current fast coordinate.
pub fn second_order_coupling(j: usize, q: usize, nu: f64, nu1: f64, nu2: f64) -> Result<(f64, f64)> {
    if j == q {
        return Err(Error::EqualIndices(j));
    }
    let (jf, qf) = (j as f64, q as f64);
    let g = gamma_unchecked(j, q);
    let gamma = 0.5 * g * ((3.0 * jf * jf + qf * qf) / (qf * qf - jf * jf) * nu1 * nu1 - nu * nu2);
    let theta = -g * nu * nu1;
    Ok((gamma, theta))
}

/// Couplings due to the slow geometry at one point: axis curvature κ(z)
/// enters γ°_jq, the width slope D′(z) enters θ°_jq.
pub fn slow_coupling(j: usize, q: usize, k: f64, d: f64, d_prime: f64, curvature: f64) -> Result<(f64, f64)> {
    if j == q {
        return Err(Error::EqualIndices(j));
    }
    let (jf, qf) = (j as f64, q as f64);
    let sign = if (j + q).is_multiple_of(2) { 1.0 } else { -1.0 };
    let diff = qf * qf - jf * jf;
    let kd = k * d / PI;
    let gamma_o = curvature / d * 2.0 * jf * qf * (1.0 - sign) * (jf * jf + 3.0 * qf * qf - 4.0 * kd * kd) / (diff * diff);
    let theta_o = d_prime / d * 2.0 * jf * qf * (1.0 + sign) / diff;
    Ok((gamma_o, theta_o))
}

/// Options controlling coefficient construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions {
    /// Number of evanescent modes summed explicitly in κ_j.
    pub evanescent_cutoff: usize,
    /// Minimum admissible β_j as a fraction of k.
    pub beta_floor_fraction: f64,
    /// Whether to build G⁽ˢ⁾ and κ (needed only for mean amplitudes).
    pub phase_terms: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self { evanescent_cutoff: DEFAULT_EVANESCENT_CUTOFF, beta_floor_fraction: DEFAULT_BETA_FLOOR_FRACTION, phase_terms: true }
    }
}

/// Diffusion-limit coefficients at one point of the guide.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    pub z: f64,
    pub d: f64,
    pub n_prop: usize,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    /// Power-exchange matrix (symmetric, zero row sums).
    pub gc: DMatrix<f64>,
    pub g0: DMatrix<f64>,
    /// Phase-drift matrix; diagonal from the column-sum rule.
    pub gs: DMatrix<f64>,
    /// Phase drift κ_j (zeros when phase terms are not requested).
    pub kappa: Vec<f64>,
    /// Error bound on the evanescent part of each κ_j after tail completion.
    pub kappa_tail_bound: Vec<f64>,
    /// Magnitude of the asymptotic tail added to each κ_j.
    pub kappa_tail: Vec<f64>,
}

impl CouplingSet {
    /// Mean-amplitude decay rates (G⁽⁰⁾_jj − G⁽ᶜ⁾_jj)/2.
    pub fn amplitude_decay_rates(&self) -> Vec<f64> {
        (0..self.n_prop).map(|j| 0.5 * (self.g0[(j, j)] - self.gc[(j, j)])).collect()
    }
}

/// Build the coupling set for `n_prop` modes of a guide of opening `d` at
/// position `z` (the position is only recorded).
pub fn coupling_set(k: f64, sigma: f64, corr: &Correlation, d: f64, n_prop: usize, z: f64, opts: &CouplingOptions) -> Result<CouplingSet> {
    let floor = opts.beta_floor_fraction * k;
    let mut beta = Vec::with_capacity(n_prop);
    for j in 1..=n_prop {
        let m = mu(j, d);
        let b2 = (k - m) * (k + m);
        let b = if b2 > 0.0 { b2.sqrt() } else { 0.0 };
        if b < floor {
            return Err(Error::TurningPointTooClose { j, beta: b, floor });
        }
        beta.push(b);
    }
    let basis = ModeBasis { k, d, n_prop, mu: (1..=n_prop).map(|j| mu(j, d)).collect(), beta };
    let s2 = sigma * sigma;
    let n = n_prop;
    let mu4: Vec<f64> = basis.mu.iter().map(|m| m * m).collect();
    let mut gc = DMatrix::zeros(n, n);
    let mut g0 = DMatrix::zeros(n, n);
    let mut gs = DMatrix::zeros(n, n);
    let psd0 = corr.psd(0.0);
    for j in 0..n {
        for l in 0..n {
            let pref = s2 * mu4[j] * mu4[l] / (basis.beta[j] * basis.beta[l]);
            g0[(j, l)] = 0.25 * pref * psd0;
            if l > j {
                let v = 0.25 * pref * corr.psd(basis.beta[j] - basis.beta[l]);
                gc[(j, l)] = v;
                gc[(l, j)] = v;
                if opts.phase_terms {
                    let sv = 0.5 * pref * corr.sine_half_transform(basis.beta[j] - basis.beta[l]);
                    gs[(j, l)] = sv;
                    gs[(l, j)] = -sv;
                }
            }
        }
    }
    for j in 0..n {
        let row: f64 = (0..n).filter(|&l| l != j).map(|l| gc[(j, l)]).sum();
        gc[(j, j)] = -row;
        if opts.phase_terms {
            let col: f64 = (0..n).filter(|&l| l != j).map(|l| gs[(l, j)]).sum();
            gs[(j, j)] = -col;
        }
    }
    let (kappa, kappa_tail, kappa_tail_bound) = if opts.phase_terms && s2 > 0.0 {
        kappa_all(k, s2, corr, &basis, opts.evanescent_cutoff)?
    } else {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    };
    Ok(CouplingSet { z, d, n_prop, beta: basis.beta, mu: basis.mu, gc, g0, gs, kappa, kappa_tail_bound, kappa_tail })
}

/// κ_j for every propagating mode, with tail magnitudes and error bounds.
fn kappa_all(k: f64, s2: f64, corr: &Correlation, basis: &ModeBasis, cutoff: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = basis.n_prop;
    let r2 = corr.r2_at_0();
    let moments = derivative_moments(&corr.model);
    let mut kappa = Vec::with_capacity(n);
    let mut tails = Vec::with_capacity(n);
    let mut bounds = Vec::with_capacity(n);
    // Evanescent data shared by all j.
    let mut ev = Vec::new();
    let mut l = n + 1;
    loop {
        let bl = beta_evanescent(k, l, basis.d)?;
        let explicit = l <= n + cutoff || corr.length * bl < ASYMPTOTIC_MIN_ARG;
        if !explicit {
            break;
        }
        ev.push((l, mu(l, basis.d), bl));
        l += 1;
    }
    let last_l = l - 1;
    for j in 0..n {
        let jj = j + 1;
        let bj = basis.beta[j];
        let mj2 = basis.mu[j] * basis.mu[j];
        let local = s2 / (2.0 * bj) * (((PI * jj as f64).powi(2) / 12.0 + 1.0 / 16.0) * r2 - 0.75 * mj2);
        let mut prop = 0.0;
        for l in 0..n {
            if l == j {
                continue;
            }
            let bl = basis.beta[l];
            let ml2 = basis.mu[l] * basis.mu[l];
            prop -= s2 * mj2 * ml2 / (4.0 * bj * bl * (bj - bl)) * (1.0 + r2 / ((bj + bl) * (bj + bl)));
        }
        let mut evan = 0.0;
        for &(_, ml, bl) in &ev {
            evan += evanescent_term(s2, mj2, ml * ml, bj, bl, r2, corr.kappa_laplace_integral(bj, bl));
        }
        let (tail, bound) = evanescent_tail(k, s2, mj2, bj, r2, corr, &moments, basis.d, last_l);
        let total = local + prop + evan + tail;
        // Relative to the size of the contributions, so that a κ_j near a
        // sign change (cancellation between parts) is not spuriously flagged.
        let scale = local.abs() + prop.abs() + evan.abs() + tail.abs();
        if bound > KAPPA_TAIL_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NonConvergedTail { j: jj, bound, kappa: total });
        }
        kappa.push(total);
        tails.push(tail);
        bounds.push(bound);
    }
    Ok((kappa, tails, bounds))
}

/// Minimum scaled decay rate ℓβ_l at which the large-argument expansion of
/// the Laplace integral replaces quadrature.
const ASYMPTOTIC_MIN_ARG: f64 = 30.0;

#[inline]
fn evanescent_term(s2: f64, mj2: f64, ml2: f64, bj: f64, bl: f64, r2: f64, laplace: f64) -> f64 {
    let den = bj * bj + bl * bl;
    s2 * mj2 * ml2 / (2.0 * bj * bl * den * den) * (-bl * r2 + laplace)
}

/// Even derivatives R⁽²ⁿ⁾(0), n = 1..5, of the unit model.
fn derivative_moments(model: &CorrelationModel) -> [f64; 5] {
    match model {
        // R = e^{−ζ²/2}: R⁽²ⁿ⁾(0) = (−1)ⁿ(2n−1)!!.
        CorrelationModel::Gaussian => [-1.0, 3.0, -15.0, 105.0, -945.0],
        CorrelationModel::UserTabulatedSpectrum { beta, psd } => {
            // R⁽²ⁿ⁾(0) = (−1)ⁿ(1/π)∫β²ⁿR̂(β)dβ, exact per linear segment.
            let mut out = [0.0; 5];
            let rule = gauss_legendre_rule(8);
            for (n, o) in out.iter_mut().enumerate() {
                let p = 2 * (n + 1) as i32;
                let mut acc = 0.0;
                for i in 0..beta.len() - 1 {
                    let (b0, b1) = (beta[i], beta[i + 1]);
                    let (p0, p1) = (psd[i], psd[i + 1]);
                    acc += crate::quadrature::gauss_legendre(|b| b.powi(p) * (p0 + (p1 - p0) * (b - b0) / (b1 - b0)), b0, b1, &rule);
                }
                *o = if (n + 1) % 2 == 0 { acc / PI } else { -acc / PI };
            }
            out
        }
    }
}

/// Large-argument expansion of the physical Laplace integral
/// Re[(β_l + iβ_j)²·Σₙ R⁽²ⁿ⁾_ℓ(0)/s^{2n−1}], s = β_l − iβ_j, together with
/// the magnitude of the first omitted term.
fn laplace_asymptotic(bj: f64, bl: f64, length: f64, moments: &[f64; 5]) -> (f64, f64) {
    use num_complex::Complex64;
    let s = Complex64::new(bl, -bj);
    let w = Complex64::new(bl, bj);
    let w2 = w * w;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut spow = s;
    let s2 = s * s;
    let mut last = 0.0;
    for (n, m) in moments.iter().enumerate() {
        // Physical moment: R⁽²ⁿ⁾(0)/ℓ^{2n}.
        let mp = m / length.powi(2 * (n as i32 + 1));
        let term = w2 * mp / spow;
        if n + 1 < moments.len() {
            acc += term;
        } else {
            last = term.norm();
        }
        spow *= s2;
    }
    (acc.re, last)
}

/// Sum of the evanescent terms l > `last_l` from the asymptotic expansion,
/// by the midpoint (Euler–Maclaurin) integral of the smooth term function,
/// and an error bound covering the integral approximation and the
/// truncated expansion.
#[allow(clippy::too_many_arguments)]
fn evanescent_tail(k: f64, s2: f64, mj2: f64, bj: f64, r2: f64, corr: &Correlation, moments: &[f64; 5], d: f64, last_l: usize) -> (f64, f64) {
    let term_at = |x: f64| -> (f64, f64) {
        let ml = PI * x / d;
        let bl = ((ml - k) * (ml + k)).sqrt();
        let (lap, err) = laplace_asymptotic(bj, bl, corr.length, moments);
        let den = bj * bj + bl * bl;
        let pref = s2 * mj2 * ml * ml / (2.0 * bj * bl * den * den);
        (pref * (-bl * r2 + lap), pref * err)
    };
    // ∫_{L+½}^∞ t(x)dx with x = (L+½)/u, u ∈ (0, 1].
    let x0 = last_l as f64 + 0.5;
    let rule = gauss_legendre_rule(24);
    let mut integral = 0.0;
    let mut err_integral = 0.0;
    // Split u ∈ (0,1] into geometric panels to resolve the power-law decay.
    let mut hi = 1.0;
    for _ in 0..12 {
        let lo = hi * 0.25;
        let h = 0.5 * (hi - lo);
        let c = 0.5 * (hi + lo);
        for (xi, wi) in rule.0.iter().zip(&rule.1) {
            let u = c + h * xi;
            let x = x0 / u;
            let jac = x0 / (u * u);
            let (t, e) = term_at(x);
            integral += wi * h * t * jac;
            err_integral += wi * h * e * jac;
        }
        hi = lo;
    }
    // Midpoint-rule defect ≈ t″/24 per term; with |t| ~ C x^{−p} and p ≤ 6 the
    // relative defect of the tail integral is bounded by p(p+1)/(24 x0²).
    let (t_last, _) = term_at(last_l as f64 + 1.0);
    let p = 6.0;
    let em = integral.abs() * p * (p + 1.0) / (24.0 * x0 * x0) + t_last.abs() * 1e-3 / x0;
    (integral, em + err_integral.abs())
}

/// Coupling sets tabulated at Chebyshev nodes in the opening D and
/// evaluated by barycentric interpolation.
///
/// All coefficients are analytic in D as long as no β_j vanishes, so a
/// modest number of nodes reproduces direct evaluation to near round-off;
/// the achieved accuracy is measured at construction against direct
/// evaluation between nodes. Interpolation is linear in the node values, so
/// symmetry and the zero row sums of G⁽ᶜ⁾ are preserved exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    pub k: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub n_prop: usize,
    pub phase_terms: bool,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    sets: Vec<CouplingSet>,
    /// Largest interpolation error found at the check points, relative to
    /// the magnitude of each coefficient family.
    pub max_relative_error: f64,
}

/// Target relative accuracy of [`CouplingTable`].
pub const TABLE_TOLERANCE: f64 = 1e-11;

impl CouplingTable {
    /// Tabulate coefficients for `n_prop` modes over openings in [d_min, d_max].
    #[allow(clippy::too_many_arguments)]
    pub fn build(k: f64, sigma: f64, corr: &Correlation, d_min: f64, d_max: f64, n_prop: usize, opts: &CouplingOptions) -> Result<Self> {
        if !(d_max >= d_min) {
            return Err(Error::InvalidProfile(format!("empty opening range [{d_min}, {d_max}]")));
        }
        let direct = |d: f64| coupling_set(k, sigma, corr, d, n_prop, 0.0, opts);
        if d_max - d_min <= 1e-13 * d_max {
            let set = direct(d_max)?;
            return Ok(Self { k, d_min, d_max, n_prop, phase_terms: opts.phase_terms, nodes: vec![d_max], weights: vec![1.0], sets: vec![set], max_relative_error: 0.0 });
        }
        let mut m = 16;
        loop {
            let nodes: Vec<f64> = (0..=m).map(|i| 0.5 * (d_min + d_max) + 0.5 * (d_max - d_min) * (PI * i as f64 / m as f64).cos()).collect();
            let weights: Vec<f64> = (0..=m)
                .map(|i| {
                    let w = if i % 2 == 0 { 1.0 } else { -1.0 };
                    if i == 0 || i == m {
                        0.5 * w
                    } else {
                        w
                    }
                })
                .collect();
            let sets = nodes.iter().map(|&d| direct(d)).collect::<Result<Vec<_>>>()?;
            let mut table = Self { k, d_min, d_max, n_prop, phase_terms: opts.phase_terms, nodes, weights, sets, max_relative_error: 0.0 };
            let mut err: f64 = 0.0;
            for c in [0usize, m / 4, m / 2, m - 1] {
                let d = 0.5 * (d_min + d_max) + 0.5 * (d_max - d_min) * (PI * (c as f64 + 0.5) / m as f64).cos();
                err = err.max(table.compare(d, &direct(d)?));
            }
            table.max_relative_error = err;
            if err <= TABLE_TOLERANCE {
                return Ok(table);
            }
            if m >= 256 {
                return Err(Error::SolverToleranceExceeded(format!(
                    "coefficient interpolation error {err:.2e} over D in [{d_min}, {d_max}] with {m} nodes"
                )));
            }
            m *= 2;
        }
    }

    /// Interpolated set at opening `d` (recorded at position `z`).
    pub fn at(&self, d: f64, z: f64) -> CouplingSet {
        let n = self.n_prop;
        let mut out = self.sets[0].clone();
        out.z = z;
        out.d = d;
        out.mu = (1..=n).map(|j| mu(j, d)).collect();
        out.beta = out.mu.iter().map(|m| ((self.k - m) * (self.k + m)).max(0.0).sqrt()).collect();
        if self.sets.len() == 1 {
            return out;
        }
        if let Some(i) = self.nodes.iter().position(|&x| x == d) {
            let s = &self.sets[i];
            out.gc.copy_from(&s.gc);
            out.g0.copy_from(&s.g0);
            out.gs.copy_from(&s.gs);
            out.kappa.clone_from(&s.kappa);
            out.kappa_tail.clone_from(&s.kappa_tail);
            out.kappa_tail_bound.clone_from(&s.kappa_tail_bound);
            return out;
        }
        let c: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(x, w)| w / (d - x)).collect();
        let total: f64 = c.iter().sum();
        out.gc.fill(0.0);
        out.g0.fill(0.0);
        out.gs.fill(0.0);
        out.kappa.iter_mut().for_each(|v| *v = 0.0);
        out.kappa_tail.iter_mut().for_each(|v| *v = 0.0);
        out.kappa_tail_bound.iter_mut().for_each(|v| *v = 0.0);
        for (ci, s) in c.iter().zip(&self.sets) {
            let w = ci / total;
            out.gc += &s.gc * w;
            out.g0 += &s.g0 * w;
            if self.phase_terms {
                out.gs += &s.gs * w;
                for j in 0..n {
                    out.kappa[j] += w * s.kappa[j];
                    out.kappa_tail[j] += w * s.kappa_tail[j];
                    out.kappa_tail_bound[j] = out.kappa_tail_bound[j].max(s.kappa_tail_bound[j]);
                }
            }
        }
        out
    }

    /// Relative interpolation error against a directly computed set.
    fn compare(&self, d: f64, direct: &CouplingSet) -> f64 {
        let interp = self.at(d, direct.z);
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let scale = b.amax();
            if scale == 0.0 {
                0.0
            } else {
                (a - b).amax() / scale
            }
        };
        let mut err = rel(&interp.gc, &direct.gc).max(rel(&interp.g0, &direct.g0));
        if self.phase_terms {
            err = err.max(rel(&interp.gs, &direct.gs));
            let scale = direct.kappa.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if scale > 0.0 {
                let e = interp.kappa.iter().zip(&direct.kappa).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                err = err.max(e / scale);
            }
        }
        err
    }

    /// Number of interpolation nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Length scales derived from a coupling set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthScales {
    /// Scattering mean free paths 2/(G⁽⁰⁾_jj − G⁽ᶜ⁾_jj).
    pub smf: Vec<f64>,
    /// Transport mean free paths −2/G⁽ᶜ⁾_jj.
    pub tmf: Vec<f64>,
    /// Equipartition distance 1/|λ₂|.
    pub equipartition: f64,
    /// Eigenvalues of G⁽ᶜ⁾ in decreasing order (first ≈ 0).
    pub spectrum: Vec<f64>,
    /// Max deviation of the normalized null vector from the all-ones direction.
    pub null_vector_deviation: f64,
}

/// Compute L_smf, L_tmf and L_eq; verifies that zero is a simple eigenvalue
/// of G⁽ᶜ⁾ with the all-ones eigenvector.
pub fn length_scales(set: &CouplingSet) -> Result<LengthScales> {
    let n = set.n_prop;
    let smf: Vec<f64> = (0..n).map(|j| 2.0 / (set.g0[(j, j)] - set.gc[(j, j)])).collect();
    let tmf: Vec<f64> = (0..n).map(|j| -2.0 / set.gc[(j, j)]).collect();
    if smf.iter().chain(&tmf).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::DegenerateSpectrum("length scales require sigma > 0 and nonzero coupling".into()));
    }
    let (spectrum, null_dev) = gc_spectrum(&set.gc)?;
    if n < 2 {
        return Err(Error::DegenerateSpectrum("a single mode has no equipartition scale".into()));
    }
    let scale = set.gc.amax();
    let tol = 1e-10 * scale;
    if spectrum[0].abs() > tol || spectrum[1] > -tol {
        return Err(Error::DegenerateSpectrum(format!(
            "zero eigenvalue not simple: leading eigenvalues {:.3e}, {:.3e}",
            spectrum[0], spectrum[1]
        )));
    }
    Ok(LengthScales { smf, tmf, equipartition: 1.0 / spectrum[1].abs(), spectrum, null_vector_deviation: null_dev })
}

/// Eigenvalues of a symmetric generator in decreasing order, and the
/// deviation of the eigenvector of the largest one from (1,…,1)/√N.
pub fn gc_spectrum(gc: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let n = gc.nrows();
    let eig = SymmetricEigen::new(gc.clone());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let spectrum: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    if spectrum.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSpectrum("non-finite eigenvalue".into()));
    }
    let v = eig.eigenvectors.column(idx[0]);
    let sign = if v.sum() >= 0.0 { 1.0 } else { -1.0 };
    let target = 1.0 / (n as f64).sqrt();
    let dev = v.iter().map(|x| (sign * x - target).abs()).fold(0.0, f64::max);
    Ok((spectrum, dev))
}

/// Result of the forward-scattering check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardScatteringReport {
    /// max_{j,l} R̂(β_j + β_l).
    pub max_psd: f64,
    /// The smallest sum β_j + β_l (attained at j = l = N).
    pub min_argument: f64,
    /// max_{j,l} R̂(β_j + β_l)/R̂(0).
    pub ratio: f64,
    pub threshold: f64,
    /// True when the ratio exceeds the threshold.
    pub flagged: bool,
}

/// Check how well the backscattering spectrum R̂(β_j + β_l) is suppressed.
pub fn forward_scattering_diagnostic(k: f64, corr: &Correlation, d: f64, n_prop: usize, threshold: f64) -> Result<ForwardScatteringReport> {
    let basis = ModeBasis::with_count(k, d, n_prop)?;
    // R̂ is maximal at the smallest argument for every model we ship (the
    // Gaussian decreases monotonically); scan all pairs to stay model-agnostic.
    let mut max_psd: f64 = 0.0;
    let mut min_arg = f64::INFINITY;
    for j in 0..n_prop {
        for l in j..n_prop {
            let arg = basis.beta[j] + basis.beta[l];
            min_arg = min_arg.min(arg);
            max_psd = max_psd.max(corr.psd(arg));
        }
    }
    let ratio = max_psd / corr.psd(0.0);
    Ok(ForwardScatteringReport { max_psd, min_argument: min_arg, ratio, threshold, flagged: ratio > threshold })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Correlation {
        Correlation::unit(CorrelationModel::Gaussian)
    }

    #[test]
    fn gamma_theta_examples() {
        let (g, t) = gamma_theta(1, 2).unwrap();
        assert!((g + 2.0 / 3.0).abs() < 1e-15 && (t + 4.0 / 3.0).abs() < 1e-15);
        assert!((gamma_theta(2, 4).unwrap().0 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(gamma_theta(2, 1).unwrap().0, -gamma_theta(1, 2).unwrap().0);
        assert!(matches!(gamma_theta(3, 3), Err(Error::EqualIndices(3))));
    }

    #[test]
    fn slow_coupling_limits() {
        let (g, _) = slow_coupling(1, 2, 2.0 * PI, 20.25, 0.001, 0.0).unwrap();
        assert_eq!(g, 0.0);
        let (_, t) = slow_coupling(1, 3, 2.0 * PI, 20.25, 0.0, 0.001).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn zero_sigma_gives_zero_coefficients() {
        let set = coupling_set(2.0 * PI, 0.0, &unit(), 2.6, 5, 0.0, &CouplingOptions::default()).unwrap();
        assert!(set.gc.amax() == 0.0 && set.g0.amax() == 0.0 && set.gs.amax() == 0.0);
        assert!(set.kappa.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_mode_toy() {
        let k = PI;
        let d = 2.5;
        let sigma = 0.3;
        let set = coupling_set(k, sigma, &unit(), d, 2, 0.0, &CouplingOptions::default()).unwrap();
        let (m1, m2) = (PI / d, 2.0 * PI / d);
        let (b1, b2) = ((k * k - m1 * m1).sqrt(), (k * k - m2 * m2).sqrt());
        let psd = (2.0 * PI).sqrt() * (-0.5 * (b1 - b2).powi(2)).exp();
        let g = sigma * sigma * m1 * m1 * m2 * m2 * psd / (4.0 * b1 * b2);
        assert!((set.gc[(0, 1)] - g).abs() < 1e-12 * g);
        assert!((set.gc[(0, 0)] + g).abs() < 1e-12 * g);
        let ls = length_scales(&set).unwrap();
        assert!((ls.equipartition - 1.0 / (2.0 * g)).abs() < 1e-9 / g);
    }

    #[test]
    fn forward_diagnostic_unit_length() {
        let r = forward_scattering_diagnostic(2.0 * PI, &unit(), 20.25, 40, DEFAULT_FORWARD_THRESHOLD).unwrap();
        assert!((r.min_argument - 1.9685).abs() < 1e-3);
        assert!((r.ratio - (-0.5 * r.min_argument * r.min_argument).exp()).abs() < 1e-8);
        assert!((r.ratio - 0.144).abs() < 1e-3 && r.flagged);
        let tiny = forward_scattering_diagnostic(2.0 * PI, &unit(), 0.6, 1, DEFAULT_FORWARD_THRESHOLD).unwrap();
        assert!(!tiny.flagged && tiny.ratio < 1e-10);
    }
}
