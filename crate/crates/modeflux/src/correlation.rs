//! Statistics of the boundary fluctuation process ν: the autocorrelation
//! R(ζ) (normalized so R(0) = 1, unit correlation length), its power
//! spectral density R̂(β) = 2∫₀^∞ R(ζ)cos(βζ)dζ, the half-line sine and
//! Laplace-type transforms that enter the diffusion coefficients, and
//! spectral synthesis of stationary Gaussian sample paths together with
//! their exact derivatives.
//!
//! [`Correlation`] attaches a physical correlation length ℓ to a unit
//! model, R_ℓ(z) = R(z/ℓ), and exposes the transforms in physical units.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, gauss_legendre_rule, integrate, QuadOptions};

/// Beyond this lag the unit Gaussian autocorrelation is below 1e−31.
const GAUSS_ZETA_MAX: f64 = 12.0;

/// Absolute tolerance of the oscillatory quadratures.
const OSC_TOL: f64 = 1e-12;

/// A stationary correlation model with unit correlation length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorrelationModel {
    /// R(ζ) = exp(−ζ²/2).
    Gaussian,
    /// A non-negative spectrum tabulated on strictly increasing β ≥ 0
    /// (starting at 0), linearly interpolated and zero beyond the table.
    /// The table is rescaled on construction so that R(0) = 1.
    UserTabulatedSpectrum { beta: Vec<f64>, psd: Vec<f64> },
}

impl CorrelationModel {
    /// Validate and normalize a tabulated spectrum.
    pub fn tabulated(beta: Vec<f64>, psd: Vec<f64>) -> Result<Self> {
        if beta.len() < 2 || beta.len() != psd.len() {
            return Err(Error::InvalidCorrelation("spectrum table needs at least two (beta, psd) rows".into()));
        }
        if beta[0] != 0.0 {
            return Err(Error::InvalidCorrelation("spectrum table must start at beta = 0".into()));
        }
        if beta.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidCorrelation("spectrum beta must be strictly increasing".into()));
        }
        if psd.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidCorrelation("spectrum values must be finite and non-negative".into()));
        }
        // (1/π)∫₀^∞ R̂ = R(0); trapezoid is exact for the linear interpolant.
        let mass: f64 = beta.windows(2).zip(psd.windows(2)).map(|(b, p)| 0.5 * (b[1] - b[0]) * (p[0] + p[1])).sum();
        if mass <= 0.0 {
            return Err(Error::InvalidCorrelation("spectrum has zero mass".into()));
        }
        let scale = PI / mass;
        Ok(CorrelationModel::UserTabulatedSpectrum { beta, psd: psd.into_iter().map(|p| p * scale).collect() })
    }

    /// Re-normalize after deserialization.
    pub fn prepared(self) -> Result<Self> {
        match self {
            CorrelationModel::Gaussian => Ok(CorrelationModel::Gaussian),
            CorrelationModel::UserTabulatedSpectrum { beta, psd } => Self::tabulated(beta, psd),
        }
    }

    /// Autocorrelation R(ζ).
    pub fn autocorrelation(&self, zeta: f64) -> f64 {
        match self {
            CorrelationModel::Gaussian => (-0.5 * zeta * zeta).exp(),
            CorrelationModel::UserTabulatedSpectrum { beta, psd } => cosine_moment(beta, psd, zeta, 0) / PI,
        }
    }

    /// Second derivative R″(ζ).
    pub fn r2(&self, zeta: f64) -> f64 {
        match self {
            CorrelationModel::Gaussian => (zeta * zeta - 1.0) * (-0.5 * zeta * zeta).exp(),
            CorrelationModel::UserTabulatedSpectrum { beta, psd } => -cosine_moment(beta, psd, zeta, 2) / PI,
        }
    }

    /// R″(0).
    pub fn r2_at_0(&self) -> f64 {
        self.r2(0.0)
    }

    /// Power spectral density R̂(β) = 2∫₀^∞ R(ζ)cos(βζ)dζ (even in β).
    ///
    /// For the Gaussian model this is evaluated by oscillatory quadrature of
    /// the autocorrelation, not from the closed form, so that the same path
    /// serves any smooth model; tests compare against √(2π)e^{−β²/2}.
    pub fn psd(&self, beta: f64) -> f64 {
        let b = beta.abs();
        match self {
            CorrelationModel::Gaussian => {
                let panels = (GAUSS_ZETA_MAX * b / PI).ceil() as usize + 4;
                let r = integrate(|z| (-0.5 * z * z).exp() * (b * z).cos(), 0.0, GAUSS_ZETA_MAX, panels, QuadOptions::absolute(OSC_TOL));
                (2.0 * r.value).max(0.0)
            }
            CorrelationModel::UserTabulatedSpectrum { beta: bs, psd } => interp_table(bs, psd, b),
        }
    }

    /// ∫₀^∞ R(ζ) sin(βζ) dζ (odd in β).
    pub fn sine_half_transform(&self, beta: f64) -> f64 {
        if beta == 0.0 {
            return 0.0;
        }
        let sgn = beta.signum();
        let b = beta.abs();
        let v = match self {
            CorrelationModel::Gaussian => {
                let panels = (GAUSS_ZETA_MAX * b / PI).ceil() as usize + 4;
                integrate(|z| (-0.5 * z * z).exp() * (b * z).sin(), 0.0, GAUSS_ZETA_MAX, panels, QuadOptions::absolute(OSC_TOL)).value
            }
            CorrelationModel::UserTabulatedSpectrum { beta: bs, psd } => hilbert_half(bs, psd, b) / PI,
        };
        sgn * v
    }

    /// ∫₀^∞ R″(ζ) e^{−β_l ζ} [(β_l² − β_j²)cos(β_j ζ) − 2β_jβ_l sin(β_j ζ)] dζ,
    /// for β_l > 0.
    pub fn kappa_laplace_integral(&self, beta_j: f64, beta_l: f64) -> f64 {
        assert!(beta_l > 0.0, "Laplace integral needs beta_l > 0");
        match self {
            CorrelationModel::Gaussian => {
                // Truncate where the Laplace weight drops below 1e−14 (or the
                // Gaussian itself is negligible).
                let zmax = (14.0 * std::f64::consts::LN_10 / beta_l).min(GAUSS_ZETA_MAX);
                let a = beta_l * beta_l - beta_j * beta_j;
                let b = 2.0 * beta_j * beta_l;
                let f = |z: f64| (z * z - 1.0) * (-0.5 * z * z - beta_l * z).exp() * (a * (beta_j * z).cos() - b * (beta_j * z).sin());
                let panels = (zmax * beta_j.abs() / PI).ceil() as usize + 2;
                let scale = (a.abs() + b.abs()).max(1.0);
                integrate(f, 0.0, zmax, panels, QuadOptions::absolute(1e-13 * scale)).value
            }
            CorrelationModel::UserTabulatedSpectrum { beta: bs, psd } => {
                // ∫R″e^{−sζ} = −(1/π)∫β²R̂(β) s/(s²+β²) dβ with s = β_l − iβ_j.
                let s = Complex64::new(beta_l, -beta_j);
                let mut m = Complex64::new(0.0, 0.0);
                for i in 0..bs.len() - 1 {
                    let (b0, b1) = (bs[i], bs[i + 1]);
                    let re = integrate(
                        |b| {
                            let p = interp_table(bs, psd, b);
                            (b * b * p * s / (s * s + b * b)).re
                        },
                        b0,
                        b1,
                        4,
                        QuadOptions::absolute(1e-14),
                    )
                    .value;
                    let im = integrate(
                        |b| {
                            let p = interp_table(bs, psd, b);
                            (b * b * p * s / (s * s + b * b)).im
                        },
                        b0,
                        b1,
                        4,
                        QuadOptions::absolute(1e-14),
                    )
                    .value;
                    m += Complex64::new(re, im);
                }
                m *= -1.0 / PI;
                let w = Complex64::new(beta_l, beta_j);
                (w * w * m).re
            }
        }
    }

    /// Frequency beyond which R̂ < 1e−12·R̂(0).
    pub fn spectral_cutoff(&self) -> f64 {
        match self {
            CorrelationModel::Gaussian => (2.0 * 12.0 * std::f64::consts::LN_10).sqrt(),
            CorrelationModel::UserTabulatedSpectrum { beta, psd } => {
                let thr = 1e-12 * psd[0].max(psd.iter().cloned().fold(0.0, f64::max));
                let last = psd.iter().rposition(|&p| p > thr).unwrap_or(0);
                beta[(last + 1).min(beta.len() - 1)]
            }
        }
    }
}

/// Autocorrelation R(ζ) of a model.
pub fn autocorrelation(model: &CorrelationModel, zeta: f64) -> f64 {
    model.autocorrelation(zeta)
}

/// Power spectral density R̂(β) of a model.
pub fn power_spectral_density(model: &CorrelationModel, beta: f64) -> f64 {
    model.psd(beta)
}

/// Half-line sine transform of a model.
pub fn sine_half_transform(model: &CorrelationModel, beta: f64) -> f64 {
    model.sine_half_transform(beta)
}

/// Laplace-type integral entering the evanescent part of the phase drift.
pub fn kappa_laplace_integral(model: &CorrelationModel, beta_j: f64, beta_l: f64) -> f64 {
    model.kappa_laplace_integral(beta_j, beta_l)
}

fn interp_table(bs: &[f64], ps: &[f64], b: f64) -> f64 {
    let n = bs.len();
    if b >= bs[n - 1] {
        return if b == bs[n - 1] { ps[n - 1] } else { 0.0 };
    }
    let i = bs.partition_point(|&v| v <= b).saturating_sub(1).min(n - 2);
    let t = (b - bs[i]) / (bs[i + 1] - bs[i]);
    ps[i] + t * (ps[i + 1] - ps[i])
}

/// ∫₀^∞ β^p R̂(β) cos(βζ) dβ for the piecewise-linear spectrum, p ∈ {0, 2},
/// evaluated segment by segment with Gauss–Legendre (exact for p = 0 at
/// ζ = 0 and spectrally accurate otherwise).
fn cosine_moment(bs: &[f64], ps: &[f64], zeta: f64, p: i32) -> f64 {
    let rule = gauss_legendre_rule(16);
    let mut total = 0.0;
    for i in 0..bs.len() - 1 {
        let (b0, b1) = (bs[i], bs[i + 1]);
        let osc = ((b1 - b0) * zeta.abs() / PI).ceil().max(1.0) as usize;
        let h = (b1 - b0) / osc as f64;
        for m in 0..osc {
            let lo = b0 + h * m as f64;
            total += gauss_legendre(|b| b.powi(p) * interp_table(bs, ps, b) * (b * zeta).cos(), lo, lo + h, &rule);
        }
    }
    total
}

/// PV ∫₀^∞ R̂(b)·β/(β² − b²) db for the piecewise-linear spectrum, using the
/// closed-form antiderivative on each linear segment.
fn hilbert_half(bs: &[f64], ps: &[f64], beta: f64) -> f64 {
    // β/(β² − b²) = ½[1/(β − b) + 1/(β + b)].
    let mut total = 0.0;
    for i in 0..bs.len() - 1 {
        let (b0, b1) = (bs[i], bs[i + 1]);
        let s = (ps[i + 1] - ps[i]) / (b1 - b0);
        let p = ps[i] - s * b0;
        // ∫ (p + s b)/(β − b) db with u = β − b: −(p + sβ)ln|u| + s u. A zero
        // u only occurs at a knot, where the log terms of the two adjacent
        // segments carry the same coefficient R̂(β) and cancel.
        let anti_minus = |b: f64| {
            let u = beta - b;
            let log = if u == 0.0 { 0.0 } else { u.abs().ln() };
            -(p + s * beta) * log + s * u
        };
        // ∫ (p + s b)/(β + b) db with v = β + b: (p − sβ + s v)/v ⇒ (p − sβ)ln v + s v.
        let anti_plus = |b: f64| {
            let v = beta + b;
            (p - s * beta) * v.ln() + s * v
        };
        total += 0.5 * (anti_minus(b1) - anti_minus(b0) + anti_plus(b1) - anti_plus(b0));
    }
    total
}

/// A physical correlation length ℓ attached to a unit model: R_ℓ(z) = R(z/ℓ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub model: CorrelationModel,
    pub length: f64,
}

impl Correlation {
    pub fn new(model: CorrelationModel, length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidCorrelation("correlation length must be positive".into()));
        }
        Ok(Self { model, length })
    }

    /// Unit-length model (scaled units).
    pub fn unit(model: CorrelationModel) -> Self {
        Self { model, length: 1.0 }
    }

    /// R̂_ℓ(β) = ℓ·R̂(ℓβ).
    pub fn psd(&self, beta: f64) -> f64 {
        self.length * self.model.psd(self.length * beta)
    }

    /// R″_ℓ(0) = R″(0)/ℓ².
    pub fn r2_at_0(&self) -> f64 {
        self.model.r2_at_0() / (self.length * self.length)
    }

    /// ∫₀^∞ R_ℓ(z) sin(βz) dz = ℓ·S(ℓβ).
    pub fn sine_half_transform(&self, beta: f64) -> f64 {
        self.length * self.model.sine_half_transform(self.length * beta)
    }

    /// Physical-unit Laplace integral: K(ℓβ_j, ℓβ_l)/ℓ³.
    pub fn kappa_laplace_integral(&self, beta_j: f64, beta_l: f64) -> f64 {
        let l = self.length;
        self.model.kappa_laplace_integral(l * beta_j, l * beta_l) / (l * l * l)
    }
}

/// A synthesized stationary Gaussian path ν with exact derivatives, sampled
/// on a uniform grid in the fast variable ζ.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    /// ζ of the first sample.
    pub zeta0: f64,
    pub dzeta: f64,
    /// ν, ν′, ν″, ν‴ on the grid.
    pub values: [Vec<f64>; 4],
    pub seed: u64,
    pub stream: u64,
    /// Number of spectral lines used.
    pub modes: usize,
    /// Fraction of the spectral mass captured by the truncated sum.
    pub captured_fraction: f64,
}

/// Parameters of the spectral synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    /// Period of the synthesized process as a multiple of the span.
    pub oversampling: f64,
    /// Clip ν (not its derivatives) to ±`clip` when set.
    pub clip: Option<f64>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { oversampling: 2.0, clip: None }
    }
}

impl NoisePath {
    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.values[0].is_empty()
    }

    /// Last ζ covered by the grid.
    pub fn zeta_end(&self) -> f64 {
        self.zeta0 + self.dzeta * (self.len().saturating_sub(1)) as f64
    }

    /// (ν, ν′, ν″, ν‴) at ζ. Grid points are returned exactly; between grid
    /// points ν, ν′ and ν″ use cubic Hermite interpolation on (ν, ν′),
    /// (ν′, ν″) and (ν″, ν‴) respectively.
    pub fn sample(&self, zeta: f64) -> Result<[f64; 4]> {
        let x = (zeta - self.zeta0) / self.dzeta;
        let n = self.len();
        if !(x >= -1e-9 && x <= (n - 1) as f64 + 1e-9) {
            return Err(Error::PathCoverage { needed: zeta, start: self.zeta0, end: self.zeta_end() });
        }
        let r = x.round();
        if (x - r).abs() < 1e-9 {
            let i = (r as usize).min(n - 1);
            return Ok([self.values[0][i], self.values[1][i], self.values[2][i], self.values[3][i]]);
        }
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        let h = self.dzeta;
        let herm = |f0: f64, f1: f64, d0: f64, d1: f64| {
            let t2 = t * t;
            let t3 = t2 * t;
            (2.0 * t3 - 3.0 * t2 + 1.0) * f0 + (t3 - 2.0 * t2 + t) * h * d0 + (-2.0 * t3 + 3.0 * t2) * f1 + (t3 - t2) * h * d1
        };
        let v = &self.values;
        let out0 = herm(v[0][i], v[0][i + 1], v[1][i], v[1][i + 1]);
        let out1 = herm(v[1][i], v[1][i + 1], v[2][i], v[2][i + 1]);
        let out2 = herm(v[2][i], v[2][i + 1], v[3][i], v[3][i + 1]);
        let out3 = v[3][i] + t * (v[3][i + 1] - v[3][i]);
        Ok([out0, out1, out2, out3])
    }
}

/// Precomputed spectral amplitudes for repeated path synthesis on one grid.
#[derive(Clone)]
pub struct PathSynthesizer {
    zeta0: f64,
    dzeta: f64,
    samples: usize,
    fft_len: usize,
    /// √(R̂(ω_m)Δω/π) with the ω = 0 line at half weight.
    amplitude: Vec<f64>,
    omega: Vec<f64>,
    captured_fraction: f64,
    clip: Option<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PathSynthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PathSynthesizer")
            .field("zeta0", &self.zeta0)
            .field("dzeta", &self.dzeta)
            .field("samples", &self.samples)
            .field("fft_len", &self.fft_len)
            .field("lines", &self.amplitude.len())
            .field("captured_fraction", &self.captured_fraction)
            .finish()
    }
}

impl PathSynthesizer {
    /// Prepare synthesis of paths covering `[zeta0, zeta0 + span]` on a grid
    /// of spacing `dzeta`.
    pub fn new(model: &CorrelationModel, zeta0: f64, span: f64, dzeta: f64, opts: SynthesisOptions) -> Result<Self> {
        if !(span > 0.0 && dzeta > 0.0 && span.is_finite() && dzeta.is_finite()) {
            return Err(Error::ValidationError("path span and step must be positive".into()));
        }
        let samples = (span / dzeta - 1e-9).ceil() as usize + 1;
        let period = span * opts.oversampling.max(1.0);
        let mut fft_len = (period / dzeta - 1e-9).ceil() as usize;
        fft_len = fft_len.max(samples).max(8);
        fft_len += fft_len % 2;
        let period = fft_len as f64 * dzeta;
        let d_omega = 2.0 * PI / period;
        let beta_max = model.spectral_cutoff();
        let nyquist = fft_len / 2;
        let m_cut = ((beta_max / d_omega).ceil() as usize).min(nyquist - 1);
        let mut amplitude = Vec::with_capacity(m_cut + 1);
        let mut omega = Vec::with_capacity(m_cut + 1);
        let mut captured = 0.0;
        for m in 0..=m_cut {
            let w = m as f64 * d_omega;
            let weight = if m == 0 { 0.5 } else { 1.0 };
            let p = model.psd(w);
            captured += weight * p * d_omega / PI;
            amplitude.push((weight * p * d_omega / PI).sqrt());
            omega.push(w);
        }
        // R(0) = 1 is the full spectral mass (1/π)∫₀^∞ R̂.
        let captured_fraction = captured;
        if (1.0 - captured_fraction).abs() > 1e-6 {
            return Err(Error::SpectrumTruncationTooCoarse { captured: captured_fraction });
        }
        let fft = FftPlanner::<f64>::new().plan_fft_inverse(fft_len);
        Ok(Self { zeta0, dzeta, samples, fft_len, amplitude, omega, captured_fraction, clip: opts.clip, fft })
    }

    pub fn grid_len(&self) -> usize {
        self.samples
    }

    /// Synthesize the path for (seed, stream); distinct streams are independent.
    pub fn synthesize(&self, seed: u64, stream: u64) -> NoisePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let m = self.amplitude.len();
        let mut coef = Vec::with_capacity(m);
        for i in 0..m {
            let xi: f64 = StandardNormal.sample(&mut rng);
            let eta: f64 = StandardNormal.sample(&mut rng);
            coef.push(Complex64::new(xi, -eta) * self.amplitude[i]);
        }
        let mut values: [Vec<f64>; 4] = Default::default();
        let i_unit = Complex64::new(0.0, 1.0);
        for (p, out) in values.iter_mut().enumerate() {
            let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
            for i in 0..m {
                // Phase shift so that ζ is measured from zeta0 consistently:
                // the process is stationary, so the origin is immaterial.
                buf[i] = coef[i] * (i_unit * self.omega[i]).powi(p as i32);
            }
            self.fft.process(&mut buf);
            *out = buf[..self.samples].iter().map(|c| c.re).collect();
        }
        if let Some(c) = self.clip {
            for v in values[0].iter_mut() {
                *v = v.clamp(-c, c);
            }
        }
        NoisePath {
            zeta0: self.zeta0,
            dzeta: self.dzeta,
            values,
            seed,
            stream,
            modes: m,
            captured_fraction: self.captured_fraction,
        }
    }
}

/// One-shot path synthesis over `[0, span]` with stream 0.
pub fn synthesize_path(model: &CorrelationModel, span: f64, dzeta: f64, seed: u64) -> Result<NoisePath> {
    Ok(PathSynthesizer::new(model, 0.0, span, dzeta, SynthesisOptions::default())?.synthesize(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_basics() {
        let g = CorrelationModel::Gaussian;
        assert_eq!(g.autocorrelation(0.0), 1.0);
        assert!((g.autocorrelation(1.3) - (-0.845f64).exp()).abs() < 1e-15);
        assert_eq!(g.r2_at_0(), -1.0);
    }

    #[test]
    fn gaussian_psd_matches_closed_form() {
        let g = CorrelationModel::Gaussian;
        for i in -40..=40 {
            let b = 0.5 * i as f64;
            let exact = (2.0 * PI).sqrt() * (-0.5 * b * b).exp();
            assert!((g.psd(b) - exact).abs() < 1e-8, "beta = {b}");
        }
        assert!((g.psd(0.0) - 2.506_628_274_631_000_5).abs() < 1e-10);
        assert!((g.psd(2.0) - 0.339_235_247_516_088).abs() < 1e-10);
    }

    #[test]
    fn tabulated_gaussian_spectrum_reproduces_model() {
        let beta: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.0025).collect();
        let psd: Vec<f64> = beta.iter().map(|b| (2.0 * PI).sqrt() * (-0.5 * b * b).exp()).collect();
        let t = CorrelationModel::tabulated(beta, psd).unwrap();
        let g = CorrelationModel::Gaussian;
        assert!((t.autocorrelation(0.0) - 1.0).abs() < 1e-12);
        for z in [0.3, 1.0, 2.5] {
            assert!((t.autocorrelation(z) - g.autocorrelation(z)).abs() < 1e-6, "R({z})");
            assert!((t.r2(z) - g.r2(z)).abs() < 1e-5, "R''({z})");
        }
        for b in [0.2, 1.0, 3.0] {
            assert!((t.sine_half_transform(b) - g.sine_half_transform(b)).abs() < 1e-5, "S({b})");
        }
        for (bj, bl) in [(1.0, 1.0), (2.0, 0.5), (0.5, 4.0)] {
            let a = t.kappa_laplace_integral(bj, bl);
            let e = g.kappa_laplace_integral(bj, bl);
            assert!((a - e).abs() < 1e-5 * (1.0 + e.abs()), "K({bj},{bl}) {a} vs {e}");
        }
    }

    #[test]
    fn synthesized_derivatives_are_consistent() {
        let path = synthesize_path(&CorrelationModel::Gaussian, 50.0, 0.01, 7).unwrap();
        let h = path.dzeta;
        for i in (1..path.len() - 1).step_by(97) {
            for p in 0..3 {
                let fd = (path.values[p][i + 1] - path.values[p][i - 1]) / (2.0 * h);
                let scale = 1.0 + path.values[p + 1][i].abs();
                assert!((fd - path.values[p + 1][i]).abs() < 1e-3 * scale, "order {p} at {i}");
            }
        }
        let again = synthesize_path(&CorrelationModel::Gaussian, 50.0, 0.01, 7).unwrap();
        assert_eq!(path, again);
    }
}
