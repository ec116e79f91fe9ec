//! Run configuration: a sectioned key–value file (TOML syntax) that fixes
//! the geometry, the physics, the source, the numerics and the optional
//! Monte Carlo ensemble of one run.
//!
//! Lengths are conventionally in wavelengths λ, so that k = 2π (k has no
//! default and must be given).
//! The slow length is L = ℓ/ε with ℓ the correlation length.
//!
//! ```toml
//! [geometry]
//! z_m = 2000.0
//! [geometry.profile]
//! kind = "linear-ramp-with-cubic-caps"
//! z_start = -1000.0
//! z_end = 0.0
//! d_start = 20.0
//! d_end = 20.49
//! cap = 0.2
//! d_flat_left = 19.999
//! d_flat_right = 20.491
//!
//! [physics]
//! k = 6.283185307179586
//! sigma = 0.05477225575051661
//! epsilon = 0.003
//! correlation_length = 3.0
//!
//! [source]
//! rho_fraction = 0.14285714285714285
//! ```
//!
//! Unknown keys are errors, and syntax errors report a line and column.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlation::{Correlation, CorrelationModel};
use crate::coupling::{CouplingOptions, DEFAULT_BETA_FLOOR_FRACTION, DEFAULT_EVANESCENT_CUTOFF, DEFAULT_FORWARD_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::{find_turning_points, SectorLayout, WidthProfile};
use crate::montecarlo::{McConfig, McGuide};
use crate::ode::OdeOptions;
use crate::transport::{default_collar, SourceSpec, TransportOptions, DEFAULT_OUTPUT_POINTS};

/// A complete, validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Half-length of the computational guide.
    pub z_m: f64,
    /// Constant axis curvature, given directly in the scaled units of the
    /// Monte Carlo system (it enters only its slow couplings).
    #[serde(default)]
    pub curvature: f64,
    pub profile: ProfileConfig,
}

/// Width-profile description; `tabulated-file` reads a two-column (z, D)
/// CSV resolved relative to the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    Constant { d: f64 },
    LinearRampWithCubicCaps { z_start: f64, z_end: f64, d_start: f64, d_end: f64, cap: f64, d_flat_left: f64, d_flat_right: f64 },
    PiecewiseLinear { z: Vec<f64>, d: Vec<f64> },
    Tabulated { z: Vec<f64>, d: Vec<f64> },
    TabulatedFile { path: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Wavenumber 2π/λ (required; 2π in wavelength units).
    pub k: Option<f64>,
    /// Boundary fluctuation amplitude σ ≥ 0.
    pub sigma: Option<f64>,
    /// ε = ℓ/L, 0 < ε ≤ 0.1.
    pub epsilon: Option<f64>,
    /// Correlation length ℓ.
    pub correlation_length: Option<f64>,
    #[serde(default)]
    pub correlation: CorrelationConfig,
}

/// Correlation model of the unit-length process ν; `tabulated-file` reads a
/// (beta, psd) CSV resolved relative to the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorrelationConfig {
    #[default]
    Gaussian,
    Tabulated { beta: Vec<f64>, psd: Vec<f64> },
    TabulatedFile { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default = "one")]
    pub f_re: f64,
    #[serde(default)]
    pub f_im: f64,
    /// Source distance from the lower wall.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_star: Option<f64>,
    /// Source distance as a fraction of D(0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_fraction: Option<f64>,
    /// Excite only this left-going mode, with amplitude f, instead of a
    /// point source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excite_mode: Option<usize>,
}

fn one() -> f64 {
    1.0
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { f_re: 1.0, f_im: 0.0, rho_star: None, rho_fraction: None, excite_mode: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Collar half-width δ; defaults to 10·ε^{2/3}·L.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub evanescent_cutoff: usize,
    pub beta_floor_fraction: f64,
    pub output_points: usize,
    pub mean_amplitudes: bool,
    pub right_side: bool,
    pub forward_threshold: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let ode = OdeOptions::default();
        Self {
            rtol: ode.rtol,
            atol: ode.atol,
            delta: None,
            evanescent_cutoff: DEFAULT_EVANESCENT_CUTOFF,
            beta_floor_fraction: DEFAULT_BETA_FLOOR_FRACTION,
            output_points: DEFAULT_OUTPUT_POINTS,
            mean_amplitudes: true,
            right_side: true,
            forward_threshold: DEFAULT_FORWARD_THRESHOLD,
        }
    }
}

/// Monte Carlo ensemble; positions in wavelengths, step in units of L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n_trajectories: usize,
    /// Step in the scaled variable z/L; defaults to ε/10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub include_sigma2_terms: bool,
    #[serde(default = "yes")]
    pub include_slow_terms: bool,
    pub z_left: f64,
    pub z_right: f64,
    /// Defaults to the propagating-mode count at `z_right`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_modes: Option<usize>,
    pub checkpoints: Vec<f64>,
    /// Modes summed in the power-variance comparison; defaults to all but
    /// the last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summed_modes: Option<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Subset of {"csv", "json"}.
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, formats: vec!["csv".into(), "json".into()] }
    }
}

/// Parse and validate configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
        Error::ParseError { line, column, message: e.message().to_string() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::ValidationError(msg.into()))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

impl RunConfig {
    /// Serialize back to configuration text; re-parsing gives an identical
    /// configuration.
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Check every invariant that does not need external files.
    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        let Some(k) = p.k else { return invalid("physics.k is required") };
        positive("physics.k", k)?;
        let Some(sigma) = p.sigma else { return invalid("physics.sigma is required") };
        if !(sigma.is_finite() && sigma >= 0.0) {
            return invalid(format!("physics.sigma must be >= 0, got {sigma}"));
        }
        let Some(eps) = p.epsilon else { return invalid("physics.epsilon is required") };
        if !(eps > 0.0 && eps <= 0.1) {
            return invalid(format!("physics.epsilon must satisfy 0 < epsilon <= 0.1, got {eps}"));
        }
        let Some(ell) = p.correlation_length else { return invalid("physics.correlation_length is required") };
        positive("physics.correlation_length", ell)?;
        positive("geometry.z_m", self.geometry.z_m)?;
        if !self.geometry.curvature.is_finite() {
            return invalid("geometry.curvature must be finite");
        }
        if let ProfileConfig::Constant { .. } | ProfileConfig::LinearRampWithCubicCaps { .. } | ProfileConfig::PiecewiseLinear { .. } | ProfileConfig::Tabulated { .. } =
            &self.geometry.profile
        {
            self.profile(Path::new("."))?;
        }
        if let CorrelationConfig::Tabulated { beta, psd } = &p.correlation {
            CorrelationModel::tabulated(beta.clone(), psd.clone())?;
        }
        let s = &self.source;
        if !(s.f_re.is_finite() && s.f_im.is_finite()) {
            return invalid("source amplitude must be finite");
        }
        match (s.rho_star, s.rho_fraction, s.excite_mode) {
            (_, _, Some(0)) => return invalid("source.excite_mode counts from 1"),
            (None, None, Some(_)) => {}
            (Some(_), None, None) | (None, Some(_), None) => {}
            (None, None, None) => return invalid("source needs rho_star, rho_fraction or excite_mode"),
            _ => return invalid("source: give exactly one of rho_star, rho_fraction, excite_mode"),
        }
        if let Some(f) = s.rho_fraction {
            if !(f > 0.0 && f < 1.0) {
                return invalid(format!("source.rho_fraction must lie in (0, 1), got {f}"));
            }
        }
        let n = &self.numerics;
        positive("numerics.rtol", n.rtol)?;
        positive("numerics.atol", n.atol)?;
        if let Some(d) = n.delta {
            if !(d.is_finite() && d >= 0.0) {
                return invalid(format!("numerics.delta must be >= 0, got {d}"));
            }
        }
        if n.evanescent_cutoff == 0 {
            return invalid("numerics.evanescent_cutoff must be >= 1");
        }
        positive("numerics.beta_floor_fraction", n.beta_floor_fraction)?;
        positive("numerics.forward_threshold", n.forward_threshold)?;
        if n.output_points < 2 {
            return invalid("numerics.output_points must be >= 2");
        }
        if let Some(mc) = &self.mc {
            self.mc_parts(mc, None)?.1.validate()?;
            if mc.summed_modes == Some(0) {
                return invalid("mc.summed_modes must be >= 1");
            }
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return invalid(format!("output.formats: unknown format {f:?}"));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> f64 {
        self.physics.k.expect("validated")
    }

    pub fn sigma(&self) -> f64 {
        self.physics.sigma.expect("validated")
    }

    pub fn epsilon(&self) -> f64 {
        self.physics.epsilon.expect("validated")
    }

    pub fn correlation_length(&self) -> f64 {
        self.physics.correlation_length.expect("validated")
    }

    /// Slow length L = ℓ/ε.
    pub fn slow_length(&self) -> f64 {
        self.correlation_length() / self.epsilon()
    }

    /// Width profile; file paths are resolved against `base`.
    pub fn profile(&self, base: &Path) -> Result<WidthProfile> {
        match &self.geometry.profile {
            ProfileConfig::Constant { d } => WidthProfile::Constant { d: *d }.prepared(),
            ProfileConfig::LinearRampWithCubicCaps { z_start, z_end, d_start, d_end, cap, d_flat_left, d_flat_right } => {
                WidthProfile::linear_capped(*z_start, *z_end, *d_start, *d_end, *cap, *d_flat_left, *d_flat_right)
            }
            ProfileConfig::PiecewiseLinear { z, d } => WidthProfile::PiecewiseLinear { z: z.clone(), d: d.clone() }.prepared(),
            ProfileConfig::Tabulated { z, d } => WidthProfile::tabulated(z.clone(), d.clone()),
            ProfileConfig::TabulatedFile { path } => {
                let (z, d) = read_two_columns(&base.join(path))?;
                WidthProfile::tabulated(z, d)
            }
        }
    }

    /// Unit-length correlation model; file paths are resolved against `base`.
    pub fn correlation_model(&self, base: &Path) -> Result<CorrelationModel> {
        match &self.physics.correlation {
            CorrelationConfig::Gaussian => Ok(CorrelationModel::Gaussian),
            CorrelationConfig::Tabulated { beta, psd } => CorrelationModel::tabulated(beta.clone(), psd.clone()),
            CorrelationConfig::TabulatedFile { path } => {
                let (beta, psd) = read_two_columns(&base.join(path))?;
                CorrelationModel::tabulated(beta, psd)
            }
        }
    }

    /// Correlation with the physical length ℓ.
    pub fn correlation(&self, base: &Path) -> Result<Correlation> {
        Correlation::new(self.correlation_model(base)?, self.correlation_length())
    }

    pub fn layout(&self, profile: &WidthProfile) -> Result<SectorLayout> {
        find_turning_points(self.k(), profile, self.geometry.z_m)
    }

    pub fn coupling_options(&self) -> CouplingOptions {
        CouplingOptions { evanescent_cutoff: self.numerics.evanescent_cutoff, beta_floor_fraction: self.numerics.beta_floor_fraction, phase_terms: true }
    }

    /// Collar half-width δ (configured or default).
    pub fn collar(&self) -> f64 {
        self.numerics.delta.unwrap_or_else(|| default_collar(self.epsilon(), self.correlation_length()))
    }

    pub fn transport_options(&self) -> TransportOptions {
        let mut t = TransportOptions::new(self.collar());
        t.ode.rtol = self.numerics.rtol;
        t.ode.atol = self.numerics.atol;
        t.output_points = self.numerics.output_points;
        t.mean_amplitudes = self.numerics.mean_amplitudes;
        t.right_side = self.numerics.right_side;
        t
    }

    /// Point-source description at opening `d0`, or `None` for a
    /// single-mode excitation.
    pub fn source_spec(&self, d0: f64) -> Option<SourceSpec> {
        let s = &self.source;
        let rho_star = s.rho_star.or(s.rho_fraction.map(|f| f * d0))?;
        Some(SourceSpec { f: self.source_amplitude(), rho_star })
    }

    pub fn source_amplitude(&self) -> Complex64 {
        Complex64::new(self.source.f_re, self.source.f_im)
    }

    /// Monte Carlo inputs in scaled units (z/L, lengths/ℓ, σ/√ε).
    pub fn mc_setup(&self, base: &Path) -> Result<Option<(McGuide, McConfig)>> {
        let Some(mc) = &self.mc else { return Ok(None) };
        let profile = self.profile(base)?;
        let (guide, cfg) = self.mc_parts(mc, Some((&profile, self.correlation_model(base)?)))?;
        cfg.validate()?;
        Ok(Some((guide.expect("profile supplied"), cfg)))
    }

    fn mc_parts(&self, mc: &McSection, with: Option<(&WidthProfile, CorrelationModel)>) -> Result<(Option<McGuide>, McConfig)> {
        let eps = self.epsilon();
        let ell = self.correlation_length();
        let l = self.slow_length();
        let n_modes = match (mc.n_modes, &with) {
            (Some(n), _) => n,
            (None, Some((p, _))) => crate::geometry::mode_count_for_width(self.k(), p.d_at(mc.z_right)),
            (None, None) => 1,
        };
        let cfg = McConfig {
            epsilon: eps,
            n_trajectories: mc.n_trajectories,
            step: mc.step.unwrap_or(eps / 10.0),
            seed: mc.seed,
            include_sigma2_terms: mc.include_sigma2_terms,
            include_slow_terms: mc.include_slow_terms,
            z_left: mc.z_left / l,
            z_right: mc.z_right / l,
            n_modes,
            checkpoints: mc.checkpoints.iter().map(|z| z / l).collect(),
        };
        let guide = match with {
            Some((p, model)) => Some(McGuide {
                k: self.k() * ell,
                sigma: self.sigma() / eps.sqrt(),
                model,
                profile: p.rescaled(l, ell)?,
                curvature: self.geometry.curvature,
            }),
            None => None,
        };
        Ok((guide, cfg))
    }
}

/// Read a two-column numeric CSV with a header row.
pub fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let field = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::ParseError { line: i + 2, column: c + 1, message: format!("{}: expected a number", path.display()) })
        };
        a.push(field(0)?);
        b.push(field(1)?);
    }
    Ok((a, b))
}

/// Directory against which relative paths in a configuration file resolve.
pub fn config_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}
