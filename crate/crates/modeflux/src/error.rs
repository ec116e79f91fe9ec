//! Error type shared by every module.
//!
//! Each variant carries a stable machine-readable code (see [`Error::code`])
//! and maps onto one of the CLI exit classes: configuration/validation
//! problems exit with status 1, numerical failures with status 2.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building layouts, coefficients,
/// moment trajectories or Monte Carlo ensembles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // ----- geometry -------------------------------------------------------
    /// The source sits (numerically) on a turning point.
    #[error("source on turning point: dist(kD(0)/pi, Z) = {distance:.3e} below margin {margin:.1e}")]
    SourceOnTurningPoint { distance: f64, margin: f64 },
    /// The width profile is not strictly increasing where it must be.
    #[error("non-monotone width profile near z = {z}: D'(z) = {slope:.3e}")]
    NonMonotoneProfile { z: f64, slope: f64 },
    /// A profile definition is malformed (non-positive width, bad table, ...).
    #[error("invalid width profile: {0}")]
    InvalidProfile(String),

    // ----- modes ----------------------------------------------------------
    #[error("mode {j} is not propagating (k = {k}, mu_j = {mu})")]
    NotPropagating { j: usize, k: f64, mu: f64 },
    #[error("mode {j} is not evanescent (k = {k}, mu_j = {mu})")]
    NotEvanescent { j: usize, k: f64, mu: f64 },
    #[error("transverse position rho = {rho} outside the cross-section |rho| <= {half_width}")]
    OutOfCrossSection { rho: f64, half_width: f64 },

    // ----- correlation ----------------------------------------------------
    #[error("spectrum truncation too coarse: captured fraction {captured:.9} of the spectral mass")]
    SpectrumTruncationTooCoarse { captured: f64 },
    #[error("invalid correlation model: {0}")]
    InvalidCorrelation(String),

    // ----- coupling -------------------------------------------------------
    #[error("coupling coefficient requested for equal indices j = q = {0}")]
    EqualIndices(usize),
    #[error("turning point too close: beta_{j} = {beta:.3e} below floor {floor:.3e}")]
    TurningPointTooClose { j: usize, beta: f64, floor: f64 },
    #[error("evanescent tail of kappa_{j} not converged: bound {bound:.3e} vs |kappa| = {kappa:.3e}")]
    NonConvergedTail { j: usize, bound: f64, kappa: f64 },
    #[error("degenerate Gc spectrum: {0}")]
    DegenerateSpectrum(String),

    // ----- transport ------------------------------------------------------
    #[error("ODE solver tolerance exceeded: {0}")]
    SolverToleranceExceeded(String),
    #[error("negative mean power beyond tolerance: P_{j} = {value:.3e} at z = {z}")]
    NegativePowerBeyondTolerance { j: usize, value: f64, z: f64 },
    #[error("source outside the guide: |rho*| = {rho} >= D(0)/2 = {half_width}")]
    SourceOutsideGuide { rho: f64, half_width: f64 },
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("second-moment conservation violated (diagonal/off-diagonal moment equations): {0}")]
    MomentConservation(String),

    // ----- montecarlo -----------------------------------------------------
    #[error("noise path does not cover fast variable {needed}: path spans [{start}, {end}]")]
    PathCoverage { needed: f64, start: f64, end: f64 },
    #[error("step too coarse: {0}")]
    StepTooCoarse(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    // ----- cli ------------------------------------------------------------
    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError { line: usize, column: usize, message: String },
    #[error("validation error: {0}")]
    ValidationError(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Stable identifier written to machine-readable outputs.
    pub fn code(&self) -> &'static str {
        match self {
            Error::SourceOnTurningPoint { .. } => "SourceOnTurningPoint",
            Error::NonMonotoneProfile { .. } => "NonMonotoneProfile",
            Error::InvalidProfile(_) => "InvalidProfile",
            Error::NotPropagating { .. } => "NotPropagating",
            Error::NotEvanescent { .. } => "NotEvanescent",
            Error::OutOfCrossSection { .. } => "OutOfCrossSection",
            Error::SpectrumTruncationTooCoarse { .. } => "SpectrumTruncationTooCoarse",
            Error::InvalidCorrelation(_) => "InvalidCorrelation",
            Error::EqualIndices(_) => "EqualIndices",
            Error::TurningPointTooClose { .. } => "TurningPointTooClose",
            Error::NonConvergedTail { .. } => "NonConvergedTail",
            Error::DegenerateSpectrum(_) => "DegenerateSpectrum",
            Error::SolverToleranceExceeded(_) => "SolverToleranceExceeded",
            Error::NegativePowerBeyondTolerance { .. } => "NegativePowerBeyondTolerance",
            Error::SourceOutsideGuide { .. } => "SourceOutsideGuide",
            Error::LayoutMismatch(_) => "LayoutMismatch",
            Error::MomentConservation(_) => "MomentConservation",
            Error::PathCoverage { .. } => "PathCoverage",
            Error::StepTooCoarse(_) => "StepTooCoarse",
            Error::GridMismatch(_) => "GridMismatch",
            Error::ParseError { .. } => "ParseError",
            Error::ValidationError(_) => "ValidationError",
            Error::Io(_) => "Io",
        }
    }

    /// Process exit status for the CLI: 1 for invalid input, 2 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SourceOnTurningPoint { .. }
            | Error::NonMonotoneProfile { .. }
            | Error::InvalidProfile(_)
            | Error::OutOfCrossSection { .. }
            | Error::InvalidCorrelation(_)
            | Error::EqualIndices(_)
            | Error::SourceOutsideGuide { .. }
            | Error::LayoutMismatch(_)
            | Error::GridMismatch(_)
            | Error::ParseError { .. }
            | Error::ValidationError(_)
            | Error::Io(_) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
