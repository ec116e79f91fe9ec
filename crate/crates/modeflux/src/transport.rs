//! Sector-chained solution of the diffusion-limit moment equations.
//!
//! Left-going waves leave the source at z = 0 and travel toward −Z_M; in
//! every sector between consecutive turning points the mean amplitudes,
//! mean powers and second moments of the mode powers obey linear ODEs with
//! coefficients from [`crate::coupling`], integrated in the direction of
//! propagation. Around each turning point a δ-collar is excluded from the
//! coupled dynamics: moments are held constant there and the turning mode's
//! power (with its second-moment row and column) is moved into the
//! reflected-power ledger. Right-going powers are chained the same way with a
//! zero-initialized mode appearing at each right turning point.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::correlation::Correlation;
use crate::coupling::{coupling_set, CouplingOptions, CouplingSet, CouplingTable};
use crate::error::{Error, Result};
use crate::geometry::{SectorLayout, WidthProfile};
use crate::modes::{beta_propagating, eigenfunction};
use crate::ode::{solve, OdeOptions};

/// Default number of output points per sector.
pub const DEFAULT_OUTPUT_POINTS: usize = 200;

/// Tolerance (relative to total power) below which a negative mean power is
/// accepted as round-off.
pub const NEGATIVE_POWER_TOLERANCE: f64 = 1e-10;

/// Relative tolerance on conservation of Σ_{j,l}⟨P_jP_l⟩ within a sector.
pub const SECOND_MOMENT_CONSERVATION_TOLERANCE: f64 = 1e-6;

/// A point source of amplitude `f` at transverse position `rho_star` in the
/// cross-section z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceSpec {
    pub f: Complex64,
    pub rho_star: f64,
}

/// Initial left-going (b) and right-going (a) amplitudes launched by the
/// source: b_o = −f·y_j(ρ*)/(2i√β_j), a_o = −b_o, j = 1..N⁽⁰⁾.
pub fn source_amplitudes(spec: &SourceSpec, k: f64, d0: f64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if !(spec.rho_star.abs() < 0.5 * d0) {
        return Err(Error::SourceOutsideGuide { rho: spec.rho_star, half_width: 0.5 * d0 });
    }
    let n = crate::geometry::mode_count_for_width(k, d0);
    if n == 0 {
        return Err(Error::ValidationError("no propagating mode at the source".into()));
    }
    let mut b = Vec::with_capacity(n);
    for j in 1..=n {
        let y = eigenfunction(j, spec.rho_star, d0)?;
        let beta = beta_propagating(k, j, d0)?;
        b.push(-spec.f * y / (Complex64::new(0.0, 2.0) * beta.sqrt()));
    }
    let a = b.iter().map(|v| -v).collect();
    Ok((b, a))
}

/// Supplies coupling coefficients at a point for a given mode count.
pub trait CouplingProvider {
    fn coupling(&self, z: f64, n_prop: usize, phase_terms: bool) -> Result<CouplingSet>;

    /// A faster provider valid on [a, b] for `n_prop` modes, if available.
    fn localized(&self, _a: f64, _b: f64, _n_prop: usize, _phase_terms: bool) -> Result<Option<Box<dyn CouplingProvider + '_>>> {
        Ok(None)
    }
}

/// Coefficients of a guide described by a width profile.
///
/// With `interpolate` set, each sector's coefficients are tabulated once in
/// the opening D (see [`CouplingTable`]) instead of being recomputed at
/// every integrator stage.
#[derive(Debug, Clone)]
pub struct GuideCoupling<'a> {
    pub k: f64,
    pub sigma: f64,
    pub correlation: &'a Correlation,
    pub profile: &'a WidthProfile,
    pub options: CouplingOptions,
    pub interpolate: bool,
}

impl<'a> GuideCoupling<'a> {
    pub fn new(k: f64, sigma: f64, correlation: &'a Correlation, profile: &'a WidthProfile, options: CouplingOptions) -> Self {
        Self { k, sigma, correlation, profile, options, interpolate: true }
    }
}

impl CouplingProvider for GuideCoupling<'_> {
    fn coupling(&self, z: f64, n_prop: usize, phase_terms: bool) -> Result<CouplingSet> {
        let opts = CouplingOptions { phase_terms, ..self.options };
        coupling_set(self.k, self.sigma, self.correlation, self.profile.d_at(z), n_prop, z, &opts)
    }

    fn localized(&self, a: f64, b: f64, n_prop: usize, phase_terms: bool) -> Result<Option<Box<dyn CouplingProvider + '_>>> {
        if !self.interpolate {
            return Ok(None);
        }
        // Opening range over [a, b]: endpoints plus a dense scan for
        // non-monotone profiles.
        let samples = 2048;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=samples {
            let d = self.profile.d_at(a + (b - a) * i as f64 / samples as f64);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let opts = CouplingOptions { phase_terms, ..self.options };
        let table = CouplingTable::build(self.k, self.sigma, self.correlation, lo, hi, n_prop, &opts)?;
        Ok(Some(Box::new(TabulatedCoupling { table, profile: self.profile })))
    }
}

/// Provider backed by a [`CouplingTable`].
#[derive(Debug, Clone)]
pub struct TabulatedCoupling<'a> {
    pub table: CouplingTable,
    pub profile: &'a WidthProfile,
}

impl CouplingProvider for TabulatedCoupling<'_> {
    fn coupling(&self, z: f64, n_prop: usize, phase_terms: bool) -> Result<CouplingSet> {
        if n_prop != self.table.n_prop || (phase_terms && !self.table.phase_terms) {
            return Err(Error::LayoutMismatch(format!("table holds {} modes, {} requested", self.table.n_prop, n_prop)));
        }
        let d = self.profile.d_at(z).clamp(self.table.d_min, self.table.d_max);
        Ok(self.table.at(d, z))
    }
}

/// A fixed coefficient set (constant-coefficient sectors).
#[derive(Debug, Clone)]
pub struct ConstantCoupling(pub CouplingSet);

impl CouplingProvider for ConstantCoupling {
    fn coupling(&self, _z: f64, n_prop: usize, _phase_terms: bool) -> Result<CouplingSet> {
        if n_prop != self.0.n_prop {
            return Err(Error::LayoutMismatch(format!("constant coupling has {} modes, {} requested", self.0.n_prop, n_prop)));
        }
        Ok(self.0.clone())
    }
}

/// Direction of propagation, which fixes the integration direction and the
/// sign of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Left-going waves, integrated backward in z.
    Left,
    /// Right-going waves, integrated forward in z.
    Right,
}

impl Side {
    /// s in ∂_z E[f] = s·E[𝓛f]: −1 for left-going, +1 for right-going.
    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// Integrate the mean amplitudes d⟨b_j⟩/dz = −[Gc_jj − G0_jj + iGs_jj + 2iκ_j]⟨b_j⟩/2
/// from `z_from` to `z_to` (left-going waves), returning values at `outputs`
/// (ordered from `z_from` toward `z_to`).
///
/// The right-hand side does not depend on the amplitudes, so the complex
/// log-multiplier is integrated and applied to `init`; zero initial
/// amplitudes stay exactly zero.
pub fn evolve_mean_amplitudes(init: &[Complex64], z_from: f64, z_to: f64, outputs: &[f64], provider: &dyn CouplingProvider, ode: &OdeOptions) -> Result<Vec<Vec<Complex64>>> {
    let n = init.len();
    let y0 = vec![0.0; 2 * n];
    let sol = solve(
        |z, _y, dy| {
            let set = provider.coupling(z, n, true)?;
            for j in 0..n {
                dy[2 * j] = -0.5 * (set.gc[(j, j)] - set.g0[(j, j)]);
                dy[2 * j + 1] = -0.5 * (set.gs[(j, j)] + 2.0 * set.kappa[j]);
            }
            Ok(())
        },
        z_from,
        &y0,
        z_to,
        outputs,
        ode,
    )?;
    Ok(sol
        .y
        .iter()
        .map(|y| (0..n).map(|j| init[j] * Complex64::new(y[2 * j], y[2 * j + 1]).exp()).collect())
        .collect())
}

/// Integrate the mean powers ∂_z⟨P⟩ = s·Gc⟨P⟩ (s = −1 for left-going waves)
/// from `z_from` to `z_to`.
pub fn evolve_mean_powers(init: &[f64], side: Side, z_from: f64, z_to: f64, outputs: &[f64], provider: &dyn CouplingProvider, ode: &OdeOptions) -> Result<Vec<Vec<f64>>> {
    if init.iter().any(|&p| p < 0.0) {
        return Err(Error::ValidationError("initial mean powers must be non-negative".into()));
    }
    let n = init.len();
    let s = side.sign();
    let sol = solve(
        |z, y, dy| {
            let set = provider.coupling(z, n, false)?;
            for j in 0..n {
                dy[j] = s * (0..n).map(|l| set.gc[(j, l)] * y[l]).sum::<f64>();
            }
            Ok(())
        },
        z_from,
        init,
        z_to,
        outputs,
        ode,
    )?;
    let total: f64 = init.iter().sum();
    for (z, y) in sol.t.iter().zip(&sol.y) {
        for (j, &p) in y.iter().enumerate() {
            if p < -NEGATIVE_POWER_TOLERANCE * total {
                return Err(Error::NegativePowerBeyondTolerance { j: j + 1, value: p, z: *z });
            }
        }
    }
    Ok(sol.y)
}

/// Right-hand side of the second-moment system for M = ⟨P_jP_l⟩:
/// diagonal 2Gc_jjM_jj − 4Σ_l Gc_jlM_lj, off-diagonal
/// 2Gc_jqM_jq − Σ_l(Gc_jlM_lq + Gc_lqM_jl), times −s.
pub fn second_moment_rhs(gc: &DMatrix<f64>, m: &DMatrix<f64>, side: Side) -> DMatrix<f64> {
    let n = gc.nrows();
    let gm = gc * m;
    let s = -side.sign();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for q in 0..n {
            out[(j, q)] = if j == q {
                s * (2.0 * gc[(j, j)] * m[(j, j)] - 4.0 * gm[(j, j)])
            } else {
                // Σ_l Gc_lq M_jl = (M·Gc)_jq = (Gc·M)_qj by symmetry.
                s * (2.0 * gc[(j, q)] * m[(j, q)] - gm[(j, q)] - gm[(q, j)])
            };
        }
    }
    out
}

/// Integrate the second moments ⟨P_jP_l⟩ from `z_from` to `z_to`.
pub fn evolve_second_moments(init: &DMatrix<f64>, side: Side, z_from: f64, z_to: f64, outputs: &[f64], provider: &dyn CouplingProvider, ode: &OdeOptions) -> Result<Vec<DMatrix<f64>>> {
    let n = init.nrows();
    if init.ncols() != n || (init - init.transpose()).amax() > 1e-12 * init.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::ValidationError("initial second-moment matrix must be square and symmetric".into()));
    }
    if (0..n).any(|j| init[(j, j)] < 0.0) {
        return Err(Error::ValidationError("initial second moments need a non-negative diagonal".into()));
    }
    let y0: Vec<f64> = init.iter().copied().collect();
    let sol = solve(
        |z, y, dy| {
            let set = provider.coupling(z, n, false)?;
            let m = DMatrix::from_column_slice(n, n, y);
            dy.copy_from_slice(second_moment_rhs(&set.gc, &m, side).as_slice());
            Ok(())
        },
        z_from,
        &y0,
        z_to,
        outputs,
        ode,
    )?;
    Ok(sol
        .y
        .iter()
        .map(|y| {
            let m = DMatrix::from_column_slice(n, n, y);
            (&m + m.transpose()) * 0.5
        })
        .collect())
}

/// Moments of the mode amplitudes and powers at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentState {
    pub z: f64,
    pub sector: usize,
    /// ⟨b_j⟩ (empty when mean amplitudes were not requested).
    pub mean_amps: Vec<Complex64>,
    pub mean_powers: Vec<f64>,
    pub second_moments: DMatrix<f64>,
}

impl MomentState {
    /// Σ_j⟨P_j⟩ over the first `m` modes.
    pub fn partial_power(&self, m: usize) -> f64 {
        self.mean_powers[..m].iter().sum()
    }

    /// Standard deviation of Σ_{j<m} P_j from the second moments.
    pub fn partial_power_std(&self, m: usize) -> f64 {
        let second: f64 = (0..m).flat_map(|j| (0..m).map(move |l| (j, l))).map(|(j, l)| self.second_moments[(j, l)]).sum();
        let mean = self.partial_power(m);
        (second - mean * mean).max(0.0).sqrt()
    }

    /// Σ_{j,l}⟨P_jP_l⟩.
    pub fn total_second_moment(&self) -> f64 {
        self.second_moments.sum()
    }
}

/// The solution in one sector on its uniform output grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorRecord {
    pub side: Side,
    /// Sector index t (0 contains the source).
    pub index: usize,
    pub z_left: f64,
    pub z_right: f64,
    pub n_modes: usize,
    /// Interval on which the coupled equations were integrated (the sector
    /// minus the δ-collars of its turning points).
    pub coupled_interval: (f64, f64),
    /// Number of modes that continue past the far end of the sector.
    pub transmitted_modes: usize,
    /// States ordered in the direction of propagation.
    pub states: Vec<MomentState>,
}

impl SectorRecord {
    /// Mean of the power carried past the far end, at every output point.
    pub fn transmitted_mean(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.partial_power(self.transmitted_modes)).collect()
    }

    /// Standard deviation of the power carried past the far end.
    pub fn transmitted_std(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.partial_power_std(self.transmitted_modes)).collect()
    }

    /// Final state (far end of the sector).
    pub fn last(&self) -> &MomentState {
        self.states.last().expect("sector records hold at least one state")
    }
}

/// The turning mode's moments at the point where it is reflected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectionRecord {
    pub z_turning: f64,
    /// Index of the reflected mode (1-based).
    pub mode: usize,
    pub mean_power: f64,
    pub second_moment: f64,
    pub variance: f64,
}

/// Piecewise-constant transmitted-power record: total power in a sector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmittedSegment {
    pub side: Side,
    pub z_left: f64,
    pub z_right: f64,
    pub n_modes: usize,
    pub mean: f64,
    pub std: f64,
}

/// Global energy balance of the left-going problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    /// 𝒫₀ = Σ|b_{j,o}|².
    pub source_power: f64,
    pub reflected_mean: f64,
    /// Equal to `transmitted_std` by pathwise conservation.
    pub reflected_std: f64,
    pub transmitted_mean: f64,
    pub transmitted_std: f64,
    /// ⟨𝒫_refl(0)⟩ + ⟨𝒫_trans(−Z_M)⟩ − 𝒫₀.
    pub residual: f64,
    pub relative_residual: f64,
}

/// Comparison of the transmitted power with the strong-scattering value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalLimit {
    pub source_power: f64,
    pub n_min: usize,
    pub n0: usize,
    /// 𝒫₀·N_min/N⁽⁰⁾.
    pub predicted: f64,
    pub transmitted: f64,
    pub relative_error: f64,
}

/// Everything produced by a chained run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportLedger {
    pub b_o: Vec<Complex64>,
    pub a_o: Vec<Complex64>,
    /// Left-going sectors ordered from the source toward −Z_M.
    pub left: Vec<SectorRecord>,
    /// Right-going sectors ordered from the source toward Z_M.
    pub right: Vec<SectorRecord>,
    pub reflected: Vec<ReflectionRecord>,
    pub transmitted: Vec<TransmittedSegment>,
    pub balance: BalanceReport,
    pub universal: UniversalLimit,
    pub collar: f64,
}

/// Numerical options for a chained run.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportOptions {
    pub ode: OdeOptions,
    /// Half-width δ of the collar around each turning point.
    pub collar: f64,
    pub output_points: usize,
    pub mean_amplitudes: bool,
    pub right_side: bool,
}

impl TransportOptions {
    pub fn new(collar: f64) -> Self {
        Self { ode: OdeOptions::default(), collar, output_points: DEFAULT_OUTPUT_POINTS, mean_amplitudes: true, right_side: true }
    }
}

/// Default collar 10·ε^{2/3}·L, with the slow length L = ℓ/ε.
pub fn default_collar(epsilon: f64, correlation_length: f64) -> f64 {
    10.0 * epsilon.powf(2.0 / 3.0) * correlation_length / epsilon
}

/// Initial state of the sector-chaining recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStart {
    pub mean_amps: Vec<Complex64>,
    pub mean_powers: Vec<f64>,
    pub second_moments: DMatrix<f64>,
}

impl ChainStart {
    /// Deterministic start from amplitudes: ⟨P_j⟩ = |b_j|², ⟨P_jP_l⟩ = |b_j|²|b_l|².
    pub fn from_amplitudes(amps: &[Complex64]) -> Self {
        let p: Vec<f64> = amps.iter().map(|b| b.norm_sqr()).collect();
        let n = p.len();
        let m = DMatrix::from_fn(n, n, |j, l| p[j] * p[l]);
        Self { mean_amps: amps.to_vec(), mean_powers: p, second_moments: m }
    }
}

/// Evolve all moment systems of one sector from `z_from` to `z_to`,
/// returning states at `outputs` (ordered in the direction of integration).
/// Mean amplitudes are evolved for left-going waves when requested.
#[allow(clippy::too_many_arguments)]
pub fn evolve_moments(start: &ChainStart, side: Side, sector: usize, z_from: f64, z_to: f64, outputs: &[f64], provider: &dyn CouplingProvider, opts: &TransportOptions) -> Result<Vec<MomentState>> {
    let n = start.mean_powers.len();
    let (a, b) = if z_from < z_to { (z_from, z_to) } else { (z_to, z_from) };
    let amps = if opts.mean_amplitudes && side == Side::Left {
        let local = provider.localized(a, b, n, true)?;
        let p = local.as_deref().unwrap_or(provider);
        Some(evolve_mean_amplitudes(&start.mean_amps, z_from, z_to, outputs, p, &opts.ode)?)
    } else {
        None
    };
    let local = provider.localized(a, b, n, false)?;
    let p = local.as_deref().unwrap_or(provider);
    let powers = evolve_mean_powers(&start.mean_powers, side, z_from, z_to, outputs, p, &opts.ode)?;
    let moments = evolve_second_moments(&start.second_moments, side, z_from, z_to, outputs, p, &opts.ode)?;
    Ok(outputs
        .iter()
        .enumerate()
        .map(|(i, &z)| MomentState {
            z,
            sector,
            mean_amps: amps.as_ref().map(|v| v[i].clone()).unwrap_or_default(),
            mean_powers: powers[i].clone(),
            second_moments: moments[i].clone(),
        })
        .collect())
}

/// Solve one sector; `start` holds the state entering at the near end.
#[allow(clippy::too_many_arguments)]
fn solve_sector(side: Side, index: usize, bounds: (f64, f64), collars: (bool, bool), start: &ChainStart, provider: &dyn CouplingProvider, opts: &TransportOptions) -> Result<SectorRecord> {
    let (z_left, z_right) = bounds;
    let n = start.mean_powers.len();
    let a = if collars.0 { z_left + opts.collar } else { z_left };
    let b = if collars.1 { z_right - opts.collar } else { z_right };
    let npts = opts.output_points.max(2);
    let grid: Vec<f64> = (0..npts)
        .map(|i| {
            let t = i as f64 / (npts - 1) as f64;
            match side {
                Side::Left => z_right - t * (z_right - z_left),
                Side::Right => z_left + t * (z_right - z_left),
            }
        })
        .collect();
    let (z_from, z_to) = match side {
        Side::Left => (b, a),
        Side::Right => (a, b),
    };
    let coupled = b > a;
    // Output points strictly inside the coupled interval, in integration order.
    let inside: Vec<f64> = if coupled { grid.iter().copied().filter(|&z| z > a && z < b).collect() } else { Vec::new() };
    let mut ode_outputs = vec![z_from];
    ode_outputs.extend(&inside);
    ode_outputs.push(z_to);

    let computed = if coupled {
        evolve_moments(start, side, index, z_from, z_to, &ode_outputs, provider, opts)?
    } else {
        let held = MomentState {
            z: z_from,
            sector: index,
            mean_amps: if opts.mean_amplitudes && side == Side::Left { start.mean_amps.clone() } else { Vec::new() },
            mean_powers: start.mean_powers.clone(),
            second_moments: start.second_moments.clone(),
        };
        vec![held; ode_outputs.len()]
    };
    let last = ode_outputs.len() - 1;
    let mut states = Vec::with_capacity(npts);
    let mut cursor = 1;
    for &z in &grid {
        let idx = if !coupled {
            0
        } else if (side == Side::Left && z >= b) || (side == Side::Right && z <= a) {
            0
        } else if (side == Side::Left && z <= a) || (side == Side::Right && z >= b) {
            last
        } else {
            let i = cursor;
            cursor += 1;
            i
        };
        let mut state = computed[idx].clone();
        state.z = z;
        states.push(state);
    }
    let far_turning = match side {
        Side::Left => collars.0,
        Side::Right => false,
    };
    let record = SectorRecord {
        side,
        index,
        z_left,
        z_right,
        n_modes: n,
        coupled_interval: (a, b),
        transmitted_modes: if far_turning { n - 1 } else { n },
        states,
    };
    check_sector_invariants(&record)?;
    Ok(record)
}

/// Σ_j⟨P_j⟩ and Σ_{j,l}⟨P_jP_l⟩ must stay constant within a sector.
fn check_sector_invariants(record: &SectorRecord) -> Result<()> {
    let first = &record.states[0];
    let p0: f64 = first.mean_powers.iter().sum();
    let m0 = first.total_second_moment();
    for s in &record.states {
        let m = s.total_second_moment();
        if (m - m0).abs() > SECOND_MOMENT_CONSERVATION_TOLERANCE * m0.abs().max(f64::MIN_POSITIVE) && m0 != 0.0 {
            return Err(Error::MomentConservation(format!(
                "sum of second moments drifted from {m0:.12e} to {m:.12e} at z = {} in sector {}",
                s.z, record.index
            )));
        }
        let p: f64 = s.mean_powers.iter().sum();
        if (p - p0).abs() > 1e-6 * p0.abs().max(f64::MIN_POSITIVE) && p0 != 0.0 {
            return Err(Error::MomentConservation(format!("total mean power drifted from {p0:.12e} to {p:.12e} at z = {}", s.z)));
        }
    }
    Ok(())
}

/// Drop the last mode from a state, returning the reduced start and the
/// turning mode's record.
fn reflect_last_mode(state: &MomentState, z_turning: f64) -> (ChainStart, ReflectionRecord) {
    let n = state.mean_powers.len();
    let last = n - 1;
    let record = ReflectionRecord {
        z_turning,
        mode: n,
        mean_power: state.mean_powers[last],
        second_moment: state.second_moments[(last, last)],
        variance: state.second_moments[(last, last)] - state.mean_powers[last].powi(2),
    };
    let start = ChainStart {
        mean_amps: state.mean_amps.iter().take(last).copied().collect(),
        mean_powers: state.mean_powers[..last].to_vec(),
        second_moments: state.second_moments.view((0, 0), (last, last)).into_owned(),
    };
    (start, record)
}

/// Chain all sectors of a layout from the source amplitudes.
pub fn chain_sectors(layout: &SectorLayout, spec: &SourceSpec, d0: f64, provider: &dyn CouplingProvider, opts: &TransportOptions) -> Result<TransportLedger> {
    let (b_o, a_o) = source_amplitudes(spec, layout.k, d0)?;
    if b_o.len() != layout.n0 {
        return Err(Error::LayoutMismatch(format!("source launches {} modes, layout expects {}", b_o.len(), layout.n0)));
    }
    chain_from(layout, b_o, a_o, provider, opts)
}

/// Chain all sectors from given source amplitudes (e.g. single-mode
/// excitations).
pub fn chain_from(layout: &SectorLayout, b_o: Vec<Complex64>, a_o: Vec<Complex64>, provider: &dyn CouplingProvider, opts: &TransportOptions) -> Result<TransportLedger> {
    if b_o.len() != layout.n0 || a_o.len() != layout.n0 {
        return Err(Error::LayoutMismatch(format!("{} source modes for a layout with N0 = {}", b_o.len(), layout.n0)));
    }
    let source_power: f64 = b_o.iter().map(|b| b.norm_sqr()).sum();

    // Left-going chain.
    let sectors = layout.left_sectors();
    let mut left = Vec::with_capacity(sectors.len());
    let mut reflected = Vec::new();
    let mut transmitted = Vec::new();
    let mut start = ChainStart::from_amplitudes(&b_o);
    for (t, &(zl, zr, count)) in sectors.iter().enumerate() {
        if start.mean_powers.len() != count {
            return Err(Error::LayoutMismatch(format!("sector {t} expects {count} modes, chain carries {}", start.mean_powers.len())));
        }
        let left_is_turning = t + 1 < sectors.len();
        let right_is_turning = t > 0;
        let rec = solve_sector(Side::Left, t, (zl, zr), (left_is_turning, right_is_turning), &start, provider, opts)?;
        let first = &rec.states[0];
        transmitted.push(TransmittedSegment {
            side: Side::Left,
            z_left: zl,
            z_right: zr,
            n_modes: count,
            mean: first.partial_power(count),
            std: first.partial_power_std(count),
        });
        if left_is_turning {
            let (next, refl) = reflect_last_mode(rec.last(), zl);
            reflected.push(refl);
            start = next;
        }
        left.push(rec);
    }
    let end = left.last().ok_or_else(|| Error::LayoutMismatch("layout has no left sector".into()))?.last();
    let transmitted_mean: f64 = end.mean_powers.iter().sum();
    let transmitted_std = end.partial_power_std(end.mean_powers.len());
    let reflected_mean: f64 = reflected.iter().map(|r| r.mean_power).sum();
    let residual = reflected_mean + transmitted_mean - source_power;
    let balance = BalanceReport {
        source_power,
        reflected_mean,
        reflected_std: transmitted_std,
        transmitted_mean,
        transmitted_std,
        residual,
        relative_residual: if source_power > 0.0 { residual.abs() / source_power } else { residual.abs() },
    };
    let predicted = source_power * layout.n_min as f64 / layout.n0 as f64;
    let universal = UniversalLimit {
        source_power,
        n_min: layout.n_min,
        n0: layout.n0,
        predicted,
        transmitted: transmitted_mean,
        relative_error: if predicted > 0.0 { (transmitted_mean - predicted).abs() / predicted } else { transmitted_mean.abs() },
    };

    // Right-going chain of powers.
    let mut right = Vec::new();
    if opts.right_side {
        let sectors = layout.right_sectors();
        let mut start = ChainStart::from_amplitudes(&a_o);
        for (t, &(zl, zr, count)) in sectors.iter().enumerate() {
            while start.mean_powers.len() < count {
                start = add_zero_mode(&start);
            }
            if start.mean_powers.len() != count {
                return Err(Error::LayoutMismatch(format!("right sector {t} expects {count} modes")));
            }
            let right_is_turning = t + 1 < sectors.len();
            let left_is_turning = t > 0;
            let rec = solve_sector(Side::Right, t, (zl, zr), (left_is_turning, right_is_turning), &start, provider, opts)?;
            let first = &rec.states[0];
            transmitted.push(TransmittedSegment {
                side: Side::Right,
                z_left: zl,
                z_right: zr,
                n_modes: count,
                mean: first.partial_power(count),
                std: first.partial_power_std(count),
            });
            let last = rec.last();
            start = ChainStart { mean_amps: Vec::new(), mean_powers: last.mean_powers.clone(), second_moments: last.second_moments.clone() };
            right.push(rec);
        }
    }
    Ok(TransportLedger { b_o, a_o, left, right, reflected, transmitted, balance, universal, collar: opts.collar })
}

fn add_zero_mode(start: &ChainStart) -> ChainStart {
    let n = start.mean_powers.len();
    let mut p = start.mean_powers.clone();
    p.push(0.0);
    let m = DMatrix::from_fn(n + 1, n + 1, |j, l| if j < n && l < n { start.second_moments[(j, l)] } else { 0.0 });
    ChainStart { mean_amps: Vec::new(), mean_powers: p, second_moments: m }
}

/// Right-going power implied by the global balance. The relation is not
/// derived from the right-going moment equations, so the report carries
/// that caveat.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RightPowerSummary {
    /// Σ|a_{j,o}|² + Σ|b_{j,o}|² − ⟨𝒫_trans(−Z_M)⟩.
    pub value: f64,
    pub right_source_power: f64,
    pub left_source_power: f64,
    pub left_transmitted: f64,
    pub anticipated: bool,
    pub note: &'static str,
}

/// Anticipated right-going transmitted power.
pub fn right_power_summary(ledger: &TransportLedger) -> RightPowerSummary {
    let right_source: f64 = ledger.a_o.iter().map(|a| a.norm_sqr()).sum();
    let value = right_source + ledger.balance.source_power - ledger.balance.transmitted_mean;
    RightPowerSummary {
        value,
        right_source_power: right_source,
        left_source_power: ledger.balance.source_power,
        left_transmitted: ledger.balance.transmitted_mean,
        anticipated: true,
        note: "anticipated from global energy balance, not proven: assumes all reflected power exits to the right",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_source_gives_zero_amplitudes() {
        let spec = SourceSpec { f: Complex64::new(0.0, 0.0), rho_star: 0.3 };
        let (b, a) = source_amplitudes(&spec, 2.0 * PI, 2.6).unwrap();
        assert_eq!(b.len(), 5);
        assert!(b.iter().chain(&a).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn centered_source_skips_even_modes() {
        let spec = SourceSpec { f: Complex64::new(1.0, 0.0), rho_star: 0.0 };
        let (b, a) = source_amplitudes(&spec, 2.0 * PI, 20.49).unwrap();
        assert_eq!(b.len(), 40);
        // sin(jπ/2) for even j is zero up to rounding of the argument.
        for j in (1..40).step_by(2) {
            assert!(b[j].norm() < 1e-13 * b[0].norm(), "mode {}: {:e}", j + 1, b[j].norm());
        }
        assert!(b[0].norm() > 0.0);
        assert!(b.iter().zip(&a).all(|(x, y)| (x + y).norm() == 0.0));
    }

    #[test]
    fn source_outside_guide_is_rejected() {
        let spec = SourceSpec { f: Complex64::new(1.0, 0.0), rho_star: 1.5 };
        assert!(matches!(source_amplitudes(&spec, 2.0 * PI, 2.6), Err(Error::SourceOutsideGuide { .. })));
    }

    #[test]
    fn default_collar_values() {
        assert!((default_collar(0.003, 3.0) - 10.0 * 0.003f64.powf(2.0 / 3.0) * 1000.0).abs() < 1e-9);
        assert!((default_collar(1e-3, 1.0) - 100.0).abs() < 1e-9);
    }
}
