//! Command-line orchestration: parse a run configuration, execute one
//! subcommand and write its CSV/JSON artifacts plus a `manifest.json`.
//!
//! Every CSV has a single header row and floats are written with 17
//! significant digits. Exit status: 0 on success, 1 for invalid input,
//! 2 for numerical failures (see [`Error::exit_code`]).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{config_base, load_config, RunConfig};
use crate::coupling::{coupling_set, forward_scattering_diagnostic, length_scales, CouplingSet};
use crate::error::{Error, Result};
use crate::geometry::SectorLayout;
use crate::modes::identity_suite;
use crate::montecarlo::{compare_to_moments, run_ensemble, ComparisonReport, EnsembleStats};
use crate::transport::{
    chain_from, chain_sectors, evolve_moments, right_power_summary, source_amplitudes, ChainStart, GuideCoupling, MomentState, Side, TransportLedger, TransportOptions,
};

/// Identity-suite tolerance used by `validate`.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

/// Largest mode index of the identity suite run by `validate`.
pub const IDENTITY_MAX_INDEX: usize = 30;

/// Openings at which `validate` checks the identities.
pub const IDENTITY_WIDTHS: [f64; 3] = [0.5, 1.0, 20.25];

/// z-score threshold of the Monte Carlo comparison.
pub const MC_Z_THRESHOLD: f64 = 3.0;

#[derive(Debug, Parser)]
#[command(name = "modeflux", version, about = "Mode-power transport in slowly varying random waveguides")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Arguments shared by every subcommand.
#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Run configuration (required except for `validate`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Override the Monte Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the Monte Carlo trajectory count.
    #[arg(long)]
    pub trajectories: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turning points and sector mode counts.
    Layout(RunArgs),
    /// Diffusion coefficients and length scales in every left sector.
    Coefficients(RunArgs),
    /// Sector-chained moment transport.
    Transport(RunArgs),
    /// Monte Carlo ensemble compared with the moment equations.
    Montecarlo(RunArgs),
    /// Eigenfunction identity residual table.
    Validate(RunArgs),
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Layout(a) => ("layout", a),
            Command::Coefficients(a) => ("coefficients", a),
            Command::Transport(a) => ("transport", a),
            Command::Montecarlo(a) => ("montecarlo", a),
            Command::Validate(a) => ("validate", a),
        }
    }
}

/// Parse process arguments, run, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let (name, args) = cli.command.parts();
    match run(name, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("modeflux {name}: {} ({})", e, e.code());
            let _ = std::fs::create_dir_all(&args.out);
            let _ = write_json(&args.out.join("error.json"), &json!({"code": e.code(), "message": e.to_string(), "exit_status": e.exit_code()}));
            e.exit_code()
        }
    }
}

/// Run one subcommand by name.
pub fn run(name: &str, args: &RunArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let loaded = match &args.config {
        Some(path) => {
            let mut cfg = load_config(path)?;
            if let Some(mc) = cfg.mc.as_mut() {
                if let Some(s) = args.seed {
                    mc.seed = s;
                }
                if let Some(n) = args.trajectories {
                    mc.n_trajectories = n;
                }
            }
            cfg.validate()?;
            Some((cfg, config_base(path)))
        }
        None if name == "validate" => None,
        None => return Err(Error::ValidationError(format!("{name} requires --config"))),
    };
    let extra = match (name, &loaded) {
        ("validate", _) => run_validate(&args.out)?,
        ("layout", Some((cfg, base))) => run_layout(cfg, base, &args.out)?,
        ("coefficients", Some((cfg, base))) => run_coefficients(cfg, base, &args.out)?,
        ("transport", Some((cfg, base))) => run_transport(cfg, base, &args.out)?,
        ("montecarlo", Some((cfg, base))) => run_montecarlo(cfg, base, &args.out)?,
        _ => return Err(Error::ValidationError(format!("unknown subcommand {name}"))),
    };
    let manifest = manifest(name, loaded.as_ref().map(|(c, _)| c), extra)?;
    write_json(&args.out.join("manifest.json"), &manifest)
}

/// Provenance record of a run: configuration text and hash, version, seeds
/// and policy flags.
pub fn manifest(subcommand: &str, cfg: Option<&RunConfig>, extra: Value) -> Result<Value> {
    let text = cfg.map(RunConfig::to_text).transpose()?;
    let hash = text.as_ref().map(|t| Sha256::digest(t.as_bytes()).iter().map(|b| format!("{b:02x}")).collect::<String>());
    let seeds = cfg.and_then(|c| c.mc.as_ref()).map(|m| json!({"seed": m.seed, "n_trajectories": m.n_trajectories, "trajectory_streams": "stream i = trajectory index i"}));
    Ok(json!({
        "tool": "modeflux",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config_sha256": hash,
        "config": text,
        "seeds": seeds,
        "kappa_sigma2_in_propagating_sum": true,
        "length_unit": "wavelength",
        "results": extra,
    }))
}

/// Write a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header).map_err(csv_err)?;
    Ok(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}

fn run_validate(out: &Path) -> Result<Value> {
    let rows = identity_suite(IDENTITY_MAX_INDEX, &IDENTITY_WIDTHS);
    let mut w = csv_writer(&out.join("identities.csv"), &["identity", "j", "q", "D", "residual"])?;
    let mut worst: f64 = 0.0;
    for r in &rows {
        worst = worst.max(r.residual);
        w.write_record([r.identity.name().to_string(), r.j.to_string(), r.q.to_string(), fmt_f64(r.d), fmt_f64(r.residual)]).map_err(csv_err)?;
    }
    w.flush()?;
    let summary = json!({"rows": rows.len(), "max_residual": worst, "tolerance": IDENTITY_TOLERANCE, "pass": worst < IDENTITY_TOLERANCE});
    write_json(&out.join("validate.json"), &summary)?;
    if worst >= IDENTITY_TOLERANCE {
        return Err(Error::SolverToleranceExceeded(format!("identity residual {worst:.3e} exceeds {IDENTITY_TOLERANCE:.0e}")));
    }
    Ok(summary)
}

fn layout_of(cfg: &RunConfig, base: &Path) -> Result<(crate::geometry::WidthProfile, SectorLayout)> {
    let profile = cfg.profile(base)?;
    let layout = cfg.layout(&profile)?;
    Ok((profile, layout))
}

fn run_layout(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Value> {
    let (_, layout) = layout_of(cfg, base)?;
    let mut w = csv_writer(&out.join("sectors.csv"), &["side", "index", "z_left", "z_right", "n_modes"])?;
    for (i, (a, b, n)) in layout.left_sectors().iter().enumerate() {
        w.write_record(["left".into(), i.to_string(), fmt_f64(*a), fmt_f64(*b), n.to_string()]).map_err(csv_err)?;
    }
    for (i, (a, b, n)) in layout.right_sectors().iter().enumerate() {
        w.write_record(["right".into(), i.to_string(), fmt_f64(*a), fmt_f64(*b), n.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    let summary = json!({"layout": layout, "left_sectors": layout.left_sectors(), "right_sectors": layout.right_sectors()});
    write_json(&out.join("layout.json"), &summary)?;
    Ok(json!({"left_turning_points": layout.left_turning_points, "n0": layout.n0, "n_min": layout.n_min}))
}

/// Coupling set at the middle of the coupled interval of every left sector.
fn sector_coupling_sets(cfg: &RunConfig, base: &Path) -> Result<Vec<(usize, CouplingSet)>> {
    let (profile, layout) = layout_of(cfg, base)?;
    let corr = cfg.correlation(base)?;
    let delta = cfg.collar();
    let sectors = layout.left_sectors();
    let last = sectors.len() - 1;
    let mut out = Vec::new();
    for (t, &(zl, zr, n)) in sectors.iter().enumerate() {
        let a = if t == last { zl } else { zl + delta };
        let b = if t == 0 { zr } else { zr - delta };
        let z = if a < b { 0.5 * (a + b) } else { 0.5 * (zl + zr) };
        out.push((t, coupling_set(cfg.k(), cfg.sigma(), &corr, profile.d_at(z), n, z, &cfg.coupling_options())?));
    }
    Ok(out)
}

fn run_coefficients(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Value> {
    let sets = sector_coupling_sets(cfg, base)?;
    let corr = cfg.correlation(base)?;
    let mut gw = csv_writer(&out.join("generators.csv"), &["sector", "z", "j", "l", "Gc", "G0", "Gs"])?;
    let mut kw = csv_writer(&out.join("modes.csv"), &["sector", "z", "j", "kappa", "L_smf", "L_tmf"])?;
    let mut sectors = Vec::new();
    for (t, set) in &sets {
        let scales = if cfg.sigma() > 0.0 { Some(length_scales(set)?) } else { None };
        for j in 0..set.n_prop {
            for l in 0..set.n_prop {
                gw.write_record([t.to_string(), fmt_f64(set.z), (j + 1).to_string(), (l + 1).to_string(), fmt_f64(set.gc[(j, l)]), fmt_f64(set.g0[(j, l)]), fmt_f64(set.gs[(j, l)])])
                    .map_err(csv_err)?;
            }
            let (smf, tmf) = scales.as_ref().map_or((f64::INFINITY, f64::INFINITY), |s| (s.smf[j], s.tmf[j]));
            kw.write_record([t.to_string(), fmt_f64(set.z), (j + 1).to_string(), fmt_f64(set.kappa[j]), fmt_f64(smf), fmt_f64(tmf)]).map_err(csv_err)?;
        }
        let forward = forward_scattering_diagnostic(cfg.k(), &corr, set.d, set.n_prop, cfg.numerics.forward_threshold)?;
        sectors.push(json!({
            "sector": t,
            "z": set.z,
            "d": set.d,
            "n_prop": set.n_prop,
            "l_eq": scales.as_ref().map(|s| s.equipartition),
            "gc_spectrum": scales.as_ref().map(|s| s.spectrum.clone()),
            "null_vector_deviation": scales.as_ref().map(|s| s.null_vector_deviation),
            "max_kappa_tail_bound": set.kappa_tail_bound.iter().cloned().fold(0.0, f64::max),
            "forward_scattering": forward,
        }));
    }
    gw.flush()?;
    kw.flush()?;
    let summary = json!({"sectors": sectors, "slow_length": cfg.slow_length()});
    write_json(&out.join("coefficients.json"), &summary)?;
    Ok(json!({"sectors": sets.len()}))
}

/// Run the chained transport described by a configuration.
pub fn transport_ledger(cfg: &RunConfig, base: &Path) -> Result<TransportLedger> {
    let (profile, layout) = layout_of(cfg, base)?;
    let corr = cfg.correlation(base)?;
    let provider = GuideCoupling::new(cfg.k(), cfg.sigma(), &corr, &profile, cfg.coupling_options());
    let opts: TransportOptions = cfg.transport_options();
    let d0 = profile.d_at(0.0);
    match (cfg.source_spec(d0), cfg.source.excite_mode) {
        (Some(spec), _) => chain_sectors(&layout, &spec, d0, &provider, &opts),
        (None, Some(m)) => {
            if m > layout.n0 {
                return Err(Error::ValidationError(format!("source.excite_mode {m} exceeds the {} propagating modes at the source", layout.n0)));
            }
            let mut b = vec![num_complex::Complex64::new(0.0, 0.0); layout.n0];
            b[m - 1] = cfg.source_amplitude();
            chain_from(&layout, b, vec![num_complex::Complex64::new(0.0, 0.0); layout.n0], &provider, &opts)
        }
        (None, None) => Err(Error::ValidationError("source is not specified".into())),
    }
}

fn run_transport(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Value> {
    let ledger = transport_ledger(cfg, base)?;
    let mut mw = csv_writer(&out.join("means.csv"), &["side", "z", "sector", "j", "re_mean_b", "im_mean_b", "abs_mean_b"])?;
    let mut pw = csv_writer(&out.join("powers.csv"), &["side", "z", "sector", "j", "mean_power"])?;
    let mut sw = csv_writer(&out.join("moments.csv"), &["side", "z", "sector", "j", "l", "second_moment"])?;
    for rec in ledger.left.iter().chain(&ledger.right) {
        let side = if rec.side == Side::Left { "left" } else { "right" };
        for s in &rec.states {
            let (z, t) = (fmt_f64(s.z), s.sector.to_string());
            for (j, b) in s.mean_amps.iter().enumerate() {
                mw.write_record([side.into(), z.clone(), t.clone(), (j + 1).to_string(), fmt_f64(b.re), fmt_f64(b.im), fmt_f64(b.norm())]).map_err(csv_err)?;
            }
            for (j, p) in s.mean_powers.iter().enumerate() {
                pw.write_record([side.into(), z.clone(), t.clone(), (j + 1).to_string(), fmt_f64(*p)]).map_err(csv_err)?;
            }
            let n = s.mean_powers.len();
            for j in 0..n {
                for l in j..n {
                    sw.write_record([side.into(), z.clone(), t.clone(), (j + 1).to_string(), (l + 1).to_string(), fmt_f64(s.second_moments[(j, l)])]).map_err(csv_err)?;
                }
            }
        }
    }
    mw.flush()?;
    pw.flush()?;
    sw.flush()?;
    let sectors: Vec<Value> = ledger
        .left
        .iter()
        .chain(&ledger.right)
        .map(|r| {
            json!({
                "side": r.side,
                "index": r.index,
                "z_left": r.z_left,
                "z_right": r.z_right,
                "n_modes": r.n_modes,
                "coupled_interval": r.coupled_interval,
                "transmitted_modes": r.transmitted_modes,
                "transmitted_mean": r.transmitted_mean().last(),
                "transmitted_std": r.transmitted_std().last(),
                "total_second_moment": r.last().total_second_moment(),
            })
        })
        .collect();
    let summary = json!({
        "b_o": ledger.b_o,
        "collar": ledger.collar,
        "sectors": sectors,
        "reflected": ledger.reflected,
        "transmitted": ledger.transmitted,
        "balance": ledger.balance,
        "universal_limit": ledger.universal,
        "right_going": right_power_summary(&ledger),
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(json!({"balance": ledger.balance}))
}

/// Outcome of a Monte Carlo validation run: the ensemble (checkpoints in
/// physical length units), the moment predictions at the same checkpoints and
/// their comparison.
#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub epsilon: f64,
    pub stats: EnsembleStats,
    pub predicted: Vec<MomentState>,
    pub report: ComparisonReport,
}

/// Run the Monte Carlo ensemble described by a configuration and compare it
/// with the moment equations.
pub fn montecarlo_run(cfg: &RunConfig, base: &Path) -> Result<MonteCarloRun> {
    let mc_section = cfg.mc.as_ref().ok_or_else(|| Error::ValidationError("montecarlo requires an [mc] section".into()))?;
    let (profile, layout) = layout_of(cfg, base)?;
    if mc_section.z_right != 0.0 {
        return Err(Error::ValidationError("mc.z_right must be 0: trajectories start from the source".into()));
    }
    let delta = cfg.collar();
    if let Some(&zt) = layout.left_turning_points.first() {
        if mc_section.z_left < zt + delta {
            return Err(Error::ValidationError(format!("mc.z_left {} enters the collar of the turning point at {zt} (delta = {delta})", mc_section.z_left)));
        }
    } else if mc_section.z_left < -cfg.geometry.z_m {
        return Err(Error::ValidationError("mc.z_left lies beyond -z_m".into()));
    }
    let (guide, mc) = cfg.mc_setup(base)?.expect("mc section present");
    if mc.n_modes != layout.n0 {
        return Err(Error::LayoutMismatch(format!("mc.n_modes = {} but the source sector has {} modes", mc.n_modes, layout.n0)));
    }
    let d0 = profile.d_at(0.0);
    let init = match (cfg.source_spec(d0), cfg.source.excite_mode) {
        (Some(spec), _) => source_amplitudes(&spec, cfg.k(), d0)?.0,
        (None, Some(m)) if m <= layout.n0 => {
            let mut b = vec![num_complex::Complex64::new(0.0, 0.0); layout.n0];
            b[m - 1] = cfg.source_amplitude();
            b
        }
        _ => return Err(Error::ValidationError("source.excite_mode exceeds the propagating modes at the source".into())),
    };
    let mut stats = run_ensemble(&init, &guide, &mc)?;
    let l = cfg.slow_length();
    stats.z = stats.z.iter().map(|z| z * l).collect();

    let corr = cfg.correlation(base)?;
    let provider = GuideCoupling::new(cfg.k(), cfg.sigma(), &corr, &profile, cfg.coupling_options());
    let mut opts = cfg.transport_options();
    opts.mean_amplitudes = false;
    let predicted = evolve_moments(&ChainStart::from_amplitudes(&init), Side::Left, 0, 0.0, mc_section.z_left, &mc_section.checkpoints, &provider, &opts)?;
    let summed = mc_section.summed_modes.unwrap_or(mc.n_modes.saturating_sub(1).max(1));
    let report = compare_to_moments(&stats, &predicted, summed, MC_Z_THRESHOLD)?;
    Ok(MonteCarloRun { epsilon: mc.epsilon, stats, predicted, report })
}

fn run_montecarlo(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Value> {
    let MonteCarloRun { epsilon, stats, predicted, report } = montecarlo_run(cfg, base)?;
    write_ensemble(&stats, &out.join("ensemble.csv"))?;
    let compare = json!({
        "epsilon": epsilon,
        "n_trajectories": stats.n_trajectories,
        "max_energy_drift": stats.max_energy_drift,
        "predicted_mean_power": predicted.iter().map(|s| s.mean_powers.clone()).collect::<Vec<_>>(),
        "report": report,
    });
    write_json(&out.join("compare.json"), &compare)?;
    Ok(json!({"pass": report.pass, "max_abs_power_z": report.max_abs_power_z, "max_abs_variance_z": report.max_abs_variance_z}))
}

fn write_ensemble(stats: &EnsembleStats, path: &Path) -> Result<()> {
    let mut w = csv_writer(path, &["z", "j", "emp_mean_power", "std_err", "emp_mean_amp_re", "emp_mean_amp_im"])?;
    for (c, z) in stats.z.iter().enumerate() {
        for j in 0..stats.n_modes {
            let a = stats.mean_amp[c][j];
            w.write_record([fmt_f64(*z), (j + 1).to_string(), fmt_f64(stats.mean_power[c][j]), fmt_f64(stats.power_std_err[c][j]), fmt_f64(a.re), fmt_f64(a.im)])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
