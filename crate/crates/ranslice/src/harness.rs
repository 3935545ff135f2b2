//! Experiment harness: presets, sweep execution, algorithm comparison,
//! Monte-Carlo validation, and CSV/JSON emission.
//!
//! Every run writes a CSV with a frozen column schema plus a JSON manifest
//! echoing the exact configuration and seed; re-running a preset with the same
//! seed reproduces the CSV byte for byte.

use crate::config::{ExperimentConfig, Sweep, SweepAxis, SystemConfig};
use crate::convex::{find_trust_interval, SliceCurve};
use crate::miot::{evolve_slot, AccessControl, ArrivalSchedule, EvolveOptions};
use crate::orchestrator::{run_sro, CompLayout, SroRunOutput};
use crate::simcore;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Orchestrator(#[from] crate::orchestrator::OrchestratorError),
    #[error(transparent)]
    Simulation(#[from] simcore::SimError),
    #[error(transparent)]
    Miot(#[from] crate::miot::MiotError),
    #[error("interval search failed: {0}")]
    Interval(#[from] crate::convex::IntervalError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("comparison needs at least two variants")]
    TooFewVariants,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("every sweep point was infeasible")]
    InfeasibleEverywhere,
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Frozen column schema of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 14] = [
    "sweep_value",
    "u_total",
    "u_iot",
    "u_urllc",
    "omega_iot_mhz",
    "omega_urllc_mhz",
    "energy_urllc_mw",
    "served_min",
    "served_mean",
    "outer_iterations",
    "delta_final",
    "tightness_min",
    "residual_max",
    "miot_feasible",
];

/// Frozen column schema of the queue-trajectory CSV.
pub const QUEUE_COLUMNS: [&str; 5] = ["regime", "t", "slice", "p_s", "queue_intensity"];

/// Frozen column schema of the Monte-Carlo validation CSV.
pub const VALIDATE_COLUMNS: [&str; 5] = ["t", "slice", "p_hat", "p_analytic", "mean_queue"];

/// Frozen column schema of the convergence CSV.
pub const CONVERGENCE_COLUMNS: [&str; 2] = ["k", "delta_omega"];

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.9e}")
    }
}

/// The named experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig3Convergence,
    Fig4Queue,
    Fig6IotSweep,
    Fig7LambdaSweep,
    Fig8BandwidthSweep,
    Fig9GammaSweep,
    Fig10EtaSweep,
    PacbSweep,
    ValidateMc,
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Preset> {
        Some(match name {
            "fig3-convergence" => Preset::Fig3Convergence,
            "fig4-queue" => Preset::Fig4Queue,
            "fig6-iot-sweep" => Preset::Fig6IotSweep,
            "fig7-lambda-sweep" => Preset::Fig7LambdaSweep,
            "fig8-bandwidth-sweep" => Preset::Fig8BandwidthSweep,
            "fig9-gamma-sweep" => Preset::Fig9GammaSweep,
            "fig10-eta-sweep" => Preset::Fig10EtaSweep,
            "pacb-sweep" => Preset::PacbSweep,
            "validate-mc" => Preset::ValidateMc,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig3Convergence => "fig3-convergence",
            Preset::Fig4Queue => "fig4-queue",
            Preset::Fig6IotSweep => "fig6-iot-sweep",
            Preset::Fig7LambdaSweep => "fig7-lambda-sweep",
            Preset::Fig8BandwidthSweep => "fig8-bandwidth-sweep",
            Preset::Fig9GammaSweep => "fig9-gamma-sweep",
            Preset::Fig10EtaSweep => "fig10-eta-sweep",
            Preset::PacbSweep => "pacb-sweep",
            Preset::ValidateMc => "validate-mc",
        }
    }

    pub fn all() -> &'static [Preset] {
        &[
            Preset::Fig3Convergence,
            Preset::Fig4Queue,
            Preset::Fig6IotSweep,
            Preset::Fig7LambdaSweep,
            Preset::Fig8BandwidthSweep,
            Preset::Fig9GammaSweep,
            Preset::Fig10EtaSweep,
            Preset::PacbSweep,
            Preset::ValidateMc,
        ]
    }

    /// Experiment configuration behind the preset. Desk scale runs M = 20
    /// samples; `full` restores the full sample count (slow).
    pub fn experiment(&self, full: bool) -> ExperimentConfig {
        let mut system = if full {
            SystemConfig::paper_defaults()
        } else {
            SystemConfig::desk_defaults()
        };
        let mut replications = 200;
        let mut mc_scale = 1.0 / 30.0;
        let sweep = match self {
            Preset::Fig3Convergence | Preset::Fig4Queue => None,
            Preset::Fig6IotSweep => Some(Sweep {
                axis: SweepAxis::IotMultiplier,
                values: vec![6.0, 10.0, 14.0, 18.0, 22.0, 26.0],
            }),
            Preset::Fig7LambdaSweep => Some(Sweep {
                axis: SweepAxis::UrllcArrival,
                values: vec![0.1, 1.0, 3.0, 5.0],
            }),
            Preset::Fig8BandwidthSweep => Some(Sweep {
                axis: SweepAxis::TotalBandwidth,
                values: vec![45.0, 50.0, 55.0, 60.0],
            }),
            Preset::Fig9GammaSweep => Some(Sweep {
                axis: SweepAxis::GammaMultiplier,
                values: vec![1.5, 1.7, 1.9, 2.1],
            }),
            Preset::Fig10EtaSweep => Some(Sweep {
                axis: SweepAxis::EnergyCoeff,
                values: vec![50.0, 100.0, 200.0],
            }),
            Preset::PacbSweep => Some(Sweep {
                axis: SweepAxis::AcbFactor,
                values: vec![0.001, 0.01, 0.1, 0.5, 0.9, 1.0],
            }),
            Preset::ValidateMc => {
                // saturating traffic keeps every queue busy so the
                // stationary contention regime dominates the comparison
                let gammas = [8.0, 7.0, 6.0];
                let arrivals = [4.5, 4.0, 3.5];
                for (slice, (&g, &w)) in system
                    .miot_slices
                    .iter_mut()
                    .zip(gammas.iter().zip(arrivals.iter()))
                {
                    slice.gamma_th_kbit = g;
                    slice.arrival = ArrivalSchedule::Constant(w);
                }
                replications = if full { 1000 } else { 200 };
                mc_scale = 1.0 / 30.0;
                None
            }
        };
        ExperimentConfig {
            system,
            seed: 20260809,
            replications,
            mc_intensity_scale: mc_scale,
            sweep,
        }
    }
}

/// The comparison algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Unrestricted access.
    Sro,
    /// ACB with factor 0.9.
    SroAcbI,
    /// ACB with factor 0.5.
    SroAcbII,
    /// Single-sample baseline (M = 1).
    S3ro,
}

impl Variant {
    pub fn from_name(name: &str) -> Option<Variant> {
        Some(match name.to_ascii_lowercase().as_str() {
            "sro" => Variant::Sro,
            "sro-acb1" | "sro-acb_i" | "sro-acbi" => Variant::SroAcbI,
            "sro-acb2" | "sro-acb_ii" | "sro-acbii" => Variant::SroAcbII,
            "s3ro" => Variant::S3ro,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Sro => "sro",
            Variant::SroAcbI => "sro_acb1",
            Variant::SroAcbII => "sro_acb2",
            Variant::S3ro => "s3ro",
        }
    }

    pub fn apply(&self, base: &SystemConfig) -> SystemConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Sro => cfg.access = AccessControl::Unrestricted,
            Variant::SroAcbI => cfg.access = AccessControl::Acb { p_acb: 0.9 },
            Variant::SroAcbII => cfg.access = AccessControl::Acb { p_acb: 0.5 },
            Variant::S3ro => {
                cfg.access = AccessControl::Unrestricted;
                cfg.sample_count = 1;
            }
        }
        cfg
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    preset: &'a str,
    seed: u64,
    crate_version: &'a str,
    config: &'a ExperimentConfig,
    summary: serde_json::Value,
}

fn write_manifest(
    out_dir: &Path,
    preset: &str,
    cfg: &ExperimentConfig,
    summary: serde_json::Value,
) -> Result<(), HarnessError> {
    let manifest = Manifest {
        preset,
        seed: cfg.seed,
        crate_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        summary,
    };
    let path = out_dir.join(format!("{preset}_manifest.json"));
    write_file(&path, &serde_json::to_string_pretty(&manifest).unwrap())
}

/// One sweep-point result row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub u_total: f64,
    pub u_iot: f64,
    pub u_urllc: f64,
    pub omega_iot_mhz: f64,
    pub omega_urllc_mhz: f64,
    pub energy_urllc_mw: f64,
    pub served_min: usize,
    pub served_mean: f64,
    pub outer_iterations: usize,
    pub delta_final: f64,
    pub tightness_min: f64,
    pub residual_max: f64,
    pub miot_feasible: bool,
}

impl SweepRow {
    fn from_run(value: f64, run: &SroRunOutput) -> SweepRow {
        SweepRow {
            sweep_value: value,
            u_total: run.u_total,
            u_iot: run.u_bar_iot,
            u_urllc: run.u_bar_urllc,
            omega_iot_mhz: run.omega_iot_total,
            omega_urllc_mhz: run.omega_urllc,
            energy_urllc_mw: run.energy_urllc_mw,
            served_min: run.served_min,
            served_mean: run.served_mean,
            outer_iterations: run.stats.outer_iterations,
            delta_final: run.stats.delta_trace.last().copied().unwrap_or(f64::NAN),
            tightness_min: run.stats.tightness_min.min(run.minislot_tightness_min),
            residual_max: run.stats.residual_max.max(run.minislot_residual_max),
            miot_feasible: run.fallback.is_none(),
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(self.sweep_value),
            fmt_f(self.u_total),
            fmt_f(self.u_iot),
            fmt_f(self.u_urllc),
            fmt_f(self.omega_iot_mhz),
            fmt_f(self.omega_urllc_mhz),
            fmt_f(self.energy_urllc_mw),
            self.served_min,
            fmt_f(self.served_mean),
            self.outer_iterations,
            fmt_f(self.delta_final),
            fmt_f(self.tightness_min),
            fmt_f(self.residual_max),
            self.miot_feasible,
        )
    }

    /// Schema guard: no NaN/Inf in a feasible row.
    pub fn validate(&self) -> bool {
        let finite = [
            self.u_total,
            self.u_iot,
            self.u_urllc,
            self.omega_iot_mhz,
            self.omega_urllc_mhz,
            self.energy_urllc_mw,
            self.served_mean,
            self.tightness_min,
            self.residual_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        !self.miot_feasible || finite
    }
}

/// Run the configured sweep (or a single point) of the full SRO pipeline.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, HarnessError> {
    let values: Vec<f64> = match &cfg.sweep {
        Some(s) => s.values.clone(),
        None => vec![f64::NAN],
    };
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let system = match &cfg.sweep {
            Some(s) => s.axis.apply(&cfg.system, v),
            None => cfg.system.clone(),
        };
        system.validate()?;
        let run = run_sro(&system, cfg.seed)?;
        let mut row = SweepRow::from_run(v, &run);
        if cfg.sweep.is_none() {
            row.sweep_value = 0.0;
        }
        rows.push(row);
    }
    Ok(rows)
}

fn sweep_csv(axis: Option<SweepAxis>, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let mut header: Vec<&str> = SWEEP_COLUMNS.to_vec();
    if let Some(a) = axis {
        header[0] = a.column();
    }
    let _ = writeln!(out, "{}", header.join(","));
    for r in rows {
        out.push_str(&r.csv_line());
    }
    out
}

/// Summary of a Monte-Carlo validation run.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub pairs_total: usize,
    pub pairs_defined: usize,
    pub pairs_within_tolerance: usize,
    pub max_abs_gap: f64,
    pub mean_abs_gap: f64,
    pub p_ne_mean_abs_dev: f64,
    pub replications: usize,
}

pub struct ValidationOutput {
    pub csv: String,
    pub summary: ValidationSummary,
}

/// Closed form vs Monte Carlo at desk scale: evolve the analytic trajectory
/// and the slotted-ALOHA ensemble on matched parameters and tabulate both.
pub fn validate_mc(cfg: &ExperimentConfig) -> Result<ValidationOutput, HarnessError> {
    let system = &cfg.system;
    let radio = system.radio_params();
    let mut profiles = system.miot_profiles();
    for p in &mut profiles {
        p.lambda_i *= cfg.mc_intensity_scale;
    }
    // one PRB per slice keeps the relaxed and floored PRACH counts equal
    let omega = vec![system.tone_spacing_mhz; profiles.len()];
    let t_slots = system.minislots;

    let analytic = evolve_slot(
        &profiles,
        &radio,
        system.access,
        &omega,
        t_slots,
        EvolveOptions::default(),
    )?;
    let lambda_scaled: Vec<f64> = profiles.iter().map(|p| p.lambda_i).collect();
    let empirical = simcore::run_ensemble(
        &lambda_scaled,
        system.area_km,
        &radio,
        system.access,
        &profiles,
        &omega,
        t_slots,
        cfg.replications,
        cfg.seed,
    )?;

    let mut csv = String::new();
    let _ = writeln!(csv, "{}", VALIDATE_COLUMNS.join(","));
    let mut pairs_total = 0;
    let mut pairs_defined = 0;
    let mut within = 0;
    let mut max_gap: f64 = 0.0;
    let mut gap_sum = 0.0;
    let mut pne_dev_sum = 0.0;
    let mut pne_count = 0usize;
    for s in 0..profiles.len() {
        for t in 0..t_slots {
            pairs_total += 1;
            let p_analytic = analytic.per_slice[s][t].p_s;
            let mean_queue = empirical.mean_queue[s][t];
            let p_hat = empirical.p_hat[s][t];
            let p_hat_str = match p_hat {
                Some(p) => {
                    pairs_defined += 1;
                    let gap = (p - p_analytic).abs();
                    if gap <= 0.05 {
                        within += 1;
                    }
                    max_gap = max_gap.max(gap);
                    gap_sum += gap;
                    fmt_f(p)
                }
                None => "".into(),
            };
            pne_dev_sum +=
                (empirical.nonempty_freq[s][t] - analytic.per_slice[s][t].p_ne).abs();
            pne_count += 1;
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                t + 1,
                s,
                p_hat_str,
                fmt_f(p_analytic),
                fmt_f(mean_queue)
            );
        }
    }
    let summary = ValidationSummary {
        pairs_total,
        pairs_defined,
        pairs_within_tolerance: within,
        max_abs_gap: max_gap,
        mean_abs_gap: if pairs_defined > 0 {
            gap_sum / pairs_defined as f64
        } else {
            f64::NAN
        },
        p_ne_mean_abs_dev: pne_dev_sum / pne_count.max(1) as f64,
        replications: cfg.replications,
    };
    Ok(ValidationOutput { csv, summary })
}

/// Closed-form queue trajectories for the flush and growth serving-rate
/// regimes at near-peak bandwidths.
pub fn queue_regimes(cfg: &SystemConfig) -> Result<String, HarnessError> {
    let mut csv = String::new();
    let _ = writeln!(csv, "{}", QUEUE_COLUMNS.join(","));
    for (regime, gammas) in [
        ("flush", [5.8, 4.35, 2.9]),
        ("growth", [1.8, 1.35, 0.9]),
    ] {
        let mut system = cfg.clone();
        for (s, g) in system.miot_slices.iter_mut().zip(gammas) {
            s.gamma_th_kbit = g;
        }
        let radio = system.radio_params();
        let profiles = system.miot_profiles();
        // evolve at the per-slice drain peak: the success maximum of the
        // curve frozen at the arrival-level queue occupancy
        let mut omega = Vec::with_capacity(profiles.len());
        for p in &profiles {
            let p_ne = crate::miot::nonempty_probability(0.5 * p.arrival.at(1));
            let curve = SliceCurve::new(p, &radio, 1.0, p_ne);
            let iv = find_trust_interval(
                &curve,
                0.0,
                system.tone_spacing_mhz,
                system.total_bandwidth_mhz,
                system.tolerances.bisection_mhz,
            )?;
            omega.push(iv.s_star);
        }
        let traj = evolve_slot(
            &profiles,
            &radio,
            system.access,
            &omega,
            system.minislots,
            EvolveOptions::default(),
        )?;
        for s in 0..profiles.len() {
            for t in 0..system.minislots {
                let st = traj.per_slice[s][t];
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    regime,
                    t + 1,
                    s,
                    fmt_f(st.p_s),
                    fmt_f(st.theta_a)
                );
            }
        }
    }
    Ok(csv)
}

/// ADMM convergence trace of one slot-level optimization.
pub fn convergence_trace(cfg: &ExperimentConfig) -> Result<(String, serde_json::Value), HarnessError> {
    let system = &cfg.system;
    system.validate()?;
    let layout = CompLayout::generate(system, cfg.seed);
    let samples = crate::orchestrator::generate_channel_samples(
        &layout,
        system,
        system.sample_count,
        cfg.seed.wrapping_add(1),
    );
    let out = crate::orchestrator::algorithm1(system, &layout, &samples)?;
    let mut csv = String::new();
    let _ = writeln!(csv, "{}", CONVERGENCE_COLUMNS.join(","));
    for (k, d) in out.stats.delta_trace.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", k + 1, fmt_f(*d));
    }
    let summary = serde_json::json!({
        "outer_iterations": out.stats.outer_iterations,
        "delta_final": out.stats.delta_trace.last(),
        "delta_tolerance": system.admm_delta_tol(),
        "dual_sum_max": out.stats.dual_sum_max,
        "tightness_min": out.stats.tightness_min,
        "residual_max": out.stats.residual_max,
        "miot_feasible": out.fallback.is_none(),
        "omega": out.omega,
    });
    Ok((csv, summary))
}

/// Execute a preset or explicit config and write its result files.
pub fn run_experiment(
    preset: Option<Preset>,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<serde_json::Value, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let name = preset.map_or("custom", |p| p.name());
    let summary = match preset {
        Some(Preset::Fig4Queue) => {
            let csv = queue_regimes(&cfg.system)?;
            write_file(&out_dir.join(format!("{name}.csv")), &csv)?;
            serde_json::json!({"rows": cfg.system.minislots * cfg.system.miot_slices.len() * 2})
        }
        Some(Preset::ValidateMc) => {
            let out = validate_mc(cfg)?;
            write_file(&out_dir.join(format!("{name}.csv")), &out.csv)?;
            serde_json::to_value(&out.summary).unwrap()
        }
        Some(Preset::Fig3Convergence) => {
            let (csv, summary) = convergence_trace(cfg)?;
            write_file(&out_dir.join(format!("{name}.csv")), &csv)?;
            summary
        }
        _ => {
            let rows = run_sweep(cfg)?;
            if rows.iter().all(|r| !r.miot_feasible) && !rows.is_empty() {
                // flagged rows are still written before reporting the failure
                let csv = sweep_csv(cfg.sweep.as_ref().map(|s| s.axis), &rows);
                write_file(&out_dir.join(format!("{name}.csv")), &csv)?;
                write_manifest(out_dir, name, cfg, serde_json::json!({"infeasible": true}))?;
                return Err(HarnessError::InfeasibleEverywhere);
            }
            debug_assert!(rows.iter().all(SweepRow::validate));
            let csv = sweep_csv(cfg.sweep.as_ref().map(|s| s.axis), &rows);
            write_file(&out_dir.join(format!("{name}.csv")), &csv)?;
            serde_json::json!({
                "rows": rows.len(),
                "feasible_rows": rows.iter().filter(|r| r.miot_feasible).count(),
            })
        }
    };
    write_manifest(out_dir, name, cfg, summary.clone())?;
    Ok(summary)
}

/// Matched-seed comparison across algorithm variants; one row per sweep value
/// with per-variant utility columns and ratios against the first variant.
pub fn compare_algorithms(
    cfg: &ExperimentConfig,
    variants: &[Variant],
    out_dir: &Path,
) -> Result<String, HarnessError> {
    if variants.len() < 2 {
        return Err(HarnessError::TooFewVariants);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let values: Vec<f64> = cfg
        .sweep
        .as_ref()
        .map(|s| s.values.clone())
        .unwrap_or_else(|| vec![0.0]);
    let axis_col = cfg
        .sweep
        .as_ref()
        .map_or("sweep_value", |s| s.axis.column());

    let mut header = vec![axis_col.to_string()];
    for v in variants {
        header.push(format!("u_total_{}", v.name()));
        header.push(format!("u_iot_{}", v.name()));
        header.push(format!("u_urllc_{}", v.name()));
    }
    for v in &variants[1..] {
        header.push(format!("ratio_{}", v.name()));
    }
    let mut csv = header.join(",");
    csv.push('\n');

    for &value in &values {
        let system = match &cfg.sweep {
            Some(s) => s.axis.apply(&cfg.system, value),
            None => cfg.system.clone(),
        };
        let mut cells = vec![fmt_f(value)];
        let mut totals = Vec::new();
        for variant in variants {
            let vcfg = variant.apply(&system);
            vcfg.validate()?;
            let run = run_sro(&vcfg, cfg.seed)?;
            totals.push(run.u_total);
            cells.push(fmt_f(run.u_total));
            cells.push(fmt_f(run.u_bar_iot));
            cells.push(fmt_f(run.u_bar_urllc));
        }
        for t in &totals[1..] {
            cells.push(fmt_f(t / totals[0]));
        }
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    let path = out_dir.join("compare.csv");
    write_file(&path, &csv)?;
    write_manifest(
        out_dir,
        "compare",
        cfg,
        serde_json::json!({"variants": variants.iter().map(|v| v.name()).collect::<Vec<_>>()}),
    )?;
    Ok(csv)
}
