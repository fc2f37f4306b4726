//! Experiment execution: builds the initial data from a [`RunConfig`], runs
//! it, and writes the per-run artifacts.
//!
//! A trajectory run writes into its output directory:
//! `resolved_config.toml`, `timeseries.csv`, `final.ckpt` (the last valid
//! state when the run blew up) and `summary.json`.

pub mod config;
pub mod plot;

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::diagnostics::{
    fit_decay_rate_above, smallness_monitor, DecayFit, Diagnostics, DiagnosticsRecord, SmallnessReport,
};
use crate::error::{Error, Result};
use crate::integrator::{run, Monitors, RunStatus, RunSummary};
use crate::io::{read_checkpoint, write_checkpoint, Checkpoint, TimeseriesWriter};
use crate::oracle::dual_force_discrepancy;
use crate::par::Exec;
use crate::state::{make_perturbation_ic, make_wave_ic, PrimitiveState, SigmaState};

pub use config::{Experiment, IcKind, RunConfig, OUTPUT_DIR_ENV, PRESETS};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const CHECKPOINT_FILE: &str = "final.ckpt";
pub const CONFIG_FILE: &str = "resolved_config.toml";
pub const SUMMARY_FILE: &str = "summary.json";

/// How a run ended, as exposed to the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Completed,
    Blowup,
    /// `max_steps` reached, or an experiment whose contract was not met.
    Failed,
}

impl Outcome {
    /// 0 on success, 2 on a blow-up event, 1 otherwise.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Completed => 0,
            Outcome::Blowup => 2,
            Outcome::Failed => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupInfo {
    pub t: f64,
    pub step: usize,
    pub monitor: String,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub outcome: Outcome,
    pub steps: usize,
    pub t_final: f64,
    pub blowup: Option<BlowupInfo>,
    pub records: usize,
    /// Decay fit of `kinetic + l2_rho_dev`.
    pub energy_fit: Option<DecayFit>,
    /// Decay fit of `‖σ‖²_{H^s} + ‖u‖²_{H^s}`.
    pub hs_fit: Option<DecayFit>,
    pub smallness: Option<SmallnessReport>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub series: Vec<DiagnosticsRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContrastReport {
    pub unaligned: TrajectoryReport,
    pub aligned: TrajectoryReport,
    /// The unaligned run blew up and the aligned one survived or blew up
    /// strictly later.
    pub ordered: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualForceReport {
    pub alpha: f64,
    pub discrepancies: Vec<(usize, f64)>,
    pub decreasing: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum Report {
    Trajectory(TrajectoryReport),
    ShockContrast(ContrastReport),
    DualForce(DualForceReport),
}

impl Report {
    pub fn outcome(&self) -> Outcome {
        match self {
            Report::Trajectory(t) => t.outcome,
            Report::ShockContrast(c) => {
                if c.ordered {
                    Outcome::Completed
                } else {
                    Outcome::Failed
                }
            }
            Report::DualForce(_) => Outcome::Completed,
        }
    }
}

/// Builds the initial state described by `cfg.ic`.
pub fn initial_state(cfg: &RunConfig) -> Result<PrimitiveState> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let ic = &cfg.ic;
    match ic.kind {
        IcKind::Perturbation => {
            let cap = ic.mode_cap.unwrap_or((grid.n() / 8).max(1));
            make_perturbation_ic(grid, ic.delta, ic.seed, cap, &params)
        }
        IcKind::Wave => make_wave_ic(grid, ic.rho_amplitude, ic.u_amplitude),
        IcKind::Checkpoint => {
            let path = ic.path.as_deref().expect("validated");
            let ck = read_checkpoint(path)?;
            if ck.state.grid() != grid {
                return Err(Error::Config(format!(
                    "checkpoint grid (dim {}, n {}) differs from [grid]",
                    ck.state.grid().dim(),
                    ck.state.grid().n()
                )));
            }
            Ok(ck.state)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn prepare_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml_string()?).map_err(|e| Error::io(&path, e))
}

/// Integrates one trajectory, streaming records into `dir` when given.
pub fn run_trajectory(cfg: &RunConfig, dir: Option<&Path>, exec: Exec) -> Result<TrajectoryReport> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let step_cfg = cfg.step_config();
    let prim = initial_state(cfg)?;
    let ic = prim.to_sigma(params.gamma)?;
    let diag = Diagnostics::new(grid, params, &cfg.kernel_spec()?, cfg.diagnostics_settings())?.with_exec(exec);

    let mut warnings: Vec<String> = params.regularity_warning(grid.dim()).into_iter().collect();
    let mut sink = match dir {
        Some(d) if cfg.output.csv => Some(TimeseriesWriter::create(&d.join(TIMESERIES_FILE))?),
        _ => None,
    };
    let mut series = Vec::new();
    let mut observer = |step: usize, s: &SigmaState, _: &Monitors| -> Result<()> {
        let r = diag.record(step as u64, s)?;
        if let Some(w) = sink.as_mut() {
            w.write(&r)?;
        }
        series.push(r);
        Ok(())
    };
    let summary: RunSummary = run(&ic, &params, &step_cfg, cfg.diagnostics.cadence, &mut observer)?;
    if let Some(w) = sink {
        w.finish()?;
    }
    warnings.extend(
        summary
            .log
            .iter()
            .map(|l| format!("step {} (t = {}): {}", l.step, l.t, l.message)),
    );

    let (outcome, blowup, last) = match &summary.status {
        RunStatus::Completed => (Outcome::Completed, None, &summary.final_state),
        RunStatus::Timeout { steps } => {
            warnings.push(format!("max_steps reached after {steps} steps"));
            (Outcome::Failed, None, &summary.final_state)
        }
        RunStatus::Blowup(e) => (
            Outcome::Blowup,
            Some(BlowupInfo {
                t: e.t,
                step: e.step,
                monitor: e.monitor.to_string(),
                value: e.value,
                threshold: e.threshold,
            }),
            &e.last_valid,
        ),
    };
    if let (Some(d), true) = (dir, cfg.output.checkpoint) {
        let ck = Checkpoint {
            state: last.to_primitive(params.gamma)?,
            gamma: params.gamma,
            beta: params.beta,
            alpha: params.alpha.get(),
        };
        write_checkpoint(&ck, &d.join(CHECKPOINT_FILE))?;
    }

    let d = &cfg.diagnostics;
    let energy: Vec<(f64, f64)> = series.iter().map(|r| (r.t, r.kinetic + r.l2_rho_dev)).collect();
    let hs: Vec<(f64, f64)> = series.iter().map(|r| (r.t, r.hs_sq())).collect();
    let energy_fit = fit_decay_rate_above(&energy, d.fit_t_start, d.fit_rel_floor).ok();
    let hs_fit = fit_decay_rate_above(&hs, d.fit_t_start, d.fit_rel_floor).ok();
    let smallness = (!series.is_empty()).then(|| smallness_monitor(&series, 1e-6));

    Ok(TrajectoryReport {
        outcome,
        steps: summary.steps,
        t_final: last.t,
        blowup,
        records: series.len(),
        energy_fit,
        hs_fit,
        smallness,
        warnings,
        series,
    })
}

fn blowup_time(r: &TrajectoryReport) -> Option<f64> {
    r.blowup.as_ref().map(|b| b.t)
}

pub fn run_contrast(cfg: &RunConfig, dir: Option<&Path>, exec: Exec) -> Result<ContrastReport> {
    let mut off = cfg.clone();
    off.model.alignment = false;
    off.experiment = Experiment::Trajectory;
    let mut on = cfg.clone();
    on.model.alignment = true;
    on.experiment = Experiment::Trajectory;
    let sub = |name: &str, c: &RunConfig| -> Result<Option<PathBuf>> {
        match dir {
            Some(d) => {
                let p = d.join(name);
                prepare_dir(&p, c)?;
                Ok(Some(p))
            }
            None => Ok(None),
        }
    };
    let unaligned = run_trajectory(&off, sub("unaligned", &off)?.as_deref(), exec)?;
    let aligned = run_trajectory(&on, sub("aligned", &on)?.as_deref(), exec)?;
    let ordered = match (blowup_time(&unaligned), blowup_time(&aligned)) {
        (Some(_), None) => aligned.outcome == Outcome::Completed,
        (Some(a), Some(b)) => b > a,
        _ => false,
    };
    Ok(ContrastReport {
        unaligned,
        aligned,
        ordered,
    })
}

pub fn run_dual_force(cfg: &RunConfig) -> Result<DualForceReport> {
    let disc = dual_force_discrepancy(cfg.model.alpha, &cfg.dual_force.ns, cfg.ic.seed, cfg.ic.delta)?;
    let decreasing = disc.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(DualForceReport {
        alpha: cfg.model.alpha,
        discrepancies: disc,
        decreasing,
    })
}

/// Runs the configured experiment, writing all artifacts under
/// `cfg.output.dir`.
pub fn run_experiment(cfg: &RunConfig, exec: Exec) -> Result<(PathBuf, Report)> {
    let dir = cfg.output.dir.clone();
    prepare_dir(&dir, cfg)?;
    let report = execute(cfg, &dir, exec)?;
    write_json(&dir.join(SUMMARY_FILE), &report)?;
    Ok((dir, report))
}

fn execute(cfg: &RunConfig, dir: &Path, exec: Exec) -> Result<Report> {
    Ok(match cfg.experiment {
        Experiment::Trajectory => Report::Trajectory(run_trajectory(cfg, Some(dir), exec)?),
        Experiment::ShockContrast => Report::ShockContrast(run_contrast(cfg, Some(dir), exec)?),
        Experiment::DualForce => {
            let r = run_dual_force(cfg)?;
            let mut text = String::from("n,discrepancy\n");
            for (n, d) in &r.discrepancies {
                text.push_str(&format!("{n},{d:.16e}\n"));
            }
            let path = dir.join("dual_force.csv");
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Report::DualForce(r)
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub dir: PathBuf,
    pub outcome: Outcome,
    pub mu_energy: Option<f64>,
    pub r2_energy: Option<f64>,
    pub mu_hs: Option<f64>,
    pub r2_hs: Option<f64>,
    pub hs_ratio: Option<f64>,
    pub error: Option<String>,
}

fn format_value(v: f64) -> String {
    let s = format!("{v}");
    s.replace('-', "m")
}

/// Runs one configuration per value in parallel, each in its own
/// subdirectory `<param>=<value>`, and writes `sweep_summary.csv`.
pub fn run_sweep(cfg: &RunConfig, param: &str, values: &[f64], exec: Exec) -> Result<(PathBuf, Vec<SweepRow>)> {
    let base = cfg.clone();
    let root = base.output.dir.clone();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut configs = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = base.clone();
        c.set_param(param, v)?;
        c.output.dir = root.join(format!("{param}={}", format_value(v)));
        configs.push((v, c));
    }
    let rows: Vec<SweepRow> = exec.map_slice(&configs, |(v, c)| {
        let dir = c.output.dir.clone();
        let res = (|| -> Result<Report> {
            prepare_dir(&dir, c)?;
            let r = execute(c, &dir, Exec::Sequential)?;
            write_json(&dir.join(SUMMARY_FILE), &r)?;
            Ok(r)
        })();
        let mut row = SweepRow {
            value: *v,
            dir,
            outcome: Outcome::Failed,
            mu_energy: None,
            r2_energy: None,
            mu_hs: None,
            r2_hs: None,
            hs_ratio: None,
            error: None,
        };
        match res {
            Ok(r) => {
                row.outcome = r.outcome();
                if let Report::Trajectory(t) = &r {
                    row.mu_energy = t.energy_fit.map(|f| f.mu);
                    row.r2_energy = t.energy_fit.map(|f| f.r2);
                    row.mu_hs = t.hs_fit.map(|f| f.mu);
                    row.r2_hs = t.hs_fit.map(|f| f.r2);
                    row.hs_ratio = t.smallness.and_then(|s| s.ratio);
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    });
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
    let mut text = format!("{param},outcome,mu_energy,r2_energy,mu_hs,r2_hs,hs_ratio,error\n");
    for r in &rows {
        text.push_str(&format!(
            "{:.16e},{},{},{},{},{},{},{}\n",
            r.value,
            serde_json::to_value(r.outcome)?.as_str().unwrap_or_default(),
            opt(r.mu_energy),
            opt(r.r2_energy),
            opt(r.mu_hs),
            opt(r.r2_hs),
            opt(r.hs_ratio),
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    let path = root.join("sweep_summary.csv");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok((root, rows))
}

/// Named scalar series from a record: any numeric column, or one of the
/// derived series `energy` (kinetic + internal), `energy_l2`
/// (kinetic + l2_rho_dev), `hs_sq`, `dissipation`.
pub fn series_value(r: &DiagnosticsRecord, name: &str) -> Option<f64> {
    match name {
        "energy" => return Some(r.energy()),
        "energy_l2" => return Some(r.kinetic + r.l2_rho_dev),
        "hs_sq" => return Some(r.hs_sq()),
        "dissipation" => return Some(r.dissipation()),
        "step" => return Some(r.step as f64),
        _ => {}
    }
    DiagnosticsRecord::COLUMNS[1..]
        .iter()
        .position(|c| *c == name)
        .map(|i| r.values()[i])
}

/// Decay fit of a named series of a time-series CSV.
pub fn fit_series(records: &[DiagnosticsRecord], name: &str, t_start: f64, rel_floor: f64) -> Result<DecayFit> {
    let series = records
        .iter()
        .map(|r| {
            series_value(r, name)
                .map(|v| (r.t, v))
                .ok_or_else(|| Error::Config(format!("unknown series `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_decay_rate_above(&series, t_start, rel_floor)
}
