use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use easim_core::io::read_timeseries;
use easim_core::oracle::{run_verification, VerifySettings};
use easim_core::par::Exec;
use easim_core::runner::plot::write_plot_script;
use easim_core::runner::{fit_series, run_experiment, run_sweep, Outcome, Report, RunConfig};

/// Euler-alignment simulator on the periodic torus.
///
/// Exit status: 0 on success, 2 when a run stopped on a blow-up event, 1 on
/// any error.
#[derive(Parser)]
#[command(name = "easim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment.
    Run(RunArgs),
    /// Run one experiment per parameter value, in parallel.
    Sweep(SweepArgs),
    /// Run the oracle suite; fails if any gate fails.
    Verify(VerifyArgs),
    /// Fit an exponential decay rate to a series of a time-series CSV.
    Fit(FitArgs),
    /// Write a matplotlib script for a time-series CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Built-in preset, used when no config file is given.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory; beats both the config and EASIM_OUTPUT_DIR.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Run all loops on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => bail!("one of --config or --preset is required"),
        };
        let mut cfg = cfg.with_env_overrides();
        if let Some(dir) = &self.output {
            cfg.output.dir = dir.clone();
        }
        Ok(cfg)
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// `delta`, `alpha`, `gamma`, `beta`, `n`, `seed`, or `section.key`.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Where to write the JSON report.
    #[arg(long, default_value = "verification.json")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    csv: PathBuf,
    /// A column name or one of energy, energy_l2, hs_sq, dissipation.
    #[arg(long, default_value = "energy_l2")]
    series: String,
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    /// Stop at the first value below this fraction of the starting value.
    #[arg(long, default_value_t = 0.0)]
    rel_floor: f64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Script path; defaults to plot_<stem>.py next to the CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn describe(report: &Report) -> String {
    match report {
        Report::Trajectory(t) => {
            let mut s = format!("{:?} after {} steps, t = {}", t.outcome, t.steps, t.t_final);
            if let Some(b) = &t.blowup {
                s += &format!("; {} = {:.6e} > {:.6e} at t = {}", b.monitor, b.value, b.threshold, b.t);
            }
            if let Some(f) = t.energy_fit {
                s += &format!("; energy decay rate {:.6} (R² {:.4})", f.mu, f.r2);
            }
            s
        }
        Report::ShockContrast(c) => format!(
            "unaligned: {:?} (t = {}), aligned: {:?} (t = {}), ordered = {}",
            c.unaligned.outcome, c.unaligned.t_final, c.aligned.outcome, c.aligned.t_final, c.ordered
        ),
        Report::DualForce(d) => format!("discrepancies {:?}, decreasing = {}", d.discrepancies, d.decreasing),
    }
}

fn execute(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run(a) => {
            let cfg = a.config.load()?;
            let (dir, report) = run_experiment(&cfg, a.config.exec())?;
            println!("{}: {}", dir.display(), describe(&report));
            Ok(report.outcome().exit_code())
        }
        Command::Sweep(a) => {
            let cfg = a.config.load()?;
            let (dir, rows) = run_sweep(&cfg, &a.param, &a.values, a.config.exec())?;
            println!("{:>12} {:>10} {:>14} {:>10}", a.param, "outcome", "mu_energy", "r2");
            for r in &rows {
                let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:>12} {:>10} {:>14} {:>10}",
                    r.value,
                    format!("{:?}", r.outcome),
                    fmt(r.mu_energy),
                    fmt(r.r2_energy)
                );
                if let Some(e) = &r.error {
                    eprintln!("{}: {e}", r.dir.display());
                }
            }
            println!("summary: {}", dir.join("sweep_summary.csv").display());
            let code = if rows.iter().any(|r| r.error.is_some()) {
                1
            } else if rows.iter().any(|r| r.outcome == Outcome::Blowup) {
                2
            } else {
                rows.iter().map(|r| r.outcome.exit_code()).max().unwrap_or(0)
            };
            Ok(code)
        }
        Command::Verify(a) => {
            let report = run_verification(&VerifySettings::default())?;
            for g in &report.gates {
                println!(
                    "{} {:<28} {:.3e} (tol {:.1e}) {}",
                    if g.passed { "PASS" } else { "FAIL" },
                    g.name,
                    g.value,
                    g.tolerance,
                    g.detail
                );
            }
            std::fs::write(&a.out, report.to_json()? + "\n").with_context(|| format!("writing {}", a.out.display()))?;
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Fit(a) => {
            let records = read_timeseries(&a.csv)?;
            let fit = fit_series(&records, &a.series, a.t_start, a.rel_floor)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(0)
        }
        Command::Plot(a) => {
            let path = write_plot_script(&a.csv, a.out.as_deref())?;
            println!("{}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // clap would exit with 2 on usage errors, which is reserved for blow-ups
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
