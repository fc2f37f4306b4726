//! Run configuration: a TOML file with fixed sections. Unknown keys are
//! rejected. A `preset` key at the top level selects a built-in base
//! configuration that the file's own values are merged over.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::alignment::KernelSpec;
use crate::diagnostics::DiagnosticsSettings;
use crate::dynamics::AlignmentForm;
use crate::error::{Error, Result};
use crate::integrator::{BlowupThresholds, Scheme, StepConfig};
use crate::spectral::Grid;
use crate::state::{ModelParams, TermSwitches};

/// Environment variable that overrides `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "EASIM_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// One σ-form trajectory.
    #[default]
    Trajectory,
    /// The same data with and without the alignment force.
    ShockContrast,
    /// Commutator against convolution force under grid refinement.
    DualForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Sobolev index; defaults to just above the critical value.
    pub s: Option<f64>,
    pub advection: bool,
    pub pressure: bool,
    pub alignment: bool,
    pub commutator: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TermSwitches::default();
        ModelSection {
            gamma: 1.0,
            beta: 0.0,
            alpha: 0.5,
            s: None,
            advection: t.advection,
            pressure: t.pressure,
            alignment: t.alignment,
            commutator: t.commutator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { dim: 1, n: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub shells: usize,
    pub max_shells: usize,
    /// Lattice-sum tolerance; dimension-dependent default when absent.
    pub tolerance: Option<f64>,
    pub pv_epsilon: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            shells: 32,
            max_shells: 1024,
            tolerance: None,
            pv_epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub scheme: Scheme,
    pub dt: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub max_steps: usize,
    pub adaptive: bool,
}

impl Default for TimeSection {
    fn default() -> Self {
        let s = StepConfig::default();
        TimeSection {
            scheme: s.scheme,
            dt: s.dt,
            cfl_safety: s.cfl_safety,
            t_end: s.t_end,
            max_steps: s.max_steps,
            adaptive: s.adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum IcKind {
    /// Random band-limited data of size `delta`.
    #[default]
    Perturbation,
    /// `ρ = 1 + a cos 2πx`, `u = b sin 2πx`.
    Wave,
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcSection {
    pub kind: IcKind,
    pub delta: f64,
    pub seed: u64,
    /// Defaults to `n / 8`.
    pub mode_cap: Option<usize>,
    pub rho_amplitude: f64,
    pub u_amplitude: f64,
    pub path: Option<PathBuf>,
}

impl Default for IcSection {
    fn default() -> Self {
        IcSection {
            kind: IcKind::Perturbation,
            delta: 0.01,
            seed: 1,
            mode_cap: None,
            rho_amplitude: 0.0,
            u_amplitude: 1.0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Steps between records.
    pub cadence: usize,
    pub eps: f64,
    pub eps_y: f64,
    /// Decay fits start here.
    pub fit_t_start: f64,
    /// Fits stop once the series drops below this fraction of its value at
    /// `fit_t_start`.
    pub fit_rel_floor: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let d = DiagnosticsSettings::default();
        DiagnosticsSection {
            cadence: 10,
            eps: d.eps,
            eps_y: d.eps_y,
            fit_t_start: 2.0,
            fit_rel_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: bool,
    pub checkpoint: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            csv: true,
            checkpoint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualForceSection {
    pub ns: Vec<usize>,
}

impl Default for DualForceSection {
    fn default() -> Self {
        DualForceSection { ns: vec![64, 128, 256] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub experiment: Experiment,
    pub model: ModelSection,
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub time: TimeSection,
    pub blowup: BlowupThresholds,
    pub ic: IcSection,
    pub diagnostics: DiagnosticsSection,
    pub output: OutputSection,
    pub dual_force: DualForceSection,
}

pub const PRESETS: [&str; 4] = ["decay-torus", "smallness", "shock-vs-alignment", "dual-force"];

/// Base table of a named preset.
pub fn preset_table(name: &str) -> Result<Table> {
    let text = match name {
        "decay-torus" => {
            r#"
[model]
gamma = 1.0
beta = 0.0
alpha = 0.5
[grid]
dim = 1
n = 128
[time]
t_end = 50.0
[ic]
delta = 0.01
[diagnostics]
cadence = 10
fit_t_start = 2.0
[output]
dir = "out/decay-torus"
"#
        }
        "smallness" => {
            r#"
[model]
gamma = 1.0
beta = 0.0
alpha = 0.5
[grid]
dim = 1
n = 128
[time]
t_end = 10.0
[ic]
delta = 0.01
[diagnostics]
cadence = 10
[output]
dir = "out/smallness"
"#
        }
        "shock-vs-alignment" => {
            r#"
experiment = "shock-contrast"
[model]
gamma = 1.4
beta = 0.0
alpha = 0.5
[grid]
dim = 1
n = 128
[time]
dt = 0.001
t_end = 3.0
[blowup]
grad_u_max = 50.0
[ic]
kind = "wave"
rho_amplitude = 0.0
u_amplitude = 1.0
[diagnostics]
cadence = 10
[output]
dir = "out/shock-vs-alignment"
"#
        }
        "dual-force" => {
            r#"
experiment = "dual-force"
[model]
gamma = 1.0
alpha = 0.5
[ic]
delta = 0.05
seed = 11
mode_cap = 8
[dual_force]
ns = [64, 128, 256]
[output]
dir = "out/dual-force"
"#
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}`; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(text.parse::<Table>().expect("preset tables are valid TOML"))
}

/// Recursively overlays `top` on `base`.
pub fn merge_tables(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        RunConfig::from_table(table)
    }

    pub fn from_table(table: Table) -> Result<RunConfig> {
        let merged = match table.get("preset") {
            Some(Value::String(name)) => {
                let mut base = preset_table(name)?;
                merge_tables(&mut base, table);
                base
            }
            Some(_) => return Err(Error::Config("`preset` must be a string".into())),
            None => table,
        };
        let cfg: RunConfig = Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<RunConfig> {
        let mut t = Table::new();
        t.insert("preset".into(), Value::String(name.into()));
        RunConfig::from_table(t)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies the output-directory override from the environment.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output.dir = PathBuf::from(dir);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.params()?;
        self.kernel_spec()?;
        self.step_config().validate()?;
        if self.diagnostics.cadence == 0 {
            return Err(Error::Config("diagnostics.cadence must be positive".into()));
        }
        if self.ic.kind == IcKind::Checkpoint && self.ic.path.is_none() {
            return Err(Error::Config("ic.path is required for kind = \"checkpoint\"".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.dim, self.grid.n)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        Ok(
            ModelParams::new(m.gamma, m.beta, m.alpha, m.s, self.grid.dim)?.with_terms(TermSwitches {
                advection: m.advection,
                pressure: m.pressure,
                alignment: m.alignment,
                commutator: m.commutator,
            }),
        )
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let k = &self.kernel;
        let mut spec = KernelSpec::new(self.params()?.alpha, self.grid.dim)?
            .with_shells(k.shells)?
            .with_max_shells(k.max_shells)?
            .with_pv_epsilon(k.pv_epsilon)?;
        if let Some(tol) = k.tolerance {
            spec = spec.with_tolerance(tol)?;
        }
        Ok(spec)
    }

    pub fn step_config(&self) -> StepConfig {
        let t = &self.time;
        StepConfig {
            scheme: t.scheme,
            dt: t.dt,
            cfl_safety: t.cfl_safety,
            t_end: t.t_end,
            max_steps: t.max_steps,
            adaptive: t.adaptive,
            thresholds: self.blowup,
        }
    }

    pub fn diagnostics_settings(&self) -> DiagnosticsSettings {
        DiagnosticsSettings {
            eps: self.diagnostics.eps,
            eps_y: self.diagnostics.eps_y,
        }
    }

    pub fn alignment_form(&self) -> AlignmentForm {
        AlignmentForm::Convolution
    }

    /// Sets one scalar by a sweep name (`delta`, `alpha`, `gamma`, `beta`,
    /// `n`, `seed`) or a dotted `section.key` path.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        let path = match name {
            "delta" => "ic.delta",
            "alpha" => "model.alpha",
            "gamma" => "model.gamma",
            "beta" => "model.beta",
            "n" => "grid.n",
            "seed" => "ic.seed",
            other => other,
        };
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{name}`")))?;
        let mut table: Table = Value::try_from(&*self)
            .map_err(|e| Error::Config(e.to_string()))?
            .as_table()
            .cloned()
            .expect("config serializes to a table");
        let sec = table
            .get_mut(section)
            .and_then(Value::as_table_mut)
            .ok_or_else(|| Error::Config(format!("unknown section `{section}`")))?;
        let v = match sec.get(key) {
            Some(Value::Integer(_)) => {
                if value.fract() != 0.0 {
                    return Err(Error::Config(format!("`{path}` takes an integer, got {value}")));
                }
                Value::Integer(value as i64)
            }
            _ => Value::Float(value),
        };
        sec.insert(key.to_string(), v);
        table.remove("preset");
        *self = RunConfig::from_table(table)?;
        Ok(())
    }
}
