//! Time stepping for the `(σ, u)` system in Fourier space, step control,
//! blow-up monitoring, and plain RK4 / forward Euler for the conservative
//! validation system.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ConservativeState, ConservativeSystem, Modes, SigmaSystem};
use crate::error::{Error, Result};
use crate::spectral::{gradient, holder_proxy, sup_norm, Field, VectorField};
use crate::state::{rho_minus_one_value, sigma_base, ModelParams, SigmaState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Cox-Matthews exponential RK4; the stiff symbol is integrated exactly.
    #[default]
    EtdRk4,
    /// Ascher-Ruuth-Spiteri (2,2,2) with the stiff part implicit.
    ImexArs,
    /// Classical RK4 on the full right-hand side.
    ExplicitRk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupThresholds {
    pub grad_u_max: f64,
    pub sigma_holder_max: f64,
    pub rho_min_floor: f64,
}

impl Default for BlowupThresholds {
    fn default() -> Self {
        BlowupThresholds {
            grad_u_max: 1e4,
            sigma_holder_max: 1e4,
            rho_min_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    pub scheme: Scheme,
    /// Nominal (and maximal) step.
    pub dt: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Shrink steps to the CFL bound when it is below `dt`.
    pub adaptive: bool,
    pub thresholds: BlowupThresholds,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            scheme: Scheme::EtdRk4,
            dt: 1e-3,
            cfl_safety: 0.5,
            t_end: 1.0,
            max_steps: 10_000_000,
            adaptive: true,
            thresholds: BlowupThresholds::default(),
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::param("cfl_safety", "must lie in (0, 1]"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", "must be non-negative"));
        }
        let t = &self.thresholds;
        if !(t.grad_u_max > 0.0 && t.sigma_holder_max > 0.0 && t.rho_min_floor > 0.0) {
            return Err(Error::param("thresholds", "must be positive"));
        }
        Ok(())
    }
}

/// Which monitor tripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monitor {
    NonFinite,
    Vacuum,
    RhoMin,
    GradU,
    SigmaHolder,
}

impl fmt::Display for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Monitor::NonFinite => "non_finite",
            Monitor::Vacuum => "vacuum",
            Monitor::RhoMin => "rho_min",
            Monitor::GradU => "grad_u",
            Monitor::SigmaHolder => "sigma_holder",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct BlowupEvent {
    /// Time of the rejected state.
    pub t: f64,
    pub step: usize,
    pub monitor: Monitor,
    pub value: f64,
    pub threshold: f64,
    pub last_valid: SigmaState,
}

/// Regularity monitors of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Monitors {
    /// `sup_x |∇u|` (Frobenius norm of the gradient matrix).
    pub grad_u_inf: f64,
    /// Hölder proxy of σ at `max{1, 2α}` (1 replaced by 1.001).
    pub sigma_holder: f64,
    pub rho_min: f64,
}

/// Hölder exponent used by the σ monitor. The proxy is a Fourier multiplier
/// and an integer exponent gives a Lipschitz surrogate, so 1 is nudged up.
pub fn holder_exponent(params: &ModelParams) -> f64 {
    let lambda = (2.0 * params.alpha.get()).max(1.0);
    if lambda == 1.0 {
        1.001
    } else {
        lambda
    }
}

pub fn monitors(state: &SigmaState, params: &ModelParams) -> Result<Monitors> {
    let mut g2 = vec![0.0; state.grid().len()];
    for c in state.u.components() {
        for d in gradient(c).components() {
            for (a, v) in g2.iter_mut().zip(d.values()) {
                *a += v * v;
            }
        }
    }
    let grad_u_inf = g2.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt();
    let sigma_holder = holder_proxy(&state.sigma, holder_exponent(params))?;
    let gamma = params.gamma;
    let rho_min = state
        .sigma
        .values()
        .iter()
        .map(|&s| 1.0 + rho_minus_one_value(s, gamma))
        .fold(f64::INFINITY, |m, r| if r.is_nan() { f64::NAN } else { m.min(r) });
    Ok(Monitors {
        grad_u_inf,
        sigma_holder,
        rho_min,
    })
}

fn check(
    state: &SigmaState,
    params: &ModelParams,
    cfg: &StepConfig,
) -> std::result::Result<Monitors, (Monitor, f64, f64)> {
    let gamma = params.gamma;
    if gamma > 1.0 {
        if let Some(b) = state
            .sigma
            .values()
            .iter()
            .map(|&s| sigma_base(s, gamma))
            .find(|b| !(*b > 0.0))
        {
            return Err((Monitor::Vacuum, b, 0.0));
        }
    }
    let m = monitors(state, params).map_err(|_| (Monitor::NonFinite, f64::NAN, 0.0))?;
    let th = &cfg.thresholds;
    if !(m.grad_u_inf.is_finite() && m.sigma_holder.is_finite() && m.rho_min.is_finite()) {
        return Err((Monitor::NonFinite, f64::NAN, 0.0));
    }
    if m.rho_min < th.rho_min_floor {
        return Err((Monitor::RhoMin, m.rho_min, th.rho_min_floor));
    }
    if m.grad_u_inf > th.grad_u_max {
        return Err((Monitor::GradU, m.grad_u_inf, th.grad_u_max));
    }
    if m.sigma_holder > th.sigma_holder_max {
        return Err((Monitor::SigmaHolder, m.sigma_holder, th.sigma_holder_max));
    }
    Ok(m)
}

/// CFL-limited step: `safety · min(h/‖u‖_∞, h/(√γ + (γ-1)/2 ‖σ‖_∞))`,
/// and in explicit mode also the RK4 stability limit of the stiff symbol.
/// Never exceeds `cfg.dt`.
pub fn adaptive_dt(state: &SigmaState, params: &ModelParams, cfg: &StepConfig) -> f64 {
    let grid = state.grid();
    let h = grid.h();
    let u_inf = state.u.components().iter().map(sup_norm).fold(0.0, f64::max);
    let c = params.gamma.sqrt() + 0.5 * (params.gamma - 1.0) * sup_norm(&state.sigma);
    let mut dt = h / c;
    if u_inf > 0.0 {
        dt = dt.min(h / u_inf);
    }
    if cfg.scheme == Scheme::ExplicitRk4 {
        dt = dt.min(dissipative_limit(grid.dim(), h, params));
    }
    (cfg.cfl_safety * dt).min(cfg.dt)
}

/// Largest stable explicit RK4 step for `-(β + |k|^{2α})` on the grid. The
/// real-axis RK4 stability interval is about 2.78; 2.5 leaves margin.
pub fn dissipative_limit(dim: usize, h: f64, params: &ModelParams) -> f64 {
    let k_max = std::f64::consts::PI / h * (dim as f64).sqrt();
    let align = if params.terms.alignment {
        k_max.powf(2.0 * params.alpha.get())
    } else {
        0.0
    };
    2.5 / (params.beta + align).max(f64::MIN_POSITIVE)
}

/// Per-mode exponential-integrator weights for one step size.
#[derive(Debug, Clone)]
struct EtdCoefficients {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

const CONTOUR_POINTS: usize = 32;

impl EtdCoefficients {
    /// Contour averages over a unit circle around `hL` avoid the
    /// cancellation of the closed forms near `hL = 0`.
    fn new(symbol: &[f64], dt: f64) -> Self {
        use std::f64::consts::PI;
        let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let n = symbol.len();
        let mut c = EtdCoefficients {
            e: vec![0.0; n],
            e2: vec![0.0; n],
            q: vec![0.0; n],
            f1: vec![0.0; n],
            f2: vec![0.0; n],
            f3: vec![0.0; n],
        };
        let mut memo: Vec<(f64, [f64; 4])> = Vec::new();
        for (i, &l) in symbol.iter().enumerate() {
            let hl = dt * l;
            c.e[i] = hl.exp();
            c.e2[i] = (0.5 * hl).exp();
            let w = match memo.iter().find(|(k, _)| *k == hl) {
                Some((_, w)) => *w,
                None => {
                    let mut acc = [Complex64::new(0.0, 0.0); 4];
                    for r in &roots {
                        // conjugate points contribute the conjugate; use both halves
                        for z in [hl + r, hl + r.conj()] {
                            let ez = z.exp();
                            let z3 = z * z * z;
                            acc[0] += ((z * 0.5).exp() - 1.0) / z;
                            acc[1] += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                            acc[2] += (2.0 + z + ez * (z - 2.0)) / z3;
                            acc[3] += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
                        }
                    }
                    let m = 2.0 * CONTOUR_POINTS as f64;
                    let w = [acc[0].re / m, acc[1].re / m, acc[2].re / m, acc[3].re / m];
                    memo.push((hl, w));
                    w
                }
            };
            c.q[i] = dt * w[0];
            c.f1[i] = dt * w[1];
            c.f2[i] = dt * w[2];
            c.f3[i] = dt * w[3];
        }
        c
    }
}

/// Advances [`Modes`] of one [`SigmaSystem`]; caches integrator weights for
/// the most recent step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    sys: SigmaSystem,
    scheme: Scheme,
    symbols: Vec<Vec<f64>>,
    etd: Option<(u64, Vec<EtdCoefficients>)>,
}

impl Stepper {
    pub fn new(sys: SigmaSystem, scheme: Scheme) -> Self {
        let symbols = sys.field_symbols();
        Stepper {
            sys,
            scheme,
            symbols,
            etd: None,
        }
    }

    pub fn system(&self) -> &SigmaSystem {
        &self.sys
    }

    fn etd_coefficients(&mut self, dt: f64) -> &[EtdCoefficients] {
        let key = dt.to_bits();
        if self.etd.as_ref().map(|(k, _)| *k) != Some(key) {
            let c = self.symbols.iter().map(|s| EtdCoefficients::new(s, dt)).collect();
            self.etd = Some((key, c));
        }
        &self.etd.as_ref().expect("just set").1
    }

    /// One step of size `dt`. Nyquist modes of the result are zeroed.
    pub fn advance(&mut self, m: &Modes, dt: f64) -> Result<Modes> {
        let mut out = match self.scheme {
            Scheme::EtdRk4 => self.etd_rk4(m, dt)?,
            Scheme::ImexArs => self.imex_ars(m, dt)?,
            Scheme::ExplicitRk4 => self.rk4(m, dt)?,
        };
        out.clear_nyquist(self.sys.grid());
        Ok(out)
    }

    fn etd_rk4(&mut self, u: &Modes, dt: f64) -> Result<Modes> {
        let nu = self.sys.nonlinear(u)?;
        let coeffs = self.etd_coefficients(dt).to_vec();
        let stage = |base: &Modes, n: &Modes| -> Modes {
            let mut out = base.clone();
            for ((f, nf), c) in out.fields.iter_mut().zip(&n.fields).zip(&coeffs) {
                for i in 0..f.len() {
                    f[i] = f[i] * c.e2[i] + nf[i] * c.q[i];
                }
            }
            out
        };
        let a = stage(u, &nu);
        let na = self.sys.nonlinear(&a)?;
        let b = stage(u, &na);
        let nb = self.sys.nonlinear(&b)?;
        let mut cn = nb.clone();
        for (f, g) in cn.fields.iter_mut().zip(&nu.fields) {
            for (x, y) in f.iter_mut().zip(g) {
                *x = *x * 2.0 - y;
            }
        }
        let c = stage(&a, &cn);
        let nc = self.sys.nonlinear(&c)?;
        let mut out = u.clone();
        for (k, f) in out.fields.iter_mut().enumerate() {
            let cf = &coeffs[k];
            for i in 0..f.len() {
                f[i] = f[i] * cf.e[i]
                    + nu.fields[k][i] * cf.f1[i]
                    + (na.fields[k][i] + nb.fields[k][i]) * (2.0 * cf.f2[i])
                    + nc.fields[k][i] * cf.f3[i];
            }
        }
        Ok(out)
    }

    fn imex_ars(&self, u: &Modes, dt: f64) -> Result<Modes> {
        let g = 1.0 - 0.5f64.sqrt();
        let d = 1.0 - 1.0 / (2.0 * g);
        let solve = |rhs: &mut Modes| {
            for (f, s) in rhs.fields.iter_mut().zip(&self.symbols) {
                for (c, l) in f.iter_mut().zip(s) {
                    *c /= 1.0 - dt * g * l;
                }
            }
        };
        let n1 = self.sys.nonlinear(u)?;
        let mut u2 = Modes::combine(&[(1.0, u), (dt * g, &n1)]);
        solve(&mut u2);
        let n2 = self.sys.nonlinear(&u2)?;
        let mut lu2 = u2.clone();
        for (f, s) in lu2.fields.iter_mut().zip(&self.symbols) {
            for (c, l) in f.iter_mut().zip(s) {
                *c *= *l;
            }
        }
        let mut u3 = Modes::combine(&[(1.0, u), (dt * d, &n1), (dt * (1.0 - d), &n2), (dt * (1.0 - g), &lu2)]);
        solve(&mut u3);
        Ok(u3)
    }

    fn rk4(&self, u: &Modes, dt: f64) -> Result<Modes> {
        let k1 = self.sys.full(u)?;
        let k2 = self.sys.full(&Modes::combine(&[(1.0, u), (0.5 * dt, &k1)]))?;
        let k3 = self.sys.full(&Modes::combine(&[(1.0, u), (0.5 * dt, &k2)]))?;
        let k4 = self.sys.full(&Modes::combine(&[(1.0, u), (dt, &k3)]))?;
        Ok(Modes::combine(&[
            (1.0, u),
            (dt / 6.0, &k1),
            (dt / 3.0, &k2),
            (dt / 3.0, &k3),
            (dt / 6.0, &k4),
        ]))
    }
}

fn blowup(state: &SigmaState, step: usize, t: f64, (monitor, value, threshold): (Monitor, f64, f64)) -> BlowupEvent {
    BlowupEvent {
        t,
        step,
        monitor,
        value,
        threshold,
        last_valid: state.clone(),
    }
}

/// Advances `state` by one step of `cfg.dt` (or the CFL step when adaptive).
/// A tripped monitor is reported as [`Error::Blowup`].
pub fn step(state: &SigmaState, params: &ModelParams, cfg: &StepConfig) -> Result<SigmaState> {
    cfg.validate()?;
    let dt = if cfg.adaptive {
        adaptive_dt(state, params, cfg)
    } else {
        cfg.dt
    };
    let mut stepper = Stepper::new(SigmaSystem::new(state.grid(), *params), cfg.scheme);
    let m = stepper.system().encode(state);
    advance_checked(&mut stepper, state, &m, dt, 1, params, cfg).map(|(s, _, _)| s)
}

fn advance_checked(
    stepper: &mut Stepper,
    state: &SigmaState,
    m: &Modes,
    dt: f64,
    step_index: usize,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<(SigmaState, Modes, Monitors)> {
    let t = state.t + dt;
    let fail = |info| Error::Blowup(Box::new(blowup(state, step_index, t, info)));
    let next = match stepper.advance(m, dt) {
        Ok(n) => n,
        Err(Error::Vacuum { base, .. }) => return Err(fail((Monitor::Vacuum, base, 0.0))),
        Err(e) => return Err(e),
    };
    if !next.is_finite() {
        return Err(fail((Monitor::NonFinite, f64::NAN, 0.0)));
    }
    let s = match stepper.system().decode(&next, t) {
        Ok(s) => s,
        Err(Error::NonFinite { value, .. }) => return Err(fail((Monitor::NonFinite, value, 0.0))),
        Err(e) => return Err(e),
    };
    let mon = check(&s, params, cfg).map_err(fail)?;
    Ok((s, next, mon))
}

/// Called with the step index and state at the diagnostics cadence.
pub trait Observer {
    fn observe(&mut self, step: usize, state: &SigmaState, monitors: &Monitors) -> Result<()>;
}

impl<F: FnMut(usize, &SigmaState, &Monitors) -> Result<()>> Observer for F {
    fn observe(&mut self, step: usize, state: &SigmaState, monitors: &Monitors) -> Result<()> {
        self(step, state, monitors)
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: usize, _: &SigmaState, _: &Monitors) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum RunStatus {
    Completed,
    Blowup(Box<BlowupEvent>),
    Timeout { steps: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct LogEntry {
    pub step: usize,
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: RunStatus,
    pub final_state: SigmaState,
    pub steps: usize,
    pub log: Vec<LogEntry>,
}

impl RunSummary {
    pub fn blowup(&self) -> Option<&BlowupEvent> {
        match &self.status {
            RunStatus::Blowup(b) => Some(b),
            _ => None,
        }
    }
}

/// Integrates from `ic` to `cfg.t_end`. The observer sees step 0, every
/// `cadence`-th step, and the final state. With `adaptive = false` the step
/// times are `t0 + k·dt` exactly (the last step is shortened if needed).
pub fn run(
    ic: &SigmaState,
    params: &ModelParams,
    cfg: &StepConfig,
    cadence: usize,
    observer: &mut dyn Observer,
) -> Result<RunSummary> {
    cfg.validate()?;
    let cadence = cadence.max(1);
    let mut log = vec![LogEntry {
        step: 0,
        t: ic.t,
        message: format!("start scheme={:?} dt={:e} t_end={}", cfg.scheme, cfg.dt, cfg.t_end),
    }];
    if let Some(w) = params.regularity_warning(ic.grid().dim()) {
        log.push(LogEntry {
            step: 0,
            t: ic.t,
            message: w,
        });
    }
    let mon0 = match check(ic, params, cfg) {
        Ok(m) => m,
        Err(info) => {
            let ev = blowup(ic, 0, ic.t, info);
            return Ok(RunSummary {
                status: RunStatus::Blowup(Box::new(ev)),
                final_state: ic.clone(),
                steps: 0,
                log,
            });
        }
    };
    observer.observe(0, ic, &mon0)?;

    let t0 = ic.t;
    let mut stepper = Stepper::new(SigmaSystem::new(ic.grid(), *params), cfg.scheme);
    let mut state = ic.clone();
    let mut modes = stepper.system().encode(&state);
    let mut steps = 0usize;
    let mut last_observed = 0usize;
    let eps = 1e-12 * cfg.dt.max(cfg.t_end.abs());
    let mut last_mon = mon0;
    while cfg.t_end - state.t > eps {
        if steps >= cfg.max_steps {
            log.push(LogEntry {
                step: steps,
                t: state.t,
                message: "max_steps exceeded".into(),
            });
            if last_observed != steps {
                observer.observe(steps, &state, &last_mon)?;
            }
            return Ok(RunSummary {
                status: RunStatus::Timeout { steps },
                final_state: state,
                steps,
                log,
            });
        }
        let dt = if cfg.adaptive {
            adaptive_dt(&state, params, cfg)
        } else {
            // land on the lattice t0 + k dt to keep the cadence uniform
            let target = (t0 + (steps + 1) as f64 * cfg.dt).min(cfg.t_end);
            target - state.t
        };
        let dt = dt.min(cfg.t_end - state.t);
        match advance_checked(&mut stepper, &state, &modes, dt, steps + 1, params, cfg) {
            Ok((s, m, mon)) => {
                state = s;
                if !cfg.adaptive {
                    state.t = (t0 + (steps + 1) as f64 * cfg.dt).min(cfg.t_end);
                }
                modes = m;
                last_mon = mon;
                steps += 1;
            }
            Err(Error::Blowup(ev)) => {
                log.push(LogEntry {
                    step: ev.step,
                    t: ev.t,
                    message: format!(
                        "blow-up: {} = {:e} (threshold {:e})",
                        ev.monitor, ev.value, ev.threshold
                    ),
                });
                if last_observed != steps {
                    observer.observe(steps, &state, &last_mon)?;
                }
                return Ok(RunSummary {
                    status: RunStatus::Blowup(ev),
                    final_state: state,
                    steps,
                    log,
                });
            }
            Err(e) => return Err(e),
        }
        if steps.is_multiple_of(cadence) {
            observer.observe(steps, &state, &last_mon)?;
            last_observed = steps;
        }
    }
    if last_observed != steps {
        observer.observe(steps, &state, &last_mon)?;
    }
    log.push(LogEntry {
        step: steps,
        t: state.t,
        message: "completed".into(),
    });
    Ok(RunSummary {
        status: RunStatus::Completed,
        final_state: state,
        steps,
        log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConservativeScheme {
    ForwardEuler,
    Rk4,
}

#[derive(Debug, Clone)]
pub struct ConservativeRun {
    pub final_state: ConservativeState,
    pub steps: usize,
    /// Set when the density lost positivity; the state is the last valid one.
    pub failure: Option<String>,
}

fn combine_conservative(
    base: &ConservativeState,
    terms: &[(f64, &(Field, VectorField))],
    t: f64,
) -> Result<ConservativeState> {
    let mut rho = base.rho.values().to_vec();
    let mut m: Vec<Vec<f64>> = base.momentum.components().iter().map(|c| c.values().to_vec()).collect();
    for &(a, (dr, dm)) in terms {
        for (r, d) in rho.iter_mut().zip(dr.values()) {
            *r += a * d;
        }
        for (mc, dc) in m.iter_mut().zip(dm.components()) {
            for (x, d) in mc.iter_mut().zip(dc.values()) {
                *x += a * d;
            }
        }
    }
    let grid = base.grid();
    Ok(ConservativeState {
        rho: Field::new(grid, rho)?,
        momentum: VectorField::new(m.into_iter().map(|v| Field::new(grid, v)).collect::<Result<Vec<_>>>()?)?,
        t,
    })
}

/// Fixed-step integration of the conservative system. The observer sees
/// step 0, every `cadence`-th step, and the final state.
pub fn integrate_conservative(
    sys: &ConservativeSystem,
    ic: &ConservativeState,
    scheme: ConservativeScheme,
    dt: f64,
    t_end: f64,
    cadence: usize,
    observer: &mut dyn FnMut(usize, &ConservativeState) -> Result<()>,
) -> Result<ConservativeRun> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let cadence = cadence.max(1);
    let t0 = ic.t;
    let total = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut state = ic.clone();
    observer(0, &state)?;
    for k in 0..total {
        let t_next = (t0 + (k + 1) as f64 * dt).min(t_end);
        let h = t_next - state.t;
        let attempt = (|| -> Result<ConservativeState> {
            match scheme {
                ConservativeScheme::ForwardEuler => {
                    let k1 = sys.rhs(&state)?;
                    combine_conservative(&state, &[(h, &k1)], t_next)
                }
                ConservativeScheme::Rk4 => {
                    let k1 = sys.rhs(&state)?;
                    let s2 = combine_conservative(&state, &[(0.5 * h, &k1)], state.t + 0.5 * h)?;
                    let k2 = sys.rhs(&s2)?;
                    let s3 = combine_conservative(&state, &[(0.5 * h, &k2)], state.t + 0.5 * h)?;
                    let k3 = sys.rhs(&s3)?;
                    let s4 = combine_conservative(&state, &[(h, &k3)], t_next)?;
                    let k4 = sys.rhs(&s4)?;
                    combine_conservative(
                        &state,
                        &[(h / 6.0, &k1), (h / 3.0, &k2), (h / 3.0, &k3), (h / 6.0, &k4)],
                        t_next,
                    )
                }
            }
        })();
        match attempt {
            Ok(s) if s.rho.min() > 0.0 => state = s,
            Ok(_) | Err(Error::NonPositiveDensity { .. }) | Err(Error::NonFinite { .. }) => {
                return Ok(ConservativeRun {
                    final_state: state,
                    steps: k,
                    failure: Some(format!("density lost positivity near t = {t_next}")),
                });
            }
            Err(e) => return Err(e),
        }
        if (k + 1) % cadence == 0 || k + 1 == total {
            observer(k + 1, &state)?;
        }
    }
    Ok(ConservativeRun {
        final_state: state,
        steps: total,
        failure: None,
    })
}
