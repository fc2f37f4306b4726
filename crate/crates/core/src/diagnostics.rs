//! Discrete versions of the functionals that appear in the energy and
//! smallness estimates, plus trajectory-level checks built on them.

use serde::{Deserialize, Serialize};

use crate::alignment::{alignment_dissipation_with, momentum_source, periodized_kernel, KernelSpec, KernelTable};
use crate::error::{Error, Result};
use crate::integrator::monitors;
use crate::par::Exec;
use crate::spectral::{
    dealiased_product, derivative_wavevector, divergence, gradient, inverse_laplacian, sobolev_norm, Field, Grid,
    VectorField,
};
use crate::state::{rho_minus_one_value, ModelParams, PrimitiveState, SigmaState};

/// Relative internal energy density as a function of `r = ρ - 1`, without
/// cancellation of the `O(r)` terms.
#[inline]
pub fn h_value(r: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        (1.0 + r) * r.ln_1p() - r
    } else {
        ((gamma * r.ln_1p()).exp_m1() - gamma * r) / (gamma - 1.0)
    }
}

/// `h(ρ) = ρ ln ρ - ρ + 1` (`γ = 1`) or `(ρ^γ - γρ)/(γ-1) + 1`.
pub fn h_of_rho(rho: &Field, gamma: f64) -> Result<Field> {
    if let Some((index, &value)) = rho.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveDensity { index, value });
    }
    rho.map(|v| h_value(v - 1.0, gamma))
}

/// Range of `h(ρ)/(ρ-1)²` over `0 < |ρ-1| ≤ max_dev`, sampled on `samples`
/// points per side.
pub fn h_equivalence_interval(gamma: f64, max_dev: f64, samples: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 1..=samples {
        let r = max_dev * i as f64 / samples as f64;
        for r in [r, -r] {
            let q = h_value(r, gamma) / (r * r);
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    (lo, hi)
}

/// Zero-mean `ψ` with `-Δψ = ρ - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamFunction {
    pub psi: Field,
}

/// Fails when `mean(ρ) - 1` exceeds `1e-12`.
pub fn stream_function(rho: &Field) -> Result<StreamFunction> {
    let deviation = rho.integral() - 1.0;
    if deviation.abs() > 1e-12 {
        return Err(Error::NonzeroMean { deviation });
    }
    Ok(StreamFunction {
        psi: inverse_laplacian(&rho.map_raw(|v| v - 1.0)),
    })
}

fn integral_of_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// `∫(½ρ|u|² + h(ρ) + ε ρu·∇ψ)`.
pub fn v_epsilon(state: &PrimitiveState, eps: f64, gamma: f64) -> Result<f64> {
    let psi = stream_function(&state.rho)?.psi;
    Ok(v_epsilon_parts(state, &psi, gamma, eps).3)
}

/// (kinetic, internal, cross, V_ε).
fn v_epsilon_parts(state: &PrimitiveState, psi: &Field, gamma: f64, eps: f64) -> (f64, f64, f64, f64) {
    let rho = state.rho.values();
    let u2 = state.u.norm_sq_pointwise();
    let kinetic = 0.5 * integral_of_product(rho, &u2);
    let internal = state.rho.values().iter().map(|&v| h_value(v - 1.0, gamma)).sum::<f64>() / rho.len() as f64;
    let grad_psi = gradient(psi);
    let mut cross = 0.0;
    for (u, g) in state.u.components().iter().zip(grad_psi.components()) {
        let m: Vec<f64> = u.values().iter().zip(rho).map(|(u, r)| u * r).collect();
        cross += integral_of_product(&m, g.values());
    }
    (kinetic, internal, cross, kinetic + internal + eps * cross)
}

/// The terms of `W_ε = -dV_ε/dt`. `damping_cross = εβ∫ρu·∇ψ` comes from the
/// damping force acting on the cross term; it is kept separate from the six
/// named terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WTerms {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    pub l6: f64,
    pub damping_cross: f64,
}

impl WTerms {
    pub fn total(&self) -> f64 {
        self.l1 + self.l2 + self.l3 + self.l4 + self.l5 + self.l6 + self.damping_cross
    }
}

/// `W_ε` term by term; `L2` uses the pairwise quadrature of `table`.
pub fn w_epsilon(state: &PrimitiveState, eps: f64, params: &ModelParams, table: &KernelTable) -> Result<WTerms> {
    let psi = inverse_laplacian(&state.rho.map_raw(|v| v - 1.0));
    w_terms(state, &psi, eps, params, table, Exec::default())
}

fn w_terms(
    state: &PrimitiveState,
    psi: &Field,
    eps: f64,
    params: &ModelParams,
    table: &KernelTable,
    exec: Exec,
) -> Result<WTerms> {
    let grid = state.grid();
    let dim = grid.dim();
    let rho = &state.rho;
    let g = params.gamma;
    let u2 = state.u.norm_sq_pointwise();
    let l1 = params.beta * integral_of_product(rho.values(), &u2);
    let l2 = alignment_dissipation_with(state, table, exec)?;
    // ∫∇ψ·∇p = ∫(ρ-1)(p(ρ) - p(1)) after integrating by parts
    let l3 = eps
        * rho
            .values()
            .iter()
            .map(|&v| (v - 1.0) * ((g * (v - 1.0).ln_1p()).exp_m1()))
            .sum::<f64>()
        / grid.len() as f64;

    let grad_psi = gradient(psi);
    let m: Vec<Field> = state
        .u
        .components()
        .iter()
        .map(|u| dealiased_product(rho, u))
        .collect::<Result<_>>()?;
    let mut l4 = 0.0;
    for a in 0..dim {
        let flux: Vec<Field> = (0..dim)
            .map(|b| dealiased_product(&m[a], state.u.component(b)))
            .collect::<Result<_>>()?;
        let div = divergence(&VectorField::new(flux)?);
        l4 += integral_of_product(grad_psi.component(a).values(), div.values());
    }
    let l4 = eps * l4;

    // ∂_t ψ = -(-Δ)^{-1} ∇·m
    let mv = VectorField::new(m.clone())?;
    let psi_t = inverse_laplacian(&divergence(&mv)).scale(-1.0);
    let grad_psi_t = gradient(&psi_t);
    let mut l5 = 0.0;
    let mut cross = 0.0;
    for a in 0..dim {
        l5 -= integral_of_product(m[a].values(), grad_psi_t.component(a).values());
        cross += integral_of_product(m[a].values(), grad_psi.component(a).values());
    }
    let l5 = eps * l5;

    let source = momentum_source(state, table, exec);
    let mut l6 = 0.0;
    for (a, s) in source.iter().enumerate() {
        l6 -= integral_of_product(grad_psi.component(a).values(), s);
    }
    Ok(WTerms {
        l1,
        l2,
        l3,
        l4,
        l5,
        l6: eps * l6,
        damping_cross: eps * params.beta * cross,
    })
}

/// One row of the diagnostics time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub t: f64,
    pub mass: f64,
    pub momentum_x: f64,
    pub momentum_y: f64,
    pub kinetic: f64,
    pub internal: f64,
    pub dissipation_damping: f64,
    pub dissipation_alignment: f64,
    pub l2_rho_dev: f64,
    pub hs_sigma: f64,
    pub hs_u: f64,
    pub grad_u_inf: f64,
    pub sigma_holder: f64,
    pub bkm_integrand: f64,
    pub cross_low: f64,
    pub cross_high: f64,
    pub y: f64,
    pub v_eps: f64,
    pub w_eps: f64,
    pub rho_min: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 21] = [
        "step",
        "t",
        "mass",
        "momentum_x",
        "momentum_y",
        "kinetic",
        "internal",
        "dissipation_damping",
        "dissipation_alignment",
        "l2_rho_dev",
        "hs_sigma",
        "hs_u",
        "grad_u_inf",
        "sigma_holder",
        "bkm_integrand",
        "cross_low",
        "cross_high",
        "y",
        "v_eps",
        "w_eps",
        "rho_min",
    ];

    pub fn values(&self) -> [f64; 20] {
        [
            self.t,
            self.mass,
            self.momentum_x,
            self.momentum_y,
            self.kinetic,
            self.internal,
            self.dissipation_damping,
            self.dissipation_alignment,
            self.l2_rho_dev,
            self.hs_sigma,
            self.hs_u,
            self.grad_u_inf,
            self.sigma_holder,
            self.bkm_integrand,
            self.cross_low,
            self.cross_high,
            self.y,
            self.v_eps,
            self.w_eps,
            self.rho_min,
        ]
    }

    pub fn energy(&self) -> f64 {
        self.kinetic + self.internal
    }

    pub fn dissipation(&self) -> f64 {
        self.dissipation_damping + self.dissipation_alignment
    }

    /// `‖σ‖²_{H^s} + ‖u‖²_{H^s}`.
    pub fn hs_sq(&self) -> f64 {
        self.hs_sigma * self.hs_sigma + self.hs_u * self.hs_u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSettings {
    /// Weight of the stream-function cross term in `V_ε`, `W_ε`.
    pub eps: f64,
    /// Weight of the cross terms in `Y`.
    pub eps_y: f64,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        DiagnosticsSettings { eps: 0.05, eps_y: 0.01 }
    }
}

/// Computes [`DiagnosticsRecord`]s for one grid and parameter set.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    params: ModelParams,
    settings: DiagnosticsSettings,
    table: KernelTable,
    exec: Exec,
}

/// `∫ L^λ u · ∇L^λ σ` summed over components.
fn cross_term(state: &SigmaState, lambda: f64) -> f64 {
    let grid = state.grid();
    let sig = state.sigma.spectrum();
    let mut acc = 0.0;
    for (a, u) in state.u.components().iter().enumerate() {
        // Re(û conj(ik σ̂)) = k Im(û conj σ̂)
        acc += u
            .spectrum()
            .iter()
            .zip(sig)
            .enumerate()
            .map(|(i, (uc, sc))| {
                let k = derivative_wavevector(grid, i)[a];
                let w = if lambda == 0.0 {
                    1.0
                } else {
                    grid.wavenumber(i).powf(2.0 * lambda)
                };
                w * k * (uc * sc.conj()).im
            })
            .sum::<f64>();
    }
    acc
}

impl Diagnostics {
    pub fn new(grid: Grid, params: ModelParams, kernel: &KernelSpec, settings: DiagnosticsSettings) -> Result<Self> {
        Ok(Diagnostics {
            params,
            settings,
            table: periodized_kernel(kernel, grid)?,
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn table(&self) -> &KernelTable {
        &self.table
    }

    pub fn settings(&self) -> &DiagnosticsSettings {
        &self.settings
    }

    pub fn record(&self, step: u64, state: &SigmaState) -> Result<DiagnosticsRecord> {
        let p = &self.params;
        let g = p.gamma;
        let grid = state.grid();
        let r = state.sigma.map(|s| rho_minus_one_value(s, g))?;
        let rho = r.map_raw(|v| 1.0 + v);
        let prim = PrimitiveState::new(rho.clone(), state.u.clone(), state.t)?;
        let rho_v = rho.values();
        let u2 = state.u.norm_sq_pointwise();
        let rho_u2 = integral_of_product(rho_v, &u2);
        let momentum = prim.momentum();
        let internal = r.values().iter().map(|&v| h_value(v, g)).sum::<f64>() / grid.len() as f64;
        let l2_rho_dev = r.values().iter().map(|v| v * v).sum::<f64>() / grid.len() as f64;

        let hs_sigma = sobolev_norm(&state.sigma, p.s);
        let hs_u = state
            .u
            .components()
            .iter()
            .map(|c| sobolev_norm(c, p.s).powi(2))
            .sum::<f64>()
            .sqrt();
        let mon = monitors(state, p)?;
        let cross_low = cross_term(state, 0.0);
        let cross_high = cross_term(state, p.s - 1.0);
        let y = hs_sigma * hs_sigma + hs_u * hs_u + self.settings.eps_y * (cross_low + cross_high);

        let psi = inverse_laplacian(&r);
        let eps = self.settings.eps;
        let (kinetic, _, cross, _) = v_epsilon_parts(&prim, &psi, g, eps);
        let w = w_terms(&prim, &psi, eps, p, &self.table, self.exec)?;

        Ok(DiagnosticsRecord {
            step,
            t: state.t,
            mass: rho.integral(),
            momentum_x: momentum[0],
            momentum_y: momentum[1],
            kinetic,
            internal,
            dissipation_damping: p.beta * rho_u2,
            dissipation_alignment: w.l2,
            l2_rho_dev,
            hs_sigma,
            hs_u,
            grad_u_inf: mon.grad_u_inf,
            sigma_holder: mon.sigma_holder,
            bkm_integrand: mon.grad_u_inf + mon.sigma_holder,
            cross_low,
            cross_high,
            y,
            v_eps: kinetic + internal + eps * cross,
            w_eps: w.total(),
            rho_min: mon.rho_min,
        })
    }

    /// `W_ε` terms at a σ-form state.
    pub fn w_terms(&self, state: &SigmaState) -> Result<WTerms> {
        let prim = state.to_primitive(self.params.gamma)?;
        let psi = inverse_laplacian(&prim.rho.map_raw(|v| v - 1.0));
        w_terms(&prim, &psi, self.settings.eps, &self.params, &self.table, self.exec)
    }
}

fn check_cadence(records: &[DiagnosticsRecord]) -> Result<f64> {
    let dt = records[1].t - records[0].t;
    if !(dt > 0.0) {
        return Err(Error::NonUniformCadence { index: 1 });
    }
    for (i, w) in records.windows(2).enumerate() {
        if ((w[1].t - w[0].t) - dt).abs() > 1e-9 * dt {
            return Err(Error::NonUniformCadence { index: i + 1 });
        }
    }
    Ok(dt)
}

/// One interior point of the energy balance: the centred difference of
/// `E = kinetic + internal` and the total dissipation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBalance {
    pub t: f64,
    pub de_dt: f64,
    pub dissipation: f64,
}

impl EnergyBalance {
    pub fn defect(&self) -> f64 {
        self.de_dt + self.dissipation
    }
}

/// `dE/dt` against `D_β + D_φ` along a uniformly spaced window of records,
/// by a five-point centred difference (three points for windows shorter
/// than five records).
pub fn energy_balance(records: &[DiagnosticsRecord]) -> Result<Vec<EnergyBalance>> {
    if records.len() < 3 {
        return Err(Error::InsufficientRecords {
            needed: 3,
            got: records.len(),
        });
    }
    let dt = check_cadence(records)?;
    let e: Vec<f64> = records.iter().map(|r| r.energy()).collect();
    let five = records.len() >= 5;
    let range = if five {
        2..records.len() - 2
    } else {
        1..records.len() - 1
    };
    Ok(range
        .map(|i| {
            let de_dt = if five {
                (e[i - 2] - 8.0 * e[i - 1] + 8.0 * e[i + 1] - e[i + 2]) / (12.0 * dt)
            } else {
                (e[i + 1] - e[i - 1]) / (2.0 * dt)
            };
            EnergyBalance {
                t: records[i].t,
                de_dt,
                dissipation: records[i].dissipation(),
            }
        })
        .collect())
}

/// Normalized residual of the energy law over a window:
/// `‖Ė + D‖ / max(‖D‖, ‖Ė‖, floor)` in the discrete ℓ² norm over the
/// interior points. Zero for a window with no energy change.
pub fn energy_law_residual(records: &[DiagnosticsRecord], floor: f64) -> Result<f64> {
    let bal = energy_balance(records)?;
    let norm = |f: &dyn Fn(&EnergyBalance) -> f64| bal.iter().map(|b| f(b).powi(2)).sum::<f64>().sqrt();
    let defect = norm(&|b| b.defect());
    let scale = norm(&|b| b.dissipation).max(norm(&|b| b.de_dt)).max(floor);
    Ok(if scale == 0.0 { 0.0 } else { defect / scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay rate `-d ln(value)/dt`.
    pub mu: f64,
    pub r2: f64,
    pub points: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Least-squares fit of `ln(value)` against `t` on `t ≥ t_start`.
pub fn fit_decay_rate(series: &[(f64, f64)], t_start: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= t_start).collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientRecords {
            needed: 2,
            got: pts.len(),
        });
    }
    if let Some(&(t, value)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveSeries { t, value });
    }
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, v)| (a + t, b + v.ln()));
    let (mt, my) = (st / n, sy / n);
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, v) in &pts {
        let (dt, dy) = (t - mt, v.ln() - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let r2 = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(DecayFit {
        mu: -slope,
        r2,
        points: pts.len(),
        t_start: pts[0].0,
        t_end: pts[pts.len() - 1].0,
    })
}

/// Like [`fit_decay_rate`], but stops at the first value below
/// `rel_floor · value(t_start)`; beyond it round-off dominates.
pub fn fit_decay_rate_above(series: &[(f64, f64)], t_start: f64, rel_floor: f64) -> Result<DecayFit> {
    let first = series.iter().find(|(t, _)| *t >= t_start).map(|p| p.1).unwrap_or(0.0);
    let cut: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= t_start)
        .take_while(|(_, v)| *v >= rel_floor * first)
        .collect();
    fit_decay_rate(&cut, t_start)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    /// `sup_t hs²(t) / hs²(0)`; `None` when the initial value is 0 and the
    /// state is preserved exactly.
    pub ratio: Option<f64>,
    pub y_nonincreasing: bool,
    /// Largest `(Y_{i+1} - Y_i) / Y_i` observed.
    pub max_y_increase: f64,
    pub slack: f64,
}

pub fn smallness_monitor(records: &[DiagnosticsRecord], slack: f64) -> SmallnessReport {
    let h0 = records.first().map(|r| r.hs_sq()).unwrap_or(0.0);
    let sup = records.iter().map(|r| r.hs_sq()).fold(0.0, f64::max);
    let ratio = if h0 > 0.0 { Some(sup / h0) } else { None };
    let mut max_inc = f64::NEG_INFINITY;
    for w in records.windows(2) {
        let inc = if w[0].y > 0.0 {
            (w[1].y - w[0].y) / w[0].y
        } else {
            w[1].y - w[0].y
        };
        max_inc = max_inc.max(inc);
    }
    if records.len() < 2 {
        max_inc = 0.0;
    }
    SmallnessReport {
        ratio,
        y_nonincreasing: max_inc <= slack,
        max_y_increase: max_inc,
        slack,
    }
}

/// Alignment dissipation against the kernel lower bound at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityCheck {
    pub dissipation: f64,
    pub kinetic: f64,
    pub phi_m: f64,
    /// `D / (φ_m · kinetic)`; the required inequality is `≥ 1`.
    pub margin: f64,
    /// `D / (2 φ_m · kinetic)`; the averaging argument gives `≥ 1` for
    /// unit mass and zero momentum.
    pub sharp_margin: f64,
}

pub fn coercivity_check(state: &PrimitiveState, table: &KernelTable) -> Result<CoercivityCheck> {
    let dissipation = alignment_dissipation_with(state, table, Exec::default())?;
    let kinetic = 0.5 * integral_of_product(state.rho.values(), &state.u.norm_sq_pointwise());
    let phi_m = table.phi_min();
    let base = phi_m * kinetic;
    Ok(CoercivityCheck {
        dissipation,
        kinetic,
        phi_m,
        margin: if base > 0.0 { dissipation / base } else { f64::INFINITY },
        sharp_margin: if base > 0.0 {
            dissipation / (2.0 * base)
        } else {
            f64::INFINITY
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{run, Scheme, StepConfig};
    use crate::spectral::{sup_norm, FractionalExponent};
    use crate::state::make_perturbation_ic;
    use std::f64::consts::{E, PI};

    fn g1(n: usize) -> Grid {
        Grid::new(1, n).unwrap()
    }

    #[test]
    fn h_closed_forms() {
        let g = g1(8);
        assert_eq!(sup_norm(&h_of_rho(&Field::constant(g, 1.0), 1.0).unwrap()), 0.0);
        assert!((h_value(E - 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((h_value(1.0, 2.0) - 1.0).abs() < 1e-15);
        assert!(h_of_rho(&Field::constant(g, 0.0), 1.0).is_err());
        for gamma in [1.0, 1.4, 2.0] {
            for r in [-0.5, -1e-4, 1e-6, 0.3] {
                assert!(h_value(r, gamma) >= 0.0);
            }
        }
    }

    #[test]
    fn h_equivalence_bounds() {
        for gamma in [1.0, 2.0] {
            let (lo, hi) = h_equivalence_interval(gamma, 0.1, 1000);
            assert!(lo > 0.0 && hi.is_finite() && lo <= hi);
            // h''(1)/2 = γ/2
            assert!(lo <= 0.5 * gamma && 0.5 * gamma <= hi);
        }
    }

    #[test]
    fn stream_function_single_mode_and_mean_check() {
        let g = g1(32);
        let rho = Field::from_fn(g, |x| 1.0 + 0.1 * (2.0 * PI * x[0]).cos()).unwrap();
        let psi = stream_function(&rho).unwrap().psi;
        let want = Field::from_fn(g, |x| 0.1 * (2.0 * PI * x[0]).cos() / (4.0 * PI * PI)).unwrap();
        assert!(psi.max_abs_diff(&want) < 1e-15);
        assert!(psi.integral().abs() < 1e-17);
        assert!(matches!(
            stream_function(&Field::constant(g, 1.1)),
            Err(Error::NonzeroMean { .. })
        ));
    }

    #[test]
    fn v_epsilon_at_unit_density() {
        let g = g1(32);
        let u = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let s = PrimitiveState::new(Field::constant(g, 1.0), VectorField::new(vec![u]).unwrap(), 0.0).unwrap();
        let v = v_epsilon(&s, 0.05, 1.4).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn v_epsilon_equivalent_to_energy_on_ensemble() {
        let g = g1(64);
        let p = ModelParams::new(1.0, 0.0, 0.5, None, 1).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for seed in 0..50 {
            let s = make_perturbation_ic(g, 0.05, seed, 8, &p).unwrap();
            let v = v_epsilon(&s, 0.05, 1.0).unwrap();
            let rho = s.rho.values();
            let ke2 = integral_of_product(rho, &s.u.norm_sq_pointwise());
            let l2 = rho.iter().map(|r| (r - 1.0).powi(2)).sum::<f64>() / rho.len() as f64;
            let q = v / (ke2 + l2);
            lo = lo.min(q);
            hi = hi.max(q);
        }
        let c1 = hi.max(1.0 / lo);
        assert!(lo > 0.0 && c1 < 10.0, "C1 = {c1}");
    }

    #[test]
    fn decay_fit_synthetic() {
        let s: Vec<(f64, f64)> = (0..50)
            .map(|i| (i as f64 * 0.1, 3.0 * (-2.0 * i as f64 * 0.1).exp()))
            .collect();
        let f = fit_decay_rate(&s, 0.0).unwrap();
        assert!((f.mu - 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let c: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 5.0)).collect();
        let f = fit_decay_rate(&c, 0.0).unwrap();
        assert_eq!(f.mu, 0.0);
        let mut bad = s.clone();
        bad[10].1 = 0.0;
        assert!(matches!(
            fit_decay_rate(&bad, 0.0),
            Err(Error::NonPositiveSeries { .. })
        ));
        let f = fit_decay_rate_above(&s, 0.0, 1e-2).unwrap();
        assert!(f.t_end < 2.4);
    }

    #[test]
    fn steady_state_diagnostics() {
        let g = g1(32);
        let p = ModelParams::new(1.0, 0.5, 0.5, None, 1).unwrap();
        let k = KernelSpec::new(FractionalExponent::new(0.5).unwrap(), 1).unwrap();
        let d = Diagnostics::new(g, p, &k, DiagnosticsSettings::default()).unwrap();
        let r = d.record(0, &SigmaState::steady(g)).unwrap();
        assert_eq!(r.mass, 1.0);
        assert_eq!(r.energy(), 0.0);
        assert_eq!(r.w_eps, 0.0);
        assert_eq!(r.y, 0.0);
        let recs = vec![r; 5];
        assert!(energy_law_residual(&recs, 0.0)
            .unwrap_err()
            .to_string()
            .contains("cadence"));
        let recs: Vec<_> = (0..5).map(|i| DiagnosticsRecord { t: i as f64, ..r }).collect();
        assert_eq!(energy_law_residual(&recs, 0.0).unwrap(), 0.0);
        let s = smallness_monitor(&recs, 1e-6);
        assert!(s.ratio.is_none() && s.y_nonincreasing);
        assert!(matches!(
            energy_law_residual(&recs[..2], 0.0),
            Err(Error::InsufficientRecords { .. })
        ));
    }

    #[test]
    fn w_epsilon_matches_time_derivative_of_v_epsilon() {
        let g = g1(64);
        let p = ModelParams::new(1.4, 0.3, 0.5, None, 1).unwrap();
        let k = KernelSpec::new(FractionalExponent::new(0.5).unwrap(), 1).unwrap();
        let d = Diagnostics::new(g, p, &k, DiagnosticsSettings { eps: 0.2, eps_y: 0.01 }).unwrap();
        let ic = make_perturbation_ic(g, 0.05, 5, 4, &p).unwrap().to_sigma(1.4).unwrap();
        let dt = 1e-3;
        let cfg = StepConfig {
            scheme: Scheme::EtdRk4,
            dt,
            t_end: 4.0 * dt,
            adaptive: false,
            ..Default::default()
        };
        let mut recs = Vec::new();
        let mut obs = |k: usize, s: &SigmaState, _: &crate::integrator::Monitors| -> Result<()> {
            recs.push(d.record(k as u64, s)?);
            Ok(())
        };
        run(&ic, &p, &cfg, 1, &mut obs).unwrap();
        let v: Vec<f64> = recs.iter().map(|r| r.v_eps).collect();
        let dv = (v[0] - 8.0 * v[1] + 8.0 * v[3] - v[4]) / (12.0 * dt);
        let w = recs[2].w_eps;
        assert!((dv + w).abs() < 1e-3 * w.abs(), "dV/dt {dv} vs W {w}");
    }

    #[test]
    fn coercivity_on_random_states() {
        let g = g1(64);
        let p = ModelParams::new(1.0, 0.0, 0.5, None, 1).unwrap();
        let k = KernelSpec::new(FractionalExponent::new(0.5).unwrap(), 1).unwrap();
        let table = periodized_kernel(&k, g).unwrap();
        for seed in 0..10 {
            let s = make_perturbation_ic(g, 0.05, seed, 8, &p).unwrap();
            let c = coercivity_check(&s, &table).unwrap();
            assert!(c.margin >= 1.0 && c.sharp_margin >= 1.0, "{c:?}");
        }
    }
}
