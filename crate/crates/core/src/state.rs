//! Model parameters, the two equivalent state representations `(ρ, u)` and
//! `(σ, u)`, the exact change of variables between them, and initial data.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{sobolev_norm, Field, FractionalExponent, Grid, VectorField};

/// Which terms of the momentum balance are active. Everything is on by
/// default; switching terms off is used for linear tests and for the
/// shock-formation contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TermSwitches {
    pub advection: bool,
    pub pressure: bool,
    /// The whole alignment force, linear part included.
    pub alignment: bool,
    /// Only the commutator part `-L^{2α}((ρ-1)u) + u L^{2α}(ρ-1)`.
    pub commutator: bool,
}

impl Default for TermSwitches {
    fn default() -> Self {
        TermSwitches {
            advection: true,
            pressure: true,
            alignment: true,
            commutator: true,
        }
    }
}

impl TermSwitches {
    /// Only the stiff linear part `-(β + L^{2α})u` remains.
    pub fn stiff_only() -> Self {
        TermSwitches {
            advection: false,
            pressure: false,
            alignment: true,
            commutator: false,
        }
    }
}

/// Pressure exponent, damping, alignment exponent and regularity index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: FractionalExponent,
    pub s: f64,
    pub terms: TermSwitches,
}

impl ModelParams {
    /// `s` defaults to `N/2 + max{1, 2α} + 0.51`.
    pub fn new(gamma: f64, beta: f64, alpha: f64, s: Option<f64>, dim: usize) -> Result<Self> {
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::param("gamma", format!("{gamma} < 1")));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::param("beta", format!("{beta} < 0")));
        }
        let alpha = FractionalExponent::new(alpha)?;
        let s = s.unwrap_or_else(|| Self::default_s(alpha, dim));
        Ok(ModelParams {
            gamma,
            beta,
            alpha,
            s,
            terms: TermSwitches::default(),
        })
    }

    pub fn default_s(alpha: FractionalExponent, dim: usize) -> f64 {
        Self::critical_s(alpha, dim) + 0.51
    }

    /// `N/2 + max{1, 2α}`.
    pub fn critical_s(alpha: FractionalExponent, dim: usize) -> f64 {
        dim as f64 / 2.0 + f64::max(1.0, 2.0 * alpha.get())
    }

    /// A warning when `s` is at or below the well-posedness threshold. Only
    /// the diagnostics depend on `s`, so this never fails a run.
    pub fn regularity_warning(&self, dim: usize) -> Option<String> {
        let crit = Self::critical_s(self.alpha, dim);
        (self.s <= crit).then(|| {
            format!(
                "s = {} does not exceed N/2 + max(1, 2 alpha) = {crit}; H^s monitors may be meaningless",
                self.s
            )
        })
    }

    pub fn with_terms(mut self, terms: TermSwitches) -> Self {
        self.terms = terms;
        self
    }

    /// Acoustic coefficient `(γ-1)/2 σ + √γ`.
    #[inline]
    pub fn acoustic_coefficient(&self, sigma: f64) -> f64 {
        0.5 * (self.gamma - 1.0) * sigma + self.gamma.sqrt()
    }
}

/// `σ(ρ)`, pointwise. Uses `expm1` so that `σ` stays accurate near `ρ = 1`.
#[inline]
pub fn sigma_value(rho: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        rho.ln()
    } else {
        2.0 * gamma.sqrt() / (gamma - 1.0) * (0.5 * (gamma - 1.0) * rho.ln()).exp_m1()
    }
}

/// Base `(γ-1)/(2√γ) σ + 1` of the inverse map; must be positive for `γ > 1`.
#[inline]
pub fn sigma_base(sigma: f64, gamma: f64) -> f64 {
    (gamma - 1.0) / (2.0 * gamma.sqrt()) * sigma + 1.0
}

/// `ρ(σ) - 1`, accurate for small `σ`. NaN on vacuum.
#[inline]
pub fn rho_minus_one_value(sigma: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        sigma.exp_m1()
    } else {
        let b = (gamma - 1.0) / (2.0 * gamma.sqrt()) * sigma;
        if b <= -1.0 {
            return f64::NAN;
        }
        (2.0 / (gamma - 1.0) * b.ln_1p()).exp_m1()
    }
}

#[inline]
pub fn rho_value(sigma: f64, gamma: f64) -> f64 {
    1.0 + rho_minus_one_value(sigma, gamma)
}

/// `σ = ln ρ` (`γ = 1`) or `2√γ/(γ-1) (ρ^{(γ-1)/2} - 1)`.
pub fn sigma_of_rho(rho: &Field, gamma: f64) -> Result<Field> {
    if let Some((index, &value)) = rho.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveDensity { index, value });
    }
    rho.map(|r| sigma_value(r, gamma))
}

/// Inverse of [`sigma_of_rho`]. Fails where the power base is non-positive.
pub fn rho_of_sigma(sigma: &Field, gamma: f64) -> Result<Field> {
    if gamma > 1.0 {
        if let Some((index, base)) = sigma
            .values()
            .iter()
            .map(|&s| sigma_base(s, gamma))
            .enumerate()
            .find(|(_, b)| !(*b > 0.0))
        {
            return Err(Error::Vacuum { index, base });
        }
    }
    sigma.map(|s| rho_value(s, gamma))
}

/// Density and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveState {
    pub rho: Field,
    pub u: VectorField,
    pub t: f64,
}

/// Symmetrizing density variable and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaState {
    pub sigma: Field,
    pub u: VectorField,
    pub t: f64,
}

fn check_shared(a: &Field, u: &VectorField) -> Result<()> {
    if a.grid() == u.grid() {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

impl PrimitiveState {
    pub fn new(rho: Field, u: VectorField, t: f64) -> Result<Self> {
        check_shared(&rho, &u)?;
        if let Some((index, &value)) = rho.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::NonPositiveDensity { index, value });
        }
        Ok(PrimitiveState { rho, u, t })
    }

    /// `ρ ≡ 1`, `u ≡ 0`.
    pub fn steady(grid: Grid) -> Self {
        PrimitiveState {
            rho: Field::constant(grid, 1.0),
            u: VectorField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.rho.grid()
    }

    pub fn to_sigma(&self, gamma: f64) -> Result<SigmaState> {
        Ok(SigmaState {
            sigma: sigma_of_rho(&self.rho, gamma)?,
            u: self.u.clone(),
            t: self.t,
        })
    }

    /// `∫ ρ u dx`, per component.
    pub fn momentum(&self) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (a, c) in self.u.components().iter().enumerate() {
            out[a] = weighted_integral(&self.rho, c);
        }
        out
    }
}

impl SigmaState {
    pub fn new(sigma: Field, u: VectorField, t: f64) -> Result<Self> {
        check_shared(&sigma, &u)?;
        Ok(SigmaState { sigma, u, t })
    }

    pub fn steady(grid: Grid) -> Self {
        SigmaState {
            sigma: Field::zeros(grid),
            u: VectorField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> Grid {
        self.sigma.grid()
    }

    pub fn to_primitive(&self, gamma: f64) -> Result<PrimitiveState> {
        Ok(PrimitiveState {
            rho: rho_of_sigma(&self.sigma, gamma)?,
            u: self.u.clone(),
            t: self.t,
        })
    }

    /// `ρ(σ) - 1` as a field, computed without cancellation.
    pub fn rho_minus_one(&self, gamma: f64) -> Result<Field> {
        if gamma > 1.0 {
            rho_of_sigma(&self.sigma, gamma)?;
        }
        self.sigma.map(|s| rho_minus_one_value(s, gamma))
    }

    /// `(‖σ‖²_{H^s} + ‖u‖²_{H^s})^{1/2}`.
    pub fn hs_norm(&self, s: f64) -> f64 {
        let mut acc = sobolev_norm(&self.sigma, s).powi(2);
        for c in self.u.components() {
            acc += sobolev_norm(c, s).powi(2);
        }
        acc.sqrt()
    }
}

fn weighted_integral(w: &Field, f: &Field) -> f64 {
    w.values().iter().zip(f.values()).map(|(a, b)| a * b).sum::<f64>() / w.values().len() as f64
}

/// Random real band-limited field with `1 ≤ |m|_∞ ≤ mode_cap`, zero mean,
/// coefficient weights `(1 + |m|²)^{-1}`, normalized to unit L².
pub fn random_band_limited(grid: Grid, mode_cap: usize, rng: &mut ChaCha8Rng) -> Field {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    let cap = mode_cap as i64;
    for idx in 0..grid.len() {
        let m = grid.mode(idx);
        let upper = m[0] > 0 || (m[0] == 0 && m[1] > 0);
        if !upper || m[0].abs() > cap || m[1].abs() > cap || grid.is_nyquist(idx) {
            continue;
        }
        let w = 1.0 / (1.0 + (m[0] * m[0] + m[1] * m[1]) as f64);
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let z = Complex64::new(re, im) * w;
        coeffs[idx] = z;
        coeffs[grid.flat(-m[0], -m[1])] = z.conj();
    }
    let norm: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in &mut coeffs {
            *c /= norm;
        }
    }
    Field::from_spectrum(grid, &coeffs)
}

/// Subtracts the mass-weighted mean so that `∫ ρ u = 0`.
fn remove_momentum(rho: &Field, u: &Field) -> Field {
    let mass = rho.integral();
    let c = weighted_integral(rho, u) / mass;
    u.map_raw(|v| v - c)
}

/// Random band-limited perturbation of `ρ ≡ 1, u ≡ 0` with `mean(ρ) = 1`,
/// `∫ ρ u = 0`, and `‖σ₀‖²_{H^s} + ‖u₀‖²_{H^s} = δ²`. Deterministic in `seed`.
pub fn make_perturbation_ic(
    grid: Grid,
    delta: f64,
    seed: u64,
    mode_cap: usize,
    params: &ModelParams,
) -> Result<PrimitiveState> {
    if !(delta >= 0.0) {
        return Err(Error::param("delta", format!("{delta} < 0")));
    }
    if mode_cap < 1 || mode_cap >= grid.n() / 2 {
        return Err(Error::param("mode_cap", format!("{mode_cap} outside [1, n/2)")));
    }
    if delta == 0.0 {
        return Ok(PrimitiveState::steady(grid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = random_band_limited(grid, mode_cap, &mut rng);
    let base_u: Vec<Field> = (0..grid.dim())
        .map(|_| random_band_limited(grid, mode_cap, &mut rng))
        .collect();

    let build = |amp: f64| -> Result<PrimitiveState> {
        let rho = q.map_raw(|v| 1.0 + amp * v);
        let comps = base_u.iter().map(|c| remove_momentum(&rho, &c.scale(amp))).collect();
        PrimitiveState::new(rho, VectorField::new(comps)?, 0.0)
    };
    let norm_at = |amp: f64| -> Result<f64> { Ok(build(amp)?.to_sigma(params.gamma)?.hs_norm(params.s)) };

    let q_min = q.min();
    let amp_max = if q_min < 0.0 { -1.0 / q_min } else { f64::INFINITY };
    // bracket [lo, hi] with norm(lo) < delta <= norm(hi)
    let mut lo = 0.0;
    let mut hi = delta / norm_at(1e-8)? * 1e-8;
    loop {
        if hi >= amp_max {
            hi = amp_max * (1.0 - 1e-12);
            if norm_at(hi)? < delta {
                return Err(Error::PerturbationTooLarge {
                    rho_min: 1.0 + hi * q_min,
                });
            }
            break;
        }
        if norm_at(hi)? >= delta {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid)? < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let amp = if (norm_at(lo)? - delta).abs() < (norm_at(hi)? - delta).abs() {
        lo
    } else {
        hi
    };
    let state = build(amp)?;
    if state.rho.min() <= 0.0 {
        return Err(Error::PerturbationTooLarge {
            rho_min: state.rho.min(),
        });
    }
    Ok(state)
}

/// Deterministic single-wave data along x: `ρ = 1 + a cos 2πx`,
/// `u = b sin 2πx` (first component) with the momentum removed.
pub fn make_wave_ic(grid: Grid, rho_amplitude: f64, u_amplitude: f64) -> Result<PrimitiveState> {
    use std::f64::consts::PI;
    let rho = Field::from_fn(grid, |x| 1.0 + rho_amplitude * (2.0 * PI * x[0]).cos())?;
    let raw = Field::from_fn(grid, |x| u_amplitude * (2.0 * PI * x[0]).sin())?;
    let mut comps = vec![remove_momentum(&rho, &raw)];
    for _ in 1..grid.dim() {
        comps.push(Field::zeros(grid));
    }
    PrimitiveState::new(rho, VectorField::new(comps)?, 0.0)
}
