//! The singular communication kernel `φ(x) = c_α |x|^{-N-2α}`, its periodized
//! lattice sum, and the two realizations of the alignment force: the direct
//! pairwise quadrature and the spectral commutator form.
//!
//! The grid quadratures omit the singular offsets and add back the missing
//! near-field mass with a zeta-function correction (the rectangle rule
//! applied to a homogeneous function misses a term proportional to the
//! analytically continued lattice sum). Without it the punctured sum has an
//! `O(h^{2-2α})` error, too slow to cross-validate the spectral operator.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::special::{gamma, gauss_legendre, hurwitz_zeta, lattice_zeta};
use crate::spectral::{dealiased_product, fractional_laplacian, Field, FractionalExponent, Grid, VectorField};
use crate::state::PrimitiveState;
use crate::stencil;

/// `c_α = 2^{2α} Γ(α + N/2) / (π^{N/2} |Γ(-α)|)`.
pub fn kernel_constant(alpha: FractionalExponent, dim: usize) -> f64 {
    let a = alpha.get();
    let n = dim as f64;
    4f64.powf(a) * gamma(a + 0.5 * n) / (PI.powf(0.5 * n) * gamma(-a).abs())
}

/// Kernel and quadrature parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    alpha: FractionalExponent,
    dim: usize,
    c_alpha: f64,
    shells: usize,
    max_shells: usize,
    tolerance: f64,
    pv_epsilon: f64,
}

impl KernelSpec {
    pub const DEFAULT_SHELLS: usize = 32;
    pub const DEFAULT_MAX_SHELLS: usize = 1024;

    pub fn new(alpha: FractionalExponent, dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} unsupported")));
        }
        Ok(KernelSpec {
            alpha,
            dim,
            c_alpha: kernel_constant(alpha, dim),
            shells: Self::DEFAULT_SHELLS,
            max_shells: Self::DEFAULT_MAX_SHELLS,
            tolerance: if dim == 1 { 1e-8 } else { 1e-6 },
            pv_epsilon: 0.0,
        })
    }

    /// Initial number of image shells `K` (at least 1).
    pub fn with_shells(mut self, shells: usize) -> Result<Self> {
        if shells == 0 {
            return Err(Error::param("shells", "must be at least 1"));
        }
        self.shells = shells;
        self.max_shells = self.max_shells.max(shells);
        Ok(self)
    }

    pub fn with_max_shells(mut self, max_shells: usize) -> Result<Self> {
        if max_shells < self.shells {
            return Err(Error::param("max_shells", "below the initial shell count"));
        }
        self.max_shells = max_shells;
        Ok(self)
    }

    /// Relative tolerance on the lattice-sum residual.
    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    /// Exclusion radius in grid units: offsets with `|z| ≤ pv_epsilon·h` are
    /// dropped from the quadratures (the origin always is) and accounted for
    /// by the near-field correction.
    pub fn with_pv_epsilon(mut self, pv_epsilon: f64) -> Result<Self> {
        if !(0.0..8.0).contains(&pv_epsilon) {
            return Err(Error::param("pv_epsilon", "must lie in [0, 8)"));
        }
        self.pv_epsilon = pv_epsilon;
        Ok(self)
    }

    pub fn alpha(&self) -> FractionalExponent {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c_alpha(&self) -> f64 {
        self.c_alpha
    }

    pub fn shells(&self) -> usize {
        self.shells
    }

    pub fn max_shells(&self) -> usize {
        self.max_shells
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn pv_epsilon(&self) -> f64 {
        self.pv_epsilon
    }

    fn exponent(&self) -> f64 {
        self.dim as f64 + 2.0 * self.alpha.get()
    }
}

/// Raw image sum `Σ_{‖k‖_∞ ≤ K} φ(x + k)`. Increases with `K`.
pub fn lattice_partial_sum(spec: &KernelSpec, x: [f64; 2], shells: usize) -> f64 {
    let p = spec.exponent();
    let k = shells as i64;
    let mut sum = 0.0;
    match spec.dim {
        1 => {
            for m in -k..=k {
                sum += (x[0] + m as f64).abs().powf(-p);
            }
        }
        _ => {
            for a in -k..=k {
                let dx = x[0] + a as f64;
                for b in -k..=k {
                    let dy = x[1] + b as f64;
                    sum += (dx * dx + dy * dy).powf(-0.5 * p);
                }
            }
        }
    }
    spec.c_alpha * sum
}

/// Integral bound on the images beyond `K` shells, for `‖x‖_∞ ≤ 1/2`.
pub fn tail_bound(spec: &KernelSpec, shells: usize) -> f64 {
    let a = spec.alpha.get();
    let r = shells as f64 - 0.5;
    match spec.dim {
        1 => spec.c_alpha * r.powf(-2.0 * a) / a,
        _ => spec.c_alpha * 2.0 * PI * (r - 0.5).powf(-2.0 * a) / a,
    }
}

/// Asymptotic value of the images beyond `K` shells.
fn tail_estimate(spec: &KernelSpec, x: [f64; 2], shells: usize) -> f64 {
    let p = spec.exponent();
    let k = shells as f64;
    match spec.dim {
        // exact: Hurwitz zeta sums of the two half-lattices
        1 => spec.c_alpha * (hurwitz_zeta(p, k + 1.0 + x[0]) + hurwitz_zeta(p, k + 1.0 - x[0])),
        _ => {
            // Midpoint rule on unit cells centred at the images: each image
            // value equals its cell integral minus 1/24 of the cell integral
            // of the Laplacian, up to fourth-order terms. In polar form,
            // ∫_{ext Q} r^{-p} = (1/(p-2)) ∮ R^{2-p} and
            // ∫_{ext Q} Δ r^{-p} = p ∮ R^{-p}, R(θ) the distance to ∂Q.
            let lo = [x[0] - k - 0.5, x[1] - k - 0.5];
            let hi = [x[0] + k + 0.5, x[1] + k + 0.5];
            let q0 = boundary_moment(lo, hi, p - 2.0);
            let q2 = boundary_moment(lo, hi, p);
            spec.c_alpha * (q0 / (p - 2.0) - p * q2 / 24.0)
        }
    }
}

/// `∮ R(θ)^{-q} dθ` for the rectangle `[lo, hi]` containing the origin.
/// Each edge is integrated in its own coordinate, where the integrand is
/// smooth: along `x = X`, `dθ = |X| dy / (X² + y²)`.
fn boundary_moment(lo: [f64; 2], hi: [f64; 2], q: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(24);
    let edge = |d: f64, a: f64, b: f64| -> f64 {
        // split at the foot of the perpendicular for a well-shaped integrand
        let mut total = 0.0;
        for (s, e) in [(a, a.max(b.min(0.0))), (a.max(b.min(0.0)), b)] {
            if e <= s {
                continue;
            }
            let (mid, half) = (0.5 * (s + e), 0.5 * (e - s));
            for (t, w) in nodes.iter().zip(&weights) {
                let y = mid + half * t;
                let r2 = d * d + y * y;
                total += w * half * d.abs() * r2.powf(-0.5 * (q + 2.0));
            }
        }
        total
    };
    edge(lo[0], lo[1], hi[1]) + edge(hi[0], lo[1], hi[1]) + edge(lo[1], lo[0], hi[0]) + edge(hi[1], lo[0], hi[0])
}

/// `φ_P(x)` from `K` shells plus the tail estimate.
pub fn periodized_value(spec: &KernelSpec, x: [f64; 2], shells: usize) -> f64 {
    lattice_partial_sum(spec, x, shells) + tail_estimate(spec, x, shells)
}

/// Tabulated `φ_P` on the grid offsets, together with the quadrature
/// weights and near-field coefficient used by the pairwise sums.
#[derive(Debug, Clone)]
pub struct KernelTable {
    spec: KernelSpec,
    grid: Grid,
    values: Vec<f64>,
    offsets: Vec<([usize; 2], f64)>,
    phi_min: f64,
    phi_min_offset: [f64; 2],
    shells: usize,
    residual: f64,
    near_field: f64,
}

/// Canonical representative of offset index `i` in `[0, 1/2]`, chosen so that
/// `±x` map to the same bits.
fn folded(i: usize, n: usize) -> f64 {
    i.min(n - i) as f64 / n as f64
}

fn folded_offset(grid: Grid, idx: usize) -> [f64; 2] {
    let [i, j] = grid.index(idx);
    match grid.dim() {
        1 => [folded(i, grid.n()), 0.0],
        _ => {
            let (a, b) = (folded(i, grid.n()), folded(j, grid.n()));
            // the square lattice is also symmetric under swapping axes
            [a.max(b), a.min(b)]
        }
    }
}

fn integer_radius_sq(grid: Grid, idx: usize) -> i64 {
    let n = grid.n();
    let [i, j] = grid.index(idx);
    let a = i.min(n - i) as i64;
    let b = if grid.dim() == 2 { j.min(n - j) as i64 } else { 0 };
    a * a + b * b
}

fn is_excluded(spec: &KernelSpec, grid: Grid, idx: usize) -> bool {
    let r2 = integer_radius_sq(grid, idx) as f64;
    r2 == 0.0 || r2 <= spec.pv_epsilon * spec.pv_epsilon
}

/// Builds the table, doubling `K` from `spec.shells()` until the relative
/// change between `K` and `2K` at probe offsets is within tolerance.
pub fn periodized_kernel(spec: &KernelSpec, grid: Grid) -> Result<KernelTable> {
    if grid.dim() != spec.dim {
        return Err(Error::GridMismatch);
    }
    let h = grid.h();
    let probes: Vec<[f64; 2]> = match spec.dim {
        1 => vec![[h, 0.0], [0.25, 0.0], [0.5, 0.0]],
        _ => vec![[h, 0.0], [0.5, 0.0], [0.5, 0.5], [0.25, 0.125]],
    };
    let mut shells = spec.shells;
    let mut residual;
    loop {
        residual = probes
            .iter()
            .map(|&x| {
                let a = periodized_value(spec, x, shells);
                let b = periodized_value(spec, x, 2 * shells);
                ((a - b) / b).abs()
            })
            .fold(0.0, f64::max);
        if residual <= spec.tolerance {
            break;
        }
        if 2 * shells > spec.max_shells {
            return Err(Error::KernelTolerance {
                tolerance: spec.tolerance,
                max_shells: spec.max_shells,
                estimate: residual,
            });
        }
        shells *= 2;
    }

    // Only distinct folded offsets are evaluated.
    let mut cache: std::collections::HashMap<(u64, u64), f64> = std::collections::HashMap::new();
    let reps: Vec<[f64; 2]> = (0..grid.len()).map(|i| folded_offset(grid, i)).collect();
    let mut unique: Vec<[f64; 2]> = Vec::new();
    for (idx, r) in reps.iter().enumerate() {
        if idx != 0 && !cache.contains_key(&(r[0].to_bits(), r[1].to_bits())) {
            cache.insert((r[0].to_bits(), r[1].to_bits()), 0.0);
            unique.push(*r);
        }
    }
    let computed = Exec::default().map_slice(&unique, |&x| periodized_value(spec, x, shells));
    for (x, v) in unique.iter().zip(computed) {
        cache.insert((x[0].to_bits(), x[1].to_bits()), v);
    }
    let values: Vec<f64> = reps
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            if idx == 0 {
                0.0
            } else {
                cache[&(r[0].to_bits(), r[1].to_bits())]
            }
        })
        .collect();

    let (mut phi_min, mut phi_min_offset) = (f64::INFINITY, [0.0; 2]);
    for (idx, &v) in values.iter().enumerate().skip(1) {
        if v < phi_min {
            phi_min = v;
            phi_min_offset = grid.point(idx);
        }
    }

    let vol = grid.cell_volume();
    let mut offsets = Vec::with_capacity(grid.len());
    let mut excluded_moment = 0.0;
    let q = 2.0 - spec.exponent();
    for idx in 0..grid.len() {
        if is_excluded(spec, grid, idx) {
            let r2 = integer_radius_sq(grid, idx);
            if r2 > 0 {
                excluded_moment += (r2 as f64).powf(0.5 * q);
            }
        } else {
            offsets.push((grid.index(idx), values[idx] * vol));
        }
    }
    let a = spec.alpha.get();
    let near_field = spec.c_alpha * h.powf(2.0 - 2.0 * a) / spec.dim as f64
        * (lattice_zeta(spec.dim, spec.exponent() - 2.0) - excluded_moment);

    Ok(KernelTable {
        spec: *spec,
        grid,
        values,
        offsets,
        phi_min,
        phi_min_offset,
        shells,
        residual,
        near_field,
    })
}

impl KernelTable {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `φ_P` at every offset; the origin entry is 0.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn phi_min(&self) -> f64 {
        self.phi_min
    }

    pub fn phi_min_offset(&self) -> [f64; 2] {
        self.phi_min_offset
    }

    /// Number of image shells actually used.
    pub fn shells(&self) -> usize {
        self.shells
    }

    /// Relative lattice-sum residual between `K` and `2K` shells.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Coefficient `κ` such that the punctured rectangle rule applied to
    /// `g(z) ≈ zᵀAz` overshoots the integral by `κ·tr A`.
    pub fn near_field_coefficient(&self) -> f64 {
        self.near_field
    }

    /// `Σ_z w_z F(x, x + z)` for every `x`, parallel over `x`.
    pub(crate) fn pair_sum(&self, exec: Exec, f: impl Fn(usize, usize) -> f64 + Sync) -> Vec<f64> {
        let grid = self.grid;
        let n = grid.n();
        exec.map_range(grid.len(), |x| {
            let [xi, xj] = grid.index(x);
            let mut acc = 0.0;
            for &([zi, zj], w) in &self.offsets {
                let yi = if xi + zi >= n { xi + zi - n } else { xi + zi };
                let y = match grid.dim() {
                    1 => yi,
                    _ => yi * n + if xj + zj >= n { xj + zj - n } else { xj + zj },
                };
                acc += w * f(x, y);
            }
            acc
        })
    }
}

fn check_grid(state: &PrimitiveState, table: &KernelTable) -> Result<()> {
    if state.grid() != table.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Momentum source `ρ(x) A(x) = -ρ(x) ∫φ_P(x-y)(u(x)-u(y))ρ(y) dy` per
/// component, with the near-field correction written in flux form so the
/// grid sum of each component telescopes.
pub(crate) fn momentum_source(state: &PrimitiveState, table: &KernelTable, exec: Exec) -> Vec<Vec<f64>> {
    let grid = table.grid;
    let rho = state.rho.values();
    let rho_sq: Vec<f64> = rho.iter().map(|r| r * r).collect();
    let kappa = table.near_field;
    state
        .u
        .components()
        .iter()
        .map(|comp| {
            let u = comp.values();
            let q = table.pair_sum(exec, |x, y| (u[x] - u[y]) * rho[y]);
            let corr = stencil::div_coef_grad(&rho_sq, u, grid);
            q.iter()
                .zip(&corr)
                .zip(rho)
                .map(|((q, c), r)| -r * q - 0.5 * kappa * c)
                .collect()
        })
        .collect()
}

/// `A(x) = -∫φ_P(x-y)(u(x)-u(y))ρ(y) dy` by the pairwise quadrature.
pub fn alignment_force_convolution(state: &PrimitiveState, table: &KernelTable) -> Result<VectorField> {
    alignment_force_convolution_with(state, table, Exec::default())
}

pub fn alignment_force_convolution_with(
    state: &PrimitiveState,
    table: &KernelTable,
    exec: Exec,
) -> Result<VectorField> {
    check_grid(state, table)?;
    let grid = table.grid;
    let rho = state.rho.values();
    let comps = momentum_source(state, table, exec)
        .into_iter()
        .map(|m| Field::new(grid, m.iter().zip(rho).map(|(m, r)| m / r).collect()))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps)
}

/// `max_a |∫ρ A_a| / (‖ρ‖_∞ ‖u‖_∞)`; zero for zero velocity.
pub fn momentum_neutrality_residual(state: &PrimitiveState, force: &VectorField) -> f64 {
    let rho = state.rho.values();
    let rho_inf = state.rho.max();
    let u_inf = state
        .u
        .components()
        .iter()
        .map(crate::spectral::sup_norm)
        .fold(0.0, f64::max);
    if u_inf == 0.0 {
        return 0.0;
    }
    force
        .components()
        .iter()
        .map(|a| {
            let s: f64 = a.values().iter().zip(rho).map(|(a, r)| a * r).sum();
            (s / rho.len() as f64).abs()
        })
        .fold(0.0, f64::max)
        / (rho_inf * u_inf)
}

/// `F = -L^{2α}u - L^{2α}((ρ-1)u) + u·L^{2α}(ρ-1)`, all spectral, products
/// dealiased.
pub fn alignment_force_commutator(state: &PrimitiveState, alpha: FractionalExponent) -> Result<VectorField> {
    let r = state.rho.map(|v| v - 1.0)?;
    let lr = fractional_laplacian(&r, alpha);
    let comps = state
        .u
        .components()
        .iter()
        .map(|u| {
            let lu = fractional_laplacian(u, alpha);
            let lru = fractional_laplacian(&dealiased_product(&r, u)?, alpha);
            let ulr = dealiased_product(u, &lr)?;
            Field::new(
                u.grid(),
                lu.values()
                    .iter()
                    .zip(lru.values())
                    .zip(ulr.values())
                    .map(|((a, b), c)| -a - b + c)
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps)
}

/// `½∬φ_P(x-y)|u(x)-u(y)|² ρ(x)ρ(y)` by the pairwise quadrature with the
/// near-field correction.
pub fn alignment_dissipation(state: &PrimitiveState, table: &KernelTable) -> Result<f64> {
    alignment_dissipation_with(state, table, Exec::default())
}

pub fn alignment_dissipation_with(state: &PrimitiveState, table: &KernelTable, exec: Exec) -> Result<f64> {
    check_grid(state, table)?;
    let grid = table.grid;
    let rho = state.rho.values();
    let comps: Vec<&[f64]> = state.u.components().iter().map(|c| c.values()).collect();
    let q = table.pair_sum(exec, |x, y| {
        let d2: f64 = comps.iter().map(|u| (u[x] - u[y]).powi(2)).sum();
        d2 * rho[y]
    });
    let mut grad_sq = vec![0.0; grid.len()];
    for u in &comps {
        for axis in 0..grid.dim() {
            for (g, d) in grad_sq.iter_mut().zip(stencil::d1(u, grid, axis)) {
                *g += d * d;
            }
        }
    }
    let kappa = table.near_field;
    let total: f64 = (0..grid.len())
        .map(|x| rho[x] * q[x] - kappa * rho[x] * rho[x] * grad_sq[x])
        .sum();
    Ok(0.5 * total * grid.cell_volume())
}
