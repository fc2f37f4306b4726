//! Right-hand sides of the two formulations.
//!
//! The `(σ, u)` form is the production path. Its state lives in Fourier
//! space as [`Modes`]; quadratic and transcendental terms are formed on the
//! 3/2-padded grid and truncated back. The linear part `-(β + |k|^{2α})û` is
//! kept separate for the exponential integrators.
//!
//! The conservative `(ρ, m = ρu)` form is a validation path whose discrete
//! mass and momentum budgets close exactly.

use num_complex::Complex64;

use crate::alignment::{momentum_source, periodized_kernel, KernelSpec, KernelTable};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::spectral::fft;
use crate::spectral::{Field, Grid, VectorField};
use crate::state::{rho_minus_one_value, sigma_base, ModelParams, PrimitiveState, SigmaState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Spectral coefficients of a multi-field state: the density variable
/// followed by the velocity (or momentum) components.
#[derive(Debug, Clone, PartialEq)]
pub struct Modes {
    pub fields: Vec<Vec<Complex64>>,
}

impl Modes {
    pub fn zeros(fields: usize, len: usize) -> Self {
        Modes {
            fields: vec![vec![ZERO; len]; fields],
        }
    }

    /// `self += a·x`.
    pub fn axpy(&mut self, a: f64, x: &Modes) {
        for (f, g) in self.fields.iter_mut().zip(&x.fields) {
            for (c, d) in f.iter_mut().zip(g) {
                *c += d * a;
            }
        }
    }

    /// `Σ a_i x_i`.
    pub fn combine(terms: &[(f64, &Modes)]) -> Modes {
        let (a0, x0) = terms[0];
        let mut out = x0.clone();
        for f in &mut out.fields {
            for c in f.iter_mut() {
                *c *= a0;
            }
        }
        for &(a, x) in &terms[1..] {
            out.axpy(a, x);
        }
        out
    }

    pub fn clear_nyquist(&mut self, grid: Grid) {
        for f in &mut self.fields {
            fft::clear_nyquist(f, grid.n(), grid.dim());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fields
            .iter()
            .all(|f| f.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }
}

/// Output of a right-hand-side evaluation, in physical space.
#[derive(Debug, Clone)]
pub struct RhsEvaluation {
    /// `∂_t σ` or `∂_t ρ`.
    pub density: Field,
    /// `∂_t u` or `∂_t m`.
    pub velocity: VectorField,
    /// `-(β + |k|^{2α}) û` per component (σ-form only).
    pub stiff_linear_part: Option<Vec<Vec<Complex64>>>,
}

/// Shared spectral machinery: derivative symbols and padded transforms.
#[derive(Debug, Clone)]
struct Spectral {
    grid: Grid,
    exec: Exec,
    kd: Vec<[f64; 2]>,
    frac: Vec<f64>,
}

impl Spectral {
    fn new(grid: Grid, alpha: f64, exec: Exec) -> Self {
        let kd = (0..grid.len())
            .map(|i| crate::spectral::derivative_wavevector(grid, i))
            .collect();
        let frac = (0..grid.len()).map(|i| grid.wavenumber(i).powf(2.0 * alpha)).collect();
        Spectral { grid, exec, kd, frac }
    }

    fn deriv(&self, c: &[Complex64], axis: usize) -> Vec<Complex64> {
        c.iter()
            .zip(&self.kd)
            .map(|(c, k)| c * Complex64::new(0.0, k[axis]))
            .collect()
    }

    fn frac_apply(&self, c: &[Complex64]) -> Vec<Complex64> {
        c.iter().zip(&self.frac).map(|(c, l)| c * l).collect()
    }

    fn to_padded(&self, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
        let (n, dim) = (self.grid.n(), self.grid.dim());
        self.exec.map_slice(spectra, |c| fft::to_padded_physical(c, n, dim))
    }

    fn truncate_padded(&self, values: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
        let (n, dim) = (self.grid.n(), self.grid.dim());
        self.exec.map_slice(values, |v| fft::from_padded_physical(v, n, dim))
    }
}

fn add_into(acc: &mut [Complex64], x: &[Complex64], a: f64) {
    for (c, d) in acc.iter_mut().zip(x) {
        *c += d * a;
    }
}

/// The `(σ, u)` system on a fixed grid.
#[derive(Debug, Clone)]
pub struct SigmaSystem {
    params: ModelParams,
    sp: Spectral,
    stiff: Vec<f64>,
}

impl SigmaSystem {
    pub fn new(grid: Grid, params: ModelParams) -> Self {
        Self::with_exec(grid, params, Exec::default())
    }

    pub fn with_exec(grid: Grid, params: ModelParams, exec: Exec) -> Self {
        let sp = Spectral::new(grid, params.alpha.get(), exec);
        let stiff = sp
            .frac
            .iter()
            .map(|l| -(params.beta + if params.terms.alignment { *l } else { 0.0 }))
            .collect();
        SigmaSystem { params, sp, stiff }
    }

    pub fn grid(&self) -> Grid {
        self.sp.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Symbol `-(β + |k|^{2α})` of the stiff part acting on each velocity
    /// component (`-β` when alignment is switched off).
    pub fn stiff_symbol(&self) -> &[f64] {
        &self.stiff
    }

    /// Linear symbol per field of [`Modes`]: zero for σ, stiff for `u`.
    pub fn field_symbols(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.grid().len()]];
        for _ in 0..self.grid().dim() {
            out.push(self.stiff.clone());
        }
        out
    }

    pub fn encode(&self, s: &SigmaState) -> Modes {
        let mut m = Modes {
            fields: std::iter::once(&s.sigma)
                .chain(s.u.components())
                .map(|f| f.spectrum().to_vec())
                .collect(),
        };
        m.clear_nyquist(self.grid());
        m
    }

    pub fn decode(&self, m: &Modes, t: f64) -> Result<SigmaState> {
        let grid = self.grid();
        let sigma = Field::new(grid, fft::inverse(&m.fields[0], grid.n(), grid.dim()))?;
        let u = m.fields[1..]
            .iter()
            .map(|c| Field::new(grid, fft::inverse(c, grid.n(), grid.dim())))
            .collect::<Result<Vec<_>>>()?;
        SigmaState::new(sigma, VectorField::new(u)?, t)
    }

    /// Everything except the stiff linear part.
    pub fn nonlinear(&self, m: &Modes) -> Result<Modes> {
        let sp = &self.sp;
        let grid = sp.grid;
        let dim = grid.dim();
        let p = &self.params;
        let terms = p.terms;
        let len = grid.len();
        let g = p.gamma;
        let half_gm1 = 0.5 * (g - 1.0);
        let commutator = terms.alignment && terms.commutator;

        let sig = &m.fields[0];
        let u = &m.fields[1..];
        let dsig: Vec<Vec<Complex64>> = (0..dim).map(|b| sp.deriv(sig, b)).collect();
        let du: Vec<Vec<Vec<Complex64>>> = u.iter().map(|c| (0..dim).map(|b| sp.deriv(c, b)).collect()).collect();
        let mut div_u = vec![ZERO; len];
        for (b, d) in du.iter().enumerate() {
            add_into(&mut div_u, &d[b], 1.0);
        }

        // padded physical samples: σ, u_a, ∂_b σ, ∂_b u_a, ∇·u
        let mut inputs: Vec<&[Complex64]> = vec![sig];
        inputs.extend(u.iter().map(|c| c.as_slice()));
        inputs.extend(dsig.iter().map(|c| c.as_slice()));
        for d in &du {
            inputs.extend(d.iter().map(|c| c.as_slice()));
        }
        inputs.push(&div_u);
        let phys = sp.to_padded(&inputs);
        let sig_p = &phys[0];
        let u_p = &phys[1..1 + dim];
        let dsig_p = &phys[1 + dim..1 + 2 * dim];
        let du_p = |a: usize, b: usize| &phys[1 + 2 * dim + a * dim + b];
        let div_p = &phys[1 + 2 * dim + dim * dim];
        let plen = sig_p.len();

        if g > 1.0 {
            if let Some((index, base)) = sig_p
                .iter()
                .map(|&s| sigma_base(s, g))
                .enumerate()
                .find(|(_, b)| !(*b > 0.0))
            {
                return Err(Error::Vacuum { index, base });
            }
        }

        // ρ(σ) - 1 and L^{2α}(ρ - 1) for the commutator
        let (r_p, lr_p) = if commutator {
            let r_p: Vec<f64> = sig_p.iter().map(|&s| rho_minus_one_value(s, g)).collect();
            let r_hat = sp.truncate_padded(std::slice::from_ref(&r_p)).remove(0);
            let lr = sp.frac_apply(&r_hat);
            let lr_p = sp.to_padded(&[&lr]).remove(0);
            (r_p, lr_p)
        } else {
            (Vec::new(), Vec::new())
        };

        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(1 + 2 * dim);
        let mut ds = vec![0.0; plen];
        for i in 0..plen {
            let mut v = 0.0;
            if terms.advection {
                for b in 0..dim {
                    v -= u_p[b][i] * dsig_p[b][i];
                }
            }
            if terms.pressure {
                v -= half_gm1 * sig_p[i] * div_p[i];
            }
            ds[i] = v;
        }
        outputs.push(ds);
        for a in 0..dim {
            let mut du_out = vec![0.0; plen];
            for i in 0..plen {
                let mut v = 0.0;
                if terms.advection {
                    for b in 0..dim {
                        v -= u_p[b][i] * du_p(a, b)[i];
                    }
                }
                if terms.pressure {
                    v -= half_gm1 * sig_p[i] * dsig_p[a][i];
                }
                if commutator {
                    v += u_p[a][i] * lr_p[i];
                }
                du_out[i] = v;
            }
            outputs.push(du_out);
        }
        if commutator {
            for a in 0..dim {
                outputs.push(r_p.iter().zip(&u_p[a]).map(|(r, u)| r * u).collect());
            }
        }
        let mut spec = sp.truncate_padded(&outputs);

        let sg = g.sqrt();
        let mut out = Modes {
            fields: spec.drain(..1 + dim).collect(),
        };
        if terms.pressure {
            add_into(&mut out.fields[0], &div_u, -sg);
            for a in 0..dim {
                add_into(&mut out.fields[1 + a], &dsig[a], -sg);
            }
        }
        if commutator {
            for (a, ru) in spec.iter().enumerate() {
                add_into(&mut out.fields[1 + a], &sp.frac_apply(ru), -1.0);
            }
        }
        Ok(out)
    }

    /// `S·u` for the stiff symbol `S`.
    pub fn stiff_part(&self, m: &Modes) -> Vec<Vec<Complex64>> {
        m.fields[1..]
            .iter()
            .map(|c| c.iter().zip(&self.stiff).map(|(c, l)| c * l).collect())
            .collect()
    }

    /// Full right-hand side in Fourier space.
    pub fn full(&self, m: &Modes) -> Result<Modes> {
        let mut out = self.nonlinear(m)?;
        for (f, s) in out.fields[1..].iter_mut().zip(self.stiff_part(m)) {
            add_into(f, &s, 1.0);
        }
        Ok(out)
    }
}

/// `(∂_t σ, ∂_t u)` with the stiff part also reported separately.
pub fn rhs_sigma_form(state: &SigmaState, params: &ModelParams) -> Result<RhsEvaluation> {
    let sys = SigmaSystem::new(state.grid(), *params);
    let m = sys.encode(state);
    let full = sys.full(&m)?;
    let d = sys.decode(&full, state.t)?;
    Ok(RhsEvaluation {
        density: d.sigma,
        velocity: d.u,
        stiff_linear_part: Some(sys.stiff_part(&m)),
    })
}

/// How the conservative form realizes the alignment force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentForm {
    /// Pairwise quadrature with the periodized kernel.
    #[default]
    Convolution,
    /// `ρ` times the spectral commutator force.
    Spectral,
}

/// Density and momentum `m = ρu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeState {
    pub rho: Field,
    pub momentum: VectorField,
    pub t: f64,
}

impl ConservativeState {
    pub fn from_primitive(s: &PrimitiveState) -> Result<Self> {
        let momentum =
            s.u.components()
                .iter()
                .map(|u| s.rho.zip_with(u, |r, u| r * u))
                .collect::<Result<Vec<_>>>()?;
        Ok(ConservativeState {
            rho: s.rho.clone(),
            momentum: VectorField::new(momentum)?,
            t: s.t,
        })
    }

    pub fn to_primitive(&self) -> Result<PrimitiveState> {
        let u = self
            .momentum
            .components()
            .iter()
            .map(|m| m.zip_with(&self.rho, |m, r| m / r))
            .collect::<Result<Vec<_>>>()?;
        PrimitiveState::new(self.rho.clone(), VectorField::new(u)?, self.t)
    }

    pub fn grid(&self) -> Grid {
        self.rho.grid()
    }

    pub fn mass(&self) -> f64 {
        self.rho.integral()
    }

    /// `∫ m dx` per component.
    pub fn total_momentum(&self) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (a, m) in self.momentum.components().iter().enumerate() {
            out[a] = m.integral();
        }
        out
    }
}

/// The `(ρ, m)` system. The commutator switch only affects the spectral
/// alignment form; the pairwise form is all-or-nothing.
#[derive(Debug, Clone)]
pub struct ConservativeSystem {
    params: ModelParams,
    form: AlignmentForm,
    table: Option<KernelTable>,
    sp: Spectral,
}

impl ConservativeSystem {
    pub fn new(grid: Grid, params: ModelParams, spec: &KernelSpec, form: AlignmentForm) -> Result<Self> {
        Self::with_exec(grid, params, spec, form, Exec::default())
    }

    pub fn with_exec(
        grid: Grid,
        params: ModelParams,
        spec: &KernelSpec,
        form: AlignmentForm,
        exec: Exec,
    ) -> Result<Self> {
        let table = if form == AlignmentForm::Convolution && params.terms.alignment {
            Some(periodized_kernel(spec, grid)?)
        } else {
            None
        };
        Ok(ConservativeSystem {
            params,
            form,
            table,
            sp: Spectral::new(grid, params.alpha.get(), exec),
        })
    }

    pub fn grid(&self) -> Grid {
        self.sp.grid
    }

    pub fn form(&self) -> AlignmentForm {
        self.form
    }

    pub fn table(&self) -> Option<&KernelTable> {
        self.table.as_ref()
    }

    /// `(∂_t ρ, ∂_t m)`.
    pub fn rhs(&self, s: &ConservativeState) -> Result<(Field, VectorField)> {
        let sp = &self.sp;
        let grid = sp.grid;
        let (dim, len) = (grid.dim(), grid.len());
        let p = &self.params;
        let terms = p.terms;

        let rho_hat = s.rho.spectrum();
        let m_hat: Vec<&[Complex64]> = s.momentum.components().iter().map(|m| m.spectrum()).collect();

        let mut d_rho = vec![ZERO; len];
        for (b, m) in m_hat.iter().enumerate() {
            add_into(&mut d_rho, &sp.deriv(m, b), -1.0);
        }

        let mut inputs: Vec<&[Complex64]> = vec![rho_hat];
        inputs.extend(m_hat.iter().copied());
        let phys = sp.to_padded(&inputs);
        let rho_p = &phys[0];
        let m_p = &phys[1..];
        if let Some((index, &value)) = rho_p.iter().enumerate().find(|(_, &r)| !(r > 0.0)) {
            return Err(Error::NonPositiveDensity { index, value });
        }
        let u_p: Vec<Vec<f64>> = m_p
            .iter()
            .map(|m| m.iter().zip(rho_p).map(|(m, r)| m / r).collect())
            .collect();

        let mut products: Vec<Vec<f64>> = Vec::new();
        if terms.advection {
            for a in 0..dim {
                for b in 0..dim {
                    products.push(m_p[a].iter().zip(&u_p[b]).map(|(m, u)| m * u).collect());
                }
            }
        }
        let pressure_direct = p.gamma == 1.0;
        if terms.pressure && !pressure_direct {
            products.push(rho_p.iter().map(|r| r.powf(p.gamma)).collect());
        }
        let prod_hat = sp.truncate_padded(&products);

        let mut d_m: Vec<Vec<Complex64>> = vec![vec![ZERO; len]; dim];
        let mut next = 0;
        if terms.advection {
            for a in 0..dim {
                for b in 0..dim {
                    add_into(&mut d_m[a], &sp.deriv(&prod_hat[next], b), -1.0);
                    next += 1;
                }
            }
        }
        if terms.pressure {
            let pr: &[Complex64] = if pressure_direct { rho_hat } else { &prod_hat[next] };
            for (a, d) in d_m.iter_mut().enumerate() {
                add_into(d, &sp.deriv(pr, a), -1.0);
            }
        }
        if p.beta != 0.0 {
            for (d, m) in d_m.iter_mut().zip(&m_hat) {
                add_into(d, m, -p.beta);
            }
        }
        if terms.alignment {
            let sources = self.alignment_source(s, rho_p, &u_p)?;
            for (d, src) in d_m.iter_mut().zip(sources) {
                add_into(d, &src, 1.0);
            }
        }

        fft::clear_nyquist(&mut d_rho, grid.n(), dim);
        for d in &mut d_m {
            fft::clear_nyquist(d, grid.n(), dim);
        }
        let to_field = |c: &[Complex64]| Field::new(grid, fft::inverse(c, grid.n(), dim));
        let momentum = d_m.iter().map(|c| to_field(c)).collect::<Result<Vec<_>>>()?;
        Ok((to_field(&d_rho)?, VectorField::new(momentum)?))
    }

    fn alignment_source(&self, s: &ConservativeState, rho_p: &[f64], u_p: &[Vec<f64>]) -> Result<Vec<Vec<Complex64>>> {
        let sp = &self.sp;
        let grid = sp.grid;
        match (self.form, &self.table) {
            (AlignmentForm::Convolution, Some(table)) => {
                let prim = s.to_primitive()?;
                Ok(momentum_source(&prim, table, sp.exec)
                    .iter()
                    .map(|v| fft::forward(v, grid.n(), grid.dim()))
                    .collect())
            }
            _ => {
                let commutator = self.params.terms.commutator;
                let u_hat = sp.truncate_padded(u_p);
                let r_p: Vec<f64> = rho_p.iter().map(|r| r - 1.0).collect();
                let mut r_hat = s.rho.spectrum().to_vec();
                r_hat[0] -= 1.0;
                let lr_p = sp.to_padded(&[&sp.frac_apply(&r_hat)]).remove(0);
                let mut force_p = Vec::with_capacity(u_hat.len());
                for (a, uh) in u_hat.iter().enumerate() {
                    let mut f = sp.frac_apply(uh);
                    for c in f.iter_mut() {
                        *c = -*c;
                    }
                    if commutator {
                        let prods = vec![
                            r_p.iter().zip(&u_p[a]).map(|(r, u)| r * u).collect::<Vec<f64>>(),
                            u_p[a].iter().zip(&lr_p).map(|(u, l)| u * l).collect(),
                        ];
                        let ph = sp.truncate_padded(&prods);
                        add_into(&mut f, &sp.frac_apply(&ph[0]), -1.0);
                        add_into(&mut f, &ph[1], 1.0);
                    }
                    let fp = sp.to_padded(&[&f]).remove(0);
                    force_p.push(fp.iter().zip(rho_p).map(|(f, r)| f * r).collect());
                }
                Ok(sp.truncate_padded(&force_p))
            }
        }
    }
}

/// `(∂_t ρ, ∂_t m)` with the pairwise alignment force.
pub fn rhs_conservative_form(state: &PrimitiveState, params: &ModelParams, spec: &KernelSpec) -> Result<RhsEvaluation> {
    let sys = ConservativeSystem::new(state.grid(), *params, spec, AlignmentForm::Convolution)?;
    let (density, velocity) = sys.rhs(&ConservativeState::from_primitive(state)?)?;
    Ok(RhsEvaluation {
        density,
        velocity,
        stiff_linear_part: None,
    })
}

/// Maximum relative discrepancies between the σ-form tendencies and the
/// conservative ones mapped through the chain rule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CrossCheckReport {
    pub density: f64,
    pub velocity: f64,
    pub max: f64,
}

fn relative_sup(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Evaluates both formulations at `state` and compares them. The tangent
/// map `dσ = σ'(ρ) dρ`, `du = (dm - u dρ)/ρ` is applied on the padded grid.
pub fn cross_formulation_check(
    state: &PrimitiveState,
    params: &ModelParams,
    spec: &KernelSpec,
    form: AlignmentForm,
) -> Result<CrossCheckReport> {
    let grid = state.grid();
    let (n, dim) = (grid.n(), grid.dim());
    let sys = SigmaSystem::new(grid, *params);
    let sigma_rhs = sys.decode(&sys.full(&sys.encode(&state.to_sigma(params.gamma)?))?, state.t)?;

    let cons = ConservativeSystem::new(grid, *params, spec, form)?;
    let (d_rho, d_m) = cons.rhs(&ConservativeState::from_primitive(state)?)?;

    let rho_p = fft::to_padded_physical(state.rho.spectrum(), n, dim);
    let drho_p = fft::to_padded_physical(d_rho.spectrum(), n, dim);
    let g = params.gamma;
    let dsigma_p: Vec<f64> = rho_p
        .iter()
        .zip(&drho_p)
        .map(|(r, d)| g.sqrt() * r.powf(0.5 * (g - 3.0)) * d)
        .collect();
    let mapped_sigma = fft::inverse(&fft::from_padded_physical(&dsigma_p, n, dim), n, dim);
    let density = relative_sup(&mapped_sigma, sigma_rhs.sigma.values());

    let mut velocity = 0.0f64;
    for a in 0..dim {
        let u_p = fft::to_padded_physical(state.u.component(a).spectrum(), n, dim);
        let dm_p = fft::to_padded_physical(d_m.component(a).spectrum(), n, dim);
        let du_p: Vec<f64> = (0..rho_p.len())
            .map(|i| (dm_p[i] - u_p[i] * drho_p[i]) / rho_p[i])
            .collect();
        let mapped = fft::inverse(&fft::from_padded_physical(&du_p, n, dim), n, dim);
        velocity = velocity.max(relative_sup(&mapped, sigma_rhs.u.component(a).values()));
    }
    Ok(CrossCheckReport {
        density,
        velocity,
        max: density.max(velocity),
    })
}
