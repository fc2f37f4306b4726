//! Brute-force reference computations used to certify the spectral code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{alignment_force_commutator, alignment_force_convolution, periodized_kernel, KernelSpec};
use crate::dynamics::{AlignmentForm, ConservativeState, ConservativeSystem};
use crate::error::{Error, Result};
use crate::integrator::{integrate_conservative, ConservativeScheme};
use crate::par::Exec;
use crate::special::riemann_zeta;
use crate::spectral::{
    dealiased_product, fractional_laplacian, fractional_power, gradient, sup_norm, Field, FractionalExponent, Grid,
};
use crate::state::{make_perturbation_ic, random_band_limited, rho_of_sigma, ModelParams, PrimitiveState};
use crate::stencil;

fn l2(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

fn rel_l2(got: &[f64], want: &[f64]) -> f64 {
    let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
    l2(&diff) / l2(want)
}

/// `L^{2α} f` by the direct pairwise sum over the periodized kernel, plus the
/// local moment corrections for the punctured rule (second-order finite
/// differences, so the result never touches the FFT).
pub fn quadrature_fractional_laplacian(f: &Field, spec: &KernelSpec) -> Result<Field> {
    let grid = f.grid();
    let table = periodized_kernel(spec, grid)?;
    let v = f.values();
    let q = table.pair_sum(Exec::default(), |x, y| v[x] - v[y]);
    let kappa = table.near_field_coefficient();
    let lap = stencil::laplacian_low(v, grid);
    let mut out: Vec<f64> = q.iter().zip(&lap).map(|(q, l)| q + 0.5 * kappa * l).collect();
    if grid.dim() == 1 {
        let a = spec.alpha().get();
        let p = 3.0 - 2.0 * a;
        let excluded: f64 = (1..)
            .map(|j| j as f64)
            .take_while(|&j| j <= spec.pv_epsilon())
            .map(|j| 2.0 * j.powf(p))
            .sum();
        let c4 = spec.c_alpha() * grid.h().powf(4.0 - 2.0 * a) * (2.0 * riemann_zeta(2.0 * a - 3.0) - excluded);
        let d4 = stencil::d4_low(v, grid, 0);
        for (o, d) in out.iter_mut().zip(d4) {
            *o += c4 * d / 24.0;
        }
    }
    Field::new(grid, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub alpha: f64,
    pub n: usize,
    pub rel_l2: f64,
}

/// Quadrature against the exact eigenvalue on `cos(2πx)`, one row per `n`.
pub fn quadrature_refinement(alpha: f64, ns: &[usize]) -> Result<Vec<RefinementRow>> {
    let a = FractionalExponent::new(alpha)?;
    let spec = KernelSpec::new(a, 1)?;
    let lambda = (2.0 * std::f64::consts::PI).powf(2.0 * alpha);
    ns.iter()
        .map(|&n| {
            let grid = Grid::new(1, n)?;
            let f = Field::from_fn(grid, |x| (2.0 * std::f64::consts::PI * x[0]).cos())?;
            let got = quadrature_fractional_laplacian(&f, &spec)?;
            let want: Vec<f64> = f.values().iter().map(|v| lambda * v).collect();
            Ok(RefinementRow {
                alpha,
                n,
                rel_l2: rel_l2(got.values(), &want),
            })
        })
        .collect()
}

/// Samples of the forward-Euler reference trajectory.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub samples: Vec<(usize, ConservativeState)>,
    pub steps: usize,
    /// Loss of positivity, with the last valid state kept in `samples`.
    pub failure: Option<String>,
}

impl ReferenceTrajectory {
    pub fn last(&self) -> &ConservativeState {
        &self.samples.last().expect("at least the initial sample").1
    }
}

/// Forward Euler with a tiny step on the conservative form with the
/// convolution force. Restricted to `n ≤ 32`, `t_end ≤ 1`.
pub fn tiny_explicit_reference(
    ic: &PrimitiveState,
    params: &ModelParams,
    kernel: &KernelSpec,
    dt_tiny: f64,
    t_end: f64,
    cadence: usize,
) -> Result<ReferenceTrajectory> {
    let grid = ic.grid();
    if grid.n() > 32 {
        return Err(Error::param("n", "reference is limited to n <= 32"));
    }
    if !(t_end - ic.t <= 1.0) {
        return Err(Error::param("t_end", "reference is limited to t_end <= 1"));
    }
    let sys = ConservativeSystem::new(grid, *params, kernel, AlignmentForm::Convolution)?;
    let start = ConservativeState::from_primitive(ic)?;
    let mut samples = Vec::new();
    let run = integrate_conservative(
        &sys,
        &start,
        ConservativeScheme::ForwardEuler,
        dt_tiny,
        t_end,
        cadence,
        &mut |k, s| {
            samples.push((k, s.clone()));
            Ok(())
        },
    )?;
    if samples.last().map(|(k, _)| *k) != Some(run.steps) {
        samples.push((run.steps, run.final_state.clone()));
    }
    Ok(ReferenceTrajectory {
        samples,
        steps: run.steps,
        failure: run.failure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaEnsemble {
    pub dim: usize,
    pub n: usize,
    pub members: usize,
    pub mode_cap: usize,
    pub seed: u64,
    /// Exponent for the Leibniz and small-exponent commutator probes, in `(0, 1]`.
    pub lambda_small: f64,
    /// Exponent for the two large-exponent commutator probes, `> 1`.
    pub lambda_large: f64,
    pub gamma: f64,
    /// Sup-norm of σ in the composition probe.
    pub sigma_amplitude: f64,
}

impl Default for LemmaEnsemble {
    fn default() -> Self {
        LemmaEnsemble {
            dim: 1,
            n: 64,
            members: 128,
            mode_cap: 8,
            seed: 7,
            lambda_small: 0.5,
            lambda_large: 1.5,
            gamma: 1.4,
            sigma_amplitude: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaRatios {
    pub leibniz: f64,
    pub comm21: f64,
    pub comm3: f64,
    pub comm22: f64,
    pub composition: f64,
}

impl LemmaRatios {
    pub const NAMES: [&'static str; 5] = ["leibniz", "comm21", "comm3", "comm22", "composition"];

    pub fn as_array(&self) -> [f64; 5] {
        [self.leibniz, self.comm21, self.comm3, self.comm22, self.composition]
    }
}

/// Zero when the left side vanishes; infinite if only the right side does.
fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::INFINITY
    }
}

fn grad_sup(f: &Field) -> f64 {
    let g = gradient(f);
    let mut sq = vec![0.0; f.grid().len()];
    for c in g.components() {
        for (s, v) in sq.iter_mut().zip(c.values()) {
            *s += v * v;
        }
    }
    sq.into_iter().fold(0.0, f64::max).sqrt()
}

fn diff3(a: &Field, b: &Field, c: &Field) -> Vec<f64> {
    a.values()
        .iter()
        .zip(b.values())
        .zip(c.values())
        .map(|((a, b), c)| a - b - c)
        .collect()
}

/// Left/right ratios of the five inequalities for one `(f, g)` pair; `σ` for
/// the composition probe is `g` scaled to sup-norm `sigma_amplitude`.
pub fn lemma_ratios(f: &Field, g: &Field, cfg: &LemmaEnsemble) -> Result<LemmaRatios> {
    let (ls, ll) = (cfg.lambda_small, cfg.lambda_large);
    let fg = dealiased_product(f, g)?;
    let norm = |x: &Field| l2(x.values());

    let leibniz = ratio(
        norm(&fractional_power(&fg, ls)),
        norm(&fractional_power(f, ls)) * sup_norm(g) + norm(&fractional_power(g, ls)) * sup_norm(f),
    );

    let lfg = fractional_power(&fg, ll);
    let f_lg = dealiased_product(f, &fractional_power(g, ll))?;
    let g_lf = dealiased_product(g, &fractional_power(f, ll))?;
    let zero = Field::zeros(f.grid());
    let comm = diff3(&lfg, &f_lg, &zero);
    let comm21 = ratio(
        l2(&comm),
        norm(&fractional_power(f, ll)) * sup_norm(g) + grad_sup(f) * norm(&fractional_power(g, ll - 1.0)),
    );
    let tri = diff3(&lfg, &f_lg, &g_lf);
    let comm3 = ratio(
        l2(&tri),
        norm(&fractional_power(f, ll - 1.0)) * grad_sup(g) + grad_sup(f) * norm(&fractional_power(g, ll - 1.0)),
    );

    let small = diff3(
        &fractional_power(&fg, ls),
        &dealiased_product(f, &fractional_power(g, ls))?,
        &zero,
    );
    let comm22 = ratio(l2(&small), sup_norm(&fractional_power(f, ls)) * norm(g));

    let gs = sup_norm(g);
    let sigma = if gs > 0.0 {
        g.scale(cfg.sigma_amplitude / gs)
    } else {
        g.clone()
    };
    let r = rho_of_sigma(&sigma, cfg.gamma)?.map(|v| v - 1.0)?;
    let composition = ratio(norm(&fractional_power(&r, ls)), norm(&fractional_power(&sigma, ls)));

    Ok(LemmaRatios {
        leibniz,
        comm21,
        comm3,
        comm22,
        composition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub name: String,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub all_finite: bool,
    /// `max ≤ 10·median`.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub config: LemmaEnsemble,
    pub probes: Vec<ProbeStats>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.probes.iter().all(|p| p.all_finite && p.stable)
    }
}

fn stats(name: &str, mut xs: Vec<f64>) -> ProbeStats {
    let all_finite = xs.iter().all(|x| x.is_finite());
    let max = xs.iter().copied().fold(0.0, f64::max);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    let median = if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    };
    ProbeStats {
        name: name.to_string(),
        max,
        mean,
        median,
        all_finite,
        stable: max <= 10.0 * median,
    }
}

/// Runs the lemma probes on `members` random band-limited pairs.
pub fn lemma_constant_sampler(cfg: &LemmaEnsemble) -> Result<LemmaReport> {
    lemma_constant_sampler_with(cfg, Exec::default())
}

pub fn lemma_constant_sampler_with(cfg: &LemmaEnsemble, exec: Exec) -> Result<LemmaReport> {
    if cfg.members < 1 {
        return Err(Error::param("members", "must be positive"));
    }
    if !(cfg.lambda_small > 0.0 && cfg.lambda_small <= 1.0) || !(cfg.lambda_large > 1.0) {
        return Err(Error::param(
            "lambda",
            "need lambda_small in (0,1] and lambda_large > 1",
        ));
    }
    let grid = Grid::new(cfg.dim, cfg.n)?;
    let rows: Vec<Result<LemmaRatios>> = exec.map_range(cfg.members, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let f = random_band_limited(grid, cfg.mode_cap, &mut rng);
        let g = random_band_limited(grid, cfg.mode_cap, &mut rng);
        lemma_ratios(&f, &g, cfg)
    });
    let rows: Vec<LemmaRatios> = rows.into_iter().collect::<Result<_>>()?;
    let probes = LemmaRatios::NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| stats(name, rows.iter().map(|r| r.as_array()[k]).collect()))
        .collect();
    Ok(LemmaReport { config: *cfg, probes })
}

/// Relative L² discrepancy `‖ρF - ρA‖/‖ρF‖` between the commutator and the
/// convolution forms of the alignment force, per grid size.
pub fn dual_force_discrepancy(alpha: f64, ns: &[usize], seed: u64, delta: f64) -> Result<Vec<(usize, f64)>> {
    let a = FractionalExponent::new(alpha)?;
    let spec = KernelSpec::new(a, 1)?;
    let params = ModelParams::new(1.0, 0.0, alpha, None, 1)?;
    ns.iter()
        .map(|&n| {
            let grid = Grid::new(1, n)?;
            let s = make_perturbation_ic(grid, delta, seed, 8, &params)?;
            let table = periodized_kernel(&spec, grid)?;
            let conv = alignment_force_convolution(&s, &table)?;
            let comm = alignment_force_commutator(&s, a)?;
            let rho = s.rho.values();
            let (mut num, mut den) = (0.0, 0.0);
            for (c, f) in conv.components().iter().zip(comm.components()) {
                for ((x, y), r) in c.values().iter().zip(f.values()).zip(rho) {
                    num += (r * (x - y)).powi(2);
                    den += (r * y).powi(2);
                }
            }
            Ok((n, (num / den).sqrt()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Gate {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: String) -> Gate {
        Gate {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub refinement_ns: Vec<usize>,
    /// Final-grid tolerance on the quadrature error for `α ≤ 0.5`.
    pub quadrature_tolerance: f64,
    /// Final-grid tolerance for `α > 0.5`.
    pub quadrature_tolerance_strong: f64,
    pub dual_force_ns: Vec<usize>,
    pub dual_force_tolerance: f64,
    pub lemma: LemmaEnsemble,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            refinement_ns: vec![64, 128, 256, 512],
            quadrature_tolerance: 1e-3,
            quadrature_tolerance_strong: 1e-2,
            dual_force_ns: vec![64, 128, 256],
            dual_force_tolerance: 1e-3,
            lemma: LemmaEnsemble::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub settings: VerifySettings,
    pub gates: Vec<Gate>,
    pub refinement: Vec<RefinementRow>,
    pub dual_force: Vec<(usize, f64)>,
    pub lemma: LemmaReport,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn monotone_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Spectral eigenfunction check: max relative error of `L^{2α}` on a few
/// Fourier modes in 1D and 2D.
pub fn spectral_eigen_error(alpha: f64) -> Result<f64> {
    let a = FractionalExponent::new(alpha)?;
    let tau = 2.0 * std::f64::consts::PI;
    let mut worst = 0.0f64;
    for (dim, m) in [(1usize, [1i64, 0]), (1, [5, 0]), (2, [1, 2]), (2, [3, -1])] {
        let grid = Grid::new(dim, 32)?;
        let f = Field::from_fn(grid, |x| (tau * (m[0] as f64 * x[0] + m[1] as f64 * x[1])).sin())?;
        let k = tau * ((m[0] * m[0] + m[1] * m[1]) as f64).sqrt();
        let lf = fractional_laplacian(&f, a);
        let want = f.scale(k.powf(2.0 * alpha));
        worst = worst.max(lf.max_abs_diff(&want) / sup_norm(&want));
    }
    Ok(worst)
}

/// The oracle suite. Each gate records its own tolerance.
pub fn run_verification(settings: &VerifySettings) -> Result<VerificationReport> {
    let mut gates = Vec::new();
    let mut refinement = Vec::new();
    for alpha in [0.25, 0.5, 0.75] {
        let e = spectral_eigen_error(alpha)?;
        gates.push(Gate::at_most(
            &format!("spectral_eigen_alpha_{alpha}"),
            e,
            1e-12,
            String::new(),
        ));
        let rows = quadrature_refinement(alpha, &settings.refinement_ns)?;
        let errs: Vec<f64> = rows.iter().map(|r| r.rel_l2).collect();
        let tol = if alpha <= 0.5 {
            settings.quadrature_tolerance
        } else {
            settings.quadrature_tolerance_strong
        };
        let mono = monotone_decreasing(&errs);
        let mut g = Gate::at_most(
            &format!("quadrature_alpha_{alpha}"),
            *errs.last().unwrap_or(&f64::INFINITY),
            tol,
            format!("errors {errs:?}, monotone = {mono}"),
        );
        g.passed &= mono;
        gates.push(g);
        refinement.extend(rows);
    }

    let dual = dual_force_discrepancy(0.5, &settings.dual_force_ns, 11, 0.05)?;
    let errs: Vec<f64> = dual.iter().map(|d| d.1).collect();
    let mono = monotone_decreasing(&errs);
    let mut g = Gate::at_most(
        "dual_force_alpha_0.5",
        *errs.last().unwrap_or(&f64::INFINITY),
        settings.dual_force_tolerance,
        format!("discrepancies {errs:?}, decreasing = {mono}"),
    );
    g.passed &= mono;
    gates.push(g);

    // steady state and mass along the explicit reference
    let grid = Grid::new(1, 16)?;
    let params = ModelParams::new(1.4, 0.2, 0.5, None, 1)?;
    let kernel = KernelSpec::new(params.alpha, 1)?;
    let steady = tiny_explicit_reference(&PrimitiveState::steady(grid), &params, &kernel, 1e-3, 0.1, 100)?;
    let drift =
        steady.last().rho.max_abs_diff(&Field::constant(grid, 1.0)) + sup_norm(steady.last().momentum.component(0));
    gates.push(Gate::at_most("reference_steady", drift, 1e-14, String::new()));
    let ic = make_perturbation_ic(grid, 0.05, 3, 4, &params)?;
    let traj = tiny_explicit_reference(&ic, &params, &kernel, 1e-4, 0.1, 100)?;
    let m0 = ic.rho.integral();
    let mass = traj
        .samples
        .iter()
        .map(|(_, s)| (s.mass() - m0).abs())
        .fold(0.0, f64::max);
    gates.push(Gate::at_most("reference_mass", mass, 1e-12, String::new()));

    let lemma = lemma_constant_sampler(&settings.lemma)?;
    for p in &lemma.probes {
        gates.push(Gate {
            name: format!("lemma_{}", p.name),
            value: if p.median > 0.0 { p.max / p.median } else { 0.0 },
            tolerance: 10.0,
            passed: p.all_finite && p.stable,
            detail: format!("max {:.6e}, mean {:.6e}, median {:.6e}", p.max, p.mean, p.median),
        });
    }

    Ok(VerificationReport {
        settings: settings.clone(),
        gates,
        refinement,
        dual_force: dual,
        lemma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(alpha: f64) -> KernelSpec {
        KernelSpec::new(FractionalExponent::new(alpha).unwrap(), 1).unwrap()
    }

    #[test]
    fn constant_gives_zero() {
        let g = Grid::new(1, 32).unwrap();
        let out = quadrature_fractional_laplacian(&Field::constant(g, 2.5), &spec(0.5)).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn refinement_is_monotone() {
        for alpha in [0.25, 0.5, 0.75] {
            let rows = quadrature_refinement(alpha, &[64, 128, 256]).unwrap();
            let e: Vec<f64> = rows.iter().map(|r| r.rel_l2).collect();
            assert!(monotone_decreasing(&e), "alpha {alpha}: {e:?}");
        }
        let rows = quadrature_refinement(0.25, &[256]).unwrap();
        assert!(rows[0].rel_l2 <= 1e-3);
    }

    #[test]
    fn excluded_offsets_are_compensated() {
        let g = Grid::new(1, 128).unwrap();
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let s = spec(0.5).with_pv_epsilon(2.0).unwrap();
        let got = quadrature_fractional_laplacian(&f, &s).unwrap();
        let want = f.scale(2.0 * PI);
        assert!(rel_l2(got.values(), want.values()) < 1e-4);
    }

    #[test]
    fn leibniz_single_mode_closed_form() {
        let g = Grid::new(1, 64).unwrap();
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let r = lemma_ratios(&f, &f, &LemmaEnsemble::default()).unwrap();
        assert!((r.leibniz - 2f64.sqrt() / 4.0).abs() < 1e-13, "{}", r.leibniz);
    }

    #[test]
    fn degenerate_pairs() {
        let g = Grid::new(1, 64).unwrap();
        let cfg = LemmaEnsemble::default();
        let f = Field::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let zero = Field::zeros(g);
        let r = lemma_ratios(&zero, &f, &cfg).unwrap();
        assert_eq!(r.as_array()[..4], [0.0; 4]);
        let c = Field::constant(g, 3.0);
        let lhs = diff3(
            &fractional_power(&dealiased_product(&c, &f).unwrap(), 0.5),
            &dealiased_product(&c, &fractional_power(&f, 0.5)).unwrap(),
            &zero,
        );
        assert!(l2(&lhs) < 1e-13);
    }

    #[test]
    fn sampler_reports_and_is_deterministic() {
        let cfg = LemmaEnsemble {
            members: 100,
            ..Default::default()
        };
        let a = lemma_constant_sampler_with(&cfg, Exec::Sequential).unwrap();
        let b = lemma_constant_sampler(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.probes.len(), 5);
        assert!(a.passed(), "{:?}", a.probes);
    }

    #[test]
    fn reference_limits_and_steady_state() {
        let params = ModelParams::new(1.0, 0.0, 0.5, None, 1).unwrap();
        let k = spec(0.5);
        let big = PrimitiveState::steady(Grid::new(1, 64).unwrap());
        assert!(tiny_explicit_reference(&big, &params, &k, 1e-3, 0.1, 1).is_err());
        let small = PrimitiveState::steady(Grid::new(1, 16).unwrap());
        assert!(tiny_explicit_reference(&small, &params, &k, 1e-3, 2.0, 1).is_err());
        let t = tiny_explicit_reference(&small, &params, &k, 1e-2, 0.1, 3).unwrap();
        assert_eq!(t.steps, 10);
        assert_eq!(t.samples.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 3, 6, 9, 10]);
        assert!(t.last().rho.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dual_force_refines() {
        let d = dual_force_discrepancy(0.5, &[64, 128, 256], 11, 0.05).unwrap();
        let e: Vec<f64> = d.iter().map(|x| x.1).collect();
        assert!(monotone_decreasing(&e) && e[2] <= 1e-3, "{e:?}");
    }
}
