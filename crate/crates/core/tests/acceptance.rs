//! Acceptance suite. Each test prints one `PASS`/`FAIL` line (written to the
//! process stdout directly, so it shows up with captured test output too)
//! and then asserts.

use std::io::Write;

use easim_core::alignment::{periodized_kernel, KernelSpec};
use easim_core::diagnostics::{
    coercivity_check, energy_law_residual, fit_decay_rate_above, Diagnostics, DiagnosticsRecord, DiagnosticsSettings,
};
use easim_core::dynamics::{AlignmentForm, ConservativeState, ConservativeSystem};
use easim_core::integrator::{
    integrate_conservative, run, ConservativeScheme, Monitor, Monitors, RunStatus, Scheme, StepConfig,
};
use easim_core::io::{decode_checkpoint, encode_checkpoint, parse_timeseries, timeseries_to_string, Checkpoint};
use easim_core::oracle::{
    dual_force_discrepancy, lemma_constant_sampler, quadrature_refinement, spectral_eigen_error, LemmaEnsemble,
};
use easim_core::par::Exec;
use easim_core::runner::{run_contrast, run_trajectory, Outcome, RunConfig};
use easim_core::spectral::{FractionalExponent, Grid};
use easim_core::state::{make_perturbation_ic, rho_of_sigma, sigma_of_rho, ModelParams, SigmaState};
use easim_core::Result;

fn report(id: &str, passed: bool, detail: String) {
    let line = format!("{} {id}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn monotone(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[test]
fn c01_operator_correctness() {
    let mut ok = true;
    let mut detail = Vec::new();
    for alpha in [0.25, 0.5, 0.75] {
        let eig = spectral_eigen_error(alpha).unwrap();
        let rows = quadrature_refinement(alpha, &[64, 128, 256, 512]).unwrap();
        let errs: Vec<f64> = rows.iter().map(|r| r.rel_l2).collect();
        let last = *errs.last().unwrap();
        let pass = eig <= 1e-12 && monotone(&errs) && (alpha > 0.5 || last <= 1e-3);
        ok &= pass;
        detail.push(format!(
            "alpha {alpha}: eigen {eig:.1e}, quadrature {}",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" > ")
        ));
    }
    report("c01 operator correctness", ok, detail.join("; "));
    assert!(ok);
}

#[test]
fn c02_dual_force_equivalence() {
    let d = dual_force_discrepancy(0.5, &[64, 128, 256], 11, 0.05).unwrap();
    let e: Vec<f64> = d.iter().map(|x| x.1).collect();
    let ok = monotone(&e) && e[2] <= 1e-3;
    report(
        "c02 dual-force equivalence",
        ok,
        format!(
            "relative discrepancy n=64,128,256: {:.3e}, {:.3e}, {:.3e}",
            e[0], e[1], e[2]
        ),
    );
    assert!(ok);
}

#[test]
fn c03_conservation() {
    let grid = Grid::new(1, 128).unwrap();
    let params = ModelParams::new(1.4, 0.3, 0.5, None, 1).unwrap();
    let ic = make_perturbation_ic(grid, 0.01, 4, 16, &params).unwrap();
    let sigma = ic.to_sigma(params.gamma).unwrap();
    let cfg = StepConfig {
        t_end: 10.0,
        ..Default::default()
    };
    let m0 = ic.rho.integral();
    let mut mass_drift = 0.0f64;
    let mut obs = |_: usize, s: &SigmaState, _: &Monitors| -> Result<()> {
        let m = rho_of_sigma(&s.sigma, params.gamma)?.integral();
        mass_drift = mass_drift.max((m - m0).abs());
        Ok(())
    };
    let sum = run(&sigma, &params, &cfg, 1, &mut obs).unwrap();
    let completed = matches!(sum.status, RunStatus::Completed);

    let free = ModelParams::new(1.4, 0.0, 0.5, None, 1).unwrap();
    let kernel = KernelSpec::new(free.alpha, 1).unwrap();
    let sys = ConservativeSystem::new(grid, free, &kernel, AlignmentForm::Convolution).unwrap();
    let start = ConservativeState::from_primitive(&make_perturbation_ic(grid, 0.05, 5, 16, &free).unwrap()).unwrap();
    let p0 = start.total_momentum()[0];
    let mut mom_drift = 0.0f64;
    let run_c = integrate_conservative(&sys, &start, ConservativeScheme::Rk4, 0.004, 10.0, 10, &mut |_, s| {
        mom_drift = mom_drift.max((s.total_momentum()[0] - p0).abs());
        Ok(())
    })
    .unwrap();
    let ok = completed && run_c.failure.is_none() && mass_drift <= 1e-10 && mom_drift <= 1e-8;
    report(
        "c03 conservation",
        ok,
        format!("mass drift {mass_drift:.2e} (sigma form, t in [0,10]); momentum drift {mom_drift:.2e} (conservative form, beta = 0)"),
    );
    assert!(ok);
}

fn energy_run(dt: f64) -> Vec<DiagnosticsRecord> {
    let grid = Grid::new(1, 128).unwrap();
    let params = ModelParams::new(1.0, 0.0, 0.5, None, 1).unwrap();
    let kernel = KernelSpec::new(params.alpha, 1).unwrap();
    let diag = Diagnostics::new(grid, params, &kernel, DiagnosticsSettings::default()).unwrap();
    let ic = make_perturbation_ic(grid, 0.01, 1, 16, &params)
        .unwrap()
        .to_sigma(1.0)
        .unwrap();
    let cfg = StepConfig {
        scheme: Scheme::EtdRk4,
        dt,
        t_end: 3.0,
        adaptive: false,
        ..Default::default()
    };
    let mut recs = Vec::new();
    let mut obs = |k: usize, s: &SigmaState, _: &Monitors| -> Result<()> {
        recs.push(diag.record(k as u64, s)?);
        Ok(())
    };
    run(&ic, &params, &cfg, 1, &mut obs).unwrap();
    recs
}

#[test]
fn c04_energy_law() {
    let coarse = energy_run(0.004);
    let fine = energy_run(0.002);
    let whole_c = energy_law_residual(&coarse, 0.0).unwrap();
    let whole_f = energy_law_residual(&fine, 0.0).unwrap();
    // after the high modes have decayed
    let tail = |r: &[DiagnosticsRecord]| {
        let i = r.iter().position(|x| x.t >= 1.0).unwrap();
        energy_law_residual(&r[i..], 0.0).unwrap()
    };
    let (tc, tf) = (tail(&coarse), tail(&fine));
    let ratio = tc / tf;
    let ok = whole_c <= 1e-4 && whole_f <= 1e-4 && (10.0..=25.6).contains(&ratio);
    report(
        "c04 energy law",
        ok,
        format!(
            "residual dt=0.004: {whole_c:.2e}, dt=0.002: {whole_f:.2e}; on t >= 1: {tc:.2e} -> {tf:.2e}, ratio {ratio:.1}"
        ),
    );
    assert!(ok);
}

#[test]
fn c05_exponential_decay() {
    let mut cfg = RunConfig::preset("decay-torus").unwrap();
    cfg.time.t_end = 50.0;
    let r = run_trajectory(&cfg, None, Exec::default()).unwrap();
    let s = &r.series;
    let energy: Vec<(f64, f64)> = s.iter().map(|x| (x.t, x.kinetic + x.l2_rho_dev)).collect();
    let hs: Vec<(f64, f64)> = s.iter().map(|x| (x.t, x.hs_sq())).collect();
    let fe = fit_decay_rate_above(&energy, 2.0, 1e-12).unwrap();
    let fh = fit_decay_rate_above(&hs, 2.0, 1e-12).unwrap();
    let ok = r.outcome == Outcome::Completed && fe.mu > 0.0 && fe.r2 >= 0.99 && fh.mu > 0.0 && fh.r2 >= 0.99;
    report(
        "c05 exponential decay",
        ok,
        format!(
            "kinetic+|rho-1|^2: mu {:.4} R2 {:.4} on [{:.2}, {:.2}]; Hs: mu {:.4} R2 {:.4} on [{:.2}, {:.2}]",
            fe.mu, fe.r2, fe.t_start, fe.t_end, fh.mu, fh.r2, fh.t_start, fh.t_end
        ),
    );
    assert!(ok);
}

#[test]
fn c06_smallness_propagation() {
    let mut ok = true;
    let mut detail = Vec::new();
    for delta in [0.005, 0.01, 0.02] {
        let mut cfg = RunConfig::preset("smallness").unwrap();
        cfg.ic.delta = delta;
        let r = run_trajectory(&cfg, None, Exec::default()).unwrap();
        let ratio = r.smallness.and_then(|s| s.ratio).unwrap_or(f64::INFINITY);
        let pass = r.outcome == Outcome::Completed && r.blowup.is_none() && ratio <= 4.0;
        ok &= pass;
        detail.push(format!("delta {delta}: sup ratio {ratio:.4}, t_final {}", r.t_final));
    }
    report("c06 smallness propagation", ok, detail.join("; "));
    assert!(ok);
}

#[test]
fn c07_blowup_contrast() {
    let cfg = RunConfig::preset("shock-vs-alignment").unwrap();
    let r = run_contrast(&cfg, None, Exec::default()).unwrap();
    let b = r.unaligned.blowup.as_ref();
    let grad = b.map(|b| b.monitor == Monitor::GradU.to_string()).unwrap_or(false);
    let ok = r.ordered && grad;
    report(
        "c07 blow-up contrast",
        ok,
        format!(
            "unaligned: {} at t = {:?}; aligned: {:?} to t = {}",
            b.map(|b| b.monitor.as_str()).unwrap_or("no event"),
            b.map(|b| b.t),
            r.aligned.outcome,
            r.aligned.t_final
        ),
    );
    assert!(ok);
}

#[test]
fn c08_kernel_coercivity() {
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for (dim, n, members) in [(1usize, 64usize, 80u64), (2, 16, 24)] {
        let grid = Grid::new(dim, n).unwrap();
        for alpha in [0.25, 0.5, 0.75] {
            let params = ModelParams::new(1.0, 0.0, alpha, None, dim).unwrap();
            let table = periodized_kernel(&KernelSpec::new(params.alpha, dim).unwrap(), grid).unwrap();
            for seed in 0..members / 3 + 1 {
                let delta = [0.01, 0.05, 0.2][seed as usize % 3];
                let s = make_perturbation_ic(grid, delta, 1000 + seed, if dim == 1 { 8 } else { 3 }, &params).unwrap();
                let c = coercivity_check(&s, &table).unwrap();
                count += 1;
                worst = worst.min(c.margin);
                if c.dissipation < c.phi_m * c.kinetic {
                    failures += 1;
                }
            }
        }
    }
    let ok = count >= 100 && failures == 0;
    report(
        "c08 kernel coercivity",
        ok,
        format!("{count} states, {failures} failures, smallest D/(phi_m KE) = {worst:.3}"),
    );
    assert!(ok);
}

#[test]
fn c09_lemma_probes() {
    let cfg = LemmaEnsemble::default();
    let rep = lemma_constant_sampler(&cfg).unwrap();
    let dir = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let path = dir.join("lemma_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&rep).unwrap()).unwrap();
    let ok = cfg.members >= 100 && rep.passed() && path.exists();
    let detail = rep
        .probes
        .iter()
        .map(|p| format!("{} max {:.3} median {:.3}", p.name, p.max, p.median))
        .collect::<Vec<_>>()
        .join("; ");
    report("c09 lemma probes", ok, format!("{detail}; report {}", path.display()));
    assert!(ok);
}

#[test]
fn c10_round_trips() {
    let grid = Grid::new(1, 64).unwrap();
    let mut sigma_err = 0.0f64;
    for gamma in [1.0, 1.4, 3.0] {
        let params = ModelParams::new(gamma, 0.0, 0.5, None, 1).unwrap();
        for seed in 0..10 {
            let s = make_perturbation_ic(grid, 0.1, seed, 8, &params).unwrap();
            let back = rho_of_sigma(&sigma_of_rho(&s.rho, gamma).unwrap(), gamma).unwrap();
            sigma_err = sigma_err.max(back.max_abs_diff(&s.rho));
        }
    }
    let params = ModelParams::new(1.4, 0.1, 0.5, None, 1).unwrap();
    let state = make_perturbation_ic(grid, 0.1, 3, 8, &params).unwrap();
    let ck = Checkpoint {
        state,
        gamma: 1.4,
        beta: 0.1,
        alpha: 0.5,
    };
    let bytes = encode_checkpoint(&ck);
    let back = decode_checkpoint(&bytes).unwrap();
    let ckpt_ok = back == ck && encode_checkpoint(&back) == bytes && bytes.len() == 1067;

    let kernel = KernelSpec::new(FractionalExponent::new(0.5).unwrap(), 1).unwrap();
    let diag = Diagnostics::new(grid, params, &kernel, DiagnosticsSettings::default()).unwrap();
    let sig = back.state.to_sigma(1.4).unwrap();
    let recs: Vec<DiagnosticsRecord> = (0..5)
        .map(|k| {
            diag.record(
                k,
                &SigmaState {
                    t: 0.1 * k as f64,
                    ..sig.clone()
                },
            )
            .unwrap()
        })
        .collect();
    let parsed = parse_timeseries(timeseries_to_string(&recs).unwrap().as_bytes()).unwrap();
    let csv_ok = parsed.len() == recs.len()
        && parsed.iter().zip(&recs).all(|(a, b)| {
            a.step == b.step
                && a.values()
                    .iter()
                    .zip(b.values())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        });
    let ok = sigma_err <= 1e-12 && ckpt_ok && csv_ok;
    report(
        "c10 round trips",
        ok,
        format!(
            "sigma<->rho max error {sigma_err:.1e}; checkpoint bit-exact {ckpt_ok} (1067 bytes); csv exact {csv_ok}"
        ),
    );
    assert!(ok);
}
