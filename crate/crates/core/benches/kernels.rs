use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use easim_core::alignment::{
    alignment_dissipation_with, alignment_force_convolution_with, periodized_kernel, KernelSpec,
};
use easim_core::dynamics::{AlignmentForm, ConservativeState, ConservativeSystem, SigmaSystem};
use easim_core::oracle::{lemma_constant_sampler_with, LemmaEnsemble};
use easim_core::par::Exec;
use easim_core::spectral::Grid;
use easim_core::state::{make_perturbation_ic, ModelParams};

fn policies() -> Vec<(&'static str, Exec)> {
    vec![
        ("sequential", Exec::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Exec::Parallel),
    ]
}

fn convolution(c: &mut Criterion) {
    let mut g = c.benchmark_group("convolution");
    for (dim, n) in [(1usize, 512usize), (2, 32)] {
        let grid = Grid::new(dim, n).unwrap();
        let params = ModelParams::new(1.0, 0.0, 0.5, None, dim).unwrap();
        let table = periodized_kernel(&KernelSpec::new(params.alpha, dim).unwrap(), grid).unwrap();
        let s = make_perturbation_ic(grid, 0.1, 3, if dim == 1 { 16 } else { 4 }, &params).unwrap();
        for (name, exec) in policies() {
            let id = format!("{dim}d-n{n}");
            g.bench_with_input(BenchmarkId::new(format!("force/{name}"), &id), &exec, |b, &e| {
                b.iter(|| alignment_force_convolution_with(black_box(&s), &table, e).unwrap())
            });
            g.bench_with_input(BenchmarkId::new(format!("dissipation/{name}"), &id), &exec, |b, &e| {
                b.iter(|| alignment_dissipation_with(black_box(&s), &table, e).unwrap())
            });
        }
    }
    g.finish();
}

fn rhs(c: &mut Criterion) {
    let mut g = c.benchmark_group("rhs");
    let grid = Grid::new(2, 64).unwrap();
    let params = ModelParams::new(1.4, 0.1, 0.5, None, 2).unwrap();
    let s = make_perturbation_ic(grid, 0.1, 5, 8, &params).unwrap();
    let sigma = s.to_sigma(params.gamma).unwrap();
    let cons = ConservativeState::from_primitive(
        &make_perturbation_ic(Grid::new(1, 256).unwrap(), 0.1, 5, 16, &params1d()).unwrap(),
    )
    .unwrap();
    let spec = KernelSpec::new(params.alpha, 1).unwrap();
    for (name, exec) in policies() {
        let sys = SigmaSystem::with_exec(grid, params, exec);
        let m = sys.encode(&sigma);
        g.bench_function(BenchmarkId::new("sigma-2d-n64", name), |b| {
            b.iter(|| sys.nonlinear(black_box(&m)).unwrap())
        });
        let csys =
            ConservativeSystem::with_exec(cons.grid(), params1d(), &spec, AlignmentForm::Convolution, exec).unwrap();
        g.bench_function(BenchmarkId::new("conservative-1d-n256", name), |b| {
            b.iter(|| csys.rhs(black_box(&cons)).unwrap())
        });
    }
    g.finish();
}

fn params1d() -> ModelParams {
    ModelParams::new(1.4, 0.1, 0.5, None, 1).unwrap()
}

fn lemma(c: &mut Criterion) {
    let mut g = c.benchmark_group("lemma-sampler");
    g.sample_size(10);
    let cfg = LemmaEnsemble {
        members: 32,
        ..Default::default()
    };
    for (name, exec) in policies() {
        g.bench_function(name, |b| {
            b.iter(|| lemma_constant_sampler_with(black_box(&cfg), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, convolution, rhs, lemma);
criterion_main!(benches);
