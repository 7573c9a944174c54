use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use modelopt::envelope::{envelope_trace, EnvelopeOptions};
use modelopt::solver::{run, SolverConfig};
use modelopt::{par, ModelKind, PolicyKind, ProblemInstance, ProblemKind, StepsizeParams};

fn solver_batch(c: &mut Criterion) {
    let p = ProblemInstance::generate(120, 30, 10.0, 0.2, ProblemKind::R1, 1).unwrap();
    let thetas: Vec<f64> = (0..16).map(|i| 0.05 * 1.4f64.powi(i)).collect();
    let job = |&theta: &f64| {
        let cfg = SolverConfig::new(&p, ModelKind::TRUNCATED, PolicyKind::Reference, StepsizeParams::experiment(theta, 1.0, 0), 20, 3);
        run(&p, &cfg).unwrap().final_objective
    };
    let mut g = c.benchmark_group("solver_batch");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", thetas.len()), |b| b.iter(|| par::map(&thetas, job)));
    g.bench_function(BenchmarkId::new("sequential", thetas.len()), |b| b.iter(|| par::map_seq(&thetas, job)));
    g.finish();
}

fn envelope_batch(c: &mut Criterion) {
    let p = ProblemInstance::generate(120, 30, 10.0, 0.2, ProblemKind::R1, 2).unwrap();
    let opts = EnvelopeOptions::for_problem(&p);
    let iterates: Vec<Vec<f64>> = (0..16).map(|i| p.x_hat.iter().map(|v| v * (1.0 + 0.01 * i as f64)).collect()).collect();
    let mut g = c.benchmark_group("envelope_batch");
    g.sample_size(10);
    g.bench_function("parallel", |b| b.iter(|| envelope_trace(&p, &iterates, &opts).unwrap()));
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(&iterates, |x| modelopt::envelope::prox_point(&p, x, &opts).unwrap().grad_norm))
    });
    g.finish();
}

criterion_group!(benches, solver_batch, envelope_batch);
criterion_main!(benches);
