use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shrinkmeta::{
    marginal_theta, parse_dataset, run_analysis, tau_posterior, AnalysisConfig, Dataset, IntervalMethod,
    IntervalSpec, MuPrior, ParseOptions, TauPrior,
};

fn dataset(name: &str) -> Dataset {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name);
    parse_dataset(&path, &ParseOptions::default()).expect("bundled dataset parses")
}

fn bench_tau_posterior(c: &mut Criterion) {
    let mut group = c.benchmark_group("tau_posterior");
    let data = dataset("mechanical_ventilation.csv");
    for tol in [1e-4, 1e-6, 1e-8] {
        group.bench_with_input(BenchmarkId::from_parameter(tol), &tol, |b, &tol| {
            b.iter(|| {
                tau_posterior(
                    black_box(&data),
                    &MuPrior::ImproperUniform,
                    &TauPrior::default(),
                    tol,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn bench_intervals(c: &mut Criterion) {
    let data = dataset("mechanical_ventilation.csv");
    let grid = tau_posterior(&data, &MuPrior::ImproperUniform, &TauPrior::default(), 1e-6).unwrap();
    let theta = marginal_theta(&grid, data.len() - 1).unwrap();
    let mut group = c.benchmark_group("interval");
    for method in [IntervalMethod::Central, IntervalMethod::Shortest] {
        let spec = IntervalSpec { level: 0.95, method };
        group.bench_function(format!("{method:?}").to_lowercase(), |b| {
            b.iter(|| black_box(&theta).interval(&spec).unwrap())
        });
    }
    group.finish();
}

fn bench_analysis(c: &mut Criterion) {
    let data = dataset("smoking.csv");
    c.bench_function("run_analysis/smoking", |b| {
        b.iter(|| run_analysis(black_box(&data), &AnalysisConfig::default()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_tau_posterior, bench_intervals, bench_analysis
}
criterion_main!(benches);
