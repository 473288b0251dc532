//! Criterion benchmarks for the estimation and inference pipeline.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion};

use spartsm::condexp::{estimate_cond_exp, CondExpMethod};
use spartsm::objective::build_objective;
use spartsm::rng::rng_from_seed;
use spartsm::simulate::{sample_ggm_path, PrecisionPath, SampleLayout};
use spartsm::solver::lasso_minimize;
use spartsm::{FeatureMap, InferenceConfig, LassoConfig, Targets, TimedDataset, WeightFunction};

fn dataset(d: usize, n: usize) -> TimedDataset {
    let mut rng = rng_from_seed(17);
    let path = PrecisionPath::random_linear(d, &mut rng).expect("path");
    sample_ggm_path(&path, SampleLayout::Paired { n }, &mut rng).expect("sample")
}

fn nw() -> CondExpMethod {
    CondExpMethod::NadarayaWatson { bandwidth: None, leave_one_out: false }
}

pub fn benchmarks(c: &mut Criterion) {
    let weight = WeightFunction::default();

    let mut group = c.benchmark_group("smoothing");
    for n in [500, 2000] {
        let ds = dataset(10, n);
        let fmap = FeatureMap::gaussian_pairwise(10);
        let features = fmap.feature_matrix(ds.observations()).unwrap();
        group.bench_with_input(BenchmarkId::new("nadaraya_watson", n), &n, |b, _| {
            b.iter(|| estimate_cond_exp(black_box(&ds), &features, nw()).unwrap())
        });
    }
    group.finish();

    let ds = dataset(20, 1000);
    let fmap = FeatureMap::gaussian_pairwise(20);
    let features = fmap.feature_matrix(ds.observations()).unwrap();
    let condexp = estimate_cond_exp(&ds, &features, nw()).unwrap();
    c.bench_function("objective/d20_n1000", |b| {
        b.iter(|| build_objective(black_box(&ds), &fmap, &weight, &condexp).unwrap())
    });

    let obj = build_objective(&ds, &fmap, &weight, &condexp).unwrap();
    let lambda = (2.0 * (obj.dim() as f64).ln() / ds.n_rows() as f64).sqrt();
    let cfg = LassoConfig::with_lambda(lambda);
    c.bench_function("lasso/d20_n1000", |b| b.iter(|| lasso_minimize(black_box(&obj), &cfg).unwrap()));

    let small = dataset(8, 600);
    let fmap8 = FeatureMap::gaussian_pairwise(8);
    let infer = InferenceConfig { targets: Targets::All, ..InferenceConfig::default() };
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("infer_all_d8_n600", |b| {
        b.iter(|| spartsm::run_pipeline(black_box(&small), &fmap8, &weight, &infer).unwrap())
    });
    group.finish();
}
