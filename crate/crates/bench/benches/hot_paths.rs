use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use icurisk::dataio::generate_synthetic_cohort;
use icurisk::evalstats::auroc;
use icurisk::models::{fit_gbdt, FnModel, GbdtParams};
use icurisk::posterior::{posterior_risk, Prior, PriorSpec};
use icurisk::StratumStats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_auroc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 100.0).round() / 100.0).collect();
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.2)).collect();
    c.bench_function("auroc_10k_tied", |b| b.iter(|| auroc(black_box(&scores), black_box(&labels)).unwrap()));
}

fn bench_gbdt(c: &mut Criterion) {
    let frame = generate_synthetic_cohort(&StratumStats::bundled(), 1478, 7).unwrap();
    let x = frame.matrix(&frame.feature_names()).unwrap();
    let y = frame.labels().unwrap();
    let params = GbdtParams {
        n_iters: 50,
        ..GbdtParams::default()
    };
    let mut g = c.benchmark_group("gbdt");
    g.sample_size(10);
    g.bench_function("fit_1478x19_50_trees", |b| {
        b.iter(|| fit_gbdt(&x, &y, &params, 3).unwrap())
    });
    g.finish();
}

fn bench_posterior(c: &mut Criterion) {
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let model = FnModel::new(names.clone(), |r: &[f64]| {
        1.0 / (1.0 + (-(0.8 * r[0] - 0.5 * r[1] + 0.3 * r[2])).exp())
    });
    let mut priors = PriorSpec::default();
    priors.insert(
        "a",
        Prior::TruncNormal {
            mu: 0.0,
            sd: 1.0,
            lo: -3.0,
            hi: 3.0,
            integer: false,
        },
    );
    priors.insert("b", Prior::Bernoulli { p: 0.4 });
    priors.insert(
        "c",
        Prior::TruncNormal {
            mu: 2.0,
            sd: 1.5,
            lo: 0.0,
            hi: 5.0,
            integer: true,
        },
    );
    let mut g = c.benchmark_group("posterior");
    g.sample_size(20);
    g.bench_function("20k_draws_3_features", |b| {
        b.iter(|| posterior_risk(&model, black_box(&priors), 20_000, 11).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_auroc, bench_gbdt, bench_posterior);
criterion_main!(benches);
