use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::Rng;

use mkdpinn_core::eval::{nasa_score, rmse};
use mkdpinn_core::meta::meta_update;
use mkdpinn_core::{rng, Batch, RunConfig, SampleWindow, Tensor};

fn windows(cfg: &RunConfig, n: usize) -> Vec<SampleWindow> {
    let (t, f) = (cfg.model.hsm.time_steps, cfg.model.hsm.input_features);
    let mut r = rng::stream(1, &[]);
    (0..n)
        .map(|_| SampleWindow {
            features: Tensor::new(vec![t, f], (0..t * f).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap(),
            run_time: r.gen_range(0.0..1.0),
            rul: r.gen_range(0.0..125.0),
        })
        .collect()
}

fn loss(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let objective = cfg.objective(125.0);
    let params = cfg.model.init_seeded(1);
    let batch = Batch::new(&windows(&cfg, 32)).unwrap();
    c.bench_function("loss_and_grad/default_model/batch32", |b| {
        b.iter(|| objective.loss_and_grad(black_box(&params), &batch, None).unwrap())
    });
}

fn reptile(c: &mut Criterion) {
    let model = RunConfig::default().model;
    let phi = model.init_seeded(1);
    let thetas: Vec<_> = (2..6).map(|s| model.init_seeded(s)).collect();
    c.bench_function("meta_update/default_model/4_tasks", |b| {
        b.iter(|| meta_update(black_box(&phi), &thetas, 0.1).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let mut r = rng::stream(2, &[]);
    let truth: Vec<f64> = (0..10_000).map(|_| r.gen_range(0.0..125.0)).collect();
    let pred: Vec<f64> = truth.iter().map(|t| t + r.gen_range(-20.0..20.0)).collect();
    c.bench_function("rmse/10k", |b| b.iter(|| rmse(black_box(&truth), &pred).unwrap()));
    c.bench_function("nasa_score/10k", |b| b.iter(|| nasa_score(black_box(&truth), &pred).unwrap()));
}

criterion_group!(benches, loss, reptile, metrics);
criterion_main!(benches);
