use std::f64::consts::PI;
use std::hint::black_box;

use criterion::Criterion;
use nv0_core::cqed::sweep;
use nv0_core::detection::{synthesize_counts, PopulationTrace};
use nv0_core::fitting::fit_auto;
use nv0_core::{DetectorModel, EmitterSpec, FitData, FitModel, ResonatorSpec};

pub fn bench_fit_damped_cosine(c: &mut Criterion) {
    let model = FitModel::DampedCosine;
    let p = [-0.4, 2.0 * PI * 27e6, 46e-9, 0.5];
    let x: Vec<f64> = (0..76).map(|k| k as f64 * 2e-9).collect();
    let y = x
        .iter()
        .enumerate()
        .map(|(k, &t)| model.value(&p, t) + 0.01 * ((k * 7919 % 13) as f64 / 6.0 - 1.0))
        .collect();
    let data = FitData::new(x, y, vec![0.01; 76]).unwrap();
    c.bench_function("fit damped cosine", |b| b.iter(|| fit_auto(&model, black_box(&data)).unwrap()));
}

pub fn bench_counts(c: &mut Criterion) {
    let n = 2000;
    let w = 1.28e-9;
    let pop = PopulationTrace {
        bin_width: w,
        t: (0..n).map(|k| (k as f64 + 0.5) * w).collect(),
        p2: (0..n).map(|k| 0.01 * (-(k as f64) / 400.0).exp()).collect(),
    };
    let det = DetectorModel {
        shots: 1_000_000,
        dark_rate: 1e3,
        ..DetectorModel::default()
    };
    c.bench_function("synthesize 2000 bins", |b| {
        b.iter(|| synthesize_counts(black_box(&pop), &det, 4.5e7, 3, 0).unwrap())
    });
}

pub fn bench_cqed_sweep(c: &mut Criterion) {
    let zs: Vec<f64> = (1..=20).map(|k| 50.0 * k as f64).collect();
    let ds: Vec<f64> = (1..=10).map(|k| 0.2e-6 * k as f64).collect();
    let qs = [1e4, 1e5, 1e6];
    let base = ResonatorSpec::default();
    let e = EmitterSpec::default();
    c.bench_function("cqed grid 600", |b| {
        b.iter(|| sweep(black_box(&base), &e, &zs, &ds, &qs).unwrap())
    });
}
