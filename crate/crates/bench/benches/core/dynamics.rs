use std::hint::black_box;

use criterion::Criterion;
use nv0_core::bloch::{steady_state_linear, steady_state_numeric, Drives, SystemRates};
use nv0_core::experiment::simulate_point;
use nv0_core::physics::angular;
use nv0_core::sequence::{build_rabi, build_ramsey};
use nv0_core::{DensityMatrix3, ExperimentSetup, NoiseModel, SequenceConfig};

fn rates() -> SystemRates {
    SystemRates::new(angular(7.2e6), 1.0 / 4.7e-6, 0.0, 0.0).unwrap()
}

pub fn bench_rabi_point(c: &mut Criterion) {
    let setup = ExperimentSetup::new(rates(), DensityMatrix3::ground());
    let seq = build_rabi(&SequenceConfig::default(), &[60e-9]).unwrap().remove(0);
    c.bench_function("simulate rabi point", |b| {
        b.iter(|| simulate_point(black_box(&setup), &seq, 0).unwrap())
    });
}

pub fn bench_steady_state(c: &mut Criterion) {
    let r = SystemRates::new(angular(7.2e6), angular(0.034e6), 0.0, 0.0).unwrap();
    let d = Drives::optical(angular(8e6), 0.0);
    let mut g = c.benchmark_group("steady state");
    g.sample_size(20);
    g.bench_function("integration", |b| b.iter(|| steady_state_numeric(black_box(&r), &d).unwrap()));
    g.bench_function("null space", |b| b.iter(|| steady_state_linear(black_box(&r), &d).unwrap()));
    g.finish();
}

pub fn bench_noisy_ramsey(c: &mut Criterion) {
    let mut setup = ExperimentSetup::new(rates(), DensityMatrix3::ground());
    setup.noise = NoiseModel {
        quasi_static_sigma: 3e6,
        ou_sigma: 0.5e6,
        seed: 1,
        ..NoiseModel::default()
    };
    setup.realizations = 50;
    let seq = build_ramsey(&SequenceConfig::default(), &[100e-9], 25e6).unwrap().remove(0);
    let mut g = c.benchmark_group("ramsey");
    g.sample_size(20);
    g.bench_function("50 noise realizations", |b| {
        b.iter(|| simulate_point(black_box(&setup), &seq, 0).unwrap())
    });
    g.finish();
}
