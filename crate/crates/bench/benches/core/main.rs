mod dynamics;
mod estimation;

use criterion::{criterion_group, criterion_main};

criterion_group!(
    dynamics,
    dynamics::bench_rabi_point,
    dynamics::bench_steady_state,
    dynamics::bench_noisy_ramsey
);
criterion_group!(
    estimation,
    estimation::bench_fit_damped_cosine,
    estimation::bench_counts,
    estimation::bench_cqed_sweep
);
criterion_main!(dynamics, estimation);
