use cavlattice::model::{m_pm, model_curve};
use cavlattice_bench::{doublet_params, grid};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn bench_model(c: &mut Criterion) {
    let p = doublet_params();
    c.bench_function("m_pm", |b| b.iter(|| m_pm(black_box(0.7).into(), black_box(&p))));
    let g = grid(801, -9.0, 9.0);
    c.bench_function("model_curve_801", |b| b.iter(|| model_curve(black_box(&g), black_box(&p))));
}

criterion_group!(benches, bench_model);
criterion_main!(benches);
