use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use hegcn_core::costmodel::{schedule, GraphStats};
use hegcn_core::engine::{presets, run_model, Model};
use hegcn_core::packing::{GraphTensor, LayoutKind};
use hegcn_core::sim::{Evaluator, SimContext};

fn sim_ops(c: &mut Criterion) {
    let ctx = SimContext::new(8192, 4).unwrap();
    let v: Vec<f64> = (0..8192).map(|i| (i as f64).sin()).collect();
    let ct = ctx.encrypt(&v).unwrap();
    let mut ev = Evaluator::new(ctx);
    let mut g = c.benchmark_group("sim-8192");
    g.bench_function("pmult", |b| b.iter(|| ev.pmult(black_box(&ct), &v).unwrap()));
    g.bench_function("rotate", |b| b.iter(|| ev.rotate(black_box(&ct), 37)));
    g.bench_function("add", |b| b.iter(|| ev.add(black_box(&ct), &ct).unwrap()));
    g.finish();
}

fn tiny_inference(c: &mut Criterion) {
    let model = Model::from_spec(presets::tiny(), None).unwrap();
    let x = GraphTensor::random(model.spec.input.as_array(), 1).unwrap();
    let ctx = SimContext::new(256, model.depth()).unwrap();
    let mut g = c.benchmark_group("tiny-inference");
    for fmt in [LayoutKind::Ama, LayoutKind::RowMajor] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{fmt:?}")), &fmt, |b, &f| {
            b.iter(|| run_model(&model, &x, f, &ctx).unwrap())
        });
    }
    g.finish();
}

fn batched_inference(c: &mut Criterion) {
    let base = Model::from_spec(presets::tiny(), None).unwrap();
    let mut g = c.benchmark_group("tiny-ama-batch");
    g.sample_size(20);
    for batch in [1usize, 4, 16] {
        let model = base.with_batch(batch);
        let x = GraphTensor::random(model.spec.input.as_array(), 2).unwrap();
        let ctx = SimContext::new(8192, model.depth()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(batch), &batch, |b, _| {
            b.iter(|| run_model(&model, &x, LayoutKind::Ama, &ctx).unwrap())
        });
    }
    g.finish();
}

fn wide_shape_schedule(c: &mut Criterion) {
    let spec = presets::stgcn3_64();
    let stats = GraphStats::of(&hegcn_core::adjacency::skeleton25());
    c.bench_function("schedule-64-stgcn-3", |b| {
        b.iter(|| schedule(black_box(&spec), &stats, LayoutKind::Ama, 8192).unwrap())
    });
}

criterion_group!(benches, sim_ops, tiny_inference, batched_inference, wide_shape_schedule);
criterion_main!(benches);
