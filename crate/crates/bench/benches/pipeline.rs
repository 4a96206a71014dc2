use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use groundmem_bench::{index_over, instructions, quiet_steps, PipelineFixture};
use groundmem_core::environment::minihouse::{oracle_trajectory, TaskType};
use groundmem_core::planner::check_trigger;
use groundmem_core::{Embedder, HashingEmbedder, TriggerPolicy};

fn retrieval(c: &mut Criterion) {
    let embedder = HashingEmbedder::new(256);
    let query = "put a clean mug in coffeemachine";
    c.bench_function("embed/instruction", |b| b.iter(|| embedder.embed(black_box(query)).unwrap()));

    let mut group = c.benchmark_group("query_topk");
    for n in [100, 1_000, 10_000] {
        let index = index_over(&instructions(n), &embedder);
        group.bench_with_input(BenchmarkId::from_parameter(n), &index, |b, index| {
            b.iter(|| index.query_topk(&embedder, black_box(query), 2).unwrap())
        });
    }
    group.finish();
}

fn trigger(c: &mut Criterion) {
    let policy = TriggerPolicy::default();
    let steps = quiet_steps(50);
    c.bench_function("trigger/check_50_steps", |b| {
        b.iter(|| check_trigger(&policy, black_box(&steps), &[]))
    });
}

fn episodes(c: &mut Criterion) {
    let mut group = c.benchmark_group("minihouse_oracle_episode");
    for t in TaskType::ALL {
        group.bench_function(t.slug(), |b| b.iter(|| oracle_trajectory(t, black_box(3), 50)));
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let dir = std::env::temp_dir().join(format!("groundmem-bench-{}", std::process::id()));
    let fixture = PipelineFixture::new(&dir, 12).expect("fixture");
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("scripted_run_12_tasks", |b| {
        b.iter(|| assert_eq!(fixture.run().unwrap(), 1.0))
    });
    group.finish();
    let _ = std::fs::remove_dir_all(&dir);
}

criterion_group!(benches, retrieval, trigger, episodes, pipeline);
criterion_main!(benches);
