use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vot_bench::{scene, shifted, white_truck};
use vot_core::datagen::{gen_examples, Objective, VideoStsgPair};
use vot_core::metrics::{grounding_report, match_objects};
use vot_core::orchestrator::{run_vot, VotConfig};
use vot_core::query::{extract_tracklet, neighbor_scene};
use vot_core::{parse, serialize};

fn text_format(c: &mut Criterion) {
    let mut group = c.benchmark_group("text");
    for (frames, nodes) in [(8, 10), (64, 20)] {
        let stsg = scene(frames, nodes);
        let text = serialize(&stsg).unwrap();
        let label = format!("{frames}x{nodes}");
        group.bench_with_input(BenchmarkId::new("serialize", &label), &stsg, |b, s| {
            b.iter(|| serialize(black_box(s)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("parse", &label), &text, |b, t| b.iter(|| parse(black_box(t)).unwrap()));
    }
    group.finish();
}

fn queries(c: &mut Criterion) {
    let stsg = scene(32, 16);
    c.bench_function("extract_tracklet 32x16", |b| b.iter(|| extract_tracklet(black_box(&stsg), "car-2").unwrap()));
    c.bench_function("neighbor_scene 3 hops", |b| {
        b.iter(|| neighbor_scene(black_box(&stsg), "person-1", 16, 3).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let gold = scene(16, 20);
    let pred = shifted(&gold, 1.5);
    c.bench_function("match_objects 20x20", |b| {
        b.iter(|| match_objects(black_box(&pred.frames[0]), black_box(&gold.frames[0]), 0.5).unwrap())
    });
    c.bench_function("grounding_report 16x20", |b| b.iter(|| grounding_report(black_box(&pred), &gold, 0.5)));
}

fn pipeline(c: &mut Criterion) {
    let (q, backend) = white_truck();
    let cfg = VotConfig::default();
    c.bench_function("run_vot white truck (mock)", |b| b.iter(|| run_vot(black_box(&q), &backend, &cfg).unwrap()));

    let corpus: Vec<VideoStsgPair> = (0..20)
        .map(|i| VideoStsgPair {
            video_id: format!("v{i}"),
            stsg: shifted(&scene(8, 6), f64::from(i)),
            action_captions: Vec::new(),
        })
        .collect();
    c.bench_function("datagen L1 20 pairs", |b| {
        b.iter(|| gen_examples(Objective::L1, black_box(&corpus), 1.0, 7).unwrap())
    });
}

criterion_group!(benches, text_format, queries, metrics, pipeline);
criterion_main!(benches);
