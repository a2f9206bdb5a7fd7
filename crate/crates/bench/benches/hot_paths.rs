use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tutor_moves::stats::{bootstrap_ci, cohen_kappa};
use tutor_moves::synthetic::transcript_text;
use tutor_moves::{parse_verdict, render_prompt, SkillSpec, Stage, Transcript};

fn bootstrap(c: &mut Criterion) {
    let correct: Vec<bool> = (0..50).map(|i| i % 13 != 0).collect();
    c.bench_function("bootstrap_ci/50x10000", |b| {
        b.iter(|| bootstrap_ci(black_box(&correct), 10_000, 0.95, 42).unwrap())
    });
}

fn kappa(c: &mut Criterion) {
    let a: Vec<bool> = (0..1000).map(|i| i % 3 == 0).collect();
    let b: Vec<bool> = (0..1000).map(|i| i % 3 == 0 || i % 17 == 0).collect();
    c.bench_function("cohen_kappa/1000", |bench| {
        bench.iter(|| cohen_kappa(black_box(&a), black_box(&b)).unwrap())
    });
}

fn parse(c: &mut Criterion) {
    let raw = format!(
        "{}\nThe tutor praised the outcome only.\nANSWER: NO\n",
        "Reasoning line. ".repeat(60)
    );
    c.bench_function("parse_verdict", |b| {
        b.iter(|| parse_verdict(black_box(&raw)).unwrap())
    });
}

fn render(c: &mut Criterion) {
    let text = transcript_text(7, 9000, true, true);
    let t = Transcript::new("bench", text);
    let spec = SkillSpec::praise();
    c.bench_function("render_prompt/9KB", |b| {
        b.iter(|| render_prompt(black_box(&spec), Stage::Filter, black_box(&t)).unwrap())
    });
}

criterion_group!(benches, bootstrap, kappa, parse, render);
criterion_main!(benches);
