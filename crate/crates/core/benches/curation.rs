use std::hint::black_box;

use codeforge_core::corpus::CodeSnippet;
use codeforge_core::curation::{curate_with, CurationConfig, DistinctnessGraph};
use codeforge_core::par::Parallelism;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Snippets drawn from a small line vocabulary so that many pairs overlap.
fn corpus(n: usize, seed: u64) -> Vec<CodeSnippet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..60)
        .map(|i| format!("v{} = v{} + {}", i % 7, i % 5, i))
        .collect();
    (0..n)
        .map(|i| {
            let lines = rng.random_range(8..20);
            let src: String = (0..lines)
                .map(|_| format!("{}\n", vocab[rng.random_range(0..vocab.len())]))
                .collect();
            CodeSnippet::new(format!("s{i:05}"), src, "bench")
        })
        .collect()
}

fn modes() -> [(&'static str, Parallelism); 2] {
    [
        ("sequential", Parallelism::Sequential),
        ("parallel", Parallelism::Parallel),
    ]
}

fn graph_build(c: &mut Criterion) {
    let snippets = corpus(600, 1);
    let mut group = c.benchmark_group("distinctness_graph");
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::new(name, snippets.len()), &snippets, |b, s| {
            b.iter(|| DistinctnessGraph::build(black_box(s), 1.0, mode).unwrap())
        });
    }
    group.finish();
}

fn curation(c: &mut Criterion) {
    let snippets = corpus(800, 2);
    let config = CurationConfig {
        gamma: 0.8,
        subset_cap: 200,
        iterations: 2,
        rng_seed: 17,
    };
    let mut group = c.benchmark_group("curate");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::new(name, snippets.len()), &snippets, |b, s| {
            b.iter(|| curate_with(black_box(s), &config, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, graph_build, curation);
criterion_main!(benches);
