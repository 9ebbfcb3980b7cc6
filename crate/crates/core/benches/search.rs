//! Throughput of the data-parallel paths. Run once per backend and compare:
//!
//! ```text
//! cargo bench -p paperscope-core --bench search
//! cargo bench -p paperscope-core --bench search --no-default-features
//! ```
//!
//! Benchmark ids carry the backend name, so both runs land side by side in
//! `target/criterion`.

use std::collections::HashSet;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use paperscope_core::corpus::Corpus;
use paperscope_core::embedding::{compose_document_text, embed_corpus, Embedder, EmbeddingSpace, MockEmbedder};
use paperscope_core::index::{search_exact, AnnIndex, AnnIndexConfig, VectorSearch};
use paperscope_core::parallel::BACKEND;
use paperscope_core::projection::{project_pca, trustworthiness};
use paperscope_core::sample;

fn corpus(n: usize) -> Corpus {
    Corpus::from_records(sample::generate(n, 42).records).0
}

fn embedder() -> MockEmbedder {
    MockEmbedder::new(EmbeddingSpace::mock("mock", 256))
}

fn bench_embed(c: &mut Criterion) {
    let corpus = corpus(5_000);
    let texts: Vec<String> = corpus.records().iter().map(compose_document_text).collect();
    let e = embedder();
    let mut g = c.benchmark_group("mock_embed");
    g.throughput(Throughput::Elements(texts.len() as u64));
    g.bench_function(BenchmarkId::new(BACKEND, texts.len()), |b| b.iter(|| e.embed(black_box(&texts)).unwrap()));
    g.finish();
}

fn bench_exact(c: &mut Criterion) {
    let e = embedder();
    let mut g = c.benchmark_group("search_exact");
    for n in [10_000usize, 66_692] {
        let vectors = embed_corpus(&e, &corpus(n)).unwrap();
        let q = e.embed_one("geographic maps of migration").unwrap();
        let none = HashSet::new();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_function(BenchmarkId::new(BACKEND, n), |b| {
            b.iter(|| search_exact(&vectors, black_box(&q), 25, &none).unwrap())
        });
    }
    g.finish();
}

fn bench_ann(c: &mut Criterion) {
    let e = embedder();
    let vectors = Arc::new(embed_corpus(&e, &corpus(5_000)).unwrap());
    let mut g = c.benchmark_group("ann");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new(format!("build/{BACKEND}"), vectors.len()), |b| {
        b.iter(|| AnnIndex::build(vectors.clone(), AnnIndexConfig::default()).unwrap())
    });
    let index = AnnIndex::build(vectors.clone(), AnnIndexConfig::default()).unwrap();
    let q = e.embed_one("topic models for text corpora").unwrap();
    let none = HashSet::new();
    g.bench_function(BenchmarkId::new(format!("query/{BACKEND}"), vectors.len()), |b| {
        b.iter(|| index.search(black_box(&q), 10, &none).unwrap())
    });
    g.finish();
}

fn bench_projection(c: &mut Criterion) {
    let e = embedder();
    let vectors = embed_corpus(&e, &corpus(2_000)).unwrap();
    let points = project_pca(&vectors).unwrap();
    let mut g = c.benchmark_group("projection");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new(format!("pca/{BACKEND}"), vectors.len()), |b| {
        b.iter(|| project_pca(black_box(&vectors)).unwrap())
    });
    g.bench_function(BenchmarkId::new(format!("trustworthiness/{BACKEND}"), vectors.len()), |b| {
        b.iter(|| trustworthiness(black_box(&vectors), &points, 10).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_embed, bench_exact, bench_ann, bench_projection);
criterion_main!(benches);
