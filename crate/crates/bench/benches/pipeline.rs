use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ptmevo_bench::{python_module, samples, snapshot_pair};
use ptmevo_core::change::diff_pair;
use ptmevo_core::extract::extract_occurrences;
use ptmevo_core::pipeline::{load_config, Pipeline};
use ptmevo_core::stats::{mann_whitney_u, wilcoxon_signed_rank};
use ptmevo_core::testkit::scenario;
use ptmevo_core::{apply_fp_filters, Catalog, FilterConfig, PtmIndex};

fn multiset_diff(c: &mut Criterion) {
    let mut g = c.benchmark_group("diff_pair");
    for ids in [10, 100, 1000] {
        let (a, b) = snapshot_pair(ids, 7);
        g.bench_with_input(BenchmarkId::from_parameter(ids), &ids, |bch, _| {
            bch.iter(|| diff_pair(black_box(&a), black_box(&b)))
        });
    }
    g.finish();
}

fn extraction(c: &mut Criterion) {
    let catalog = Catalog::builtin();
    let index = PtmIndex::default();
    let filters = FilterConfig::default();
    let mut g = c.benchmark_group("extract");
    for calls in [20, 200] {
        let src = python_module(calls);
        g.bench_with_input(BenchmarkId::from_parameter(calls), &src, |bch, src| {
            bch.iter(|| {
                let ex = extract_occurrences(black_box(src), "pkg/models.py", &catalog, &index);
                apply_fp_filters(ex.occurrences, &ex.bindings, &filters)
            })
        });
    }
    g.finish();
}

fn statistics(c: &mut Criterion) {
    let mut g = c.benchmark_group("stats");
    for n in [12, 300] {
        let (a, b) = samples(n, 11);
        g.bench_with_input(BenchmarkId::new("wilcoxon", n), &n, |bch, _| {
            bch.iter(|| wilcoxon_signed_rank(black_box(&a), black_box(&b)))
        });
        // the exact range caps the pooled size, so split it between samples
        let (a, b) = (&a[..n / 2], &b[..n / 2]);
        g.bench_with_input(BenchmarkId::new("mann_whitney", n), &n, |bch, _| {
            bch.iter(|| mann_whitney_u(black_box(a), black_box(b)))
        });
    }
    g.finish();
}

fn scenario_run(c: &mut Criterion) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let s = scenario(tmp.path());
    let mut p = Pipeline::new(load_config(&s.config).expect("config")).expect("pipeline");
    p.force = true;
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("scenario_full_run", |bch| {
        bch.iter(|| p.run_all(&[]).expect("run"))
    });
    g.finish();
}

criterion_group!(benches, multiset_diff, extraction, statistics, scenario_run);
criterion_main!(benches);
