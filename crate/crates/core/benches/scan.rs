//! Robustness scan of the ancestor's data region, rayon against a plain loop.
//! Without the `parallel` feature both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rpw_core::assembler::build_ancestor;
use rpw_core::mutation::{robustness_scan, ScanOptions};
use rpw_core::translator::Region;

fn scan(c: &mut Criterion) {
    let genome = build_ancestor();
    let mut group = c.benchmark_group("data-region-scan");
    group.sample_size(10);
    for (label, parallel) in [("sequential", false), ("parallel", true)] {
        let opts = ScanOptions {
            budget: 1_000_000,
            parallel,
            ..ScanOptions::default()
        };
        group.bench_function(label, |b| b.iter(|| robustness_scan(black_box(&genome), Region::Data, &opts)));
    }
    group.finish();
}

criterion_group!(benches, scan);
criterion_main!(benches);
