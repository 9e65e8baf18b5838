use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use triplet_nn::eval::leave_one_out_queries;
use triplet_nn::{generate_synthetic, BaselineKind, CompTree, CountingOracle, PartitionTree, PointId, SyntheticKind};

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build");
    group.sample_size(20);
    for n in [1_000, 10_000] {
        let ds = generate_synthetic(SyntheticKind::GaussianMixture, n, 10, 0).unwrap();
        let members: Vec<PointId> = ds.ids().collect();
        group.bench_with_input(BenchmarkId::new("comptree", n), &n, |b, _| {
            b.iter(|| CompTree::build(&members, 16, 0, &CountingOracle::new(&ds)).unwrap())
        });
        for kind in [BaselineKind::KdTree, BaselineKind::RpTree, BaselineKind::PaTree] {
            group.bench_with_input(BenchmarkId::new(kind.to_string(), n), &n, |b, _| {
                b.iter(|| PartitionTree::build(kind, &ds, &members, 16, 0).unwrap())
            });
        }
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let ds = generate_synthetic(SyntheticKind::GaussianMixture, 10_000, 10, 0).unwrap();
    let members: Vec<PointId> = ds.ids().collect();
    let oracle = CountingOracle::new(&ds);
    let queries = leave_one_out_queries(&members[..1000]);
    let mut group = c.benchmark_group("search");
    for n0 in [4, 64] {
        let tree = CompTree::build(&members, n0, 0, &oracle).unwrap();
        group.bench_with_input(BenchmarkId::new("comptree-1000-queries", n0), &n0, |b, _| {
            b.iter(|| {
                for (_, q) in &queries {
                    black_box(tree.search(q, &oracle).unwrap());
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, build, search);
criterion_main!(benches);
