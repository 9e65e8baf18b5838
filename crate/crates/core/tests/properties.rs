use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use triplet_nn::baselines::principal_axis;
use triplet_nn::bench::{rows_from_csv, rows_to_csv};
use triplet_nn::eval::{miss_probability, strict_miss_probability, QueryRecord};
use triplet_nn::graph::Graph;
use triplet_nn::metric::Points;
use triplet_nn::theory::{self, error_bound, height_bound};
use triplet_nn::{
    generate_synthetic, BenchRow, Closer, CompTree, CountingOracle, Dataset, Payload, PointId, Probe, Query,
    SyntheticKind, TripletOracle,
};

fn datasets(seed: u64) -> Vec<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = generate_synthetic(SyntheticKind::GaussianMixture, 60, 3, seed).unwrap();
    let rows: Vec<Vec<String>> =
        (0..60).map(|_| (0..4).map(|_| format!("t{}", rng.random_range(0..3))).collect()).collect();
    let tuples = Dataset::from_tuples("tuples", &rows);
    let mut edges: Vec<(u64, u64, f64)> =
        (1..60u64).map(|v| (rng.random_range(0..v), v, rng.random_range(1..=5) as f64)).collect();
    edges.extend((0..30).map(|_| (rng.random_range(0..60), rng.random_range(0..60), rng.random_range(1..=5) as f64)));
    edges.retain(|e| e.0 != e.1);
    let graph = Dataset::from_graph("graph", Graph::from_edges(&edges).unwrap());
    vec![vectors, tuples, graph]
}

#[test]
fn metric_axioms_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for ds in datasets(3) {
        let n = ds.len() as u32;
        for _ in 0..1000 {
            let [a, b, c] = [0; 3].map(|_| PointId(rng.random_range(0..n)));
            let (ab, bc, ac) = (ds.distance(a, b), ds.distance(b, c), ds.distance(a, c));
            assert_eq!(ds.distance(a, a), 0.0, "{}", ds.name());
            assert!(ab >= 0.0);
            assert_eq!(ab, ds.distance(b, a), "{} symmetry", ds.name());
            assert!(ac <= ab + bc + 1e-9 * (ab + bc), "{} triangle", ds.name());
        }
    }
}

#[test]
fn triplets_agree_with_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for ds in datasets(4) {
        let oracle = CountingOracle::new(&ds);
        let n = ds.len() as u32;
        for _ in 0..500 {
            let [x, y, z] = [0; 3].map(|_| PointId(rng.random_range(0..n)));
            let expect = if ds.distance(x, y) <= ds.distance(x, z) { Closer::ToY } else { Closer::ToZ };
            assert_eq!(oracle.triplet_query(x, y, z).unwrap(), expect);
        }
        assert_eq!(oracle.count(), 500);
        assert!(oracle.triplet_query(PointId(n), PointId(0), PointId(1)).is_err());
        assert_eq!(oracle.count(), 500, "rejected queries are not counted");
    }
}

/// Answers from a precomputed rank table; it never sees the dataset.
struct RankTable {
    n: usize,
    ranks: Vec<u32>,
}

impl RankTable {
    fn new(ds: &Dataset) -> Self {
        let n = ds.len();
        let mut ranks = vec![0; n * n];
        for x in 0..n {
            let mut order: Vec<(f64, usize)> = (0..n).map(|y| (ds.distance(PointId(x as u32), PointId(y as u32)), y)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut rank = 0;
            for i in 0..n {
                if i > 0 && order[i].0 != order[i - 1].0 {
                    rank = i as u32;
                }
                ranks[x * n + order[i].1] = rank;
            }
        }
        RankTable { n, ranks }
    }
}

impl TripletOracle for RankTable {
    fn compare(&self, anchor: &Probe, y: PointId, z: PointId) -> Closer {
        let Probe::Point(x) = anchor else { panic!("rank table only knows stored points") };
        let row = &self.ranks[x.index() * self.n..];
        if row[y.index()] <= row[z.index()] {
            Closer::ToY
        } else {
            Closer::ToZ
        }
    }
}

#[test]
fn trees_need_only_triplet_answers() {
    for ds in datasets(5) {
        let members: Vec<PointId> = ds.ids().collect();
        let table = RankTable::new(&ds);
        for seed in 0..5 {
            let blind = CompTree::build(&members, 4, seed, &table).unwrap();
            let seeing = CompTree::build(&members, 4, seed, &CountingOracle::new(&ds)).unwrap();
            assert_eq!(blind, seeing, "{}", ds.name());
            for &p in &members {
                let q = ds.resolve(&Query::LeaveOneOut(p)).unwrap();
                assert_eq!(blind.search(&q, &table).unwrap(), seeing.search(&q, &CountingOracle::new(&ds)).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn builds_are_deterministic_and_valid(
        values in prop::collection::vec(-50i32..50, 1..120),
        n0 in 1usize..10,
        seed in any::<u64>(),
    ) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let ds = Dataset::from_line("l", &values);
        let members: Vec<PointId> = ds.ids().collect();
        let a = CompTree::build(&members, n0, seed, &CountingOracle::new(&ds)).unwrap();
        let mut reversed = members.clone();
        reversed.reverse();
        let b = CompTree::build(&reversed, n0, seed, &CountingOracle::new(&ds)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.validate().is_ok());
        prop_assert_eq!(CompTree::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn exact_when_one_leaf(values in prop::collection::vec(-20i32..20, 2..60), q in -25.0f64..25.0) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let ds = Dataset::from_line("l", &values);
        let members: Vec<PointId> = ds.ids().collect();
        let oracle = CountingOracle::new(&ds);
        let tree = CompTree::build(&members, values.len(), 0, &oracle).unwrap();
        let query = ds.resolve(&Query::External(Payload::Vector(vec![q]))).unwrap();
        let got = tree.search(&query, &oracle).unwrap();
        let truth = triplet_nn::brute_force_nn(&ds, &members, &query).unwrap();
        prop_assert_eq!(got.neighbor, truth.id);
    }

    #[test]
    fn height_bound_is_monotone(n in 1usize..100_000, n0 in 1usize..100, c in 1.0f64..10.0, eps in 0.01f64..1.0) {
        prop_assume!(n0 < n);
        let h = height_bound(n, n0, c, eps).unwrap();
        prop_assert!(height_bound(n + 1, n0, c, eps).unwrap() >= h);
        prop_assert!(height_bound(n, n0, c + 0.5, eps).unwrap() >= h);
        prop_assert!(height_bound(n, n0 + 1, c, eps).unwrap() <= h);
        prop_assert!(height_bound(n, n0, c, eps * 0.9).unwrap() >= h);
    }

    #[test]
    fn error_bound_is_monotone(c in 0.1f64..10.0, alpha in 0.05f64..1.0, ct in 1.0f64..5.0, n0 in 1usize..10_000) {
        let e = error_bound(c, alpha, ct, n0).unwrap();
        prop_assert!(error_bound(c, alpha, ct, n0 + 1).unwrap().raw < e.raw);
        prop_assert!(error_bound(c * 1.5, alpha, ct, n0).unwrap().raw > e.raw);
        prop_assert!(error_bound(c, alpha, ct + 0.5, n0).unwrap().raw > e.raw);
        prop_assert_eq!(e.clamped, e.raw.min(1.0));
    }
}

#[test]
fn expansion_is_scale_invariant() {
    for seed in 0..3 {
        let ds = generate_synthetic(SyntheticKind::UniformCube, 150, 2, seed).unwrap();
        let Points::Vectors { coords, .. } = ds.points() else { unreachable!() };
        let scaled = Dataset::from_vectors("scaled", 2, coords.iter().map(|c| c * 7.3).collect());
        let all: Vec<PointId> = ds.ids().collect();
        let a = theory::empirical_expansion_rate(&ds, &all, &all).unwrap();
        let b = theory::empirical_expansion_rate(&scaled, &all, &all).unwrap();
        let bits = |p: &theory::ExpansionProfile| p.points.iter().map(|(x, c)| (*x, c.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn breakpoints_dominate_a_dense_sweep() {
    let ds = generate_synthetic(SyntheticKind::GaussianMixture, 120, 2, 9).unwrap();
    let all: Vec<PointId> = ds.ids().collect();
    for &x in all.iter().step_by(7) {
        let exact = theory::pointwise_expansion(&ds, x, &all);
        let dist: Vec<f64> = all.iter().map(|&p| ds.distance(x, p)).collect();
        let top = dist.iter().cloned().fold(0.0, f64::max);
        let ball = |r: f64| dist.iter().filter(|&&d| d <= r).count() as f64;
        let swept = (1..=1000).map(|i| top * i as f64 / 1000.0).map(|r| ball(2.0 * r) / ball(r)).fold(1.0, f64::max);
        assert!(swept <= exact, "sweep {swept} above breakpoints {exact}");
    }
}

#[test]
fn growth_exponent_of_a_square_grid() {
    let ds = generate_synthetic(SyntheticKind::Grid2d, 256, 2, 0).unwrap();
    let all: Vec<PointId> = ds.ids().collect();
    let q = ds.resolve(&Query::External(Payload::Vector(vec![7.5, 7.5]))).unwrap();
    let d = theory::estimate_growth_exponent(&ds, &all, &q).unwrap();
    assert!((1.9..=2.6).contains(&d), "{d}");
    assert_eq!(d, GRID_GROWTH_EXPONENT);
}

/// Recorded from the first run.
const GRID_GROWTH_EXPONENT: f64 = 1.97;

#[test]
fn power_iteration_finds_the_top_eigenpair() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let scales = [5.0, 2.0, 0.5, 0.1];
    let coords: Vec<f64> = (0..400).flat_map(|_| scales.map(|s| s * rng.random_range(-1.0..1.0))).collect();
    let members: Vec<PointId> = (0..400u32).map(PointId).collect();
    let (v, lambda) = principal_axis(&coords, 4, &members).unwrap();
    let (_, cov) = triplet_nn::baselines::covariance(&coords, 4, &members);
    let residual: f64 = (0..4)
        .map(|i| {
            let cv: f64 = (0..4).map(|j| cov[i * 4 + j] * v[j]).sum();
            (cv - lambda * v[i]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    assert!(residual <= 1e-6 * lambda, "residual {residual}, lambda {lambda}");
    assert!(v[0].abs() > 0.99);
}

fn record(distance: f64, nn_distance: f64, exact_id: bool) -> QueryRecord {
    QueryRecord {
        query: PointId(0),
        neighbor: PointId(1),
        distance,
        nn_distance,
        hit: distance == nn_distance,
        exact_id,
        triplets: Some(3),
        fallback: false,
    }
}

#[test]
fn ties_count_as_hits_only_under_the_tie_aware_rule() {
    let records = [record(1.0, 1.0, true), record(1.0, 1.0, false), record(2.0, 1.0, false)];
    assert_eq!(miss_probability(&records), 1.0 / 3.0);
    assert_eq!(strict_miss_probability(&records), 2.0 / 3.0);
}

#[test]
fn bench_rows_survive_csv() {
    let row = BenchRow {
        dataset: "d".into(),
        method: "comptree".into(),
        mode: "leave-one-out".into(),
        n0: 4,
        seed: 7,
        queries: 10,
        miss_probability: 0.1,
        relative_distance_error: Some(0.123456789012345),
        excluded_zero_distance_queries: 1,
        fallback_queries: 0,
        build_triplets: Some(40),
        extra_build_triplets: Some(0),
        mean_query_triplets: Some(3.3),
        max_query_triplets: Some(5),
        tree_height: Some(3),
        within_budget: Some(true),
        wall_time_build: 0.25,
        wall_time_query: 1e-5,
    };
    let mut other = row.clone();
    other.method = "kdtree".into();
    other.relative_distance_error = None;
    other.build_triplets = None;
    other.extra_build_triplets = None;
    other.within_budget = None;
    let rows = vec![row, other];
    assert_eq!(rows_from_csv(&rows_to_csv(&rows)).unwrap(), rows);
}
