use std::f64::consts::E;

use mtcrowd::graph::{EdgeList, LayerWeights, TaskGraph};
use mtcrowd::market::{Bidder, Market, TaskSet};
use mtcrowd::opimc::{
    budgeted_w_max_coverage, compute_k, lower_bound, modified_opimc, theta_max, upper_bound, weighted_max_coverage,
    BudgetedOptions, OpimcParams,
};
use mtcrowd::rrset::RrCollection;
use mtcrowd_testkit::{random_instance, scan_estimate, InstanceSpec, SubsetValues};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs()
}

#[test]
fn bounds_match_high_precision_values() {
    let eta_delta = 1.0 / 20.0;
    // covered mass 100 of 1000 sets
    let low = lower_bound(0.1, 1000, 1.0, eta_delta);
    let up = upper_bound(0.1, 1000, 1.0, eta_delta);
    assert!(rel_close(low, 0.077_438_346_201_183_668_2, 1e-12), "{low}");
    assert!(rel_close(up, 0.127_655_839_056_891_551_4, 1e-12), "{up}");
    assert!(rel_close(theta_max(100, 5, 0.1, 0.01), 1226.257_532_659_495_364_4, 1e-12));
    assert!(rel_close(theta_max(1000, 20, 0.1, 0.1), 849.831_170_975_079_364_2, 1e-12));
    let p = OpimcParams::new(100, 5, 0.1, 0.01).unwrap();
    assert!(rel_close(p.theta_0, 61.312_876_632_974_768_2, 1e-12));
    assert_eq!(p.theta_start, 62);
    assert_eq!(p.schedule(), vec![62, 124, 248, 496, 992]);
}

#[test]
fn schedule_is_capped_at_theta_max() {
    // 1 / (eps^2 K) = 1 / (0.04 * 3) = 8.33 -> 4 rounds
    let p = OpimcParams::new(50, 3, 0.2, 0.1).unwrap();
    assert_eq!(p.i_max, 4);
    let cap = p.theta_max.ceil() as usize;
    let s = p.schedule();
    for (i, &t) in s.iter().enumerate() {
        assert_eq!(t, (p.theta_start << i).min(cap.max(p.theta_start)));
    }
}

#[test]
fn size_k_greedy_guarantee_and_upper_bound() {
    for seed in 0..30 {
        let (g, m) = random_instance(InstanceSpec { nodes: 12, edges: 20, users: 10, ..Default::default() }, seed);
        let rr = RrCollection::generate(&g, seed, 2000).unwrap();
        let oracle = SubsetValues::new(&rr, &m);
        for k in 1..=4 {
            let t = weighted_max_coverage(&rr, &m, k);
            let (_, best) = oracle.best_of_size(k);
            assert_eq!(t.seeds.len(), k);
            assert!((t.value - scan_estimate(&rr, &m, &t.seeds)).abs() < 1e-12);
            assert!(t.value >= (1.0 - 1.0 / E) * best - 1e-12);
            assert!(t.upper >= best - 1e-12, "upper {} below optimum {best}", t.upper);
            assert!(t.upper <= t.value / (1.0 - 1.0 / E) + 1e-12);
        }
    }
}

/// Users on isolated nodes with deterministic self-coverage only, so each
/// covers a disjoint group of sets.
fn disjoint_instance(qualities: &[f64]) -> (TaskGraph, Market) {
    let n = qualities.len();
    let list = EdgeList::new(n, &[]).unwrap();
    let weights = LayerWeights::new(vec![vec![]], 0).unwrap();
    let g = TaskGraph::with_node_quality(list, weights, &[qualities.to_vec()]).unwrap();
    let bidders = (0..n as u32).map(|node| Bidder { node, tasks: TaskSet::from_tasks([0]), bid: 1.0 }).collect();
    (g, Market::new(bidders, n, 1).unwrap())
}

#[test]
fn greedy_is_optimal_on_disjoint_coverage() {
    let (g, m) = disjoint_instance(&[0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.05, 0.6]);
    let rr = RrCollection::generate(&g, 2, 5000).unwrap();
    let oracle = SubsetValues::new(&rr, &m);
    for k in 1..=m.len() {
        let t = weighted_max_coverage(&rr, &m, k);
        assert!((t.value - oracle.best_of_size(k).1).abs() < 1e-12);
    }
}

#[test]
fn budgeted_greedy_guarantee() {
    let bound = 1.0 - (-0.5f64).exp();
    for seed in 0..30 {
        let spec = InstanceSpec { nodes: 12, edges: 20, users: 10, bid_range: (0.5, 3.0), ..Default::default() };
        let (g, m) = random_instance(spec, seed);
        let rr = RrCollection::generate(&g, seed, 2000).unwrap();
        let oracle = SubsetValues::new(&rr, &m);
        for budget in [3.0, 5.0, 8.0] {
            let s = budgeted_w_max_coverage(&rr, &m, budget, BudgetedOptions::default()).unwrap();
            let (_, best) = oracle.best_within_budget(&m, budget);
            assert!(s.spent <= budget);
            assert!(s.value >= bound * best - 1e-12, "seed {seed}, D {budget}: {} vs {best}", s.value);
        }
    }
}

#[test]
fn opimc_is_deterministic() {
    let spec = InstanceSpec { nodes: 30, edges: 60, users: 12, ..Default::default() };
    let (g, m) = random_instance(spec, 5);
    let k = compute_k(&m.bids(), 4.0).unwrap();
    let a = modified_opimc(&g, &m, k, 0.2, 0.1, 77).unwrap();
    let b = modified_opimc(&g, &m, k, 0.2, 0.1, 77).unwrap();
    assert_eq!(a.collection, b.collection);
    assert_eq!(a.greedy, b.greedy);
    assert!(a.rounds.len() <= a.params.i_max);
    let c = modified_opimc(&g, &m, k, 0.2, 0.1, 78).unwrap();
    assert_ne!(a.collection, c.collection);
}

#[test]
fn confidence_bounds_hold_on_enumerable_instance() {
    use mtcrowd::diffusion::exact_f;
    use mtcrowd_testkit::users_of_mask;
    let spec = InstanceSpec { nodes: 7, edges: 10, users: 6, coarse_weights: true, ..Default::default() };
    let (g, m) = random_instance(spec, 3);
    let k = 2;
    let opt = (0..1usize << m.len())
        .filter(|s| s.count_ones() == k as u32)
        .map(|s| exact_f(&g, &m, &users_of_mask(s)).unwrap())
        .fold(0.0, f64::max);
    let delta = 0.1;
    let (mut low_ok, mut up_ok) = (0, 0);
    let trials = 100;
    for t in 0..trials {
        let r1 = RrCollection::generate(&g, 2 * t, 200).unwrap();
        let r2 = RrCollection::generate(&g, 2 * t + 1, 200).unwrap();
        let scale = r1.max_scale();
        let greedy = weighted_max_coverage(&r1, &m, k);
        let f_low = lower_bound(r2.estimate(&m, &greedy.seeds).unwrap(), r2.len(), scale, delta);
        let f_up = upper_bound(greedy.upper, r1.len(), scale, delta);
        low_ok += (exact_f(&g, &m, &greedy.seeds).unwrap() > f_low) as usize;
        up_ok += (opt < f_up) as usize;
    }
    assert!(low_ok as f64 >= (1.0 - delta) * trials as f64, "{low_ok}");
    assert!(up_ok as f64 >= (1.0 - delta) * trials as f64, "{up_ok}");
}
