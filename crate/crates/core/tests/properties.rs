use mtcrowd::diffusion::{exact_f, exact_layer_value, project_seeds, DEFAULT_ENUMERATION_CAP};
use mtcrowd::graph::{synthesize_scenario, EdgeList, LayerWeights, ScenarioConfig, TaskGraph};
use mtcrowd::market::UserId;
use mtcrowd::opimc::ln_binomial;
use mtcrowd::rrset::RrCollection;
use mtcrowd_testkit::{random_instance, users_of_mask, InstanceSpec, SubsetValues};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::Rng;

/// Random `A ⊆ B` and `v ∉ B` over `users` users, as bit masks.
fn random_triple(r: &mut impl Rng, users: usize) -> (usize, usize, usize) {
    let v = r.random_range(0..users);
    let b = r.random_range(0..1usize << users) & !(1 << v);
    let a = b & r.random_range(0..1usize << users);
    (a, b, v)
}

#[test]
fn estimate_is_monotone_and_submodular() {
    let mut triples = 0;
    for seed in 0..20 {
        let (g, m) = random_instance(InstanceSpec { users: 8, ..Default::default() }, seed);
        let rr = RrCollection::generate(&g, seed, 2000).unwrap();
        let values = SubsetValues::new(&rr, &m);
        let mut r = mtcrowd::rng::substream(seed, 3);
        for _ in 0..500 {
            let (a, b, v) = random_triple(&mut r, m.len());
            let ga = values.value(a | 1 << v) - values.value(a);
            let gb = values.value(b | 1 << v) - values.value(b);
            assert!(values.value(a) <= values.value(b) + 1e-12);
            assert!(gb >= -1e-12);
            assert!(ga >= gb - 1e-12, "gain at A {ga} < gain at B {gb}");
            triples += 1;
        }
    }
    assert_eq!(triples, 10_000);
}

#[test]
fn exact_objective_is_monotone_and_submodular() {
    let mut triples = 0;
    for seed in 0..40 {
        let spec = InstanceSpec { nodes: 6, edges: 8, users: 5, coarse_weights: seed % 2 == 1, ..Default::default() };
        let (g, m) = random_instance(spec, seed);
        let all: Vec<f64> = (0..1usize << m.len()).map(|s| exact_f(&g, &m, &users_of_mask(s)).unwrap()).collect();
        let mut r = mtcrowd::rng::substream(seed, 4);
        for _ in 0..250 {
            let (a, b, v) = random_triple(&mut r, m.len());
            assert!(all[a] <= all[b] + 1e-12);
            assert!(all[a | 1 << v] - all[a] >= all[b | 1 << v] - all[b] - 1e-12);
            triples += 1;
        }
    }
    assert_eq!(triples, 10_000);
}

#[test]
fn objective_decomposes_over_tasks() {
    for seed in 0..20 {
        let (g, m) = random_instance(InstanceSpec::default(), seed);
        let seeds: Vec<UserId> = (0..m.len()).filter(|u| u % 2 == 0).collect();
        let per_task: f64 = (0..g.task_count())
            .map(|j| exact_layer_value(&g, &project_seeds(&m, &seeds, j), j, DEFAULT_ENUMERATION_CAP).unwrap())
            .sum();
        let f = exact_f(&g, &m, &seeds).unwrap();
        assert!((f - per_task / g.task_count() as f64).abs() < 1e-12);
    }
}

#[test]
fn ln_binomial_matches_big_integers() {
    for n in 1..=200usize {
        let mut c = BigUint::from(1u32);
        for k in 0..=n {
            if k > 0 {
                c = c * BigUint::from(n - k + 1) / BigUint::from(k);
            }
            let exact = big_ln(&c);
            let got = ln_binomial(n, k);
            let tol = 1e-9 * exact.abs().max(1e-300);
            assert!((got - exact).abs() <= tol.max(1e-12), "C({n},{k}): {got} vs {exact}");
        }
    }
}

fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return (x.iter_u64_digits().next().unwrap_or(0) as f64).ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).iter_u64_digits().next().unwrap() as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

fn arb_graph() -> impl Strategy<Value = TaskGraph> {
    (1usize..12, 1usize..4).prop_flat_map(|(n, tasks)| {
        let edge = (0..n as u32, 0..n as u32);
        (prop::collection::vec(edge, 0..30), Just(n), Just(tasks)).prop_flat_map(|(edges, n, tasks)| {
            let m = edges.len();
            (
                Just(edges),
                Just(n),
                prop::collection::vec(prop::collection::vec(0.0f64..=1.0, m), tasks),
                prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), tasks),
            )
                .prop_map(|(edges, n, w, q)| {
                    let list = EdgeList::new(n, &edges).unwrap();
                    let weights = LayerWeights::new(w, edges.len()).unwrap();
                    TaskGraph::with_node_quality(list, weights, &q).unwrap()
                })
        })
    })
}

proptest! {
    #[test]
    fn in_and_out_adjacency_are_transposes(g in arb_graph()) {
        let mut out: Vec<(u32, u32, u32)> = Vec::new();
        let mut inn: Vec<(u32, u32, u32)> = Vec::new();
        for v in 0..g.node_count() as u32 {
            out.extend(g.out_edges(v).iter().map(|&(w, e)| (v, w, e)));
            inn.extend(g.in_edges(v).iter().map(|&(u, e)| (u, v, e)));
            prop_assert_eq!(g.out_degree(v), g.out_edges(v).len());
        }
        out.sort_unstable();
        inn.sort_unstable();
        prop_assert_eq!(&out, &inn);
        prop_assert_eq!(out.len(), g.edge_count());
        for &(u, v, e) in &out {
            prop_assert_eq!(g.edges().edge(e), (u, v));
        }
    }

    #[test]
    fn every_node_sits_in_exactly_one_subarea(
        n in 1usize..200,
        per_side in 1usize..12,
        block in prop::sample::select(vec![0.5f64, 1.0, 25.0, 100.0]),
        seed in any::<u64>(),
    ) {
        let list = EdgeList::new(n, &[]).unwrap();
        let cfg = ScenarioConfig { area_side: block * per_side as f64, block_side: block, ..Default::default() };
        let g = synthesize_scenario(&list, &cfg, seed).unwrap();
        let cells = g.grid().subarea_count();
        prop_assert_eq!(cells, per_side * per_side);
        let mut mass = vec![0.0; g.task_count()];
        for v in 0..n as u32 {
            let (x, y) = g.location(v);
            prop_assert!(g.grid().contains(x, y));
            let cell = g.location_of(v);
            prop_assert!(cell < cells);
            prop_assert_eq!(cell, g.grid().subarea_of(x, y));
            let (col, row) = (cell % per_side, cell / per_side);
            prop_assert!(x >= col as f64 * block && (x < (col + 1) as f64 * block || col + 1 == per_side));
            prop_assert!(y >= row as f64 * block && (y < (row + 1) as f64 * block || row + 1 == per_side));
            for (j, m) in mass.iter_mut().enumerate() {
                *m += g.quality(j, cell);
            }
        }
        for (j, m) in mass.iter().enumerate() {
            prop_assert!((m - g.task_quality_mass(j)).abs() <= 1e-9 * m.max(1.0));
        }
    }

    #[test]
    fn quality_mass_is_the_sum_over_nodes(g in arb_graph()) {
        for j in 0..g.task_count() {
            let sum: f64 = (0..g.node_count() as u32).map(|v| g.node_quality(j, v)).sum();
            prop_assert!((sum - g.task_quality_mass(j)).abs() <= 1e-12 * sum.max(1.0));
        }
    }
}
