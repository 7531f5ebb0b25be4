use mtcrowd::auction::{
    compute_payment, compute_payment_with, run_auction, select_winners, truthfulness_probe, CostProfile, PaymentRule,
};
use mtcrowd::rrset::RrCollection;
use mtcrowd_testkit::{critical_bid_search, random_instance, InstanceSpec};

fn instances() -> impl Iterator<Item = (u64, mtcrowd::TaskGraph, mtcrowd::Market, RrCollection)> {
    (0..25).map(|seed| {
        let spec = InstanceSpec { nodes: 20, edges: 40, users: 10, bid_range: (0.5, 2.0), ..Default::default() };
        let (g, m) = random_instance(spec, seed);
        let rr = RrCollection::generate(&g, seed + 500, 1500).unwrap();
        (seed, g, m, rr)
    })
}

#[test]
fn payment_is_the_critical_bid() {
    let mut winners = 0;
    for (seed, _, m, rr) in instances() {
        for budget in [2.0, 4.0, 7.0] {
            for w in select_winners(&rr, &m, budget).unwrap() {
                let p = compute_payment(&rr, &m, budget, w).unwrap().amount;
                let c = critical_bid_search(&rr, &m, w, budget, 1e-7).expect("a winner wins at a tiny bid");
                assert!((p - c).abs() < 1e-6, "seed {seed}, D {budget}, user {w}: paid {p}, critical {c}");
                winners += 1;
            }
        }
    }
    assert!(winners > 100);
}

#[test]
fn winners_are_paid_at_least_their_bid() {
    for (_, _, m, rr) in instances() {
        for budget in [1.0, 3.0, 6.0, 50.0] {
            let out = run_auction(&rr, &m, budget).unwrap();
            for (w, p) in out.winners.iter().zip(&out.payments) {
                assert!(p.amount >= m.bid(*w), "paid {} for bid {}", p.amount, m.bid(*w));
                assert!(p.amount <= budget + 1e-12);
            }
            assert!(out.overpayment_ratio().is_none_or(|r| r >= 0.0));
        }
    }
}

#[test]
fn lowering_a_winning_bid_keeps_it_winning() {
    for (_, _, m, rr) in instances() {
        let budget = 4.0;
        for w in select_winners(&rr, &m, budget).unwrap() {
            for f in [0.9, 0.5, 0.1] {
                let lower = m.with_bid(w, m.bid(w) * f).unwrap();
                assert!(select_winners(&rr, &lower, budget).unwrap().contains(&w));
            }
        }
    }
}

#[test]
fn misreporting_never_pays() {
    for (_, _, m, rr) in instances().take(8) {
        let budget = 4.0;
        let costs = CostProfile::truthful(&m);
        let grid: Vec<f64> = (1..=100).map(|i| i as f64 * budget / 100.0).collect();
        for u in 0..m.len() {
            let truthful = truthfulness_probe(&rr, &m, &costs, u, &[m.bid(u)], budget).unwrap()[0].utility;
            for pt in truthfulness_probe(&rr, &m, &costs, u, &grid, budget).unwrap() {
                assert!(pt.utility <= truthful + 1e-9, "user {u} gains by bidding {}", pt.bid);
                if pt.won {
                    assert!(pt.payment >= pt.bid);
                }
            }
        }
    }
}

#[test]
fn uncapped_rule_can_overshoot_the_critical_bid() {
    // Displacement bids above the remaining budget are not winnable bids.
    let mut above = 0;
    for (_, _, m, rr) in instances() {
        for budget in [2.0, 4.0] {
            for w in select_winners(&rr, &m, budget).unwrap() {
                let exact = compute_payment(&rr, &m, budget, w).unwrap().amount;
                let loose = compute_payment_with(&rr, &m, budget, w, PaymentRule::Uncapped).unwrap().amount;
                if loose > exact + 1e-9 {
                    above += 1;
                }
            }
        }
    }
    assert!(above > 0);
}
