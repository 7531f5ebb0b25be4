//! Budgeted reverse auction over registered users.
//!
//! Winners are picked greedily by estimated marginal gain per unit bid until
//! the next pick would overflow the budget. Each winner is paid its critical
//! value: the largest bid with which it would still have been selected, given
//! everyone else's bids. Payments therefore never depend on the winner's own
//! bid, which makes truthful bidding dominant, and always cover that bid.

use crate::error::{Error, Result};
use crate::market::{Market, UserId};
use crate::rrset::{Coverage, RrCollection};

#[inline]
fn better(key: f64, u: UserId, best: Option<(f64, UserId)>) -> bool {
    match best {
        None => true,
        Some((bk, bu)) => key > bk || (key == bk && u < bu),
    }
}

/// Unselected user with positive gain and the best gain-per-bid ratio.
fn best_ratio(cov: &Coverage<'_>, market: &Market, exclude: Option<UserId>) -> Option<(UserId, f64)> {
    let mut best: Option<(f64, UserId)> = None;
    for u in 0..market.len() {
        if Some(u) == exclude || cov.is_selected(u) || !cov.has_gain(u) {
            continue;
        }
        let r = cov.gain(u) / market.bid(u);
        if better(r, u, best) {
            best = Some((r, u));
        }
    }
    best.map(|(_, u)| (u, cov.gain(u)))
}

fn check_budget(budget: f64) -> Result<()> {
    if budget > 0.0 && budget.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("budget {budget} must be positive and finite")))
    }
}

/// Winners in selection order. Stops when the best remaining user no longer
/// fits the budget or nobody adds coverage.
pub fn select_winners(rr: &RrCollection, market: &Market, budget: f64) -> Result<Vec<UserId>> {
    check_budget(budget)?;
    let mut cov = Coverage::new(rr, market);
    let mut spent = 0.0;
    while let Some((u, _)) = best_ratio(&cov, market, None) {
        if spent + market.bid(u) > budget {
            break;
        }
        cov.add(u);
        spent += market.bid(u);
    }
    Ok(cov.seeds().to_vec())
}

/// How a payment is derived from the greedy run without the winner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PaymentRule {
    /// Exact critical value: for every step `l` of the run without `i`, the bid
    /// at which `i` would displace that step's pick, capped by the budget left
    /// before it; the loop follows the run until its own first overflow.
    #[default]
    Critical,
    /// Displacement bids without the remaining-budget cap, with the loop cut
    /// once the winner's own bid no longer fits next to the prefix.
    Uncapped,
}

/// One step of the run without the winner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalStep {
    /// User picked at this step.
    pub rival: UserId,
    /// Largest bid at which the winner out-ranks `rival` here.
    pub displacing_bid: f64,
    /// Budget left before `rival` is charged.
    pub remaining: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Payment {
    pub user: UserId,
    pub amount: f64,
    pub steps: Vec<CriticalStep>,
    /// Budget left when the run without the winner ran out of useful users
    /// and the winner could still be picked, if that happened.
    pub leftover_term: Option<f64>,
}

impl Payment {
    pub fn critical_trace_max(&self) -> f64 {
        self.steps.iter().map(|s| s.displacing_bid).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Payment owed to `winner`.
pub fn compute_payment(rr: &RrCollection, market: &Market, budget: f64, winner: UserId) -> Result<Payment> {
    compute_payment_with(rr, market, budget, winner, PaymentRule::Critical)
}

pub fn compute_payment_with(
    rr: &RrCollection,
    market: &Market,
    budget: f64,
    winner: UserId,
    rule: PaymentRule,
) -> Result<Payment> {
    check_budget(budget)?;
    if winner >= market.len() {
        return Err(Error::domain(format!("user {winner} is not registered")));
    }
    let own_bid = market.bid(winner);
    let mut cov = Coverage::new(rr, market);
    let mut spent = 0.0;
    let mut amount = f64::NEG_INFINITY;
    let mut steps = Vec::new();
    let mut leftover_term = None;
    loop {
        let own_gain = cov.gain(winner);
        if own_gain <= 0.0 {
            // gains only shrink; the winner cannot be picked from here on
            break;
        }
        let Some((rival, rival_gain)) = best_ratio(&cov, market, Some(winner)) else {
            let left = budget - spent;
            let admissible = match rule {
                PaymentRule::Critical => left > 0.0,
                PaymentRule::Uncapped => spent + own_bid <= budget,
            };
            if admissible {
                debug_assert!(rule == PaymentRule::Critical || left >= own_bid);
                leftover_term = Some(left);
                amount = amount.max(left);
            }
            break;
        };
        let rival_bid = market.bid(rival);
        let displacing_bid = rival_bid * own_gain / rival_gain;
        let remaining = budget - spent;
        steps.push(CriticalStep { rival, displacing_bid, remaining });
        match rule {
            PaymentRule::Critical => {
                amount = amount.max(displacing_bid.min(remaining));
                if spent + rival_bid > budget {
                    break;
                }
                cov.add(rival);
                spent += rival_bid;
                if budget - spent <= amount {
                    // every later term is capped below the running maximum
                    break;
                }
            }
            PaymentRule::Uncapped => {
                amount = amount.max(displacing_bid);
                cov.add(rival);
                spent += rival_bid;
                if spent + own_bid > budget {
                    break;
                }
            }
        }
    }
    Ok(Payment { user: winner, amount, steps, leftover_term })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuctionOutcome {
    pub budget: f64,
    /// Winners in selection order.
    pub winners: Vec<UserId>,
    /// Parallel to `winners`.
    pub payments: Vec<Payment>,
    pub total_bid: f64,
    pub total_payment: f64,
    /// Greedy passes over the collection: one for selection, one per winner.
    pub greedy_passes: usize,
}

impl AuctionOutcome {
    /// `(sum p - sum b) / sum b`; `None` without winners.
    pub fn overpayment_ratio(&self) -> Option<f64> {
        overpayment_ratio(self.total_payment, self.total_bid)
    }

    pub fn is_winner(&self, u: UserId) -> bool {
        self.winners.contains(&u)
    }

    pub fn payment_of(&self, u: UserId) -> f64 {
        self.winners.iter().position(|&w| w == u).map_or(0.0, |i| self.payments[i].amount)
    }

    /// `p_u - cost` for a winner, 0 otherwise.
    pub fn utility(&self, u: UserId, cost: f64) -> f64 {
        if self.is_winner(u) {
            self.payment_of(u) - cost
        } else {
            0.0
        }
    }
}

pub fn overpayment_ratio(total_payment: f64, total_bid: f64) -> Option<f64> {
    (total_bid > 0.0).then(|| (total_payment - total_bid) / total_bid)
}

/// Selection and pricing on the same collection.
pub fn run_auction(rr: &RrCollection, market: &Market, budget: f64) -> Result<AuctionOutcome> {
    run_auction_split(rr, rr, market, budget, PaymentRule::Critical)
}

/// Selection on `select_rr`, pricing on `price_rr`. Using two different
/// collections voids the truthfulness guarantee; it exists for sensitivity runs.
pub fn run_auction_split(
    select_rr: &RrCollection,
    price_rr: &RrCollection,
    market: &Market,
    budget: f64,
    rule: PaymentRule,
) -> Result<AuctionOutcome> {
    let winners = select_winners(select_rr, market, budget)?;
    let payments = winners
        .iter()
        .map(|&w| compute_payment_with(price_rr, market, budget, w, rule))
        .collect::<Result<Vec<_>>>()?;
    let total_bid = winners.iter().map(|&w| market.bid(w)).sum();
    let total_payment = payments.iter().map(|p| p.amount).sum();
    Ok(AuctionOutcome { budget, greedy_passes: 1 + winners.len(), winners, payments, total_bid, total_payment })
}

/// Private per-user costs. Only the probe reads these; the mechanism sees bids.
#[derive(Clone, Debug, PartialEq)]
pub struct CostProfile(pub Vec<f64>);

impl CostProfile {
    /// Everyone's cost equals their current bid.
    pub fn truthful(market: &Market) -> Self {
        CostProfile(market.bids())
    }

    pub fn cost(&self, u: UserId) -> f64 {
        self.0[u]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbePoint {
    pub bid: f64,
    pub won: bool,
    pub payment: f64,
    pub utility: f64,
}

/// Utility of `user` as a function of its bid, everything else held fixed.
pub fn truthfulness_probe(
    rr: &RrCollection,
    market: &Market,
    costs: &CostProfile,
    user: UserId,
    bid_grid: &[f64],
    budget: f64,
) -> Result<Vec<ProbePoint>> {
    let cost = costs.cost(user);
    bid_grid
        .iter()
        .map(|&bid| {
            let m = market.with_bid(user, bid)?;
            let winners = select_winners(rr, &m, budget)?;
            if winners.contains(&user) {
                let p = compute_payment(rr, &m, budget, user)?.amount;
                Ok(ProbePoint { bid, won: true, payment: p, utility: p - cost })
            } else {
                Ok(ProbePoint { bid, won: false, payment: 0.0, utility: 0.0 })
            }
        })
        .collect()
}
