//! The pivot mechanism over subset bids: each buyer names a price for every
//! bundle of goods they care about, the goods are split to maximize the total
//! of the accepted bids, and each winner pays the externality they impose,
//! measured as how much better off everyone else would be in a world without
//! them.
//!
//! Payment for buyer `i` is computed as
//! `best welfare without i  -  best welfare  +  i's accepted bid`,
//! which is nonnegative and does not move when `i` rewords their bid in any
//! way that keeps the chosen allocation optimal. [`audit_payments`] rechecks
//! both facts on a concrete instance, recomputing the externality from the
//! residual allocation itself as a second route.

use std::collections::BTreeMap;

use crate::assign::{best_partition, AssignmentSolution};
use crate::error::{EngineError, Result};
use crate::model::{Allocation, AuctionOutcome, Diagnostics, LinearValuationModel, SignalProfile};
use crate::MechanismConfig;

/// One buyer's price list over bundles of goods. Bundles are stored as good
/// bitmasks; a bundle with no entry is valued at zero, and the empty bundle
/// is always worth zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetBid {
    goods: usize,
    entries: BTreeMap<u32, f64>,
}

impl SubsetBid {
    /// Empty price list over `goods` goods (every bundle worth zero).
    pub fn new(goods: usize) -> Self {
        Self {
            goods,
            entries: BTreeMap::new(),
        }
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    /// Prices `bundle` (a set of good indices) at `amount`. Pricing the empty
    /// bundle is only accepted at zero, since the mechanism fixes it there.
    pub fn set(&mut self, bundle: &[usize], amount: f64) -> Result<()> {
        if !amount.is_finite() {
            return Err(EngineError::NonFinite(format!("bid for {bundle:?}")));
        }
        let mask = self.mask_of(bundle)?;
        if mask == 0 {
            if amount != 0.0 {
                return Err(EngineError::InvalidBid(
                    "the empty bundle is fixed at zero".into(),
                ));
            }
            return Ok(());
        }
        self.entries.insert(mask, amount);
        Ok(())
    }

    fn mask_of(&self, bundle: &[usize]) -> Result<u32> {
        let mut mask = 0u32;
        for &k in bundle {
            if k >= self.goods {
                return Err(EngineError::DimensionMismatch(format!(
                    "good {k} out of range for {} goods",
                    self.goods
                )));
            }
            mask |= 1 << k;
        }
        Ok(mask)
    }

    /// Price of a bundle given as a bitmask; unpriced bundles are zero.
    pub fn value_of_mask(&self, mask: u32) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        self.entries.get(&mask).copied().unwrap_or(0.0)
    }

    /// Price of a bundle given as good indices.
    pub fn value(&self, bundle: &[usize]) -> f64 {
        let mask = self
            .mask_of(bundle)
            .expect("bundle indices validated by caller");
        self.value_of_mask(mask)
    }

    /// All priced bundles in deterministic order, as (good indices, price).
    pub fn entries(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.entries.iter().map(|(&mask, &amount)| {
            let bundle: Vec<usize> = (0..self.goods).filter(|k| mask & (1 << k) != 0).collect();
            (bundle, amount)
        })
    }

    /// The bid a buyer with nothing to hide would submit: every nonempty
    /// bundle priced at its unit-demand value under the model, signals taken
    /// at face value.
    pub fn truthful(
        model: &LinearValuationModel,
        signals: &SignalProfile,
        buyer: usize,
    ) -> Result<Self> {
        model.check_signals(signals)?;
        let m = model.m;
        if m >= 32 {
            return Err(EngineError::SizeGuard(format!(
                "{m} goods is too many to price every bundle"
            )));
        }
        let mut bid = SubsetBid::new(m);
        for mask in 1u32..(1 << m) {
            let bundle: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
            let value = model.set_valuation(signals, buyer, &bundle);
            bid.set(&bundle, value)?;
        }
        Ok(bid)
    }
}

fn check_bids(bids: &[SubsetBid]) -> Result<(usize, usize)> {
    let n = bids.len();
    if n == 0 {
        return Err(EngineError::UnsupportedShape("no bidders".into()));
    }
    let m = bids[0].goods;
    if m == 0 {
        return Err(EngineError::UnsupportedShape("no goods".into()));
    }
    if let Some(i) = bids.iter().position(|b| b.goods != m) {
        return Err(EngineError::DimensionMismatch(format!(
            "bid {i} prices {} goods, expected {m}",
            bids[i].goods
        )));
    }
    Ok((n, m))
}

/// Best split of the goods among all bidders, by total accepted bid.
fn best_split(bids: &[SubsetBid], cfg: &MechanismConfig) -> Result<AssignmentSolution> {
    let (n, m) = check_bids(bids)?;
    best_partition(
        n,
        m,
        |i, mask| bids[i].value_of_mask(mask),
        cfg.tie,
        cfg.epsilon,
    )
}

/// Best welfare achievable with buyer `excluded` barred from bidding. Zero
/// when nobody is left.
fn residual_welfare(bids: &[SubsetBid], excluded: usize, cfg: &MechanismConfig) -> Result<f64> {
    Ok(residual_split(bids, excluded, cfg)?.map_or(0.0, |sol| sol.value))
}

/// Residual allocation with `excluded` removed, reindexed back to the
/// original buyer numbering. `None` when there are no other buyers.
fn residual_split(
    bids: &[SubsetBid],
    excluded: usize,
    cfg: &MechanismConfig,
) -> Result<Option<AssignmentSolution>> {
    let (n, m) = check_bids(bids)?;
    if n == 1 {
        return Ok(None);
    }
    let others: Vec<usize> = (0..n).filter(|&j| j != excluded).collect();
    let mut sol = best_partition(
        n - 1,
        m,
        |j, mask| bids[others[j]].value_of_mask(mask),
        cfg.tie,
        cfg.epsilon,
    )?;
    let relabel = |alloc: &mut Allocation| {
        for slot in alloc.assigned.iter_mut() {
            if let Some(j) = *slot {
                *slot = Some(others[j]);
            }
        }
    };
    relabel(&mut sol.best);
    sol.optima.iter_mut().for_each(relabel);
    Ok(Some(sol))
}

/// Payments for a given choice among the optimal allocations. Exposed so the
/// verification harness can average outcomes over the whole optimum set.
pub(crate) fn payments_for(
    bids: &[SubsetBid],
    allocation: &Allocation,
    best_welfare: f64,
    residual: &[f64],
) -> Vec<f64> {
    bids.iter()
        .enumerate()
        .map(|(i, bid)| {
            let own = bid.value(&allocation.goods_of(i));
            residual[i] - best_welfare + own
        })
        .collect()
}

pub(crate) struct VcgRun {
    pub solution: AssignmentSolution,
    pub residual: Vec<f64>,
}

pub(crate) fn evaluate(bids: &[SubsetBid], cfg: &MechanismConfig) -> Result<VcgRun> {
    let solution = best_split(bids, cfg)?;
    let residual = (0..bids.len())
        .map(|i| residual_welfare(bids, i, cfg))
        .collect::<Result<Vec<f64>>>()?;
    Ok(VcgRun { solution, residual })
}

/// Runs the pivot mechanism. Utilities in the outcome are taken at face
/// value from the bids (accepted bid minus payment).
pub fn run_vcg(bids: &[SubsetBid], cfg: &MechanismConfig) -> Result<AuctionOutcome> {
    let run = evaluate(bids, cfg)?;
    let allocation = run.solution.best.clone();
    let payments = payments_for(bids, &allocation, run.solution.value, &run.residual);
    let utilities: Vec<f64> = bids
        .iter()
        .enumerate()
        .map(|(i, bid)| bid.value(&allocation.goods_of(i)) - payments[i])
        .collect();
    Ok(AuctionOutcome {
        allocation,
        payments,
        utilities,
        welfare: run.solution.value,
        diagnostics: Diagnostics::Vcg {
            best_welfare: run.solution.value,
            residual_welfare: run.residual,
            optima: run.solution.optima,
        },
    })
}

/// Cross-checks the payment rule on one instance:
///
/// * recomputes each payment from the residual allocation itself (summing
///   the other buyers' accepted bids there and under the chosen allocation)
///   and reports the largest gap against the direct formula;
/// * confirms no payment is meaningfully negative;
/// * replaces each winner's bid with a flat bid on just their bundle (raised
///   by an arbitrary amount) and each loser's with silence, and confirms
///   payments don't move.
#[derive(Debug, Clone, PartialEq)]
pub struct VcgPaymentAudit {
    pub payments: Vec<f64>,
    pub externality_route: Vec<f64>,
    pub max_route_gap: f64,
    pub min_payment: f64,
    pub max_reword_shift: f64,
    pub passed: bool,
}

pub fn audit_payments(bids: &[SubsetBid], cfg: &MechanismConfig) -> Result<VcgPaymentAudit> {
    let (n, _m) = check_bids(bids)?;
    let run = evaluate(bids, cfg)?;
    let chosen = &run.solution.best;
    let payments = payments_for(bids, chosen, run.solution.value, &run.residual);

    // Second route: the payment is what the others gain by i's absence,
    // summed bundle by bundle over the two allocations.
    let mut externality_route = Vec::with_capacity(n);
    for i in 0..n {
        let without_i = residual_split(bids, i, cfg)?;
        let gain: f64 = match without_i {
            None => 0.0,
            Some(sol) => (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    bids[j].value(&sol.best.goods_of(j)) - bids[j].value(&chosen.goods_of(j))
                })
                .sum(),
        };
        externality_route.push(gain);
    }
    let max_route_gap = payments
        .iter()
        .zip(&externality_route)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let min_payment = payments.iter().copied().fold(f64::INFINITY, f64::min);

    // Rewording: winners restate their accepted bundle at a higher price and
    // drop everything else; losers go silent. The allocation stays optimal,
    // so payments must not move.
    let mut max_reword_shift: f64 = 0.0;
    for i in 0..n {
        let bundle = chosen.goods_of(i);
        let mut reworded = bids.to_vec();
        let mut replacement = SubsetBid::new(reworded[i].goods);
        if !bundle.is_empty() {
            replacement.set(&bundle, bids[i].value(&bundle) + 5.0)?;
        }
        reworded[i] = replacement;
        let rerun = evaluate(&reworded, cfg)?;
        let new_payments = payments_for(
            &reworded,
            &rerun.solution.best,
            rerun.solution.value,
            &rerun.residual,
        );
        max_reword_shift = max_reword_shift.max((new_payments[i] - payments[i]).abs());
    }

    let passed = max_route_gap <= cfg.epsilon
        && min_payment >= -cfg.epsilon
        && max_reword_shift <= cfg.epsilon;
    Ok(VcgPaymentAudit {
        payments,
        externality_route,
        max_route_gap,
        min_payment,
        max_reword_shift,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> MechanismConfig {
        MechanismConfig::default()
    }

    fn singleton_bid(goods: usize, good: usize, amount: f64) -> SubsetBid {
        let mut bid = SubsetBid::new(goods);
        bid.set(&[good], amount).unwrap();
        bid
    }

    #[test]
    fn one_good_two_buyers_is_a_second_price_auction() {
        let bids = vec![singleton_bid(1, 0, 10.0), singleton_bid(1, 0, 7.0)];
        let outcome = run_vcg(&bids, &cfg()).unwrap();
        assert_eq!(outcome.allocation.assigned, vec![Some(0)]);
        assert!((outcome.payments[0] - 7.0).abs() < 1e-12);
        assert_eq!(outcome.payments[1], 0.0);
        assert!((outcome.utilities[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn a_lone_buyer_pays_nothing() {
        let bids = vec![singleton_bid(1, 0, 10.0)];
        let outcome = run_vcg(&bids, &cfg()).unwrap();
        assert_eq!(outcome.allocation.assigned, vec![Some(0)]);
        assert_eq!(outcome.payments[0], 0.0);
    }

    fn additive_bid(goods: usize, values: &[f64]) -> SubsetBid {
        let mut bid = SubsetBid::new(goods);
        for mask in 1u32..(1 << goods) {
            let bundle: Vec<usize> = (0..goods).filter(|k| mask & (1 << k) != 0).collect();
            let total: f64 = bundle.iter().map(|&k| values[k]).sum();
            bid.set(&bundle, total).unwrap();
        }
        bid
    }

    #[test]
    fn two_goods_two_additive_buyers_hand_checked() {
        // Buyer 0 values the goods at (5, 1), buyer 1 at (2, 4). The split
        // gives each their favourite; the externalities are 2 and 1.
        let bids = vec![additive_bid(2, &[5.0, 1.0]), additive_bid(2, &[2.0, 4.0])];
        let outcome = run_vcg(&bids, &cfg()).unwrap();
        assert_eq!(outcome.allocation.assigned, vec![Some(0), Some(1)]);
        assert!((outcome.welfare - 9.0).abs() < 1e-12);
        assert!((outcome.payments[0] - 2.0).abs() < 1e-12);
        assert!((outcome.payments[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn goods_nobody_prices_stay_unsold() {
        let bids = vec![singleton_bid(2, 0, 3.0), singleton_bid(2, 0, 1.0)];
        let outcome = run_vcg(&bids, &cfg()).unwrap();
        assert_eq!(outcome.allocation.assigned, vec![Some(0), None]);
        assert!((outcome.payments[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bundle_bidder_can_beat_two_singles() {
        let mut pair = SubsetBid::new(2);
        pair.set(&[0, 1], 7.0).unwrap();
        let bids = vec![pair, additive_bid(2, &[3.0, 3.0])];
        let outcome = run_vcg(&bids, &cfg()).unwrap();
        assert_eq!(outcome.allocation.assigned, vec![Some(0), Some(0)]);
        // Without buyer 0 the other would take both for 6.
        assert!((outcome.payments[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_bundle_price_is_pinned_at_zero() {
        let mut bid = SubsetBid::new(2);
        assert!(bid.set(&[], 0.0).is_ok());
        assert!(matches!(
            bid.set(&[], 1.0),
            Err(EngineError::InvalidBid(_))
        ));
        assert!(bid.set(&[2], 1.0).is_err());
    }

    fn random_bids(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<SubsetBid> {
        (0..n)
            .map(|_| {
                let mut bid = SubsetBid::new(m);
                for mask in 1u32..(1 << m) {
                    let bundle: Vec<usize> =
                        (0..m).filter(|k| mask & (1 << k) != 0).collect();
                    bid.set(&bundle, rng.random_range(0.0..10.0)).unwrap();
                }
                bid
            })
            .collect()
    }

    #[test]
    fn audit_passes_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for round in 0..100 {
            let n = 2 + (round % 2);
            let bids = random_bids(&mut rng, n, 2);
            let audit = audit_payments(&bids, &cfg()).unwrap();
            assert!(
                audit.passed,
                "audit failed: route gap {}, min payment {}, reword shift {}",
                audit.max_route_gap, audit.min_payment, audit.max_reword_shift
            );
        }
    }

    #[test]
    fn truthful_bid_prices_bundles_at_unit_demand_values() {
        let model = LinearValuationModel::new(
            2,
            2,
            vec![1.0 / 3.0, 0.5],
            vec![0.0, 0.0],
            vec![3.0, 2.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let s = SignalProfile(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        let bid = SubsetBid::truthful(&model, &s, 0).unwrap();
        assert!((bid.value(&[0]) - 2.0).abs() < 1e-12);
        let best_single = model.valuation(&s, 0, 0).max(model.valuation(&s, 0, 1));
        assert!((bid.value(&[0, 1]) - best_single).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn winners_never_pay_more_than_their_bid(
                v0 in proptest::collection::vec(0.0..10.0f64, 2),
                v1 in proptest::collection::vec(0.0..10.0f64, 2),
                v2 in proptest::collection::vec(0.0..10.0f64, 2),
            ) {
                let bids = vec![
                    additive_bid(2, &v0),
                    additive_bid(2, &v1),
                    additive_bid(2, &v2),
                ];
                let outcome = run_vcg(&bids, &cfg()).unwrap();
                for i in 0..3 {
                    prop_assert!(outcome.payments[i] >= -1e-9);
                    prop_assert!(outcome.utilities[i] >= -1e-9);
                }
                let paid: f64 = outcome.payments.iter().sum();
                prop_assert!(paid <= outcome.welfare + 1e-9);
            }
        }
    }
}
