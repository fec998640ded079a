//! Direct mechanisms for the linear valuation model: every buyer reports the
//! signal vector only they observe, and allocation plus prices are computed
//! from the reported profile.
//!
//! Two market shapes are covered.
//!
//! * [`run_balanced`]: as many buyers as goods. Every assignment of one good
//!   per buyer is scored; each buyer faces a price schedule over assignments
//!   that never depends on their own report, and pays the gap between their
//!   highest schedule entry and the entry at the chosen assignment. Truthful
//!   reporting then maximizes a buyer's true payoff no matter what others
//!   report, because the price gap exactly mirrors (scaled by
//!   `c/(c-1) > 1`) the reported-welfare gap the buyer can influence.
//! * [`run_thin`]: more buyers than goods, so losing is possible. Winners pay
//!   their own valuation evaluated not at their reported signal but at the
//!   *clearing level*: the report at which the chosen allocation would just
//!   tie the best arrangement that excludes them. Below-clearing reports
//!   lose; above-clearing reports win at an unchanged price, which is what
//!   makes honesty safe.
//!
//! Both payment rules share one trick: a buyer's own report cancels out of
//! their price. [`payment_row_shift`] and [`residual_allocation`] expose the
//! quantities auditors need to confirm that cancellation numerically.

use crate::assign::{best_injective_assignment, AssignmentSolution, MAX_ASSIGNMENT_BUYERS};
use crate::error::{EngineError, Result};
use crate::model::{Allocation, AuctionOutcome, Diagnostics, LinearValuationModel, SignalProfile};
use crate::MechanismConfig;
use itertools::Itertools;

/// Rejects models whose coefficients break the payment rules (non-positive
/// spillover slopes, own-effect ratios at or below one) and malformed report
/// profiles.
fn require_valid(model: &LinearValuationModel, reports: &SignalProfile) -> Result<()> {
    model.check_signals(reports)?;
    let report = model.validate(reports);
    if !report.is_valid() {
        return Err(EngineError::InvalidModel(report.errors.join("; ")));
    }
    Ok(())
}

/// Reported per-good valuations, `values[buyer][good]`.
fn reported_values(model: &LinearValuationModel, reports: &SignalProfile) -> Vec<Vec<f64>> {
    (0..model.n)
        .map(|i| (0..model.m).map(|k| model.valuation(reports, i, k)).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Balanced market: one good for every buyer.
// ---------------------------------------------------------------------------

/// Everything the balanced mechanism computes before an assignment is
/// chosen. The verification harness uses this to price every optimum, not
/// just the selected one.
pub(crate) struct BalancedRun {
    /// Buyer-to-good maps, in lexicographic order of the map itself.
    pub perms: Vec<Vec<usize>>,
    /// Reported welfare of each assignment.
    pub welfare: Vec<f64>,
    /// Price schedule: `payment_table[i][p]` for buyer `i` under `perms[p]`.
    pub payment_table: Vec<Vec<f64>>,
    /// Indices into `perms` of all welfare-maximal assignments, sorted by
    /// the good-to-buyer vector the tie rule compares.
    pub optima: Vec<usize>,
}

impl BalancedRun {
    pub fn allocation_of(&self, perm_index: usize) -> Allocation {
        let perm = &self.perms[perm_index];
        let mut assigned = vec![None; perm.len()];
        for (buyer, &good) in perm.iter().enumerate() {
            assigned[good] = Some(buyer);
        }
        Allocation::new(assigned)
    }

    /// Payments if assignment `perm_index` is the one put in place: the gap
    /// between each buyer's best schedule entry and the entry here.
    pub fn payments_for(&self, perm_index: usize) -> Vec<f64> {
        self.payment_table
            .iter()
            .map(|row| {
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                best - row[perm_index]
            })
            .collect()
    }
}

pub(crate) fn evaluate_balanced(
    model: &LinearValuationModel,
    reports: &SignalProfile,
    cfg: &MechanismConfig,
) -> Result<BalancedRun> {
    if model.n != model.m {
        return Err(EngineError::UnsupportedShape(format!(
            "balanced market needs as many buyers as goods, got {} and {}",
            model.n, model.m
        )));
    }
    if model.n > MAX_ASSIGNMENT_BUYERS {
        return Err(EngineError::SizeGuard(format!(
            "{} buyers exceeds the assignment limit of {MAX_ASSIGNMENT_BUYERS}",
            model.n
        )));
    }
    require_valid(model, reports)?;
    let n = model.n;
    let values = reported_values(model, reports);

    let perms: Vec<Vec<usize>> = (0..n).permutations(n).collect();
    let welfare: Vec<f64> = perms
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(i, &k)| values[i][k]).sum())
        .collect();

    // Price schedule: scaled reported welfare, minus the buyer's own reported
    // value at this assignment, minus a scaled sum of the buyer's spillovers.
    // Their own report enters all three terms in ways that cancel exactly.
    let payment_table: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let ratio = model.c[i] / (model.c[i] - 1.0);
            let own_spill: f64 = (0..n).map(|k| model.spillover(i, reports.get(i, k))).sum();
            perms
                .iter()
                .zip(&welfare)
                .map(|(perm, w)| ratio * w - values[i][perm[i]] - ratio * own_spill)
                .collect()
        })
        .collect();

    let best = welfare.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut optima: Vec<usize> = (0..perms.len())
        .filter(|&p| welfare[p] >= best - cfg.epsilon)
        .collect();
    optima.sort_by(|&a, &b| {
        let run = |p: usize| {
            let perm = &perms[p];
            let mut assigned = vec![0usize; n];
            for (buyer, &good) in perm.iter().enumerate() {
                assigned[good] = buyer;
            }
            assigned
        };
        run(a).cmp(&run(b))
    });
    Ok(BalancedRun {
        perms,
        welfare,
        payment_table,
        optima,
    })
}

/// Runs the balanced-market auction on reported signals. Requires one good
/// per buyer (`n == m`).
pub fn run_balanced(
    model: &LinearValuationModel,
    reports: &SignalProfile,
    cfg: &MechanismConfig,
) -> Result<AuctionOutcome> {
    let run = evaluate_balanced(model, reports, cfg)?;
    let pick = cfg.tie.breaker().pick(run.optima.len());
    let selected = run.optima[pick];
    let allocation = run.allocation_of(selected);
    let payments = run.payments_for(selected);
    let values = reported_values(model, reports);
    let utilities: Vec<f64> = (0..model.n)
        .map(|i| values[i][run.perms[selected][i]] - payments[i])
        .collect();
    Ok(AuctionOutcome {
        allocation,
        payments,
        utilities,
        welfare: run.welfare[selected],
        diagnostics: Diagnostics::OneGoodEach {
            permutations: run.perms,
            payment_table: run.payment_table,
            selected,
            optima: run.optima,
        },
    })
}

/// Largest movement in buyer `buyer`'s price schedule when their reported
/// row is replaced by each row in `alternatives`. The schedule is built to
/// be immune to the buyer's own report, so this should be zero to rounding.
pub fn payment_row_shift(
    model: &LinearValuationModel,
    reports: &SignalProfile,
    buyer: usize,
    alternatives: &[Vec<f64>],
    cfg: &MechanismConfig,
) -> Result<f64> {
    let base = evaluate_balanced(model, reports, cfg)?;
    let mut worst: f64 = 0.0;
    for row in alternatives {
        if row.len() != model.m {
            return Err(EngineError::DimensionMismatch(format!(
                "alternative row has {} entries, expected {}",
                row.len(),
                model.m
            )));
        }
        let moved = evaluate_balanced(model, &reports.with_row(buyer, row.clone()), cfg)?;
        for (a, b) in base.payment_table[buyer]
            .iter()
            .zip(&moved.payment_table[buyer])
        {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Thin market: more buyers than goods.
// ---------------------------------------------------------------------------

pub(crate) struct ThinRun {
    pub values: Vec<Vec<f64>>,
    pub solution: AssignmentSolution,
}

pub(crate) struct ThinPricing {
    pub payments: Vec<f64>,
    pub clearing_signal: Vec<Option<f64>>,
    pub residual: Vec<Option<Allocation>>,
}

pub(crate) fn evaluate_thin(
    model: &LinearValuationModel,
    reports: &SignalProfile,
    cfg: &MechanismConfig,
) -> Result<ThinRun> {
    if model.n <= model.m {
        return Err(EngineError::UnsupportedShape(format!(
            "thin market needs more buyers than goods, got {} and {}",
            model.n, model.m
        )));
    }
    require_valid(model, reports)?;
    let values = reported_values(model, reports);
    let solution = best_injective_assignment(&values, model.n, model.m, cfg.tie, cfg.epsilon)?;
    Ok(ThinRun { values, solution })
}

/// Prices a particular optimum of the thin market. Winners pay their
/// valuation at the clearing level of their own signal; losers pay nothing.
pub(crate) fn price_thin(
    model: &LinearValuationModel,
    reports: &SignalProfile,
    values: &[Vec<f64>],
    allocation: &Allocation,
    cfg: &MechanismConfig,
) -> Result<ThinPricing> {
    let n = model.n;
    let m = model.m;
    let mut payments = vec![0.0; n];
    let mut clearing_signal = vec![None; n];
    let mut residual = vec![None; n];

    // Winner of each good under this allocation; every good is assigned.
    let winner_of: Vec<usize> = (0..m)
        .map(|k| allocation.assigned[k].expect("thin market assigns every good"))
        .collect();

    for i in 0..n {
        let Some(good) = allocation.good_of(i) else {
            continue;
        };
        // Best arrangement of all goods among everyone else. By construction
        // it cannot depend on buyer i's report; a debug build rechecks that.
        let without_i = residual_allocation(model, reports, i, cfg)?;
        #[cfg(debug_assertions)]
        {
            let bumped: Vec<f64> = (0..m).map(|k| reports.get(i, k) + 1.75).collect();
            let moved =
                residual_allocation(model, &reports.with_row(i, bumped), i, cfg)?;
            debug_assert_eq!(
                without_i.optima, moved.optima,
                "residual arrangement reacted to the excluded buyer's report"
            );
        }
        let rival = without_i.best.assigned[good].expect("residual assigns every good");

        // Reported-value handicap of this allocation versus the residual one
        // on all *other* goods.
        let handicap: f64 = (0..m)
            .filter(|&k| k != good)
            .map(|k| {
                let j = without_i.best.assigned[k].expect("residual assigns every good");
                values[j][k] - values[winner_of[k]][k]
            })
            .sum();

        // Clearing level: the reported signal at which buyer i's value for
        // this good ties the rival's, adjusted by the handicap. The buyer's
        // own-effect premium (c - 1 times the spillover slope) is what makes
        // the equation solvable in one unknown.
        let rival_signal = reports.get(rival, good);
        let offset = (model.c[i] - 1.0) * model.f_intercept[i] + model.d[i]
            + model.spillover(rival, rival_signal)
            - model.own_value(rival, rival_signal);
        let gain = (model.c[i] - 1.0) * model.f_slope[i];
        let clearing = (handicap - offset) / gain;

        let at_clearing = reports.with_entry(i, good, clearing);
        payments[i] = model.valuation(&at_clearing, i, good);
        clearing_signal[i] = Some(clearing);
        residual[i] = Some(without_i.best);
    }
    let _ = cfg;
    Ok(ThinPricing {
        payments,
        clearing_signal,
        residual,
    })
}

/// Runs the thin-market auction on reported signals. Requires strictly more
/// buyers than goods (`n > m`); every good is assigned.
pub fn run_thin(
    model: &LinearValuationModel,
    reports: &SignalProfile,
    cfg: &MechanismConfig,
) -> Result<AuctionOutcome> {
    let run = evaluate_thin(model, reports, cfg)?;
    let allocation = run.solution.best.clone();
    let pricing = price_thin(model, reports, &run.values, &allocation, cfg)?;
    let utilities: Vec<f64> = (0..model.n)
        .map(|i| match allocation.good_of(i) {
            Some(k) => run.values[i][k] - pricing.payments[i],
            None => 0.0,
        })
        .collect();
    Ok(AuctionOutcome {
        allocation,
        payments: pricing.payments,
        utilities,
        welfare: run.solution.value,
        diagnostics: Diagnostics::ThinMarket {
            clearing_signal: pricing.clearing_signal,
            residual: pricing.residual,
            optima: run.solution.optima,
        },
    })
}

/// Best assignment of every good among all buyers except `excluded`, labeled
/// with the original buyer indices. Needs at least as many remaining buyers
/// as goods.
pub fn residual_allocation(
    model: &LinearValuationModel,
    reports: &SignalProfile,
    excluded: usize,
    cfg: &MechanismConfig,
) -> Result<AssignmentSolution> {
    if excluded >= model.n {
        return Err(EngineError::DimensionMismatch(format!(
            "no buyer {excluded} among {}",
            model.n
        )));
    }
    if model.n - 1 < model.m {
        return Err(EngineError::UnsupportedShape(format!(
            "removing a buyer leaves {} for {} goods",
            model.n - 1,
            model.m
        )));
    }
    require_valid(model, reports)?;
    let others: Vec<usize> = (0..model.n).filter(|&j| j != excluded).collect();
    let values: Vec<Vec<f64>> = others
        .iter()
        .map(|&j| (0..model.m).map(|k| model.valuation(reports, j, k)).collect())
        .collect();
    let mut sol =
        best_injective_assignment(&values, model.n - 1, model.m, cfg.tie, cfg.epsilon)?;
    let relabel = |alloc: &mut Allocation| {
        for slot in alloc.assigned.iter_mut() {
            if let Some(j) = *slot {
                *slot = Some(others[j]);
            }
        }
    };
    relabel(&mut sol.best);
    sol.optima.iter_mut().for_each(relabel);
    sol.optima.sort();
    Ok(sol)
}
