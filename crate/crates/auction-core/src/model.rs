//! The valuation model shared by the signal and bid-function mechanisms, plus
//! the outcome types every mechanism returns.
//!
//! Buyer `i`'s value for good `K` depends on the whole column of signals for
//! that good, not just their own: each rival `j` contributes a spillover term
//! `f_slope[j] * s[j][K] + f_intercept[j]`, while the buyer's own signal
//! enters through `c[i]` times their own spillover plus `d[i]`. Requiring
//! `c[i] > 1` makes a buyer's own signal matter more to themselves than to
//! anyone else, which is what lets the payment rules in this crate disentangle
//! who should win from what they should pay. Buyers want at most one good: the
//! value of a set is the value of the best good in it.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// Valuation primitives: per-buyer affine signal maps plus the own-effect
/// weighting. `f_slope`, `f_intercept`, `c`, `d` all have length `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearValuationModel {
    /// Number of buyers.
    pub n: usize,
    /// Number of goods.
    pub m: usize,
    /// Slope of each buyer's spillover map; must be positive for the
    /// mechanisms to work.
    pub f_slope: Vec<f64>,
    /// Intercept of each buyer's spillover map.
    pub f_intercept: Vec<f64>,
    /// Own-effect ratio; each entry must exceed one.
    pub c: Vec<f64>,
    /// Additive shift on the buyer's own term.
    pub d: Vec<f64>,
}

impl LinearValuationModel {
    /// Builds a model after checking dimensions and finiteness. Economic
    /// requirements (positive slopes, `c > 1`) are deliberately not enforced
    /// here; [`LinearValuationModel::validate`] reports them so that callers
    /// can inspect nonconforming instances instead of being unable to
    /// construct them.
    pub fn new(
        n: usize,
        m: usize,
        f_slope: Vec<f64>,
        f_intercept: Vec<f64>,
        c: Vec<f64>,
        d: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(EngineError::UnsupportedShape(
                "need at least one buyer and one good".into(),
            ));
        }
        for (name, v) in [
            ("f_slope", &f_slope),
            ("f_intercept", &f_intercept),
            ("c", &c),
            ("d", &d),
        ] {
            if v.len() != n {
                return Err(EngineError::DimensionMismatch(format!(
                    "{name} has length {}, expected one entry per buyer ({n})",
                    v.len()
                )));
            }
            if let Some(j) = v.iter().position(|x| !x.is_finite()) {
                return Err(EngineError::NonFinite(format!("{name}[{j}]")));
            }
        }
        Ok(Self {
            n,
            m,
            f_slope,
            f_intercept,
            c,
            d,
        })
    }

    /// Contribution of buyer `i`'s signal `x` to every *other* buyer's value
    /// for the same good.
    pub fn spillover(&self, i: usize, x: f64) -> f64 {
        self.f_slope[i] * x + self.f_intercept[i]
    }

    /// Contribution of buyer `i`'s signal `x` to their *own* value: the
    /// spillover scaled up by `c[i]`, shifted by `d[i]`.
    pub fn own_value(&self, i: usize, x: f64) -> f64 {
        self.c[i] * self.spillover(i, x) + self.d[i]
    }

    /// Buyer `buyer`'s value for `good` given everyone's signals.
    pub fn valuation(&self, signals: &SignalProfile, buyer: usize, good: usize) -> f64 {
        let mut v = self.own_value(buyer, signals.get(buyer, good));
        for j in 0..self.n {
            if j != buyer {
                v += self.spillover(j, signals.get(j, good));
            }
        }
        v
    }

    /// Value of a set of goods under unit demand: zero for the empty set,
    /// otherwise the best single good in the set.
    pub fn set_valuation(&self, signals: &SignalProfile, buyer: usize, goods: &[usize]) -> f64 {
        goods
            .iter()
            .map(|&k| self.valuation(signals, buyer, k))
            .fold(None, |best: Option<f64>, v| {
                Some(best.map_or(v, |b| b.max(v)))
            })
            .unwrap_or(0.0)
    }

    /// Total realized value of an allocation: each buyer contributes the
    /// unit-demand value of the goods assigned to them.
    pub fn welfare(&self, signals: &SignalProfile, allocation: &Allocation) -> f64 {
        (0..self.n)
            .map(|i| self.set_valuation(signals, i, &allocation.goods_of(i)))
            .sum()
    }

    /// Checks the economic assumptions and scans the given signals for
    /// trouble. Violations of hard assumptions (slopes, own-effect ratios,
    /// more goods than buyers) land in `errors`; negative valuations are
    /// legal but break the usual participation logic, so they only warn.
    pub fn validate(&self, signals: &SignalProfile) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.m > self.n {
            report.errors.push(format!(
                "more goods ({}) than buyers ({}); unit demand would strand a good",
                self.m, self.n
            ));
        }
        for i in 0..self.n {
            if self.f_slope[i] <= 0.0 {
                report.errors.push(format!(
                    "buyer {i}: spillover slope {} is not positive",
                    self.f_slope[i]
                ));
            }
            if self.c[i] <= 1.0 {
                report.errors.push(format!(
                    "buyer {i}: own-effect ratio {} does not exceed 1",
                    self.c[i]
                ));
            }
        }
        if let Err(e) = self.check_signals(signals) {
            report.errors.push(e.to_string());
            return report;
        }
        for i in 0..self.n {
            for k in 0..self.m {
                let v = self.valuation(signals, i, k);
                if v < 0.0 {
                    report.warnings.push(format!(
                        "buyer {i} values good {k} at {v}; negative values void the \
                         guarantee that participation is worthwhile"
                    ));
                }
            }
        }
        report
    }

    /// Confirms a signal profile has one row per buyer, one entry per good,
    /// and no non-finite entries.
    pub fn check_signals(&self, signals: &SignalProfile) -> Result<()> {
        if signals.rows() != self.n {
            return Err(EngineError::DimensionMismatch(format!(
                "signal profile has {} rows, expected one per buyer ({})",
                signals.rows(),
                self.n
            )));
        }
        for (i, row) in signals.0.iter().enumerate() {
            if row.len() != self.m {
                return Err(EngineError::DimensionMismatch(format!(
                    "signal row {i} has {} entries, expected one per good ({})",
                    row.len(),
                    self.m
                )));
            }
            if let Some(k) = row.iter().position(|x| !x.is_finite()) {
                return Err(EngineError::NonFinite(format!("signal[{i}][{k}]")));
            }
        }
        Ok(())
    }
}

/// Outcome of [`LinearValuationModel::validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// One signal per buyer per good, indexed `[buyer][good]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalProfile(pub Vec<Vec<f64>>);

impl SignalProfile {
    pub fn rows(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, buyer: usize, good: usize) -> f64 {
        self.0[buyer][good]
    }

    /// Copy of this profile with buyer `buyer`'s whole row replaced.
    pub fn with_row(&self, buyer: usize, row: Vec<f64>) -> Self {
        let mut s = self.clone();
        s.0[buyer] = row;
        s
    }

    /// Copy of this profile with a single entry replaced.
    pub fn with_entry(&self, buyer: usize, good: usize, value: f64) -> Self {
        let mut s = self.clone();
        s.0[buyer][good] = value;
        s
    }
}

/// Who holds each good. `assigned[k]` is the buyer that good `k` went to, or
/// `None` if it stays unsold. This shape covers both the one-good-per-buyer
/// mechanisms (every entry `Some`, all distinct) and subset allocations,
/// where several goods may point at the same buyer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation {
    pub assigned: Vec<Option<usize>>,
}

impl Allocation {
    pub fn new(assigned: Vec<Option<usize>>) -> Self {
        Self { assigned }
    }

    /// Allocation over `m` goods with nothing assigned.
    pub fn empty(m: usize) -> Self {
        Self {
            assigned: vec![None; m],
        }
    }

    pub fn goods(&self) -> usize {
        self.assigned.len()
    }

    /// Goods held by `buyer`, in index order.
    pub fn goods_of(&self, buyer: usize) -> Vec<usize> {
        self.assigned
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == Some(buyer))
            .map(|(k, _)| k)
            .collect()
    }

    /// The single good held by `buyer`, if the buyer holds exactly one.
    pub fn good_of(&self, buyer: usize) -> Option<usize> {
        let goods = self.goods_of(buyer);
        match goods.as_slice() {
            [k] => Some(*k),
            _ => None,
        }
    }
}

/// What a mechanism run produces: the chosen allocation, what each buyer
/// pays, the utilities implied by the submitted bids, total reported welfare,
/// and mechanism-specific intermediate artifacts for auditing.
///
/// `utilities` are *reported* utilities: value under the submitted bids minus
/// payment. True utilities depend on signals the mechanism never sees; the
/// verification harness recomputes them from the model when it has ground
/// truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub allocation: Allocation,
    pub payments: Vec<f64>,
    pub utilities: Vec<f64>,
    pub welfare: f64,
    pub diagnostics: Diagnostics,
}

/// Mechanism-specific intermediate results, kept so a reader can reconstruct
/// every payment by hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case")]
pub enum Diagnostics {
    Vcg {
        /// Best total bid value over all feasible allocations.
        best_welfare: f64,
        /// Best total bid value with each buyer removed, in buyer order.
        residual_welfare: Vec<f64>,
        /// Every welfare-maximizing allocation (the chosen one is among them).
        optima: Vec<Allocation>,
    },
    OneGoodEach {
        /// All assignments considered, as buyer-to-good maps `perm[i] = k`.
        permutations: Vec<Vec<usize>>,
        /// `payment_table[i][p]` is buyer `i`'s price under `permutations[p]`.
        payment_table: Vec<Vec<f64>>,
        /// Index into `permutations` of the chosen assignment.
        selected: usize,
        /// Indices of every welfare-maximizing assignment.
        optima: Vec<usize>,
    },
    ThinMarket {
        /// Per buyer, the reported-signal level at which they would just tie
        /// the runner-up arrangement for the good they won; `None` for losers.
        clearing_signal: Vec<Option<f64>>,
        /// Best allocation of all goods among the other buyers, per winner.
        residual: Vec<Option<Allocation>>,
        /// Every welfare-maximizing allocation.
        optima: Vec<Allocation>,
    },
    BidFunction {
        /// Set when the submitted bid functions failed the mutual-consistency
        /// screen; the auction then allocates nothing and charges nothing.
        rejected: bool,
        /// Why the screen failed, when it did.
        violations: Vec<String>,
        /// Own-effect ratios recovered from the off-diagonal coefficients.
        implied_ratio: Vec<f64>,
        /// `fixed_points[k][i]` is buyer `i`'s bid value for good `k` where
        /// all bid functions agree.
        fixed_points: Vec<Vec<f64>>,
        /// For thin-market runs, the free-term level that would make each
        /// winner tie the runner-up arrangement; `None` for losers.
        clearing_free_term: Vec<Option<f64>>,
        /// Payment table and assignment bookkeeping when all buyers win one
        /// good (same layout as `OneGoodEach`).
        payment_table: Option<Vec<Vec<f64>>>,
        permutations: Option<Vec<Vec<usize>>>,
        selected: Option<usize>,
        /// Every welfare-maximizing allocation of the accepted run.
        optima: Vec<Allocation>,
    },
    TwoBuyerAffine {
        /// Where the two affine bid functions intersect: buyer 0's and buyer
        /// 1's bid value at the crossing.
        fixed_point: [f64; 2],
        /// What each buyer would pay if they won.
        candidate_payment: [f64; 2],
    },
}
