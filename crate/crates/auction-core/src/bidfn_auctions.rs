//! Indirect mechanisms: instead of reporting signals, each buyer submits a
//! *bid function* per good, expressed as a linear map from the other buyers'
//! (as yet unknown) bid values to their own. Good by good, the auctioneer
//! finds the unique profile of values where every bid function is satisfied
//! at once, and from then on treats those fixed-point values like reported
//! valuations.
//!
//! The linear form carries real information. A buyer who expects rivals'
//! values to move one-for-one with their own signal must, to stay consistent,
//! use cross coefficients that encode everyone's own-effect ratios. The
//! [`validate_consistency`] screen recovers those implied ratios from the
//! submitted coefficients and refuses the whole auction (nobody trades,
//! nobody pays) unless all buyers' submissions agree on them, good after
//! good, and every ratio exceeds one. That refusal is what makes honest free
//! terms safe: a buyer can only move their own free term, and the payment
//! rules below charge for free-term bravado exactly like the signal
//! mechanisms charge for signal bravado.
//!
//! Mechanisms, by market shape:
//! * [`run_balanced`]: as many buyers as goods. With three or more buyers the
//!   payment schedule mirrors the balanced signal auction, priced on
//!   fixed-point values; with exactly two it switches to [`run_two_buyer`],
//!   whose schedule reads the rival's free term directly.
//! * [`run_thin`]: more buyers than goods. Winners pay the fixed-point value
//!   their own bid would have at the free term that just ties them with the
//!   displaced rival.
//! * [`run_affine_pair`]: the stripped-down classic with two buyers and one
//!   good, each bid an affine function of the rival's value.

use serde::{Deserialize, Serialize};

use crate::assign::{best_injective_assignment, MAX_ASSIGNMENT_BUYERS};
use crate::error::{EngineError, Result};
use crate::linalg;
use crate::model::{Allocation, AuctionOutcome, Diagnostics, LinearValuationModel, SignalProfile};
use crate::MechanismConfig;
use itertools::Itertools;

/// Threshold below which a cross coefficient counts as zero, which the
/// consistency screen must reject before anyone divides by it.
const COEFF_FLOOR: f64 = 1e-12;

/// A full profile of linear bid functions: `coeff(a, i, j)` weights buyer
/// `j`'s fixed-point value in buyer `i`'s bid for good `a`, and the diagonal
/// `coeff(a, i, i)` is buyer `i`'s free term for that good.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBidProfile {
    n: usize,
    m: usize,
    /// Indexed `[good][buyer][rival]`.
    coeffs: Vec<Vec<Vec<f64>>>,
}

impl LinearBidProfile {
    pub fn new(n: usize, m: usize, coeffs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if n < 2 || m == 0 {
            return Err(EngineError::UnsupportedShape(
                "bid functions need at least two buyers and one good".into(),
            ));
        }
        if coeffs.len() != m {
            return Err(EngineError::DimensionMismatch(format!(
                "got coefficient blocks for {} goods, expected {m}",
                coeffs.len()
            )));
        }
        for (a, block) in coeffs.iter().enumerate() {
            if block.len() != n {
                return Err(EngineError::DimensionMismatch(format!(
                    "good {a} has {} bid rows, expected {n}",
                    block.len()
                )));
            }
            for (i, row) in block.iter().enumerate() {
                if row.len() != n {
                    return Err(EngineError::DimensionMismatch(format!(
                        "good {a}, buyer {i}: row length {}, expected {n}",
                        row.len()
                    )));
                }
                if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                    return Err(EngineError::NonFinite(format!(
                        "bid coefficient [{a}][{i}][{j}]"
                    )));
                }
            }
        }
        Ok(Self { n, m, coeffs })
    }

    pub fn buyers(&self) -> usize {
        self.n
    }

    pub fn goods(&self) -> usize {
        self.m
    }

    pub fn coeff(&self, good: usize, buyer: usize, rival: usize) -> f64 {
        self.coeffs[good][buyer][rival]
    }

    pub fn row(&self, good: usize, buyer: usize) -> &[f64] {
        &self.coeffs[good][buyer]
    }

    pub fn coeffs(&self) -> &Vec<Vec<Vec<f64>>> {
        &self.coeffs
    }

    /// Copy of the profile with one free term replaced; cross coefficients
    /// stay put, so the consistency screen is unaffected.
    pub fn with_free_term(&self, good: usize, buyer: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[good][buyer][buyer] = value;
        out
    }

    /// The profile an honest buyer would submit: cross coefficients from
    /// [`truthful_bid_coefficients`], free terms encoding their actual
    /// signals.
    pub fn truthful(model: &LinearValuationModel, signals: &SignalProfile) -> Result<Self> {
        model.check_signals(signals)?;
        let coeffs = (0..model.m)
            .map(|a| {
                (0..model.n)
                    .map(|i| truthful_bid_coefficients(model, i, signals.get(i, a)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(model.n, model.m, coeffs)
    }
}

/// Coefficient row buyer `buyer` should submit for a good where their own
/// signal is `signal`: cross coefficients that keep the bid consistent with
/// everyone's own-effect ratios, and a free term carrying the signal itself.
///
/// The cross coefficients solve, for every rival `j`, the requirement that a
/// unit move in rival `j`'s value is matched by exactly the spillover buyer
/// `buyer` should impute from it: `c[j] * x[j] + sum of the other x[t] = 1`.
pub fn truthful_bid_coefficients(
    model: &LinearValuationModel,
    buyer: usize,
    signal: f64,
) -> Result<Vec<f64>> {
    let n = model.n;
    if n < 2 {
        return Err(EngineError::UnsupportedShape(
            "bid functions need at least two buyers".into(),
        ));
    }
    if buyer >= n {
        return Err(EngineError::DimensionMismatch(format!(
            "no buyer {buyer} among {n}"
        )));
    }
    if !signal.is_finite() {
        return Err(EngineError::NonFinite("signal".into()));
    }
    for j in 0..n {
        if model.c[j] <= 1.0 || model.f_slope[j] <= 0.0 {
            return Err(EngineError::InvalidModel(format!(
                "buyer {j}: need own-effect ratio above 1 and a positive slope"
            )));
        }
    }
    let others: Vec<usize> = (0..n).filter(|&j| j != buyer).collect();
    let k = others.len();
    let matrix: Vec<Vec<f64>> = (0..k)
        .map(|r| {
            (0..k)
                .map(|c| if r == c { model.c[others[r]] } else { 1.0 })
                .collect()
        })
        .collect();
    let cross = linalg::solve(matrix, vec![1.0; k], "cross-coefficient system")?;

    let mut row = vec![0.0; n];
    let mut cross_sum = 0.0;
    let mut shift_sum = 0.0;
    for (slot, &j) in others.iter().enumerate() {
        row[j] = cross[slot];
        cross_sum += cross[slot];
        shift_sum += cross[slot] * model.d[j];
    }
    row[buyer] =
        model.spillover(buyer, signal) * (model.c[buyer] - cross_sum) + model.d[buyer] - shift_sum;
    Ok(row)
}

/// What the consistency screen found: the own-effect ratios implied by the
/// cross coefficients (one per buyer, empty when the screen failed) and a
/// human-readable list of everything that disqualified the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub valid: bool,
    pub implied_ratio: Vec<f64>,
    pub violations: Vec<String>,
}

/// Screens a bid profile for mutual consistency. Each rival's coefficient in
/// each row yields a candidate own-effect ratio for that rival,
/// `(1 - sum of the row's other cross terms) / coefficient`; all candidates
/// for the same rival must agree within `epsilon` across every row and good,
/// and must exceed one. Free terms are unconstrained.
pub fn validate_consistency(bids: &LinearBidProfile, epsilon: f64) -> ConsistencyReport {
    let n = bids.n;
    let mut violations = Vec::new();
    let mut implied: Vec<Option<f64>> = vec![None; n];

    for a in 0..bids.m {
        for i in 0..n {
            for (j, slot) in implied.iter_mut().enumerate() {
                if i == j {
                    continue;
                }
                let x = bids.coeff(a, i, j);
                if x.abs() < COEFF_FLOOR {
                    violations.push(format!(
                        "good {a}: buyer {i} gives buyer {j}'s value a zero weight"
                    ));
                    continue;
                }
                let others_sum: f64 = (0..n)
                    .filter(|&t| t != i && t != j)
                    .map(|t| bids.coeff(a, i, t))
                    .sum();
                let candidate = (1.0 - others_sum) / x;
                match *slot {
                    None => *slot = Some(candidate),
                    Some(reference) => {
                        if (candidate - reference).abs() > epsilon {
                            violations.push(format!(
                                "good {a}: buyer {i}'s weights imply ratio {candidate} \
                                 for buyer {j}, others imply {reference}"
                            ));
                        }
                    }
                }
            }
        }
    }
    for (j, value) in implied.iter().enumerate() {
        match value {
            Some(r) if *r <= 1.0 + epsilon => {
                violations.push(format!(
                    "buyer {j}: implied own-effect ratio {r} does not exceed 1"
                ));
            }
            _ => {}
        }
    }
    let valid = violations.is_empty();
    ConsistencyReport {
        valid,
        implied_ratio: if valid {
            implied.into_iter().map(|r| r.unwrap()).collect()
        } else {
            Vec::new()
        },
        violations,
    }
}

/// The value profile at which every submitted bid function for one good is
/// simultaneously satisfied, plus the worst equation residual at the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub values: Vec<f64>,
    pub residual: f64,
}

/// Solves `v[i] = free term + sum of cross terms * v[j]` for all buyers at
/// once on one good. A profile that passed the consistency screen always has
/// a unique answer; other profiles may be singular, which is reported.
pub fn solve_fixed_point(bids: &LinearBidProfile, good: usize) -> Result<FixedPoint> {
    if good >= bids.m {
        return Err(EngineError::DimensionMismatch(format!(
            "no good {good} among {}",
            bids.m
        )));
    }
    fixed_point_of_rows(&bids.coeffs[good])
}

fn fixed_point_of_rows(rows: &[Vec<f64>]) -> Result<FixedPoint> {
    let n = rows.len();
    let matrix: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { -1.0 } else { rows[i][j] })
                .collect()
        })
        .collect();
    let rhs: Vec<f64> = (0..n).map(|i| -rows[i][i]).collect();
    let values = linalg::solve(matrix, rhs, "bid fixed point")?;

    let mut residual: f64 = 0.0;
    for i in 0..n {
        let mut bid = rows[i][i];
        for j in 0..n {
            if j != i {
                bid += rows[i][j] * values[j];
            }
        }
        residual = residual.max((bid - values[i]).abs());
    }
    let scale = values.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if residual > 1e-6 * scale {
        return Err(EngineError::SingularSystem(format!(
            "fixed point residual {residual:.3e} is untrustworthy"
        )));
    }
    Ok(FixedPoint { values, residual })
}

/// Inverts a row back to the spillover value its free term encodes, given
/// the implied ratios from the screen and the model's additive shifts. For a
/// truthful row this returns exactly the buyer's spillover at their signal.
pub fn recover_spillover(
    row: &[f64],
    buyer: usize,
    implied_ratio: &[f64],
    d: &[f64],
) -> Result<f64> {
    let n = row.len();
    let cross_sum: f64 = (0..n).filter(|&j| j != buyer).map(|j| row[j]).sum();
    let shift_sum: f64 = (0..n)
        .filter(|&j| j != buyer)
        .map(|j| row[j] * d[j])
        .sum();
    let denom = implied_ratio[buyer] - cross_sum;
    if denom.abs() < COEFF_FLOOR {
        return Err(EngineError::DegenerateClearing(
            "free term carries no signal: ratio equals the cross-coefficient sum".into(),
        ));
    }
    Ok((row[buyer] - d[buyer] + shift_sum) / denom)
}

// ---------------------------------------------------------------------------
// Balanced market on bid functions.
// ---------------------------------------------------------------------------

pub(crate) struct SquareRun {
    pub perms: Vec<Vec<usize>>,
    pub welfare: Vec<f64>,
    pub payment_table: Vec<Vec<f64>>,
    pub optima: Vec<usize>,
    pub fixed_points: Vec<Vec<f64>>,
    pub implied_ratio: Vec<f64>,
}

impl SquareRun {
    pub fn allocation_of(&self, perm_index: usize) -> Allocation {
        let perm = &self.perms[perm_index];
        let mut assigned = vec![None; perm.len()];
        for (buyer, &good) in perm.iter().enumerate() {
            assigned[good] = Some(buyer);
        }
        Allocation::new(assigned)
    }

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

pub(crate) enum ScreenedSquare {
    Rejected(ConsistencyReport),
    Ran(SquareRun),
}

fn fixed_points_per_good(bids: &LinearBidProfile) -> Result<Vec<Vec<f64>>> {
    (0..bids.m)
        .map(|a| Ok(solve_fixed_point(bids, a)?.values))
        .collect()
}

/// Collects welfare-maximal assignment indices, sorted the way the tie rule
/// compares allocations (by good-to-buyer vector).
fn optimal_perm_indices(perms: &[Vec<usize>], welfare: &[f64], epsilon: f64) -> Vec<usize> {
    let n = perms.first().map_or(0, |p| p.len());
    let best = welfare.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut optima: Vec<usize> = (0..perms.len())
        .filter(|&p| welfare[p] >= best - epsilon)
        .collect();
    optima.sort_by_key(|&p| {
        let mut assigned = vec![0usize; n];
        for (buyer, &good) in perms[p].iter().enumerate() {
            assigned[good] = buyer;
        }
        assigned
    });
    optima
}

pub(crate) fn evaluate_square(
    bids: &LinearBidProfile,
    cfg: &MechanismConfig,
) -> Result<ScreenedSquare> {
    let n = bids.n;
    if n != bids.m {
        return Err(EngineError::UnsupportedShape(format!(
            "balanced market needs as many buyers as goods, got {n} and {}",
            bids.m
        )));
    }
    if n > MAX_ASSIGNMENT_BUYERS {
        return Err(EngineError::SizeGuard(format!(
            "{n} buyers exceeds the assignment limit of {MAX_ASSIGNMENT_BUYERS}"
        )));
    }
    let screen = validate_consistency(bids, cfg.epsilon);
    if !screen.valid {
        return Ok(ScreenedSquare::Rejected(screen));
    }
    let fixed_points = fixed_points_per_good(bids)?;

    let perms: Vec<Vec<usize>> = (0..n).permutations(n).collect();
    let welfare: Vec<f64> = perms
        .iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &a)| fixed_points[a][i])
                .sum()
        })
        .collect();

    let payment_table: Vec<Vec<f64>> = (0..n)
        .map(|i| -> Result<Vec<f64>> {
            if n == 2 {
                // Two-buyer schedule: read the rival's free term for the good
                // the rival gets; no welfare scaling needed.
                let j = 1 - i;
                let ratio = screen.implied_ratio[i];
                let scale = ratio / (ratio - 1.0);
                Ok(perms
                    .iter()
                    .map(|perm| scale * bids.coeff(perm[j], j, j))
                    .collect())
            } else {
                // General schedule: scaled fixed-point welfare, minus own
                // fixed-point value, plus a constant that undoes the free
                // terms' contribution to the buyer's own column.
                let ratio = screen.implied_ratio[i];
                let scale = ratio / (ratio - 1.0);
                // Cross coefficients are good-independent once the screen
                // passes, so good 0's row is as good as any.
                let cross_sum: f64 = (0..n).filter(|&j| j != i).map(|j| bids.coeff(0, i, j)).sum();
                let free_sum: f64 = (0..n).map(|a| bids.coeff(a, i, i)).sum();
                let constant = scale * free_sum / (ratio - cross_sum);
                Ok(perms
                    .iter()
                    .zip(&welfare)
                    .map(|(perm, w)| scale * w - fixed_points[perm[i]][i] + constant)
                    .collect())
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let optima = optimal_perm_indices(&perms, &welfare, cfg.epsilon);
    Ok(ScreenedSquare::Ran(SquareRun {
        perms,
        welfare,
        payment_table,
        optima,
        fixed_points,
        implied_ratio: screen.implied_ratio,
    }))
}

fn rejected_outcome(m: usize, n: usize, screen: ConsistencyReport) -> AuctionOutcome {
    AuctionOutcome {
        allocation: Allocation::empty(m),
        payments: vec![0.0; n],
        utilities: vec![0.0; n],
        welfare: 0.0,
        diagnostics: Diagnostics::BidFunction {
            rejected: true,
            violations: screen.violations,
            implied_ratio: screen.implied_ratio,
            fixed_points: Vec::new(),
            clearing_free_term: vec![None; n],
            payment_table: None,
            permutations: None,
            selected: None,
            optima: Vec::new(),
        },
    }
}

/// Balanced-market auction on bid functions (`n == m`). Profiles that fail
/// the consistency screen trade nothing and pay nothing, with the reasons in
/// the diagnostics. Two-buyer profiles use the dedicated two-buyer schedule.
pub fn run_balanced(bids: &LinearBidProfile, cfg: &MechanismConfig) -> Result<AuctionOutcome> {
    let run = match evaluate_square(bids, cfg)? {
        ScreenedSquare::Rejected(screen) => return Ok(rejected_outcome(bids.m, bids.n, screen)),
        ScreenedSquare::Ran(run) => run,
    };
    let pick = cfg.tie.breaker().pick(run.optima.len());
    let selected = run.optima[pick];
    let allocation = run.allocation_of(selected);
    let payments = run.payments_for(selected);
    let utilities: Vec<f64> = (0..bids.n)
        .map(|i| run.fixed_points[run.perms[selected][i]][i] - payments[i])
        .collect();
    let optima_allocs: Vec<Allocation> = run.optima.iter().map(|&p| run.allocation_of(p)).collect();
    Ok(AuctionOutcome {
        allocation,
        payments,
        utilities,
        welfare: run.welfare[selected],
        diagnostics: Diagnostics::BidFunction {
            rejected: false,
            violations: Vec::new(),
            implied_ratio: run.implied_ratio,
            fixed_points: run.fixed_points,
            clearing_free_term: vec![None; bids.n],
            payment_table: Some(run.payment_table),
            permutations: Some(run.perms),
            selected: Some(selected),
            optima: optima_allocs,
        },
    })
}

/// The two-buyer, two-good balanced auction, exposed directly. Equivalent to
/// [`run_balanced`] on a two-buyer profile.
pub fn run_two_buyer(bids: &LinearBidProfile, cfg: &MechanismConfig) -> Result<AuctionOutcome> {
    if bids.n != 2 {
        return Err(EngineError::UnsupportedShape(format!(
            "two-buyer rule called with {} buyers",
            bids.n
        )));
    }
    run_balanced(bids, cfg)
}

// ---------------------------------------------------------------------------
// Thin market on bid functions.
// ---------------------------------------------------------------------------

pub(crate) struct ThinBidRun {
    pub fixed_points: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub solution: crate::assign::AssignmentSolution,
    pub implied_ratio: Vec<f64>,
}

pub(crate) enum ScreenedThin {
    Rejected(ConsistencyReport),
    Ran(ThinBidRun),
}

pub(crate) fn evaluate_thin(
    bids: &LinearBidProfile,
    cfg: &MechanismConfig,
) -> Result<ScreenedThin> {
    if bids.n <= bids.m {
        return Err(EngineError::UnsupportedShape(format!(
            "thin market needs more buyers than goods, got {} and {}",
            bids.n, bids.m
        )));
    }
    let screen = validate_consistency(bids, cfg.epsilon);
    if !screen.valid {
        return Ok(ScreenedThin::Rejected(screen));
    }
    let fixed_points = fixed_points_per_good(bids)?;
    let values: Vec<Vec<f64>> = (0..bids.n)
        .map(|i| (0..bids.m).map(|a| fixed_points[a][i]).collect())
        .collect();
    let solution = best_injective_assignment(&values, bids.n, bids.m, cfg.tie, cfg.epsilon)?;
    Ok(ScreenedThin::Ran(ThinBidRun {
        fixed_points,
        values,
        solution,
        implied_ratio: screen.implied_ratio,
    }))
}

/// Fixed point for one good with buyer `buyer`'s free term overridden.
fn fixed_point_with_free_term(
    bids: &LinearBidProfile,
    good: usize,
    buyer: usize,
    free_term: f64,
) -> Result<Vec<f64>> {
    let mut rows = bids.coeffs[good].clone();
    rows[buyer][buyer] = free_term;
    Ok(fixed_point_of_rows(&rows)?.values)
}

/// Prices one optimum of the thin bid-function market. For each winner, the
/// free term is rolled back to the level where the resulting fixed point
/// would just tie the best arrangement among the other buyers; the winner
/// pays their own fixed-point value there.
pub(crate) fn price_thin_bids(
    bids: &LinearBidProfile,
    run: &ThinBidRun,
    allocation: &Allocation,
    cfg: &MechanismConfig,
) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    let n = bids.n;
    let m = bids.m;
    let mut payments = vec![0.0; n];
    let mut clearing = vec![None; n];

    let winner_of: Vec<usize> = (0..m)
        .map(|k| allocation.assigned[k].expect("thin market assigns every good"))
        .collect();

    for i in 0..n {
        let Some(good) = allocation.good_of(i) else {
            continue;
        };
        // Best arrangement among the others, on fixed-point values.
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let rival_values: Vec<Vec<f64>> = others.iter().map(|&j| run.values[j].clone()).collect();
        let residual =
            best_injective_assignment(&rival_values, n - 1, m, cfg.tie, cfg.epsilon)?;
        let rival = others[residual.best.assigned[good].expect("residual assigns every good")];

        // Fixed-point handicap of this allocation versus the residual one on
        // the other goods.
        let handicap: f64 = (0..m)
            .filter(|&k| k != good)
            .map(|k| {
                let j = others[residual.best.assigned[k].expect("residual assigns every good")];
                run.fixed_points[k][winner_of[k]] - run.fixed_points[k][j]
            })
            .sum();

        // The gap (winner's value - rival's value + handicap) is affine in
        // the winner's free term; two probes give the root exactly.
        let x0 = bids.coeff(good, i, i);
        let x1 = x0 + 1.0;
        let gap_at = |x: f64| -> Result<f64> {
            let v = fixed_point_with_free_term(bids, good, i, x)?;
            Ok(v[i] - v[rival] + handicap)
        };
        let g0 = gap_at(x0)?;
        let g1 = gap_at(x1)?;
        let slope = g1 - g0;
        if slope.abs() < COEFF_FLOOR {
            return Err(EngineError::DegenerateClearing(format!(
                "buyer {i}'s free term cannot move the tie for good {good}"
            )));
        }
        let free_term = x0 - g0 / slope;
        let at_tie = fixed_point_with_free_term(bids, good, i, free_term)?;
        debug_assert!(
            (at_tie[i] - at_tie[rival] + handicap).abs() <= 1e-6,
            "clearing free term missed the tie"
        );
        payments[i] = at_tie[i];
        clearing[i] = Some(free_term);
    }
    Ok((payments, clearing))
}

/// Thin-market auction on bid functions (`n > m`): every good sells, losers
/// pay nothing, and inconsistent profiles trade nothing.
pub fn run_thin(bids: &LinearBidProfile, cfg: &MechanismConfig) -> Result<AuctionOutcome> {
    let run = match evaluate_thin(bids, cfg)? {
        ScreenedThin::Rejected(screen) => return Ok(rejected_outcome(bids.m, bids.n, screen)),
        ScreenedThin::Ran(run) => run,
    };
    let allocation = run.solution.best.clone();
    let (payments, clearing) = price_thin_bids(bids, &run, &allocation, cfg)?;
    let utilities: Vec<f64> = (0..bids.n)
        .map(|i| match allocation.good_of(i) {
            Some(a) => run.fixed_points[a][i] - payments[i],
            None => 0.0,
        })
        .collect();
    Ok(AuctionOutcome {
        allocation,
        payments,
        utilities,
        welfare: run.solution.value,
        diagnostics: Diagnostics::BidFunction {
            rejected: false,
            violations: Vec::new(),
            implied_ratio: run.implied_ratio,
            fixed_points: run.fixed_points,
            clearing_free_term: clearing,
            payment_table: None,
            permutations: None,
            selected: None,
            optima: run.solution.optima,
        },
    })
}

// ---------------------------------------------------------------------------
// Two buyers, one good, affine bids.
// ---------------------------------------------------------------------------

/// An affine bid of the rival's value for a single good. The slope is capped
/// strictly below one in magnitude so the pair of bids always crosses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineBid {
    intercept: f64,
    slope: f64,
}

impl AffineBid {
    pub fn new(intercept: f64, slope: f64) -> Result<Self> {
        if !intercept.is_finite() || !slope.is_finite() {
            return Err(EngineError::NonFinite("affine bid".into()));
        }
        if slope.abs() >= 1.0 {
            return Err(EngineError::InvalidBid(format!(
                "slope {slope} must be strictly inside (-1, 1) for the bids to cross"
            )));
        }
        Ok(Self { intercept, slope })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn at(&self, rival_value: f64) -> f64 {
        self.intercept + self.slope * rival_value
    }

    /// Where this bid alone crosses the diagonal: the price a rival pays
    /// when this buyer loses.
    pub fn self_fixed_point(&self) -> f64 {
        self.intercept / (1.0 - self.slope)
    }

    /// The affine bid an honest buyer derives from the model (two buyers,
    /// one good): slope one over the rival's own-effect ratio, intercept
    /// carrying the buyer's signal.
    pub fn truthful(
        model: &LinearValuationModel,
        signals: &SignalProfile,
        buyer: usize,
    ) -> Result<Self> {
        if model.n != 2 || model.m != 1 {
            return Err(EngineError::UnsupportedShape(
                "affine pair bids are defined for two buyers and one good".into(),
            ));
        }
        let row = truthful_bid_coefficients(model, buyer, signals.get(buyer, 0))?;
        AffineBid::new(row[buyer], row[1 - buyer])
    }
}

pub(crate) struct AffineEval {
    pub values: [f64; 2],
    pub candidate_payment: [f64; 2],
    pub winners: Vec<usize>,
}

pub(crate) fn evaluate_affine(bid0: &AffineBid, bid1: &AffineBid, epsilon: f64) -> AffineEval {
    let denom = 1.0 - bid0.slope * bid1.slope;
    let v0 = (bid0.intercept + bid0.slope * bid1.intercept) / denom;
    let v1 = bid1.at(v0);
    debug_assert!((bid0.at(v1) - v0).abs() <= 1e-9 * (1.0 + v0.abs()));

    let winners: Vec<usize> = if (v0 - v1).abs() <= epsilon {
        vec![0, 1]
    } else if v0 > v1 {
        vec![0]
    } else {
        vec![1]
    };
    AffineEval {
        values: [v0, v1],
        candidate_payment: [bid1.self_fixed_point(), bid0.self_fixed_point()],
        winners,
    }
}

/// Two buyers, one good: solve the two affine bids for the value pair where
/// each is satisfied, give the good to the higher value, and charge the
/// winner the level at which the loser's bid alone breaks even.
pub fn run_affine_pair(
    bid0: &AffineBid,
    bid1: &AffineBid,
    cfg: &MechanismConfig,
) -> Result<AuctionOutcome> {
    let eval = evaluate_affine(bid0, bid1, cfg.epsilon);
    let AffineEval {
        values: [v0, v1],
        candidate_payment,
        winners,
    } = eval;
    let optima: Vec<Allocation> = winners
        .iter()
        .map(|&w| Allocation::new(vec![Some(w)]))
        .collect();
    let pick = cfg.tie.breaker().pick(optima.len());
    let winner = winners[pick];

    let values = [v0, v1];
    let mut payments = vec![0.0; 2];
    let mut utilities = vec![0.0; 2];
    payments[winner] = candidate_payment[winner];
    utilities[winner] = values[winner] - payments[winner];
    Ok(AuctionOutcome {
        allocation: optima[pick].clone(),
        payments,
        utilities,
        welfare: values[winner],
        diagnostics: Diagnostics::TwoBuyerAffine {
            fixed_point: values,
            candidate_payment,
        },
    })
}
