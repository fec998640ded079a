//! Brute-force equilibrium checks and randomized property suites.
//!
//! The mechanisms in this crate come with best-response claims: when every
//! other buyer plays the intended strategy, playing it yourself is at least
//! as good as anything else you could submit. Strategy spaces here are
//! continuous, so the claims cannot be certified exhaustively; this module
//! checks the desk-scale necessary condition instead. A [`DeviationGrid`]
//! turns "any other strategy" into a finite set of perturbed strategies (plus
//! an explicit walk-away strategy where the mechanism has one), and
//! [`check_best_response`] replays the auction once per deviation, comparing
//! utilities computed from the *true* model and signals, never from the
//! reports themselves.
//!
//! What counts as a deviation depends on the mechanism: signal-report
//! mechanisms perturb one buyer's reported row, bid-function mechanisms
//! perturb the free terms (the screen pins every other coefficient), the
//! pivot mechanism perturbs bundle prices, and the affine pair perturbs
//! intercepts and slopes. Ties are handled exactly: when several allocations
//! are within tolerance of the optimum, a random tie rule is scored as the
//! uniform average over all of them, the lexicographic rule as its
//! deterministic pick.
//!
//! [`sweep_random_instances`] repeats the check over seeded random markets,
//! and [`run_property_suite`] runs the mechanism-level invariants (payment
//! bid-independence, assignment reductions, solver positivity, and friends)
//! on randomized inputs. Both are deterministic given their seeds.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::{unit_demand_reduction_check, TieRule};
use crate::bidfn_auctions::{
    self, evaluate_affine, evaluate_square, evaluate_thin as evaluate_thin_bids, price_thin_bids,
    solve_fixed_point, validate_consistency, AffineBid, LinearBidProfile, ScreenedSquare,
    ScreenedThin,
};
use crate::error::{EngineError, Result};
use crate::linalg;
use crate::model::{Allocation, LinearValuationModel, SignalProfile};
use crate::signal_auctions::{
    evaluate_balanced, evaluate_thin as evaluate_thin_signals, payment_row_shift, price_thin,
    residual_allocation,
};
use crate::vcg::{self, SubsetBid};
use crate::MechanismConfig;

/// Report level below which a buyer is considered to have walked away from a
/// thin market; far outside the sweep ranges, close enough to keep payment
/// arithmetic well conditioned.
const EXIT_LEVEL: f64 = -1e3;

/// Every mechanism the harness knows how to replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Vcg,
    SignalBalanced,
    SignalThin,
    BidBalanced,
    BidThin,
    AffinePair,
}

impl Mechanism {
    pub fn check_shape(self, n: usize, m: usize) -> Result<()> {
        let ok = match self {
            Mechanism::Vcg => n >= 1 && m >= 1,
            Mechanism::SignalBalanced => n == m && n >= 1,
            Mechanism::SignalThin => n > m && m >= 1,
            Mechanism::BidBalanced => n == m && n >= 2,
            Mechanism::BidThin => n > m && m >= 1 && n >= 2,
            Mechanism::AffinePair => n == 2 && m == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(EngineError::UnsupportedShape(format!(
                "{self} does not run on {n} buyers and {m} goods"
            )))
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Mechanism::Vcg => "pivot auction on subset bids",
            Mechanism::SignalBalanced => "balanced signal auction",
            Mechanism::SignalThin => "thin signal auction",
            Mechanism::BidBalanced => "balanced bid-function auction",
            Mechanism::BidThin => "thin bid-function auction",
            Mechanism::AffinePair => "two-buyer affine auction",
        };
        f.write_str(name)
    }
}

/// How one buyer's strategy gets perturbed. Offsets are added to the
/// buyer's controls one at a time or all together; the zero offset is always
/// evaluated even when absent, so a reported violation can never be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationGrid {
    pub offsets: Vec<f64>,
    pub mode: DeviationMode,
    pub include_exit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationMode {
    PerCoordinate,
    Joint,
}

impl Default for DeviationGrid {
    fn default() -> Self {
        DeviationGrid {
            offsets: vec![-2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0],
            mode: DeviationMode::PerCoordinate,
            include_exit: true,
        }
    }
}

impl DeviationGrid {
    fn check(&self) -> Result<()> {
        if self.offsets.is_empty() {
            return Err(EngineError::UnsupportedShape(
                "deviation grid has no offsets".into(),
            ));
        }
        if let Some(bad) = self.offsets.iter().find(|o| !o.is_finite()) {
            return Err(EngineError::NonFinite(format!("grid offset {bad}")));
        }
        Ok(())
    }

    /// The offsets actually swept: zero first, then the configured ones.
    fn effective_offsets(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        out.extend(self.offsets.iter().copied().filter(|&o| o != 0.0));
        out
    }
}

/// A complete set of submitted strategies, in whichever shape the mechanism
/// consumes. The harness dumps the worst one it finds so a failing case can
/// be replayed outside the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplicitBids {
    SignalReports { reports: SignalProfile },
    SubsetBids { bids: Vec<Vec<BundleBid>> },
    BidFunctions { coefficients: Vec<Vec<Vec<f64>>> },
    Affine { intercepts: Vec<f64>, slopes: Vec<f64> },
}

/// One priced bundle inside a subset bid, the file-friendly form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleBid {
    pub goods: Vec<usize>,
    pub bid: f64,
}

pub fn subset_bid_to_bundles(bid: &SubsetBid) -> Vec<BundleBid> {
    bid.entries()
        .map(|(goods, amount)| BundleBid { goods, bid: amount })
        .collect()
}

pub fn subset_bid_from_bundles(goods: usize, bundles: &[BundleBid]) -> Result<SubsetBid> {
    let mut bid = SubsetBid::new(goods);
    for entry in bundles {
        bid.set(&entry.goods, entry.bid)?;
    }
    Ok(bid)
}

/// The deviation that came closest to (or past) beating the intended
/// strategy, with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub mechanism: Mechanism,
    pub model: LinearValuationModel,
    pub signals: SignalProfile,
    pub buyer: usize,
    pub deviation: String,
    pub bids: ExplicitBids,
    pub truthful_utility: f64,
    pub deviation_utility: f64,
}

/// Outcome of a best-response check or sweep. Passing means no deviation
/// gained more than `epsilon` over the intended strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub mechanism: Mechanism,
    pub instances_checked: usize,
    pub deviations_checked: usize,
    pub max_violation: f64,
    pub epsilon: f64,
    pub worst_case: Option<WorstCase>,
}

impl EquilibriumReport {
    pub fn passed(&self) -> bool {
        self.max_violation <= self.epsilon
    }
}

// ---------------------------------------------------------------------------
// Strategy profiles and mechanism replay.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Profile {
    Signals(SignalProfile),
    Subsets(Vec<SubsetBid>),
    Functions(LinearBidProfile),
    Affine(Vec<AffineBid>),
}

impl Profile {
    fn to_explicit(&self) -> ExplicitBids {
        match self {
            Profile::Signals(reports) => ExplicitBids::SignalReports {
                reports: reports.clone(),
            },
            Profile::Subsets(bids) => ExplicitBids::SubsetBids {
                bids: bids.iter().map(subset_bid_to_bundles).collect(),
            },
            Profile::Functions(bids) => ExplicitBids::BidFunctions {
                coefficients: bids.coeffs().clone(),
            },
            Profile::Affine(bids) => ExplicitBids::Affine {
                intercepts: bids.iter().map(|b| b.intercept()).collect(),
                slopes: bids.iter().map(|b| b.slope()).collect(),
            },
        }
    }
}

fn truthful_profile(
    mechanism: Mechanism,
    model: &LinearValuationModel,
    signals: &SignalProfile,
) -> Result<Profile> {
    Ok(match mechanism {
        Mechanism::Vcg => Profile::Subsets(
            (0..model.n)
                .map(|i| SubsetBid::truthful(model, signals, i))
                .collect::<Result<Vec<_>>>()?,
        ),
        Mechanism::SignalBalanced | Mechanism::SignalThin => Profile::Signals(signals.clone()),
        Mechanism::BidBalanced | Mechanism::BidThin => {
            Profile::Functions(LinearBidProfile::truthful(model, signals)?)
        }
        Mechanism::AffinePair => Profile::Affine(vec![
            AffineBid::truthful(model, signals, 0)?,
            AffineBid::truthful(model, signals, 1)?,
        ]),
    })
}

/// Every welfare-optimal outcome of the mechanism under these strategies,
/// with its payment vector. The list is in the same sorted order the tie
/// rules consume: the lexicographic rule picks the first entry, the random
/// rule averages over all of them.
fn priced_optima(
    mechanism: Mechanism,
    model: &LinearValuationModel,
    profile: &Profile,
    cfg: &MechanismConfig,
) -> Result<Vec<(Allocation, Vec<f64>)>> {
    match (mechanism, profile) {
        (Mechanism::Vcg, Profile::Subsets(bids)) => {
            let run = vcg::evaluate(bids, cfg)?;
            Ok(run
                .solution
                .optima
                .iter()
                .map(|opt| {
                    let welfare: f64 = bids
                        .iter()
                        .enumerate()
                        .map(|(i, b)| b.value(&opt.goods_of(i)))
                        .sum();
                    let payments = vcg::payments_for(bids, opt, welfare, &run.residual);
                    (opt.clone(), payments)
                })
                .collect())
        }
        (Mechanism::SignalBalanced, Profile::Signals(reports)) => {
            let run = evaluate_balanced(model, reports, cfg)?;
            Ok(run
                .optima
                .iter()
                .map(|&p| (run.allocation_of(p), run.payments_for(p)))
                .collect())
        }
        (Mechanism::SignalThin, Profile::Signals(reports)) => {
            let run = evaluate_thin_signals(model, reports, cfg)?;
            run.solution
                .optima
                .iter()
                .map(|opt| {
                    let pricing = price_thin(model, reports, &run.values, opt, cfg)?;
                    Ok((opt.clone(), pricing.payments))
                })
                .collect()
        }
        (Mechanism::BidBalanced, Profile::Functions(bids)) => match evaluate_square(bids, cfg)? {
            ScreenedSquare::Rejected(_) => {
                Ok(vec![(Allocation::empty(bids.goods()), vec![0.0; bids.buyers()])])
            }
            ScreenedSquare::Ran(run) => Ok(run
                .optima
                .iter()
                .map(|&p| (run.allocation_of(p), run.payments_for(p)))
                .collect()),
        },
        (Mechanism::BidThin, Profile::Functions(bids)) => match evaluate_thin_bids(bids, cfg)? {
            ScreenedThin::Rejected(_) => {
                Ok(vec![(Allocation::empty(bids.goods()), vec![0.0; bids.buyers()])])
            }
            ScreenedThin::Ran(run) => run
                .solution
                .optima
                .iter()
                .map(|opt| {
                    let (payments, _) = price_thin_bids(bids, &run, opt, cfg)?;
                    Ok((opt.clone(), payments))
                })
                .collect(),
        },
        (Mechanism::AffinePair, Profile::Affine(bids)) => {
            let eval = evaluate_affine(&bids[0], &bids[1], cfg.epsilon);
            Ok(eval
                .winners
                .iter()
                .map(|&w| {
                    let mut payments = vec![0.0; 2];
                    payments[w] = eval.candidate_payment[w];
                    (Allocation::new(vec![Some(w)]), payments)
                })
                .collect())
        }
        _ => Err(EngineError::UnsupportedShape(
            "strategy profile does not fit the mechanism".into(),
        )),
    }
}

/// True expected utility of one buyer, averaging over the optimum set when
/// the tie rule randomizes. Valuations come from the model at the true
/// signals; only payments come from the mechanism.
fn expected_true_utility(
    model: &LinearValuationModel,
    signals: &SignalProfile,
    buyer: usize,
    optima: &[(Allocation, Vec<f64>)],
    tie: TieRule,
) -> f64 {
    let utility_of = |entry: &(Allocation, Vec<f64>)| {
        let (allocation, payments) = entry;
        model.set_valuation(signals, buyer, &allocation.goods_of(buyer)) - payments[buyer]
    };
    match tie {
        TieRule::Lexicographic => utility_of(&optima[0]),
        TieRule::Random { .. } => {
            optima.iter().map(utility_of).sum::<f64>() / optima.len() as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Deviation enumeration.
// ---------------------------------------------------------------------------

fn signal_deviations(
    signals: &SignalProfile,
    buyer: usize,
    m: usize,
    grid: &DeviationGrid,
    exit_available: bool,
) -> Vec<(String, Profile)> {
    let mut out = Vec::new();
    let base = signals.0[buyer].clone();
    for &offset in &grid.effective_offsets() {
        match grid.mode {
            DeviationMode::PerCoordinate => {
                for a in 0..m {
                    let mut row = base.clone();
                    row[a] += offset;
                    out.push((
                        format!("report for good {a} shifted by {offset}"),
                        Profile::Signals(signals.with_row(buyer, row)),
                    ));
                    if offset == 0.0 {
                        break; // one zero-offset entry is enough
                    }
                }
            }
            DeviationMode::Joint => {
                let row = base.iter().map(|s| s + offset).collect();
                out.push((
                    format!("all reports shifted by {offset}"),
                    Profile::Signals(signals.with_row(buyer, row)),
                ));
            }
        }
    }
    if grid.include_exit && exit_available {
        out.push((
            format!("exit: every report dropped to {EXIT_LEVEL}"),
            Profile::Signals(signals.with_row(buyer, vec![EXIT_LEVEL; m])),
        ));
    }
    out
}

fn subset_deviations(
    bids: &[SubsetBid],
    buyer: usize,
    m: usize,
    grid: &DeviationGrid,
) -> Result<Vec<(String, Profile)>> {
    let mut out = Vec::new();
    let bundles: Vec<Vec<usize>> = (1u32..(1 << m))
        .map(|mask| (0..m).filter(|k| mask & (1 << k) != 0).collect())
        .collect();
    let mut push = |label: String, bid: SubsetBid| {
        let mut profile = bids.to_vec();
        profile[buyer] = bid;
        out.push((label, Profile::Subsets(profile)));
    };
    for &offset in &grid.effective_offsets() {
        match grid.mode {
            DeviationMode::PerCoordinate => {
                for bundle in &bundles {
                    let mut bid = bids[buyer].clone();
                    bid.set(bundle, bid.value(bundle) + offset)?;
                    push(format!("bid on bundle {bundle:?} shifted by {offset}"), bid);
                    if offset == 0.0 {
                        break;
                    }
                }
            }
            DeviationMode::Joint => {
                let mut bid = bids[buyer].clone();
                for bundle in &bundles {
                    bid.set(bundle, bid.value(bundle) + offset)?;
                }
                push(format!("all bundle bids shifted by {offset}"), bid);
            }
        }
    }
    if grid.include_exit {
        push("exit: zero bid on every bundle".into(), SubsetBid::new(m));
    }
    Ok(out)
}

fn free_term_deviations(
    bids: &LinearBidProfile,
    buyer: usize,
    grid: &DeviationGrid,
    exit_available: bool,
) -> Vec<(String, Profile)> {
    let m = bids.goods();
    let mut out = Vec::new();
    for &offset in &grid.effective_offsets() {
        match grid.mode {
            DeviationMode::PerCoordinate => {
                for a in 0..m {
                    let tweaked =
                        bids.with_free_term(a, buyer, bids.coeff(a, buyer, buyer) + offset);
                    out.push((
                        format!("free term for good {a} shifted by {offset}"),
                        Profile::Functions(tweaked),
                    ));
                    if offset == 0.0 {
                        break;
                    }
                }
            }
            DeviationMode::Joint => {
                let mut tweaked = bids.clone();
                for a in 0..m {
                    tweaked =
                        tweaked.with_free_term(a, buyer, tweaked.coeff(a, buyer, buyer) + offset);
                }
                out.push((
                    format!("all free terms shifted by {offset}"),
                    Profile::Functions(tweaked),
                ));
            }
        }
    }
    if grid.include_exit && exit_available {
        let mut tweaked = bids.clone();
        for a in 0..m {
            tweaked = tweaked.with_free_term(a, buyer, EXIT_LEVEL);
        }
        out.push((
            format!("exit: every free term dropped to {EXIT_LEVEL}"),
            Profile::Functions(tweaked),
        ));
    }
    out
}

fn affine_deviations(
    bids: &[AffineBid],
    buyer: usize,
    grid: &DeviationGrid,
) -> Vec<(String, Profile)> {
    let mut out = Vec::new();
    let base = bids[buyer];
    let mut push = |label: String, bid: AffineBid| {
        let mut profile = bids.to_vec();
        profile[buyer] = bid;
        out.push((label, Profile::Affine(profile)));
    };
    for &offset in &grid.effective_offsets() {
        push(
            format!("intercept shifted by {offset}"),
            AffineBid::new(base.intercept() + offset, base.slope())
                .expect("slope unchanged, still admissible"),
        );
        if offset == 0.0 {
            continue;
        }
        if let Ok(bid) = AffineBid::new(base.intercept(), base.slope() + offset) {
            push(format!("slope shifted by {offset}"), bid);
        }
    }
    if grid.include_exit {
        push(
            format!("exit: intercept dropped to {EXIT_LEVEL}"),
            AffineBid::new(EXIT_LEVEL, base.slope()).expect("slope unchanged"),
        );
    }
    out
}

fn deviations(
    mechanism: Mechanism,
    profile: &Profile,
    buyer: usize,
    m: usize,
    grid: &DeviationGrid,
) -> Result<Vec<(String, Profile)>> {
    Ok(match (mechanism, profile) {
        (Mechanism::Vcg, Profile::Subsets(bids)) => subset_deviations(bids, buyer, m, grid)?,
        // A balanced market trades with everyone, so there is no strategy
        // that guarantees walking away; the exit flag is a no-op there.
        (Mechanism::SignalBalanced, Profile::Signals(s)) => {
            signal_deviations(s, buyer, m, grid, false)
        }
        (Mechanism::SignalThin, Profile::Signals(s)) => signal_deviations(s, buyer, m, grid, true),
        (Mechanism::BidBalanced, Profile::Functions(b)) => {
            free_term_deviations(b, buyer, grid, false)
        }
        (Mechanism::BidThin, Profile::Functions(b)) => free_term_deviations(b, buyer, grid, true),
        (Mechanism::AffinePair, Profile::Affine(b)) => affine_deviations(b, buyer, grid),
        _ => {
            return Err(EngineError::UnsupportedShape(
                "strategy profile does not fit the mechanism".into(),
            ))
        }
    })
}

// ---------------------------------------------------------------------------
// Best-response checks.
// ---------------------------------------------------------------------------

struct CheckOutcome {
    deviations_checked: usize,
    max_violation: f64,
    worst: Option<(String, Profile, f64, f64)>,
}

/// Core comparison loop, generic over the pricing function so the test suite
/// can feed it a deliberately broken mechanism and watch it object.
fn check_core<E>(
    model: &LinearValuationModel,
    signals: &SignalProfile,
    buyer: usize,
    candidates: &[(String, Profile)],
    tie: TieRule,
    truthful_utility: f64,
    mut evaluate: E,
) -> Result<CheckOutcome>
where
    E: FnMut(&Profile) -> Result<Vec<(Allocation, Vec<f64>)>>,
{
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = None;
    for (label, profile) in candidates {
        let optima = evaluate(profile)?;
        let utility = expected_true_utility(model, signals, buyer, &optima, tie);
        let violation = utility - truthful_utility;
        if violation > max_violation {
            max_violation = violation;
            worst = Some((label.clone(), profile.clone(), truthful_utility, utility));
        }
    }
    Ok(CheckOutcome {
        deviations_checked: candidates.len(),
        max_violation,
        worst,
    })
}

/// Replays the mechanism once per grid deviation of one buyer, everyone else
/// playing the intended strategy, and reports the biggest utility gain any
/// deviation achieved. Zero (up to rounding) means the intended strategy was
/// a best response on this grid.
pub fn check_best_response(
    mechanism: Mechanism,
    model: &LinearValuationModel,
    signals: &SignalProfile,
    buyer: usize,
    grid: &DeviationGrid,
    cfg: &MechanismConfig,
) -> Result<EquilibriumReport> {
    grid.check()?;
    mechanism.check_shape(model.n, model.m)?;
    model.check_signals(signals)?;
    if buyer >= model.n {
        return Err(EngineError::DimensionMismatch(format!(
            "no buyer {buyer} among {}",
            model.n
        )));
    }

    let truthful = truthful_profile(mechanism, model, signals)?;
    let truthful_optima = priced_optima(mechanism, model, &truthful, cfg)?;
    let truthful_utility =
        expected_true_utility(model, signals, buyer, &truthful_optima, cfg.tie);

    let candidates = deviations(mechanism, &truthful, buyer, model.m, grid)?;
    let outcome = check_core(
        model,
        signals,
        buyer,
        &candidates,
        cfg.tie,
        truthful_utility,
        |profile| priced_optima(mechanism, model, profile, cfg),
    )?;

    Ok(EquilibriumReport {
        mechanism,
        instances_checked: 1,
        deviations_checked: outcome.deviations_checked,
        max_violation: outcome.max_violation,
        epsilon: cfg.epsilon,
        worst_case: outcome.worst.map(|(deviation, profile, tu, du)| WorstCase {
            mechanism,
            model: model.clone(),
            signals: signals.clone(),
            buyer,
            deviation,
            bids: profile.to_explicit(),
            truthful_utility: tu,
            deviation_utility: du,
        }),
    })
}

fn draw_model(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearValuationModel {
    LinearValuationModel::new(
        n,
        m,
        (0..n).map(|_| rng.random_range(0.1..3.0)).collect(),
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        (0..n).map(|_| rng.random_range(1.1..5.0)).collect(),
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .expect("sampled coefficients are in range")
}

fn draw_signals(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SignalProfile {
    SignalProfile(
        (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect(),
    )
}

/// Runs [`check_best_response`] for every buyer on `count` random markets of
/// the given size. Deterministic in `seed`; aggregation keeps the single
/// worst deviation seen anywhere.
pub fn sweep_random_instances(
    mechanism: Mechanism,
    n: usize,
    m: usize,
    count: usize,
    seed: u64,
    grid: &DeviationGrid,
    cfg: &MechanismConfig,
) -> Result<EquilibriumReport> {
    grid.check()?;
    mechanism.check_shape(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquilibriumReport {
        mechanism,
        instances_checked: 0,
        deviations_checked: 0,
        max_violation: f64::NEG_INFINITY,
        epsilon: cfg.epsilon,
        worst_case: None,
    };
    for _ in 0..count {
        let model = draw_model(&mut rng, n, m);
        let signals = draw_signals(&mut rng, n, m);
        report.instances_checked += 1;
        for buyer in 0..n {
            let one = check_best_response(mechanism, &model, &signals, buyer, grid, cfg)?;
            report.deviations_checked += one.deviations_checked;
            if one.max_violation > report.max_violation {
                report.max_violation = one.max_violation;
                report.worst_case = one.worst_case;
            }
        }
    }
    if report.instances_checked == 0 {
        report.max_violation = 0.0;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Property suites.
// ---------------------------------------------------------------------------

/// One randomized invariant check inside a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub instances: usize,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
    pub passed: bool,
}

/// Suites [`run_property_suite`] accepts, besides the catch-all `"all"`.
pub const PROPERTY_SUITES: [&str; 8] = [
    "lemma-2.1",
    "lemma-4.3",
    "lemma-4.5",
    "lemma-4.8",
    "lemma-4.9",
    "lemma-5.1",
    "lemma-5.2",
    "lemma-5.3",
];

const SUITE_TOLERANCE: f64 = 1e-9;

fn check_result(name: &str, instances: usize, worst: f64, limit: f64) -> PropertyCheck {
    PropertyCheck {
        name: name.to_string(),
        instances,
        passed: worst <= limit,
        detail: format!("worst observed {worst:.3e}, limit {limit:.1e}"),
    }
}

/// Pivot payments are nonnegative, agree with the externality formula, and
/// ignore how the winner words their own bid.
fn suite_pivot_payments(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MechanismConfig::default();
    let instances = 100;
    let mut worst_negative: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(1..=2);
        let bids: Vec<SubsetBid> = (0..n)
            .map(|_| {
                let mut bid = SubsetBid::new(m);
                for mask in 1u32..(1 << m) {
                    let bundle: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
                    bid.set(&bundle, rng.random_range(0.0..10.0)).unwrap();
                }
                bid
            })
            .collect();
        let audit = vcg::audit_payments(&bids, &cfg)?;
        worst_negative = worst_negative.max(-audit.min_payment);
        worst_gap = worst_gap.max(audit.max_route_gap);
        worst_shift = worst_shift.max(audit.max_reword_shift);
    }
    Ok(vec![
        check_result("payments stay nonnegative", instances, worst_negative, SUITE_TOLERANCE),
        check_result(
            "direct and externality payment routes agree",
            instances,
            worst_gap,
            SUITE_TOLERANCE,
        ),
        check_result(
            "rewording the winning bid moves no payment",
            instances,
            worst_shift,
            SUITE_TOLERANCE,
        ),
    ])
}

/// With nonnegative unit-demand values, letting buyers hold bundles never
/// beats the best one-good-each assignment.
fn suite_assignment_reduction(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = 1000;
    let mut failures = 0usize;
    for _ in 0..instances {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=n);
        let model = LinearValuationModel::new(
            n,
            m,
            (0..n).map(|_| rng.random_range(0.1..3.0)).collect(),
            (0..n).map(|_| rng.random_range(0.0..2.0)).collect(),
            (0..n).map(|_| rng.random_range(1.1..5.0)).collect(),
            (0..n).map(|_| rng.random_range(0.0..2.0)).collect(),
        )
        .unwrap();
        let signals = SignalProfile(
            (0..n)
                .map(|_| (0..m).map(|_| rng.random_range(0.0..5.0)).collect())
                .collect(),
        );
        let values: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..m).map(|a| model.valuation(&signals, i, a)).collect())
            .collect();
        if !unit_demand_reduction_check(&values, n, m, SUITE_TOLERANCE)? {
            failures += 1;
        }
    }
    Ok(vec![PropertyCheck {
        name: "bundle optimum equals one-good-each optimum".into(),
        instances,
        passed: failures == 0,
        detail: format!("{failures} mismatches"),
    }])
}

/// Balanced signal auction: a buyer's payment schedule never reacts to their
/// own reported row.
fn suite_balanced_schedule_independence(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MechanismConfig::default();
    let instances = 100;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(2..=4);
        let model = draw_model(&mut rng, n, n);
        let reports = draw_signals(&mut rng, n, n);
        let buyer = rng.random_range(0..n);
        let alternatives: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        worst = worst.max(payment_row_shift(&model, &reports, buyer, &alternatives, &cfg)?);
    }
    Ok(vec![check_result(
        "payment schedule ignores the buyer's own row",
        instances,
        worst,
        SUITE_TOLERANCE,
    )])
}

/// Thin signal auction: while the allocation stands, a winner's payment does
/// not react to their own reports.
fn suite_thin_payment_independence(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MechanismConfig::default();
    let instances = 100;
    let mut worst: f64 = 0.0;
    let mut kept = 0usize;
    for _ in 0..instances {
        let m = rng.random_range(1..=2);
        let n = rng.random_range(m + 1..=4);
        let model = draw_model(&mut rng, n, m);
        let reports = draw_signals(&mut rng, n, m);
        let run = evaluate_thin_signals(&model, &reports, &cfg)?;
        let base = price_thin(&model, &reports, &run.values, &run.solution.best, &cfg)?;
        for buyer in 0..n {
            if run.solution.best.good_of(buyer).is_none() {
                continue;
            }
            let row: Vec<f64> = reports.0[buyer]
                .iter()
                .map(|s| s + rng.random_range(-0.3..0.3))
                .collect();
            let tweaked = reports.with_row(buyer, row);
            let rerun = evaluate_thin_signals(&model, &tweaked, &cfg)?;
            if rerun.solution.best != run.solution.best {
                continue; // the perturbation flipped the allocation
            }
            kept += 1;
            let repriced =
                price_thin(&model, &tweaked, &rerun.values, &rerun.solution.best, &cfg)?;
            worst = worst.max((repriced.payments[buyer] - base.payments[buyer]).abs());
        }
    }
    Ok(vec![PropertyCheck {
        name: "winner's payment ignores their own reports".into(),
        instances: kept,
        passed: worst <= SUITE_TOLERANCE,
        detail: format!("worst observed {worst:.3e} over {kept} kept perturbations"),
    }])
}

/// Thin signal auction: the best arrangement among the other buyers is
/// unmoved by anything the excluded buyer reports.
fn suite_residual_invariance(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MechanismConfig::default();
    let instances = 100;
    let mut failures = 0usize;
    for _ in 0..instances {
        let m = rng.random_range(1..=2);
        let n = rng.random_range(m + 1..=4);
        let model = draw_model(&mut rng, n, m);
        let reports = draw_signals(&mut rng, n, m);
        let excluded = rng.random_range(0..n);
        let base = residual_allocation(&model, &reports, excluded, &cfg)?;
        for _ in 0..3 {
            let row: Vec<f64> = (0..m).map(|_| rng.random_range(-50.0..50.0)).collect();
            let tweaked = reports.with_row(excluded, row);
            let rerun = residual_allocation(&model, &tweaked, excluded, &cfg)?;
            // The welfare number shifts with the excluded buyer's spillover;
            // only the arrangement itself is claimed invariant.
            if rerun.best != base.best || rerun.optima != base.optima {
                failures += 1;
            }
        }
    }
    Ok(vec![PropertyCheck {
        name: "residual arrangement ignores the excluded buyer".into(),
        instances,
        passed: failures == 0,
        detail: format!("{failures} reactions"),
    }])
}

/// Truthful bid rows hit the buyer's true valuation at every consistent
/// profile, and the coefficient system has one answer regardless of pivot
/// order.
fn suite_truthful_bid_identity(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = 200;
    let mut worst_identity: f64 = 0.0;
    let mut worst_pivot_gap: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(2..=5);
        let model = draw_model(&mut rng, n, 1);
        let signals = draw_signals(&mut rng, n, 1);
        let buyer = rng.random_range(0..n);
        let row =
            bidfn_auctions::truthful_bid_coefficients(&model, buyer, signals.get(buyer, 0))?;
        let mut bid = row[buyer];
        for (j, weight) in row.iter().enumerate() {
            if j != buyer {
                bid += weight * model.valuation(&signals, j, 0);
            }
        }
        worst_identity =
            worst_identity.max((bid - model.valuation(&signals, buyer, 0)).abs());

        let k = n - 1;
        let others: Vec<usize> = (0..n).filter(|&j| j != buyer).collect();
        let matrix: Vec<Vec<f64>> = (0..k)
            .map(|r| {
                (0..k)
                    .map(|c| if r == c { model.c[others[r]] } else { 1.0 })
                    .collect()
            })
            .collect();
        let forward = linalg::solve(matrix.clone(), vec![1.0; k], "forward pivot order")?;
        let reversed = linalg::solve_reversed(&matrix, &vec![1.0; k], "reversed pivot order")?;
        for (a, b) in forward.iter().zip(&reversed) {
            worst_pivot_gap = worst_pivot_gap.max((a - b).abs());
        }
    }
    Ok(vec![
        check_result(
            "truthful bid returns the true valuation",
            instances,
            worst_identity,
            SUITE_TOLERANCE,
        ),
        check_result(
            "coefficient system is pivot-order independent",
            instances,
            worst_pivot_gap,
            SUITE_TOLERANCE,
        ),
    ])
}

/// The cross-coefficient system keeps all components strictly positive and
/// ties (ratio - 1) times the component to a common constant.
fn suite_system_positivity(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = 500;
    let mut min_component = f64::INFINITY;
    let mut worst_imbalance: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.random_range(1..=5);
        let c: Vec<f64> = (0..k).map(|_| rng.random_range(1.1..5.0)).collect();
        let matrix: Vec<Vec<f64>> = (0..k)
            .map(|r| (0..k).map(|col| if r == col { c[r] } else { 1.0 }).collect())
            .collect();
        let x = linalg::solve(matrix, vec![1.0; k], "positivity draw")?;
        let scaled: Vec<f64> = (0..k).map(|j| (c[j] - 1.0) * x[j]).collect();
        for &component in &x {
            min_component = min_component.min(component);
        }
        for pair in scaled.windows(2) {
            worst_imbalance = worst_imbalance.max((pair[0] - pair[1]).abs());
        }
    }
    Ok(vec![
        PropertyCheck {
            name: "solution components stay strictly positive".into(),
            instances,
            passed: min_component > 0.0,
            detail: format!("smallest component {min_component:.3e}"),
        },
        check_result(
            "(ratio - 1) scaled components agree",
            instances,
            worst_imbalance,
            SUITE_TOLERANCE,
        ),
    ])
}

/// Fixed points of validated profiles solve cleanly, the system stays
/// diagonally dominant, and tampered off-diagonals trip the no-trade gate.
fn suite_fixed_point(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = MechanismConfig::default();
    let instances = 100;
    let mut worst_residual: f64 = 0.0;
    let mut min_dominance = f64::INFINITY;
    let mut gate_failures = 0usize;
    for _ in 0..instances {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(1..=2);
        let model = draw_model(&mut rng, n, m);
        let signals = draw_signals(&mut rng, n, m);
        let bids = LinearBidProfile::truthful(&model, &signals)?;
        let screen = validate_consistency(&bids, cfg.epsilon);
        for a in 0..m {
            worst_residual = worst_residual.max(solve_fixed_point(&bids, a)?.residual);
        }
        for i in 0..n {
            let cross: f64 = (0..n).filter(|&j| j != i).map(|j| bids.coeff(0, i, j)).sum();
            min_dominance = min_dominance.min(screen.implied_ratio[i] - cross);
        }

        // Tamper one off-diagonal weight and insist nobody trades. Two
        // buyers on one good are exempt: a lone cross weight encodes a
        // ratio that no second row or good is there to contradict.
        if n == 2 && m == 1 {
            continue;
        }
        let mut coeffs = bids.coeffs().clone();
        let i = rng.random_range(0..n);
        let j = (i + 1 + rng.random_range(0..n - 1)) % n;
        coeffs[0][i][j] += 0.37;
        let tampered = LinearBidProfile::new(n, m, coeffs)?;
        let outcome = if n == m {
            bidfn_auctions::run_balanced(&tampered, &cfg)?
        } else if n > m {
            bidfn_auctions::run_thin(&tampered, &cfg)?
        } else {
            continue;
        };
        let traded = outcome.allocation.assigned.iter().any(|g| g.is_some())
            || outcome.payments.iter().any(|p| *p != 0.0);
        if traded {
            gate_failures += 1;
        }
    }
    Ok(vec![
        check_result(
            "fixed-point residuals stay tiny",
            instances,
            worst_residual,
            SUITE_TOLERANCE,
        ),
        PropertyCheck {
            name: "fixed-point system stays diagonally dominant".into(),
            instances,
            passed: min_dominance > 0.0,
            detail: format!("smallest dominance margin {min_dominance:.3e}"),
        },
        PropertyCheck {
            name: "tampered cross weights trip the no-trade gate".into(),
            instances,
            passed: gate_failures == 0,
            detail: format!("{gate_failures} trades slipped through"),
        },
    ])
}

/// Runs one named property suite (or `"all"`) on seeded random inputs.
pub fn run_property_suite(suite: &str, seed: u64) -> Result<PropertySuiteReport> {
    let checks = match suite {
        "lemma-2.1" => suite_pivot_payments(seed)?,
        "lemma-4.3" => suite_assignment_reduction(seed)?,
        "lemma-4.5" => suite_balanced_schedule_independence(seed)?,
        "lemma-4.8" => suite_thin_payment_independence(seed)?,
        "lemma-4.9" => suite_residual_invariance(seed)?,
        "lemma-5.1" => suite_truthful_bid_identity(seed)?,
        "lemma-5.2" => suite_system_positivity(seed)?,
        "lemma-5.3" => suite_fixed_point(seed)?,
        "all" => {
            let mut all = Vec::new();
            for name in PROPERTY_SUITES {
                all.extend(run_property_suite(name, seed)?.checks);
            }
            all
        }
        other => {
            return Err(EngineError::UnsupportedShape(format!(
                "unknown property suite '{other}'"
            )))
        }
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(PropertySuiteReport {
        suite: suite.to_string(),
        seed,
        checks,
        passed,
    })
}
