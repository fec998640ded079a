//! End-to-end acceptance gate. Each test covers one numbered criterion and
//! prints a single PASS line with the measured evidence; the stated runtime
//! budgets are asserted, not just hoped for.

use std::time::Instant;

use auction_core::bidfn_auctions::LinearBidProfile;
use auction_core::model::Diagnostics;
use auction_core::signal_auctions;
use auction_core::verify::{
    check_best_response, run_property_suite, sweep_random_instances, DeviationGrid,
    DeviationMode, Mechanism,
};
use auction_core::{LinearValuationModel, MechanismConfig, SignalProfile};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOLERANCE: f64 = 1e-9;

fn cfg() -> MechanismConfig {
    MechanismConfig::default()
}

/// Two buyers, two goods: spillovers s/3 and s/2, own-effect ratios 3 and 2.
fn pair_model() -> LinearValuationModel {
    LinearValuationModel::new(
        2,
        2,
        vec![1.0 / 3.0, 0.5],
        vec![0.0, 0.0],
        vec![3.0, 2.0],
        vec![0.0, 0.0],
    )
    .unwrap()
}

/// Three buyers, two goods: spillovers s/2, s/2, s/3, ratios 2, 2, 3.
fn trio_model() -> LinearValuationModel {
    LinearValuationModel::new(
        3,
        2,
        vec![0.5, 0.5, 1.0 / 3.0],
        vec![0.0; 3],
        vec![2.0, 2.0, 3.0],
        vec![0.0; 3],
    )
    .unwrap()
}

fn budget(start: Instant, seconds: u64, label: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < seconds,
        "{label} took {elapsed:?}, budget {seconds}s"
    );
}

#[test]
fn criterion_1_balanced_worked_example() {
    let start = Instant::now();
    let model = pair_model();

    // Truthful run at s_1 = (1, 2), s_2 = (2, 4): the price schedule for
    // buyer 0 is (6.5, 4), the straight assignment wins, and buyer 0's
    // utility is s_1A + 1 = 2.
    let signals = SignalProfile(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
    let outcome = signal_auctions::run_balanced(&model, &signals, &cfg()).unwrap();
    let Diagnostics::OneGoodEach {
        permutations,
        payment_table,
        selected,
        ..
    } = &outcome.diagnostics
    else {
        panic!("balanced run must carry a payment table");
    };
    assert_eq!(permutations[0], vec![0, 1], "first permutation is straight");
    assert!((payment_table[0][0] - 6.5).abs() < TOLERANCE);
    assert!((payment_table[0][1] - 4.0).abs() < TOLERANCE);
    assert_eq!(*selected, 0);
    assert!((outcome.payments[0] - 0.0).abs() < TOLERANCE);
    assert!((outcome.utilities[0] - 2.0).abs() < TOLERANCE, "s_1A + 1");

    // Forcing the swapped assignment costs the schedule gap 6.5 - 4 = 2.5,
    // and the deviator's true payoff is s_1B - 0.5 = 1.5 minus nothing more.
    let forced = signals.with_row(0, vec![1.0, 10.0]);
    let outcome = signal_auctions::run_balanced(&model, &forced, &cfg()).unwrap();
    assert_eq!(outcome.allocation.assigned, vec![Some(1), Some(0)]);
    assert!((outcome.payments[0] - 2.5).abs() < TOLERANCE);
    let true_value = model.valuation(&signals, 0, 1);
    assert!(
        (true_value - outcome.payments[0] - (2.0 - 0.5)).abs() < TOLERANCE,
        "s_1B - 0.5 after paying the gap"
    );

    // When the swap is genuinely efficient the truthful utility is
    // s_1B - 0.5.
    let swapped = SignalProfile(vec![vec![1.0, 4.0], vec![2.0, 4.0]]);
    let outcome = signal_auctions::run_balanced(&model, &swapped, &cfg()).unwrap();
    assert_eq!(outcome.allocation.assigned, vec![Some(1), Some(0)]);
    assert!((outcome.utilities[0] - (4.0 - 0.5)).abs() < TOLERANCE);

    // At the knife edge s_1B = s_1A + 1.5 both assignments are optimal and
    // both hand the buyer the same payoff: the tie utility is the mean of
    // the two case formulas, mean(s_1) + 0.25.
    let tie = SignalProfile(vec![vec![1.0, 2.5], vec![2.0, 4.0]]);
    let outcome = signal_auctions::run_balanced(&model, &tie, &cfg()).unwrap();
    let Diagnostics::OneGoodEach {
        permutations,
        payment_table,
        optima,
        ..
    } = &outcome.diagnostics
    else {
        panic!("balanced run must carry a payment table");
    };
    assert_eq!(optima.len(), 2, "knife edge has two optima");
    let utility_of = |p: usize| {
        let good = permutations[p][0];
        let best = payment_table[0]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        model.valuation(&tie, 0, good) - (best - payment_table[0][p])
    };
    let mean = (utility_of(optima[0]) + utility_of(optima[1])) / 2.0;
    let mean_signal = (1.0 + 2.5) / 2.0;
    assert!((utility_of(optima[0]) - utility_of(optima[1])).abs() < TOLERANCE);
    assert!((mean - (mean_signal + 0.25)).abs() < TOLERANCE);

    budget(start, 1, "criterion 1");
    println!(
        "criterion 1: PASS - schedule (6.5, 4), swap costs 2.5, utilities s+1 / s-0.5 / mean+0.25"
    );
}

#[test]
fn criterion_2_thin_worked_example() {
    let start = Instant::now();
    let model = trio_model();
    let rivals = [vec![2.0, 2.0], vec![3.0, 6.0]];
    let with_row0 = |row: Vec<f64>| {
        SignalProfile(vec![row, rivals[0].clone(), rivals[1].clone()])
    };

    // Allocation regions over buyer 0's report (x, y), probed away from the
    // boundaries: buyer 0 takes good 0 iff x >= max(2, y - 4), takes good 1
    // iff y >= max(6, x + 4), and otherwise buyers 1 and 2 split the goods.
    let probes: [(f64, f64); 9] = [
        (3.0, 1.0),
        (2.5, 6.0),
        (10.0, 13.5),
        (0.0, 8.0),
        (-1.0, 6.5),
        (4.0, 9.0),
        (1.0, 1.0),
        (-3.0, 0.0),
        (1.5, 5.0),
    ];
    for (x, y) in probes {
        let outcome =
            signal_auctions::run_thin(&model, &with_row0(vec![x, y]), &cfg()).unwrap();
        let expected = if x >= f64::max(2.0, y - 4.0) {
            vec![Some(0), Some(2)]
        } else if y >= f64::max(6.0, x + 4.0) {
            vec![Some(2), Some(0)]
        } else {
            vec![Some(1), Some(2)]
        };
        assert_eq!(
            outcome.allocation.assigned, expected,
            "region mismatch at ({x}, {y})"
        );
    }

    // Truthful run at s_1 = (3, 1): buyer 0 wins good 0 at clearing signal 2
    // and pays 4.
    let outcome = signal_auctions::run_thin(&model, &with_row0(vec![3.0, 1.0]), &cfg()).unwrap();
    let Diagnostics::ThinMarket {
        clearing_signal, ..
    } = &outcome.diagnostics
    else {
        panic!("thin run must carry clearing signals");
    };
    assert_eq!(outcome.allocation.assigned, vec![Some(0), Some(2)]);
    assert!((clearing_signal[0].unwrap() - 2.0).abs() < TOLERANCE);
    assert!((outcome.payments[0] - 4.0).abs() < TOLERANCE);

    // Overstating the other good, s_1' = (0, 8): buyer 0 now takes good 1 at
    // clearing signal 6 and pays 9.
    let outcome = signal_auctions::run_thin(&model, &with_row0(vec![0.0, 8.0]), &cfg()).unwrap();
    let Diagnostics::ThinMarket {
        clearing_signal, ..
    } = &outcome.diagnostics
    else {
        panic!("thin run must carry clearing signals");
    };
    assert_eq!(outcome.allocation.assigned, vec![Some(2), Some(0)]);
    assert!((clearing_signal[0].unwrap() - 6.0).abs() < TOLERANCE);
    assert!((outcome.payments[0] - 9.0).abs() < TOLERANCE);

    budget(start, 1, "criterion 2");
    println!("criterion 2: PASS - regions hold, clearing signals 2 and 6, payments 4 and 9");
}

#[test]
fn criterion_3_pivot_truthfulness_sweep() {
    let start = Instant::now();
    let grid = DeviationGrid::default();
    let mut instances = 0;
    for (combo, (n, m)) in [(1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2)]
        .into_iter()
        .enumerate()
    {
        let report = sweep_random_instances(
            Mechanism::Vcg,
            n,
            m,
            34,
            900 + combo as u64,
            &grid,
            &cfg(),
        )
        .unwrap();
        assert!(
            report.passed(),
            "pivot sweep failed at n={n}, m={m}: violation {:.3e} via {:?}",
            report.max_violation,
            report.worst_case.map(|w| w.deviation)
        );
        instances += report.instances_checked;
    }
    assert!(instances >= 200, "only {instances} instances swept");
    budget(start, 30, "criterion 3");
    println!(
        "criterion 3: PASS - {instances} pivot instances, no deviation gained more than 1e-9"
    );
}

#[test]
fn criterion_4_signal_auction_best_response_sweeps() {
    let start = Instant::now();
    let grid = DeviationGrid::default();
    assert!(grid.include_exit, "exit strategy is part of the contract");

    let balanced = sweep_random_instances(
        Mechanism::SignalBalanced,
        3,
        3,
        200,
        41,
        &grid,
        &cfg(),
    )
    .unwrap();
    assert!(
        balanced.passed(),
        "balanced sweep violation {:.3e} via {:?}",
        balanced.max_violation,
        balanced.worst_case.map(|w| w.deviation)
    );
    assert_eq!(balanced.instances_checked, 200);

    let thin = sweep_random_instances(Mechanism::SignalThin, 3, 2, 200, 43, &grid, &cfg())
        .unwrap();
    assert!(
        thin.passed(),
        "thin sweep violation {:.3e} via {:?}",
        thin.max_violation,
        thin.worst_case.map(|w| w.deviation)
    );
    assert_eq!(thin.instances_checked, 200);

    budget(start, 60, "criterion 4");
    println!(
        "criterion 4: PASS - 200 balanced + 200 thin instances, worst gains {:.3e} and {:.3e}",
        balanced.max_violation, thin.max_violation
    );
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
    .unwrap()
}

fn draw_signals(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SignalProfile {
    SignalProfile(
        (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect(),
    )
}

#[test]
fn criterion_5_bid_function_reductions() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(55);

    // Balanced: truthful bid functions must land exactly where the direct
    // signal auction lands.
    let mut worst_square: f64 = 0.0;
    for round in 0..100 {
        let n = 2 + round % 3;
        let model = draw_model(&mut rng, n, n);
        let signals = draw_signals(&mut rng, n, n);
        let bids = LinearBidProfile::truthful(&model, &signals).unwrap();
        let indirect = auction_core::bidfn_auctions::run_balanced(&bids, &cfg()).unwrap();
        let direct = signal_auctions::run_balanced(&model, &signals, &cfg()).unwrap();
        assert_eq!(indirect.allocation, direct.allocation, "allocation diverged");
        for i in 0..n {
            worst_square = worst_square.max((indirect.payments[i] - direct.payments[i]).abs());
        }
    }
    assert!(
        worst_square < TOLERANCE,
        "balanced payment gap {worst_square:.3e}"
    );

    // Thin: same story with more buyers than goods.
    let mut worst_thin: f64 = 0.0;
    for round in 0..100 {
        let (n, m) = if round % 2 == 0 { (3, 2) } else { (4, 2) };
        let model = draw_model(&mut rng, n, m);
        let signals = draw_signals(&mut rng, n, m);
        let bids = LinearBidProfile::truthful(&model, &signals).unwrap();
        let indirect = auction_core::bidfn_auctions::run_thin(&bids, &cfg()).unwrap();
        let direct = signal_auctions::run_thin(&model, &signals, &cfg()).unwrap();
        assert_eq!(indirect.allocation, direct.allocation, "allocation diverged");
        for i in 0..n {
            worst_thin = worst_thin.max((indirect.payments[i] - direct.payments[i]).abs());
        }
    }
    assert!(worst_thin < TOLERANCE, "thin payment gap {worst_thin:.3e}");

    budget(start, 60, "criterion 5");
    println!(
        "criterion 5: PASS - 100+100 reductions, worst payment gaps {worst_square:.3e} and {worst_thin:.3e}"
    );
}

#[test]
fn criterion_6_property_suites() {
    let start = Instant::now();
    let report = run_property_suite("all", 6).unwrap();
    for check in &report.checks {
        assert!(check.passed, "{}: {}", check.name, check.detail);
    }
    assert!(report.passed);
    budget(start, 60, "criterion 6");
    println!(
        "criterion 6: PASS - {} randomized property checks, all within tolerance",
        report.checks.len()
    );
}

#[test]
fn criterion_7_desk_scale_contract() {
    // Truthfulness being a best response is a claim over continuous strategy
    // spaces; a finite harness can only refute, not prove. This pins down what
    // the sweeps above do check: the documented offset grid around truth,
    // one walk-away strategy where the mechanism admits one, and exact
    // averaging over tie sets, all at the 1e-9 tolerance.
    let grid = DeviationGrid::default();
    assert_eq!(
        grid.offsets,
        vec![-2.0, -1.0, -0.5, -0.1, 0.1, 0.5, 1.0, 2.0],
        "documented deviation offsets"
    );
    assert_eq!(grid.mode, DeviationMode::PerCoordinate);
    assert!(grid.include_exit);

    // The self-comparison is always part of the sweep, so a reported
    // violation can never be negative and zero means "no grid deviation
    // helped", nothing stronger.
    let model = pair_model();
    let signals = SignalProfile(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
    let zero_grid = DeviationGrid {
        offsets: vec![0.0],
        mode: DeviationMode::PerCoordinate,
        include_exit: false,
    };
    let report = check_best_response(
        Mechanism::SignalBalanced,
        &model,
        &signals,
        0,
        &zero_grid,
        &cfg(),
    )
    .unwrap();
    assert!(report.max_violation.abs() <= 1e-12);
    assert!(report.passed());

    println!(
        "criterion 7: PASS - grid sweeps are the stated necessary-condition check, not a proof"
    );
}
