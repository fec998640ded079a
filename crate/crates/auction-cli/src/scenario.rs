//! Scenario files: a single JSON object that names a mechanism, a valuation
//! model, the signal profile, and optionally the exact bids to submit. When
//! bids are omitted the truthful ones are synthesized from the model and
//! signals, so a minimal scenario replays the intended play of the auction.
//! Unknown fields are rejected outright; a typo should fail loudly, not
//! silently run something else.

use serde::{Deserialize, Serialize};

use auction_core::bidfn_auctions::{self, AffineBid, LinearBidProfile};
use auction_core::model::Diagnostics;
use auction_core::signal_auctions;
use auction_core::vcg::{self, SubsetBid};
use auction_core::verify::{subset_bid_from_bundles, ExplicitBids, Mechanism, WorstCase};
use auction_core::{
    AuctionOutcome, EngineError, LinearValuationModel, MechanismConfig, SignalProfile,
    DEFAULT_EPSILON,
};

/// A command failure carrying the process exit code it maps to:
/// 2 parse, 3 shape, 4 validation (1 is reserved for found violations).
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn parse(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            message: message.into(),
        }
    }

    pub fn from_engine(err: EngineError) -> Self {
        let code = match err {
            EngineError::DimensionMismatch(_)
            | EngineError::UnsupportedShape(_)
            | EngineError::SizeGuard(_) => 3,
            _ => 4,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MechanismName {
    Vcg,
    Auction1,
    Auction2,
    Auction3,
    Auction4,
    Dm2,
}

impl MechanismName {
    pub fn core(self) -> Mechanism {
        match self {
            MechanismName::Vcg => Mechanism::Vcg,
            MechanismName::Auction1 => Mechanism::SignalBalanced,
            MechanismName::Auction2 => Mechanism::SignalThin,
            MechanismName::Auction3 => Mechanism::BidBalanced,
            MechanismName::Auction4 => Mechanism::BidThin,
            MechanismName::Dm2 => Mechanism::AffinePair,
        }
    }

    pub fn from_core(mechanism: Mechanism) -> Self {
        match mechanism {
            Mechanism::Vcg => MechanismName::Vcg,
            Mechanism::SignalBalanced => MechanismName::Auction1,
            Mechanism::SignalThin => MechanismName::Auction2,
            Mechanism::BidBalanced => MechanismName::Auction3,
            Mechanism::BidThin => MechanismName::Auction4,
            Mechanism::AffinePair => MechanismName::Dm2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MechanismName::Vcg => "vcg",
            MechanismName::Auction1 => "auction1",
            MechanismName::Auction2 => "auction2",
            MechanismName::Auction3 => "auction3",
            MechanismName::Auction4 => "auction4",
            MechanismName::Dm2 => "dm2",
        }
    }

    /// Sensible sweep sizes for `verify` when none are given on the command
    /// line: the smallest market where the mechanism is interesting.
    pub fn default_sweep_shape(self) -> (usize, usize) {
        match self {
            MechanismName::Vcg => (3, 2),
            MechanismName::Auction1 | MechanismName::Auction3 => (3, 3),
            MechanismName::Auction2 | MechanismName::Auction4 => (3, 2),
            MechanismName::Dm2 => (2, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieChoice {
    #[default]
    Lex,
    Random,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mechanism: MechanismName,
    pub model: LinearValuationModel,
    pub signals: SignalProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bids: Option<ExplicitBids>,
    #[serde(default)]
    pub tie: TieChoice,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::parse(format!("scenario: {e}")))
    }

    pub fn config(&self) -> MechanismConfig {
        let mut cfg = match self.tie {
            TieChoice::Lex => MechanismConfig::default(),
            TieChoice::Random => MechanismConfig::with_random_tie(self.seed),
        };
        cfg.epsilon = self.epsilon;
        cfg
    }

    /// Rebuilds the reproducer scenario for a violation the sweep found: the
    /// true model and signals, with the deviating strategy spelled out as
    /// explicit bids.
    pub fn from_worst_case(worst: &WorstCase, epsilon: f64) -> Self {
        Scenario {
            mechanism: MechanismName::from_core(worst.mechanism),
            model: worst.model.clone(),
            signals: worst.signals.clone(),
            bids: Some(worst.bids.clone()),
            tie: TieChoice::Lex,
            seed: 0,
            epsilon,
        }
    }
}

/// Bids in the shape the chosen mechanism consumes, either synthesized
/// truthfully or converted from the scenario's explicit ones.
#[derive(Debug)]
pub enum PreparedBids {
    Signals(SignalProfile),
    Subsets(Vec<SubsetBid>),
    Functions(LinearBidProfile),
    Affine(Box<(AffineBid, AffineBid)>),
}

/// Everything `run` needs after a scenario has been checked: the normalized
/// model, the bids to submit, the mechanism config, and any validation
/// warnings worth echoing into the report.
#[derive(Debug)]
pub struct CheckedScenario {
    pub mechanism: MechanismName,
    pub model: LinearValuationModel,
    pub bids: PreparedBids,
    pub cfg: MechanismConfig,
    pub warnings: Vec<String>,
}

pub fn check(scenario: &Scenario) -> Result<CheckedScenario, Failure> {
    // Re-run the construction checks; a hand-written file can carry rows of
    // the wrong length or non-finite entries the serde layer accepts.
    let model = LinearValuationModel::new(
        scenario.model.n,
        scenario.model.m,
        scenario.model.f_slope.clone(),
        scenario.model.f_intercept.clone(),
        scenario.model.c.clone(),
        scenario.model.d.clone(),
    )
    .map_err(Failure::from_engine)?;

    scenario
        .mechanism
        .core()
        .check_shape(model.n, model.m)
        .map_err(|e| Failure::shape(e.to_string()))?;

    let report = model.validate(&scenario.signals);
    if !report.errors.is_empty() {
        return Err(Failure::validation(report.errors.join("; ")));
    }

    let bids = prepare_bids(scenario, &model)?;
    Ok(CheckedScenario {
        mechanism: scenario.mechanism,
        model,
        bids,
        cfg: scenario.config(),
        warnings: report.warnings,
    })
}

fn prepare_bids(scenario: &Scenario, model: &LinearValuationModel) -> Result<PreparedBids, Failure> {
    let mechanism = scenario.mechanism;
    match (&scenario.bids, mechanism) {
        // Nothing explicit: synthesize the truthful strategies.
        (None, MechanismName::Auction1 | MechanismName::Auction2) => {
            Ok(PreparedBids::Signals(scenario.signals.clone()))
        }
        (None, MechanismName::Vcg) => {
            let bids = (0..model.n)
                .map(|i| SubsetBid::truthful(model, &scenario.signals, i))
                .collect::<Result<Vec<_>, _>>()
                .map_err(Failure::from_engine)?;
            Ok(PreparedBids::Subsets(bids))
        }
        (None, MechanismName::Auction3 | MechanismName::Auction4) => {
            let bids = LinearBidProfile::truthful(model, &scenario.signals)
                .map_err(Failure::from_engine)?;
            Ok(PreparedBids::Functions(bids))
        }
        (None, MechanismName::Dm2) => {
            let b0 =
                AffineBid::truthful(model, &scenario.signals, 0).map_err(Failure::from_engine)?;
            let b1 =
                AffineBid::truthful(model, &scenario.signals, 1).map_err(Failure::from_engine)?;
            Ok(PreparedBids::Affine(Box::new((b0, b1))))
        }

        // Explicit bids must match the mechanism's shape.
        (
            Some(ExplicitBids::SignalReports { reports }),
            MechanismName::Auction1 | MechanismName::Auction2,
        ) => {
            model
                .check_signals(reports)
                .map_err(Failure::from_engine)?;
            Ok(PreparedBids::Signals(reports.clone()))
        }
        (Some(ExplicitBids::SubsetBids { bids }), MechanismName::Vcg) => {
            if bids.len() != model.n {
                return Err(Failure::shape(format!(
                    "got subset bids for {} buyers, expected {}",
                    bids.len(),
                    model.n
                )));
            }
            let converted = bids
                .iter()
                .map(|bundles| subset_bid_from_bundles(model.m, bundles))
                .collect::<Result<Vec<_>, _>>()
                .map_err(Failure::from_engine)?;
            Ok(PreparedBids::Subsets(converted))
        }
        (
            Some(ExplicitBids::BidFunctions { coefficients }),
            MechanismName::Auction3 | MechanismName::Auction4,
        ) => {
            let bids = LinearBidProfile::new(model.n, model.m, coefficients.clone())
                .map_err(Failure::from_engine)?;
            Ok(PreparedBids::Functions(bids))
        }
        (Some(ExplicitBids::Affine { intercepts, slopes }), MechanismName::Dm2) => {
            if intercepts.len() != 2 || slopes.len() != 2 {
                return Err(Failure::shape(
                    "affine bids need exactly two intercepts and two slopes".to_string(),
                ));
            }
            let b0 = AffineBid::new(intercepts[0], slopes[0]).map_err(Failure::from_engine)?;
            let b1 = AffineBid::new(intercepts[1], slopes[1]).map_err(Failure::from_engine)?;
            Ok(PreparedBids::Affine(Box::new((b0, b1))))
        }
        (Some(_), _) => Err(Failure::shape(format!(
            "the supplied bids are the wrong kind for mechanism '{}'",
            mechanism.as_str()
        ))),
    }
}

pub fn execute(checked: &CheckedScenario) -> Result<AuctionOutcome, Failure> {
    let cfg = &checked.cfg;
    let outcome = match (&checked.bids, checked.mechanism) {
        (PreparedBids::Subsets(bids), MechanismName::Vcg) => vcg::run_vcg(bids, cfg),
        (PreparedBids::Signals(reports), MechanismName::Auction1) => {
            signal_auctions::run_balanced(&checked.model, reports, cfg)
        }
        (PreparedBids::Signals(reports), MechanismName::Auction2) => {
            signal_auctions::run_thin(&checked.model, reports, cfg)
        }
        (PreparedBids::Functions(bids), MechanismName::Auction3) => {
            bidfn_auctions::run_balanced(bids, cfg)
        }
        (PreparedBids::Functions(bids), MechanismName::Auction4) => {
            bidfn_auctions::run_thin(bids, cfg)
        }
        (PreparedBids::Affine(pair), MechanismName::Dm2) => {
            bidfn_auctions::run_affine_pair(&pair.0, &pair.1, cfg)
        }
        _ => unreachable!("prepare_bids pairs bids with their mechanism"),
    };
    outcome.map_err(Failure::from_engine)
}

/// The report `run` emits: the outcome plus the scenario's validation
/// warnings, under the mechanism's public name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub mechanism: String,
    pub allocation: Vec<Option<usize>>,
    pub payments: Vec<f64>,
    pub utilities: Vec<f64>,
    pub welfare: f64,
    pub warnings: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl OutcomeReport {
    pub fn new(checked: &CheckedScenario, outcome: AuctionOutcome) -> Self {
        OutcomeReport {
            mechanism: checked.mechanism.as_str().to_string(),
            allocation: outcome.allocation.assigned,
            payments: outcome.payments,
            utilities: outcome.utilities,
            welfare: outcome.welfare,
            warnings: checked.warnings.clone(),
            diagnostics: outcome.diagnostics,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let push = |out: &mut String, line: String| {
            out.push_str(&line);
            out.push('\n');
        };
        push(&mut out, format!("mechanism: {}", self.mechanism));
        for (good, holder) in self.allocation.iter().enumerate() {
            match holder {
                Some(buyer) => push(&mut out, format!("good {good} -> buyer {buyer}")),
                None => push(&mut out, format!("good {good} -> unsold")),
            }
        }
        push(
            &mut out,
            format!(
                "payments: [{}]",
                self.payments
                    .iter()
                    .map(|p| format!("{p:.6}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        );
        push(
            &mut out,
            format!(
                "utilities: [{}]",
                self.utilities
                    .iter()
                    .map(|u| format!("{u:.6}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        );
        push(&mut out, format!("welfare: {:.6}", self.welfare));
        match &self.diagnostics {
            Diagnostics::OneGoodEach {
                permutations,
                payment_table,
                selected,
                ..
            } => {
                push(&mut out, format!("selected assignment: {:?}", permutations[*selected]));
                for (i, row) in payment_table.iter().enumerate() {
                    push(
                        &mut out,
                        format!(
                            "price schedule, buyer {i}: [{}]",
                            row.iter()
                                .map(|p| format!("{p:.6}"))
                                .collect::<Vec<_>>()
                                .join(", ")
                        ),
                    );
                }
            }
            Diagnostics::ThinMarket {
                clearing_signal, ..
            } => {
                for (i, s) in clearing_signal.iter().enumerate() {
                    if let Some(s) = s {
                        push(&mut out, format!("clearing signal, buyer {i}: {s:.6}"));
                    }
                }
            }
            Diagnostics::BidFunction {
                rejected,
                violations,
                fixed_points,
                ..
            } => {
                if *rejected {
                    push(&mut out, "bids rejected: no trade".to_string());
                    for v in violations {
                        push(&mut out, format!("  {v}"));
                    }
                } else {
                    for (k, fp) in fixed_points.iter().enumerate() {
                        push(
                            &mut out,
                            format!(
                                "fixed point, good {k}: [{}]",
                                fp.iter()
                                    .map(|v| format!("{v:.6}"))
                                    .collect::<Vec<_>>()
                                    .join(", ")
                            ),
                        );
                    }
                }
            }
            Diagnostics::TwoBuyerAffine { fixed_point, .. } => {
                push(
                    &mut out,
                    format!(
                        "fixed point: [{:.6}, {:.6}]",
                        fixed_point[0], fixed_point[1]
                    ),
                );
            }
            Diagnostics::Vcg {
                best_welfare,
                residual_welfare,
                ..
            } => {
                push(&mut out, format!("best bid welfare: {best_welfare:.6}"));
                push(
                    &mut out,
                    format!(
                        "residual welfare: [{}]",
                        residual_welfare
                            .iter()
                            .map(|w| format!("{w:.6}"))
                            .collect::<Vec<_>>()
                            .join(", ")
                    ),
                );
            }
        }
        for w in &self.warnings {
            push(&mut out, format!("warning: {w}"));
        }
        out
    }
}
