//! Exact solvers and payment rules for small unit-demand auctions in which one
//! buyer's information affects another buyer's willingness to pay.
//!
//! The crate covers three families of mechanisms plus the machinery to audit
//! them:
//!
//! * [`vcg`]: the classic pivot mechanism over subset bids, for buyers whose
//!   values do not depend on anyone else's information.
//! * [`signal_auctions`]: direct mechanisms in which each buyer reports the
//!   signal vector behind a [`model::LinearValuationModel`]. Covers the
//!   one-good-per-buyer case (as many buyers as goods) and the thin-market
//!   case (more buyers than goods).
//! * [`bidfn_auctions`]: indirect mechanisms in which buyers submit linear
//!   bid functions of each other's valuations. Includes the two-buyer
//!   single-good auction where each bid is an affine function of the rival's
//!   value, and the fixed-point constructions that reduce the general case
//!   back to the signal mechanisms.
//! * [`verify`]: a brute-force deviation harness that checks, instance by
//!   instance, that truthful behaviour is a best response against a grid of
//!   alternative reports, plus property suites for the payment identities the
//!   mechanisms rely on.
//!
//! Everything here is exact enumeration at desk scale: allocation problems
//! are solved by trying every feasible assignment, and the guards in
//! [`assign`] refuse instances large enough for that to hurt. Determinism is
//! part of the contract; identical inputs and seeds give identical outputs.

pub mod assign;
pub mod bidfn_auctions;
pub mod error;
mod linalg;
pub mod model;
pub mod signal_auctions;
pub mod vcg;
pub mod verify;

pub use assign::TieRule;
pub use error::EngineError;
pub use model::{Allocation, AuctionOutcome, LinearValuationModel, SignalProfile};

/// Absolute tolerance used for every floating-point comparison in the crate
/// unless a caller overrides it through [`MechanismConfig`].
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Knobs shared by every mechanism entry point: how to break ties between
/// equally good allocations and how close two welfares must be to count as
/// tied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanismConfig {
    pub tie: TieRule,
    pub epsilon: f64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            tie: TieRule::Lexicographic,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl MechanismConfig {
    /// Lexicographic tie-breaking with a custom tolerance.
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            tie: TieRule::Lexicographic,
            epsilon,
        }
    }

    /// Seeded uniform tie-breaking at the default tolerance.
    pub fn with_random_tie(seed: u64) -> Self {
        Self {
            tie: TieRule::Random { seed },
            epsilon: DEFAULT_EPSILON,
        }
    }
}
