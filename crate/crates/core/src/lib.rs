//! Peer-to-peer energy market simulator for radial distribution feeders.
//!
//! The crate computes nodal prices from the duals of a branch-flow optimal
//! power flow, clears a multi-round double auction with average-price
//! clearing, screens the resulting trades with linear sensitivity factors,
//! and tracks how much load is served when the feeder is islanded.

// `!(x >= 0.0)` is how NaN gets rejected; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod check;
pub mod dispatch;
pub mod market;
pub mod netmodel;
pub mod report;
pub mod sim;
pub mod vetting;

pub use dispatch::{DispatchError, DispatchProblem, DispatchResult, Mode};
pub use market::{AuctionOutcome, MarketError, Match, Order, Side};
pub use netmodel::{LoadError, Network, NodeId, Profiles, ValidationError, ZoneId};
pub use report::RunReport;
pub use sim::{IntervalRecord, ScenarioConfig, SimError};
pub use vetting::VettingError;

/// Any failure surfaced to a caller, grouped by the exit status it maps to.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invariant check failed: {}", .0.join(", "))]
    CheckFailed(Vec<String>),
}

impl Error {
    /// Process exit status: 2 unreadable or malformed input, 3 invalid
    /// input, 4 solver or engine failure, 5 failed invariant check.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Load(e) if e.is_parse() => 2,
            Error::Load(_) | Error::Validation(_) => 3,
            Error::Sim(SimError::Validation(_) | SimError::UnknownElement(_)) => 3,
            Error::Sim(_) => 4,
            Error::Write { .. } => 2,
            Error::CheckFailed(_) => 5,
        }
    }
}
