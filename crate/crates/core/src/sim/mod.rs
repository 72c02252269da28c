//! Interval-by-interval orchestration: outage events, the pre-market
//! dispatch that sets price signals, the auction, vetting, re-dispatch with
//! approved trades held fixed, settlement and resilience accounting.

mod compare;
mod config;
mod events;
mod kernel;

pub use compare::{compare_runs, Comparison, ComparisonRow, RI_TOLERANCE};
pub use config::{OutageElement, OutageEvent, ScenarioConfig, StrategyParams, VettingParams};
pub use events::{apply_events, OperatingState};
pub use kernel::{resilience_index, run_simulation, run_simulation_with, signal_problem, IntervalRecord, MIN_ORDER_KW};

use crate::dispatch::DispatchError;
use crate::market::MarketError;
use crate::netmodel::ValidationError;
use crate::vetting::VettingError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("unknown element in outage event: {0}")]
    UnknownElement(String),
    #[error("resilience index undefined for shed {shed} kW of total {total} kW")]
    UndefinedResilience { shed: f64, total: f64 },
    #[error("horizons differ: {left} vs {right}")]
    HorizonMismatch { left: usize, right: usize },
    #[error("interval {interval}: {source}")]
    Dispatch {
        interval: usize,
        #[source]
        source: DispatchError,
    },
    #[error("interval {interval}: {source}")]
    Market {
        interval: usize,
        #[source]
        source: MarketError,
    },
    #[error("interval {interval}: {source}")]
    Vetting {
        interval: usize,
        #[source]
        source: VettingError,
    },
}
