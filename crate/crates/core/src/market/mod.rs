//! Multi-round double auction with average-price clearing.
//!
//! Orders are matched first among agents at the same node, then within a
//! zone, then across the whole network. In every round the pool's average
//! price `γ` decides who may trade: asks strictly below it, bids strictly
//! above it. Qualified books are paired greedily and each pair clears at the
//! midpoint of its ask and bid. Whatever is left over is settled with the
//! grid: surplus at the feed-in tariff, demand at the local nodal price.

mod auction;
mod settle;
mod strategy;

use std::collections::BTreeMap;
use std::fmt;

use crate::netmodel::{NodeId, ZoneId};

pub use auction::{average_price, match_round, qualify, run_mrda, sort_orders, RoundOutcome};
pub use settle::{payoffs, settle, Payoffs};
pub use strategy::{BiddingStrategy, OrderContext, UniformBand};

/// Tolerance below which a remaining quantity counts as filled, kW.
pub const QTY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Ask,
    Bid,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Ask => "ask",
            Side::Bid => "bid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Order {
    pub agent: u32,
    pub side: Side,
    pub node: NodeId,
    pub zone: Option<ZoneId>,
    /// $/MWh
    pub price: f64,
    /// kW
    pub quantity: f64,
    pub interval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Round {
    Nodal,
    Zonal,
    Network,
}

impl Round {
    pub fn as_str(self) -> &'static str {
        match self {
            Round::Nodal => "nodal",
            Round::Zonal => "zonal",
            Round::Network => "network",
        }
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VettingStatus {
    Pending,
    Approved,
    /// Carries the binding constraint, e.g. `line overload: 5-6`.
    Blocked(String),
}

impl VettingStatus {
    pub fn is_blocked(&self) -> bool {
        matches!(self, VettingStatus::Blocked(_))
    }
}

/// A cleared pair. `price` is the pair's clearing price `γ_nm`.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub seller: u32,
    pub buyer: u32,
    pub seller_node: NodeId,
    pub buyer_node: NodeId,
    /// kW
    pub quantity: f64,
    /// $/MWh
    pub price: f64,
    pub ask_price: f64,
    pub bid_price: f64,
    pub round: Round,
    pub interval: usize,
    pub status: VettingStatus,
}

/// Average price of one auction pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolPrice {
    pub round: Round,
    /// `node 18`, `zone 2` or `network`.
    pub scope: String,
    pub gamma: f64,
    pub asks: usize,
    pub bids: usize,
}

/// A trade with the grid at the fallback price. `amount` is signed from the
/// agent's point of view: positive for a credit, negative for a debit.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSettlement {
    pub agent: u32,
    pub side: Side,
    pub node: NodeId,
    pub quantity: f64,
    pub price: f64,
    pub amount: f64,
}

/// Result of one interval's auction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuctionOutcome {
    pub interval: usize,
    pub orders: Vec<Order>,
    /// Ledger order: the order matches were made in.
    pub matches: Vec<Match>,
    /// Quantity left unmatched per order, aligned with `orders`.
    pub residual: Vec<f64>,
    pub pool_prices: Vec<PoolPrice>,
    /// Filled by [`settle`].
    pub settlements: Vec<GridSettlement>,
    /// Interval length used for cash amounts, hours. Set by [`settle`].
    pub hours: f64,
    pub settled: bool,
}

impl AuctionOutcome {
    /// Matches that survived vetting (or have not been vetted yet).
    pub fn live_matches(&self) -> impl Iterator<Item = &Match> {
        self.matches.iter().filter(|m| !m.status.is_blocked())
    }

    /// Quantity-weighted mean clearing price over live matches, $/MWh.
    pub fn average_transaction_price(&self) -> Option<f64> {
        let (qty, value) = self.live_matches().fold((0.0, 0.0), |(q, v), m| (q + m.quantity, v + m.quantity * m.price));
        (qty > QTY_EPS).then(|| value / qty)
    }

    /// Traded kW over live matches.
    pub fn traded_quantity(&self) -> f64 {
        self.live_matches().map(|m| m.quantity).sum()
    }

    /// Cash per agent over live matches, $: payments by each buyer and
    /// receipts of each seller.
    pub fn p2p_cash(&self) -> (BTreeMap<u32, f64>, BTreeMap<u32, f64>) {
        let k = self.hours / 1000.0;
        let mut paid = BTreeMap::new();
        let mut received = BTreeMap::new();
        for m in self.live_matches() {
            *paid.entry(m.buyer).or_insert(0.0) += m.price * m.quantity * k;
            *received.entry(m.seller).or_insert(0.0) += m.price * m.quantity * k;
        }
        (paid, received)
    }

    /// Auctioneer's net cash over P2P matches, $: buyer payments minus
    /// seller receipts.
    pub fn auctioneer_net(&self) -> f64 {
        let (paid, received) = self.p2p_cash();
        paid.values().sum::<f64>() - received.values().sum::<f64>()
    }

    /// Quantity of order `idx` that ended in live matches.
    pub fn matched_quantity(&self, idx: usize) -> f64 {
        let o = &self.orders[idx];
        self.live_matches()
            .filter(|m| match o.side {
                Side::Ask => m.seller == o.agent,
                Side::Bid => m.buyer == o.agent,
            })
            .map(|m| m.quantity)
            .sum()
    }

    /// Net grid settlement, $: credits minus debits.
    pub fn grid_net(&self) -> f64 {
        self.settlements.iter().map(|s| s.amount).sum()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MarketError {
    #[error("average price of an empty pool is undefined")]
    EmptyPool,
    #[error("invalid order from agent {agent}: {reason}")]
    InvalidOrder { agent: u32, reason: String },
    #[error("bid from agent {agent} at {price} $/MWh exceeds the nodal price cap {cap} $/MWh")]
    BidAboveCap { agent: u32, price: f64, cap: f64 },
    #[error("orders span intervals {0} and {1}")]
    MixedIntervals(usize, usize),
    #[error("agent {0} submitted more than one order on the same side")]
    DuplicateAgent(u32),
    #[error("no nodal price for node {0} with residual demand")]
    MissingDlmp(NodeId),
    #[error("outcome already settled")]
    AlreadySettled,
}
