use std::collections::BTreeMap;

use super::{AuctionOutcome, GridSettlement, MarketError, Side, QTY_EPS};
use crate::netmodel::NodeId;

/// Settles everything the auction left over with the grid.
///
/// Blocked matches count as unmatched. Residual asks are credited at `fit`
/// and residual bids are debited at their node's price in `dlmp`, both over
/// an interval of `hours`. Amounts are in $ with quantities in kW and prices
/// in $/MWh.
pub fn settle(
    outcome: &mut AuctionOutcome,
    fit: f64,
    dlmp: &BTreeMap<NodeId, f64>,
    hours: f64,
) -> Result<(), MarketError> {
    if outcome.settled {
        return Err(MarketError::AlreadySettled);
    }
    let residual: Vec<f64> = (0..outcome.orders.len())
        .map(|i| {
            let r = outcome.orders[i].quantity - outcome.matched_quantity(i);
            if r <= QTY_EPS {
                0.0
            } else {
                r
            }
        })
        .collect();
    let mut settlements = Vec::new();
    for (o, &r) in outcome.orders.iter().zip(&residual) {
        if r == 0.0 {
            continue;
        }
        let (price, sign) = match o.side {
            Side::Ask => (fit, 1.0),
            Side::Bid => (*dlmp.get(&o.node).ok_or(MarketError::MissingDlmp(o.node))?, -1.0),
        };
        settlements.push(GridSettlement {
            agent: o.agent,
            side: o.side,
            node: o.node,
            quantity: r,
            price,
            amount: sign * r * hours * price / 1000.0,
        });
    }
    outcome.residual = residual;
    outcome.settlements = settlements;
    outcome.hours = hours;
    outcome.settled = true;
    Ok(())
}

/// Surplus of each winning agent, in kW·$/MWh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Payoffs {
    /// `SW_n = Σ_m (γ_nm − Sp_n)·q_nm` per seller.
    pub seller: BTreeMap<u32, f64>,
    /// `BW_m = Σ_n (Bp_m − γ_nm)·q_nm` per buyer.
    pub buyer: BTreeMap<u32, f64>,
    pub total: f64,
}

/// Per-agent surplus over live matches; agents that never traded get 0.
pub fn payoffs(outcome: &AuctionOutcome) -> Payoffs {
    let mut p = Payoffs::default();
    for o in &outcome.orders {
        match o.side {
            Side::Ask => p.seller.entry(o.agent).or_insert(0.0),
            Side::Bid => p.buyer.entry(o.agent).or_insert(0.0),
        };
    }
    for m in outcome.live_matches() {
        *p.seller.entry(m.seller).or_insert(0.0) += (m.price - m.ask_price) * m.quantity;
        *p.buyer.entry(m.buyer).or_insert(0.0) += (m.bid_price - m.price) * m.quantity;
    }
    p.total = p.seller.values().sum::<f64>() + p.buyer.values().sum::<f64>();
    p
}
