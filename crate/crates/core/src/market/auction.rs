use std::collections::BTreeMap;

use super::{AuctionOutcome, MarketError, Match, Order, PoolPrice, Round, Side, VettingStatus, QTY_EPS};
use crate::netmodel::Network;

/// Asks ascending and bids descending by price; equal prices by agent id.
pub fn sort_orders(mut asks: Vec<Order>, mut bids: Vec<Order>) -> (Vec<Order>, Vec<Order>) {
    asks.sort_by(|a, b| a.price.total_cmp(&b.price).then(a.agent.cmp(&b.agent)));
    bids.sort_by(|a, b| b.price.total_cmp(&a.price).then(a.agent.cmp(&b.agent)));
    (asks, bids)
}

/// Unweighted mean of every ask and bid price in the pool.
pub fn average_price(asks: &[Order], bids: &[Order]) -> Result<f64, MarketError> {
    let n = asks.len() + bids.len();
    if n == 0 {
        return Err(MarketError::EmptyPool);
    }
    let sum: f64 = asks.iter().chain(bids).map(|o| o.price).sum();
    Ok(sum / n as f64)
}

/// Orders allowed to trade at pool price `gamma`: asks strictly below it and
/// bids strictly above it.
pub fn qualify(asks: &[Order], bids: &[Order], gamma: f64) -> (Vec<Order>, Vec<Order>) {
    (
        asks.iter().filter(|o| o.price < gamma).cloned().collect(),
        bids.iter().filter(|o| o.price > gamma).cloned().collect(),
    )
}

/// Matches and leftovers of one pool. Residual orders carry their unmatched
/// quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub matches: Vec<Match>,
    pub residual_asks: Vec<Order>,
    pub residual_bids: Vec<Order>,
}

/// Greedy pairing: the lowest remaining ask meets the highest remaining bid
/// while the ask is strictly below the bid. Each pair trades the smaller
/// remainder at the midpoint of the two prices.
pub fn match_round(asks: &[Order], bids: &[Order], round: Round) -> RoundOutcome {
    let (asks, bids) = sort_orders(asks.to_vec(), bids.to_vec());
    let mut ra: Vec<f64> = asks.iter().map(|o| o.quantity).collect();
    let mut rb: Vec<f64> = bids.iter().map(|o| o.quantity).collect();
    let mut matches = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < asks.len() && j < bids.len() && asks[i].price < bids[j].price {
        let q = ra[i].min(rb[j]);
        let (a, b) = (&asks[i], &bids[j]);
        matches.push(Match {
            seller: a.agent,
            buyer: b.agent,
            seller_node: a.node,
            buyer_node: b.node,
            quantity: q,
            price: 0.5 * (a.price + b.price),
            ask_price: a.price,
            bid_price: b.price,
            round,
            interval: a.interval,
            status: VettingStatus::Pending,
        });
        ra[i] -= q;
        rb[j] -= q;
        if ra[i] <= QTY_EPS {
            i += 1;
        }
        if rb[j] <= QTY_EPS {
            j += 1;
        }
    }
    let left = |book: &[Order], rem: &[f64]| -> Vec<Order> {
        book.iter().zip(rem).filter(|(_, r)| **r > QTY_EPS).map(|(o, r)| Order { quantity: *r, ..o.clone() }).collect()
    };
    RoundOutcome { residual_asks: left(&asks, &ra), residual_bids: left(&bids, &rb), matches }
}

fn validate(orders: &[Order], network: &Network, dlmp: &[f64]) -> Result<(), MarketError> {
    let mut seen = BTreeMap::new();
    for o in orders {
        let bad = |reason: String| MarketError::InvalidOrder { agent: o.agent, reason };
        if o.interval != orders[0].interval {
            return Err(MarketError::MixedIntervals(orders[0].interval, o.interval));
        }
        if !(o.price >= 0.0 && o.price.is_finite()) {
            return Err(bad(format!("price {} must be finite and >= 0", o.price)));
        }
        if !(o.quantity > 0.0 && o.quantity.is_finite()) {
            return Err(bad(format!("quantity {} must be finite and > 0", o.quantity)));
        }
        let idx = network.index_of(o.node).ok_or_else(|| bad(format!("unknown node {}", o.node)))?;
        if o.side == Side::Bid {
            let cap = *dlmp.get(idx).ok_or(MarketError::MissingDlmp(o.node))?;
            if o.price > cap + 1e-9 {
                return Err(MarketError::BidAboveCap { agent: o.agent, price: o.price, cap });
            }
        }
        if seen.insert((o.agent, o.side), ()).is_some() {
            return Err(MarketError::DuplicateAgent(o.agent));
        }
    }
    Ok(())
}

/// Runs the nodal, zonal and network rounds over one interval's orders.
///
/// `dlmp` is indexed by node index and caps every bid. Orders keep their
/// prices across rounds; each round recomputes `γ` over its own pool. Pools
/// missing either side are skipped. Agents outside every zone skip the zonal
/// round.
pub fn run_mrda(orders: &[Order], network: &Network, dlmp: &[f64]) -> Result<AuctionOutcome, MarketError> {
    validate(orders, network, dlmp)?;
    let interval = orders.first().map_or(0, |o| o.interval);
    let mut remaining: Vec<f64> = orders.iter().map(|o| o.quantity).collect();
    let index: BTreeMap<(u32, Side), usize> = orders.iter().enumerate().map(|(i, o)| ((o.agent, o.side), i)).collect();
    let mut matches = Vec::new();
    let mut pool_prices = Vec::new();

    for round in [Round::Nodal, Round::Zonal, Round::Network] {
        let mut pools: BTreeMap<(u32, String), (Vec<Order>, Vec<Order>)> = BTreeMap::new();
        for (i, o) in orders.iter().enumerate() {
            if remaining[i] <= QTY_EPS {
                continue;
            }
            let key = match round {
                Round::Nodal => (o.node.0, format!("node {}", o.node)),
                Round::Zonal => match o.zone {
                    Some(z) => (z.0, format!("zone {z}")),
                    None => continue,
                },
                Round::Network => (0, "network".to_string()),
            };
            let pool = pools.entry(key).or_default();
            let live = Order { quantity: remaining[i], ..o.clone() };
            match o.side {
                Side::Ask => pool.0.push(live),
                Side::Bid => pool.1.push(live),
            }
        }
        for ((_, scope), (asks, bids)) in pools {
            if asks.is_empty() || bids.is_empty() {
                continue;
            }
            let gamma = average_price(&asks, &bids)?;
            pool_prices.push(PoolPrice { round, scope, gamma, asks: asks.len(), bids: bids.len() });
            let (qa, qb) = qualify(&asks, &bids, gamma);
            let out = match_round(&qa, &qb, round);
            for m in &out.matches {
                remaining[index[&(m.seller, Side::Ask)]] -= m.quantity;
                remaining[index[&(m.buyer, Side::Bid)]] -= m.quantity;
            }
            matches.extend(out.matches);
        }
    }
    for r in &mut remaining {
        if *r <= QTY_EPS {
            *r = 0.0;
        }
    }
    Ok(AuctionOutcome {
        interval,
        orders: orders.to_vec(),
        matches,
        residual: remaining,
        pool_prices,
        settlements: Vec::new(),
        hours: 0.0,
        settled: false,
    })
}
