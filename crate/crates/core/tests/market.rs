//! Multi-round double auction: ordering, average price, qualification,
//! greedy pairing, settlement, payoffs and the auction-level invariants.

mod common;

use std::collections::BTreeMap;

use common::{ask, bid, order};
use p2pgrid::dispatch::Mode;
use p2pgrid::market::{
    average_price, match_round, payoffs, qualify, run_mrda, settle, sort_orders, BiddingStrategy, OrderContext, Round,
    Side, UniformBand, VettingStatus,
};
use p2pgrid::{MarketError, Network, NodeId, Order};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prices(orders: &[Order]) -> Vec<f64> {
    orders.iter().map(|o| o.price).collect()
}

fn flat_dlmp(net: &Network, price: f64) -> Vec<f64> {
    vec![price; net.node_count()]
}

// ---------------------------------------------------------------------------
// Book operations
// ---------------------------------------------------------------------------

#[test]
fn sort_orders_by_price() {
    let (a, _) = sort_orders(vec![ask(1, 20.0, 1.0), ask(2, 10.0, 1.0), ask(3, 15.0, 1.0)], vec![]);
    assert_eq!(prices(&a), vec![10.0, 15.0, 20.0]);
    let (_, b) = sort_orders(vec![], vec![bid(1, 25.0, 1.0), bid(2, 40.0, 1.0), bid(3, 30.0, 1.0)]);
    assert_eq!(prices(&b), vec![40.0, 30.0, 25.0]);
}

#[test]
fn sort_orders_ties_by_agent_id() {
    let (a, b) = sort_orders(vec![ask(8, 10.0, 1.0), ask(3, 10.0, 1.0)], vec![bid(7, 30.0, 1.0), bid(2, 30.0, 1.0)]);
    assert_eq!(a.iter().map(|o| o.agent).collect::<Vec<_>>(), vec![3, 8]);
    assert_eq!(b.iter().map(|o| o.agent).collect::<Vec<_>>(), vec![2, 7]);
}

#[test]
fn average_price_examples() {
    let asks = [ask(1, 10.0, 1.0), ask(2, 20.0, 1.0)];
    let bids = [bid(3, 30.0, 1.0), bid(4, 40.0, 1.0)];
    assert_eq!(average_price(&asks, &bids).unwrap(), 25.0);
    assert_eq!(average_price(&[ask(1, 50.0, 1.0)], &[bid(2, 40.0, 1.0)]).unwrap(), 45.0);
    let p = 37.25;
    assert_eq!(average_price(&[ask(1, p, 1.0), ask(2, p, 3.0)], &[bid(3, p, 1.0)]).unwrap(), p);
    assert_eq!(average_price(&[], &[]), Err(MarketError::EmptyPool));
}

#[test]
fn qualify_examples() {
    let asks = [ask(1, 10.0, 1.0), ask(2, 20.0, 1.0)];
    let bids = [bid(3, 30.0, 1.0), bid(4, 40.0, 1.0)];
    let (qa, qb) = qualify(&asks, &bids, 25.0);
    assert_eq!((qa.len(), qb.len()), (2, 2));

    let (qa, qb) = qualify(&[ask(1, 50.0, 1.0)], &[bid(2, 40.0, 1.0)], 45.0);
    assert!(qa.is_empty() && qb.is_empty());

    let (qa, qb) = qualify(&[ask(1, 25.0, 1.0)], &[bid(2, 25.0, 1.0)], 25.0);
    assert!(qa.is_empty() && qb.is_empty(), "boundary prices are excluded");
}

#[test]
fn match_round_partial_fill() {
    let out = match_round(&[ask(1, 10.0, 5.0)], &[bid(2, 40.0, 3.0)], Round::Nodal);
    assert_eq!(out.matches.len(), 1);
    let m = &out.matches[0];
    assert_eq!((m.quantity, m.price), (3.0, 25.0));
    assert_eq!(m.status, VettingStatus::Pending);
    assert_eq!(out.residual_asks.len(), 1);
    assert_eq!(out.residual_asks[0].quantity, 2.0);
    assert!(out.residual_bids.is_empty());
}

#[test]
fn match_round_two_full_pairs() {
    let out =
        match_round(&[ask(1, 10.0, 5.0), ask(2, 20.0, 5.0)], &[bid(3, 40.0, 5.0), bid(4, 30.0, 5.0)], Round::Zonal);
    let got: Vec<_> = out.matches.iter().map(|m| (m.ask_price, m.bid_price, m.quantity, m.price)).collect();
    assert_eq!(got, vec![(10.0, 40.0, 5.0, 25.0), (20.0, 30.0, 5.0, 25.0)]);
    assert!(out.residual_asks.is_empty() && out.residual_bids.is_empty());
}

#[test]
fn match_round_needs_crossing_prices() {
    let out = match_round(&[ask(1, 30.0, 1.0)], &[bid(2, 20.0, 1.0)], Round::Network);
    assert!(out.matches.is_empty());
    assert_eq!(out.residual_asks.len(), 1);
    assert_eq!(out.residual_bids.len(), 1);
}

// ---------------------------------------------------------------------------
// Rounds
// ---------------------------------------------------------------------------

#[test]
fn co_located_pair_clears_in_nodal_round() {
    let net = common::feeder33();
    let orders = vec![order(1, Side::Ask, 18, Some(1), 25.0, 10.0), order(2, Side::Bid, 18, Some(1), 45.0, 10.0)];
    let out = run_mrda(&orders, &net, &flat_dlmp(&net, 50.0)).unwrap();
    assert_eq!(out.matches.len(), 1);
    assert_eq!(out.matches[0].round, Round::Nodal);
    assert_eq!(out.pool_prices[0].scope, "node 18");
}

#[test]
fn cross_zone_pair_clears_in_network_round() {
    let net = common::feeder33();
    let orders = vec![order(1, Side::Ask, 3, Some(1), 25.0, 10.0), order(2, Side::Bid, 33, Some(3), 45.0, 10.0)];
    let out = run_mrda(&orders, &net, &flat_dlmp(&net, 50.0)).unwrap();
    assert_eq!(out.matches.len(), 1);
    assert_eq!(out.matches[0].round, Round::Network);
    assert!(out.pool_prices.iter().all(|p| p.round == Round::Network));
}

#[test]
fn no_crossing_prices_means_no_trade() {
    let net = common::feeder33();
    let orders = vec![
        order(1, Side::Ask, 3, Some(1), 45.0, 10.0),
        order(2, Side::Bid, 4, Some(1), 30.0, 10.0),
        order(3, Side::Bid, 33, Some(3), 35.0, 10.0),
    ];
    let mut out = run_mrda(&orders, &net, &flat_dlmp(&net, 50.0)).unwrap();
    assert!(out.matches.is_empty());
    assert_eq!(out.residual, vec![10.0, 10.0, 10.0]);
    let dlmp: BTreeMap<NodeId, f64> = net.nodes.iter().map(|n| (n.id, 50.0)).collect();
    settle(&mut out, 20.0, &dlmp, 0.25).unwrap();
    assert_eq!(out.settlements.len(), 3);
}

#[test]
fn residuals_advance_to_zonal_round() {
    let net = common::feeder33();
    // The node-4 pool holds only a bid, so it waits for the zone-1 pool.
    let orders = vec![
        order(1, Side::Ask, 3, Some(1), 22.0, 4.0),
        order(2, Side::Bid, 3, Some(1), 40.0, 1.0),
        order(3, Side::Bid, 4, Some(1), 48.0, 5.0),
    ];
    let out = run_mrda(&orders, &net, &flat_dlmp(&net, 50.0)).unwrap();
    let rounds: Vec<_> = out.matches.iter().map(|m| (m.round, m.buyer, m.quantity)).collect();
    assert_eq!(rounds, vec![(Round::Nodal, 2, 1.0), (Round::Zonal, 3, 3.0)]);
    assert_eq!(out.residual, vec![0.0, 0.0, 2.0]);
}

#[test]
fn run_mrda_rejects_bad_orders() {
    let net = common::feeder33();
    let dlmp = flat_dlmp(&net, 50.0);
    let over = [order(1, Side::Bid, 5, Some(1), 60.0, 1.0)];
    assert!(matches!(run_mrda(&over, &net, &dlmp), Err(MarketError::BidAboveCap { agent: 1, .. })));
    let neg = [order(1, Side::Ask, 5, Some(1), -1.0, 1.0)];
    assert!(matches!(run_mrda(&neg, &net, &dlmp), Err(MarketError::InvalidOrder { agent: 1, .. })));
    let zero = [order(1, Side::Ask, 5, Some(1), 1.0, 0.0)];
    assert!(matches!(run_mrda(&zero, &net, &dlmp), Err(MarketError::InvalidOrder { .. })));
    let dup = [order(1, Side::Ask, 5, Some(1), 1.0, 1.0), order(1, Side::Ask, 6, Some(1), 2.0, 1.0)];
    assert_eq!(run_mrda(&dup, &net, &dlmp), Err(MarketError::DuplicateAgent(1)));
    let mut late = order(2, Side::Ask, 5, Some(1), 1.0, 1.0);
    late.interval = 3;
    let mixed = [order(1, Side::Ask, 5, Some(1), 1.0, 1.0), late];
    assert_eq!(run_mrda(&mixed, &net, &dlmp), Err(MarketError::MixedIntervals(0, 3)));
    let unknown = [order(1, Side::Ask, 99, None, 1.0, 1.0)];
    assert!(matches!(run_mrda(&unknown, &net, &dlmp), Err(MarketError::InvalidOrder { .. })));
}

// ---------------------------------------------------------------------------
// Settlement and payoffs
// ---------------------------------------------------------------------------

fn dlmp_map(net: &Network, price: f64) -> BTreeMap<NodeId, f64> {
    net.nodes.iter().map(|n| (n.id, price)).collect()
}

#[test]
fn settle_unmatched_ask_at_fit() {
    let net = common::feeder33();
    let mut out = run_mrda(&[ask(1, 30.0, 2.0)], &net, &flat_dlmp(&net, 50.0)).unwrap();
    settle(&mut out, 20.0, &dlmp_map(&net, 50.0), 0.25).unwrap();
    assert_eq!(out.settlements.len(), 1);
    let s = &out.settlements[0];
    assert_eq!((s.side, s.quantity, s.price), (Side::Ask, 2.0, 20.0));
    // 2 kW × 0.25 h × 20 $/MWh / 1000
    assert!((s.amount - 0.01).abs() < 1e-15, "{}", s.amount);
}

#[test]
fn settle_unmatched_bid_at_dlmp() {
    let net = common::feeder33();
    let mut out = run_mrda(&[bid(1, 45.0, 4.0)], &net, &flat_dlmp(&net, 50.0)).unwrap();
    settle(&mut out, 20.0, &dlmp_map(&net, 50.0), 0.25).unwrap();
    assert!((out.settlements[0].amount + 0.05).abs() < 1e-15, "{}", out.settlements[0].amount);
    assert!((out.grid_net() + 0.05).abs() < 1e-15);
}

#[test]
fn fully_matched_market_has_no_grid_settlement() {
    let net = common::feeder33();
    let mut out = run_mrda(&[ask(1, 10.0, 5.0), bid(2, 40.0, 5.0)], &net, &flat_dlmp(&net, 50.0)).unwrap();
    settle(&mut out, 20.0, &dlmp_map(&net, 50.0), 0.25).unwrap();
    assert!(out.settlements.is_empty());
    assert_eq!(out.grid_net(), 0.0);
    assert_eq!(settle(&mut out, 20.0, &dlmp_map(&net, 50.0), 0.25), Err(MarketError::AlreadySettled));
}

#[test]
fn settle_needs_dlmp_for_residual_demand() {
    let net = common::feeder33();
    let mut out = run_mrda(&[bid(1, 45.0, 4.0)], &net, &flat_dlmp(&net, 50.0)).unwrap();
    assert_eq!(settle(&mut out, 20.0, &BTreeMap::new(), 0.25), Err(MarketError::MissingDlmp(NodeId(2))));
}

#[test]
fn blocked_match_settles_with_the_grid() {
    let net = common::feeder33();
    let mut out = run_mrda(&[ask(1, 10.0, 5.0), bid(2, 40.0, 5.0)], &net, &flat_dlmp(&net, 50.0)).unwrap();
    out.matches[0].status = VettingStatus::Blocked("line overload: 1-2".into());
    settle(&mut out, 20.0, &dlmp_map(&net, 50.0), 0.25).unwrap();
    assert_eq!(out.settlements.len(), 2);
    assert_eq!(out.traded_quantity(), 0.0);
    assert_eq!(out.average_transaction_price(), None);
    assert_eq!(payoffs(&out).total, 0.0);
}

#[test]
fn payoffs_split_surplus_equally() {
    let net = common::feeder33();
    let out =
        run_mrda(&[ask(1, 10.0, 5.0), bid(2, 40.0, 5.0), bid(3, 12.0, 5.0)], &net, &flat_dlmp(&net, 50.0)).unwrap();
    let p = payoffs(&out);
    assert_eq!(p.seller[&1], 75.0);
    assert_eq!(p.buyer[&2], 75.0);
    assert_eq!(p.buyer[&3], 0.0, "losing agent");
    assert_eq!(p.total, 150.0);
    assert_eq!(out.average_transaction_price(), Some(25.0));
}

#[test]
fn atp_is_quantity_weighted() {
    let out = {
        let net = common::feeder33();
        run_mrda(
            &[ask(1, 10.0, 1.0), ask(2, 20.0, 3.0), bid(3, 40.0, 1.0), bid(4, 36.0, 3.0)],
            &net,
            &flat_dlmp(&net, 50.0),
        )
        .unwrap()
    };
    // γ = 26.5; pairs (10, 40) 1 kW @ 25 and (20, 36) 3 kW @ 28.
    assert_eq!(out.matches.len(), 2);
    assert!((out.average_transaction_price().unwrap() - (25.0 + 3.0 * 28.0) / 4.0).abs() < 1e-12);
}

// ---------------------------------------------------------------------------
// Bidding strategy
// ---------------------------------------------------------------------------

fn ctx(side: Side, dlmp: f64, mode: Mode) -> OrderContext {
    OrderContext { agent: 1, side, node: NodeId(5), dlmp, fit: 20.0, mode, interval: 0 }
}

#[test]
fn uniform_band_bounds() {
    let s = UniformBand::default();
    assert_eq!(s.band(&ctx(Side::Ask, 50.0, Mode::GridConnected)), (20.0, 50.0));
    let (lo, hi) = s.band(&ctx(Side::Bid, 120.0, Mode::Islanded));
    assert!((lo - 80.0).abs() < 1e-12 && hi == 120.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let p = s.price(&ctx(Side::Bid, 120.0, Mode::Islanded), &mut rng);
        assert!((80.0..=120.0).contains(&p));
    }
    // A price signal under the tariff collapses the band.
    assert_eq!(s.price(&ctx(Side::Ask, 15.0, Mode::GridConnected), &mut rng), 20.0);
    assert_eq!(s.price(&ctx(Side::Bid, 15.0, Mode::GridConnected), &mut rng), 15.0);
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

/// Random orders on the 33-node feeder with distinct agents, bids capped at
/// the nodal price.
fn book() -> impl Strategy<Value = (Vec<Order>, Vec<f64>)> {
    let dlmp = prop::collection::vec(40.0f64..120.0, 33);
    let raw = prop::collection::vec((any::<bool>(), 0usize..33, 0.0f64..1.0, 0.01f64..50.0), 1..24);
    (dlmp, raw).prop_map(|(dlmp, raw)| {
        let net = common::feeder33();
        let orders = raw
            .into_iter()
            .enumerate()
            .map(|(k, (is_ask, i, u, q))| {
                let node = &net.nodes[i];
                let side = if is_ask { Side::Ask } else { Side::Bid };
                let price = 20.0 + u * (dlmp[i] - 20.0);
                let zone = net.zone_of(node.id).map(|z| z.0);
                order(k as u32 + 1, side, node.id.0, zone, price, q)
            })
            .collect();
        (orders, dlmp)
    })
}

fn gamma_of(out: &p2pgrid::AuctionOutcome, net: &Network, m: &p2pgrid::Match) -> f64 {
    let scope = match m.round {
        Round::Nodal => format!("node {}", m.seller_node),
        Round::Zonal => format!("zone {}", net.zone_of(m.seller_node).unwrap()),
        Round::Network => "network".into(),
    };
    out.pool_prices.iter().find(|p| p.round == m.round && p.scope == scope).unwrap().gamma
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn auction_invariants((orders, dlmp) in book()) {
        let net = common::feeder33();
        let mut out = run_mrda(&orders, &net, &dlmp).unwrap();
        let map: BTreeMap<NodeId, f64> = net.nodes.iter().zip(&dlmp).map(|(n, d)| (n.id, *d)).collect();
        settle(&mut out, 20.0, &map, 0.25).unwrap();

        // Strong budget balance.
        prop_assert!(out.auctioneer_net().abs() <= 1e-9);
        // Individual rationality.
        let p = payoffs(&out);
        for v in p.seller.values().chain(p.buyer.values()) {
            prop_assert!(*v >= 0.0);
        }
        // Quantity conservation per order.
        for (i, o) in out.orders.iter().enumerate() {
            let total = out.matched_quantity(i) + out.residual[i];
            prop_assert!((total - o.quantity).abs() <= 1e-9, "agent {} {} vs {}", o.agent, total, o.quantity);
        }
        // Threshold soundness and per-match price bracket.
        for m in &out.matches {
            let g = gamma_of(&out, &net, m);
            prop_assert!(m.ask_price < g && m.bid_price > g);
            prop_assert!(m.ask_price <= m.price && m.price <= m.bid_price);
            prop_assert_eq!(m.price, 0.5 * (m.ask_price + m.bid_price));
        }
        // Grid settlement covers exactly the residuals.
        let settled: f64 = out.settlements.iter().map(|s| s.quantity).sum();
        let residual: f64 = out.residual.iter().sum();
        prop_assert!((settled - residual).abs() <= 1e-9);
    }

    #[test]
    fn nodal_pairs_trade_before_zonal(ask_p in 20.0f64..30.0, bid_p in 31.0f64..50.0, node in 1usize..33) {
        let net = common::feeder33();
        let id = net.nodes[node].id;
        let zone = net.zone_of(id).map(|z| z.0);
        let orders = vec![
            order(1, Side::Ask, id.0, zone, ask_p, 3.0),
            order(2, Side::Bid, id.0, zone, bid_p, 2.0),
            order(3, Side::Bid, if id.0 == 2 { 4 } else { 2 }, Some(1), 49.0, 2.0),
        ];
        let out = run_mrda(&orders, &net, &flat_dlmp(&net, 50.0)).unwrap();
        prop_assert!(!out.matches.is_empty());
        prop_assert_eq!(out.matches[0].round, Round::Nodal);
        prop_assert_eq!(out.matches[0].buyer, 2);
    }

    #[test]
    fn greedy_attains_max_crossing_quantity(
        a in prop::collection::vec(0usize..5, 1..5),
        b in prop::collection::vec(0usize..5, 1..5),
    ) {
        let grid = [10.0, 20.0, 30.0, 40.0, 50.0];
        let asks: Vec<Order> = a.iter().enumerate().map(|(k, &i)| ask(k as u32, grid[i], 1.0)).collect();
        let bids: Vec<Order> = b.iter().enumerate().map(|(k, &i)| bid(100 + k as u32, grid[i], 1.0)).collect();
        let gamma = average_price(&asks, &bids).unwrap();
        let (qa, qb) = qualify(&asks, &bids, gamma);
        let out = match_round(&qa, &qb, Round::Network);
        let traded: f64 = out.matches.iter().map(|m| m.quantity).sum();
        let best = common::max_crossing_matching(&prices(&qa), &prices(&qb));
        prop_assert_eq!(traded, best as f64);
    }
}
