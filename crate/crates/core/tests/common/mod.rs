//! Fixtures shared by the integration tests: small hand-built feeders and the
//! bundled scenarios.

#![allow(dead_code)]

use std::path::PathBuf;

use p2pgrid::netmodel::{load_scenario, parse_feeder};
use p2pgrid::{Network, Profiles, ScenarioConfig};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Loads a bundled scenario by file stem, e.g. `paper-normal`.
pub fn scenario(name: &str) -> (Network, Profiles, ScenarioConfig) {
    load_scenario(&data_dir().join(format!("{name}.toml"))).expect("bundled scenario loads")
}

pub fn feeder33() -> Network {
    let text = std::fs::read_to_string(data_dir().join("ieee33.feeder")).unwrap();
    parse_feeder(&text, "ieee33.feeder").unwrap()
}

const HEADER: &str = "base_kv 12.66\nbase_mva 10\nroot 1\nimpedance pu\n";

/// Root 1 with a grid tie (5 MW export, 10 MW import) and one load bus.
/// `dg` adds a utility unit at the root as `(p_max kW, cost $/MWh)`.
pub fn two_bus(r: f64, x: f64, load_kw: f64, dg: Option<(f64, f64)>) -> Network {
    let mut text = format!(
        "name two-bus\n{HEADER}\n[nodes]\n1 0 0 0.95 1.05 none 1\n2 {load_kw} {q} 0.90 1.10 consumer 1\n\n\
         [lines]\n1 2 {r} {x} 10 100000\n\n[generators]\n1 grid -5000 10000 -10000 10000 0\n",
        q = 0.5 * load_kw,
    );
    if let Some((cap, cost)) = dg {
        text.push_str(&format!("1 dg 0 {cap} -{cap} {cap} {cost}\n"));
    }
    parse_feeder(&text, "two-bus").unwrap()
}

/// Five buses: 1-2-3-4 main branch with a lateral 2-5. A cheap 60 kW DG sits
/// at node 3 and a 400 kW DG at the root.
pub fn five_bus() -> Network {
    let text = format!(
        "name five-bus\n{HEADER}\n[nodes]\n\
         1 0   0   0.95 1.05 none     1\n\
         2 120 60  0.90 1.10 consumer 1\n\
         3 80  30  0.90 1.10 prosumer 1\n\
         4 150 70  0.90 1.10 consumer 1\n\
         5 90  40  0.90 1.10 consumer 2\n\n\
         [lines]\n\
         1 2 0.0060 0.0040 10 100000\n\
         2 3 0.0090 0.0050 10 100000\n\
         3 4 0.0120 0.0080 10 100000\n\
         2 5 0.0150 0.0070 10 100000\n\n\
         [generators]\n\
         1 grid -5000 10000 -10000 10000 0\n\
         1 dg   0 400 -400 400 50\n\
         3 dg   0 60  -60  60  25\n"
    );
    parse_feeder(&text, "five-bus").unwrap()
}

/// Nominal loads of `net` scaled by `m`.
pub fn loads(net: &Network, m: f64) -> (Vec<f64>, Vec<f64>) {
    (net.nodes.iter().map(|n| n.load_p * m).collect(), net.nodes.iter().map(|n| n.load_q * m).collect())
}

// ---------------------------------------------------------------------------
// Orders and the brute-force matching oracle
// ---------------------------------------------------------------------------

use p2pgrid::market::Side;
use p2pgrid::{NodeId as Nid, Order};

pub fn order(agent: u32, side: Side, node: u32, zone: Option<u32>, price: f64, quantity: f64) -> Order {
    Order { agent, side, node: Nid(node), zone: zone.map(p2pgrid::ZoneId), price, quantity, interval: 0 }
}

pub fn ask(agent: u32, price: f64, quantity: f64) -> Order {
    order(agent, Side::Ask, 2, Some(1), price, quantity)
}

pub fn bid(agent: u32, price: f64, quantity: f64) -> Order {
    order(agent, Side::Bid, 2, Some(1), price, quantity)
}

/// Largest number of disjoint (ask, bid) pairs with ask price strictly below
/// bid price, by exhaustive search over assignments. Unit quantities.
pub fn max_crossing_matching(asks: &[f64], bids: &[f64]) -> usize {
    fn go(i: usize, asks: &[f64], bids: &[f64], used: &mut Vec<bool>) -> usize {
        if i == asks.len() {
            return 0;
        }
        let mut best = go(i + 1, asks, bids, used);
        for j in 0..bids.len() {
            if !used[j] && asks[i] < bids[j] {
                used[j] = true;
                best = best.max(1 + go(i + 1, asks, bids, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, asks, bids, &mut vec![false; bids.len()])
}

/// Every (asks, bids) price assignment over `grid` with at most `max_agents`
/// agents in total and at least one of each side.
pub fn all_small_instances(grid: &[f64], max_agents: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    for total in 2..=max_agents {
        for n_ask in 1..total {
            let n_bid = total - n_ask;
            let combos = grid.len().pow(total as u32);
            for mut code in 0..combos {
                let mut prices = Vec::with_capacity(total);
                for _ in 0..total {
                    prices.push(grid[code % grid.len()]);
                    code /= grid.len();
                }
                out.push((prices[..n_ask].to_vec(), prices[n_ask..n_ask + n_bid].to_vec()));
            }
        }
    }
    out
}
