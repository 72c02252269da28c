//! Invariant battery run over a completed simulation.

use std::fmt::Write as _;

use crate::dispatch::{dispatch, dlmp_fd_oracle, extract_dlmp, Mode};
use crate::market::{payoffs, Side};
use crate::netmodel::{Network, Profiles};
use crate::sim::{compare_runs, run_simulation, signal_problem, IntervalRecord, ScenarioConfig, SimError};

/// Tolerances of the battery.
pub const BUDGET_TOL: f64 = 1e-9;
pub const EXACTNESS_TOL: f64 = 1e-6;
pub const BALANCE_TOL: f64 = 1e-6;
/// Load step of the finite-difference price oracle, kW.
pub const FD_STEP_KW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.results.iter().filter(|r| !r.passed).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let _ = writeln!(s, "{:<24} {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
        }
        s
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.results.push(CheckResult { name, passed, detail });
    }
}

/// `|dual − fd| ≤ max(1e-3·|fd|, 0.01)` in $/MWh.
pub fn fd_agrees(dual: f64, fd: f64) -> bool {
    (dual - fd).abs() <= (1e-3 * fd.abs()).max(0.01)
}

/// Evenly spaced node indices, `count` of them (all nodes if `count` is
/// larger than the network).
pub fn sample_nodes(network: &Network, count: usize) -> Vec<usize> {
    let n = network.node_count();
    if count >= n {
        return (0..n).collect();
    }
    (0..count).map(|k| k * n / count).collect()
}

/// Checks the invariants that hold per record.
pub fn check_records(network: &Network, records: &[IntervalRecord]) -> CheckReport {
    let mut rep = CheckReport::default();

    let worst = records.iter().map(|r| r.budget_imbalance.abs()).fold(0.0, f64::max);
    rep.push("budget_balance", worst <= BUDGET_TOL, format!("max |auctioneer net| {worst:.3e} $"));

    let mut min_payoff = 0.0_f64;
    for o in records.iter().filter_map(|r| r.outcome.as_ref()) {
        let p = payoffs(o);
        for v in p.seller.values().chain(p.buyer.values()) {
            min_payoff = min_payoff.min(*v);
        }
    }
    rep.push("individual_rationality", min_payoff >= -1e-9, format!("min agent surplus {min_payoff:.3e}"));

    let mut cap_violations = 0;
    for r in records {
        let Some(o) = &r.outcome else { continue };
        for ord in o.orders.iter().filter(|o| o.side == Side::Bid) {
            let cap = network.index_of(ord.node).map_or(f64::NEG_INFINITY, |i| r.signal_dlmp[i]);
            if !(ord.price >= 0.0 && ord.price <= cap + 1e-9) {
                cap_violations += 1;
            }
        }
    }
    rep.push("bid_cap", cap_violations == 0, format!("{cap_violations} bids outside [0, DLMP]"));

    let gap = records.iter().map(|r| r.cone_gap).fold(0.0, f64::max);
    rep.push("exactness", gap <= EXACTNESS_TOL, format!("max cone gap {gap:.3e}"));

    let bal = records.iter().map(|r| r.balance_residual.abs()).fold(0.0, f64::max);
    rep.push("energy_balance", bal <= BALANCE_TOL, format!("max residual {bal:.3e} pu"));

    let mut worst_sum = 0.0_f64;
    let mut ri_ok = true;
    for r in records {
        worst_sum = worst_sum.max((r.served + r.shed - r.total_load).abs());
        ri_ok &= (0.0..=100.0).contains(&r.ri);
    }
    rep.push(
        "served_plus_shed",
        worst_sum <= 1e-6 && ri_ok,
        format!("max |served + shed - total| {worst_sum:.3e} kW, RI in [0, 100]: {ri_ok}"),
    );
    rep
}

/// Compares dual prices against the finite-difference oracle on `nodes` for
/// the first grid-connected and first islanded interval.
pub fn check_fd_oracle(
    network: &Network,
    profiles: &Profiles,
    config: &ScenarioConfig,
    records: &[IntervalRecord],
    nodes: &[usize],
) -> Result<CheckResult, SimError> {
    let mut intervals = Vec::new();
    for mode in [Mode::GridConnected, Mode::Islanded] {
        if let Some(r) = records.iter().find(|r| r.mode == mode) {
            intervals.push(r.interval);
        }
    }
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    let mut count = 0;
    for &t in &intervals {
        let pb = signal_problem(network, profiles, config, t)?;
        let wrap = |source| SimError::Dispatch { interval: t, source };
        let dual = extract_dlmp(&dispatch(&pb).map_err(wrap)?).map_err(wrap)?;
        for &i in nodes {
            let fd = dlmp_fd_oracle(&pb, i, FD_STEP_KW).map_err(wrap)?;
            count += 1;
            worst = worst.max((dual[i] - fd).abs());
            if !fd_agrees(dual[i], fd) {
                failures.push(format!("t={t} node {}: dual {:.4} fd {:.4}", network.nodes[i].id, dual[i], fd));
            }
        }
    }
    let mut detail = format!("{count} node-intervals, max |dual - fd| {worst:.3e} $/MWh");
    if !failures.is_empty() {
        detail = format!("{detail}; {}", failures.join("; "));
    }
    Ok(CheckResult { name: "fd_dual_oracle", passed: failures.is_empty(), detail })
}

/// Runs the full battery: record invariants, the price oracle on
/// `fd_sample` nodes and, when the market is on, RI monotonicity against a
/// run without it.
pub fn run_checks(
    network: &Network,
    profiles: &Profiles,
    config: &ScenarioConfig,
    records: &[IntervalRecord],
    fd_sample: usize,
) -> Result<CheckReport, SimError> {
    let mut rep = check_records(network, records);
    if fd_sample > 0 {
        let nodes = sample_nodes(network, fd_sample);
        rep.results.push(check_fd_oracle(network, profiles, config, records, &nodes)?);
    }
    if config.p2p {
        let mut off = config.clone();
        off.p2p = false;
        let without = run_simulation(network, profiles, &off)?;
        let cmp = compare_runs(records, &without)?;
        let detail = if cmp.holds() {
            format!("RI with market >= without over {} intervals", cmp.rows.len())
        } else {
            format!("violated at intervals {:?}", cmp.violations)
        };
        rep.push("ri_monotonicity", cmp.holds(), detail);
    }
    Ok(rep)
}
