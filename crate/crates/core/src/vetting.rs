//! Screening of cleared trades against voltage and line limits using linear
//! sensitivities of the lossless branch-flow model around an operating point.
//!
//! An injection of `δ` kW at node `j` lowers the active flow on every line
//! between the root and `j` by `δ` and raises the squared voltage of node
//! `i` by `2·R(i, j)·δ`, where `R(i, j)` is the resistance of the path the two
//! nodes share back to the root.

use crate::dispatch::DispatchResult;
use crate::market::{Match, VettingStatus};
use crate::netmodel::Network;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VettingError {
    #[error("sensitivities were computed for interval {set}, match belongs to interval {trade}")]
    StaleSensitivities { set: usize, trade: usize },
    #[error("match references node {0} not in the network")]
    UnknownNode(u32),
    #[error("dispatch result does not belong to this network")]
    Mismatch,
}

/// Linearized sensitivities around one interval's dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySet {
    pub interval: usize,
    /// Squared voltage at the base point, per node index.
    pub v_base: Vec<f64>,
    /// Sending-end active / reactive flow at the base point, kW / kvar.
    pub p_base: Vec<f64>,
    pub q_base: Vec<f64>,
    /// `∂v_i/∂p_j`, squared per-unit voltage per kW, indexed `[i][j]`.
    pub dv_dp: Vec<Vec<f64>>,
    /// `∂P_k/∂p_j`, kW per kW, indexed `[k][j]`.
    pub dflow_dp: Vec<Vec<f64>>,
    pub lines_out: Vec<bool>,
}

/// Builds the sensitivity matrices for `result`, the dispatch of `interval`.
pub fn compute_sensitivities(
    network: &Network,
    result: &DispatchResult,
    interval: usize,
) -> Result<SensitivitySet, VettingError> {
    let n = network.node_count();
    let nl = network.lines.len();
    if result.v.len() != n || result.flow_p.len() != nl {
        return Err(VettingError::Mismatch);
    }
    let base = network.base_kw();
    // Path resistance from the root to each node.
    let mut path_r = vec![0.0; n];
    for &i in network.bfs_order() {
        if let (Some(p), Some(k)) = (network.parent_index(i), network.upstream_line(i)) {
            path_r[i] = path_r[p] + network.lines[k].r;
        }
    }
    let mut dv_dp = vec![vec![0.0; n]; n];
    let mut on_path = vec![false; n];
    let mut shared = vec![0.0; n];
    for j in 0..n {
        on_path.iter_mut().for_each(|f| *f = false);
        let mut x = Some(j);
        while let Some(i) = x {
            on_path[i] = true;
            x = network.parent_index(i);
        }
        // Resistance shared with j's path: the path resistance of the lowest
        // common ancestor, propagated down the tree.
        for &i in network.bfs_order() {
            shared[i] = if on_path[i] { path_r[i] } else { network.parent_index(i).map_or(0.0, |p| shared[p]) };
        }
        for i in 0..n {
            dv_dp[i][j] = 2.0 * shared[i] / base;
        }
    }
    let mut dflow_dp = vec![vec![0.0; n]; nl];
    for j in 0..n {
        for k in network.path_lines(j) {
            dflow_dp[k][j] = -1.0;
        }
    }
    Ok(SensitivitySet {
        interval,
        v_base: result.v.clone(),
        p_base: result.flow_p.clone(),
        q_base: result.flow_q.clone(),
        dv_dp,
        dflow_dp,
        lines_out: result.lines_out.clone(),
    })
}

/// Outcome of screening one match.
#[derive(Debug, Clone, PartialEq)]
pub struct VettingDecision {
    pub status: VettingStatus,
    /// The tightest constraint after the trade, e.g. `v_min[18]` or `flow[5-6]`.
    pub binding: String,
    /// Remaining headroom on `binding` as a fraction of its limit; negative
    /// when the limit (less the margin) is violated.
    pub headroom: f64,
}

/// Predicted operating point while a ledger is vetted.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedState {
    /// Net P2P injection per node index, kW.
    pub injection: Vec<f64>,
}

impl PredictedState {
    pub fn new(network: &Network) -> Self {
        Self { injection: vec![0.0; network.node_count()] }
    }
}

struct Check {
    name: String,
    reason: String,
    /// Normalized slack: positive inside the limit.
    slack: f64,
}

fn evaluate(network: &Network, sens: &SensitivitySet, inj: &[f64], margin: f64) -> Vec<Check> {
    let n = network.node_count();
    let base = network.base_kw();
    let mut checks = Vec::new();
    for i in 0..n {
        if i == network.root_index() {
            continue;
        }
        let node = &network.nodes[i];
        let v = sens.v_base[i] + (0..n).map(|j| sens.dv_dp[i][j] * inj[j]).sum::<f64>();
        let lo = node.v_min * node.v_min * (1.0 + margin);
        let hi = node.v_max * node.v_max * (1.0 - margin);
        checks.push(Check {
            name: format!("v_min[{}]", node.id),
            reason: format!("undervoltage at node {}", node.id),
            slack: (v - lo) / lo,
        });
        checks.push(Check {
            name: format!("v_max[{}]", node.id),
            reason: format!("overvoltage at node {}", node.id),
            slack: (hi - v) / hi,
        });
    }
    for (k, line) in network.lines.iter().enumerate() {
        if sens.lines_out[k] {
            continue;
        }
        let p = sens.p_base[k] + (0..n).map(|j| sens.dflow_dp[k][j] * inj[j]).sum::<f64>();
        let q = sens.q_base[k];
        let s = (p * p + q * q).sqrt();
        let s_lim = line.flow_limit * (1.0 - margin);
        let from = network.index_of(line.from).expect("validated");
        let v_from = sens.v_base[from] + (0..n).map(|j| sens.dv_dp[from][j] * inj[j]).sum::<f64>();
        let l = (s / base).powi(2) / v_from;
        let l_lim = line.current_limit * (1.0 - margin);
        let reason = format!("line overload: {}", line.label());
        checks.push(Check {
            name: format!("flow[{}]", line.label()),
            reason: reason.clone(),
            slack: (s_lim - s) / s_lim,
        });
        checks.push(Check { name: format!("current[{}]", line.label()), reason, slack: (l_lim - l) / l_lim });
    }
    checks
}

/// Screens `trade` on top of the injections already in `state`.
///
/// The trade is applied as `+q` at the seller's node and `−q` at the
/// buyer's. It is blocked only if it leaves a limit (tightened by `margin`)
/// violated and makes that constraint worse; a trade that relieves an
/// existing violation is approved. On approval `state` is updated.
pub fn vet_transaction(
    network: &Network,
    trade: &Match,
    sens: &SensitivitySet,
    state: &mut PredictedState,
    margin: f64,
) -> Result<VettingDecision, VettingError> {
    if trade.interval != sens.interval {
        return Err(VettingError::StaleSensitivities { set: sens.interval, trade: trade.interval });
    }
    let s = network.index_of(trade.seller_node).ok_or(VettingError::UnknownNode(trade.seller_node.0))?;
    let b = network.index_of(trade.buyer_node).ok_or(VettingError::UnknownNode(trade.buyer_node.0))?;
    let before = evaluate(network, sens, &state.injection, margin);
    let mut after_inj = state.injection.clone();
    after_inj[s] += trade.quantity;
    after_inj[b] -= trade.quantity;
    let after = evaluate(network, sens, &after_inj, margin);

    let mut blocking: Option<&Check> = None;
    let mut tightest = &after[0];
    for (pre, post) in before.iter().zip(&after) {
        if post.slack < tightest.slack {
            tightest = post;
        }
        let worsened = post.slack < pre.slack - 1e-12;
        if post.slack < 0.0 && worsened && blocking.is_none_or(|c| post.slack < c.slack) {
            blocking = Some(post);
        }
    }
    Ok(match blocking {
        Some(c) => VettingDecision {
            status: VettingStatus::Blocked(c.reason.clone()),
            binding: c.name.clone(),
            headroom: c.slack,
        },
        None => {
            state.injection = after_inj;
            VettingDecision {
                status: VettingStatus::Approved,
                binding: tightest.name.clone(),
                headroom: tightest.slack,
            }
        }
    })
}

/// Vets `matches` one by one in ledger order against the cumulative
/// predicted state, recording each decision in the match's status.
pub fn vet_ledger(
    network: &Network,
    matches: &mut [Match],
    sens: &SensitivitySet,
    margin: f64,
) -> Result<Vec<VettingDecision>, VettingError> {
    let mut state = PredictedState::new(network);
    let mut out = Vec::with_capacity(matches.len());
    for m in matches.iter_mut() {
        let d = vet_transaction(network, m, sens, &mut state, margin)?;
        m.status = d.status.clone();
        out.push(d);
    }
    Ok(out)
}
