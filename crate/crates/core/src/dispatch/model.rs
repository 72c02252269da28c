//! Assembly of the branch-flow OPF in conic standard form
//! `min qᵀx  s.t.  Ax + s = b,  s ∈ K`.
//!
//! Per line `k = (i → j)` the variables are the sending-end flows `P_k`, `Q_k`
//! and squared current `ℓ_k`; per node the squared voltage `v_i` and the
//! active/reactive shedding; per unit its active/reactive output. Everything
//! is per unit on the network base; the objective is in $/h.

use clarabel::algebra::CscMatrix;
use clarabel::solver::SupportedConeT;

use super::problem::{DispatchProblem, Formulation, UnitKind};
use super::DispatchError;

/// Column layout of the decision vector.
#[derive(Debug, Clone)]
pub struct VarIndex {
    pub n_lines: usize,
    pub n_nodes: usize,
    pub n_units: usize,
    /// Whether `ℓ` columns exist (absent in the LP formulation).
    pub has_current: bool,
}

impl VarIndex {
    pub fn p(&self, k: usize) -> usize {
        k
    }
    pub fn q(&self, k: usize) -> usize {
        self.n_lines + k
    }
    pub fn l(&self, k: usize) -> usize {
        debug_assert!(self.has_current);
        2 * self.n_lines + k
    }
    fn line_block(&self) -> usize {
        if self.has_current {
            3 * self.n_lines
        } else {
            2 * self.n_lines
        }
    }
    pub fn v(&self, i: usize) -> usize {
        self.line_block() + i
    }
    pub fn ps(&self, i: usize) -> usize {
        self.line_block() + self.n_nodes + i
    }
    pub fn qs(&self, i: usize) -> usize {
        self.line_block() + 2 * self.n_nodes + i
    }
    pub fn pg(&self, u: usize) -> usize {
        self.line_block() + 3 * self.n_nodes + u
    }
    pub fn qg(&self, u: usize) -> usize {
        self.line_block() + 3 * self.n_nodes + self.n_units + u
    }
    pub fn len(&self) -> usize {
        self.line_block() + 3 * self.n_nodes + 2 * self.n_units
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Equality,
    Inequality,
    /// Rotated cone `P² + Q² ≤ ℓ·v_i` written as a 4-dimensional Lorentz cone.
    Relaxation,
    /// Apparent power limit `P² + Q² ≤ S²`.
    FlowLimit,
}

/// Width below which a bound pair is treated as fixed, per unit.
pub const NARROW_BOUND: f64 = 1e-9;

/// A conic program ready for the interior-point solver, with labels for
/// every column and row so duals can be mapped back and dumped.
#[derive(Debug, Clone)]
pub struct OpfModel {
    pub formulation: Formulation,
    pub vars: VarIndex,
    pub var_names: Vec<String>,
    pub q: Vec<f64>,
    pub a: CscMatrix<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<SupportedConeT<f64>>,
    /// Cone kind for each entry of `cones`.
    pub cone_kinds: Vec<ConeKind>,
    pub row_names: Vec<String>,
    /// Row of node `i`'s active-power balance.
    pub p_balance_row: Vec<usize>,
    /// Row of node `i`'s reactive-power balance.
    pub q_balance_row: Vec<usize>,
    /// First row of the relaxation cone of line `k` (in-service lines only).
    pub relaxation_row: Vec<Option<usize>>,
    pub base_mva: f64,
    pub unit_nodes: Vec<usize>,
    pub unit_kinds: Vec<UnitKind>,
    /// Sending-end node index of each line.
    pub line_from: Vec<usize>,
    pub lines_out: Vec<bool>,
    /// Demand the model was built for, kW / kvar per node.
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
    pub fixed_injection: Vec<f64>,
}

impl OpfModel {
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    /// Number of cones of a given kind.
    pub fn cone_count(&self, kind: ConeKind) -> usize {
        self.cone_kinds.iter().filter(|k| **k == kind).count()
    }
}

/// Incremental row builder; rows must be pushed grouped by cone.
struct Rows {
    trip_i: Vec<usize>,
    trip_j: Vec<usize>,
    trip_v: Vec<f64>,
    b: Vec<f64>,
    names: Vec<String>,
}

impl Rows {
    fn push(&mut self, name: String, coefs: &[(usize, f64)], rhs: f64) -> usize {
        let r = self.b.len();
        for &(j, v) in coefs {
            if v != 0.0 {
                self.trip_i.push(r);
                self.trip_j.push(j);
                self.trip_v.push(v);
            }
        }
        self.b.push(rhs);
        self.names.push(name);
        r
    }
}

/// Builds the relaxed branch-flow model (or its linearized LP fallback).
pub fn build_opf(problem: &DispatchProblem<'_>) -> Result<OpfModel, DispatchError> {
    problem.validate()?;
    let net = problem.network;
    let base = net.base_kw();
    let n = net.node_count();
    let nl = net.lines.len();
    let nu = problem.units.len();
    let socp = problem.formulation == Formulation::Socp;
    let vars = VarIndex { n_lines: nl, n_nodes: n, n_units: nu, has_current: socp };
    let mut out_of_service = vec![false; nl];
    for &k in &problem.lines_out {
        out_of_service[k] = true;
    }
    // An idle line has nothing below it, so its current is pinned at zero
    // and its relaxation cone is dropped; flows stay free so the nodal
    // balance below it keeps a well-defined dual.
    let capacity = downstream_capacity(problem);
    let idle: Vec<bool> = capacity.iter().map(|&c| c == 0.0).collect();

    let mut var_names = vec![String::new(); vars.len()];
    for (k, l) in net.lines.iter().enumerate() {
        let lab = l.label();
        var_names[vars.p(k)] = format!("P[{lab}]");
        var_names[vars.q(k)] = format!("Q[{lab}]");
        if socp {
            var_names[vars.l(k)] = format!("l[{lab}]");
        }
    }
    for (i, node) in net.nodes.iter().enumerate() {
        var_names[vars.v(i)] = format!("v[{}]", node.id);
        var_names[vars.ps(i)] = format!("shed_p[{}]", node.id);
        var_names[vars.qs(i)] = format!("shed_q[{}]", node.id);
    }
    for (u, unit) in problem.units.iter().enumerate() {
        let tag = match unit.kind {
            UnitKind::GridImport => "grid".to_string(),
            UnitKind::GridExport => "export".to_string(),
            UnitKind::UtilityDg => "dg".to_string(),
            UnitKind::ProsumerOffer(a) => format!("offer{a}"),
        };
        var_names[vars.pg(u)] = format!("pg[{tag}@{}]", net.nodes[unit.node].id);
        var_names[vars.qg(u)] = format!("qg[{tag}@{}]", net.nodes[unit.node].id);
    }

    // Objective, $/h with powers in per unit.
    let mut q = vec![0.0; vars.len()];
    for (u, unit) in problem.units.iter().enumerate() {
        q[vars.pg(u)] = unit.cost * net.base_mva;
    }
    for i in 0..n {
        q[vars.ps(i)] = problem.voll * net.base_mva;
    }

    let mut rows =
        Rows { trip_i: Vec::new(), trip_j: Vec::new(), trip_v: Vec::new(), b: Vec::new(), names: Vec::new() };
    let mut cones = Vec::new();
    let mut cone_kinds = Vec::new();

    // --- equalities -------------------------------------------------------
    let eq_start = rows.b.len();
    let mut p_balance_row = vec![0; n];
    let mut q_balance_row = vec![0; n];
    for i in 0..n {
        let id = net.nodes[i].id;
        let mut pc: Vec<(usize, f64)> = Vec::new();
        let mut qc: Vec<(usize, f64)> = Vec::new();
        for (u, unit) in problem.units.iter().enumerate() {
            if unit.node == i {
                pc.push((vars.pg(u), 1.0));
                qc.push((vars.qg(u), 1.0));
            }
        }
        pc.push((vars.ps(i), 1.0));
        qc.push((vars.qs(i), 1.0));
        for &c in net.children(i) {
            let k = net.upstream_line(c).expect("child has an upstream line");
            pc.push((vars.p(k), -1.0));
            qc.push((vars.q(k), -1.0));
        }
        if let Some(k) = net.upstream_line(i) {
            let line = &net.lines[k];
            pc.push((vars.p(k), 1.0));
            qc.push((vars.q(k), 1.0));
            if socp {
                pc.push((vars.l(k), -line.r));
                qc.push((vars.l(k), -line.x));
            }
        }
        let (lp, lq) = (problem.load_p[i], problem.load_q[i]);
        p_balance_row[i] = rows.push(format!("balance_p[{id}]"), &pc, (lp - problem.fixed_injection[i]) / base);
        q_balance_row[i] = rows.push(format!("balance_q[{id}]"), &qc, lq / base);
    }
    for (k, line) in net.lines.iter().enumerate() {
        let lab = line.label();
        let i = net.index_of(line.from).expect("validated");
        let j = net.index_of(line.to).expect("validated");
        if out_of_service[k] {
            rows.push(format!("out_p[{lab}]"), &[(vars.p(k), 1.0)], 0.0);
            rows.push(format!("out_q[{lab}]"), &[(vars.q(k), 1.0)], 0.0);
            if socp {
                rows.push(format!("out_l[{lab}]"), &[(vars.l(k), 1.0)], 0.0);
            }
            continue;
        }
        let mut c = vec![(vars.v(j), 1.0), (vars.v(i), -1.0), (vars.p(k), 2.0 * line.r), (vars.q(k), 2.0 * line.x)];
        if socp {
            c.push((vars.l(k), -(line.r * line.r + line.x * line.x)));
        }
        rows.push(format!("vdrop[{lab}]"), &c, 0.0);
        if socp && idle[k] {
            rows.push(format!("idle_l[{lab}]"), &[(vars.l(k), 1.0)], 0.0);
        }
    }
    let root = net.root_index();
    rows.push(format!("v_root[{}]", net.nodes[root].id), &[(vars.v(root), 1.0)], problem.v_root);

    // Simple bounds. A bound pair with no interior (or one narrower than
    // NARROW_BOUND) becomes an equality row at its lower end: the
    // interior-point method loses accuracy on empty-interior inequalities.
    let mut bounds: Vec<(String, usize, f64, f64)> = Vec::new();
    for i in 0..n {
        if i == root {
            continue;
        }
        let (lo, hi) = problem.v_bounds[i];
        bounds.push((format!("v[{}]", net.nodes[i].id), vars.v(i), lo * lo, hi * hi));
    }
    for (u, unit) in problem.units.iter().enumerate() {
        bounds.push((var_names[vars.pg(u)].clone(), vars.pg(u), unit.p_min / base, unit.p_max / base));
        bounds.push((var_names[vars.qg(u)].clone(), vars.qg(u), unit.q_min / base, unit.q_max / base));
    }
    let mut sheddable = vec![0.0; n];
    for i in 0..n {
        let id = net.nodes[i].id;
        sheddable[i] = (problem.load_p[i] - problem.firm_load[i]).max(0.0) / base;
        if sheddable[i] <= NARROW_BOUND {
            sheddable[i] = 0.0;
        }
        bounds.push((format!("shed_p[{id}]"), vars.ps(i), 0.0, sheddable[i]));
        if sheddable[i] == 0.0 {
            bounds.push((format!("shed_q[{id}]"), vars.qs(i), 0.0, 0.0));
        }
    }
    let fixed = |lo: f64, hi: f64| hi - lo <= NARROW_BOUND;
    for (name, col, lo, hi) in &bounds {
        if fixed(*lo, *hi) {
            rows.push(format!("{name}=fixed"), &[(*col, 1.0)], *lo);
        }
    }
    let eq_rows = rows.b.len() - eq_start;
    cones.push(SupportedConeT::ZeroConeT(eq_rows));
    cone_kinds.push(ConeKind::Equality);

    // --- inequalities (Ax <= b) ------------------------------------------
    let ineq_start = rows.b.len();
    for (name, col, lo, hi) in &bounds {
        if !fixed(*lo, *hi) {
            rows.push(format!("{name}<=max"), &[(*col, 1.0)], *hi);
            rows.push(format!("{name}>=min"), &[(*col, -1.0)], -*lo);
        }
    }
    for (k, line) in net.lines.iter().enumerate() {
        if out_of_service[k] {
            continue;
        }
        let lab = line.label();
        if socp {
            rows.push(format!("i_max[{lab}]"), &[(vars.l(k), 1.0)], line.current_limit);
        } else {
            let s = line.flow_limit / base;
            rows.push(format!("p_max[{lab}]"), &[(vars.p(k), 1.0)], s);
            rows.push(format!("p_min[{lab}]"), &[(vars.p(k), -1.0)], s);
            rows.push(format!("q_max[{lab}]"), &[(vars.q(k), 1.0)], s);
            rows.push(format!("q_min[{lab}]"), &[(vars.q(k), -1.0)], s);
        }
    }
    for i in 0..n {
        if sheddable[i] == 0.0 {
            continue;
        }
        let id = net.nodes[i].id;
        // Reactive shedding is free but capped at the node's power-factor share.
        let ratio = net.nodes[i].q_ratio().max(0.0);
        rows.push(format!("shed_q<=pf[{id}]"), &[(vars.qs(i), 1.0), (vars.ps(i), -ratio)], 0.0);
        rows.push(format!("shed_q>=0[{id}]"), &[(vars.qs(i), -1.0)], 0.0);
    }
    cones.push(SupportedConeT::NonnegativeConeT(rows.b.len() - ineq_start));
    cone_kinds.push(ConeKind::Inequality);

    // --- second-order cones ----------------------------------------------
    let mut relaxation_row = vec![None; nl];
    let cone_scale = relaxation_scaling(&capacity);
    if socp {
        for (k, line) in net.lines.iter().enumerate() {
            if out_of_service[k] || idle[k] {
                continue;
            }
            let lab = line.label();
            let i = net.index_of(line.from).expect("validated");
            // s = (σℓ + v_i, 2√σ P, 2√σ Q, σℓ - v_i) with s = -A x. Any σ > 0
            // gives the same set; σ ≈ v/ℓ keeps both ends of the cone the same size.
            let sg = cone_scale[k];
            let rs = sg.sqrt();
            let r0 = rows.push(format!("soc0[{lab}]"), &[(vars.l(k), -sg), (vars.v(i), -1.0)], 0.0);
            rows.push(format!("soc1[{lab}]"), &[(vars.p(k), -2.0 * rs)], 0.0);
            rows.push(format!("soc2[{lab}]"), &[(vars.q(k), -2.0 * rs)], 0.0);
            rows.push(format!("soc3[{lab}]"), &[(vars.l(k), -sg), (vars.v(i), 1.0)], 0.0);
            relaxation_row[k] = Some(r0);
            cones.push(SupportedConeT::SecondOrderConeT(4));
            cone_kinds.push(ConeKind::Relaxation);
        }
        for (k, line) in net.lines.iter().enumerate() {
            if out_of_service[k] {
                continue;
            }
            let lab = line.label();
            rows.push(format!("smax0[{lab}]"), &[], line.flow_limit / base);
            rows.push(format!("smax1[{lab}]"), &[(vars.p(k), -1.0)], 0.0);
            rows.push(format!("smax2[{lab}]"), &[(vars.q(k), -1.0)], 0.0);
            cones.push(SupportedConeT::SecondOrderConeT(3));
            cone_kinds.push(ConeKind::FlowLimit);
        }
    }

    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, vars.len(), rows.trip_i, rows.trip_j, rows.trip_v);
    Ok(OpfModel {
        formulation: problem.formulation,
        vars,
        var_names,
        q,
        a,
        b: rows.b,
        cones,
        cone_kinds,
        row_names: rows.names,
        p_balance_row,
        q_balance_row,
        relaxation_row,
        base_mva: net.base_mva,
        unit_nodes: problem.units.iter().map(|u| u.node).collect(),
        unit_kinds: problem.units.iter().map(|u| u.kind).collect(),
        line_from: net.lines.iter().map(|l| net.index_of(l.from).expect("validated")).collect(),
        lines_out: out_of_service,
        load_p: problem.load_p.clone(),
        load_q: problem.load_q.clone(),
        fixed_injection: problem.fixed_injection.clone(),
    })
}

/// Squared apparent power, per unit, that could flow on each line: the load,
/// fixed injection and unit capacity in the subtree below it. Zero marks an
/// idle line, which carries no current at any optimum.
fn downstream_capacity(problem: &DispatchProblem<'_>) -> Vec<f64> {
    let net = problem.network;
    let base = net.base_kw();
    let mut down_p: Vec<f64> =
        (0..net.node_count()).map(|i| problem.load_p[i] + problem.fixed_injection[i].abs()).collect();
    let mut down_q: Vec<f64> = problem.load_q.iter().map(|q| q.abs()).collect();
    for u in &problem.units {
        if u.node != net.root_index() {
            down_p[u.node] += u.p_max.abs().max(u.p_min.abs());
            down_q[u.node] += u.q_max.abs().max(u.q_min.abs());
        }
    }
    for &i in net.bfs_order().iter().rev() {
        if let Some(parent) = net.parent_index(i) {
            down_p[parent] += down_p[i];
            down_q[parent] += down_q[i];
        }
    }
    net.lines
        .iter()
        .map(|line| {
            let j = net.index_of(line.to).expect("validated");
            (down_p[j] * down_p[j] + down_q[j] * down_q[j]) / (base * base)
        })
        .collect()
}

/// Per-line scale σ for the relaxation cone: the inverse of
/// [`downstream_capacity`], clamped to `[1, 1e5]`.
fn relaxation_scaling(capacity: &[f64]) -> Vec<f64> {
    capacity.iter().map(|s2| (1.0 / s2.max(1e-5)).clamp(1.0, 1e5)).collect()
}
