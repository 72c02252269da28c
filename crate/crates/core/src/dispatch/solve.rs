use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus};

use super::model::{ConeKind, OpfModel};
use super::problem::{Formulation, UnitKind};
use super::DispatchError;

/// Interior-point settings. Feasibility and gap are far tighter than the
/// 1e-6 p.u. balance requirement so that cone slacks stay well inside the
/// exactness bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol_feas: f64,
    pub tol_gap_rel: f64,
    pub tol_gap_abs: f64,
    pub max_iter: u32,
    /// Static regularization added to the KKT system.
    pub static_regularization: f64,
    pub max_step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-10,
            tol_gap_rel: 1e-11,
            tol_gap_abs: 1e-11,
            max_iter: 200,
            static_regularization: 1e-9,
            max_step_fraction: 0.99,
        }
    }
}

impl SolverSettings {
    /// Settings tried in order by [`solve`] until one reaches full accuracy.
    /// The last rung relaxes primal feasibility to 1e-8 and the gap to 1e-10,
    /// still two orders below the balance tolerance the simulator checks.
    pub fn ladder() -> [SolverSettings; 4] {
        let d = SolverSettings::default();
        [
            d,
            SolverSettings { static_regularization: 1e-10, max_step_fraction: 0.995, ..d },
            SolverSettings { static_regularization: 1e-8, ..d },
            SolverSettings { tol_feas: 1e-8, tol_gap_rel: 1e-10, tol_gap_abs: 1e-10, ..d },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Converged only to the solver's relaxed tolerances.
    ReducedAccuracy,
}

/// Primal dispatch and dual prices for one interval.
///
/// Node- and line-indexed vectors follow the network's node and line order.
/// Powers are kW / kvar, voltages and currents are squared per-unit values.
#[derive(Debug, Clone)]
pub struct DispatchResult {
    pub status: SolveStatus,
    pub formulation: Formulation,
    /// $/h
    pub objective: f64,
    pub base_kw: f64,
    pub unit_kinds: Vec<UnitKind>,
    pub unit_nodes: Vec<usize>,
    pub unit_p: Vec<f64>,
    pub unit_q: Vec<f64>,
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub shed_p: Vec<f64>,
    pub shed_q: Vec<f64>,
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
    pub fixed_injection: Vec<f64>,
    pub v: Vec<f64>,
    pub flow_p: Vec<f64>,
    pub flow_q: Vec<f64>,
    pub current_sq: Vec<f64>,
    pub lines_out: Vec<bool>,
    pub line_from: Vec<usize>,
    /// Dual of each node's active balance, $/MWh (the DLMP).
    pub lambda_p: Vec<f64>,
    /// Dual of each node's reactive balance, $/Mvarh.
    pub mu_q: Vec<f64>,
    /// Largest `|s_i z_i|` over inequality rows and `sᵀz` over cones.
    pub complementarity: f64,
    pub iterations: u32,
    /// Raw primal vector in model column order.
    pub primal: Vec<f64>,
    /// Raw dual vector, one entry per model row.
    pub duals: Vec<f64>,
    pub slacks: Vec<f64>,
}

impl DispatchResult {
    /// Active losses, kW: `Σ r_k ℓ_k` in the conic model, zero in the LP.
    pub fn losses(&self, network: &crate::netmodel::Network) -> f64 {
        network.lines.iter().zip(&self.current_sq).map(|(l, c)| l.r * c).sum::<f64>() * self.base_kw
    }

    pub fn total_shed(&self) -> f64 {
        self.shed_p.iter().sum()
    }

    pub fn total_load(&self) -> f64 {
        self.load_p.iter().sum()
    }

    /// Output of all units of a kind, kW.
    pub fn output_of(&self, pred: impl Fn(UnitKind) -> bool) -> f64 {
        self.unit_kinds.iter().zip(&self.unit_p).filter(|(k, _)| pred(**k)).map(|(_, p)| p).sum()
    }
}

/// Runs the interior-point solver on `model` and maps primal and dual
/// solutions back to network quantities. If the default settings stop short
/// of full accuracy the remaining [`SolverSettings::ladder`] entries are
/// tried; the last reduced-accuracy result is returned if none succeeds.
pub fn solve(model: &OpfModel) -> Result<DispatchResult, DispatchError> {
    let mut fallback = None;
    for settings in SolverSettings::ladder() {
        match solve_with(model, settings) {
            Ok(r) if r.status == SolveStatus::Optimal => return Ok(r),
            Ok(r) => fallback = Some(Ok(r)),
            Err(e @ DispatchError::Infeasible { .. }) => return Err(e),
            Err(e) => {
                if fallback.is_none() {
                    fallback = Some(Err(e));
                }
            }
        }
    }
    fallback.expect("ladder is non-empty")
}

pub fn solve_with(model: &OpfModel, settings: SolverSettings) -> Result<DispatchResult, DispatchError> {
    let n = model.vars.len();
    let p = CscMatrix::<f64>::zeros((n, n));
    let cl_settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_feas(settings.tol_feas)
        .tol_gap_rel(settings.tol_gap_rel)
        .tol_gap_abs(settings.tol_gap_abs)
        .presolve_enable(false)
        .static_regularization_constant(settings.static_regularization)
        .max_step_fraction(settings.max_step_fraction)
        .build()
        .expect("static solver settings are valid");
    let mut solver = DefaultSolver::new(&p, &model.q, &model.a, &model.b, &model.cones, cl_settings)
        .map_err(|e| DispatchError::Numerical(format!("solver setup failed: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::ReducedAccuracy,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(DispatchError::Infeasible { constraints: certificate_rows(model, &sol.z) });
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Err(DispatchError::Numerical("problem is unbounded (dual infeasible)".into()));
        }
        SolverStatus::MaxIterations => {
            return Err(DispatchError::IterationLimit { iterations: sol.iterations });
        }
        other => return Err(DispatchError::Numerical(format!("solver stopped with status {other:?}"))),
    };

    let x = &sol.x;
    let z = &sol.z;
    let s = &sol.s;
    let v = &model.vars;
    let base_kw = model.base_mva * 1000.0;
    let nn = v.n_nodes;
    let nl = v.n_lines;

    let unit_p: Vec<f64> = (0..v.n_units).map(|u| x[v.pg(u)] * base_kw).collect();
    let unit_q: Vec<f64> = (0..v.n_units).map(|u| x[v.qg(u)] * base_kw).collect();
    let mut gen_p = vec![0.0; nn];
    let mut gen_q = vec![0.0; nn];
    for (u, &node) in model.unit_nodes.iter().enumerate() {
        gen_p[node] += unit_p[u];
        gen_q[node] += unit_q[u];
    }
    let current_sq = if v.has_current { (0..nl).map(|k| x[v.l(k)]).collect() } else { vec![0.0; nl] };

    // Sensitivity of the optimum to the right-hand side is -z; the balance
    // rows carry load, so -z over the MVA base is the price in $/MWh.
    let lambda_p = model.p_balance_row.iter().map(|&r| -z[r] / model.base_mva).collect();
    let mu_q = model.q_balance_row.iter().map(|&r| -z[r] / model.base_mva).collect();

    let mut complementarity: f64 = 0.0;
    let mut row = 0;
    for (cone, kind) in model.cones.iter().zip(&model.cone_kinds) {
        let dim = cone_dim(cone);
        match kind {
            ConeKind::Equality => {}
            ConeKind::Inequality => {
                for r in row..row + dim {
                    complementarity = complementarity.max((s[r] * z[r]).abs());
                }
            }
            ConeKind::Relaxation | ConeKind::FlowLimit => {
                let dot: f64 = (row..row + dim).map(|r| s[r] * z[r]).sum();
                complementarity = complementarity.max(dot.abs());
            }
        }
        row += dim;
    }

    Ok(DispatchResult {
        status,
        formulation: model.formulation,
        objective: sol.obj_val,
        base_kw,
        unit_kinds: model.unit_kinds.clone(),
        unit_nodes: model.unit_nodes.clone(),
        unit_p,
        unit_q,
        gen_p,
        gen_q,
        shed_p: (0..nn).map(|i| x[v.ps(i)] * base_kw).collect(),
        shed_q: (0..nn).map(|i| x[v.qs(i)] * base_kw).collect(),
        load_p: model.load_p.clone(),
        load_q: model.load_q.clone(),
        fixed_injection: model.fixed_injection.clone(),
        v: (0..nn).map(|i| x[v.v(i)]).collect(),
        flow_p: (0..nl).map(|k| x[v.p(k)] * base_kw).collect(),
        flow_q: (0..nl).map(|k| x[v.q(k)] * base_kw).collect(),
        current_sq,
        lines_out: model.lines_out.clone(),
        line_from: model.line_from.clone(),
        lambda_p,
        mu_q,
        complementarity,
        iterations: sol.iterations,
        primal: x.clone(),
        duals: z.clone(),
        slacks: s.clone(),
    })
}

fn cone_dim(c: &clarabel::solver::SupportedConeT<f64>) -> usize {
    use clarabel::solver::SupportedConeT::*;
    match c {
        ZeroConeT(d) | NonnegativeConeT(d) | SecondOrderConeT(d) => *d,
        _ => unreachable!("only zero, nonnegative and second-order cones are built"),
    }
}

/// Rows carrying weight in a primal infeasibility certificate: an
/// approximation of the irreducible conflicting set.
fn certificate_rows(model: &OpfModel, z: &[f64]) -> Vec<String> {
    let zmax = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(zmax > 0.0) {
        return Vec::new();
    }
    z.iter()
        .enumerate()
        .filter(|(r, v)| v.abs() > 1e-6 * zmax && (model.b[*r] != 0.0 || model.row_names[*r].starts_with("balance")))
        .map(|(r, _)| model.row_names[r].clone())
        .collect()
}
