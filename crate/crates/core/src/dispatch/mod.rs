//! Branch-flow optimal power flow with load shedding, and nodal prices taken
//! from the duals of the nodal balance constraints.
//!
//! The reference path is the second-order-cone relaxation of the DistFlow
//! equations, solved by a primal-dual interior-point method. A lossless
//! linearized LP sits behind the same interface for cross-checks.

mod dump;
mod model;
mod problem;
mod solve;

pub use dump::write_model_dump;
pub use model::{build_opf, ConeKind, OpfModel, VarIndex};
pub use problem::{DispatchProblem, Formulation, Mode, Unit, UnitKind};
pub use solve::{solve, solve_with, DispatchResult, SolveStatus, SolverSettings};

/// Denominator floor for the relative cone gap, per unit squared. Lines whose
/// `ℓ·v` is below this carry no meaningful current.
pub const EXACTNESS_FLOOR: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum DispatchError {
    #[error("invalid dispatch problem: {}", .0.join("; "))]
    InvalidProblem(Vec<String>),
    #[error("OPF infeasible; conflicting constraints: {}", .constraints.join(", "))]
    Infeasible { constraints: Vec<String> },
    #[error("interior-point solver did not converge within {iterations} iterations")]
    IterationLimit { iterations: u32 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("result is not optimal")]
    NotOptimal,
    #[error("finite-difference step must be non-zero")]
    ZeroStep,
}

/// Builds and solves in one call.
pub fn dispatch(problem: &DispatchProblem<'_>) -> Result<DispatchResult, DispatchError> {
    solve(&build_opf(problem)?)
}

/// Nodal prices in $/MWh: the dual of each node's active-power balance.
pub fn extract_dlmp(result: &DispatchResult) -> Result<Vec<f64>, DispatchError> {
    if result.status != SolveStatus::Optimal {
        return Err(DispatchError::NotOptimal);
    }
    Ok(result.lambda_p.clone())
}

/// Relative gap of each in-service line's relaxation cone,
/// `(ℓ·v − P² − Q²) / max(ℓ·v, EXACTNESS_FLOOR)` in per unit.
pub fn cone_gaps(result: &DispatchResult) -> Vec<Option<f64>> {
    (0..result.flow_p.len())
        .map(|k| {
            if result.lines_out[k] || result.formulation != Formulation::Socp {
                return None;
            }
            let p = result.flow_p[k] / result.base_kw;
            let q = result.flow_q[k] / result.base_kw;
            let lv = result.current_sq[k] * result.v[result.line_from[k]];
            Some((lv - p * p - q * q) / lv.max(EXACTNESS_FLOOR))
        })
        .collect()
}

/// Largest relative cone gap over all lines; zero when the relaxation is exact.
pub fn check_exactness(result: &DispatchResult) -> f64 {
    cone_gaps(result).into_iter().flatten().fold(0.0, f64::max)
}

/// Finite-difference price at `node` (index): the change in optimal cost when
/// its active load grows by `eps_kw`, in $/MWh. Test-only oracle for
/// [`extract_dlmp`].
///
/// The increment is firm. Were it sheddable, a node already shed in full
/// would also gain shedding headroom and the difference would mix the shed
/// bound's multiplier into the balance dual.
pub fn dlmp_fd_oracle(problem: &DispatchProblem<'_>, node: usize, eps_kw: f64) -> Result<f64, DispatchError> {
    if eps_kw == 0.0 || !eps_kw.is_finite() {
        return Err(DispatchError::ZeroStep);
    }
    let base = dispatch(problem)?;
    let mut bumped = problem.clone();
    bumped.load_p[node] += eps_kw;
    bumped.firm_load[node] += eps_kw;
    let up = dispatch(&bumped)?;
    Ok((up.objective - base.objective) / (eps_kw / 1000.0))
}
