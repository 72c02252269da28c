//! Plain-text dump of a model and (optionally) its solution.
//!
//! ```text
//! # opf-dump v1
//! formulation socp
//! variables <n>
//! rows <m>
//! [variables]
//! <index> <name> <cost> <value|->
//! [rows]
//! <index> <name> <cone> <rhs> <slack|-> <dual|->
//! ```
//!
//! The `cone` column is one of `eq`, `ineq`, `soc-relax`, `soc-flow`.
//! Numbers use the shortest exact decimal representation.

use std::fmt::Write as _;

use super::model::{ConeKind, OpfModel};
use super::solve::DispatchResult;
use super::Formulation;

pub fn write_model_dump(model: &OpfModel, solution: Option<&DispatchResult>) -> String {
    let mut out = String::new();
    let form = match model.formulation {
        Formulation::Socp => "socp",
        Formulation::Lp => "lp",
    };
    let _ = writeln!(out, "# opf-dump v1\nformulation {form}\nvariables {}\nrows {}", model.vars.len(), model.rows());
    let _ = writeln!(out, "[variables]");
    for (j, name) in model.var_names.iter().enumerate() {
        let val = solution.map_or("-".to_string(), |res| res.primal[j].to_string());
        let _ = writeln!(out, "{j} {name} {} {val}", model.q[j]);
    }
    let _ = writeln!(out, "[rows]");
    let mut kinds = Vec::with_capacity(model.rows());
    for (cone, kind) in model.cones.iter().zip(&model.cone_kinds) {
        use clarabel::solver::SupportedConeT::*;
        let d = match cone {
            ZeroConeT(d) | NonnegativeConeT(d) | SecondOrderConeT(d) => *d,
            _ => 0,
        };
        let tag = match kind {
            ConeKind::Equality => "eq",
            ConeKind::Inequality => "ineq",
            ConeKind::Relaxation => "soc-relax",
            ConeKind::FlowLimit => "soc-flow",
        };
        kinds.extend(std::iter::repeat_n(tag, d));
    }
    for (r, name) in model.row_names.iter().enumerate() {
        let (s, z) = match solution {
            Some(res) => (res.slacks[r].to_string(), res.duals[r].to_string()),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(out, "{r} {name} {} {} {s} {z}", kinds[r], model.b[r]);
    }
    out
}
