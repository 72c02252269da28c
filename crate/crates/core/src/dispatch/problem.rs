use crate::netmodel::{GeneratorKind, Network};

use super::DispatchError;

/// Whether the substation tie to the upstream grid is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    GridConnected,
    Islanded,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::GridConnected => "normal",
            Mode::Islanded => "islanded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    GridImport,
    /// Reverse flow into the upstream grid, bounded above by zero.
    GridExport,
    UtilityDg,
    /// A prosumer's offer admitted as a dispatchable injection; carries the agent id.
    ProsumerOffer(u32),
}

/// A dispatchable injection in one interval's OPF.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    /// Node index.
    pub node: usize,
    pub kind: UnitKind,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// $/MWh
    pub cost: f64,
}

/// Which formulation `build_opf` produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Conic relaxation of the branch-flow model, with losses.
    #[default]
    Socp,
    /// Linearized, lossless DistFlow solved as an LP.
    Lp,
}

/// One interval's optimal power flow instance. All powers are in kW / kvar and
/// indexed by node index; conversion to per unit happens in `build_opf`.
#[derive(Debug, Clone)]
pub struct DispatchProblem<'a> {
    pub network: &'a Network,
    pub mode: Mode,
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
    /// Portion of `load_p` that must not be shed (served by approved P2P trades).
    pub firm_load: Vec<f64>,
    /// Fixed active injections, e.g. approved P2P seller deliveries.
    pub fixed_injection: Vec<f64>,
    pub units: Vec<Unit>,
    pub voll: f64,
    /// Indices of lines out of service; their flows are forced to zero.
    pub lines_out: Vec<usize>,
    /// Voltage magnitude bounds per node, per unit. Initialised from the network.
    pub v_bounds: Vec<(f64, f64)>,
    /// Squared voltage held at the root.
    pub v_root: f64,
    pub formulation: Formulation,
}

impl<'a> DispatchProblem<'a> {
    /// Builds the default unit set from `network`: the grid tie priced at
    /// `lmp` (bounds zeroed when islanded) and every utility DG at its cost.
    /// A tie with negative `p_min` also gets an export unit covering
    /// `[p_min, 0]`, priced at `lmp` until [`Self::set_export_price`] is called.
    /// Prosumer PV is not a unit; it reaches the OPF through the market.
    pub fn new(network: &'a Network, mode: Mode, load_p: Vec<f64>, load_q: Vec<f64>, lmp: f64, voll: f64) -> Self {
        let n = network.node_count();
        let mut units = Vec::new();
        for g in &network.generators {
            let node = network.index_of(g.node).expect("validated network");
            match g.kind {
                GeneratorKind::GridRoot => {
                    let live = mode == Mode::GridConnected;
                    let z = |v: f64| if live { v } else { 0.0 };
                    units.push(Unit {
                        node,
                        kind: UnitKind::GridImport,
                        p_min: z(g.p_min.max(0.0)),
                        p_max: z(g.p_max),
                        q_min: z(g.q_min),
                        q_max: z(g.q_max),
                        cost: lmp,
                    });
                    if g.p_min < 0.0 {
                        units.push(Unit {
                            node,
                            kind: UnitKind::GridExport,
                            p_min: z(g.p_min),
                            p_max: 0.0,
                            q_min: 0.0,
                            q_max: 0.0,
                            cost: lmp,
                        });
                    }
                }
                GeneratorKind::UtilityDg => units.push(Unit {
                    node,
                    kind: UnitKind::UtilityDg,
                    p_min: g.p_min,
                    p_max: g.p_max,
                    q_min: g.q_min,
                    q_max: g.q_max,
                    cost: g.cost,
                }),
                GeneratorKind::PvProsumer => {}
            }
        }
        Self {
            network,
            mode,
            load_p,
            load_q,
            firm_load: vec![0.0; n],
            fixed_injection: vec![0.0; n],
            units,
            voll,
            lines_out: Vec::new(),
            v_bounds: network.nodes.iter().map(|n| (n.v_min, n.v_max)).collect(),
            v_root: 1.0,
            formulation: Formulation::Socp,
        }
    }

    /// Price paid for power exported through the tie, $/MWh.
    pub fn set_export_price(&mut self, price: f64) {
        for u in self.units.iter_mut().filter(|u| u.kind == UnitKind::GridExport) {
            u.cost = price;
        }
    }

    /// Adds a prosumer offer as a dispatchable unit at unity power factor.
    pub fn add_offer(&mut self, agent: u32, node: usize, price: f64, quantity_kw: f64) {
        self.units.push(Unit {
            node,
            kind: UnitKind::ProsumerOffer(agent),
            p_min: 0.0,
            p_max: quantity_kw,
            q_min: 0.0,
            q_max: 0.0,
            cost: price,
        });
    }

    pub fn total_load(&self) -> f64 {
        self.load_p.iter().sum()
    }

    /// Checks the invariants `build_opf` relies on.
    pub fn validate(&self) -> Result<(), DispatchError> {
        let n = self.network.node_count();
        let mut bad = Vec::new();
        for (name, v) in [
            ("load_p", &self.load_p),
            ("load_q", &self.load_q),
            ("firm_load", &self.firm_load),
            ("fixed_injection", &self.fixed_injection),
        ] {
            if v.len() != n {
                bad.push(format!("{name} has {} entries for {n} nodes", v.len()));
            } else if v.iter().any(|x| !x.is_finite()) {
                bad.push(format!("{name} contains a non-finite value"));
            }
        }
        if bad.is_empty() {
            for i in 0..n {
                if self.load_p[i] < 0.0 {
                    bad.push(format!("negative load at node {}", self.network.nodes[i].id));
                }
                if self.firm_load[i] < 0.0 || self.firm_load[i] > self.load_p[i] + 1e-9 {
                    bad.push(format!("firm load outside [0, load] at node {}", self.network.nodes[i].id));
                }
            }
        }
        if self.v_bounds.len() != n {
            bad.push(format!("v_bounds has {} entries for {n} nodes", self.v_bounds.len()));
        }
        for (node, (lo, hi)) in self.network.nodes.iter().zip(&self.v_bounds) {
            if !(*lo > 0.0 && lo <= hi) {
                bad.push(format!("node {}: voltage bounds {lo}..{hi} are contradictory", node.id));
            }
        }
        for u in &self.units {
            if u.p_min > u.p_max || u.q_min > u.q_max {
                bad.push(format!(
                    "unit {:?} at node {}: lower bound above upper bound",
                    u.kind, self.network.nodes[u.node].id
                ));
            }
            if !u.cost.is_finite() {
                bad.push(format!("unit {:?}: non-finite cost", u.kind));
            } else if u.cost >= self.voll {
                bad.push(format!("unit {:?}: cost {} not below VOLL {}", u.kind, u.cost, self.voll));
            }
            let tie = matches!(u.kind, UnitKind::GridImport | UnitKind::GridExport);
            if self.mode == Mode::Islanded && tie && (u.p_max != 0.0 || u.p_min != 0.0) {
                bad.push("islanded problem with non-zero grid import bound".into());
            }
        }
        let import =
            self.units.iter().filter(|u| u.kind == UnitKind::GridImport).map(|u| u.cost).fold(f64::INFINITY, f64::min);
        if self.units.iter().any(|u| u.kind == UnitKind::GridExport && u.cost > import) {
            bad.push("export price above import price".into());
        }
        if !self.voll.is_finite() {
            bad.push("VOLL must be finite".into());
        }
        if self.lines_out.iter().any(|&k| k >= self.network.lines.len()) {
            bad.push("out-of-service line index out of range".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(DispatchError::InvalidProblem(bad))
        }
    }
}
