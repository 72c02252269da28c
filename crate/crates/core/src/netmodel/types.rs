use std::collections::BTreeMap;
use std::fmt;

use super::topology::{self, Topology};
use super::ValidationError;

/// External label of a bus, as written in feeder files (the standard 33-node
/// feeder numbers its buses from 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Market zone label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ZoneId(pub u32);

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Market role of the agent sitting at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AgentRole {
    #[default]
    None,
    /// Owns local generation and offers its surplus (ask side).
    Prosumer,
    /// Buys energy (bid side).
    Consumer,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::None => "none",
            AgentRole::Prosumer => "prosumer",
            AgentRole::Consumer => "consumer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" | "-" => Some(AgentRole::None),
            "prosumer" => Some(AgentRole::Prosumer),
            "consumer" => Some(AgentRole::Consumer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    /// Nominal active load, kW.
    pub load_p: f64,
    /// Nominal reactive load, kvar.
    pub load_q: f64,
    /// Voltage magnitude bounds, per unit.
    pub v_min: f64,
    pub v_max: f64,
    pub role: AgentRole,
}

impl Node {
    /// Reactive-to-active load ratio, held fixed when the load is scaled.
    pub fn q_ratio(&self) -> f64 {
        if self.load_p > 0.0 {
            self.load_q / self.load_p
        } else {
            0.0
        }
    }
}

/// A branch oriented from its ancestor-side bus to its descendant bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: NodeId,
    pub to: NodeId,
    /// Series resistance, per unit.
    pub r: f64,
    /// Series reactance, per unit.
    pub x: f64,
    /// Cap on squared current magnitude, per unit.
    pub current_limit: f64,
    /// Apparent power limit at the sending end, kVA.
    pub flow_limit: f64,
}

impl Line {
    pub fn label(&self) -> String {
        format!("{}-{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Import over the substation tie-line, priced at the upstream LMP.
    GridRoot,
    /// Utility-operated dispatchable unit.
    UtilityDg,
    /// Prosumer photovoltaic array; `p_max` is the nameplate rating.
    PvProsumer,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::GridRoot => "grid",
            GeneratorKind::UtilityDg => "dg",
            GeneratorKind::PvProsumer => "pv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "grid" => Some(GeneratorKind::GridRoot),
            "dg" => Some(GeneratorKind::UtilityDg),
            "pv" => Some(GeneratorKind::PvProsumer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub node: NodeId,
    pub kind: GeneratorKind,
    /// Active power bounds, kW. The grid tie may have a negative lower bound (export).
    pub p_min: f64,
    pub p_max: f64,
    /// Reactive power bounds, kvar.
    pub q_min: f64,
    pub q_max: f64,
    /// Marginal cost, $/MWh. Ignored for the grid tie, which uses the interval LMP.
    pub cost: f64,
}

/// A radial distribution feeder.
///
/// Constructed only through [`Network::new`], which rejects anything that is
/// not a spanning tree rooted at `root`. The topology is cached so ancestor
/// and path queries are O(1)/O(depth).
#[derive(Debug, Clone)]
pub struct Network {
    pub name: String,
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub root: NodeId,
    /// Base line-to-line voltage, kV.
    pub base_kv: f64,
    /// Base three-phase power, MVA.
    pub base_mva: f64,
    pub zones: BTreeMap<NodeId, ZoneId>,
    topo: Topology,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.nodes == other.nodes
            && self.lines == other.lines
            && self.generators == other.generators
            && self.root == other.root
            && self.base_kv == other.base_kv
            && self.base_mva == other.base_mva
            && self.zones == other.zones
    }
}

impl Network {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        nodes: Vec<Node>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
        root: NodeId,
        base_kv: f64,
        base_mva: f64,
        zones: BTreeMap<NodeId, ZoneId>,
    ) -> Result<Self, ValidationError> {
        let mut problems = Vec::new();
        if !(base_kv > 0.0) || !(base_mva > 0.0) {
            problems.push(format!("bases must be positive (kV={base_kv}, MVA={base_mva})"));
        }
        for n in &nodes {
            if !(n.v_min > 0.0 && n.v_min <= n.v_max) {
                problems.push(format!(
                    "node {}: voltage bounds must satisfy 0 < v_min <= v_max (got {}..{})",
                    n.id, n.v_min, n.v_max
                ));
            }
            if !(n.load_p >= 0.0) || !n.load_q.is_finite() {
                problems.push(format!("node {}: load must be finite with load_p >= 0", n.id));
            }
        }
        for l in &lines {
            if !(l.r >= 0.0 && l.x >= 0.0) || (l.r == 0.0 && l.x == 0.0) {
                problems.push(format!("line {}: impedance must be non-negative and not both zero", l.label()));
            }
            if !(l.current_limit > 0.0 && l.flow_limit > 0.0) {
                problems.push(format!("line {}: limits must be positive", l.label()));
            }
        }
        for g in &generators {
            if !(g.p_max >= 0.0 && g.p_min <= g.p_max && g.q_min <= g.q_max) {
                problems.push(format!("generator {} at node {}: bounds out of order", g.kind.as_str(), g.node));
            }
            if !(g.cost >= 0.0) || !g.cost.is_finite() {
                problems.push(format!("generator at node {}: cost must be finite and >= 0", g.node));
            }
        }
        if !problems.is_empty() {
            return Err(ValidationError::Invalid(problems));
        }

        let topo = topology::build(&nodes, &lines, root).map_err(ValidationError::NotATree)?;

        let mut refs = Vec::new();
        for g in &generators {
            if topo.index_of(g.node).is_none() {
                refs.push(format!("generator references unknown node {}", g.node));
            }
        }
        for id in zones.keys() {
            if topo.index_of(*id).is_none() {
                refs.push(format!("zone map references unknown node {id}"));
            }
        }
        if !refs.is_empty() {
            return Err(ValidationError::Invalid(refs));
        }

        Ok(Self { name: name.into(), nodes, lines, generators, root, base_kv, base_mva, zones, topo })
    }

    /// Base impedance in ohms.
    pub fn base_ohm(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    /// Base power in kW, for converting between kW and per unit.
    pub fn base_kw(&self) -> f64 {
        self.base_mva * 1000.0
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.topo.index_of(id)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn root_index(&self) -> usize {
        self.topo.root
    }

    /// Parent index of node `i`, `None` for the root.
    pub fn parent_index(&self, i: usize) -> Option<usize> {
        self.topo.parent[i]
    }

    /// Index into `lines` of the branch feeding node `i` from its parent.
    pub fn upstream_line(&self, i: usize) -> Option<usize> {
        self.topo.upstream_line[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.topo.children[i]
    }

    /// Node indices in breadth-first order from the root.
    pub fn bfs_order(&self) -> &[usize] {
        &self.topo.order
    }

    /// Line indices on the path from the root down to node `i`.
    pub fn path_lines(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = i;
        while let Some(l) = self.topo.upstream_line[cur] {
            out.push(l);
            cur = self.topo.parent[cur].expect("non-root node has a parent");
        }
        out.reverse();
        out
    }

    pub fn depth(&self, i: usize) -> usize {
        self.topo.depth[i]
    }

    /// The ancestor `A_i` of a node: its unique neighbour on the path to the root.
    pub fn ancestor(&self, node: NodeId) -> Result<NodeId, ValidationError> {
        let i = self.index_of(node).ok_or(ValidationError::UnknownNode(node))?;
        match self.topo.parent[i] {
            Some(p) => Ok(self.nodes[p].id),
            None => Err(ValidationError::RootHasNoAncestor(node)),
        }
    }

    pub fn zone_of(&self, node: NodeId) -> Option<ZoneId> {
        self.zones.get(&node).copied()
    }

    /// Returns a copy with a different zone assignment, re-checking node references.
    pub fn with_zones(&self, zones: BTreeMap<NodeId, ZoneId>) -> Result<Self, ValidationError> {
        let unknown: Vec<_> = zones
            .keys()
            .filter(|id| self.index_of(**id).is_none())
            .map(|id| format!("zone map references unknown node {id}"))
            .collect();
        if !unknown.is_empty() {
            return Err(ValidationError::Invalid(unknown));
        }
        let mut out = self.clone();
        out.zones = zones;
        Ok(out)
    }

    /// Generators located at node index `i`.
    pub fn generators_at(&self, i: usize) -> impl Iterator<Item = &Generator> {
        let id = self.nodes[i].id;
        self.generators.iter().filter(move |g| g.node == id)
    }
}
