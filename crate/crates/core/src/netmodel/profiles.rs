use std::collections::BTreeMap;

use super::types::{GeneratorKind, Network, NodeId};
use super::ValidationError;

/// Time series driving a scenario, already at simulation resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub interval_minutes: u32,
    /// Load multiplier, indexed `[interval][node index]`.
    pub load_multiplier: Vec<Vec<f64>>,
    /// PV availability fraction per prosumer node, one value per interval.
    pub pv_fraction: BTreeMap<NodeId, Vec<f64>>,
    /// Upstream locational marginal price per interval, $/MWh.
    pub lmp: Vec<f64>,
    /// Feed-in tariff, $/MWh.
    pub fit: f64,
    /// Value of lost load, $/MWh.
    pub voll: f64,
}

impl Profiles {
    pub fn interval_count(&self) -> usize {
        self.lmp.len()
    }

    pub fn interval_hours(&self) -> f64 {
        f64::from(self.interval_minutes) / 60.0
    }

    /// Gross (p kW, q kvar) demand at node index `i` in interval `t`.
    pub fn load(&self, network: &Network, t: usize, i: usize) -> (f64, f64) {
        let m = self.load_multiplier[t][i];
        let n = &network.nodes[i];
        (n.load_p * m, n.load_q * m)
    }

    /// Total gross active demand in interval `t`, kW.
    pub fn total_load(&self, network: &Network, t: usize) -> f64 {
        (0..network.node_count()).map(|i| self.load(network, t, i).0).sum()
    }

    /// Available PV output at node index `i` in interval `t`, kW.
    pub fn pv_available(&self, network: &Network, t: usize, i: usize) -> f64 {
        let id = network.nodes[i].id;
        let frac = self.pv_fraction.get(&id).map_or(0.0, |s| s[t]);
        network.generators_at(i).filter(|g| g.kind == GeneratorKind::PvProsumer).map(|g| g.p_max * frac).sum()
    }

    /// Checks series lengths and value ranges against `network`.
    pub fn validate(&self, network: &Network) -> Result<(), ValidationError> {
        let n = self.interval_count();
        let bad = |m: String| Err(ValidationError::Profile(m));
        if n == 0 {
            return bad("no intervals".into());
        }
        if self.interval_minutes == 0 {
            return bad("interval length must be positive".into());
        }
        if self.load_multiplier.len() != n {
            return bad(format!("{} load rows for {n} intervals", self.load_multiplier.len()));
        }
        for (t, row) in self.load_multiplier.iter().enumerate() {
            if row.len() != network.node_count() {
                return bad(format!("interval {t}: {} load columns for {} nodes", row.len(), network.node_count()));
            }
            if let Some(m) = row.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
                return bad(format!("interval {t}: load multiplier {m} must be finite and >= 0"));
            }
        }
        for (id, s) in &self.pv_fraction {
            if network.index_of(*id).is_none() {
                return bad(format!("PV series for unknown node {id}"));
            }
            if s.len() != n {
                return bad(format!("PV series for node {id} has {} values, expected {n}", s.len()));
            }
            if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return bad(format!("PV fraction {v} at node {id} outside [0, 1]"));
            }
        }
        if let Some(p) = self.lmp.iter().find(|p| !p.is_finite()) {
            return bad(format!("non-finite LMP {p}"));
        }
        if !(self.fit >= 0.0) || !self.fit.is_finite() {
            return bad(format!("FIT {} must be finite and >= 0", self.fit));
        }
        let max_cost = network
            .generators
            .iter()
            .filter(|g| g.kind != GeneratorKind::GridRoot)
            .map(|g| g.cost)
            .chain(self.lmp.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        if !(self.voll > max_cost) || !self.voll.is_finite() {
            return bad(format!("VOLL {} $/MWh must exceed every generation cost and LMP (max {max_cost})", self.voll));
        }
        Ok(())
    }
}
