use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dispatch::Formulation;
use crate::netmodel::{LoadError, Network, NodeId, ValidationError, ZoneId};

fn default_horizon() -> usize {
    96
}
fn default_interval() -> u32 {
    15
}
fn default_true() -> bool {
    true
}
fn default_voll() -> f64 {
    1000.0
}
fn default_element() -> String {
    "tie".into()
}

/// Scenario configuration as read from TOML.
///
/// ```toml
/// name = "paper-emergency"
/// feeder = "ieee33.feeder"
/// profiles = "july-day.profile"
/// horizon = 96
/// interval_minutes = 15
/// seed = 2019
/// p2p = true
/// fit = 20.0
/// voll = 1000.0
///
/// [[outages]]
/// start = 0        # interval index
/// duration = 96    # intervals
/// element = "tie"  # or "line:6-26"
///
/// [zones]          # optional; replaces the feeder's zone column
/// 1 = [1, 2, 3]
///
/// [strategy]
/// emergency_floor_share = 0.6
/// flexible_share = 1.0
///
/// [vetting]
/// margin = 0.02
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub feeder: PathBuf,
    pub profiles: PathBuf,
    /// Number of intervals simulated.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_interval")]
    pub interval_minutes: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub p2p: bool,
    /// Feed-in tariff, $/MWh.
    pub fit: f64,
    /// Value of lost load, $/MWh.
    #[serde(default = "default_voll")]
    pub voll: f64,
    #[serde(default)]
    pub outages: Vec<OutageEvent>,
    #[serde(default)]
    pub zones: BTreeMap<String, Vec<u32>>,
    #[serde(default)]
    pub strategy: StrategyParams,
    #[serde(default)]
    pub vetting: VettingParams,
    #[serde(default)]
    pub formulation: Formulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutageEvent {
    /// First interval of the outage.
    pub start: usize,
    /// Length in intervals; the element is restored at `start + duration`.
    pub duration: usize,
    #[serde(default = "default_element")]
    pub element: String,
}

impl OutageEvent {
    pub fn covers(&self, interval: usize) -> bool {
        interval >= self.start && interval < self.start + self.duration
    }

    pub fn parsed_element(&self) -> Result<OutageElement, ValidationError> {
        OutageElement::parse(&self.element)
    }
}

/// What an outage takes out of service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutageElement {
    /// The substation transformer / tie-line to the upstream grid.
    Tie,
    Line(NodeId, NodeId),
}

impl OutageElement {
    pub fn parse(s: &str) -> Result<Self, ValidationError> {
        if s == "tie" {
            return Ok(OutageElement::Tie);
        }
        let bad =
            || ValidationError::Config(format!("unknown outage element `{s}` (expected `tie` or `line:<from>-<to>`)"));
        let rest = s.strip_prefix("line:").ok_or_else(bad)?;
        let (a, b) = rest.split_once('-').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        Ok(OutageElement::Line(NodeId(a), NodeId(b)))
    }
}

impl fmt::Display for OutageElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutageElement::Tie => write!(f, "tie"),
            OutageElement::Line(a, b) => write!(f, "line:{a}-{b}"),
        }
    }
}

/// Parameters of the default bidding strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyParams {
    /// In islanded intervals prices are drawn from
    /// `[FIT + share·(DLMP − FIT), DLMP]` instead of `[FIT, DLMP]`.
    #[serde(default = "StrategyParams::default_floor")]
    pub emergency_floor_share: f64,
    /// Share of a consumer's load offered to the market in normal operation.
    #[serde(default = "StrategyParams::default_flexible")]
    pub flexible_share: f64,
}

impl StrategyParams {
    fn default_floor() -> f64 {
        0.6
    }
    fn default_flexible() -> f64 {
        1.0
    }
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self { emergency_floor_share: Self::default_floor(), flexible_share: Self::default_flexible() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VettingParams {
    /// Fractional engineering margin applied to voltage and flow limits.
    #[serde(default = "VettingParams::default_margin")]
    pub margin: f64,
}

impl VettingParams {
    fn default_margin() -> f64 {
        0.02
    }
}

impl Default for VettingParams {
    fn default() -> Self {
        Self { margin: Self::default_margin() }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, file: &str) -> Result<Self, LoadError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].lines().count().max(1));
            LoadError::parse(file, line, e.message())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Zone override as a node map, if one is configured.
    pub fn zone_map(&self) -> Result<Option<BTreeMap<NodeId, ZoneId>>, ValidationError> {
        if self.zones.is_empty() {
            return Ok(None);
        }
        let mut out = BTreeMap::new();
        for (zone, nodes) in &self.zones {
            let z: u32 =
                zone.parse().map_err(|_| ValidationError::Config(format!("zone key `{zone}` is not an integer")))?;
            for n in nodes {
                if out.insert(NodeId(*n), ZoneId(z)).is_some() {
                    return Err(ValidationError::Config(format!("node {n} assigned to more than one zone")));
                }
            }
        }
        Ok(Some(out))
    }

    /// Checks the config against the network it will run on.
    pub fn validate(&self, network: &Network) -> Result<(), ValidationError> {
        let bad = |m: String| Err(ValidationError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least one interval".into());
        }
        for ev in &self.outages {
            if ev.duration < 1 {
                return bad(format!("outage at interval {} has zero duration", ev.start));
            }
            if ev.start + ev.duration > self.horizon {
                return bad(format!(
                    "outage [{}, {}) extends past the {}-interval horizon",
                    ev.start,
                    ev.start + ev.duration,
                    self.horizon
                ));
            }
            if let OutageElement::Line(a, b) = ev.parsed_element()? {
                if !network.lines.iter().any(|l| l.from == a && l.to == b) {
                    return bad(format!("outage references unknown line {a}-{b}"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.strategy.emergency_floor_share) {
            return bad("strategy.emergency_floor_share must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.strategy.flexible_share) {
            return bad("strategy.flexible_share must lie in [0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.vetting.margin) {
            return bad("vetting.margin must lie in [0, 1)".into());
        }
        Ok(())
    }
}
