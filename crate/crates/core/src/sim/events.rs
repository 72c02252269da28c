use crate::dispatch::Mode;
use crate::netmodel::Network;

use super::config::{OutageElement, ScenarioConfig};
use super::SimError;

/// Network state for one interval after outage events are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingState {
    pub mode: Mode,
    /// Indices of lines out of service.
    pub lines_out: Vec<usize>,
    /// Elements out of service, in config order.
    pub outaged: Vec<OutageElement>,
}

/// Mode and out-of-service lines at `interval`. Overlapping or adjacent
/// events combine as the union of their windows.
pub fn apply_events(config: &ScenarioConfig, network: &Network, interval: usize) -> Result<OperatingState, SimError> {
    let mut state = OperatingState { mode: Mode::GridConnected, lines_out: Vec::new(), outaged: Vec::new() };
    for ev in &config.outages {
        let element = ev.parsed_element()?;
        if !ev.covers(interval) {
            continue;
        }
        match element {
            OutageElement::Tie => state.mode = Mode::Islanded,
            OutageElement::Line(a, b) => {
                let k = network
                    .lines
                    .iter()
                    .position(|l| l.from == a && l.to == b)
                    .ok_or_else(|| SimError::UnknownElement(element.to_string()))?;
                if !state.lines_out.contains(&k) {
                    state.lines_out.push(k);
                }
            }
        }
        if !state.outaged.contains(&element) {
            state.outaged.push(element);
        }
    }
    state.lines_out.sort_unstable();
    Ok(state)
}
