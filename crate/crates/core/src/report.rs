//! Tab-separated report files for a simulation run.
//!
//! Every file starts with a `#`-prefixed header line naming its columns.
//! Floats are written in Rust's shortest round-trip form, so values parsed
//! back from a table equal the in-memory ones bit for bit. Missing values
//! (an interval without trades has no ATP) are written as `-`.

use std::fmt::Write as _;

use crate::dispatch::Mode;
use crate::market::VettingStatus;
use crate::netmodel::Network;
use crate::sim::{Comparison, IntervalRecord, ScenarioConfig};

/// Aggregates over a run. Energies use the interval length.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub intervals: usize,
    pub islanded_intervals: usize,
    pub mean_ri: f64,
    pub min_ri: f64,
    /// $.
    pub total_welfare: f64,
    /// Net grid settlement, $.
    pub total_grid_settlement: f64,
    /// kWh.
    pub energy_shed: f64,
    /// kWh traded peer to peer.
    pub energy_traded: f64,
    pub matches: usize,
    pub blocked: usize,
}

impl Summary {
    pub fn from_rows(rows: &[TableRow], hours: f64) -> Self {
        let n = rows.len();
        Summary {
            intervals: n,
            islanded_intervals: rows.iter().filter(|r| r.mode == "islanded").count(),
            mean_ri: if n == 0 { 0.0 } else { rows.iter().map(|r| r.ri).sum::<f64>() / n as f64 },
            min_ri: rows.iter().map(|r| r.ri).fold(f64::INFINITY, f64::min),
            total_welfare: rows.iter().map(|r| r.welfare).sum(),
            total_grid_settlement: rows.iter().map(|r| r.grid_settlement).sum(),
            energy_shed: rows.iter().map(|r| r.shed).sum::<f64>() * hours,
            energy_traded: rows.iter().map(|r| r.traded).sum::<f64>() * hours,
            matches: rows.iter().map(|r| r.matches).sum(),
            blocked: rows.iter().map(|r| r.blocked).sum(),
        }
    }

    pub fn from_records(records: &[IntervalRecord], hours: f64) -> Self {
        let rows: Vec<TableRow> = records.iter().map(TableRow::from).collect();
        Self::from_rows(&rows, hours)
    }

    pub fn to_text(&self) -> String {
        let mut s = header(&["quantity", "value"]);
        let _ = writeln!(s, "intervals\t{}", self.intervals);
        let _ = writeln!(s, "islanded_intervals\t{}", self.islanded_intervals);
        let _ = writeln!(s, "mean_ri\t{}", self.mean_ri);
        let _ = writeln!(s, "min_ri\t{}", self.min_ri);
        let _ = writeln!(s, "total_welfare\t{}", self.total_welfare);
        let _ = writeln!(s, "total_grid_settlement\t{}", self.total_grid_settlement);
        let _ = writeln!(s, "energy_shed_kwh\t{}", self.energy_shed);
        let _ = writeln!(s, "energy_traded_kwh\t{}", self.energy_traded);
        let _ = writeln!(s, "matches\t{}", self.matches);
        let _ = writeln!(s, "blocked\t{}", self.blocked);
        s
    }

    /// Largest absolute difference over the numeric fields.
    pub fn max_difference(&self, other: &Summary) -> f64 {
        let pairs = [
            (self.intervals as f64, other.intervals as f64),
            (self.islanded_intervals as f64, other.islanded_intervals as f64),
            (self.mean_ri, other.mean_ri),
            (self.min_ri, other.min_ri),
            (self.total_welfare, other.total_welfare),
            (self.total_grid_settlement, other.total_grid_settlement),
            (self.energy_shed, other.energy_shed),
            (self.energy_traded, other.energy_traded),
            (self.matches as f64, other.matches as f64),
            (self.blocked as f64, other.blocked as f64),
        ];
        pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// One line of the interval table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub interval: usize,
    pub hour: f64,
    pub mode: String,
    pub total_load: f64,
    pub served: f64,
    pub shed: f64,
    pub ri: f64,
    pub atp: Option<f64>,
    pub matches: usize,
    pub blocked: usize,
    pub traded: f64,
    pub grid_settlement: f64,
    pub welfare: f64,
    pub budget_imbalance: f64,
    pub grid_import: f64,
    pub dg_output: f64,
    pub losses: f64,
    pub cone_gap: f64,
}

impl From<&IntervalRecord> for TableRow {
    fn from(r: &IntervalRecord) -> Self {
        TableRow {
            interval: r.interval,
            hour: r.hour,
            mode: r.mode.as_str().to_string(),
            total_load: r.total_load,
            served: r.served,
            shed: r.shed,
            ri: r.ri,
            atp: r.atp,
            matches: r.matches,
            blocked: r.blocked,
            traded: r.traded,
            grid_settlement: r.grid_settlement,
            welfare: r.welfare,
            budget_imbalance: r.budget_imbalance,
            grid_import: r.grid_import,
            dg_output: r.dg_output,
            losses: r.losses,
            cone_gap: r.cone_gap,
        }
    }
}

pub const INTERVAL_COLUMNS: [&str; 18] = [
    "interval",
    "hour",
    "mode",
    "total_load_kw",
    "served_kw",
    "shed_kw",
    "ri_pct",
    "atp",
    "matches",
    "blocked",
    "traded_kw",
    "grid_settlement",
    "welfare",
    "budget_imbalance",
    "grid_import_kw",
    "dg_kw",
    "losses_kw",
    "cone_gap",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn header(cols: &[&str]) -> String {
    format!("# {}\n", cols.join("\t"))
}

/// Renders the interval table.
pub fn interval_table(records: &[IntervalRecord]) -> String {
    let mut s = header(&INTERVAL_COLUMNS);
    for r in records.iter().map(TableRow::from) {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.interval,
            r.hour,
            r.mode,
            r.total_load,
            r.served,
            r.shed,
            r.ri,
            opt(r.atp),
            r.matches,
            r.blocked,
            r.traded,
            r.grid_settlement,
            r.welfare,
            r.budget_imbalance,
            r.grid_import,
            r.dg_output,
            r.losses,
            r.cone_gap
        );
    }
    s
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("interval table line {line}: {message}")]
pub struct TableError {
    pub line: usize,
    pub message: String,
}

/// Parses a table written by [`interval_table`].
pub fn parse_interval_table(text: &str) -> Result<Vec<TableRow>, TableError> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TableError { line: n + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != INTERVAL_COLUMNS.len() {
            return Err(err(format!("expected {} fields, found {}", INTERVAL_COLUMNS.len(), f.len())));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|e| err(format!("{}: {e}", INTERVAL_COLUMNS[i])));
        let int = |i: usize| f[i].parse::<usize>().map_err(|e| err(format!("{}: {e}", INTERVAL_COLUMNS[i])));
        rows.push(TableRow {
            interval: int(0)?,
            hour: num(1)?,
            mode: f[2].to_string(),
            total_load: num(3)?,
            served: num(4)?,
            shed: num(5)?,
            ri: num(6)?,
            atp: if f[7] == "-" { None } else { Some(num(7)?) },
            matches: int(8)?,
            blocked: int(9)?,
            traded: num(10)?,
            grid_settlement: num(11)?,
            welfare: num(12)?,
            budget_imbalance: num(13)?,
            grid_import: num(14)?,
            dg_output: num(15)?,
            losses: num(16)?,
            cone_gap: num(17)?,
        });
    }
    Ok(rows)
}

fn node_series(network: &Network, records: &[IntervalRecord], pick: impl Fn(&IntervalRecord) -> &[f64]) -> String {
    let mut cols = vec!["interval".to_string(), "hour".to_string()];
    cols.extend(network.nodes.iter().map(|n| format!("node{}", n.id)));
    let mut s = format!("# {}\n", cols.join("\t"));
    for r in records {
        let vals: Vec<String> = pick(r).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}\t{}\t{}", r.interval, r.hour, vals.join("\t"));
    }
    s
}

/// Final nodal prices per interval, one column per node.
pub fn dlmp_series(network: &Network, records: &[IntervalRecord]) -> String {
    node_series(network, records, |r| &r.dlmp)
}

/// Pre-market price signals per interval, one column per node.
pub fn signal_dlmp_series(network: &Network, records: &[IntervalRecord]) -> String {
    node_series(network, records, |r| &r.signal_dlmp)
}

pub fn atp_series(records: &[IntervalRecord]) -> String {
    let mut s = header(&["interval", "hour", "mode", "atp"]);
    for r in records {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", r.interval, r.hour, r.mode.as_str(), opt(r.atp));
    }
    s
}

pub fn ri_series(records: &[IntervalRecord]) -> String {
    let mut s = header(&["interval", "hour", "mode", "ri_pct", "shed_kw", "surplus_kw"]);
    for r in records {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}\t{}", r.interval, r.hour, r.mode.as_str(), r.ri, r.shed, r.surplus);
    }
    s
}

/// Every cleared match in ledger order with its vetting outcome.
pub fn match_ledger(records: &[IntervalRecord]) -> String {
    let mut s = header(&[
        "interval",
        "round",
        "seller",
        "buyer",
        "seller_node",
        "buyer_node",
        "quantity_kw",
        "price",
        "ask",
        "bid",
        "status",
    ]);
    for o in records.iter().filter_map(|r| r.outcome.as_ref()) {
        for m in &o.matches {
            let status = match &m.status {
                VettingStatus::Pending => "pending".to_string(),
                VettingStatus::Approved => "approved".to_string(),
                VettingStatus::Blocked(why) => format!("blocked: {why}"),
            };
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                m.interval,
                m.round,
                m.seller,
                m.buyer,
                m.seller_node,
                m.buyer_node,
                m.quantity,
                m.price,
                m.ask_price,
                m.bid_price,
                status
            );
        }
    }
    s
}

/// Per-match vetting decisions: binding constraint and headroom left.
pub fn vetting_report(records: &[IntervalRecord]) -> String {
    let mut s = header(&["interval", "seller", "buyer", "quantity_kw", "decision", "binding", "headroom"]);
    for r in records {
        let Some(o) = &r.outcome else { continue };
        for (m, d) in o.matches.iter().zip(&r.vetting) {
            let decision = if d.status.is_blocked() { "blocked" } else { "approved" };
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.interval, m.seller, m.buyer, m.quantity, decision, d.binding, d.headroom
            );
        }
    }
    s
}

/// Grid settlements of everything the market left over.
pub fn settlement_table(records: &[IntervalRecord]) -> String {
    let mut s = header(&["interval", "agent", "side", "node", "quantity_kw", "price", "amount"]);
    for o in records.iter().filter_map(|r| r.outcome.as_ref()) {
        for g in &o.settlements {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                o.interval,
                g.agent,
                g.side.as_str(),
                g.node,
                g.quantity,
                g.price,
                g.amount
            );
        }
    }
    s
}

/// Interval-by-interval comparison of runs with and without P2P.
pub fn comparison_table(cmp: &Comparison) -> String {
    let mut s =
        header(&["interval", "hour", "ri_with", "ri_without", "ri_delta", "dlmp_with", "dlmp_without", "atp_with"]);
    for r in &cmp.rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.interval,
            r.hour,
            r.ri_with,
            r.ri_without,
            r.ri_delta(),
            r.dlmp_with,
            r.dlmp_without,
            opt(r.atp_with)
        );
    }
    s
}

/// Everything a run produces, ready to be written out.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub records: Vec<IntervalRecord>,
    pub summary: Summary,
    hours: f64,
}

impl RunReport {
    pub fn new(config: &ScenarioConfig, records: Vec<IntervalRecord>) -> Self {
        let hours = f64::from(config.interval_minutes) / 60.0;
        RunReport {
            scenario: config.name.clone(),
            config: config.clone(),
            summary: Summary::from_records(&records, hours),
            records,
            hours,
        }
    }

    pub fn interval_hours(&self) -> f64 {
        self.hours
    }

    pub fn islanded(&self) -> impl Iterator<Item = &IntervalRecord> {
        self.records.iter().filter(|r| r.mode == Mode::Islanded)
    }

    /// `(file name, contents)` for every output file. The match ledger,
    /// vetting report and settlements are omitted when the market is off.
    pub fn files(&self, network: &Network) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("config.toml", self.config.to_toml()),
            ("summary.tsv", self.summary.to_text()),
            ("intervals.tsv", interval_table(&self.records)),
            ("dlmp.tsv", dlmp_series(network, &self.records)),
            ("signal_dlmp.tsv", signal_dlmp_series(network, &self.records)),
            ("atp.tsv", atp_series(&self.records)),
            ("ri.tsv", ri_series(&self.records)),
        ];
        if self.config.p2p {
            out.push(("matches.tsv", match_ledger(&self.records)));
            out.push(("vetting.tsv", vetting_report(&self.records)));
            out.push(("settlements.tsv", settlement_table(&self.records)));
        }
        out
    }
}
