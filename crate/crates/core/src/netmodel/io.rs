//! Text formats for feeders and profiles, and scenario loading.
//!
//! # Feeder file
//!
//! Line oriented; `#` starts a comment. A header of `key value` directives is
//! followed by three tables whose columns are whitespace separated:
//!
//! ```text
//! name ieee33
//! base_kv 12.66
//! base_mva 10
//! root 1
//! impedance ohm          # or `pu`; r and x columns are converted to per unit
//!
//! [nodes]
//! # id  p_kw  q_kvar  v_min  v_max  role      zone
//! 1     0     0       1.0    1.0    none      1
//! 2     100   60      0.9    1.05   consumer  1
//!
//! [lines]
//! # from  to  r  x  current_limit_pu  flow_limit_kva
//! 1       2   0.0922  0.0470  4.0  6000
//!
//! [generators]
//! # node  kind  p_min_kw  p_max_kw  q_min_kvar  q_max_kvar  cost_per_mwh
//! 1       dg    0         2500      -1500       1500        50
//! ```
//!
//! `role` is one of `none`, `prosumer`, `consumer`; `kind` is one of `grid`,
//! `dg`, `pv`. The zone column may be `-` for nodes outside every zone.
//!
//! # Profile file
//!
//! ```text
//! step_minutes 60
//! columns hour load pv lmp
//! 0  0.62  0.00  24.5
//! ```
//!
//! Recognised columns: `hour` (ignored label), `load` (multiplier for every
//! node), `load@<node>` (per-node override), `pv` (availability fraction for
//! every PV prosumer), `pv@<node>` (override) and `lmp` ($/MWh). Rows are
//! step-interpolated to the scenario interval length, which must divide
//! `step_minutes`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::profiles::Profiles;
use super::types::{AgentRole, Generator, GeneratorKind, Line, Network, Node, NodeId, ZoneId};
use super::{LoadError, ValidationError};
use crate::sim::ScenarioConfig;

#[derive(PartialEq)]
enum Section {
    Header,
    Nodes,
    Lines,
    Generators,
}

fn num(file: &str, line: usize, field: &str, tok: &str) -> Result<f64, LoadError> {
    tok.parse::<f64>().map_err(|_| LoadError::parse(file, line, format!("field `{field}`: `{tok}` is not a number")))
}

fn id(file: &str, line: usize, field: &str, tok: &str) -> Result<u32, LoadError> {
    tok.parse::<u32>().map_err(|_| LoadError::parse(file, line, format!("field `{field}`: `{tok}` is not a node id")))
}

fn strip_comment(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("").trim()
}

/// Parses a feeder file. `file` is used only for error context.
pub fn parse_feeder(text: &str, file: &str) -> Result<Network, LoadError> {
    let mut section = Section::Header;
    let mut name = String::from("feeder");
    let (mut base_kv, mut base_mva, mut root) = (None, None, None);
    let mut ohm = false;
    let mut nodes = Vec::new();
    let mut lines = Vec::new();
    let mut gens = Vec::new();
    let mut zones = BTreeMap::new();
    let mut raw_lines: Vec<(usize, Vec<f64>, u32, u32)> = Vec::new();

    for (ix, raw) in text.lines().enumerate() {
        let ln = ix + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        match body {
            "[nodes]" => {
                section = Section::Nodes;
                continue;
            }
            "[lines]" => {
                section = Section::Lines;
                continue;
            }
            "[generators]" => {
                section = Section::Generators;
                continue;
            }
            s if s.starts_with('[') => {
                return Err(LoadError::parse(file, ln, format!("unknown section {s}")));
            }
            _ => {}
        }
        let tok: Vec<&str> = body.split_whitespace().collect();
        let want = |n: usize| -> Result<(), LoadError> {
            if tok.len() == n {
                Ok(())
            } else {
                Err(LoadError::parse(file, ln, format!("expected {n} columns, found {}", tok.len())))
            }
        };
        match section {
            Section::Header => {
                want(2)?;
                match tok[0] {
                    "name" => name = tok[1].to_string(),
                    "base_kv" => base_kv = Some(num(file, ln, "base_kv", tok[1])?),
                    "base_mva" => base_mva = Some(num(file, ln, "base_mva", tok[1])?),
                    "root" => root = Some(NodeId(id(file, ln, "root", tok[1])?)),
                    "impedance" => {
                        ohm = match tok[1] {
                            "ohm" => true,
                            "pu" => false,
                            other => {
                                return Err(LoadError::parse(
                                    file,
                                    ln,
                                    format!("field `impedance`: expected `ohm` or `pu`, got `{other}`"),
                                ))
                            }
                        }
                    }
                    other => return Err(LoadError::parse(file, ln, format!("unknown directive `{other}`"))),
                }
            }
            Section::Nodes => {
                want(7)?;
                let nid = NodeId(id(file, ln, "id", tok[0])?);
                let role = AgentRole::parse(tok[5])
                    .ok_or_else(|| LoadError::parse(file, ln, format!("field `role`: unknown role `{}`", tok[5])))?;
                nodes.push(Node {
                    id: nid,
                    load_p: num(file, ln, "p_kw", tok[1])?,
                    load_q: num(file, ln, "q_kvar", tok[2])?,
                    v_min: num(file, ln, "v_min", tok[3])?,
                    v_max: num(file, ln, "v_max", tok[4])?,
                    role,
                });
                if tok[6] != "-" {
                    zones.insert(nid, ZoneId(id(file, ln, "zone", tok[6])?));
                }
            }
            Section::Lines => {
                want(6)?;
                let from = id(file, ln, "from", tok[0])?;
                let to = id(file, ln, "to", tok[1])?;
                let mut vals = Vec::with_capacity(4);
                for (f, t) in ["r", "x", "current_limit", "flow_limit"].iter().zip(&tok[2..]) {
                    vals.push(num(file, ln, f, t)?);
                }
                raw_lines.push((ln, vals, from, to));
            }
            Section::Generators => {
                want(7)?;
                let kind = GeneratorKind::parse(tok[1])
                    .ok_or_else(|| LoadError::parse(file, ln, format!("field `kind`: unknown kind `{}`", tok[1])))?;
                gens.push(Generator {
                    node: NodeId(id(file, ln, "node", tok[0])?),
                    kind,
                    p_min: num(file, ln, "p_min_kw", tok[2])?,
                    p_max: num(file, ln, "p_max_kw", tok[3])?,
                    q_min: num(file, ln, "q_min_kvar", tok[4])?,
                    q_max: num(file, ln, "q_max_kvar", tok[5])?,
                    cost: num(file, ln, "cost", tok[6])?,
                });
            }
        }
    }

    let missing = |what: &str| LoadError::parse(file, 0, format!("missing `{what}` directive"));
    let base_kv = base_kv.ok_or_else(|| missing("base_kv"))?;
    let base_mva = base_mva.ok_or_else(|| missing("base_mva"))?;
    let root = root.ok_or_else(|| missing("root"))?;
    let zbase = base_kv * base_kv / base_mva;
    for (_, v, from, to) in raw_lines {
        let scale = if ohm { 1.0 / zbase } else { 1.0 };
        lines.push(Line {
            from: NodeId(from),
            to: NodeId(to),
            r: v[0] * scale,
            x: v[1] * scale,
            current_limit: v[2],
            flow_limit: v[3],
        });
    }
    Ok(Network::new(name, nodes, lines, gens, root, base_kv, base_mva, zones)?)
}

/// Writes a feeder in the per-unit form of the feeder schema. Floats use the
/// shortest round-tripping representation, so parsing the output reproduces
/// `network` exactly.
pub fn write_feeder(network: &Network) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name {}", network.name);
    let _ = writeln!(s, "base_kv {}", network.base_kv);
    let _ = writeln!(s, "base_mva {}", network.base_mva);
    let _ = writeln!(s, "root {}", network.root);
    let _ = writeln!(s, "impedance pu\n\n[nodes]\n# id p_kw q_kvar v_min v_max role zone");
    for n in &network.nodes {
        let zone = network.zone_of(n.id).map_or("-".to_string(), |z| z.to_string());
        let _ = writeln!(s, "{} {} {} {} {} {} {}", n.id, n.load_p, n.load_q, n.v_min, n.v_max, n.role.as_str(), zone);
    }
    let _ = writeln!(s, "\n[lines]\n# from to r_pu x_pu current_limit_pu flow_limit_kva");
    for l in &network.lines {
        let _ = writeln!(s, "{} {} {} {} {} {}", l.from, l.to, l.r, l.x, l.current_limit, l.flow_limit);
    }
    let _ = writeln!(s, "\n[generators]\n# node kind p_min_kw p_max_kw q_min_kvar q_max_kvar cost_per_mwh");
    for g in &network.generators {
        let _ =
            writeln!(s, "{} {} {} {} {} {} {}", g.node, g.kind.as_str(), g.p_min, g.p_max, g.q_min, g.q_max, g.cost);
    }
    s
}

enum Column {
    Label,
    Load(Option<NodeId>),
    Pv(Option<NodeId>),
    Lmp,
}

/// Parses a profile file and expands it to `interval_minutes` resolution.
pub fn parse_profiles(
    text: &str,
    file: &str,
    network: &Network,
    interval_minutes: u32,
    fit: f64,
    voll: f64,
) -> Result<Profiles, LoadError> {
    let mut step = None;
    let mut columns: Option<Vec<Column>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ix, raw) in text.lines().enumerate() {
        let ln = ix + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        let tok: Vec<&str> = body.split_whitespace().collect();
        match tok[0] {
            "step_minutes" => {
                if tok.len() != 2 {
                    return Err(LoadError::parse(file, ln, "step_minutes takes one value"));
                }
                step = Some(tok[1].parse::<u32>().map_err(|_| {
                    LoadError::parse(file, ln, format!("field `step_minutes`: `{}` is not an integer", tok[1]))
                })?);
            }
            "columns" => {
                let mut cols = Vec::new();
                for c in &tok[1..] {
                    let node_of = |s: &str| -> Result<NodeId, LoadError> {
                        let n = NodeId(id(file, ln, c, s)?);
                        network.index_of(n).map(|_| n).ok_or_else(|| {
                            LoadError::parse(file, ln, format!("column `{c}` references unknown node {n}"))
                        })
                    };
                    cols.push(match *c {
                        "hour" | "t" => Column::Label,
                        "load" => Column::Load(None),
                        "pv" => Column::Pv(None),
                        "lmp" => Column::Lmp,
                        s if s.starts_with("load@") => Column::Load(Some(node_of(&s[5..])?)),
                        s if s.starts_with("pv@") => Column::Pv(Some(node_of(&s[3..])?)),
                        other => return Err(LoadError::parse(file, ln, format!("unknown column `{other}`"))),
                    });
                }
                if !cols.iter().any(|c| matches!(c, Column::Lmp)) {
                    return Err(LoadError::parse(file, ln, "an `lmp` column is required"));
                }
                columns = Some(cols);
            }
            _ => {
                let cols = columns
                    .as_ref()
                    .ok_or_else(|| LoadError::parse(file, ln, "data row before `columns` directive"))?;
                if tok.len() != cols.len() {
                    return Err(LoadError::parse(
                        file,
                        ln,
                        format!("expected {} columns, found {}", cols.len(), tok.len()),
                    ));
                }
                let mut vals = Vec::with_capacity(tok.len());
                for (k, t) in tok.iter().enumerate() {
                    vals.push(num(file, ln, &format!("column {}", k + 1), t)?);
                }
                rows.push(vals);
            }
        }
    }
    let cols = columns.ok_or_else(|| LoadError::parse(file, 0, "missing `columns` directive"))?;
    let step = step.unwrap_or(interval_minutes);
    if interval_minutes == 0 || step == 0 || step % interval_minutes != 0 {
        return Err(LoadError::parse(
            file,
            0,
            format!("step_minutes {step} is not a multiple of the interval length {interval_minutes}"),
        ));
    }
    let repeat = (step / interval_minutes) as usize;
    let n_nodes = network.node_count();
    let pv_nodes: Vec<NodeId> =
        network.generators.iter().filter(|g| g.kind == GeneratorKind::PvProsumer).map(|g| g.node).collect();

    let mut load_multiplier = Vec::new();
    let mut pv_fraction: BTreeMap<NodeId, Vec<f64>> = pv_nodes.iter().map(|n| (*n, Vec::new())).collect();
    let mut lmp = Vec::new();
    for row in &rows {
        let mut loads = vec![1.0; n_nodes];
        let mut pv: BTreeMap<NodeId, f64> = pv_nodes.iter().map(|n| (*n, 0.0)).collect();
        // Defaults first so per-node overrides win regardless of column order.
        for (c, v) in cols.iter().zip(row) {
            match c {
                Column::Load(None) => loads.iter_mut().for_each(|m| *m = *v),
                Column::Pv(None) => pv.values_mut().for_each(|f| *f = *v),
                _ => {}
            }
        }
        let mut price = 0.0;
        for (c, v) in cols.iter().zip(row) {
            match c {
                Column::Load(Some(n)) => loads[network.index_of(*n).expect("checked")] = *v,
                Column::Pv(Some(n)) => {
                    pv.insert(*n, *v);
                }
                Column::Lmp => price = *v,
                _ => {}
            }
        }
        for _ in 0..repeat {
            load_multiplier.push(loads.clone());
            for (n, f) in &pv {
                pv_fraction.entry(*n).or_default().push(*f);
            }
            lmp.push(price);
        }
    }
    let profiles = Profiles { interval_minutes, load_multiplier, pv_fraction, lmp, fit, voll };
    profiles.validate(network)?;
    Ok(profiles)
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

/// Loads a scenario config and the feeder/profile files it names (resolved
/// relative to the config's directory), and validates everything together.
pub fn load_scenario(path: &Path) -> Result<(Network, Profiles, ScenarioConfig), LoadError> {
    let text = read(path)?;
    let file = path.display().to_string();
    let config = ScenarioConfig::from_toml(&text, &file)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let feeder_path = dir.join(&config.feeder);
    let profile_path = dir.join(&config.profiles);
    let feeder_text = read(&feeder_path)?;
    let profile_text = read(&profile_path)?;
    assemble(
        &config,
        &feeder_text,
        &feeder_path.display().to_string(),
        &profile_text,
        &profile_path.display().to_string(),
    )
    .map(|(n, p)| (n, p, config))
}

/// Builds the network and profiles for `config` from already-read file contents.
pub fn assemble(
    config: &ScenarioConfig,
    feeder_text: &str,
    feeder_file: &str,
    profile_text: &str,
    profile_file: &str,
) -> Result<(Network, Profiles), LoadError> {
    let mut network = parse_feeder(feeder_text, feeder_file)?;
    if let Some(zones) = config.zone_map()? {
        network = network.with_zones(zones)?;
    }
    let profiles =
        parse_profiles(profile_text, profile_file, &network, config.interval_minutes, config.fit, config.voll)?;
    if profiles.interval_count() < config.horizon {
        return Err(ValidationError::Profile(format!(
            "{} intervals of {} min do not cover the {}-interval horizon",
            profiles.interval_count(),
            config.interval_minutes,
            config.horizon
        ))
        .into());
    }
    config.validate(&network)?;
    Ok((network, profiles))
}
