//! Feeder and profile ingestion, radial validation and ancestor queries.

mod common;

use std::collections::BTreeMap;

use p2pgrid::netmodel::{
    parse_feeder, parse_profiles, validate_radial, write_feeder, AgentRole, Generator, GeneratorKind, Line, Node,
    Violation,
};
use p2pgrid::{LoadError, Network, NodeId, ValidationError, ZoneId};
use proptest::prelude::*;

fn feeder_text() -> String {
    std::fs::read_to_string(common::data_dir().join("ieee33.feeder")).unwrap()
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

#[test]
fn bundled_feeder_has_33_nodes_32_lines() {
    let net = common::feeder33();
    assert_eq!(net.node_count(), 33);
    assert_eq!(net.lines.len(), 32);
    assert_eq!(net.root, NodeId(1));
    assert!(validate_radial(&net.nodes, &net.lines, net.root).is_ok());
}

#[test]
fn bundled_feeder_additions() {
    let net = common::feeder33();
    let dg: Vec<_> = net.generators.iter().filter(|g| g.kind == GeneratorKind::UtilityDg).collect();
    assert_eq!(dg.len(), 1);
    assert_eq!(dg[0].node, NodeId(1));
    assert_eq!(dg[0].p_max, 2500.0);
    assert_eq!(dg[0].cost, 50.0);
    let mut pv: Vec<_> =
        net.generators.iter().filter(|g| g.kind == GeneratorKind::PvProsumer).map(|g| (g.node.0, g.p_max)).collect();
    pv.sort_by_key(|p| p.0);
    assert_eq!(pv, vec![(3, 1000.0), (18, 1000.0), (33, 1000.0)]);
    for id in [3, 18, 33] {
        assert_eq!(net.node(NodeId(id)).unwrap().role, AgentRole::Prosumer);
    }
}

#[test]
fn bundled_feeder_per_unit_conversion() {
    let net = common::feeder33();
    let base_ohm = 12.66 * 12.66 / 10.0;
    assert!((net.base_ohm() - base_ohm).abs() < 1e-12);
    assert_eq!(net.base_kw(), 10_000.0);
    let l = &net.lines[0];
    assert_eq!((l.from, l.to), (NodeId(1), NodeId(2)));
    assert!((l.r - 0.0922 / base_ohm).abs() < 1e-15);
    assert!((l.x - 0.0470 / base_ohm).abs() < 1e-15);
}

#[test]
fn default_zoning() {
    let net = common::feeder33();
    for (node, zone) in [(2, 1), (18, 1), (19, 2), (25, 2), (26, 3), (33, 3)] {
        assert_eq!(net.zone_of(NodeId(node)), Some(ZoneId(zone)), "node {node}");
    }
}

#[test]
fn two_node_feeder_has_one_line() {
    let net = common::two_bus(0.01, 0.01, 100.0, None);
    assert_eq!(net.node_count(), 2);
    assert_eq!(net.lines.len(), 1);
}

#[test]
fn duplicated_line_is_not_a_tree() {
    let text = feeder_text().replace("4     5   0.3811", "4     5   0.3811  0.1941  1.0  10000\n5     6   0.3811");
    let err = parse_feeder(&text, "dup").unwrap_err();
    assert!(matches!(err, LoadError::Validation(ValidationError::NotATree(_))), "{err}");
    assert!(err.to_string().contains("not a tree"), "{err}");
    assert!(!err.is_parse());
}

#[test]
fn cycle_is_reported_with_both_ends() {
    let text = feeder_text().replace("[generators]", "7 21 0.1 0.1 1.0 5000\n\n[generators]");
    let err = parse_feeder(&text, "cyc").unwrap_err().to_string();
    assert!(err.contains("cycle detected between nodes"), "{err}");
}

#[test]
fn parse_error_names_line_and_field() {
    let text = feeder_text().replace("2     100   60", "2     abc   60");
    match parse_feeder(&text, "bad.feeder").unwrap_err() {
        LoadError::Parse { file, line, message } => {
            assert_eq!(file, "bad.feeder");
            assert_eq!(line, 12);
            assert!(message.contains("p_kw"), "{message}");
        }
        e => panic!("expected parse error, got {e}"),
    }
}

#[test]
fn unknown_generator_node_is_rejected() {
    let text = feeder_text().replace("33    pv", "99    pv");
    let err = parse_feeder(&text, "gen").unwrap_err();
    assert!(matches!(err, LoadError::Validation(_)), "{err}");
}

#[test]
fn bad_voltage_bounds_are_rejected() {
    let text = feeder_text().replace("5     60    30      0.90   1.05", "5     60    30      1.10   1.05");
    assert!(parse_feeder(&text, "v").is_err());
}

// ---------------------------------------------------------------------------
// Ancestors
// ---------------------------------------------------------------------------

#[test]
fn ancestor_of_feeder_head_is_root() {
    let net = common::feeder33();
    assert_eq!(net.ancestor(NodeId(2)).unwrap(), NodeId(1));
    assert_eq!(net.ancestor(NodeId(19)).unwrap(), NodeId(2));
    assert_eq!(net.ancestor(NodeId(26)).unwrap(), NodeId(6));
}

#[test]
fn ancestor_of_root_is_an_error() {
    let net = common::feeder33();
    assert!(matches!(net.ancestor(NodeId(1)), Err(ValidationError::RootHasNoAncestor(NodeId(1)))));
    assert!(matches!(net.ancestor(NodeId(99)), Err(ValidationError::UnknownNode(NodeId(99)))));
}

#[test]
fn ancestor_of_leaf_in_two_node_net() {
    let net = common::two_bus(0.01, 0.01, 100.0, None);
    assert_eq!(net.ancestor(NodeId(2)).unwrap(), net.root);
}

// ---------------------------------------------------------------------------
// Round trip
// ---------------------------------------------------------------------------

#[test]
fn bundled_feeder_round_trips() {
    let net = common::feeder33();
    let again = parse_feeder(&write_feeder(&net), "rt").unwrap();
    assert_eq!(net, again);
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

fn day_profile() -> String {
    std::fs::read_to_string(common::data_dir().join("day.profile")).unwrap()
}

#[test]
fn hourly_profile_steps_to_quarter_hours() {
    let net = common::feeder33();
    let p = parse_profiles(&day_profile(), "day", &net, 15, 20.0, 1000.0).unwrap();
    assert_eq!(p.interval_count(), 96);
    assert_eq!(p.interval_hours(), 0.25);
    assert!(p.lmp[0..4].iter().all(|&x| x == 26.0));
    assert_eq!(p.lmp[4], 24.5);
    assert_eq!(p.load_multiplier[1][5], 0.62);
    let pv18 = &p.pv_fraction[&NodeId(18)];
    assert_eq!(pv18[0], 0.0);
    assert_eq!(pv18[24], 0.03);
    // Constant power factor under scaling.
    let i = net.index_of(NodeId(30)).unwrap();
    let (pl, ql) = p.load(&net, 0, i);
    assert!((ql / pl - 3.0).abs() < 1e-12);
}

#[test]
fn profile_step_must_divide() {
    let net = common::feeder33();
    assert!(parse_profiles(&day_profile(), "day", &net, 7, 20.0, 1000.0).is_err());
}

#[test]
fn voll_below_costs_is_rejected() {
    let net = common::feeder33();
    let err = parse_profiles(&day_profile(), "day", &net, 15, 20.0, 10.0).unwrap_err();
    assert!(matches!(err, LoadError::Validation(ValidationError::Profile(_))), "{err}");
    assert!(err.to_string().contains("VOLL"), "{err}");
}

#[test]
fn pv_fraction_outside_unit_interval_is_rejected() {
    let net = common::feeder33();
    let text = day_profile().replacen("0.03", "1.30", 1);
    assert!(parse_profiles(&text, "day", &net, 15, 20.0, 1000.0).is_err());
}

// ---------------------------------------------------------------------------
// Properties over random trees
// ---------------------------------------------------------------------------

fn random_tree(parents: &[usize], r: &[f64]) -> Network {
    let n = parents.len() + 1;
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: NodeId(i as u32 + 1),
            load_p: if i == 0 { 0.0 } else { 10.0 * i as f64 },
            load_q: if i == 0 { 0.0 } else { 3.0 * i as f64 },
            v_min: 0.9,
            v_max: 1.1,
            role: if i % 3 == 1 { AgentRole::Prosumer } else { AgentRole::Consumer },
        })
        .collect();
    let lines: Vec<Line> = parents
        .iter()
        .enumerate()
        .map(|(k, &p)| Line {
            from: NodeId(p as u32 + 1),
            to: NodeId(k as u32 + 2),
            r: r[k],
            x: 0.5 * r[k] + 1e-4,
            current_limit: 4.0,
            flow_limit: 5000.0,
        })
        .collect();
    let gens = vec![Generator {
        node: NodeId(1),
        kind: GeneratorKind::GridRoot,
        p_min: 0.0,
        p_max: 1e4,
        q_min: -1e4,
        q_max: 1e4,
        cost: 0.0,
    }];
    let zones: BTreeMap<NodeId, ZoneId> = (0..n).map(|i| (NodeId(i as u32 + 1), ZoneId(1 + (i % 2) as u32))).collect();
    Network::new("rand", nodes, lines, gens, NodeId(1), 12.66, 10.0, zones).unwrap()
}

fn tree_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|m| {
        let parents: Vec<_> = (0..m).map(|k| 0..=k).collect();
        (parents, prop::collection::vec(1e-4f64..0.05, m))
    })
}

proptest! {
    #[test]
    fn random_trees_are_radial((parents, r) in tree_strategy()) {
        let net = random_tree(&parents, &r);
        prop_assert_eq!(net.lines.len(), net.node_count() - 1);
        prop_assert!(validate_radial(&net.nodes, &net.lines, net.root).is_ok());
        prop_assert_eq!(net.bfs_order().len(), net.node_count());
    }

    #[test]
    fn ancestor_chain_reaches_root((parents, r) in tree_strategy()) {
        let net = random_tree(&parents, &r);
        for node in &net.nodes {
            let mut cur = node.id;
            let mut steps = 0;
            while cur != net.root {
                cur = net.ancestor(cur).unwrap();
                steps += 1;
                prop_assert!(steps <= net.node_count());
            }
            prop_assert_eq!(steps, net.depth(net.index_of(node.id).unwrap()));
        }
    }

    #[test]
    fn feeder_round_trip((parents, r) in tree_strategy()) {
        let net = random_tree(&parents, &r);
        let again = parse_feeder(&write_feeder(&net), "rt").unwrap();
        prop_assert_eq!(net, again);
    }

    #[test]
    fn extra_edge_breaks_tree((parents, r) in tree_strategy(), a in 0usize..40, b in 0usize..40) {
        let net = random_tree(&parents, &r);
        let n = net.node_count();
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b);
        let mut lines = net.lines.clone();
        lines.push(Line { from: NodeId(a as u32 + 1), to: NodeId(b as u32 + 1), ..lines[0].clone() });
        let v = validate_radial(&net.nodes, &lines, net.root).unwrap_err();
        let counted = v.iter().any(|x| matches!(x, Violation::EdgeCount { .. }));
        prop_assert!(counted);
    }
}
