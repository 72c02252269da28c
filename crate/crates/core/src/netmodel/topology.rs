//! Radial (tree) checks and the cached parent/children structure.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use super::types::{Line, Node, NodeId};

/// One reason an edge set fails to be a spanning tree rooted at the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateNode(NodeId),
    UnknownRoot(NodeId),
    UnknownEndpoint { line: String, node: NodeId },
    SelfLoop(NodeId),
    EdgeCount { nodes: usize, lines: usize },
    Cycle { a: NodeId, b: NodeId },
    MultiParent { node: NodeId, parents: Vec<NodeId> },
    Disconnected(Vec<NodeId>),
    Misoriented { line: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode(n) => write!(f, "node {n} declared twice"),
            Violation::UnknownRoot(n) => write!(f, "root {n} is not a declared node"),
            Violation::UnknownEndpoint { line, node } => {
                write!(f, "line {line} references unknown node {node}")
            }
            Violation::SelfLoop(n) => write!(f, "self-loop at node {n}"),
            Violation::EdgeCount { nodes, lines } => {
                write!(f, "{lines} lines for {nodes} nodes (a tree needs exactly {})", nodes.saturating_sub(1))
            }
            Violation::Cycle { a, b } => write!(f, "cycle detected between nodes {a} and {b}"),
            Violation::MultiParent { node, parents } => {
                let ps: Vec<String> = parents.iter().map(|p| p.to_string()).collect();
                write!(f, "node {node} has multiple parents ({})", ps.join(", "))
            }
            Violation::Disconnected(ns) => {
                let ps: Vec<String> = ns.iter().map(|p| p.to_string()).collect();
                write!(f, "nodes unreachable from root: {}", ps.join(", "))
            }
            Violation::Misoriented { line } => {
                write!(f, "line {line} points toward the root")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Topology {
    pub index: HashMap<NodeId, usize>,
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub upstream_line: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub depth: Vec<usize>,
    pub order: Vec<usize>,
}

impl Topology {
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }
}

/// Checks that `lines` form a spanning tree over `nodes` rooted at `root`,
/// with every line oriented away from the root.
///
/// All violations found are reported, not just the first.
pub fn validate_radial(nodes: &[Node], lines: &[Line], root: NodeId) -> Result<(), Vec<Violation>> {
    build(nodes, lines, root).map(|_| ())
}

pub(crate) fn build(nodes: &[Node], lines: &[Line], root: NodeId) -> Result<Topology, Vec<Violation>> {
    let mut violations = Vec::new();
    let mut index = HashMap::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        if index.insert(n.id, i).is_some() {
            violations.push(Violation::DuplicateNode(n.id));
        }
    }
    let Some(&root_idx) = index.get(&root) else {
        violations.push(Violation::UnknownRoot(root));
        return Err(violations);
    };

    let n = nodes.len();
    let mut endpoints = Vec::with_capacity(lines.len());
    for l in lines {
        let a = index.get(&l.from).copied();
        let b = index.get(&l.to).copied();
        for (id, ix) in [(l.from, a), (l.to, b)] {
            if ix.is_none() {
                violations.push(Violation::UnknownEndpoint { line: l.label(), node: id });
            }
        }
        if let (Some(a), Some(b)) = (a, b) {
            if a == b {
                violations.push(Violation::SelfLoop(l.from));
            } else {
                endpoints.push(Some((a, b)));
                continue;
            }
        }
        endpoints.push(None);
    }

    if lines.len() + 1 != n {
        violations.push(Violation::EdgeCount { nodes: n, lines: lines.len() });
    }

    // Union-find for cycle detection.
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    for (a, b) in endpoints.iter().flatten().copied() {
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        if ra == rb {
            violations.push(Violation::Cycle { a: nodes[a].id, b: nodes[b].id });
        } else {
            uf[ra] = rb;
        }
    }

    let mut parents_of: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (a, b) in endpoints.iter().flatten().copied() {
        parents_of[b].push(nodes[a].id);
    }
    for (i, ps) in parents_of.iter().enumerate() {
        if ps.len() > 1 {
            violations.push(Violation::MultiParent { node: nodes[i].id, parents: ps.clone() });
        }
    }

    // Undirected BFS from the root gives reachability and the orientation check.
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, e) in endpoints.iter().enumerate() {
        if let Some((a, b)) = *e {
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
    }
    let mut parent = vec![None; n];
    let mut upstream_line = vec![None; n];
    let mut depth = vec![0usize; n];
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([root_idx]);
    seen[root_idx] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, k) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some(u);
                upstream_line[v] = Some(k);
                depth[v] = depth[u] + 1;
                if endpoints[k] != Some((u, v)) {
                    violations.push(Violation::Misoriented { line: lines[k].label() });
                }
                queue.push_back(v);
            }
        }
    }
    let unreachable: Vec<NodeId> = (0..n).filter(|&i| !seen[i]).map(|i| nodes[i].id).collect();
    if !unreachable.is_empty() {
        violations.push(Violation::Disconnected(unreachable));
    }

    if !violations.is_empty() {
        return Err(violations);
    }

    let mut children = vec![Vec::new(); n];
    for &v in &order {
        if let Some(p) = parent[v] {
            children[p].push(v);
        }
    }
    Ok(Topology { index, root: root_idx, parent, upstream_line, children, depth, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::AgentRole;

    fn nodes(ids: &[u32]) -> Vec<Node> {
        ids.iter()
            .map(|&i| Node { id: NodeId(i), load_p: 0.0, load_q: 0.0, v_min: 0.9, v_max: 1.1, role: AgentRole::None })
            .collect()
    }

    fn line(a: u32, b: u32) -> Line {
        Line { from: NodeId(a), to: NodeId(b), r: 0.01, x: 0.01, current_limit: 1.0, flow_limit: 1000.0 }
    }

    #[test]
    fn test_star_is_radial() {
        let ns = nodes(&[1, 2, 3, 4]);
        let ls = vec![line(1, 2), line(1, 3), line(1, 4)];
        assert!(validate_radial(&ns, &ls, NodeId(1)).is_ok());
    }

    #[test]
    fn test_triangle_reports_cycle() {
        let ns = nodes(&[1, 2, 3]);
        let ls = vec![line(1, 2), line(2, 3), line(3, 1)];
        let v = validate_radial(&ns, &ls, NodeId(1)).unwrap_err();
        assert!(v.iter().any(|x| matches!(x, Violation::Cycle { .. })), "{v:?}");
        assert!(v.iter().any(|x| matches!(x, Violation::EdgeCount { .. })));
    }

    #[test]
    fn test_disconnected_component() {
        let ns = nodes(&[1, 2, 3, 4]);
        let ls = vec![line(1, 2), line(3, 4)];
        let v = validate_radial(&ns, &ls, NodeId(1)).unwrap_err();
        assert!(v.contains(&Violation::Disconnected(vec![NodeId(3), NodeId(4)])), "{v:?}");
    }

    #[test]
    fn test_multi_parent() {
        let ns = nodes(&[1, 2, 3, 4]);
        let ls = vec![line(1, 2), line(1, 3), line(2, 4), line(3, 4)];
        let v = validate_radial(&ns, &ls, NodeId(1)).unwrap_err();
        assert!(v.iter().any(|x| matches!(x, Violation::MultiParent { node: NodeId(4), .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::Cycle { .. })));
    }

    #[test]
    fn test_misoriented_line() {
        let ns = nodes(&[1, 2, 3]);
        let ls = vec![line(1, 2), line(3, 2)];
        let v = validate_radial(&ns, &ls, NodeId(1)).unwrap_err();
        assert_eq!(
            v,
            vec![
                Violation::MultiParent { node: NodeId(2), parents: vec![NodeId(1), NodeId(3)] },
                Violation::Misoriented { line: "3-2".into() },
            ]
        );
    }

    #[test]
    fn test_cycle_message() {
        let v = Violation::Cycle { a: NodeId(7), b: NodeId(21) };
        assert_eq!(v.to_string(), "cycle detected between nodes 7 and 21");
    }
}
