//! Shortest paths over the undirected road graph.
//!
//! Costs are non-negative integers (meters for the geometric weighting,
//! scaled integers for alpha weightings), so optimality comparisons are
//! exact. Tie-breaking is deterministic: among equal-cost paths the one
//! whose predecessor node index is smaller wins, applied recursively
//! through predecessor selection.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::{EdgeId, NodeId, RoadNetwork};

/// A walk in the network: `nodes.len() == edges.len() + 1`, except for the
/// empty walk (a degenerate s = t query), where both are empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeId>,
}

impl Walk {
    pub fn empty() -> Walk {
        Walk { nodes: Vec::new(), edges: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn start(&self) -> Option<NodeId> {
        self.nodes.first().copied()
    }

    pub fn end(&self) -> Option<NodeId> {
        self.nodes.last().copied()
    }

    pub fn length_m(&self, net: &RoadNetwork) -> u64 {
        self.edges.iter().map(|&e| net.edge(e).length_m).sum()
    }

    /// Checks that consecutive edges connect through the node sequence.
    pub fn validate(&self, net: &RoadNetwork) -> Result<(), WalkError> {
        if self.nodes.is_empty() && self.edges.is_empty() {
            return Ok(());
        }
        if self.nodes.len() != self.edges.len() + 1 {
            return Err(WalkError::LengthMismatch);
        }
        for (i, &e) in self.edges.iter().enumerate() {
            let edge = net.edge(e);
            let (u, v) = (self.nodes[i], self.nodes[i + 1]);
            let fits = (edge.a == u && edge.b == v) || (edge.a == v && edge.b == u);
            if !fits {
                return Err(WalkError::NotContiguous { position: i });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WalkError {
    #[error("walk node count does not match edge count")]
    LengthMismatch,
    #[error("edge at position {position} does not connect the adjacent nodes")]
    NotContiguous { position: usize },
}

#[derive(Clone, Debug)]
pub struct PathResult {
    pub walk: Walk,
    pub cost: u64,
}

/// Dijkstra between two nodes. Returns `None` when `t` is unreachable from
/// `s`; `s == t` yields the empty walk at cost zero.
pub fn shortest_path(
    net: &RoadNetwork,
    cost: impl Fn(EdgeId) -> u64,
    s: NodeId,
    t: NodeId,
) -> Option<PathResult> {
    if s == t {
        return Some(PathResult { walk: Walk::empty(), cost: 0 });
    }
    let (dist, pred) = run_dijkstra(net, &cost, s, Some(t));
    let total = dist[t.0 as usize];
    if total == u64::MAX {
        return None;
    }
    let mut nodes = vec![t];
    let mut edges = Vec::new();
    let mut cur = t;
    while cur != s {
        let (pn, pe) = pred[cur.0 as usize].expect("reachable node has a predecessor");
        edges.push(pe);
        nodes.push(pn);
        cur = pn;
    }
    nodes.reverse();
    edges.reverse();
    Some(PathResult { walk: Walk { nodes, edges }, cost: total })
}

/// One-to-all distances from `s`; `u64::MAX` marks unreachable nodes.
pub fn shortest_distances(net: &RoadNetwork, cost: impl Fn(EdgeId) -> u64, s: NodeId) -> Vec<u64> {
    run_dijkstra(net, &cost, s, None).0
}

#[allow(clippy::type_complexity)]
fn run_dijkstra(
    net: &RoadNetwork,
    cost: &impl Fn(EdgeId) -> u64,
    s: NodeId,
    target: Option<NodeId>,
) -> (Vec<u64>, Vec<Option<(NodeId, EdgeId)>>) {
    let n = net.node_count();
    let mut dist = vec![u64::MAX; n];
    let mut pred: Vec<Option<(NodeId, EdgeId)>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::new();
    dist[s.0 as usize] = 0;
    heap.push(Reverse((0, s.0)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if settled[u as usize] {
            continue;
        }
        settled[u as usize] = true;
        if target == Some(NodeId(u)) {
            break;
        }
        for &e in net.incident_edges(NodeId(u)) {
            let v = net.other_endpoint(e, NodeId(u));
            let vc = v.0 as usize;
            let cand = d.saturating_add(cost(e));
            if cand < dist[vc] {
                dist[vc] = cand;
                pred[vc] = Some((NodeId(u), e));
                heap.push(Reverse((cand, v.0)));
            } else if cand == dist[vc] && cand != u64::MAX {
                // equal-cost tie: keep the smaller predecessor, then edge
                if let Some((pn, pe)) = pred[vc] {
                    if (u, e.0) < (pn.0, pe.0) {
                        pred[vc] = Some((NodeId(u), e));
                    }
                }
            }
        }
    }
    (dist, pred)
}

/// Sum of per-edge real-valued costs along a walk; validates contiguity.
pub fn path_cost(
    net: &RoadNetwork,
    cost: impl Fn(EdgeId) -> f64,
    walk: &Walk,
) -> Result<f64, WalkError> {
    walk.validate(net)?;
    Ok(walk.edges.iter().map(|&e| cost(e)).sum())
}
