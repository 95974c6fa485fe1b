//! Road-network graph model: loading and filtering, shortest paths, and the
//! favored/unfavored edge weightings.
//!
//! The graph is undirected (every edge is traversable both ways) and edge
//! lengths are stored as integer meters, rounded half-up at load time.
//! Weighted costs for a grid alpha `p/q` are compared as exact scaled
//! integers `q * w = p * w1 + (q - p) * w2`, which keeps optimality checks
//! free of floating-point ties.

mod dijkstra;
mod load;

pub use dijkstra::{path_cost, shortest_distances, shortest_path, PathResult, Walk, WalkError};
pub use load::{load_network, NetworkError, NetworkSource};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Case-normalized road-type tag. Unrecognized input tags map to themselves,
/// never silently to `unknown`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoadType(String);

impl RoadType {
    pub fn new(tag: &str) -> Self {
        RoadType(tag.trim().to_ascii_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RoadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RoadType {
    fn from(tag: &str) -> Self {
        RoadType::new(tag)
    }
}

/// Index of a node within its [`RoadNetwork`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

/// Index of an edge within its [`RoadNetwork`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

#[derive(Clone, Debug)]
pub struct Node {
    pub ext_id: String,
    pub lon: f64,
    pub lat: f64,
    pub ele: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub ext_id: String,
    pub a: NodeId,
    pub b: NodeId,
    /// Integer meters, rounded half-up; always >= 1.
    pub length_m: u64,
    pub type_id: u16,
    /// Polyline from `a` to `b`, `[lon, lat]` pairs, at least the endpoints.
    pub geometry: Vec<[f64; 2]>,
}

/// Immutable undirected road graph. Safe to share across threads for
/// concurrent read-only queries.
#[derive(Clone, Debug)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<EdgeId>>,
    types: Vec<RoadType>,
    ext_node_index: HashMap<String, NodeId>,
    ext_edge_index: HashMap<String, EdgeId>,
}

impl RoadNetwork {
    /// Builds a network from explicit parts. Node tuples are
    /// `(ext_id, lon, lat, ele)`; edge tuples are
    /// `(ext_id, node index a, node index b, length_m, road_type)`.
    /// Edge geometry defaults to the straight segment between the endpoints.
    pub fn build(
        nodes: Vec<(String, f64, f64, Option<f64>)>,
        edges: Vec<(String, usize, usize, u64, RoadType)>,
    ) -> Result<RoadNetwork, NetworkError> {
        let nodes: Vec<Node> = nodes
            .into_iter()
            .map(|(ext_id, lon, lat, ele)| Node { ext_id, lon, lat, ele })
            .collect();
        let mut net = RoadNetwork {
            adjacency: vec![Vec::new(); nodes.len()],
            nodes,
            edges: Vec::new(),
            types: Vec::new(),
            ext_node_index: HashMap::new(),
            ext_edge_index: HashMap::new(),
        };
        for (i, n) in net.nodes.iter().enumerate() {
            net.ext_node_index.insert(n.ext_id.clone(), NodeId(i as u32));
        }
        for (ext_id, a, b, length_m, road_type) in edges {
            if a >= net.nodes.len() || b >= net.nodes.len() {
                return Err(NetworkError::MissingNode { edge: ext_id });
            }
            net.push_edge(ext_id, NodeId(a as u32), NodeId(b as u32), length_m, road_type, None)?;
        }
        Ok(net)
    }

    pub(crate) fn push_edge(
        &mut self,
        ext_id: String,
        a: NodeId,
        b: NodeId,
        length_m: u64,
        road_type: RoadType,
        geometry: Option<Vec<[f64; 2]>>,
    ) -> Result<EdgeId, NetworkError> {
        if a == b {
            return Err(NetworkError::DegenerateEdge { edge: ext_id });
        }
        if length_m == 0 {
            return Err(NetworkError::NonPositiveLength { edge: ext_id });
        }
        let type_id = match self.types.iter().position(|t| *t == road_type) {
            Some(i) => i as u16,
            None => {
                self.types.push(road_type);
                (self.types.len() - 1) as u16
            }
        };
        let geometry = geometry.unwrap_or_else(|| {
            let na = &self.nodes[a.0 as usize];
            let nb = &self.nodes[b.0 as usize];
            vec![[na.lon, na.lat], [nb.lon, nb.lat]]
        });
        let id = EdgeId(self.edges.len() as u32);
        self.ext_edge_index.insert(ext_id.clone(), id);
        self.edges.push(Edge { ext_id, a, b, length_m, type_id, geometry });
        self.adjacency[a.0 as usize].push(id);
        self.adjacency[b.0 as usize].push(id);
        Ok(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0 as usize]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges.iter().enumerate().map(|(i, e)| (EdgeId(i as u32), e))
    }

    pub fn incident_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.adjacency[node.0 as usize]
    }

    pub fn road_type(&self, edge: EdgeId) -> &RoadType {
        &self.types[self.edge(edge).type_id as usize]
    }

    pub fn road_types(&self) -> &[RoadType] {
        &self.types
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn node_by_ext_id(&self, ext_id: &str) -> Option<NodeId> {
        self.ext_node_index.get(ext_id).copied()
    }

    pub fn edge_by_ext_id(&self, ext_id: &str) -> Option<EdgeId> {
        self.ext_edge_index.get(ext_id).copied()
    }

    /// The endpoint of `edge` that is not `from`.
    pub fn other_endpoint(&self, edge: EdgeId, from: NodeId) -> NodeId {
        let e = self.edge(edge);
        if e.a == from {
            e.b
        } else {
            e.a
        }
    }

    pub fn total_length_m(&self) -> u64 {
        self.edges.iter().map(|e| e.length_m).sum()
    }

    /// Nearest node to a `[lon, lat]` position, with its distance in meters.
    /// Returns `None` on an empty network. Ties go to the smaller node index.
    pub fn nearest_node(&self, p: [f64; 2]) -> Option<(NodeId, f64)> {
        let mut best: Option<(NodeId, f64)> = None;
        for (id, n) in self.nodes() {
            let d = crate::geom::haversine_m(p, [n.lon, n.lat]);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((id, d));
            }
        }
        best
    }
}

/// Binary partition of the edge set into favored and unfavored edges,
/// derived purely from each edge's road type.
#[derive(Clone, Debug)]
pub struct EdgeClassification {
    favored_types: BTreeSet<RoadType>,
    favored_by_type: Vec<bool>,
}

impl EdgeClassification {
    pub fn new(net: &RoadNetwork, favored_types: BTreeSet<RoadType>) -> EdgeClassification {
        let favored_by_type = net
            .road_types()
            .iter()
            .map(|t| favored_types.contains(t))
            .collect();
        EdgeClassification { favored_types, favored_by_type }
    }

    pub fn favored_types(&self) -> &BTreeSet<RoadType> {
        &self.favored_types
    }

    pub fn is_favored(&self, net: &RoadNetwork, edge: EdgeId) -> bool {
        self.favored_by_type
            .get(net.edge(edge).type_id as usize)
            .copied()
            .unwrap_or(false)
    }
}

/// A rational trade-off value `numer/denom` on the alpha grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAlpha {
    pub numer: u32,
    pub denom: u32,
}

impl GridAlpha {
    pub fn new(numer: u32, denom: u32) -> GridAlpha {
        assert!(denom > 0 && numer <= denom, "alpha must lie in [0, 1]");
        GridAlpha { numer, denom }
    }

    pub fn value(&self) -> f64 {
        f64::from(self.numer) / f64::from(self.denom)
    }

    /// Exact test for alpha <= 0.5.
    pub fn le_half(&self) -> bool {
        2 * self.numer <= self.denom
    }

    /// Exact test for alpha < 0.5.
    pub fn lt_half(&self) -> bool {
        2 * self.numer < self.denom
    }
}

impl PartialOrd for GridAlpha {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GridAlpha {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // cross-multiplied exact comparison
        (u64::from(self.numer) * u64::from(other.denom))
            .cmp(&(u64::from(other.numer) * u64::from(self.denom)))
    }
}

impl fmt::Display for GridAlpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Component weightings of an edge under a classification: `w1` carries the
/// length of favored edges, `w2` the length of unfavored ones, so
/// `w1 + w2 = length` for every edge.
pub fn component_weights(
    net: &RoadNetwork,
    classification: &EdgeClassification,
    edge: EdgeId,
) -> (u64, u64) {
    let len = net.edge(edge).length_m;
    if classification.is_favored(net, edge) {
        (len, 0)
    } else {
        (0, len)
    }
}

/// Edge weighting `w(e) = alpha * length(e)` on favored edges and
/// `(1 - alpha) * length(e)` on unfavored ones.
#[derive(Clone, Debug)]
pub struct Weighting {
    pub alpha: GridAlpha,
    pub classification: EdgeClassification,
}

impl Weighting {
    pub fn new(alpha: GridAlpha, classification: EdgeClassification) -> Weighting {
        Weighting { alpha, classification }
    }

    /// Real-valued weight of an edge in meters-equivalent cost.
    pub fn edge_weight(&self, net: &RoadNetwork, edge: EdgeId) -> f64 {
        let (w1, w2) = component_weights(net, &self.classification, edge);
        self.alpha.value() * w1 as f64 + (1.0 - self.alpha.value()) * w2 as f64
    }

    /// Scaled integer cost `denom * w(e)`; exact, preserves all argmins of
    /// the real weighting.
    pub fn scaled_cost(&self, net: &RoadNetwork, edge: EdgeId) -> u64 {
        let len = net.edge(edge).length_m;
        if self.classification.is_favored(net, edge) {
            u64::from(self.alpha.numer) * len
        } else {
            u64::from(self.alpha.denom - self.alpha.numer) * len
        }
    }

    /// The scaling denominator that converts [`Self::scaled_cost`] sums back
    /// to meters-equivalent cost.
    pub fn scale(&self) -> u32 {
        self.alpha.denom
    }
}
