//! Network file parsing: GeoJSON FeatureCollections of LineStrings, or a
//! CSV node/edge list pair. Both loaders reject malformed input with the
//! offending edge or row named, reconcile declared lengths against geometry,
//! and drop forbidden road types plus any nodes left isolated.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::{EdgeId, NodeId, RoadNetwork, RoadType};
use crate::geom;

/// Endpoint coordinates are snapped onto a grid of this pitch to derive
/// node identities from GeoJSON geometry.
const SNAP_GRID_M: f64 = 0.1;

/// Declared edge lengths may deviate from the geometry's geodesic length by
/// at most this fraction.
const LENGTH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("network file is not valid GeoJSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("network file is not a FeatureCollection of LineStrings: {0}")]
    Format(String),
    #[error("edge {edge}: references missing node")]
    MissingNode { edge: String },
    #[error("edge {edge}: endpoints coincide")]
    DegenerateEdge { edge: String },
    #[error("edge {edge}: non-positive length after rounding to meters")]
    NonPositiveLength { edge: String },
    #[error("edge {edge}: declared length {declared_m} m deviates more than 1% from geometry length {geometry_m:.1} m")]
    LengthMismatch { edge: String, declared_m: f64, geometry_m: f64 },
    #[error("edge {edge}: duplicate edge id")]
    DuplicateEdge { edge: String },
    #[error("node {node}: duplicate node id")]
    DuplicateNode { node: String },
    #[error("csv row {row}: {message}")]
    CsvRow { row: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Where to load a network from.
#[derive(Clone, Debug)]
pub enum NetworkSource {
    GeoJson(PathBuf),
    Csv { nodes: PathBuf, edges: PathBuf },
}

/// Loads a road network, removing edges with forbidden road types and
/// dropping nodes left without incident edges.
pub fn load_network(
    source: &NetworkSource,
    forbidden_types: &BTreeSet<RoadType>,
) -> Result<RoadNetwork, NetworkError> {
    match source {
        NetworkSource::GeoJson(path) => {
            let text = read(path)?;
            RoadNetwork::from_geojson_str(&text, forbidden_types)
        }
        NetworkSource::Csv { nodes, edges } => {
            let nodes_text = read(nodes)?;
            let edges_text = read(edges)?;
            RoadNetwork::from_csv_strs(&nodes_text, &edges_text, forbidden_types)
        }
    }
}

fn read(path: &Path) -> Result<String, NetworkError> {
    std::fs::read_to_string(path).map_err(|source| NetworkError::Io { path: path.into(), source })
}

#[derive(Deserialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Feature>,
}

#[derive(Deserialize)]
struct Feature {
    geometry: Option<Geometry>,
    #[serde(default)]
    properties: Option<serde_json::Map<String, Value>>,
}

#[derive(Deserialize)]
struct Geometry {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Value,
}

struct RawEdge {
    ext_id: String,
    road_type: RoadType,
    declared_length_m: Option<f64>,
    geometry: Vec<[f64; 2]>,
}

impl RoadNetwork {
    /// Parses a GeoJSON FeatureCollection of LineString features with
    /// properties `road_type` (string, required) and `length_m` (number,
    /// optional). Node identities come from snapping endpoint coordinates
    /// onto a 0.1 m grid.
    pub fn from_geojson_str(
        text: &str,
        forbidden_types: &BTreeSet<RoadType>,
    ) -> Result<RoadNetwork, NetworkError> {
        let fc: FeatureCollection = serde_json::from_str(text)?;
        if fc.kind != "FeatureCollection" {
            return Err(NetworkError::Format(format!(
                "expected FeatureCollection, got {:?}",
                fc.kind
            )));
        }
        let mut raw = Vec::new();
        for (i, feature) in fc.features.into_iter().enumerate() {
            let geometry = feature
                .geometry
                .ok_or_else(|| NetworkError::Format(format!("feature {i}: missing geometry")))?;
            if geometry.kind != "LineString" {
                return Err(NetworkError::Format(format!(
                    "feature {i}: expected LineString, got {:?}",
                    geometry.kind
                )));
            }
            let coords = parse_linestring(&geometry.coordinates)
                .map_err(|m| NetworkError::Format(format!("feature {i}: {m}")))?;
            let props = feature.properties.unwrap_or_default();
            let ext_id = match props.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => format!("e{i}"),
            };
            let road_type = match props.get("road_type") {
                Some(Value::String(s)) => RoadType::new(s),
                _ => {
                    return Err(NetworkError::Format(format!(
                        "feature {i} ({ext_id}): missing road_type property"
                    )))
                }
            };
            let declared_length_m = match props.get("length_m") {
                None | Some(Value::Null) => None,
                Some(Value::Number(n)) => n.as_f64(),
                Some(_) => {
                    return Err(NetworkError::Format(format!(
                        "feature {i} ({ext_id}): length_m is not a number"
                    )))
                }
            };
            raw.push(RawEdge { ext_id, road_type, declared_length_m, geometry: coords });
        }
        assemble_snapped(raw, forbidden_types)
    }

    /// Parses the CSV pair `node_id,lon,lat[,ele]` and
    /// `edge_id,from_node,to_node,length_m,road_type`.
    pub fn from_csv_strs(
        nodes_csv: &str,
        edges_csv: &str,
        forbidden_types: &BTreeSet<RoadType>,
    ) -> Result<RoadNetwork, NetworkError> {
        let mut net = RoadNetwork {
            nodes: Vec::new(),
            edges: Vec::new(),
            adjacency: Vec::new(),
            types: Vec::new(),
            ext_node_index: HashMap::new(),
            ext_edge_index: HashMap::new(),
        };
        let mut reader = csv_reader(nodes_csv);
        for (i, record) in reader.records().enumerate() {
            let row = i + 2; // header is row 1
            let record = record?;
            if record.len() < 3 {
                return Err(NetworkError::CsvRow { row, message: "expected node_id,lon,lat[,ele]".into() });
            }
            let ext_id = record[0].trim().to_string();
            let lon = parse_coord(&record[1], "lon", row)?;
            let lat = parse_coord(&record[2], "lat", row)?;
            let ele = match record.get(3).map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(s.parse::<f64>().map_err(|_| NetworkError::CsvRow {
                    row,
                    message: format!("malformed ele {s:?}"),
                })?),
            };
            if net.ext_node_index.contains_key(&ext_id) {
                return Err(NetworkError::DuplicateNode { node: ext_id });
            }
            net.ext_node_index.insert(ext_id.clone(), NodeId(net.nodes.len() as u32));
            net.nodes.push(super::Node { ext_id, lon, lat, ele });
            net.adjacency.push(Vec::new());
        }
        let mut reader = csv_reader(edges_csv);
        for (i, record) in reader.records().enumerate() {
            let row = i + 2;
            let record = record?;
            if record.len() < 5 {
                return Err(NetworkError::CsvRow {
                    row,
                    message: "expected edge_id,from_node,to_node,length_m,road_type".into(),
                });
            }
            let ext_id = record[0].trim().to_string();
            let from = record[1].trim();
            let to = record[2].trim();
            let a = net
                .node_by_ext_id(from)
                .ok_or_else(|| NetworkError::MissingNode { edge: ext_id.clone() })?;
            let b = net
                .node_by_ext_id(to)
                .ok_or_else(|| NetworkError::MissingNode { edge: ext_id.clone() })?;
            let length: f64 = record[3].trim().parse().map_err(|_| NetworkError::CsvRow {
                row,
                message: format!("malformed length_m {:?}", &record[3]),
            })?;
            let road_type = RoadType::new(&record[4]);
            if forbidden_types.contains(&road_type) {
                continue;
            }
            if net.ext_edge_index.contains_key(&ext_id) {
                return Err(NetworkError::DuplicateEdge { edge: ext_id });
            }
            let length_m = round_length(length, &ext_id)?;
            net.push_edge(ext_id, a, b, length_m, road_type, None)?;
        }
        Ok(drop_isolated(net))
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn parse_coord(s: &str, what: &str, row: usize) -> Result<f64, NetworkError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| NetworkError::CsvRow { row, message: format!("malformed {what} {s:?}") })?;
    if !v.is_finite() {
        return Err(NetworkError::CsvRow { row, message: format!("non-finite {what}") });
    }
    Ok(v)
}

fn parse_linestring(coords: &Value) -> Result<Vec<[f64; 2]>, String> {
    let arr = coords.as_array().ok_or("coordinates is not an array")?;
    if arr.len() < 2 {
        return Err("LineString needs at least two positions".into());
    }
    let mut out = Vec::with_capacity(arr.len());
    for (i, pos) in arr.iter().enumerate() {
        let pos = pos.as_array().ok_or_else(|| format!("position {i} is not an array"))?;
        if pos.len() < 2 {
            return Err(format!("position {i} has fewer than two coordinates"));
        }
        let lon = pos[0].as_f64().ok_or_else(|| format!("position {i}: lon is not a number"))?;
        let lat = pos[1].as_f64().ok_or_else(|| format!("position {i}: lat is not a number"))?;
        if !lon.is_finite() || !lat.is_finite() {
            return Err(format!("position {i}: non-finite coordinate"));
        }
        out.push([lon, lat]);
    }
    Ok(out)
}

fn round_length(length: f64, edge: &str) -> Result<u64, NetworkError> {
    if !length.is_finite() || length < 0.0 {
        return Err(NetworkError::NonPositiveLength { edge: edge.to_string() });
    }
    let rounded = length.round(); // half-up for positive values
    if rounded < 1.0 {
        return Err(NetworkError::NonPositiveLength { edge: edge.to_string() });
    }
    Ok(rounded as u64)
}

fn snap_key(p: [f64; 2]) -> (i64, i64) {
    let meters_per_deg = geom::EARTH_RADIUS_M.to_radians();
    let ky = (p[1] * meters_per_deg / SNAP_GRID_M).round();
    let kx = (p[0] * meters_per_deg * p[1].to_radians().cos() / SNAP_GRID_M).round();
    (kx as i64, ky as i64)
}

fn assemble_snapped(
    raw: Vec<RawEdge>,
    forbidden_types: &BTreeSet<RoadType>,
) -> Result<RoadNetwork, NetworkError> {
    let mut net = RoadNetwork {
        nodes: Vec::new(),
        edges: Vec::new(),
        adjacency: Vec::new(),
        types: Vec::new(),
        ext_node_index: HashMap::new(),
        ext_edge_index: HashMap::new(),
    };
    let mut grid: HashMap<(i64, i64), NodeId> = HashMap::new();
    let mut intern = |net: &mut RoadNetwork, p: [f64; 2]| -> NodeId {
        let key = snap_key(p);
        if let Some(&id) = grid.get(&key) {
            return id;
        }
        let id = NodeId(net.nodes.len() as u32);
        let ext_id = format!("n{}", id.0);
        net.ext_node_index.insert(ext_id.clone(), id);
        net.nodes.push(super::Node { ext_id, lon: p[0], lat: p[1], ele: None });
        net.adjacency.push(Vec::new());
        grid.insert(key, id);
        id
    };
    for edge in raw {
        if forbidden_types.contains(&edge.road_type) {
            continue;
        }
        let geometry_m = geom::polyline_length_m(&edge.geometry);
        let length_m = match edge.declared_length_m {
            Some(declared) => {
                if geometry_m > 0.0 && (declared - geometry_m).abs() / geometry_m > LENGTH_TOLERANCE
                {
                    return Err(NetworkError::LengthMismatch {
                        edge: edge.ext_id,
                        declared_m: declared,
                        geometry_m,
                    });
                }
                round_length(declared, &edge.ext_id)?
            }
            None => round_length(geometry_m, &edge.ext_id)?,
        };
        let a = intern(&mut net, edge.geometry[0]);
        let b = intern(&mut net, *edge.geometry.last().unwrap());
        if net.ext_edge_index.contains_key(&edge.ext_id) {
            return Err(NetworkError::DuplicateEdge { edge: edge.ext_id });
        }
        net.push_edge(edge.ext_id, a, b, length_m, edge.road_type, Some(edge.geometry))?;
    }
    Ok(drop_isolated(net))
}

/// Removes nodes without incident edges, compacting indices.
fn drop_isolated(net: RoadNetwork) -> RoadNetwork {
    if net.adjacency.iter().all(|a| !a.is_empty()) {
        return net;
    }
    let mut remap: Vec<Option<NodeId>> = vec![None; net.nodes.len()];
    let mut kept = RoadNetwork {
        nodes: Vec::new(),
        edges: Vec::new(),
        adjacency: Vec::new(),
        types: net.types.clone(),
        ext_node_index: HashMap::new(),
        ext_edge_index: HashMap::new(),
    };
    for (i, node) in net.nodes.iter().enumerate() {
        if !net.adjacency[i].is_empty() {
            let id = NodeId(kept.nodes.len() as u32);
            remap[i] = Some(id);
            kept.ext_node_index.insert(node.ext_id.clone(), id);
            kept.nodes.push(node.clone());
            kept.adjacency.push(Vec::new());
        }
    }
    for edge in &net.edges {
        let a = remap[edge.a.0 as usize].expect("edge endpoint kept");
        let b = remap[edge.b.0 as usize].expect("edge endpoint kept");
        let id = EdgeId(kept.edges.len() as u32);
        kept.ext_edge_index.insert(edge.ext_id.clone(), id);
        kept.edges.push(super::Edge { a, b, ..edge.clone() });
        kept.adjacency[a.0 as usize].push(id);
        kept.adjacency[b.0 as usize].push(id);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle_geojson(types: [&str; 3]) -> String {
        let feature = |id: &str, a: [f64; 2], b: [f64; 2], t: &str| {
            format!(
                r#"{{"type":"Feature","geometry":{{"type":"LineString","coordinates":[[{},{}],[{},{}]]}},"properties":{{"id":"{id}","road_type":"{t}"}}}}"#,
                a[0], a[1], b[0], b[1]
            )
        };
        let a = [7.000, 50.000];
        let b = [7.002, 50.000];
        let c = [7.001, 50.001];
        format!(
            r#"{{"type":"FeatureCollection","features":[{},{},{}]}}"#,
            feature("AB", a, b, types[0]),
            feature("AC", a, c, types[1]),
            feature("CB", c, b, types[2]),
        )
    }

    #[test]
    fn identity_load_keeps_everything() {
        let net =
            RoadNetwork::from_geojson_str(&triangle_geojson(["residential", "cycleway", "cycleway"]), &BTreeSet::new())
                .unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.edge_count(), 3);
        // lengths come from the haversine geometry
        for (_, e) in net.edges() {
            assert!(e.length_m > 100 && e.length_m < 200, "length {}", e.length_m);
        }
    }

    #[test]
    fn forbidden_types_are_filtered() {
        let forbidden: BTreeSet<RoadType> = [RoadType::new("motorway")].into_iter().collect();
        let net =
            RoadNetwork::from_geojson_str(&triangle_geojson(["motorway", "cycleway", "cycleway"]), &forbidden)
                .unwrap();
        assert_eq!(net.edge_count(), 2);
        // no node becomes isolated in the triangle, so all three remain
        assert_eq!(net.node_count(), 3);
    }

    #[test]
    fn filtering_drops_isolated_nodes() {
        // two disconnected segments; forbidding one drops its two nodes
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[7.0,50.0],[7.002,50.0]]},"properties":{"road_type":"cycleway"}},
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[7.1,50.1],[7.102,50.1]]},"properties":{"road_type":"motorway"}}
        ]}"#;
        let forbidden: BTreeSet<RoadType> = [RoadType::new("motorway")].into_iter().collect();
        let net = RoadNetwork::from_geojson_str(text, &forbidden).unwrap();
        assert_eq!(net.edge_count(), 1);
        assert_eq!(net.node_count(), 2);
    }

    #[test]
    fn empty_filter_preserves_count_and_length() {
        let text = triangle_geojson(["residential", "cycleway", "track_grade5"]);
        let all = RoadNetwork::from_geojson_str(&text, &BTreeSet::new()).unwrap();
        let again = RoadNetwork::from_geojson_str(&text, &BTreeSet::new()).unwrap();
        assert_eq!(all.edge_count(), again.edge_count());
        assert_eq!(all.total_length_m(), again.total_length_m());
    }

    #[test]
    fn declared_length_must_match_geometry() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[7.0,50.0],[7.002,50.0]]},"properties":{"road_type":"cycleway","length_m":9000}}
        ]}"#;
        let err = RoadNetwork::from_geojson_str(text, &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, NetworkError::LengthMismatch { .. }), "{err}");
    }

    #[test]
    fn csv_load_and_missing_node_error() {
        let nodes = "node_id,lon,lat\nA,7.000,50.000\nB,7.002,50.000\nC,7.001,50.001\n";
        let edges = "edge_id,from_node,to_node,length_m,road_type\nAB,A,B,100,residential\nAC,A,C,60,cycleway\nCB,C,B,60,cycleway\n";
        let net = RoadNetwork::from_csv_strs(nodes, edges, &BTreeSet::new()).unwrap();
        assert_eq!(net.node_count(), 3);
        assert_eq!(net.edge_count(), 3);
        assert_eq!(net.total_length_m(), 220);

        let bad = "edge_id,from_node,to_node,length_m,road_type\nAX,A,X,100,residential\n";
        let err = RoadNetwork::from_csv_strs(nodes, bad, &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, NetworkError::MissingNode { edge } if edge == "AX"));
    }

    #[test]
    fn csv_malformed_coordinate_names_row() {
        let nodes = "node_id,lon,lat\nA,7.000,50.000\nB,oops,50.000\n";
        let err = RoadNetwork::from_csv_strs(nodes, "edge_id,from_node,to_node,length_m,road_type\n", &BTreeSet::new())
            .unwrap_err();
        match err {
            NetworkError::CsvRow { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn shared_endpoints_snap_to_one_node() {
        // AC and CB meet at C from two different features; 0.1 m grid snaps them
        let net =
            RoadNetwork::from_geojson_str(&triangle_geojson(["residential", "cycleway", "cycleway"]), &BTreeSet::new())
                .unwrap();
        assert_eq!(net.node_count(), 3);
    }

    #[test]
    fn zero_length_edge_is_rejected_with_id() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[7.0,50.0],[7.002,50.0]]},"properties":{"id":"ok","road_type":"cycleway"}},
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[7.5,50.5],[7.5,50.5]]},"properties":{"id":"nil","road_type":"cycleway"}}
        ]}"#;
        let err = RoadNetwork::from_geojson_str(text, &BTreeSet::new()).unwrap_err();
        assert!(
            matches!(&err, NetworkError::NonPositiveLength { edge } if edge == "nil"),
            "{err}"
        );
    }
}
