//! Per-trajectory feature extraction: track statistics (length, climb,
//! circularity), detour features against the geometric-shortest reference
//! path, road-type shares of the matched walk, and land-use shares of the
//! surrounding area. Features feed the clustering stage after z-normalization.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::geom;
use crate::matching::{length_by_type, MatchedPath, Trajectory};
use crate::network::{shortest_path, RoadNetwork, RoadType};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("land-use file is not valid GeoJSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("land-use file: {0}")]
    Format(String),
    #[error("matched walk endpoints missing from network")]
    BadWalk,
}

#[derive(Clone, Debug)]
pub struct LandUsePolygon {
    pub category: String,
    /// Closed exterior ring (first vertex equals last), `[lon, lat]`.
    pub ring: Vec<[f64; 2]>,
}

/// Land-use polygons, e.g. `woodland`, `arable_land`, `settled_land`.
#[derive(Clone, Debug, Default)]
pub struct LandUseMap {
    pub polygons: Vec<LandUsePolygon>,
}

impl LandUseMap {
    pub fn empty() -> LandUseMap {
        LandUseMap::default()
    }

    pub fn categories(&self) -> Vec<String> {
        let mut cats: Vec<String> =
            self.polygons.iter().map(|p| p.category.clone()).collect();
        cats.sort();
        cats.dedup();
        cats
    }

    pub fn load(path: &Path) -> Result<LandUseMap, FeatureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| FeatureError::Io { path: path.into(), source })?;
        LandUseMap::from_geojson_str(&text)
    }

    /// Parses a GeoJSON FeatureCollection of Polygon features with a
    /// `category` property. Only exterior rings are used; holes are ignored.
    pub fn from_geojson_str(text: &str) -> Result<LandUseMap, FeatureError> {
        #[derive(Deserialize)]
        struct Collection {
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

        let fc: Collection = serde_json::from_str(text)?;
        if fc.kind != "FeatureCollection" {
            return Err(FeatureError::Format(format!(
                "expected FeatureCollection, got {:?}",
                fc.kind
            )));
        }
        let mut polygons = Vec::new();
        for (i, feature) in fc.features.into_iter().enumerate() {
            let geometry = feature
                .geometry
                .ok_or_else(|| FeatureError::Format(format!("feature {i}: missing geometry")))?;
            if geometry.kind != "Polygon" {
                return Err(FeatureError::Format(format!(
                    "feature {i}: expected Polygon, got {:?}",
                    geometry.kind
                )));
            }
            let category = match feature.properties.unwrap_or_default().get("category") {
                Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
                _ => {
                    return Err(FeatureError::Format(format!(
                        "feature {i}: missing or empty category property"
                    )))
                }
            };
            let rings = geometry
                .coordinates
                .as_array()
                .ok_or_else(|| FeatureError::Format(format!("feature {i}: coordinates not an array")))?;
            let exterior = rings
                .first()
                .and_then(Value::as_array)
                .ok_or_else(|| FeatureError::Format(format!("feature {i}: missing exterior ring")))?;
            let mut ring = Vec::with_capacity(exterior.len());
            for (j, pos) in exterior.iter().enumerate() {
                let pos = pos.as_array().ok_or_else(|| {
                    FeatureError::Format(format!("feature {i}: position {j} is not an array"))
                })?;
                if pos.len() < 2 {
                    return Err(FeatureError::Format(format!(
                        "feature {i}: position {j} has fewer than two coordinates"
                    )));
                }
                let lon = pos[0].as_f64();
                let lat = pos[1].as_f64();
                match (lon, lat) {
                    (Some(lon), Some(lat)) if lon.is_finite() && lat.is_finite() => {
                        ring.push([lon, lat])
                    }
                    _ => {
                        return Err(FeatureError::Format(format!(
                            "feature {i}: position {j} has non-numeric coordinates"
                        )))
                    }
                }
            }
            if ring.len() < 4 || ring.first() != ring.last() {
                return Err(FeatureError::Format(format!(
                    "feature {i}: ring is not closed"
                )));
            }
            polygons.push(LandUsePolygon { category, ring });
        }
        Ok(LandUseMap { polygons })
    }
}

/// Fraction of sample points along the trajectory polyline lying within
/// `buffer_radius_m` of at least one polygon of each category. Categories may
/// overlap, so the fractions need not sum to one. An empty land-use map
/// yields all-zero shares.
pub fn landuse_shares(
    traj: &Trajectory,
    landuse: &LandUseMap,
    buffer_radius_m: f64,
    sample_step_m: f64,
) -> BTreeMap<String, f64> {
    assert!(buffer_radius_m >= 0.0 && sample_step_m > 0.0);
    let mut shares: BTreeMap<String, f64> =
        landuse.categories().into_iter().map(|c| (c, 0.0)).collect();
    if shares.is_empty() {
        return shares;
    }
    let samples = geom::sample_polyline_m(&traj.polyline(), sample_step_m);
    if samples.is_empty() {
        return shares;
    }
    let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &samples {
        let mut seen: Vec<&str> = Vec::new();
        for poly in &landuse.polygons {
            if seen.contains(&poly.category.as_str()) {
                continue;
            }
            if geom::distance_to_polygon_m(*p, &poly.ring) <= buffer_radius_m {
                seen.push(&poly.category);
            }
        }
        for c in seen {
            *hits.entry(c).or_insert(0) += 1;
        }
    }
    let n = samples.len() as f64;
    for (c, h) in hits {
        shares.insert(c.to_string(), h as f64 / n);
    }
    shares
}

#[derive(Clone, Copy, Debug)]
pub struct FeatureParams {
    pub buffer_radius_m: f64,
    pub sample_step_m: f64,
    /// A track is circular when its straight start-end distance is below
    /// `max(circular_abs_m, circular_frac * total_length)`.
    pub circular_abs_m: f64,
    pub circular_frac: f64,
    /// Cap for the detour factor of round trips (reference length zero).
    pub detour_factor_cap: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            buffer_radius_m: 50.0,
            sample_step_m: 10.0,
            circular_abs_m: 200.0,
            circular_frac: 0.01,
            detour_factor_cap: 1e4,
        }
    }
}

/// Feature values for one matched trajectory fragment. Altitude features are
/// `None` when the source carries no elevation; they are imputed by the
/// dataset mean when the feature matrix is assembled.
#[derive(Clone, Debug)]
pub struct FeatureVector {
    pub id: String,
    pub total_length_m: f64,
    pub climb_m: Option<f64>,
    pub descent_m: Option<f64>,
    pub altitude_range_m: Option<f64>,
    pub is_circular: bool,
    pub detour_difference_m: f64,
    pub detour_factor: f64,
    /// Set for round trips whose detour factor was capped.
    pub detour_capped: bool,
    pub snap_mean_m: f64,
    pub snap_max_m: f64,
    pub road_type_shares: BTreeMap<RoadType, f64>,
    pub landuse_shares: BTreeMap<String, f64>,
}

/// Extracts the feature vector for a matched fragment of a trajectory.
pub fn extract_features(
    traj: &Trajectory,
    matched: &MatchedPath,
    net: &RoadNetwork,
    landuse: &LandUseMap,
    params: &FeatureParams,
) -> Result<FeatureVector, FeatureError> {
    let (lo, hi) = matched.point_range;
    let points = &traj.points[lo..=hi];
    let sub = Trajectory {
        id: matched.id(),
        activity: traj.activity.clone(),
        points: points.to_vec(),
        meta: traj.meta,
    };

    let total_length_m = matched.matched_length_m as f64;

    // climb / descent / altitude range over the elevation series
    let eles: Vec<f64> = points.iter().filter_map(|p| p.ele).collect();
    let (climb_m, descent_m, altitude_range_m) = if eles.len() >= 2 {
        let mut climb = 0.0;
        let mut descent = 0.0;
        for w in eles.windows(2) {
            let d = w[1] - w[0];
            if d > 0.0 {
                climb += d;
            } else {
                descent -= d;
            }
        }
        let max = eles.iter().copied().fold(f64::MIN, f64::max);
        let min = eles.iter().copied().fold(f64::MAX, f64::min);
        (Some(climb), Some(descent), Some(max - min))
    } else {
        (None, None, None)
    };

    let start = points.first().expect("fragment has points");
    let end = points.last().expect("fragment has points");
    let straight = geom::haversine_m([start.lon, start.lat], [end.lon, end.lat]);
    let is_circular =
        straight < f64::max(params.circular_abs_m, params.circular_frac * total_length_m);

    let s = matched.walk.start().ok_or(FeatureError::BadWalk)?;
    let t = matched.walk.end().ok_or(FeatureError::BadWalk)?;
    let (detour_difference_m, detour_factor, detour_capped) = if s == t {
        // round trip: maximally non-shortest; cap keeps normalization stable
        (total_length_m, f64::min(total_length_m, params.detour_factor_cap), true)
    } else {
        let reference = shortest_path(net, |e| net.edge(e).length_m, s, t)
            .ok_or(FeatureError::BadWalk)?;
        let ref_len = reference.cost as f64;
        (total_length_m - ref_len, total_length_m / ref_len, false)
    };

    let by_type = length_by_type(matched, net);
    let road_type_shares = by_type
        .into_iter()
        .map(|(t, len)| (t, len as f64 / matched.matched_length_m as f64))
        .collect();

    let landuse_shares =
        landuse_shares(&sub, landuse, params.buffer_radius_m, params.sample_step_m);

    let snap_mean_m = if matched.snap_distances_m.is_empty() {
        0.0
    } else {
        matched.snap_distances_m.iter().sum::<f64>() / matched.snap_distances_m.len() as f64
    };
    let snap_max_m = matched.snap_distances_m.iter().copied().fold(0.0, f64::max);

    Ok(FeatureVector {
        id: matched.id(),
        total_length_m,
        climb_m,
        descent_m,
        altitude_range_m,
        is_circular,
        detour_difference_m,
        detour_factor,
        detour_capped,
        snap_mean_m,
        snap_max_m,
        road_type_shares,
        landuse_shares,
    })
}

/// Dense feature matrix with named columns, ready for normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Assembles the matrix from feature vectors: fixed columns, one share column
/// per observed road type and land-use category, missing altitude features
/// imputed by the dataset mean plus an `ele_missing` indicator column.
pub fn build_matrix(features: &[FeatureVector]) -> FeatureMatrix {
    let mut type_cols: Vec<RoadType> = Vec::new();
    let mut landuse_cols: Vec<String> = Vec::new();
    for f in features {
        for t in f.road_type_shares.keys() {
            if !type_cols.contains(t) {
                type_cols.push(t.clone());
            }
        }
        for c in f.landuse_shares.keys() {
            if !landuse_cols.contains(c) {
                landuse_cols.push(c.clone());
            }
        }
    }
    type_cols.sort();
    landuse_cols.sort();

    let mut names: Vec<String> = vec![
        "total_length_m".into(),
        "climb_m".into(),
        "descent_m".into(),
        "altitude_range_m".into(),
        "is_circular".into(),
        "detour_difference_m".into(),
        "detour_factor".into(),
        "snap_mean_m".into(),
        "snap_max_m".into(),
        "ele_missing".into(),
    ];
    names.extend(type_cols.iter().map(|t| format!("share_type_{t}")));
    names.extend(landuse_cols.iter().map(|c| format!("share_landuse_{c}")));

    let mean_of = |get: &dyn Fn(&FeatureVector) -> Option<f64>| {
        let present: Vec<f64> = features.iter().filter_map(get).collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    };
    let climb_mean = mean_of(&|f: &FeatureVector| f.climb_m);
    let descent_mean = mean_of(&|f: &FeatureVector| f.descent_m);
    let range_mean = mean_of(&|f: &FeatureVector| f.altitude_range_m);

    let mut ids = Vec::with_capacity(features.len());
    let mut rows = Vec::with_capacity(features.len());
    for f in features {
        ids.push(f.id.clone());
        let mut row = vec![
            f.total_length_m,
            f.climb_m.unwrap_or(climb_mean),
            f.descent_m.unwrap_or(descent_mean),
            f.altitude_range_m.unwrap_or(range_mean),
            if f.is_circular { 1.0 } else { 0.0 },
            f.detour_difference_m,
            f.detour_factor,
            f.snap_mean_m,
            f.snap_max_m,
            if f.climb_m.is_none() { 1.0 } else { 0.0 },
        ];
        row.extend(type_cols.iter().map(|t| f.road_type_shares.get(t).copied().unwrap_or(0.0)));
        row.extend(landuse_cols.iter().map(|c| f.landuse_shares.get(c).copied().unwrap_or(0.0)));
        rows.push(row);
    }
    FeatureMatrix { ids, names, rows }
}

/// Per-column statistics of a z-normalization pass.
#[derive(Clone, Debug)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation (divide by n).
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

/// Z-normalizes each column to zero mean and unit (population) standard
/// deviation. Zero-variance columns map to all zeros and are flagged.
pub fn znormalize(matrix: &FeatureMatrix) -> (FeatureMatrix, NormStats) {
    let n = matrix.rows.len();
    assert!(n >= 2, "z-normalization needs at least two rows");
    let d = matrix.names.len();
    let mut mean = vec![0.0; d];
    for row in &matrix.rows {
        for (j, v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in &matrix.rows {
        for (j, v) in row.iter().enumerate() {
            var[j] += (v - mean[j]) * (v - mean[j]);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    let zero_variance: Vec<bool> = std.iter().map(|&s| s == 0.0).collect();
    let rows = matrix
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, v)| if zero_variance[j] { 0.0 } else { (v - mean[j]) / std[j] })
                .collect()
        })
        .collect();
    (
        FeatureMatrix { ids: matrix.ids.clone(), names: matrix.names.clone(), rows },
        NormStats { mean, std, zero_variance },
    )
}
