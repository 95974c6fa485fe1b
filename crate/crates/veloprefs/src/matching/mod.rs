//! Trajectory ingestion and map matching.
//!
//! Matching is hidden-Markov style: each point gets up to `max_candidates`
//! nearby edges as candidate states, emission scores fall off with the
//! squared snap distance, and transitions penalize the gap between network
//! distance and straight-line distance. The most likely candidate sequence
//! is found by dynamic programming and stitched into a connected walk,
//! bridging gaps with geometric-shortest paths.

pub mod gpx;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geom;
use crate::network::{shortest_distances, shortest_path, EdgeId, NodeId, RoadNetwork, RoadType, Walk};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackPoint {
    pub lon: f64,
    pub lat: f64,
    pub ele: Option<f64>,
    /// Unix timestamp, seconds.
    pub time: Option<i64>,
}

/// A parsed track before invariants are established.
#[derive(Clone, Debug, Default)]
pub struct RawTrack {
    pub name: Option<String>,
    pub activity: Option<String>,
    pub points: Vec<TrackPoint>,
}

/// Optional whole-track statistics carried by some source files.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrackMeta {
    pub total_length_m: Option<f64>,
    pub climb_m: Option<f64>,
    pub descent_m: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub id: String,
    pub activity: Option<String>,
    pub points: Vec<TrackPoint>,
    pub meta: TrackMeta,
}

impl Trajectory {
    pub fn polyline(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [p.lon, p.lat]).collect()
    }
}

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Gpx {
        path: PathBuf,
        #[source]
        source: gpx::GpxError,
    },
    #[error("{path} row {row}: {message}")]
    CsvRow { path: PathBuf, row: usize, message: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("unsupported trajectory file extension: {path}")]
    UnsupportedFormat { path: PathBuf },
}

/// Result of loading a trajectory directory or file list: trajectories with
/// invariants established, plus non-fatal warnings (skipped tracks).
#[derive(Debug, Default)]
pub struct TrajectoryLoad {
    pub trajectories: Vec<Trajectory>,
    pub warnings: Vec<String>,
}

/// Loads trajectories from GPX and CSV files. Directories are scanned
/// non-recursively in sorted filename order.
pub fn load_trajectories(paths: &[PathBuf]) -> Result<TrajectoryLoad, MatchingError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|source| MatchingError::Io { path: path.clone(), source })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("gpx") | Some("csv")
                    )
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    let mut load = TrajectoryLoad::default();
    for file in files {
        let text = std::fs::read_to_string(&file)
            .map_err(|source| MatchingError::Io { path: file.clone(), source })?;
        match file.extension().and_then(|e| e.to_str()) {
            Some("gpx") => {
                let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned());
                let stem = stem.unwrap_or_else(|| "track".to_string());
                let tracks = gpx::parse_gpx(&text)
                    .map_err(|source| MatchingError::Gpx { path: file.clone(), source })?;
                let many = tracks.len() > 1;
                for (i, track) in tracks.into_iter().enumerate() {
                    let id = if many { format!("{stem}#{i}") } else { stem.clone() };
                    finish_track(id, track, &mut load);
                }
            }
            Some("csv") => {
                for (id, track) in parse_trajectory_csv(&text).map_err(|e| match e {
                    CsvTrackError::Csv(source) => MatchingError::Csv { path: file.clone(), source },
                    CsvTrackError::Row { row, message } => {
                        MatchingError::CsvRow { path: file.clone(), row, message }
                    }
                })? {
                    finish_track(id, track, &mut load);
                }
            }
            _ => return Err(MatchingError::UnsupportedFormat { path: file }),
        }
    }
    Ok(load)
}

fn finish_track(id: String, track: RawTrack, load: &mut TrajectoryLoad) {
    let mut points: Vec<TrackPoint> = Vec::with_capacity(track.points.len());
    for p in track.points {
        // collapse consecutive duplicates
        if points
            .last()
            .map_or(true, |q: &TrackPoint| q.lon != p.lon || q.lat != p.lat)
        {
            points.push(p);
        }
    }
    if points.len() < 2 {
        load.warnings.push(format!("{id}: fewer than 2 distinct points, skipped"));
        return;
    }
    let mut last_time = None;
    for p in &points {
        if let (Some(prev), Some(cur)) = (last_time, p.time) {
            if cur < prev {
                load.warnings.push(format!("{id}: timestamps not non-decreasing, skipped"));
                return;
            }
        }
        if p.time.is_some() {
            last_time = p.time;
        }
    }
    load.trajectories.push(Trajectory {
        id,
        activity: track.activity,
        points,
        meta: TrackMeta::default(),
    });
}

#[derive(Debug)]
pub enum CsvTrackError {
    Csv(csv::Error),
    Row { row: usize, message: String },
}

/// Parses trajectory CSV `trajectory_id,seq,lon,lat[,ele][,time]`. Rows are
/// grouped by trajectory id (first-appearance order) and sorted by `seq`.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<(String, RawTrack)>, CsvTrackError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(CsvTrackError::Csv)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (id_c, seq_c, lon_c, lat_c) = match (col("trajectory_id"), col("seq"), col("lon"), col("lat")) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => {
            return Err(CsvTrackError::Row {
                row: 1,
                message: "header must contain trajectory_id,seq,lon,lat".into(),
            })
        }
    };
    let ele_c = col("ele");
    let time_c = col("time");

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(u64, TrackPoint)>> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(CsvTrackError::Csv)?;
        let field = |c: usize| record.get(c).unwrap_or("").trim().to_string();
        let id = field(id_c);
        if id.is_empty() {
            return Err(CsvTrackError::Row { row, message: "empty trajectory_id".into() });
        }
        let seq: u64 = field(seq_c)
            .parse()
            .map_err(|_| CsvTrackError::Row { row, message: format!("malformed seq {:?}", field(seq_c)) })?;
        let parse_coord = |c: usize, what: &str| -> Result<f64, CsvTrackError> {
            let raw = field(c);
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CsvTrackError::Row { row, message: format!("malformed {what} {raw:?}") })
        };
        let lon = parse_coord(lon_c, "lon")?;
        let lat = parse_coord(lat_c, "lat")?;
        let ele = match ele_c.map(field) {
            None => None,
            Some(s) if s.is_empty() => None,
            Some(s) => Some(s.parse::<f64>().map_err(|_| CsvTrackError::Row {
                row,
                message: format!("malformed ele {s:?}"),
            })?),
        };
        let time = match time_c.map(field) {
            None => None,
            Some(s) if s.is_empty() => None,
            Some(s) => Some(
                chrono::DateTime::parse_from_rfc3339(&s)
                    .map(|t| t.timestamp())
                    .or_else(|_| s.parse::<i64>())
                    .map_err(|_| CsvTrackError::Row { row, message: format!("malformed time {s:?}") })?,
            ),
        };
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups
            .entry(id)
            .or_default()
            .push((seq, TrackPoint { lon, lat, ele, time }));
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let mut rows = groups.remove(&id).unwrap();
            rows.sort_by_key(|(seq, _)| *seq);
            let track = RawTrack {
                name: None,
                activity: None,
                points: rows.into_iter().map(|(_, p)| p).collect(),
            };
            (id, track)
        })
        .collect())
}

/// Reads the sidecar activity CSV `trajectory_id,activity`.
pub fn load_activities(path: &Path) -> Result<BTreeMap<String, String>, MatchingError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| MatchingError::Io { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| MatchingError::Csv { path: path.into(), source })?;
        if record.len() < 2 {
            return Err(MatchingError::CsvRow {
                path: path.into(),
                row: i + 2,
                message: "expected trajectory_id,activity".into(),
            });
        }
        out.insert(record[0].to_string(), record[1].to_ascii_lowercase());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct MatchParams {
    pub max_snap_distance_m: f64,
    pub sigma_gps_m: f64,
    /// Scale of the |network distance - straight-line distance| penalty.
    pub transition_scale_m: f64,
    pub max_candidates: usize,
    /// Consecutive points farther apart than this are treated as a sampling
    /// gap: the bridging route is accepted without penalty.
    pub gap_distance_m: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            max_snap_distance_m: 30.0,
            sigma_gps_m: 10.0,
            transition_scale_m: 50.0,
            max_candidates: 5,
            gap_distance_m: 500.0,
        }
    }
}

/// A trajectory fragment matched onto the network as a connected walk.
#[derive(Clone, Debug)]
pub struct MatchedPath {
    pub trajectory_id: String,
    /// Fragment index; 0 unless unmatchable points split the trajectory.
    pub fragment: usize,
    /// Inclusive range of trajectory point indices covered by this fragment.
    pub point_range: (usize, usize),
    pub walk: Walk,
    pub matched_length_m: u64,
    pub snap_distances_m: Vec<f64>,
}

impl MatchedPath {
    /// Identifier used downstream: the trajectory id, suffixed with the
    /// fragment index when a split produced more than one fragment.
    pub fn id(&self) -> String {
        if self.fragment == 0 {
            self.trajectory_id.clone()
        } else {
            format!("{}#f{}", self.trajectory_id, self.fragment)
        }
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("network has no edges")]
    EmptyNetwork,
    #[error("trajectory {trajectory_id}: point {point_index} is farther than the snap limit from every edge")]
    Unmatchable { trajectory_id: String, point_index: usize },
    #[error("trajectory {trajectory_id}: matched to a single location")]
    Degenerate { trajectory_id: String },
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    edge: EdgeId,
    dist_m: f64,
    /// Arc-length position of the projection, measured from endpoint `a`.
    arc_m: f64,
}

/// Successful match: one walk per fragment, plus the indices of any
/// unmatchable points that caused fragment splits.
#[derive(Clone, Debug)]
pub struct MatchOutcome {
    pub fragments: Vec<MatchedPath>,
    pub unmatchable_points: Vec<usize>,
}

/// Matches a trajectory onto the network. Unmatchable points split the
/// trajectory into fragments; if any fragment has fewer than two points the
/// whole trajectory is reported unmatchable.
pub fn map_match(
    net: &RoadNetwork,
    traj: &Trajectory,
    params: &MatchParams,
) -> Result<MatchOutcome, MatchError> {
    if net.edge_count() == 0 {
        return Err(MatchError::EmptyNetwork);
    }
    let candidates: Vec<Vec<Candidate>> =
        traj.points.iter().map(|p| find_candidates(net, [p.lon, p.lat], params)).collect();

    let bad: Vec<usize> =
        (0..traj.points.len()).filter(|&i| candidates[i].is_empty()).collect();
    let mut fragments: Vec<(usize, usize)> = Vec::new(); // inclusive ranges
    {
        let mut start = 0usize;
        for &b in &bad {
            if b < start + 2 {
                // fragment before the unmatchable point has < 2 points
                return Err(MatchError::Unmatchable {
                    trajectory_id: traj.id.clone(),
                    point_index: b,
                });
            }
            fragments.push((start, b - 1));
            start = b + 1;
        }
        if traj.points.len() < start + 2 {
            return Err(MatchError::Unmatchable {
                trajectory_id: traj.id.clone(),
                point_index: *bad.last().expect("a trailing short fragment implies a bad point"),
            });
        }
        fragments.push((start, traj.points.len() - 1));
    }

    let mut dist_cache: HashMap<NodeId, Vec<u64>> = HashMap::new();
    let mut matched = Vec::new();
    for (fragment, &(lo, hi)) in fragments.iter().enumerate() {
        let chosen = viterbi(net, traj, &candidates, lo, hi, params, &mut dist_cache)
            .ok_or_else(|| MatchError::Unmatchable { trajectory_id: traj.id.clone(), point_index: lo })?;
        let walk = stitch_walk(net, &chosen, params.sigma_gps_m)
            .ok_or_else(|| MatchError::Degenerate { trajectory_id: traj.id.clone() })?;
        let matched_length_m = walk.length_m(net);
        matched.push(MatchedPath {
            trajectory_id: traj.id.clone(),
            fragment,
            point_range: (lo, hi),
            walk,
            matched_length_m,
            snap_distances_m: chosen.iter().map(|c| c.dist_m).collect(),
        });
    }
    Ok(MatchOutcome { fragments: matched, unmatchable_points: bad })
}

fn find_candidates(net: &RoadNetwork, p: [f64; 2], params: &MatchParams) -> Vec<Candidate> {
    let mut all: Vec<Candidate> = Vec::new();
    for (id, edge) in net.edges() {
        let (dist_m, arc_m) = geom::point_polyline_projection_m(p, &edge.geometry);
        if dist_m <= params.max_snap_distance_m {
            all.push(Candidate { edge: id, dist_m, arc_m });
        }
    }
    all.sort_by(|x, y| x.dist_m.total_cmp(&y.dist_m).then(x.edge.cmp(&y.edge)));
    all.truncate(params.max_candidates);
    all
}

/// Network distance in meters between two candidate positions, using cached
/// one-to-all geometric distances from edge endpoints.
fn candidate_distance(
    net: &RoadNetwork,
    from: &Candidate,
    to: &Candidate,
    cache: &mut HashMap<NodeId, Vec<u64>>,
) -> f64 {
    if from.edge == to.edge {
        let scale = arc_scale(net, from.edge);
        return (to.arc_m - from.arc_m).abs() * scale;
    }
    let ef = net.edge(from.edge);
    let et = net.edge(to.edge);
    let from_scale = arc_scale(net, from.edge);
    let to_scale = arc_scale(net, to.edge);
    let from_len = ef.length_m as f64;
    let to_len = et.length_m as f64;
    let mut best = f64::INFINITY;
    for (u, off_u) in [
        (ef.a, from.arc_m * from_scale),
        (ef.b, from_len - from.arc_m * from_scale),
    ] {
        let dist = cache
            .entry(u)
            .or_insert_with(|| shortest_distances(net, |e| net.edge(e).length_m, u));
        for (v, off_v) in [
            (et.a, to.arc_m * to_scale),
            (et.b, to_len - to.arc_m * to_scale),
        ] {
            let d = dist[v.0 as usize];
            if d != u64::MAX {
                best = best.min(off_u + d as f64 + off_v);
            }
        }
    }
    best
}

/// Converts geometry arc-length positions into the edge's nominal length
/// scale, so declared lengths and geometry lengths stay consistent.
fn arc_scale(net: &RoadNetwork, edge: EdgeId) -> f64 {
    let e = net.edge(edge);
    let geo = geom::polyline_length_m(&e.geometry);
    if geo > 0.0 {
        e.length_m as f64 / geo
    } else {
        1.0
    }
}

fn viterbi(
    net: &RoadNetwork,
    traj: &Trajectory,
    candidates: &[Vec<Candidate>],
    lo: usize,
    hi: usize,
    params: &MatchParams,
    cache: &mut HashMap<NodeId, Vec<u64>>,
) -> Option<Vec<Candidate>> {
    let emission = |c: &Candidate| {
        let r = c.dist_m / params.sigma_gps_m;
        r * r / 2.0
    };
    let n = hi - lo + 1;
    let mut cost: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    cost.push(candidates[lo].iter().map(emission).collect());
    back.push(vec![0; candidates[lo].len()]);
    for i in 1..n {
        let p = lo + i;
        let straight = geom::haversine_m(
            [traj.points[p - 1].lon, traj.points[p - 1].lat],
            [traj.points[p].lon, traj.points[p].lat],
        );
        let gap = straight > params.gap_distance_m;
        let mut row = vec![f64::INFINITY; candidates[p].len()];
        let mut brow = vec![0usize; candidates[p].len()];
        for (j, cand) in candidates[p].iter().enumerate() {
            let e = emission(cand);
            for (k, prev) in candidates[p - 1].iter().enumerate() {
                if !cost[i - 1][k].is_finite() {
                    continue;
                }
                let trans = if gap {
                    0.0
                } else {
                    let net_dist = candidate_distance(net, prev, cand, cache);
                    if !net_dist.is_finite() {
                        continue;
                    }
                    (net_dist - straight).abs() / params.transition_scale_m
                };
                let total = cost[i - 1][k] + trans + e;
                if total < row[j] {
                    row[j] = total;
                    brow[j] = k;
                }
            }
        }
        if row.iter().all(|c| !c.is_finite()) {
            return None; // disconnected transition; caller reports unmatchable
        }
        cost.push(row);
        back.push(brow);
    }
    let last = cost[n - 1]
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, _)| j)?;
    let mut picks = vec![0usize; n];
    picks[n - 1] = last;
    for i in (1..n).rev() {
        picks[i - 1] = back[i][picks[i]];
    }
    Some((0..n).map(|i| candidates[lo + i][picks[i]]).collect())
}

/// A maximal run of consecutive candidates on one edge.
struct Run {
    edge: EdgeId,
    first_arc: f64,
    last_arc: f64,
}

/// Builds a connected walk from the chosen candidate sequence: consecutive
/// same-edge candidates compress into one traversal, adjacent runs connect
/// through shared nodes, and non-adjacent runs are bridged by
/// geometric-shortest paths. Returns `None` for degenerate matches.
fn stitch_walk(net: &RoadNetwork, chosen: &[Candidate], pin_tolerance_m: f64) -> Option<Walk> {
    let mut runs: Vec<Run> = Vec::new();
    for c in chosen {
        match runs.last_mut() {
            Some(run) if run.edge == c.edge => run.last_arc = c.arc_m,
            _ => runs.push(Run { edge: c.edge, first_arc: c.arc_m, last_arc: c.arc_m }),
        }
    }
    trim_pinned_runs(net, &mut runs, pin_tolerance_m);

    if runs.len() == 1 {
        let run = &runs[0];
        let scale = arc_scale(net, run.edge);
        if (run.last_arc - run.first_arc).abs() * scale < 1.0 {
            return None; // no net movement: matched to a single location
        }
        let e = net.edge(run.edge);
        let nodes = if run.last_arc >= run.first_arc { vec![e.a, e.b] } else { vec![e.b, e.a] };
        return Some(Walk { nodes, edges: vec![run.edge] });
    }

    // Entry node of the first run: minimize exit-side cost toward run 2.
    let geo_cost = |e: EdgeId| net.edge(e).length_m;
    let mut entry = {
        let e0 = net.edge(runs[0].edge);
        let scale0 = arc_scale(net, runs[0].edge);
        let len0 = e0.length_m as f64;
        let e1 = net.edge(runs[1].edge);
        let scale1 = arc_scale(net, runs[1].edge);
        let len1 = e1.length_m as f64;
        let mut best = (f64::INFINITY, e0.a);
        for (exit, off_exit) in [
            (e0.b, len0 - runs[0].last_arc * scale0),
            (e0.a, runs[0].last_arc * scale0),
        ] {
            for (enter, off_enter) in [
                (e1.a, runs[1].first_arc * scale1),
                (e1.b, len1 - runs[1].first_arc * scale1),
            ] {
                let d = shortest_path(net, geo_cost, exit, enter).map(|r| r.cost as f64);
                let Some(d) = d else { continue };
                let cost = off_exit + d + off_enter;
                let cand_entry = net.other_endpoint(runs[0].edge, exit);
                if cost < best.0 || (cost == best.0 && cand_entry < best.1) {
                    best = (cost, cand_entry);
                }
            }
        }
        if !best.0.is_finite() {
            return None;
        }
        best.1
    };

    let mut nodes = vec![entry];
    let mut edges = Vec::new();
    for (j, run) in runs.iter().enumerate() {
        // traverse the run's edge fully: entry -> other endpoint
        let exit = net.other_endpoint(run.edge, entry);
        edges.push(run.edge);
        nodes.push(exit);
        if j + 1 == runs.len() {
            break;
        }
        // choose the entry point of the next run and bridge to it
        let next = net.edge(runs[j + 1].edge);
        let scale = arc_scale(net, runs[j + 1].edge);
        let len = next.length_m as f64;
        let mut best: Option<(f64, NodeId, Walk)> = None;
        for (enter, off_enter) in [
            (next.a, runs[j + 1].first_arc * scale),
            (next.b, len - runs[j + 1].first_arc * scale),
        ] {
            let Some(r) = shortest_path(net, geo_cost, exit, enter) else { continue };
            let cost = r.cost as f64 + off_enter;
            let better = match &best {
                None => true,
                Some((bc, bn, _)) => cost < *bc || (cost == *bc && enter < *bn),
            };
            if better {
                best = Some((cost, enter, r.walk));
            }
        }
        let (_, enter, bridge) = best?;
        if !bridge.is_empty() {
            edges.extend(bridge.edges.iter().copied());
            nodes.extend(bridge.nodes[1..].iter().copied());
        }
        entry = enter;
    }
    Some(Walk { nodes, edges })
}

/// Removes runs that carry no route information: a run whose projections sit
/// within the GPS noise scale of a junction node it shares with a neighboring
/// run's edge is an artifact of points lying at that node, where every
/// incident edge is an equally good candidate. Keeping it would fabricate a
/// traversal of an edge no point actually followed.
fn trim_pinned_runs(net: &RoadNetwork, runs: &mut Vec<Run>, pin_tolerance_m: f64) {
    let mut changed = true;
    while changed && runs.len() >= 2 {
        changed = false;
        let mut i = 0;
        while i < runs.len() && runs.len() >= 2 {
            let run = &runs[i];
            let scale = arc_scale(net, run.edge);
            let span = (run.last_arc - run.first_arc).abs() * scale;
            if span < pin_tolerance_m {
                let e = net.edge(run.edge);
                let len = e.length_m as f64;
                let pos = run.first_arc * scale;
                let (pin_node, off) =
                    if pos <= len - pos { (e.a, pos) } else { (e.b, len - pos) };
                let neighbor_shares_node = |j: Option<usize>| {
                    j.and_then(|j| runs.get(j)).is_some_and(|r: &Run| {
                        let n = net.edge(r.edge);
                        n.a == pin_node || n.b == pin_node
                    })
                };
                if off < pin_tolerance_m
                    && (neighbor_shares_node(i.checked_sub(1))
                        || neighbor_shares_node(Some(i + 1)))
                {
                    runs.remove(i);
                    changed = true;
                    continue;
                }
            }
            i += 1;
        }
    }
}

/// Per-road-type summed edge length of a walk, in meters. Repeated edges in
/// a walk count once per traversal; values sum to the matched length.
pub fn length_by_type(matched: &MatchedPath, net: &RoadNetwork) -> BTreeMap<RoadType, u64> {
    let mut out: BTreeMap<RoadType, u64> = BTreeMap::new();
    for &e in &matched.walk.edges {
        *out.entry(net.road_type(e).clone()).or_insert(0) += net.edge(e).length_m;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::RoadNetwork;

    /// Local planar helper: meters east/north of (7.0, 50.0) to lon/lat.
    fn ll(x_m: f64, y_m: f64) -> [f64; 2] {
        let k = crate::geom::EARTH_RADIUS_M.to_radians();
        [7.0 + x_m / (k * 50.0_f64.to_radians().cos()), 50.0 + y_m / k]
    }

    /// Triangle with geometry-consistent lengths: A-B 200 m (residential),
    /// A-C and C-B 156 m each (cycleway).
    fn triangle() -> RoadNetwork {
        let a = ll(0.0, 0.0);
        let b = ll(200.0, 0.0);
        let c = ll(100.0, 120.0);
        RoadNetwork::build(
            vec![
                ("A".into(), a[0], a[1], None),
                ("B".into(), b[0], b[1], None),
                ("C".into(), c[0], c[1], None),
            ],
            vec![
                ("AB".into(), 0, 1, 200, RoadType::new("residential")),
                ("AC".into(), 0, 2, 156, RoadType::new("cycleway")),
                ("CB".into(), 2, 1, 156, RoadType::new("cycleway")),
            ],
        )
        .unwrap()
    }

    fn sample_route(points: &[[f64; 2]], step_m: f64) -> Vec<TrackPoint> {
        crate::geom::sample_polyline_m(points, step_m)
            .into_iter()
            .map(|p| TrackPoint { lon: p[0], lat: p[1], ele: None, time: None })
            .collect()
    }

    fn trajectory(id: &str, points: Vec<TrackPoint>) -> Trajectory {
        Trajectory { id: id.into(), activity: None, points, meta: TrackMeta::default() }
    }

    fn node(net: &RoadNetwork, ext: &str) -> NodeId {
        net.node_by_ext_id(ext).unwrap()
    }

    #[test]
    fn zero_noise_points_match_the_ridden_walk() {
        let net = triangle();
        let pts = sample_route(&[ll(0.0, 0.0), ll(100.0, 120.0), ll(200.0, 0.0)], 10.0);
        let traj = trajectory("t", pts);
        let matched = map_match(&net, &traj, &MatchParams::default()).unwrap();
        assert_eq!(matched.fragments.len(), 1);
        assert!(matched.unmatchable_points.is_empty());
        let m = &matched.fragments[0];
        assert_eq!(m.walk.nodes, vec![node(&net, "A"), node(&net, "C"), node(&net, "B")]);
        assert_eq!(m.matched_length_m, 312);
        assert!(m.snap_distances_m.iter().all(|&d| d <= 30.0));
    }

    /// Brute-force most-likely candidate sequence: enumerate every sequence
    /// in the candidate product and minimize the same objective the DP uses.
    fn brute_force_pick(
        net: &RoadNetwork,
        traj: &Trajectory,
        params: &MatchParams,
    ) -> Vec<Candidate> {
        let candidates: Vec<Vec<Candidate>> = traj
            .points
            .iter()
            .map(|p| find_candidates(net, [p.lon, p.lat], params))
            .collect();
        assert!(candidates.iter().all(|c| !c.is_empty()));
        let mut cache = HashMap::new();
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut picks = vec![0usize; candidates.len()];
        loop {
            let mut total = 0.0;
            for (i, &j) in picks.iter().enumerate() {
                let c = &candidates[i][j];
                let r = c.dist_m / params.sigma_gps_m;
                total += r * r / 2.0;
                if i > 0 {
                    let prev = &candidates[i - 1][picks[i - 1]];
                    let straight = crate::geom::haversine_m(
                        [traj.points[i - 1].lon, traj.points[i - 1].lat],
                        [traj.points[i].lon, traj.points[i].lat],
                    );
                    if straight <= params.gap_distance_m {
                        let d = candidate_distance(net, prev, c, &mut cache);
                        total += (d - straight).abs() / params.transition_scale_m;
                    }
                }
            }
            if best.as_ref().map_or(true, |(b, _)| total < *b) {
                best = Some((total, picks.clone()));
            }
            // advance the mixed-radix counter
            let mut i = 0;
            loop {
                if i == picks.len() {
                    let (_, picks) = best.unwrap();
                    return picks
                        .iter()
                        .enumerate()
                        .map(|(i, &j)| candidates[i][j])
                        .collect();
                }
                picks[i] += 1;
                if picks[i] < candidates[i].len() {
                    break;
                }
                picks[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn noisy_points_agree_with_brute_force_viterbi() {
        let net = triangle();
        let clean = crate::geom::sample_polyline_m(
            &[ll(0.0, 0.0), ll(100.0, 120.0), ll(200.0, 0.0)],
            26.0,
        );
        // deterministic <= 5 m perturbation
        let k = crate::geom::EARTH_RADIUS_M.to_radians();
        let noisy: Vec<TrackPoint> = clean
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let off = if i % 2 == 0 { 4.0 } else { -5.0 };
                TrackPoint {
                    lon: p[0] + off / (k * 50.0_f64.to_radians().cos()),
                    lat: p[1] - off / (2.0 * k),
                    ele: None,
                    time: None,
                }
            })
            .collect();
        let traj = trajectory("noisy", noisy);
        let params = MatchParams::default();

        let oracle = brute_force_pick(&net, &traj, &params);
        let oracle_walk = stitch_walk(&net, &oracle, params.sigma_gps_m).unwrap();

        let matched = map_match(&net, &traj, &params).unwrap();
        assert_eq!(matched.fragments.len(), 1);
        assert_eq!(matched.fragments[0].walk, oracle_walk);
        assert_eq!(
            matched.fragments[0].walk.nodes,
            vec![node(&net, "A"), node(&net, "C"), node(&net, "B")]
        );
    }

    #[test]
    fn far_point_is_unmatchable_with_its_index() {
        // 3-point trajectory: the far middle point leaves fragments of one
        // point each, so the whole trajectory is unmatchable
        let net = triangle();
        let far = ll(500.0, -500.0);
        let pts = vec![
            TrackPoint { lon: ll(0.0, 0.0)[0], lat: ll(0.0, 0.0)[1], ele: None, time: None },
            TrackPoint { lon: far[0], lat: far[1], ele: None, time: None },
            TrackPoint { lon: ll(100.0, 120.0)[0], lat: ll(100.0, 120.0)[1], ele: None, time: None },
        ];
        let traj = trajectory("offroad", pts);
        let err = map_match(&net, &traj, &MatchParams::default()).unwrap_err();
        match err {
            MatchError::Unmatchable { point_index, .. } => assert_eq!(point_index, 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn interior_unmatchable_point_splits_into_fragments() {
        let net = triangle();
        let mut pts = sample_route(&[ll(0.0, 0.0), ll(100.0, 120.0)], 30.0);
        let first_len = pts.len();
        let far = ll(2000.0, 2000.0);
        pts.push(TrackPoint { lon: far[0], lat: far[1], ele: None, time: None });
        pts.extend(sample_route(&[ll(100.0, 120.0), ll(200.0, 0.0)], 30.0));
        let traj = trajectory("split", pts);
        let matched = map_match(&net, &traj, &MatchParams::default()).unwrap();
        assert_eq!(matched.unmatchable_points, vec![first_len]);
        assert_eq!(matched.fragments.len(), 2);
        assert_eq!(matched.fragments[0].point_range, (0, first_len - 1));
        assert_eq!(matched.fragments[0].walk.edges.len(), 1);
        assert_eq!(matched.fragments[1].walk.edges.len(), 1);
        assert_eq!(matched.fragments[1].fragment, 1);
    }

    #[test]
    fn rematching_a_matched_walk_is_idempotent() {
        let net = triangle();
        let pts = sample_route(&[ll(0.0, 0.0), ll(100.0, 120.0), ll(200.0, 0.0)], 10.0);
        let traj = trajectory("t", pts);
        let params = MatchParams::default();
        let first = map_match(&net, &traj, &params).unwrap();
        let first = &first.fragments[0];

        // resample points densely from the matched walk's geometry
        let mut walk_line: Vec<[f64; 2]> = Vec::new();
        for (i, &e) in first.walk.edges.iter().enumerate() {
            let edge = net.edge(e);
            let mut seg = edge.geometry.clone();
            if edge.a != first.walk.nodes[i] {
                seg.reverse();
            }
            if i > 0 {
                seg.remove(0);
            }
            walk_line.extend(seg);
        }
        let re = trajectory("re", sample_route(&walk_line, 8.0));
        let second = map_match(&net, &re, &params).unwrap();
        assert_eq!(second.fragments.len(), 1);
        assert_eq!(second.fragments[0].walk, first.walk);
    }

    #[test]
    fn length_by_type_sums_per_traversal() {
        let net = triangle();
        let a = node(&net, "A");
        let b = node(&net, "B");
        let c = node(&net, "C");
        let ac = net.edge_by_ext_id("AC").unwrap();
        let ab = net.edge_by_ext_id("AB").unwrap();

        let single = MatchedPath {
            trajectory_id: "t".into(),
            fragment: 0,
            point_range: (0, 0),
            walk: Walk { nodes: vec![a, c], edges: vec![ac] },
            matched_length_m: 156,
            snap_distances_m: vec![],
        };
        let by_type = length_by_type(&single, &net);
        assert_eq!(by_type[&RoadType::new("cycleway")], 156);

        let mixed = MatchedPath {
            walk: Walk { nodes: vec![b, a, c], edges: vec![ab, ac] },
            matched_length_m: 356,
            ..single.clone()
        };
        let by_type = length_by_type(&mixed, &net);
        assert_eq!(by_type[&RoadType::new("residential")], 200);
        assert_eq!(by_type[&RoadType::new("cycleway")], 156);

        // out-and-back: each traversal counts
        let out_back = MatchedPath {
            walk: Walk { nodes: vec![a, c, a], edges: vec![ac, ac] },
            matched_length_m: 312,
            ..single
        };
        let by_type = length_by_type(&out_back, &net);
        assert_eq!(by_type[&RoadType::new("cycleway")], 312);
        assert_eq!(
            by_type.values().sum::<u64>(),
            out_back.matched_length_m
        );
    }

    #[test]
    fn skips_short_tracks_with_warning() {
        let mut load = TrajectoryLoad::default();
        finish_track(
            "tiny".into(),
            RawTrack {
                name: None,
                activity: None,
                points: vec![TrackPoint { lon: 7.0, lat: 50.0, ele: None, time: None }; 3],
            },
            &mut load,
        );
        assert!(load.trajectories.is_empty());
        assert_eq!(load.warnings.len(), 1);
    }

    #[test]
    fn trajectory_csv_groups_and_sorts() {
        let text = "trajectory_id,seq,lon,lat,ele\nt1,2,7.002,50.0,12\nt1,1,7.001,50.0,\nt2,1,7.1,50.1,5\nt1,3,7.003,50.0,13\nt2,2,7.101,50.1,6\n";
        let tracks = parse_trajectory_csv(text).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].0, "t1");
        assert_eq!(tracks[0].1.points.len(), 3);
        assert_eq!(tracks[0].1.points[0].lon, 7.001);
        assert_eq!(tracks[0].1.points[0].ele, None);
        assert_eq!(tracks[1].1.points[0].ele, Some(5.0));

        let bad = "trajectory_id,seq,lon,lat\nt1,1,oops,50.0\n";
        match parse_trajectory_csv(bad) {
            Err(CsvTrackError::Row { row, .. }) => assert_eq!(row, 2),
            _ => panic!("expected row error"),
        }
    }
}
