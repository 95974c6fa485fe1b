//! Geodesic and planar helpers shared by the network, matching and feature
//! modules. All distances are in meters, all coordinates are `[lon, lat]`
//! degrees (WGS84-style, treated as spherical).

/// Sphere radius used for all geodesic computations.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance between two `[lon, lat]` points.
pub fn haversine_m(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (lon1, lat1) = (a[0].to_radians(), a[1].to_radians());
    let (lon2, lat2) = (b[0].to_radians(), b[1].to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Total geodesic length of a polyline.
pub fn polyline_length_m(line: &[[f64; 2]]) -> f64 {
    line.windows(2).map(|w| haversine_m(w[0], w[1])).sum()
}

/// Local equirectangular projection of `p` relative to `origin`, in meters.
/// Accurate at city scale, which is all the matching and buffering code needs.
fn to_local_m(p: [f64; 2], origin: [f64; 2]) -> [f64; 2] {
    let k = EARTH_RADIUS_M.to_radians(); // meters per degree latitude
    let x = (p[0] - origin[0]) * k * origin[1].to_radians().cos();
    let y = (p[1] - origin[1]) * k;
    [x, y]
}

/// Distance from point `p` to the segment `a`-`b`, plus the clamped projection
/// parameter `t` in `[0, 1]` (0 at `a`, 1 at `b`).
pub fn point_segment_distance_m(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let pl = to_local_m(p, a);
    let bl = to_local_m(b, a);
    let len2 = bl[0] * bl[0] + bl[1] * bl[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((pl[0] * bl[0] + pl[1] * bl[1]) / len2).clamp(0.0, 1.0)
    };
    let dx = pl[0] - t * bl[0];
    let dy = pl[1] - t * bl[1];
    ((dx * dx + dy * dy).sqrt(), t)
}

/// Projection of `p` onto a polyline: distance, plus the arc-length position
/// of the closest point measured from the start of the line.
pub fn point_polyline_projection_m(p: [f64; 2], line: &[[f64; 2]]) -> (f64, f64) {
    debug_assert!(line.len() >= 2);
    let mut best_dist = f64::INFINITY;
    let mut best_arc = 0.0;
    let mut arc = 0.0;
    for w in line.windows(2) {
        let seg_len = haversine_m(w[0], w[1]);
        let (d, t) = point_segment_distance_m(p, w[0], w[1]);
        if d < best_dist {
            best_dist = d;
            best_arc = arc + t * seg_len;
        }
        arc += seg_len;
    }
    (best_dist, best_arc)
}

/// Points spaced `step_m` apart along a polyline, including both endpoints.
pub fn sample_polyline_m(line: &[[f64; 2]], step_m: f64) -> Vec<[f64; 2]> {
    assert!(step_m > 0.0, "sample step must be positive");
    if line.is_empty() {
        return Vec::new();
    }
    if line.len() == 1 {
        return vec![line[0]];
    }
    let total = polyline_length_m(line);
    let mut out = Vec::new();
    let mut target = 0.0;
    let mut arc = 0.0;
    let mut seg = 0;
    while target < total {
        // advance to the segment containing `target`
        loop {
            let seg_len = haversine_m(line[seg], line[seg + 1]);
            if arc + seg_len >= target || seg + 2 == line.len() {
                let t = if seg_len == 0.0 { 0.0 } else { (target - arc) / seg_len };
                let a = line[seg];
                let b = line[seg + 1];
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                break;
            }
            arc += seg_len;
            seg += 1;
        }
        target += step_m;
    }
    out.push(*line.last().unwrap());
    out
}

/// Even-odd rule point-in-polygon test on raw lon/lat coordinates.
/// Containment is topological, so the lack of projection is fine here.
pub fn point_in_ring(p: [f64; 2], ring: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = ring.len();
    if n < 4 {
        return false;
    }
    let mut j = n - 2; // ring is closed: last == first, skip the repeat
    for i in 0..n - 1 {
        let (xi, yi) = (ring[i][0], ring[i][1]);
        let (xj, yj) = (ring[j][0], ring[j][1]);
        if ((yi > p[1]) != (yj > p[1]))
            && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Distance from `p` to a polygon: zero when inside, otherwise the minimum
/// distance to the boundary ring.
pub fn distance_to_polygon_m(p: [f64; 2], ring: &[[f64; 2]]) -> f64 {
    if point_in_ring(p, ring) {
        return 0.0;
    }
    ring.windows(2)
        .map(|w| point_segment_distance_m(p, w[0], w[1]).0)
        .fold(f64::INFINITY, f64::min)
}
