//! Planar point-to-segment distance shared by road selection and rasterization.

/// Squared Euclidean distance from `p` to the segment `a`–`b`.
///
/// Degenerate segments (a == b) reduce to point distance.
#[inline]
pub fn point_segment_dist_sq(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let px = p[0] - a[0];
    let py = p[1] - a[1];
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 {
        ((px * dx + py * dy) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let ex = px - t * dx;
    let ey = py - t * dy;
    ex * ex + ey * ey
}

/// Minimum distance from `p` to a polyline given as consecutive vertices.
pub fn point_polyline_dist(p: [f64; 2], vertices: &[[f64; 2]]) -> f64 {
    match vertices {
        [] => f64::INFINITY,
        [only] => point_segment_dist_sq(p, *only, *only).sqrt(),
        _ => vertices
            .windows(2)
            .map(|w| point_segment_dist_sq(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
            .sqrt(),
    }
}
