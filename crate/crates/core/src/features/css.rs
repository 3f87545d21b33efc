//! Corner detection by curvature scale space on edge contours: trace edge
//! pixels into ordered chains, bridge small gaps, smooth each chain with a
//! fixed low-scale Gaussian, and keep curvature maxima that pass an
//! adaptive threshold (a multiple of the local mean curvature) and a
//! corner-angle check that rejects rounded corners.

use super::{CornerMap, EdgeMap};

#[derive(Clone, Debug, PartialEq)]
pub struct CssParams {
    /// Contour smoothing scale.
    pub sigma: f64,
    /// A curvature maximum must exceed this multiple of the mean curvature
    /// over its region of support.
    pub threshold_ratio: f64,
    /// Corners with an opening angle above this are considered rounded and
    /// dropped.
    pub max_corner_angle_deg: f64,
    /// Contour endpoints at most this far apart are joined.
    pub max_gap: f64,
    /// Chains shorter than this carry no reliable curvature and are skipped.
    pub min_contour_len: usize,
}

impl Default for CssParams {
    fn default() -> Self {
        Self {
            sigma: 4.0,
            threshold_ratio: 1.5,
            max_corner_angle_deg: 162.0,
            max_gap: 2.0,
            min_contour_len: 8,
        }
    }
}

#[derive(Clone)]
struct Contour {
    points: Vec<(i32, i32)>,
    closed: bool,
}

pub(super) fn detect(edges: &EdgeMap, params: &CssParams) -> CornerMap {
    let mut contours = trace_contours(edges);
    bridge_gaps(&mut contours, params.max_gap);

    let mut corners = Vec::new();
    for contour in &contours {
        if contour.points.len() < params.min_contour_len {
            continue;
        }
        find_corners(contour, params, &mut corners);
    }
    corners.sort_unstable();
    corners.dedup();
    CornerMap::new(edges.width(), edges.height(), corners)
}

/// 8-neighborhood scan order; fixed so tracing is deterministic.
const NEIGHBORS: [(i32, i32); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Links edge pixels into ordered chains. Open chains are started at
/// endpoints (pixels with at most one edge neighbor); whatever remains is
/// walked as closed loops. Junctions simply terminate chains.
fn trace_contours(edges: &EdgeMap) -> Vec<Contour> {
    let (w, h) = (edges.width() as i32, edges.height() as i32);
    let at = |x: i32, y: i32| x >= 0 && y >= 0 && x < w && y < h && edges.is_edge(x as usize, y as usize);

    let mut visited = vec![false; (w * h) as usize];
    let mut contours = Vec::new();

    // Prefer the neighbor that continues the current heading; fixed scan
    // order breaks ties. This keeps traces smooth through 2-pixel-thick
    // spots instead of weaving, which would fake curvature.
    let walk = |start: (i32, i32), visited: &mut Vec<bool>| -> Vec<(i32, i32)> {
        let mut chain = vec![start];
        visited[(start.1 * w + start.0) as usize] = true;
        let mut current = start;
        let mut heading: Option<(i32, i32)> = None;
        loop {
            let mut best: Option<((i32, i32), f64)> = None;
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (current.0 + dx, current.1 + dy);
                if !at(nx, ny) || visited[(ny * w + nx) as usize] {
                    continue;
                }
                let score = match heading {
                    None => 1.0,
                    Some((hx, hy)) => {
                        let dot = f64::from(hx * dx + hy * dy);
                        dot / (f64::from(hx * hx + hy * hy).sqrt()
                            * f64::from(dx * dx + dy * dy).sqrt())
                    }
                };
                if best.map_or(true, |(_, s)| score > s) {
                    best = Some(((nx, ny), score));
                }
            }
            match best {
                Some((p, _)) => {
                    visited[(p.1 * w + p.0) as usize] = true;
                    heading = Some((p.0 - current.0, p.1 - current.1));
                    chain.push(p);
                    current = p;
                }
                None => break,
            }
        }
        chain
    };

    let neighbor_count = |x: i32, y: i32| {
        NEIGHBORS
            .iter()
            .filter(|(dx, dy)| at(x + dx, y + dy))
            .count()
    };

    // Endpoints first so open contours are traced end to end.
    for y in 0..h {
        for x in 0..w {
            if at(x, y) && !visited[(y * w + x) as usize] && neighbor_count(x, y) <= 1 {
                let chain = walk((x, y), &mut visited);
                contours.push(Contour {
                    points: chain,
                    closed: false,
                });
            }
        }
    }
    // Remaining pixels belong to loops (or fragments around junctions).
    for y in 0..h {
        for x in 0..w {
            if at(x, y) && !visited[(y * w + x) as usize] {
                let chain = walk((x, y), &mut visited);
                let closed = chain.len() > 3 && {
                    let first = chain[0];
                    let last = chain[chain.len() - 1];
                    (first.0 - last.0).abs() <= 1 && (first.1 - last.1).abs() <= 1
                };
                contours.push(Contour {
                    points: chain,
                    closed,
                });
            }
        }
    }
    contours
}

/// Joins chains whose endpoints fall within `max_gap` of each other, then
/// closes chains whose own ends meet.
fn bridge_gaps(contours: &mut Vec<Contour>, max_gap: f64) {
    let gap_sq = max_gap * max_gap;
    let dist_sq = |a: (i32, i32), b: (i32, i32)| {
        let (dx, dy) = ((a.0 - b.0) as f64, (a.1 - b.1) as f64);
        dx * dx + dy * dy
    };

    let mut merged = true;
    while merged {
        merged = false;
        'outer: for i in 0..contours.len() {
            if contours[i].closed {
                continue;
            }
            for j in i + 1..contours.len() {
                if contours[j].closed {
                    continue;
                }
                let (i_head, i_tail) = (contours[i].points[0], *contours[i].points.last().unwrap());
                let (j_head, j_tail) = (contours[j].points[0], *contours[j].points.last().unwrap());
                let join = if dist_sq(i_tail, j_head) <= gap_sq {
                    Some(false)
                } else if dist_sq(i_tail, j_tail) <= gap_sq {
                    Some(true)
                } else if dist_sq(i_head, j_head) <= gap_sq {
                    contours[i].points.reverse();
                    Some(false)
                } else if dist_sq(i_head, j_tail) <= gap_sq {
                    contours[i].points.reverse();
                    Some(true)
                } else {
                    None
                };
                if let Some(reverse_j) = join {
                    let mut other = contours.remove(j).points;
                    if reverse_j {
                        other.reverse();
                    }
                    contours[i].points.extend(other);
                    merged = true;
                    break 'outer;
                }
            }
        }
    }

    for contour in contours.iter_mut() {
        if !contour.closed && contour.points.len() > 3 {
            let first = contour.points[0];
            let last = *contour.points.last().unwrap();
            if dist_sq(first, last) <= gap_sq {
                contour.closed = true;
            }
        }
    }
}

/// Gaussian kernel and its first two derivatives, radius 3 sigma.
fn derivative_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, usize) {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut g = Vec::with_capacity(2 * radius + 1);
    for i in -(radius as isize)..=radius as isize {
        let t = i as f64;
        g.push((-t * t / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = g.iter().sum();
    for v in &mut g {
        *v /= sum;
    }
    let mut g1 = Vec::with_capacity(g.len());
    let mut g2 = Vec::with_capacity(g.len());
    for (idx, &v) in g.iter().enumerate() {
        let t = idx as f64 - radius as f64;
        g1.push(-t / (sigma * sigma) * v);
        g2.push((t * t / sigma.powi(4) - 1.0 / (sigma * sigma)) * v);
    }
    (g, g1, g2, radius)
}

fn convolve(signal: &[f64], kernel: &[f64], radius: usize, closed: bool) -> Vec<f64> {
    let len = signal.len() as isize;
    let sample = |idx: isize| -> f64 {
        let i = if closed {
            idx.rem_euclid(len)
        } else {
            idx.clamp(0, len - 1)
        };
        signal[i as usize]
    };
    (0..len)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, &kv)| kv * sample(i + k as isize - radius as isize))
                .sum()
        })
        .collect()
}

fn find_corners(contour: &Contour, params: &CssParams, out: &mut Vec<(usize, usize)>) {
    let xs: Vec<f64> = contour.points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = contour.points.iter().map(|p| p.1 as f64).collect();
    let (g, g1, g2, radius) = derivative_kernels(params.sigma);
    let closed = contour.closed;

    let sx = convolve(&xs, &g, radius, closed);
    let sy = convolve(&ys, &g, radius, closed);
    let x1 = convolve(&xs, &g1, radius, closed);
    let y1 = convolve(&ys, &g1, radius, closed);
    let x2 = convolve(&xs, &g2, radius, closed);
    let y2 = convolve(&ys, &g2, radius, closed);

    let len = xs.len();
    let kappa: Vec<f64> = (0..len)
        .map(|i| {
            let speed_sq = x1[i] * x1[i] + y1[i] * y1[i];
            if speed_sq < 1e-12 {
                0.0
            } else {
                (x1[i] * y2[i] - y1[i] * x2[i]).abs() / speed_sq.powf(1.5)
            }
        })
        .collect();

    // Open contours have unreliable curvature near the clamped ends.
    let (lo, hi) = if closed { (0, len) } else { (radius, len.saturating_sub(radius)) };

    let wrap = |i: isize| -> usize { i.rem_euclid(len as isize) as usize };
    for i in lo..hi {
        let prev = if closed { kappa[wrap(i as isize - 1)] } else if i == 0 { 0.0 } else { kappa[i - 1] };
        let next = if closed { kappa[wrap(i as isize + 1)] } else if i + 1 == len { 0.0 } else { kappa[i + 1] };
        if !(kappa[i] > prev && kappa[i] >= next) {
            continue;
        }

        // Region of support: out to the nearest curvature minima.
        let walk = |dir: isize| -> usize {
            let mut j = i as isize;
            loop {
                let next_j = j + dir;
                if !closed && (next_j < 0 || next_j >= len as isize) {
                    break;
                }
                if closed && (next_j - i as isize).unsigned_abs() as usize >= len / 2 {
                    break;
                }
                if kappa[wrap(next_j)] > kappa[wrap(j)] {
                    break;
                }
                j = next_j;
            }
            wrap(j)
        };
        let left = walk(-1);
        let right = walk(1);

        // Mean curvature over the region of support.
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut j = left as isize;
        loop {
            sum += kappa[wrap(j)];
            count += 1;
            if wrap(j) == right || count > len {
                break;
            }
            j += 1;
        }
        let mean = sum / count as f64;
        if count < 3 || kappa[i] < params.threshold_ratio * mean {
            continue;
        }

        // Opening angle between the support arms on the smoothed contour.
        let v1 = (sx[left] - sx[i], sy[left] - sy[i]);
        let v2 = (sx[right] - sx[i], sy[right] - sy[i]);
        let n1 = (v1.0 * v1.0 + v1.1 * v1.1).sqrt();
        let n2 = (v2.0 * v2.0 + v2.1 * v2.1).sqrt();
        if n1 < 1e-9 || n2 < 1e-9 {
            continue;
        }
        let cos_angle = ((v1.0 * v2.0 + v1.1 * v2.1) / (n1 * n2)).clamp(-1.0, 1.0);
        if cos_angle.acos().to_degrees() > params.max_corner_angle_deg {
            continue;
        }

        let (px, py) = contour.points[i];
        out.push((px as usize, py as usize));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_map_from_points(w: usize, h: usize, points: &[(usize, usize)]) -> EdgeMap {
        let mut flags = vec![false; w * h];
        for &(x, y) in points {
            flags[y * w + x] = true;
        }
        EdgeMap::new(w, h, flags)
    }

    fn square_outline(x0: usize, y0: usize, side: usize) -> Vec<(usize, usize)> {
        let mut pts = Vec::new();
        for d in 0..side {
            pts.push((x0 + d, y0));
            pts.push((x0 + d, y0 + side - 1));
            pts.push((x0, y0 + d));
            pts.push((x0 + side - 1, y0 + d));
        }
        pts.sort_unstable();
        pts.dedup();
        pts
    }

    #[test]
    fn square_outline_yields_four_corners_at_vertices() {
        let edges = edge_map_from_points(64, 64, &square_outline(16, 16, 32));
        let corners = detect(&edges, &CssParams::default());
        assert_eq!(corners.len(), 4, "corners: {:?}", corners.points());
        let expected = [(16, 16), (47, 16), (16, 47), (47, 47)];
        for &(ex, ey) in &expected {
            assert!(
                corners
                    .points()
                    .iter()
                    .any(|&(x, y)| x.abs_diff(ex) <= 2 && y.abs_diff(ey) <= 2),
                "missing corner near ({ex},{ey}): {:?}",
                corners.points()
            );
        }
    }

    #[test]
    fn circle_contour_yields_no_corners() {
        let mut points = Vec::new();
        let (cx, cy, r) = (32.0, 32.0, 20.0);
        let steps = 400;
        for k in 0..steps {
            let t = k as f64 / steps as f64 * std::f64::consts::TAU;
            let x = (cx + r * t.cos()).round() as usize;
            let y = (cy + r * t.sin()).round() as usize;
            points.push((x, y));
        }
        points.sort_unstable();
        points.dedup();
        let edges = edge_map_from_points(64, 64, &points);
        let corners = detect(&edges, &CssParams::default());
        assert!(corners.is_empty(), "false corners: {:?}", corners.points());
    }

    #[test]
    fn empty_edge_map_yields_empty_corner_map() {
        let edges = edge_map_from_points(32, 32, &[]);
        assert!(detect(&edges, &CssParams::default()).is_empty());
    }

    #[test]
    fn gaps_up_to_two_pixels_are_bridged() {
        // An L-shaped contour with a 2-pixel hole in one arm still
        // produces the bend corner; without bridging, the bend-side
        // fragment alone also yields it, so check the pieces fused too.
        let mut points: Vec<(usize, usize)> = (8..=47).map(|x| (x, 30)).collect();
        points.retain(|&(x, _)| x != 28); // endpoints land 2 px apart
        points.extend((8..30).map(|y| (47, y)));
        let edges = edge_map_from_points(64, 64, &points);
        let params = CssParams::default();
        let corners = detect(&edges, &params);
        assert!(
            corners.points().iter().any(|&(x, y)| x.abs_diff(47) <= 2 && y.abs_diff(30) <= 2),
            "bend corner not found: {:?}",
            corners.points()
        );
        let mut contours = trace_contours(&edges);
        bridge_gaps(&mut contours, params.max_gap);
        let longest = contours.iter().map(|c| c.points.len()).max().unwrap();
        assert!(longest > 55, "gap not bridged, longest chain {longest}");
    }

    #[test]
    fn detection_is_deterministic() {
        let edges = edge_map_from_points(64, 64, &square_outline(10, 12, 25));
        let a = detect(&edges, &CssParams::default());
        let b = detect(&edges, &CssParams::default());
        assert_eq!(a, b);
    }
}
