use std::collections::HashMap;

use serde::Serialize;

use crate::error::Result;
use crate::grid::{Point, ScalarField};

/// Stand-in for node values exactly at the level, so that every node has a
/// strict side.
const TIE: f64 = 1e-30;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<Point>,
    pub closed: bool,
}

/// Default branch threshold `h (1 + |ln h|)`.
pub fn default_tau(h: f64) -> f64 {
    h * (1.0 + h.ln().abs())
}

/// Edge identifiers: `2k` is the edge from node `k` to `k + 1`, `2k + 1` the
/// edge from node `k` to `k + N`.
fn h_edge(n: usize, i: usize, j: usize) -> u64 {
    2 * (j * n + i) as u64
}

fn v_edge(n: usize, i: usize, j: usize) -> u64 {
    2 * (j * n + i) as u64 + 1
}

/// Marching-squares contours of `u = level` over the cells whose corners all
/// lie in the field's mask disk, with linear interpolation along cell edges.
/// Saddle cells are resolved by the sign of the cell average.
pub fn extract_free_boundary(u: &ScalarField, level: f64) -> Vec<Polyline> {
    let g = *u.grid();
    let n = g.n();
    let rad = u.mask_radius() + 1e-12;
    let shifted: Vec<f64> = u
        .values()
        .iter()
        .map(|&v| {
            let s = v - level;
            if s == 0.0 {
                TIE
            } else {
                s
            }
        })
        .collect();
    let inside: Vec<bool> = (0..g.len())
        .map(|k| {
            let x = g.node(k % n, k / n);
            x[0].hypot(x[1]) <= rad
        })
        .collect();
    let mut points: HashMap<u64, Point> = HashMap::new();
    let mut crossing = |key: u64, a: usize, b: usize| -> Option<u64> {
        let (va, vb) = (shifted[a], shifted[b]);
        if (va > 0.0) == (vb > 0.0) {
            return None;
        }
        points.entry(key).or_insert_with(|| {
            let t = va / (va - vb);
            let (xa, xb) = (g.node(a % n, a / n), g.node(b % n, b / n));
            [xa[0] + t * (xb[0] - xa[0]), xa[1] + t * (xb[1] - xa[1])]
        });
        Some(key)
    };
    let mut segments: Vec<[u64; 2]> = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let c = [j * n + i, j * n + i + 1, (j + 1) * n + i + 1, (j + 1) * n + i];
            if c.iter().any(|&k| !inside[k]) {
                continue;
            }
            // bottom, right, top, left
            let e = [
                crossing(h_edge(n, i, j), c[0], c[1]),
                crossing(v_edge(n, i + 1, j), c[1], c[2]),
                crossing(h_edge(n, i, j + 1), c[3], c[2]),
                crossing(v_edge(n, i, j), c[0], c[3]),
            ];
            let hit: Vec<u64> = e.iter().flatten().copied().collect();
            match hit.len() {
                2 => segments.push([hit[0], hit[1]]),
                4 => {
                    let mean = c.iter().map(|&k| shifted[k]).sum::<f64>();
                    let e = hit;
                    if (mean > 0.0) == (shifted[c[0]] > 0.0) {
                        segments.push([e[0], e[1]]);
                        segments.push([e[2], e[3]]);
                    } else {
                        segments.push([e[3], e[0]]);
                        segments.push([e[1], e[2]]);
                    }
                }
                _ => {}
            }
        }
    }
    let mut at: HashMap<u64, Vec<usize>> = HashMap::new();
    for (s, seg) in segments.iter().enumerate() {
        for &k in seg {
            at.entry(k).or_default().push(s);
        }
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let walk = |start: usize, from: u64, used: &mut Vec<bool>| -> (Vec<Point>, bool) {
        let mut pts = vec![points[&from]];
        let mut s = start;
        let mut key = from;
        loop {
            used[s] = true;
            let next_key = if segments[s][0] == key { segments[s][1] } else { segments[s][0] };
            pts.push(points[&next_key]);
            key = next_key;
            match at[&key].iter().find(|&&t| !used[t]) {
                Some(&t) => s = t,
                None => break,
            }
        }
        let closed = key == from && pts.len() > 2;
        if closed {
            pts.pop();
        }
        (pts, closed)
    };
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        if let Some(&end) = segments[s].iter().find(|k| at[k].len() == 1) {
            let (pts, closed) = walk(s, end, &mut used);
            out.push(Polyline { points: pts, closed });
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let (pts, closed) = walk(s, segments[s][0], &mut used);
            out.push(Polyline { points: pts, closed });
        }
    }
    out
}

/// Contour vertices of the zero set with sampled `|∇u| ≤ tau`, clustered
/// greedily (most degenerate first) into seeds at least `4h` apart.
/// Vertices outside the sampling band are skipped.
pub fn find_branch_points(u: &ScalarField, tau: f64) -> Result<Vec<Point>> {
    let g = u.grid();
    let mut cand: Vec<(f64, Point)> = Vec::new();
    for line in extract_free_boundary(u, 0.0) {
        for x in line.points {
            if !g.in_safe_band(x) {
                continue;
            }
            let (_, d) = u.sample(x)?;
            let norm = d[0].hypot(d[1]);
            if norm <= tau {
                cand.push((norm, x));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let radius = 4.0 * g.h();
    let mut seeds: Vec<Point> = Vec::new();
    for (_, x) in cand {
        if seeds.iter().all(|s| (s[0] - x[0]).hypot(s[1] - x[1]) > radius) {
            seeds.push(x);
        }
    }
    Ok(seeds)
}
