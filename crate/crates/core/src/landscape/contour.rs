//! Marching-squares iso-lines and SVG rendering of a [`LossSurface`].

use std::collections::BTreeMap;
use std::fmt::Write;

use super::LossSurface;
use crate::error::{Error, Result};

/// Points in `(alpha, beta)` coordinates. Closed curves repeat their first point.
pub type Polyline = Vec<(f64, f64)>;

/// Grid edge identity: `(vertical, i, j)`. A horizontal edge joins `(i, j)`
/// and `(i + 1, j)`; a vertical one joins `(i, j)` and `(i, j + 1)`.
type EdgeKey = (bool, usize, usize);

fn edge_point(surface: &LossSurface, key: EdgeKey, level: f64) -> (f64, f64) {
    let (vertical, i, j) = key;
    let (i2, j2) = if vertical { (i, j + 1) } else { (i + 1, j) };
    let (va, vb) = (surface.get(i, j), surface.get(i2, j2));
    let t = (level - va) / (vb - va);
    let g = &surface.grid;
    let (a0, b0) = (g.alpha(i), g.beta(j));
    let (a1, b1) = (g.alpha(i2), g.beta(j2));
    (a0 + t * (a1 - a0), b0 + t * (b1 - b0))
}

fn cell_segments(surface: &LossSurface, i: usize, j: usize, level: f64, out: &mut Vec<(EdgeKey, EdgeKey)>) {
    let v = [
        surface.get(i, j),
        surface.get(i + 1, j),
        surface.get(i + 1, j + 1),
        surface.get(i, j + 1),
    ];
    let above = v.map(|x| x >= level);
    // bottom, right, top, left
    let edges: [EdgeKey; 4] = [(false, i, j), (true, i + 1, j), (false, i, j + 1), (true, i, j)];
    let crosses = [
        above[0] != above[1],
        above[1] != above[2],
        above[3] != above[2],
        above[0] != above[3],
    ];
    let crossing: Vec<usize> = (0..4).filter(|&k| crosses[k]).collect();
    match crossing.len() {
        2 => out.push((edges[crossing[0]], edges[crossing[1]])),
        4 => {
            let center_above = v.iter().sum::<f64>() / 4.0 >= level;
            // Either the pair (v0, v2) or (v1, v3) is above; cut off the
            // corners that are not joined through the center.
            let isolate_v1_v3 = above[0] == center_above;
            if isolate_v1_v3 {
                out.push((edges[0], edges[1]));
                out.push((edges[2], edges[3]));
            } else {
                out.push((edges[3], edges[0]));
                out.push((edges[1], edges[2]));
            }
        }
        _ => {}
    }
}

/// Joins unordered segments into polylines. Open chains start at their
/// lowest free end; loops start at their lowest edge and close explicitly.
fn chain(segments: &[(EdgeKey, EdgeKey)]) -> Vec<Vec<EdgeKey>> {
    let mut adjacency: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(s);
        adjacency.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();

    let walk = |start: EdgeKey, used: &mut Vec<bool>| -> Vec<EdgeKey> {
        let mut line = vec![start];
        let mut at = start;
        loop {
            let next = adjacency[&at].iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            let (a, b) = segments[s];
            at = if a == at { b } else { a };
            line.push(at);
        }
        line
    };

    let ends: Vec<EdgeKey> = adjacency
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    for start in ends {
        if adjacency[&start].iter().all(|&s| used[s]) {
            continue;
        }
        lines.push(walk(start, &mut used));
    }
    let keys: Vec<EdgeKey> = adjacency.keys().copied().collect();
    for start in keys {
        if adjacency[&start].iter().all(|&s| used[s]) {
            continue;
        }
        lines.push(walk(start, &mut used));
    }
    lines
}

/// Iso-lines at `levels` values evenly spaced strictly between the surface's
/// minimum and maximum. Returns `(level, polylines)` pairs; empty when the
/// surface is constant.
pub fn march(surface: &LossSurface, levels: usize) -> Result<Vec<(f64, Vec<Polyline>)>> {
    if levels < 2 {
        return Err(Error::Config(format!("contour levels must be >= 2, got {levels}")));
    }
    let (lo, hi) = surface.min_max();
    if lo == hi {
        return Ok(Vec::new());
    }
    let n = surface.n();
    let mut result = Vec::with_capacity(levels);
    for k in 1..=levels {
        let level = lo + (hi - lo) * k as f64 / (levels + 1) as f64;
        let mut segments = Vec::new();
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                cell_segments(surface, i, j, level, &mut segments);
            }
        }
        let lines = chain(&segments)
            .into_iter()
            .map(|keys| keys.into_iter().map(|key| edge_point(surface, key, level)).collect())
            .collect();
        result.push((level, lines));
    }
    Ok(result)
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

/// Standalone SVG 1.1 contour plot with labelled alpha/beta axes.
pub fn emit_contour(surface: &LossSurface, levels: usize) -> Result<String> {
    let contours = march(surface, levels)?;
    let g = &surface.grid;
    let plot = SIZE - 2.0 * MARGIN;
    let to_x = |a: f64| MARGIN + (a - g.alpha_min) / (g.alpha_max - g.alpha_min) * plot;
    let to_y = |b: f64| SIZE - MARGIN - (b - g.beta_min) / (g.beta_max - g.beta_min) * plot;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot}" height="{plot}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">α</text>"#,
        SIZE / 2.0,
        SIZE - MARGIN / 3.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">β</text>"#,
        MARGIN / 3.0,
        SIZE / 2.0
    );
    for (v, x, y, anchor) in [
        (g.alpha_min, to_x(g.alpha_min), SIZE - MARGIN + 14.0, "start"),
        (g.alpha_max, to_x(g.alpha_max), SIZE - MARGIN + 14.0, "end"),
    ] {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.3}" y="{y:.3}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{v}</text>"#
        );
    }
    for (v, y) in [(g.beta_min, to_y(g.beta_min)), (g.beta_max, to_y(g.beta_max) + 10.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{y:.3}" font-family="sans-serif" font-size="10" text-anchor="end">{v}</text>"#,
            MARGIN - 4.0
        );
    }

    if contours.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">constant surface: no contours</text>"#,
            SIZE / 2.0,
            SIZE / 2.0
        );
    } else {
        let count = contours.len();
        for (k, (level, lines)) in contours.iter().enumerate() {
            // Low levels blue, high levels red.
            let t = k as f64 / (count - 1).max(1) as f64;
            let color = format!("rgb({},0,{})", (255.0 * t).round(), (255.0 * (1.0 - t)).round());
            let _ = writeln!(svg, r#"<g stroke="{color}" fill="none" stroke-width="1" data-level="{level:.6e}">"#);
            for line in lines {
                let points: Vec<String> = line
                    .iter()
                    .map(|&(a, b)| format!("{:.3},{:.3}", to_x(a), to_y(b)))
                    .collect();
                let _ = writeln!(svg, r#"<polyline points="{}"/>"#, points.join(" "));
            }
            let _ = writeln!(svg, "</g>");
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
