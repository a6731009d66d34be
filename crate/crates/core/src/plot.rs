//! Plot-ready data series: axis slices through the box center and level-set
//! polylines on the central `x1`-`x2` slice, both as plain CSV.

use crate::grid::GridFunction;
use crate::io::FloatEncoding;
use std::collections::HashMap;

/// Node multi-index at the center of the grid.
fn center_index(u: &GridFunction) -> Vec<usize> {
    u.grid().resolution().iter().map(|r| r / 2).collect()
}

/// Values along `axis` through the grid center, as `(coordinate, value)`.
pub fn axis_slice(u: &GridFunction, axis: usize) -> Vec<(f64, f64)> {
    let grid = u.grid();
    let mut idx = center_index(u);
    (0..grid.resolution()[axis])
        .map(|k| {
            idx[axis] = k;
            let node = grid.index(&idx);
            (grid.coords(node)[axis], u.values()[node])
        })
        .collect()
}

/// CSV with columns `coordinate` and one column per named field.
pub fn slice_csv(axis: usize, fields: &[(&str, &GridFunction)], encoding: FloatEncoding) -> String {
    let mut out = format!("x{}", axis + 1);
    for (name, _) in fields {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let series: Vec<Vec<(f64, f64)>> = fields.iter().map(|(_, u)| axis_slice(u, axis)).collect();
    for k in 0..series[0].len() {
        out.push_str(&encoding.encode(series[0][k].0));
        for s in &series {
            out.push(',');
            out.push_str(&encoding.encode(s[k].1));
        }
        out.push('\n');
    }
    out
}

/// Point on a lattice edge, keyed by its lower node and direction so that
/// neighboring cells share it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct EdgeKey {
    i: usize,
    j: usize,
    vertical: bool,
}

/// Level-set polylines of a node-valued field on a rectangular lattice,
/// by marching squares with saddles resolved by the cell average.
pub fn contour_lines(xs: &[f64], ys: &[f64], f: &[Vec<f64>], level: f64) -> Vec<Vec<(f64, f64)>> {
    let (nx, ny) = (xs.len(), ys.len());
    let point = |e: EdgeKey| -> (f64, f64) {
        let (a, b, pa, pb) = if e.vertical {
            (f[e.i][e.j], f[e.i][e.j + 1], (xs[e.i], ys[e.j]), (xs[e.i], ys[e.j + 1]))
        } else {
            (f[e.i][e.j], f[e.i + 1][e.j], (xs[e.i], ys[e.j]), (xs[e.i + 1], ys[e.j]))
        };
        let t = if b == a { 0.5 } else { ((level - a) / (b - a)).clamp(0.0, 1.0) };
        (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1))
    };
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for i in 0..nx.saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            // corners counterclockwise from the lower left
            let v = [f[i][j], f[i + 1][j], f[i + 1][j + 1], f[i][j + 1]];
            let above: Vec<bool> = v.iter().map(|&c| c >= level).collect();
            let edges = [
                EdgeKey { i, j, vertical: false },
                EdgeKey { i: i + 1, j, vertical: true },
                EdgeKey { i, j: j + 1, vertical: false },
                EdgeKey { i, j, vertical: true },
            ];
            let crossed: Vec<usize> = (0..4).filter(|&k| above[k] != above[(k + 1) % 4]).collect();
            match crossed.len() {
                2 => segments.push((edges[crossed[0]], edges[crossed[1]])),
                4 => {
                    let center_above = v.iter().sum::<f64>() / 4.0 >= level;
                    if center_above == above[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }
    // stitch segments sharing edge points into polylines
    let mut adjacency: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(s);
        adjacency.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let order: Vec<usize> = {
        // open chains start at endpoints of degree one
        let mut starts: Vec<usize> = (0..segments.len())
            .filter(|&s| adjacency[&segments[s].0].len() == 1 || adjacency[&segments[s].1].len() == 1)
            .collect();
        starts.extend(0..segments.len());
        starts
    };
    for s0 in order {
        if used[s0] {
            continue;
        }
        used[s0] = true;
        let (a, b) = segments[s0];
        let (mut start, mut end) = if adjacency[&a].len() == 1 { (a, b) } else { (b, a) };
        if adjacency[&start].len() != 1 && adjacency[&end].len() == 1 {
            std::mem::swap(&mut start, &mut end);
        }
        let mut keys = vec![start, end];
        let mut cur = end;
        loop {
            let next = adjacency[&cur].iter().copied().find(|&s| !used[s]);
            let Some(s) = next else { break };
            used[s] = true;
            let (p, q) = segments[s];
            cur = if p == cur { q } else { p };
            keys.push(cur);
        }
        lines.push(keys.into_iter().map(point).collect());
    }
    lines
}

/// Contours of `u` on the central `x1`-`x2` slice at `levels` values evenly
/// spaced strictly between the slice minimum and maximum. CSV columns:
/// `level,polyline,point,x1,x2`.
pub fn contour_csv(u: &GridFunction, levels: usize, encoding: FloatEncoding) -> String {
    let grid = u.grid();
    let mut out = String::from("level,polyline,point,x1,x2\n");
    if grid.dim() < 2 || levels == 0 {
        return out;
    }
    let res = grid.resolution();
    let mut idx = center_index(u);
    let mut xs = Vec::with_capacity(res[0]);
    let mut ys = Vec::with_capacity(res[1]);
    let mut f = vec![vec![0.0; res[1]]; res[0]];
    for i in 0..res[0] {
        for j in 0..res[1] {
            idx[0] = i;
            idx[1] = j;
            let node = grid.index(&idx);
            let x = grid.coords(node);
            if j == 0 {
                xs.push(x[0]);
            }
            if i == 0 {
                ys.push(x[1]);
            }
            f[i][j] = u.values()[node];
        }
    }
    let lo = f.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let hi = f.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return out;
    }
    for k in 1..=levels {
        let level = lo + (hi - lo) * k as f64 / (levels + 1) as f64;
        for (p, line) in contour_lines(&xs, &ys, &f, level).iter().enumerate() {
            for (q, (x, y)) in line.iter().enumerate() {
                out.push_str(&format!(
                    "{},{p},{q},{},{}\n",
                    encoding.encode(level),
                    encoding.encode(*x),
                    encoding.encode(*y)
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoxDomain, Grid};

    #[test]
    fn circle_contour_is_one_closed_loop() {
        let n = 41;
        let xs: Vec<f64> = (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect();
        let f: Vec<Vec<f64>> = xs.iter().map(|x| xs.iter().map(|y| x * x + y * y).collect()).collect();
        let lines = contour_lines(&xs, &xs, &f, 0.25);
        assert_eq!(lines.len(), 1);
        let line = &lines[0];
        assert_eq!(line.first(), line.last());
        for (x, y) in line {
            assert!(((x * x + y * y).sqrt() - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn open_line_crosses_the_box() {
        let xs: Vec<f64> = (0..5).map(|k| k as f64).collect();
        let f: Vec<Vec<f64>> = xs.iter().map(|x| xs.iter().map(|_| *x).collect()).collect();
        let lines = contour_lines(&xs, &xs, &f, 1.5);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 5);
        assert!(lines[0].iter().all(|p| (p.0 - 1.5).abs() < 1e-12));
    }

    #[test]
    fn slice_through_center() {
        let g = Grid::uniform(BoxDomain::cube(3, 1.0), 5).unwrap();
        let u = GridFunction::from_fn(g, |x| x[0] + 10.0 * x[1] + 100.0 * x[2]);
        let s = axis_slice(&u, 0);
        assert_eq!(s.len(), 5);
        assert_eq!(s[4], (1.0, 1.0));
        let csv = slice_csv(2, &[("u", &u)], FloatEncoding::Decimal);
        assert_eq!(csv.lines().next(), Some("x3,u"));
        assert!(contour_csv(&u, 3, FloatEncoding::Decimal).lines().count() > 1);
    }
}
