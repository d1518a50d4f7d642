use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::geometry::{Geometry, Region};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub nodes: [usize; 3],
    pub region: Region,
}

/// Triangulated domain with region tags and Dirichlet flags on the outer boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<Triangle>,
    boundary: Vec<bool>,
    neighbors: Vec<[Option<usize>; 3]>,
}

impl Mesh {
    /// Validates orientation, indices and boundary flags, then builds adjacency.
    pub fn new(nodes: Vec<[f64; 2]>, triangles: Vec<Triangle>, boundary: Vec<bool>) -> Result<Self> {
        if boundary.len() != nodes.len() {
            return Err(Error::Input(format!(
                "{} boundary flags for {} nodes",
                boundary.len(),
                nodes.len()
            )));
        }
        for (e, t) in triangles.iter().enumerate() {
            if t.nodes.iter().any(|&n| n >= nodes.len()) {
                return Err(Error::Input(format!("triangle {e} references a missing node")));
            }
            let area = signed_area(&nodes, t.nodes);
            if !(area > 0.0) {
                return Err(Error::Input(format!(
                    "triangle {e} has non-positive area {area:e}"
                )));
            }
        }
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (e, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t.nodes[(k + 1) % 3], t.nodes[(k + 2) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push((e, k));
            }
        }
        let mut neighbors = vec![[None; 3]; triangles.len()];
        let mut on_boundary = vec![false; nodes.len()];
        for (&(a, b), owners) in &edges {
            match owners.as_slice() {
                [_] => {
                    on_boundary[a] = true;
                    on_boundary[b] = true;
                }
                [(e1, k1), (e2, k2)] => {
                    neighbors[*e1][*k1] = Some(*e2);
                    neighbors[*e2][*k2] = Some(*e1);
                }
                _ => {
                    return Err(Error::Input(format!(
                        "edge ({a}, {b}) shared by {} triangles",
                        owners.len()
                    )))
                }
            }
        }
        if let Some(n) = (0..nodes.len()).find(|&n| on_boundary[n] != boundary[n]) {
            return Err(Error::Input(format!(
                "boundary flag of node {n} does not match the mesh outline"
            )));
        }
        Ok(Self {
            nodes,
            triangles,
            boundary,
            neighbors,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Edge neighbors; entry `k` is across the edge opposite local node `k`.
    pub fn neighbors(&self, element: usize) -> [Option<usize>; 3] {
        self.neighbors[element]
    }

    pub fn area(&self, element: usize) -> f64 {
        signed_area(&self.nodes, self.triangles[element].nodes)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|e| self.area(e)).sum()
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.triangles.len())
            .filter(|&e| self.triangles[e].region == region)
            .map(|e| self.area(e))
            .sum()
    }

    pub fn centroid(&self, element: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[element].nodes.map(|n| self.nodes[n]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Element containing the point (closed triangles, first match).
    pub fn locate(&self, p: [f64; 2]) -> Result<usize> {
        let tol = 1e-12;
        self.triangles
            .iter()
            .position(|t| {
                let [a, b, c] = t.nodes.map(|n| self.nodes[n]);
                let area = cross(a, b, c);
                let l0 = cross(p, b, c) / area;
                let l1 = cross(a, p, c) / area;
                let l2 = cross(a, b, p) / area;
                l0 >= -tol && l1 >= -tol && l2 >= -tol
            })
            .ok_or(Error::Location { x: p[0], y: p[1] })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {}", p[0], p[1]);
        }
        let _ = writeln!(s, "elements {}", self.triangles.len());
        for (i, t) in self.triangles.iter().enumerate() {
            let [a, b, c] = t.nodes;
            let _ = writeln!(s, "{i} {a} {b} {c} {}", t.region.tag());
        }
        let ids: Vec<usize> = (0..self.nodes.len()).filter(|&n| self.boundary[n]).collect();
        let _ = writeln!(s, "boundary {}", ids.len());
        for n in ids {
            let _ = writeln!(s, "{n}");
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut header = |name: &str| -> Result<usize> {
            let (line, l) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing `{name}` section")))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(name) {
                return Err(err(line, format!("expected `{name} <count>`")));
            }
            it.next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| err(line, format!("bad `{name}` count")))
        };
        let n_nodes = header("nodes")?;
        drop(header);
        let mut fields = |expect: usize| -> Result<(usize, Vec<String>)> {
            let (line, l) = lines
                .next()
                .ok_or_else(|| err(0, "unexpected end of file".into()))?;
            let f: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
            if f.len() != expect {
                return Err(err(line, format!("expected {expect} fields, got {}", f.len())));
            }
            Ok((line, f))
        };
        let num = |line: usize, s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| err(line, format!("invalid number `{s}`")))
        };
        let idx = |line: usize, s: &str, bound: usize| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v < bound => Ok(v),
                _ => Err(err(line, format!("invalid index `{s}`"))),
            }
        };
        let mut nodes = vec![[0.0; 2]; n_nodes];
        for i in 0..n_nodes {
            let (line, f) = fields(3)?;
            if idx(line, &f[0], n_nodes)? != i {
                return Err(err(line, "node ids must be consecutive from 0".into()));
            }
            nodes[i] = [num(line, &f[1])?, num(line, &f[2])?];
        }
        let (line, f) = fields(2)?;
        if f[0] != "elements" {
            return Err(err(line, "expected `elements <count>`".into()));
        }
        let n_el = idx(line, &f[1], usize::MAX)?;
        let mut triangles = Vec::with_capacity(n_el);
        for i in 0..n_el {
            let (line, f) = fields(5)?;
            if idx(line, &f[0], n_el)? != i {
                return Err(err(line, "element ids must be consecutive from 0".into()));
            }
            let tri = [
                idx(line, &f[1], n_nodes)?,
                idx(line, &f[2], n_nodes)?,
                idx(line, &f[3], n_nodes)?,
            ];
            let region = f[4]
                .parse::<u8>()
                .ok()
                .and_then(Region::from_tag)
                .ok_or_else(|| err(line, format!("unknown region `{}`", f[4])))?;
            triangles.push(Triangle { nodes: tri, region });
        }
        let (line, f) = fields(2)?;
        if f[0] != "boundary" {
            return Err(err(line, "expected `boundary <count>`".into()));
        }
        let n_b = idx(line, &f[1], usize::MAX)?;
        let mut boundary = vec![false; n_nodes];
        for _ in 0..n_b {
            let (line, f) = fields(1)?;
            boundary[idx(line, &f[0], n_nodes)?] = true;
        }
        if let Some((line, _)) = lines.next() {
            return Err(err(line, "trailing content".into()));
        }
        Mesh::new(nodes, triangles, boundary)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

fn signed_area(nodes: &[[f64; 2]], t: [usize; 3]) -> f64 {
    0.5 * cross(nodes[t[0]], nodes[t[1]], nodes[t[2]])
}

/// Subdivides `[0, breaks.last()]` so every breakpoint is a grid line.
fn axis(breaks: &[f64], fine: usize, h_fine: f64, h_bulk: f64, factor: usize) -> Vec<f64> {
    let mut out = vec![breaks[0]];
    for (k, w) in breaks.windows(2).enumerate() {
        let len = w[1] - w[0];
        let h = if k < fine { h_fine } else { h_bulk };
        let n = ((len / h - 1e-9).ceil() as usize).max(1) * factor;
        for i in 1..=n {
            out.push(if i == n {
                w[1]
            } else {
                w[0] + len * i as f64 / n as f64
            });
        }
    }
    out
}

fn mirrored(pos: &[f64]) -> Vec<f64> {
    pos.iter()
        .skip(1)
        .rev()
        .map(|v| -v)
        .chain(pos.iter().copied())
        .collect()
}

/// Structured triangulation of the dipole cross-section, symmetric in both axes.
///
/// Each refinement level halves every cell edge.
pub fn generate_dipole_mesh(geometry: &Geometry, refinement: u32) -> Result<Mesh> {
    geometry.validate()?;
    let l = geometry.layout();
    let h_fine = geometry.gap_mesh_size;
    let h_bulk = geometry.gap_mesh_size * geometry.bulk_ratio;
    let factor = 1usize << refinement;
    let xb = [
        0.0,
        l.shim_inner_x,
        l.pole_x,
        l.coil_x0,
        l.coil_x1,
        l.leg_x0,
        l.yoke_x1,
        l.bound_x,
    ];
    let yb = [
        0.0,
        l.shim_face_y,
        l.half_gap,
        l.coil_y0,
        l.coil_y1,
        l.yoke_y0,
        l.yoke_y1,
        l.bound_y,
    ];
    let xs = mirrored(&axis(&xb, 3, h_fine, h_bulk, factor));
    let ys = mirrored(&axis(&yb, 3, h_fine, h_bulk, factor));
    let (nx, ny) = (xs.len(), ys.len());
    let x_fast = nx <= ny;
    let id = |i: usize, j: usize| if x_fast { j * nx + i } else { i * ny + j };
    let mut nodes = vec![[0.0; 2]; nx * ny];
    let mut boundary = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            nodes[id(i, j)] = [xs[i], ys[j]];
            boundary[id(i, j)] = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let xc = 0.5 * (xs[i] + xs[i + 1]);
            let yc = 0.5 * (ys[j] + ys[j + 1]);
            let region = geometry.region_at(xc, yc);
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let pair = if xc * yc > 0.0 {
                [[a, b, c], [a, c, d]]
            } else {
                [[a, b, d], [b, c, d]]
            };
            for t in pair {
                triangles.push(Triangle { nodes: t, region });
            }
        }
    }
    Mesh::new(nodes, triangles, boundary)
}
