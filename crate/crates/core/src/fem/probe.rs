use std::io::Write;
use std::path::Path;

use super::mesh::Mesh;
use super::solver::FieldSolution;
use crate::{Error, Result};

/// Elements and area weights used to recover `B` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeStencil {
    pub point: [f64; 2],
    pub elements: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ProbeStencil {
    /// Containing element plus its edge neighbors when `patch` is set.
    pub fn new(mesh: &Mesh, point: [f64; 2], patch: bool) -> Result<Self> {
        let e = mesh.locate(point)?;
        let mut elements = vec![e];
        if patch {
            elements.extend(mesh.neighbors(e).into_iter().flatten());
        }
        let areas: Vec<f64> = elements.iter().map(|&k| mesh.area(k)).collect();
        let total: f64 = areas.iter().sum();
        Ok(Self {
            point,
            elements,
            weights: areas.iter().map(|a| a / total).collect(),
        })
    }

    pub fn apply(&self, b: &[[f64; 2]]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (&e, &w) in self.elements.iter().zip(&self.weights) {
            out[0] += w * b[e][0];
            out[1] += w * b[e][1];
        }
        out
    }
}

pub fn stencils(mesh: &Mesh, points: &[[f64; 2]], patch: bool) -> Result<Vec<ProbeStencil>> {
    points.iter().map(|&p| ProbeStencil::new(mesh, p, patch)).collect()
}

/// Patch-averaged flux density at each point.
pub fn probe_b(mesh: &Mesh, solution: &FieldSolution, points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    Ok(stencils(mesh, points, true)?
        .iter()
        .map(|s| s.apply(&solution.b))
        .collect())
}

/// Writes `x,y,Bx,By` per element centroid.
pub fn write_field_csv(path: &Path, mesh: &Mesh, b: &[[f64; 2]]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "x,y,Bx,By").map_err(io)?;
    for (e, v) in b.iter().enumerate() {
        let c = mesh.centroid(e);
        writeln!(w, "{},{},{},{}", c[0], c[1], v[0], v[1]).map_err(io)?;
    }
    w.flush().map_err(io)
}
