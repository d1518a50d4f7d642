//! Derivatives of the field with respect to KLE-mode reluctivity perturbations.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::material::B_EPS;
use crate::fem::probe::stencils;
use crate::fem::{FemSpace, FieldSolution, Geometry, Region, SolverOptions};
use crate::kle::MaterialModel;
use crate::{Error, Result};

/// Reluctivity perturbation `ν̃_m(s) = √λ_m b_m(s) / s` of one KLE mode.
#[derive(Debug, Clone, Copy)]
pub struct ModePerturbation<'a> {
    model: &'a MaterialModel,
    mode: usize,
    scale: f64,
}

impl<'a> ModePerturbation<'a> {
    pub fn nu_tilde(&self, s: f64) -> f64 {
        let (v, d) = self.model.mode_value_and_slope(self.mode, s);
        if s < B_EPS {
            self.scale * d
        } else {
            self.scale * v / s
        }
    }
}

pub fn mode_perturbation(model: &MaterialModel, mode: usize) -> Result<ModePerturbation<'_>> {
    if mode >= model.dim() {
        return Err(Error::Input(format!(
            "mode {mode} requested, model has {}",
            model.dim()
        )));
    }
    Ok(ModePerturbation {
        model,
        mode,
        scale: model.eigenvalues()[mode].sqrt(),
    })
}

/// Derivative field for one reluctivity perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityField {
    pub mode: usize,
    /// `A'` per mesh node.
    pub a_prime: Vec<f64>,
    /// `B'` per element.
    pub b_prime: Vec<[f64; 2]>,
}

/// Right-hand side `−∫_iron ν̃(|∇a|) ∇a·∇φ_i`.
pub fn gateaux_rhs(space: &FemSpace, a: &[f64], nu_tilde: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let mut rhs = vec![0.0; space.free_count()];
    let mesh = space.mesh();
    for (e, t) in mesh.triangles().iter().enumerate() {
        if t.region != Region::Iron {
            continue;
        }
        let g = space.element_gradient(e, a);
        let nt = nu_tilde((g[0] * g[0] + g[1] * g[1]).sqrt());
        if nt == 0.0 {
            continue;
        }
        let grads = space.gradients(e);
        for k in 0..3 {
            if let Some(d) = space.dof(t.nodes[k]) {
                rhs[d] -= space.area(e) * nt * (g[0] * grads[k][0] + g[1] * grads[k][1]);
            }
        }
    }
    rhs
}

/// Solves the linearized problem `K(a) a' = rhs` with the tangent kept by the forward solve.
pub fn solve_gateaux_with(
    space: &FemSpace,
    solution: &FieldSolution,
    nu_tilde: &dyn Fn(f64) -> f64,
    mode: usize,
    options: &SolverOptions,
) -> Result<SensitivityField> {
    if !solution.converged {
        return Err(Error::Input("sensitivity requires a converged forward solution".into()));
    }
    let tangent = solution.tangent.as_ref().ok_or_else(|| {
        Error::Input("forward solution was computed without retaining its tangent".into())
    })?;
    let rhs = gateaux_rhs(space, &solution.a, nu_tilde);
    let free = if rhs.iter().all(|&v| v == 0.0) {
        vec![0.0; rhs.len()]
    } else {
        space.solve_linear(tangent, &rhs, options)?
    };
    let a_prime = space.expand(&free);
    Ok(SensitivityField {
        mode,
        b_prime: space.flux_density(&a_prime),
        a_prime,
    })
}

pub fn solve_gateaux(
    space: &FemSpace,
    solution: &FieldSolution,
    model: &MaterialModel,
    mode: usize,
    options: &SolverOptions,
) -> Result<SensitivityField> {
    let p = mode_perturbation(model, mode)?;
    solve_gateaux_with(space, solution, &|s| p.nu_tilde(s), mode, options)
}

/// All modes, solved concurrently against the shared factorization.
pub fn solve_all_modes(
    space: &FemSpace,
    solution: &FieldSolution,
    model: &MaterialModel,
    options: &SolverOptions,
) -> Result<Vec<SensitivityField>> {
    (0..model.dim())
        .into_par_iter()
        .map(|m| solve_gateaux(space, solution, model, m, options))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedProbe {
    pub position: [f64; 2],
    pub score: f64,
    /// Patch-averaged `B'_y` per mode.
    pub d_by: Vec<f64>,
}

/// Scores candidates by `Σ_m |B'_y,m|` and returns the `top` best in descending order.
pub fn rank_probes(
    space: &FemSpace,
    geometry: &Geometry,
    fields: &[SensitivityField],
    candidates: &[[f64; 2]],
    top: usize,
) -> Result<Vec<RankedProbe>> {
    if let Some(p) = candidates.iter().find(|p| !geometry.in_gap(p[0], p[1])) {
        return Err(Error::Input(format!(
            "candidate probe ({}, {}) is outside the air gap",
            p[0], p[1]
        )));
    }
    let st = stencils(space.mesh(), candidates, true)?;
    let mut ranked: Vec<RankedProbe> = st
        .iter()
        .map(|s| {
            let d_by: Vec<f64> = fields.iter().map(|f| s.apply(&f.b_prime)[1]).collect();
            RankedProbe {
                position: s.point,
                score: d_by.iter().map(|v| v.abs()).sum(),
                d_by,
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(top);
    Ok(ranked)
}

/// Writes `x,y,dBy_mode1,...` per element centroid.
pub fn write_sensitivity_csv(path: &Path, space: &FemSpace, fields: &[SensitivityField]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let header: Vec<String> = fields
        .iter()
        .map(|f| format!("dBy_mode{}", f.mode + 1))
        .collect();
    writeln!(w, "x,y,{}", header.join(",")).map_err(io)?;
    for e in 0..space.mesh().triangles().len() {
        let c = space.mesh().centroid(e);
        write!(w, "{},{}", c[0], c[1]).map_err(io)?;
        for f in fields {
            write!(w, ",{}", f.b_prime[e][1]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_ranking_json(path: &Path, ranking: &[RankedProbe]) -> Result<()> {
    let text = serde_json::to_string_pretty(ranking)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_ranking_json(path: &Path) -> Result<Vec<RankedProbe>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
