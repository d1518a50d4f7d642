use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::geometry::Region;
use super::linalg::{self, CsrMatrix, SkylineCholesky, SkylineSymbolic};
use super::material::{Reluctivity, B_EPS};
use super::mesh::Mesh;
use crate::{Error, Result, MU0};

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolverKind {
    /// Envelope Cholesky up to `direct_max` unknowns, conjugate gradients above.
    Auto,
    Direct,
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Newton stops once `‖R‖ / ‖F‖` falls below this value.
    pub newton_tolerance: f64,
    pub max_newton_steps: usize,
    pub max_halvings: usize,
    pub linear_solver: LinearSolverKind,
    pub cg_tolerance: f64,
    pub direct_max: usize,
    /// Keep the tangent assembled at the converged state for derivative solves.
    pub retain_tangent: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tolerance: 1e-8,
            max_newton_steps: 50,
            max_halvings: 20,
            linear_solver: LinearSolverKind::Auto,
            cg_tolerance: 1e-10,
            direct_max: 50_000,
            retain_tangent: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("newton_tolerance", self.newton_tolerance),
            ("cg_tolerance", self.cg_tolerance),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.max_newton_steps == 0 {
            return Err(Error::Config("max_newton_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Constitutive laws per region; air and conductors are vacuum.
#[derive(Clone, Copy)]
pub struct Materials<'a> {
    pub iron: &'a dyn Reluctivity,
}

impl<'a> Materials<'a> {
    pub fn new(iron: &'a dyn Reluctivity) -> Self {
        Self { iron }
    }
}

/// Symmetric tangent matrix over the free unknowns, optionally factorized.
#[derive(Debug, Clone)]
pub struct TangentSystem {
    pub matrix: CsrMatrix,
    factor: Option<SkylineCholesky>,
}

impl TangentSystem {
    pub fn fingerprint(&self) -> u64 {
        self.matrix.fingerprint()
    }

    pub fn is_factorized(&self) -> bool {
        self.factor.is_some()
    }
}

/// Nodal vector potential and derived element flux densities.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    /// `A_z` per mesh node, zero on the boundary.
    pub a: Vec<f64>,
    /// Flux density `(B_x, B_y)` per triangle.
    pub b: Vec<[f64; 2]>,
    pub current: f64,
    pub converged: bool,
    /// Relative residual before each Newton step and after the last one.
    pub residual_history: Vec<f64>,
    /// Discrete energy functional at the same iterates.
    pub energy_history: Vec<f64>,
    pub newton_steps: usize,
    pub tangent: Option<Arc<TangentSystem>>,
}

/// Precomputed P1 discretization of a mesh: gradients, dof numbering and sparsity.
#[derive(Debug, Clone)]
pub struct FemSpace {
    mesh: Mesh,
    turns: f64,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
    dof: Vec<usize>,
    n_free: usize,
    pattern: CsrMatrix,
    slots: Vec<[usize; 9]>,
    symbolic: SkylineSymbolic,
    /// Load vector for one ampere.
    unit_load: Vec<f64>,
}

impl FemSpace {
    pub fn new(mesh: Mesh, turns: f64) -> Result<Self> {
        let n = mesh.nodes().len();
        let mut dof = vec![NONE; n];
        let mut n_free = 0;
        for (i, d) in dof.iter_mut().enumerate() {
            if !mesh.is_boundary(i) {
                *d = n_free;
                n_free += 1;
            }
        }
        if n_free == 0 {
            return Err(Error::Input("mesh has no interior nodes".into()));
        }
        let tris = mesh.triangles();
        let mut areas = Vec::with_capacity(tris.len());
        let mut grads = Vec::with_capacity(tris.len());
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_free];
        for (e, t) in tris.iter().enumerate() {
            let [p0, p1, p2] = t.nodes.map(|k| mesh.nodes()[k]);
            let area = mesh.area(e);
            let s = 0.5 / area;
            grads.push([
                [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
                [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
                [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
            ]);
            areas.push(area);
            for &i in &t.nodes {
                if dof[i] == NONE {
                    continue;
                }
                for &j in &t.nodes {
                    if dof[j] != NONE {
                        rows[dof[i]].push(dof[j]);
                    }
                }
            }
        }
        let pattern = CsrMatrix::from_pattern(rows);
        let slots = tris
            .iter()
            .map(|t| {
                let mut s = [NONE; 9];
                for (li, &i) in t.nodes.iter().enumerate() {
                    for (lj, &j) in t.nodes.iter().enumerate() {
                        if dof[i] != NONE && dof[j] != NONE {
                            s[3 * li + lj] = pattern.slot(dof[i], dof[j]).unwrap();
                        }
                    }
                }
                s
            })
            .collect();
        let symbolic = SkylineSymbolic::new(&pattern);

        let pos = mesh.region_area(Region::CoilPositive);
        let neg = mesh.region_area(Region::CoilNegative);
        let mut unit_load = vec![0.0; n_free];
        for (e, t) in tris.iter().enumerate() {
            let j = match t.region {
                Region::CoilPositive => turns / pos,
                Region::CoilNegative => -turns / neg,
                _ => continue,
            };
            for &i in &t.nodes {
                if dof[i] != NONE {
                    unit_load[dof[i]] += j * areas[e] / 3.0;
                }
            }
        }
        Ok(Self {
            mesh,
            turns,
            areas,
            grads,
            dof,
            n_free,
            pattern,
            slots,
            symbolic,
            unit_load,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn turns(&self) -> f64 {
        self.turns
    }

    pub fn free_count(&self) -> usize {
        self.n_free
    }

    /// Free-dof index of a node, `None` on the Dirichlet boundary.
    pub fn dof(&self, node: usize) -> Option<usize> {
        (self.dof[node] != NONE).then_some(self.dof[node])
    }

    pub fn area(&self, e: usize) -> f64 {
        self.areas[e]
    }

    pub fn gradients(&self, e: usize) -> &[[f64; 2]; 3] {
        &self.grads[e]
    }

    pub fn load(&self, current: f64) -> Vec<f64> {
        self.unit_load.iter().map(|v| v * current).collect()
    }

    /// `∇a` on element `e` for a nodal vector over all mesh nodes.
    #[inline]
    pub fn element_gradient(&self, e: usize, a: &[f64]) -> [f64; 2] {
        let t = &self.mesh.triangles()[e].nodes;
        let g = &self.grads[e];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += a[t[k]] * g[k][0];
            out[1] += a[t[k]] * g[k][1];
        }
        out
    }

    /// Element flux densities `B = (∂A/∂y, −∂A/∂x)`.
    pub fn flux_density(&self, a: &[f64]) -> Vec<[f64; 2]> {
        (0..self.areas.len())
            .map(|e| {
                let g = self.element_gradient(e, a);
                [g[1], -g[0]]
            })
            .collect()
    }

    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        self.dof
            .iter()
            .map(|&d| if d == NONE { 0.0 } else { free[d] })
            .collect()
    }

    fn law<'a>(&self, materials: &Materials<'a>, e: usize) -> Option<&'a dyn Reluctivity> {
        match self.mesh.triangles()[e].region {
            Region::Iron => Some(materials.iron),
            _ => None,
        }
    }

    /// Discrete residual `R(a) = K(a)·a − F` over the free unknowns.
    pub fn residual(&self, materials: &Materials, current: f64, a: &[f64]) -> Vec<f64> {
        let mut r = self.load(current);
        r.iter_mut().for_each(|v| *v = -*v);
        for e in 0..self.areas.len() {
            let g = self.element_gradient(e, a);
            let nu = match self.law(materials, e) {
                Some(law) => law.nu((g[0] * g[0] + g[1] * g[1]).sqrt()),
                None => 1.0 / MU0,
            };
            let t = &self.mesh.triangles()[e].nodes;
            for k in 0..3 {
                let d = self.dof[t[k]];
                if d != NONE {
                    let gk = self.grads[e][k];
                    r[d] += self.areas[e] * nu * (g[0] * gk[0] + g[1] * gk[1]);
                }
            }
        }
        r
    }

    /// Energy functional `Σ_e |e| w(|∇a|) − F·a`.
    pub fn energy(&self, materials: &Materials, current: f64, a: &[f64]) -> f64 {
        let mut w = 0.0;
        for e in 0..self.areas.len() {
            let g = self.element_gradient(e, a);
            let b2 = g[0] * g[0] + g[1] * g[1];
            w += self.areas[e]
                * match self.law(materials, e) {
                    Some(law) => law.energy(b2.sqrt()),
                    None => 0.5 * b2 / MU0,
                };
        }
        let load = self.load(current);
        let work: f64 = (0..a.len())
            .filter_map(|i| self.dof(i).map(|d| load[d] * a[i]))
            .sum();
        w - work
    }

    /// Tangent with the differential reluctivity `ν I + (h' − ν)/b² · g gᵀ` in iron.
    pub fn tangent_matrix(&self, materials: &Materials, a: &[f64]) -> CsrMatrix {
        let mut k = self.pattern.clone();
        for e in 0..self.areas.len() {
            let g = self.element_gradient(e, a);
            let tensor = match self.law(materials, e) {
                Some(law) => {
                    let b = (g[0] * g[0] + g[1] * g[1]).sqrt();
                    if b < B_EPS {
                        let d = law.field(0.0).1;
                        [d, 0.0, d]
                    } else {
                        let (h, dh) = law.field(b);
                        let nu = h / b;
                        let c = (dh - nu) / (b * b);
                        [nu + c * g[0] * g[0], c * g[0] * g[1], nu + c * g[1] * g[1]]
                    }
                }
                None => [1.0 / MU0, 0.0, 1.0 / MU0],
            };
            let gr = &self.grads[e];
            let slots = &self.slots[e];
            for i in 0..3 {
                let ti = [
                    tensor[0] * gr[i][0] + tensor[1] * gr[i][1],
                    tensor[1] * gr[i][0] + tensor[2] * gr[i][1],
                ];
                for j in 0..3 {
                    let s = slots[3 * i + j];
                    if s != NONE {
                        k.values[s] += self.areas[e] * (ti[0] * gr[j][0] + ti[1] * gr[j][1]);
                    }
                }
            }
        }
        k
    }

    pub fn prepare(&self, matrix: CsrMatrix, options: &SolverOptions) -> Result<TangentSystem> {
        let direct = match options.linear_solver {
            LinearSolverKind::Direct => true,
            LinearSolverKind::ConjugateGradient => false,
            LinearSolverKind::Auto => self.n_free <= options.direct_max,
        };
        let factor = if direct {
            Some(SkylineCholesky::factor(&self.symbolic, &matrix)?)
        } else {
            None
        };
        Ok(TangentSystem { matrix, factor })
    }

    /// Solves `K x = rhs` on the free unknowns.
    pub fn solve_linear(
        &self,
        system: &TangentSystem,
        rhs: &[f64],
        options: &SolverOptions,
    ) -> Result<Vec<f64>> {
        match &system.factor {
            Some(f) => Ok(f.solve(&self.symbolic, rhs)),
            None => linalg::pcg(&system.matrix, rhs, options.cg_tolerance, 10 * self.n_free)
                .map(|(x, _)| x),
        }
    }

    /// Newton iteration from `start` (all nodes) or from zero.
    pub fn solve(
        &self,
        materials: &Materials,
        current: f64,
        start: Option<&[f64]>,
        options: &SolverOptions,
    ) -> Result<FieldSolution> {
        if !(current >= 0.0) || !current.is_finite() {
            return Err(Error::Input(format!("current must be nonnegative, got {current}")));
        }
        let mut a = match start {
            Some(s) => {
                let mut a = s.to_vec();
                for (i, v) in a.iter_mut().enumerate() {
                    if self.dof[i] == NONE {
                        *v = 0.0;
                    }
                }
                a
            }
            None => vec![0.0; self.mesh.nodes().len()],
        };
        let load_norm = linalg::norm(&self.load(current));
        let scale = if load_norm > 0.0 { load_norm } else { 1.0 };
        let mut r = self.residual(materials, current, &a);
        let mut rel = linalg::norm(&r) / scale;
        let mut residual_history = vec![rel];
        let mut energy_history = vec![self.energy(materials, current, &a)];
        let mut steps = 0;
        let mut converged = false;
        while steps < options.max_newton_steps {
            let k = self.tangent_matrix(materials, &a);
            let system = self.prepare(k, options)?;
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let delta = self.solve_linear(&system, &rhs, options)?;
            steps += 1;
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=options.max_halvings {
                let mut trial = a.clone();
                for (i, v) in trial.iter_mut().enumerate() {
                    if self.dof[i] != NONE {
                        *v += t * delta[self.dof[i]];
                    }
                }
                let r_trial = self.residual(materials, current, &trial);
                let rel_trial = linalg::norm(&r_trial) / scale;
                if rel_trial.is_finite() && rel_trial <= (1.0 - 1e-4 * t) * rel {
                    accepted = Some((trial, r_trial, rel_trial));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, r_trial, rel_trial)) => {
                    a = trial;
                    r = r_trial;
                    rel = rel_trial;
                    residual_history.push(rel);
                    energy_history.push(self.energy(materials, current, &a));
                }
                // no further decrease possible at round-off level
                None if rel < options.newton_tolerance => {}
                None => return Err(Error::Divergence { history: residual_history }),
            }
            if rel < options.newton_tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Divergence { history: residual_history });
        }
        let tangent = if options.retain_tangent {
            let k = self.tangent_matrix(materials, &a);
            Some(Arc::new(self.prepare(k, options)?))
        } else {
            None
        };
        Ok(FieldSolution {
            b: self.flux_density(&a),
            a,
            current,
            converged,
            residual_history,
            energy_history,
            newton_steps: steps,
            tangent,
        })
    }
}

/// One-off solve that builds the discretization for `mesh`.
pub fn assemble_and_solve(
    mesh: &Mesh,
    turns: f64,
    iron: &dyn Reluctivity,
    current: f64,
    options: &SolverOptions,
) -> Result<FieldSolution> {
    let space = FemSpace::new(mesh.clone(), turns)?;
    space.solve(&Materials::new(iron), current, None, options)
}
