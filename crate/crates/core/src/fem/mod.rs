//! Two-dimensional nonlinear magnetostatics with first-order triangles.

pub mod geometry;
pub mod linalg;
pub mod material;
pub mod mesh;
pub mod probe;
pub mod solver;

pub use geometry::{Geometry, Region};
pub use material::{Linear, Reluctivity};
pub use mesh::{generate_dipole_mesh, Mesh, Triangle};
pub use probe::{probe_b, stencils, ProbeStencil};
pub use solver::{
    assemble_and_solve, FemSpace, FieldSolution, LinearSolverKind, Materials, SolverOptions,
    TangentSystem,
};
