//! Fixtures shared by the benchmarks.

use hyfem::{ManufacturedProblem, Mesh, Problem};

/// Manufactured problem and its initial mesh after `sweeps` bisection sweeps.
pub fn fixture(eps: f64, sweeps: usize) -> (ManufacturedProblem, Mesh) {
    let p = ManufacturedProblem::new(eps);
    let mesh = p.initial_mesh().refine_uniform(sweeps);
    (p, mesh)
}
