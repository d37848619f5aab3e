//! Hybrid finite element methods with layer-adapted face bubbles for the
//! singularly perturbed reaction-diffusion problem `-eps² Δu + u = f`,
//! `u = 0` on the boundary, together with a conforming baseline, a
//! posteriori error estimators and adaptive refinement.

pub mod assembly;
pub mod basis;
pub mod cgfem;
pub mod condensation;
pub mod dhfem;
pub mod driver;
pub mod errors;
pub mod estimators;
pub mod linalg;
pub mod mesh;
pub mod phfem;
pub mod problem;
pub mod quadrature;
pub mod verify;

pub use basis::{BubbleVariant, Layer};
pub use cgfem::{solve_cg, CgSolution};
pub use dhfem::{condense_and_solve_dual, DhfemSolution};
pub use driver::{mark_doerfler, run, Level, LevelSolution, Method, Refinement, RunError, RunOptions, RunRecord};
pub use estimators::{estimate_rho, estimate_xi, EstimateReport, EstimatorTerms};
pub use mesh::{Mesh, MeshError, Point};
pub use phfem::{condense_and_solve, HybridOptions, PhfemSolution, SolveError};
pub use problem::{BoxLoadProblem, ManufacturedProblem, Problem};
