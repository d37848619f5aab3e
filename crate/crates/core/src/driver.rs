//! Experiment loops: solve, estimate, mark, refine.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::basis::BubbleVariant;
use crate::cgfem::{solve_cg, CgSolution};
use crate::dhfem::{condense_and_solve_dual, DhfemSolution};
use crate::errors::{energy_error, flux_error, l2_errors_checked, QuadratureMismatch};
use crate::estimators::{estimate_rho, estimate_xi, EstimateReport};
use crate::mesh::{Mesh, MeshError};
use crate::phfem::{condense_and_solve, HybridOptions, PhfemSolution, SolveError};
use crate::problem::Problem;
use crate::quadrature::Bary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Phfem,
    Dhfem,
    Cg,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Phfem, Method::Dhfem, Method::Cg];

    pub fn name(self) -> &'static str {
        match self {
            Method::Phfem => "phfem",
            Method::Dhfem => "dhfem",
            Method::Cg => "cg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected phfem, dhfem or cg)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Refinement {
    /// Every element bisected `bisections` times per level.
    Uniform { bisections: usize },
    /// Dörfler marking with bulk parameter `theta`.
    Adaptive { theta: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub method: Method,
    pub refinement: Refinement,
    pub variant: BubbleVariant,
    /// Number of solves.
    pub max_levels: usize,
    /// Stop after the first level whose dof count exceeds this.
    pub max_dof: usize,
}

impl RunOptions {
    /// Six uniform levels with two bisections each.
    pub fn uniform(method: Method) -> RunOptions {
        RunOptions {
            method,
            refinement: Refinement::Uniform { bisections: 2 },
            variant: BubbleVariant::Exponential,
            max_levels: 6,
            max_dof: usize::MAX,
        }
    }

    pub fn adaptive(method: Method, theta: f64, max_dof: usize) -> RunOptions {
        RunOptions {
            method,
            refinement: Refinement::Adaptive { theta },
            variant: BubbleVariant::Exponential,
            max_levels: 200,
            max_dof,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("level {level}: {source}")]
    Solve { level: usize, source: SolveError },
    #[error("level {level}: {source}")]
    Quadrature { level: usize, source: QuadratureMismatch },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

impl RunError {
    /// Whether the failure is numerical rather than a usage error.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, RunError::Config(_))
    }
}

/// One level of a run. Errors are `NaN` when the problem has no exact
/// solution, the estimator is `NaN` for the conforming method.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub level: usize,
    pub n_elements: usize,
    pub dof: usize,
    /// `||u - Π⁰u_h||`.
    pub err_p0: f64,
    /// `||u - Π¹u_h||`, element-wise P1 projection.
    pub err_p1: f64,
    /// `||u - u_cG||` on the same mesh.
    pub err_cg: f64,
    /// Broken energy error (primal) or flux error (dual).
    pub err_energy: f64,
    pub estimator: f64,
    pub constraint_violation: f64,
    pub seconds: f64,
}

impl RunRecord {
    /// Equality of everything except timing.
    pub fn same_values(&self, other: &RunRecord) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.level == other.level
            && self.n_elements == other.n_elements
            && self.dof == other.dof
            && eq(self.err_p0, other.err_p0)
            && eq(self.err_p1, other.err_p1)
            && eq(self.err_cg, other.err_cg)
            && eq(self.err_energy, other.err_energy)
            && eq(self.estimator, other.estimator)
            && eq(self.constraint_violation, other.constraint_violation)
    }
}

/// Discrete solution of one level.
pub enum LevelSolution<'a> {
    Phfem(&'a PhfemSolution),
    Dhfem(&'a DhfemSolution),
    Cg,
}

/// Everything computed on one level, handed to the observer before refining.
pub struct Level<'a> {
    pub record: &'a RunRecord,
    pub mesh: &'a Mesh,
    pub solution: LevelSolution<'a>,
    pub cg: Option<&'a CgSolution>,
    pub report: Option<&'a EstimateReport>,
    /// Element means of the discrete solution.
    pub p0: &'a [f64],
}

/// Smallest set of elements whose contributions reach `theta` times the
/// total, largest first, ties by element id.
pub fn mark_doerfler(local: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..local.len()).collect();
    order.sort_by(|&a, &b| local[b].total_cmp(&local[a]).then(a.cmp(&b)));
    // summed in the same order as the accumulation, so theta = 1 terminates
    let total: f64 = order.iter().map(|&t| local[t]).sum();
    let goal = theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for t in order {
        if acc >= goal {
            break;
        }
        acc += local[t];
        marked.push(t);
    }
    marked
}

/// Fraction of elements whose barycenter lies within `0.1` of the boundary
/// of `(-1, 1)²` or of `(-1/2, 1/2)²`.
pub fn boxload_localization(mesh: &Mesh) -> f64 {
    let near = mesh
        .triangles
        .iter()
        .filter(|t| {
            let c = t.vertices.iter().fold([0.0; 2], |c, &v| {
                [c[0] + mesh.vertices[v][0] / 3.0, c[1] + mesh.vertices[v][1] / 3.0]
            });
            let (ax, ay) = (c[0].abs(), c[1].abs());
            let outer = 1.0 - ax.max(ay);
            let inner = if ax < 0.5 && ay < 0.5 {
                0.5 - ax.max(ay)
            } else {
                (ax - 0.5).max(0.0).hypot((ay - 0.5).max(0.0))
            };
            outer.min(inner) <= 0.1
        })
        .count();
    near as f64 / mesh.n_elements() as f64
}

fn dof(mesh: &Mesh, method: Method) -> usize {
    match method {
        Method::Phfem => mesh.n_facets(),
        Method::Dhfem | Method::Cg => mesh.n_interior_vertices(),
    }
}

/// Runs one experiment, calling `observe` on every level.
pub fn run(
    problem: &dyn Problem,
    opts: &RunOptions,
    observe: &mut dyn FnMut(&Level<'_>),
) -> Result<Vec<RunRecord>, RunError> {
    if let Refinement::Adaptive { theta } = opts.refinement {
        if opts.method == Method::Cg {
            return Err(RunError::Config("adaptive refinement needs an estimator; the cg method has none".into()));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(RunError::Config(format!("theta must lie in (0, 1], got {theta}")));
        }
    }
    if opts.max_levels == 0 {
        return Err(RunError::Config("max_levels must be positive".into()));
    }
    let eps = problem.eps();
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(RunError::Config(format!("eps must lie in (0, 1], got {eps}")));
    }
    let hybrid = HybridOptions { variant: opts.variant, ..HybridOptions::default() };
    let exact = problem.solution([0.5, 0.5]).is_some();

    let mut mesh = problem.initial_mesh();
    let mut records = Vec::new();
    for level in 0..opts.max_levels {
        let start = Instant::now();
        let solve_err = |source| RunError::Solve { level, source };
        let quad_err = |source| RunError::Quadrature { level, source };

        let cg = if exact || opts.method == Method::Cg {
            Some(solve_cg(&mesh, problem).map_err(|e| solve_err(SolveError::Linalg(e)))?)
        } else {
            None
        };

        let (phfem, dhfem);
        let (solution, p0, p1, report, violation, err_energy) = match opts.method {
            Method::Phfem => {
                phfem = condense_and_solve(&mesh, problem, hybrid).map_err(solve_err)?;
                let r = estimate_rho(&mesh, &phfem);
                let e = if exact { energy_error(&mesh, problem, &phfem) } else { f64::NAN };
                let v = phfem.constraint_violation(&mesh);
                (LevelSolution::Phfem(&phfem), phfem.project_p0(), Some(phfem.project_p1()), Some(r), v, e)
            }
            Method::Dhfem => {
                dhfem = condense_and_solve_dual(&mesh, problem, hybrid).map_err(solve_err)?;
                let r = estimate_xi(&mesh, &dhfem);
                let e = if exact { flux_error(&mesh, problem, &dhfem) } else { f64::NAN };
                let v = dhfem.constraint_violation(&mesh);
                (LevelSolution::Dhfem(&dhfem), dhfem.project_p0(), Some(dhfem.project_p1()), Some(r), v, e)
            }
            Method::Cg => {
                let c = cg.as_ref().expect("solved above");
                (LevelSolution::Cg, c.project_p0(&mesh), None, None, 0.0, f64::NAN)
            }
        };

        let (err_p0, err_p1, err_cg) = match (&cg, exact) {
            (Some(c), true) => {
                let cg_field = |t: usize, l: &Bary| c.value(&mesh, t, l);
                let p0_field = |t: usize, _: &Bary| p0[t];
                let p1_field = |t: usize, l: &Bary| (0..3).map(|i| l[i] * p1.as_ref().map_or(0.0, |p| p[t][i])).sum();
                let e = if p1.is_some() {
                    l2_errors_checked(&mesh, problem, &[&p0_field, &p1_field, &cg_field])
                } else {
                    l2_errors_checked(&mesh, problem, &[&p0_field, &cg_field]).map(|e| vec![e[0], e[1], e[1]])
                }
                .map_err(quad_err)?;
                (e[0], e[1], e[2])
            }
            _ => (f64::NAN, f64::NAN, f64::NAN),
        };

        let record = RunRecord {
            level,
            n_elements: mesh.n_elements(),
            dof: dof(&mesh, opts.method),
            err_p0,
            err_p1,
            err_cg,
            err_energy,
            estimator: report.as_ref().map_or(f64::NAN, |r| r.total()),
            constraint_violation: violation,
            seconds: start.elapsed().as_secs_f64(),
        };
        observe(&Level { record: &record, mesh: &mesh, solution, cg: cg.as_ref(), report: report.as_ref(), p0: &p0 });
        let done = record.dof > opts.max_dof || level + 1 == opts.max_levels;
        records.push(record);
        if done {
            break;
        }

        mesh = match opts.refinement {
            Refinement::Uniform { bisections } => mesh.refine_uniform(bisections),
            Refinement::Adaptive { theta } => {
                let marked = mark_doerfler(&report.expect("hybrid methods estimate").local(), theta);
                if marked.is_empty() {
                    break;
                }
                mesh.refine(&marked)?
            }
        };
    }
    Ok(records)
}

pub fn run_uniform(problem: &dyn Problem, method: Method, levels: usize) -> Result<Vec<RunRecord>, RunError> {
    let opts = RunOptions { max_levels: levels, ..RunOptions::uniform(method) };
    run(problem, &opts, &mut |_| {})
}

pub fn run_adaptive(problem: &dyn Problem, method: Method, theta: f64, max_dof: usize) -> Result<Vec<RunRecord>, RunError> {
    run(problem, &RunOptions::adaptive(method, theta, max_dof), &mut |_| {})
}
