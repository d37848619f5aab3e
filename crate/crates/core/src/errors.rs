//! Errors against an exact solution.

use nalgebra::DVector;
use thiserror::Error;

use crate::basis::{ElementGeometry, SCALAR_DIM, VECTOR_DIM};
use crate::dhfem::{vector_moments, DhfemSolution};
use crate::mesh::Mesh;
use crate::phfem::{scalar_moments, PhfemSolution};
use crate::problem::{data_rule, data_rule_with, Problem, DATA_DEGREE};
use crate::quadrature::{Bary, Rule, LAYER_POINTS};

#[derive(Debug, Error)]
#[error("L2 error {coarse:e} and its refined evaluation {fine:e} differ by more than {tolerance:e} relative")]
pub struct QuadratureMismatch {
    pub coarse: f64,
    pub fine: f64,
    pub tolerance: f64,
}

fn exact(problem: &dyn Problem, x: [f64; 2]) -> (f64, [f64; 2]) {
    problem.solution(x).expect("problem has an exact solution")
}

/// Discrete field evaluated element by element in barycentric coordinates.
pub type Field<'a> = &'a dyn Fn(usize, &Bary) -> f64;

fn l2_errors_on(mesh: &Mesh, problem: &dyn Problem, fields: &[Field<'_>], rule: &dyn Fn(usize) -> Rule) -> Vec<f64> {
    let mut sums = vec![0.0; fields.len()];
    for t in 0..mesh.n_elements() {
        let pts = mesh.element_points(t);
        let area = mesh.triangles[t].area;
        let r = rule(t);
        for (l, w) in r.bary.iter().zip(&r.weights) {
            let u = exact(problem, crate::quadrature::to_physical(&pts, l)).0;
            for (s, field) in sums.iter_mut().zip(fields) {
                *s += area * w * (u - field(t, l)).powi(2);
            }
        }
    }
    sums.into_iter().map(f64::sqrt).collect()
}

/// `||u - u_h||` with the layer-adapted data rule.
pub fn l2_error(mesh: &Mesh, problem: &dyn Problem, discrete: Field<'_>) -> f64 {
    l2_errors_on(mesh, problem, &[discrete], &|t| data_rule(mesh, t, problem.layer_width()))[0]
}

/// Relative tolerance for `l2_errors_checked`.
pub const L2_TOLERANCE: f64 = 1e-8;

/// `l2_error` of several fields, each compared against an evaluation with
/// more quadrature points per cell.
pub fn l2_errors_checked(mesh: &Mesh, problem: &dyn Problem, fields: &[Field<'_>]) -> Result<Vec<f64>, QuadratureMismatch> {
    let width = problem.layer_width();
    let coarse = l2_errors_on(mesh, problem, fields, &|t| data_rule(mesh, t, width));
    let fine = l2_errors_on(mesh, problem, fields, &|t| {
        data_rule_with(mesh, t, width, LAYER_POINTS + 6, DATA_DEGREE + 8)
    });
    for (&c, &f) in coarse.iter().zip(&fine) {
        if (c - f).abs() > L2_TOLERANCE * f.max(f64::MIN_POSITIVE) {
            return Err(QuadratureMismatch { coarse: c, fine: f, tolerance: L2_TOLERANCE });
        }
    }
    Ok(coarse)
}

pub fn l2_error_checked(mesh: &Mesh, problem: &dyn Problem, discrete: Field<'_>) -> Result<f64, QuadratureMismatch> {
    l2_errors_checked(mesh, problem, &[discrete]).map(|e| e[0])
}

/// `||u||²_T + eps²||∇u||²_T` and `||u||²_T`, `||∇u||²_T` separately.
fn exact_norms(mesh: &Mesh, t: usize, problem: &dyn Problem) -> (f64, f64) {
    let r = data_rule(mesh, t, problem.layer_width());
    let pts = mesh.element_points(t);
    let (mut u2, mut g2) = (0.0, 0.0);
    for (l, w) in r.bary.iter().zip(&r.weights) {
        let (u, g) = exact(problem, crate::quadrature::to_physical(&pts, l));
        u2 += w * u * u;
        g2 += w * (g[0] * g[0] + g[1] * g[1]);
    }
    let a = mesh.triangles[t].area;
    (a * u2, a * g2)
}

/// Broken energy error `(||u - u_h||² + eps²||∇_h(u - u_h)||²)^{1/2}`.
pub fn energy_error(mesh: &Mesh, problem: &dyn Problem, sol: &PhfemSolution) -> f64 {
    energy_error_local(mesh, problem, sol).iter().sum::<f64>().sqrt()
}

/// Squared energy error on every element.
pub fn energy_error_local(mesh: &Mesh, problem: &dyn Problem, sol: &PhfemSolution) -> Vec<f64> {
    let eps2 = sol.eps * sol.eps;
    let mut out = Vec::with_capacity(sol.locals.len());
    for (t, l) in sol.locals.iter().enumerate() {
        let rules = crate::basis::ElementRules::new(l.geom.layer);
        let data = data_rule(mesh, t, problem.layer_width());
        let value = |x| exact(problem, x).0;
        let mut m = scalar_moments(&l.geom, &rules, &data, &value);
        // eps² (∇u, ∇phi_i) through one moment per gradient component
        let grad = gradient_moments(&l.geom, &rules, &data, problem);
        m += grad * eps2;
        let (u2, g2) = exact_norms(mesh, t, problem);
        let c = &sol.u[t];
        let e = u2 + eps2 * g2 - 2.0 * m.dot(c) + c.dot(&(&l.a * c));
        out.push(e.max(0.0));
    }
    out
}

fn gradient_moments(
    geom: &ElementGeometry,
    rules: &crate::basis::ElementRules,
    data: &Rule,
    problem: &dyn Problem,
) -> DVector<f64> {
    let mut out = DVector::zeros(SCALAR_DIM);
    let layered = rules.is_layered();
    let mut add = |rule: &Rule, keep: &dyn Fn(usize) -> bool| {
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let s = geom.scalar(l);
            let g = exact(problem, geom.physical(l)).1;
            for i in 0..SCALAR_DIM {
                if keep(i) {
                    out[i] += w * geom.area * (g[0] * s.g[i][0] + g[1] * s.g[i][1]);
                }
            }
        }
    };
    add(data, &|i| !layered || !(3..6).contains(&i));
    if layered {
        for k in 0..3 {
            add(rules.for_pair(Some(k), None), &|i| i == 3 + k);
        }
    }
    out
}

/// `(||sigma - sigma_h||² + ||u - u_h^dual||²)^{1/2}` with `sigma = eps ∇u`;
/// the second part equals `eps² ||div(sigma - sigma_h)||²`.
pub fn flux_error(mesh: &Mesh, problem: &dyn Problem, sol: &DhfemSolution) -> f64 {
    let eps = sol.eps;
    let mut total = 0.0;
    for (t, l) in sol.locals.iter().enumerate() {
        let rules = crate::basis::ElementRules::new(l.geom.layer);
        let data = data_rule(mesh, t, problem.layer_width());
        let ux = |x| exact(problem, x).1[0];
        let uy = |x| exact(problem, x).1[1];
        let res = |x| exact(problem, x).0 - problem.load(x);
        let mx = vector_moments(&l.geom, &rules, &data, &ux);
        let my = vector_moments(&l.geom, &rules, &data, &uy);
        let mr = vector_moments(&l.geom, &rules, &data, &res);
        let s = &sol.sigma[t];
        let (_, g2) = exact_norms(mesh, t, problem);
        let cross: f64 = (0..VECTOR_DIM).map(|i| s[i] * (mx[(i, 1)] + my[(i, 2)])).sum();
        let flux = eps * eps * g2 - 2.0 * eps * cross + s.dot(&(&l.mass * s));

        let pts = mesh.element_points(t);
        let r2 = data.integrate(&pts, l.geom.area, |x| res(x).powi(2));
        let div_cross: f64 = (0..VECTOR_DIM).map(|i| s[i] * mr[(i, 0)]).sum();
        let div = r2 - 2.0 * eps * div_cross + eps * eps * s.dot(&(&l.divdiv * s));
        total += flux.max(0.0) + div.max(0.0);
    }
    total.sqrt()
}

/// `||(1 - Π⁰) f||` over the mesh.
pub fn data_oscillation(mesh: &Mesh, problem: &dyn Problem) -> f64 {
    (0..mesh.n_elements())
        .map(|t| {
            let r = data_rule(mesh, t, problem.layer_width());
            let pts = mesh.element_points(t);
            let a = mesh.triangles[t].area;
            let i1 = r.integrate(&pts, a, |x| problem.load(x));
            let i2 = r.integrate(&pts, a, |x| problem.load(x).powi(2));
            (i2 - i1 * i1 / a).max(0.0)
        })
        .sum::<f64>()
        .sqrt()
}
