//! Dual hybrid method: broken H(div) fluxes `sigma ≈ eps ∇u` coupled through
//! the traces of continuous piecewise linears vanishing on the boundary.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{p1_from_moments, LoadData, RuleCache, FACET_POINTS};
use crate::basis::{class_index, vector_facet, BubbleVariant, ElementGeometry, ElementRules, VECTOR_DIM};
use crate::condensation::{solve_condensed, LocalSystem};
use crate::mesh::Mesh;
use crate::phfem::{HybridOptions, SolveError};
use crate::problem::{data_rule, Problem};
use crate::quadrature::{gauss_legendre, Bary, Rule};

#[derive(Clone, Debug)]
pub struct DhfemLocal {
    pub element: usize,
    pub geom: ElementGeometry,
    /// `(phi_j, phi_i)_T`.
    pub mass: DMatrix<f64>,
    /// `(div phi_j, div phi_i)_T`.
    pub divdiv: DMatrix<f64>,
    /// `eps^2 D + M`.
    pub a: DMatrix<f64>,
    /// `-eps ∫_{∂T} (phi_i · n_T) lambda_v` for the local vertices `v`.
    pub b: DMatrix<f64>,
    /// `-eps (f, div phi_i)_T`.
    pub load: DVector<f64>,
    /// `(f, div phi_i)_T`.
    pub fdiv: DVector<f64>,
    /// `(div phi_i, lambda_j)_T`.
    pub div_p1: DMatrix<f64>,
    /// `∫_T phi_i`, one row per shape function.
    pub integrals: DMatrix<f64>,
    pub data: LoadData,
}

pub(crate) fn vector_grams(geom: &ElementGeometry, rules: &ElementRules) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = VECTOR_DIM;
    let mut mass = DMatrix::zeros(n, n);
    let mut divdiv = DMatrix::zeros(n, n);
    for (ci, &(fa, fb)) in rules.classes().iter().enumerate() {
        let rule = rules.for_pair(fa, fb);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !rules.is_layered() || class_index(vector_facet(i), vector_facet(j)) == ci)
            .collect();
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let s = geom.vector(l);
            for &(i, j) in &pairs {
                mass[(i, j)] += w * (s.v[i][0] * s.v[j][0] + s.v[i][1] * s.v[j][1]);
                divdiv[(i, j)] += w * s.div[i] * s.div[j];
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            mass[(i, j)] *= geom.area;
            divdiv[(i, j)] *= geom.area;
            mass[(j, i)] = mass[(i, j)];
            divdiv[(j, i)] = divdiv[(i, j)];
        }
    }
    (mass, divdiv)
}

/// Integrals against a weight `g` of `div phi_i` (column 0) and the two
/// components of `phi_i` (columns 1, 2); polynomial shape functions use
/// `data`, face bubbles their facet rule.
pub(crate) fn vector_moments(
    geom: &ElementGeometry,
    rules: &ElementRules,
    data: &Rule,
    g: &dyn Fn([f64; 2]) -> f64,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(VECTOR_DIM, 3);
    let layered = rules.is_layered();
    let mut add = |rule: &Rule, only: Option<usize>| {
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let s = geom.vector(l);
            let v = w * g(geom.physical(l));
            for i in 0..VECTOR_DIM {
                let keep = match only {
                    Some(k) => i == 3 + k,
                    None => !layered || vector_facet(i).is_none(),
                };
                if keep {
                    out[(i, 0)] += v * s.div[i];
                    out[(i, 1)] += v * s.v[i][0];
                    out[(i, 2)] += v * s.v[i][1];
                }
            }
        }
    };
    add(data, None);
    if layered {
        for k in 0..3 {
            add(rules.for_pair(Some(k), None), Some(k));
        }
    }
    out * geom.area
}

pub fn assemble_local_dual(
    mesh: &Mesh,
    t: usize,
    problem: &dyn Problem,
    variant: BubbleVariant,
    cache: &mut RuleCache,
) -> DhfemLocal {
    let eps = problem.eps();
    let geom = ElementGeometry::new(mesh, t, eps, variant);
    let rules = cache.get(geom.layer);
    let (mass, divdiv) = vector_grams(&geom, &rules);
    let a = &divdiv * (eps * eps) + &mass;
    let data = data_rule(mesh, t, problem.layer_width());
    let f = |x| problem.load(x);
    let fm = vector_moments(&geom, &rules, &data, &f);
    let fdiv = fm.column(0).into_owned();
    let load = &fdiv * -eps;

    // (div phi_i, lambda_j) and ∫ phi_i on the plain rule; the bubble rows on
    // their facet rules
    let mut div_p1 = DMatrix::zeros(VECTOR_DIM, 3);
    let mut integrals = DMatrix::zeros(VECTOR_DIM, 2);
    let mut add = |rule: &Rule, rows: &[usize]| {
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let s = geom.vector(l);
            for &i in rows {
                for j in 0..3 {
                    div_p1[(i, j)] += w * geom.area * s.div[i] * l[j];
                }
                integrals[(i, 0)] += w * geom.area * s.v[i][0];
                integrals[(i, 1)] += w * geom.area * s.v[i][1];
            }
        }
    };
    if rules.is_layered() {
        add(rules.plain(), &[0, 1, 2, 6, 7]);
        for k in 0..3 {
            add(rules.for_pair(Some(k), None), &[3 + k]);
        }
    } else {
        add(rules.plain(), &[0, 1, 2, 3, 4, 5, 6, 7]);
    }

    let (x, w) = gauss_legendre(FACET_POINTS);
    let mut b = DMatrix::zeros(VECTOR_DIM, 3);
    for k in 0..3 {
        for (s, ws) in x.iter().zip(w) {
            let l = ElementGeometry::facet_point(k, *s);
            let v = geom.vector(&l);
            let n = geom.normals[k];
            for i in 0..VECTOR_DIM {
                let flux = v.v[i][0] * n[0] + v.v[i][1] * n[1];
                for j in 0..3 {
                    b[(i, j)] -= eps * geom.facet_len[k] * ws * flux * l[j];
                }
            }
        }
    }

    DhfemLocal {
        element: t,
        data: LoadData::new(&data, &geom, &f),
        geom,
        mass,
        divdiv,
        a,
        b,
        load,
        fdiv,
        div_p1,
        integrals,
    }
}

#[derive(Clone, Debug)]
pub struct DhfemSolution {
    pub eps: f64,
    /// One trace value per interior vertex.
    pub w: Vec<f64>,
    /// Eight coefficients per element.
    pub sigma: Vec<DVector<f64>>,
    pub locals: Vec<DhfemLocal>,
    pub skeleton_residual: f64,
}

pub fn local_systems_dual(mesh: &Mesh, locals: &[DhfemLocal]) -> Vec<LocalSystem> {
    let numbering = mesh.interior_vertex_numbering();
    locals
        .iter()
        .map(|l| LocalSystem {
            a: l.a.clone(),
            c: l.b.clone(),
            g: l.load.clone(),
            dofs: mesh.triangles[l.element].vertices.iter().map(|&v| numbering[v]).collect(),
        })
        .collect()
}

pub fn assemble_dual(mesh: &Mesh, problem: &dyn Problem, variant: BubbleVariant) -> Vec<DhfemLocal> {
    let mut cache = RuleCache::default();
    (0..mesh.n_elements())
        .map(|t| assemble_local_dual(mesh, t, problem, variant, &mut cache))
        .collect()
}

pub fn condense_and_solve_dual(mesh: &Mesh, problem: &dyn Problem, opts: HybridOptions) -> Result<DhfemSolution, SolveError> {
    let locals = assemble_dual(mesh, problem, opts.variant);
    let systems = local_systems_dual(mesh, &locals);
    let h = solve_condensed(&systems, mesh.n_interior_vertices(), opts.flip_coupling).map_err(|e| match e {
        crate::linalg::LinalgError::NotPositiveDefinite { element: Some(t) } => SolveError::Local { element: t, source: e },
        e => SolveError::Linalg(e),
    })?;
    Ok(DhfemSolution {
        eps: problem.eps(),
        w: h.skeleton,
        sigma: h.local,
        locals,
        skeleton_residual: h.residual,
    })
}

impl DhfemSolution {
    pub fn flux(&self, t: usize, l: &Bary) -> [f64; 2] {
        let v = self.locals[t].geom.vector(l);
        let mut s = [0.0; 2];
        for i in 0..VECTOR_DIM {
            s[0] += self.sigma[t][i] * v.v[i][0];
            s[1] += self.sigma[t][i] * v.v[i][1];
        }
        s
    }

    pub fn divergence(&self, t: usize, l: &Bary) -> f64 {
        let v = self.locals[t].geom.vector(l);
        (0..VECTOR_DIM).map(|i| self.sigma[t][i] * v.div[i]).sum()
    }

    /// The postprocessed primal field `eps div sigma_h + f`.
    pub fn primal(&self, t: usize, l: &Bary, problem: &dyn Problem) -> f64 {
        self.eps * self.divergence(t, l) + problem.load(self.locals[t].geom.physical(l))
    }

    /// `∫_T (eps div sigma_h + f)`.
    pub fn primal_integral(&self, t: usize) -> f64 {
        let l = &self.locals[t];
        let div: f64 = (0..VECTOR_DIM)
            .map(|i| self.sigma[t][i] * (l.div_p1[(i, 0)] + l.div_p1[(i, 1)] + l.div_p1[(i, 2)]))
            .sum();
        self.eps * div + l.data.integral
    }

    /// Element means of the postprocessed primal field.
    pub fn project_p0(&self) -> Vec<f64> {
        (0..self.sigma.len())
            .map(|t| self.primal_integral(t) / self.locals[t].geom.area)
            .collect()
    }

    /// Element-wise P1 projections of the postprocessed primal field, as
    /// vertex values.
    pub fn project_p1(&self) -> Vec<[f64; 3]> {
        (0..self.sigma.len())
            .map(|t| {
                let l = &self.locals[t];
                let mom = std::array::from_fn(|j| {
                    self.eps * (0..VECTOR_DIM).map(|i| self.sigma[t][i] * l.div_p1[(i, j)]).sum::<f64>()
                        + l.data.p1[j]
                });
                p1_from_moments(mom, l.geom.area)
            })
            .collect()
    }

    /// `Σ_T ∫_{∂T} (sigma_h · n_T) w_v` for every interior vertex `v`.
    pub fn vertex_flux_pairings(&self, mesh: &Mesh) -> Vec<f64> {
        let numbering = mesh.interior_vertex_numbering();
        let mut out = vec![0.0; mesh.n_interior_vertices()];
        for (t, l) in self.locals.iter().enumerate() {
            for (j, &v) in mesh.triangles[t].vertices.iter().enumerate() {
                if let Some(g) = numbering[v] {
                    let pairing: f64 = (0..VECTOR_DIM).map(|i| self.sigma[t][i] * l.b[(i, j)]).sum();
                    out[g] += pairing / -self.eps;
                }
            }
        }
        out
    }

    /// Largest pairing relative to `max |sigma_h · n| |ω_v|`-like scale:
    /// the sum of absolute element contributions at the vertex.
    pub fn constraint_violation(&self, mesh: &Mesh) -> f64 {
        let numbering = mesh.interior_vertex_numbering();
        let mut scale = vec![0.0f64; mesh.n_interior_vertices()];
        for (t, l) in self.locals.iter().enumerate() {
            for (j, &v) in mesh.triangles[t].vertices.iter().enumerate() {
                if let Some(g) = numbering[v] {
                    let pairing: f64 = (0..VECTOR_DIM).map(|i| self.sigma[t][i] * l.b[(i, j)]).sum();
                    scale[g] += (pairing / self.eps).abs();
                }
            }
        }
        let global = scale.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        self.vertex_flux_pairings(mesh)
            .iter()
            .map(|p| p.abs() / global)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condensation::solve_monolithic;
    use crate::problem::ManufacturedProblem;

    #[test]
    fn raviart_thomas_blocks() {
        let mesh = Mesh::unit_square(1);
        let eps = 0.7;
        let p = ManufacturedProblem::new(eps);
        let l = assemble_local_dual(&mesh, 0, &p, BubbleVariant::Exponential, &mut RuleCache::default());
        let area = l.geom.area;
        for i in 0..3 {
            assert!(l.mass[(i, i)] > 0.0);
            for j in 0..3 {
                assert!((l.divdiv[(i, j)] - 1.0 / area).abs() < 1e-13);
            }
        }
        // RT function of facet k against the hat of a vertex on that facet
        for k in 0..3 {
            for v in 0..3 {
                let expect = if v == k { 0.0 } else { -eps / 2.0 };
                assert!((l.b[(k, v)] - expect).abs() < 1e-14, "{k} {v}");
            }
        }
    }

    #[test]
    fn two_triangles_have_no_skeleton() {
        let mesh = Mesh::unit_square(1);
        let sol = condense_and_solve_dual(&mesh, &ManufacturedProblem::new(0.1), HybridOptions::default()).unwrap();
        assert!(sol.w.is_empty());
        assert!(sol.sigma.iter().any(|s| s.amax() > 0.0));
    }

    #[test]
    fn matches_monolithic_on_eight_triangles() {
        let mesh = Mesh::unit_square(2);
        for eps in [1.0, 1e-4] {
            let p = ManufacturedProblem::new(eps);
            let sol = condense_and_solve_dual(&mesh, &p, HybridOptions::default()).unwrap();
            let (s, w) = solve_monolithic(&local_systems_dual(&mesh, &sol.locals), mesh.n_interior_vertices()).unwrap();
            for (a, b) in sol.w.iter().zip(&w) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
            for (a, b) in sol.sigma.iter().zip(&s) {
                assert!((a - b).amax() < 1e-9);
            }
            assert!(sol.constraint_violation(&mesh) < 1e-9);
        }
    }
}
