//! Element-wise a posteriori error indicators for both hybrid methods.
//!
//! Volume terms are evaluated from the stored Gram matrices and load
//! moments, `||(1 - Π⁰) v||² = ||v||² - (∫v)² / |T|`; facet terms by Gauss
//! quadrature on the facet, where all traces are polynomials.

use nalgebra::DVector;

use crate::assembly::FACET_POINTS;
use crate::basis::{ElementGeometry, SCALAR_DIM, VECTOR_DIM};
use crate::dhfem::DhfemSolution;
use crate::mesh::Mesh;
use crate::phfem::PhfemSolution;
use crate::quadrature::{gauss_legendre, Bary};

/// Squared contributions of one element.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EstimatorTerms {
    /// `||(1 - Π⁰)(u_h - f)||²`, resp. `||(1 - Π⁰)(eps div sigma_h - f)||²`.
    pub volume: f64,
    /// `eps² ||(1 - Π⁰)∇u_h||²`, resp. `||(1 - Π⁰) sigma_h||²`.
    pub projection: f64,
    /// `eps ||[[u_h]]||²_{∂T}`; zero for the dual indicator.
    pub jump: f64,
    /// `eps² h_T ||[[∂_t u_h]]||²_{∂T}`, resp.
    /// `min(eps, h_T) ||[[sigma_h · n]]||²` over interior facets.
    pub flux_jump: f64,
}

impl EstimatorTerms {
    pub fn total(&self) -> f64 {
        self.volume + self.projection + self.jump + self.flux_jump
    }
}

#[derive(Clone, Debug, Default)]
pub struct EstimateReport {
    pub terms: Vec<EstimatorTerms>,
}

impl EstimateReport {
    /// `est(T)²` for every element.
    pub fn local(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.total()).collect()
    }

    /// `est² = Σ_T est(T)²`.
    pub fn total_squared(&self) -> f64 {
        self.terms.iter().map(|t| t.total()).sum()
    }

    pub fn total(&self) -> f64 {
        self.total_squared().sqrt()
    }
}

/// Barycentric coordinates in element `t` of the point at parameter `s`
/// along facet `f`, measured from the facet's first vertex.
fn facet_bary(mesh: &Mesh, t: usize, f: usize, s: f64) -> Bary {
    let tri = &mesh.triangles[t];
    let k = tri.facets.iter().position(|&g| g == f).expect("facet belongs to element");
    if tri.vertices[(k + 1) % 3] == mesh.facets[f].vertices[0] {
        ElementGeometry::facet_point(k, s)
    } else {
        ElementGeometry::facet_point(k, 1.0 - s)
    }
}

/// `||[[v]]||²_F` for each facet, with `v` evaluated per element.
fn facet_jump_norms(mesh: &Mesh, eval: impl Fn(usize, &Bary, usize) -> f64, interior_only: bool) -> Vec<f64> {
    let (x, w) = gauss_legendre(FACET_POINTS);
    mesh.facets
        .iter()
        .enumerate()
        .map(|(f, facet)| {
            if interior_only && facet.is_boundary() {
                return 0.0;
            }
            facet.length
                * x.iter()
                    .zip(w)
                    .map(|(s, ws)| {
                        let a = eval(facet.first, &facet_bary(mesh, facet.first, f, *s), f);
                        let b = facet.second.map_or(0.0, |t| eval(t, &facet_bary(mesh, t, f, *s), f));
                        ws * (a - b).powi(2)
                    })
                    .sum::<f64>()
        })
        .collect()
}

fn quad(m: &nalgebra::DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Primal indicator for coefficient vectors `u` (seven per element).
pub fn rho_terms(mesh: &Mesh, sol: &PhfemSolution, u: &[DVector<f64>]) -> EstimateReport {
    let eps = sol.eps;
    let tangents: Vec<[f64; 2]> = mesh.facets.iter().map(|f| [-f.normal[1], f.normal[0]]).collect();
    let value = |t: usize, l: &Bary, _f: usize| {
        let s = sol.locals[t].geom.scalar(l);
        (0..SCALAR_DIM).map(|i| u[t][i] * s.v[i]).sum::<f64>()
    };
    let tangential = |t: usize, l: &Bary, f: usize| {
        let s = sol.locals[t].geom.scalar(l);
        let tf = tangents[f];
        (0..SCALAR_DIM)
            .map(|i| u[t][i] * (s.g[i][0] * tf[0] + s.g[i][1] * tf[1]))
            .sum::<f64>()
    };
    let jumps = facet_jump_norms(mesh, value, false);
    let tjumps = facet_jump_norms(mesh, tangential, false);

    let terms = sol
        .locals
        .iter()
        .enumerate()
        .map(|(t, l)| {
            let c = &u[t];
            let area = l.geom.area;
            let int_u: f64 = (0..SCALAR_DIM).map(|i| c[i] * (l.mass[(i, 0)] + l.mass[(i, 1)] + l.mass[(i, 2)])).sum();
            let volume = quad(&l.mass, c) - 2.0 * l.load.dot(c) + l.data.square
                - (int_u - l.data.integral).powi(2) / area;
            let mut g = [0.0; 2];
            for k in 0..3 {
                let tr: f64 = (0..SCALAR_DIM).map(|i| c[i] * l.traces[(i, k)]).sum();
                g[0] += tr * l.geom.normals[k][0];
                g[1] += tr * l.geom.normals[k][1];
            }
            let projection = eps * eps * (quad(&l.stiff, c) - (g[0] * g[0] + g[1] * g[1]) / area);
            let facets = mesh.triangles[t].facets;
            EstimatorTerms {
                volume: volume.max(0.0),
                projection: projection.max(0.0),
                jump: eps * facets.iter().map(|&f| jumps[f]).sum::<f64>(),
                flux_jump: eps * eps * l.geom.diameter * facets.iter().map(|&f| tjumps[f]).sum::<f64>(),
            }
        })
        .collect();
    EstimateReport { terms }
}

pub fn estimate_rho(mesh: &Mesh, sol: &PhfemSolution) -> EstimateReport {
    rho_terms(mesh, sol, &sol.u)
}

/// Dual indicator for coefficient vectors `sigma` (eight per element).
pub fn xi_terms(mesh: &Mesh, sol: &DhfemSolution, sigma: &[DVector<f64>]) -> EstimateReport {
    let eps = sol.eps;
    let normal_flux = |t: usize, l: &Bary, f: usize| {
        let v = sol.locals[t].geom.vector(l);
        let n = mesh.facets[f].normal;
        (0..VECTOR_DIM)
            .map(|i| sigma[t][i] * (v.v[i][0] * n[0] + v.v[i][1] * n[1]))
            .sum::<f64>()
    };
    let jumps = facet_jump_norms(mesh, normal_flux, true);

    let terms = sol
        .locals
        .iter()
        .enumerate()
        .map(|(t, l)| {
            let s = &sigma[t];
            let area = l.geom.area;
            let int_div: f64 = (0..VECTOR_DIM)
                .map(|i| s[i] * (l.div_p1[(i, 0)] + l.div_p1[(i, 1)] + l.div_p1[(i, 2)]))
                .sum();
            let volume = eps * eps * quad(&l.divdiv, s) - 2.0 * eps * l.fdiv.dot(s) + l.data.square
                - (eps * int_div - l.data.integral).powi(2) / area;
            let mean = [
                (0..VECTOR_DIM).map(|i| s[i] * l.integrals[(i, 0)]).sum::<f64>(),
                (0..VECTOR_DIM).map(|i| s[i] * l.integrals[(i, 1)]).sum::<f64>(),
            ];
            let projection = quad(&l.mass, s) - (mean[0] * mean[0] + mean[1] * mean[1]) / area;
            let weight = eps.min(l.geom.diameter);
            EstimatorTerms {
                volume: volume.max(0.0),
                projection: projection.max(0.0),
                jump: 0.0,
                flux_jump: weight * mesh.triangles[t].facets.iter().map(|&f| jumps[f]).sum::<f64>(),
            }
        })
        .collect();
    EstimateReport { terms }
}

pub fn estimate_xi(mesh: &Mesh, sol: &DhfemSolution) -> EstimateReport {
    xi_terms(mesh, sol, &sol.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BubbleVariant;
    use crate::phfem::{assemble, condense_and_solve, HybridOptions};
    use crate::problem::{ManufacturedProblem, Problem};

    struct Constant(f64, f64, Mesh);
    impl Problem for Constant {
        fn name(&self) -> &'static str {
            "constant"
        }
        fn eps(&self) -> f64 {
            self.1
        }
        fn load(&self, _: [f64; 2]) -> f64 {
            self.0
        }
        fn initial_mesh(&self) -> Mesh {
            self.2.clone()
        }
    }

    fn constant_field(c: f64, n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|_| {
                let mut v = DVector::zeros(SCALAR_DIM);
                v[0] = c;
                v[1] = c;
                v[2] = c;
                v
            })
            .collect()
    }

    #[test]
    fn constant_on_single_element_leaves_boundary_jump() {
        let mesh = Mesh::new(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], None).unwrap();
        let (c, eps) = (0.7, 1e-2);
        let p = Constant(c, eps, mesh.clone());
        let locals = assemble(&mesh, &p, BubbleVariant::Exponential);
        let sol = PhfemSolution { eps, lambda: vec![0.0; 3], u: constant_field(c, 1), locals, skeleton_residual: 0.0 };
        let r = rho_terms(&mesh, &sol, &sol.u);
        let t = r.terms[0];
        let perimeter = 3.0 + 5f64.sqrt();
        assert!(t.volume.abs() < 1e-14 && t.projection.abs() < 1e-14 && t.flux_jump.abs() < 1e-14);
        assert!((t.jump - eps * c * c * perimeter).abs() < 1e-13);
    }

    #[test]
    fn zero_solution_zero_load() {
        let mesh = Mesh::unit_square(2);
        let p = Constant(0.0, 1e-3, mesh.clone());
        let sol = condense_and_solve(&mesh, &p, HybridOptions::default()).unwrap();
        assert_eq!(estimate_rho(&mesh, &sol).total(), 0.0);
    }

    #[test]
    fn totals_add_up() {
        let mesh = Mesh::unit_square(4);
        let p = ManufacturedProblem::new(1e-3);
        let sol = condense_and_solve(&mesh, &p, HybridOptions::default()).unwrap();
        let r = estimate_rho(&mesh, &sol);
        let sum: f64 = r.local().iter().sum();
        assert!((sum - r.total_squared()).abs() <= 1e-12 * sum);
        assert!(r.terms.iter().all(|t| t.volume >= 0.0 && t.projection >= 0.0 && t.jump >= 0.0 && t.flux_jump >= 0.0));
    }
}
