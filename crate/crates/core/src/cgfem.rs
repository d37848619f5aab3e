//! Lowest-order conforming Galerkin method, the comparison baseline.

use crate::basis::{BubbleVariant, ElementGeometry};
use crate::linalg::{solve_spd, CsrMatrix, LinalgError};
use crate::mesh::Mesh;
use crate::problem::{data_rule, Problem};
use crate::quadrature::Bary;

#[derive(Clone, Debug)]
pub struct CgSolution {
    pub eps: f64,
    /// Nodal values at every vertex; zero on the boundary.
    pub values: Vec<f64>,
}

/// Local stiffness `|T| ∇λ_i·∇λ_j`, mass `|T|(1 + δ_ij)/12`, and load `(f, λ_i)`.
fn local(mesh: &Mesh, t: usize, problem: &dyn Problem) -> ([[f64; 3]; 3], [[f64; 3]; 3], [f64; 3]) {
    let geom = ElementGeometry::new(mesh, t, 1.0, BubbleVariant::Exponential);
    let g = geom.grad_bary;
    let a = geom.area;
    let stiff = std::array::from_fn(|i| std::array::from_fn(|j| a * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
    let mass = std::array::from_fn(|i| std::array::from_fn(|j| a * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 }));
    let rule = data_rule(mesh, t, problem.layer_width());
    let mut load = [0.0; 3];
    for (l, w) in rule.bary.iter().zip(&rule.weights) {
        let f = problem.load(geom.physical(l));
        for i in 0..3 {
            load[i] += a * w * f * l[i];
        }
    }
    (stiff, mass, load)
}

/// System matrix and load on the interior vertices.
pub fn assemble_cg(mesh: &Mesh, problem: &dyn Problem) -> (CsrMatrix, Vec<f64>) {
    let eps2 = problem.eps().powi(2);
    let numbering = mesh.interior_vertex_numbering();
    let n = mesh.n_interior_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.n_elements());
    let mut rhs = vec![0.0; n];
    for t in 0..mesh.n_elements() {
        let (k, m, f) = local(mesh, t, problem);
        let v = mesh.triangles[t].vertices;
        for i in 0..3 {
            let Some(gi) = numbering[v[i]] else { continue };
            rhs[gi] += f[i];
            for j in 0..3 {
                if let Some(gj) = numbering[v[j]] {
                    triplets.push((gi, gj, eps2 * k[i][j] + m[i][j]));
                }
            }
        }
    }
    (CsrMatrix::from_triplets(n, triplets), rhs)
}

pub fn solve_cg(mesh: &Mesh, problem: &dyn Problem) -> Result<CgSolution, LinalgError> {
    let (s, rhs) = assemble_cg(mesh, problem);
    let x = if s.n == 0 { Vec::new() } else { solve_spd(&s, &rhs)? };
    let numbering = mesh.interior_vertex_numbering();
    let values = numbering.iter().map(|n| n.map_or(0.0, |g| x[g])).collect();
    Ok(CgSolution { eps: problem.eps(), values })
}

impl CgSolution {
    pub fn value(&self, mesh: &Mesh, t: usize, l: &Bary) -> f64 {
        let v = mesh.triangles[t].vertices;
        (0..3).map(|i| l[i] * self.values[v[i]]).sum()
    }

    /// Element means.
    pub fn project_p0(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.triangles
            .iter()
            .map(|t| t.vertices.iter().map(|&v| self.values[v]).sum::<f64>() / 3.0)
            .collect()
    }

    /// `max_i |(a(u_h, phi_i) - (f, phi_i))| / max_i |(f, phi_i)|` over
    /// interior hats.
    pub fn galerkin_residual(&self, mesh: &Mesh, problem: &dyn Problem) -> f64 {
        let (s, rhs) = assemble_cg(mesh, problem);
        let numbering = mesh.interior_vertex_numbering();
        let mut x = vec![0.0; s.n];
        for (v, n) in numbering.iter().enumerate() {
            if let Some(g) = n {
                x[*g] = self.values[v];
            }
        }
        let mut ax = vec![0.0; s.n];
        s.mul_vec(&x, &mut ax);
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        ax.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
    }
}
