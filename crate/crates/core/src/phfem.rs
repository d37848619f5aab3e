//! Primal hybrid method: broken `P1 + face bubbles + element bubble` for `u`,
//! facet-wise constant multipliers for the flux `eps ∇u · n`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::assembly::{p1_from_moments, LoadData, RuleCache, FACET_POINTS};
use crate::basis::{class_index, scalar_facet, BubbleVariant, ElementGeometry, ElementRules, SCALAR_DIM};
use crate::condensation::{solve_condensed, LocalSystem};
use crate::linalg::LinalgError;
use crate::mesh::Mesh;
use crate::problem::{data_rule, Problem};
use crate::quadrature::{gauss_legendre, Bary};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("element {element}: {source}")]
    Local { element: usize, source: LinalgError },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl SolveError {
    fn from_linalg(e: LinalgError) -> SolveError {
        match e {
            LinalgError::NotPositiveDefinite { element: Some(t) } => SolveError::Local { element: t, source: e },
            e => SolveError::Linalg(e),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HybridOptions {
    pub variant: BubbleVariant,
    /// Flips the sign of the coupling in the condensed path only.
    #[doc(hidden)]
    pub flip_coupling: bool,
}

impl Default for HybridOptions {
    fn default() -> Self {
        HybridOptions { variant: BubbleVariant::Exponential, flip_coupling: false }
    }
}

#[derive(Clone, Debug)]
pub struct PhfemLocal {
    pub element: usize,
    pub geom: ElementGeometry,
    /// `(phi_j, phi_i)_T`.
    pub mass: DMatrix<f64>,
    /// `(∇phi_j, ∇phi_i)_T`.
    pub stiff: DMatrix<f64>,
    /// `eps^2 K + M`.
    pub a: DMatrix<f64>,
    /// `s_k eps ∫_{F_k} phi_i`, with `s_k = ±1` the facet orientation sign.
    pub b: DMatrix<f64>,
    /// `(f, phi_i)_T`.
    pub load: DVector<f64>,
    /// `∫_{F_k} phi_i`.
    pub traces: DMatrix<f64>,
    pub data: LoadData,
}

/// Mass and stiffness Gram matrices of the scalar basis, integrated class
/// by class.
pub(crate) fn scalar_grams(geom: &ElementGeometry, rules: &ElementRules) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = SCALAR_DIM;
    let mut mass = DMatrix::zeros(n, n);
    let mut stiff = DMatrix::zeros(n, n);
    for (ci, &(fa, fb)) in rules.classes().iter().enumerate() {
        let rule = rules.for_pair(fa, fb);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !rules.is_layered() || class_index(scalar_facet(i), scalar_facet(j)) == ci)
            .collect();
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let s = geom.scalar(l);
            for &(i, j) in &pairs {
                mass[(i, j)] += w * s.v[i] * s.v[j];
                stiff[(i, j)] += w * (s.g[i][0] * s.g[j][0] + s.g[i][1] * s.g[j][1]);
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            mass[(i, j)] *= geom.area;
            stiff[(i, j)] *= geom.area;
            mass[(j, i)] = mass[(i, j)];
            stiff[(j, i)] = stiff[(i, j)];
        }
    }
    (mass, stiff)
}

/// `∫_T g(x) phi_i` with the data rule for polynomial shape functions and
/// the facet rule for face bubbles.
pub(crate) fn scalar_moments(
    geom: &ElementGeometry,
    rules: &ElementRules,
    data: &crate::quadrature::Rule,
    g: &dyn Fn([f64; 2]) -> f64,
) -> DVector<f64> {
    let mut out = DVector::zeros(SCALAR_DIM);
    let layered = rules.is_layered();
    for (l, w) in data.bary.iter().zip(&data.weights) {
        let s = geom.scalar(l);
        let v = w * g(geom.physical(l));
        for i in 0..SCALAR_DIM {
            if !layered || scalar_facet(i).is_none() {
                out[i] += v * s.v[i];
            }
        }
    }
    if layered {
        for k in 0..3 {
            let rule = rules.for_pair(Some(k), None);
            for (l, w) in rule.bary.iter().zip(&rule.weights) {
                out[3 + k] += w * g(geom.physical(l)) * geom.face_bubble(k, l).0;
            }
        }
    }
    out * geom.area
}

/// `∫_{F_k} phi_i` for every local facet.
pub(crate) fn scalar_traces(geom: &ElementGeometry) -> DMatrix<f64> {
    let (x, w) = gauss_legendre(FACET_POINTS);
    let mut t = DMatrix::zeros(SCALAR_DIM, 3);
    for k in 0..3 {
        for (s, ws) in x.iter().zip(w) {
            let v = geom.scalar(&ElementGeometry::facet_point(k, *s));
            for i in 0..SCALAR_DIM {
                t[(i, k)] += geom.facet_len[k] * ws * v.v[i];
            }
        }
    }
    t
}

pub fn assemble_local(
    mesh: &Mesh,
    t: usize,
    problem: &dyn Problem,
    variant: BubbleVariant,
    cache: &mut RuleCache,
) -> PhfemLocal {
    let eps = problem.eps();
    let geom = ElementGeometry::new(mesh, t, eps, variant);
    let rules = cache.get(geom.layer);
    let (mass, stiff) = scalar_grams(&geom, &rules);
    let a = &stiff * (eps * eps) + &mass;
    let data = data_rule(mesh, t, problem.layer_width());
    let f = |x| problem.load(x);
    let load = scalar_moments(&geom, &rules, &data, &f);
    let traces = scalar_traces(&geom);
    let b = DMatrix::from_fn(SCALAR_DIM, 3, |i, k| mesh.facet_sign(t, k) * eps * traces[(i, k)]);
    PhfemLocal {
        element: t,
        data: LoadData::new(&data, &geom, &f),
        geom,
        mass,
        stiff,
        a,
        b,
        load,
        traces,
    }
}

#[derive(Clone, Debug)]
pub struct PhfemSolution {
    pub eps: f64,
    /// One multiplier per facet, in the facet's canonical orientation.
    pub lambda: Vec<f64>,
    /// Seven coefficients per element.
    pub u: Vec<DVector<f64>>,
    pub locals: Vec<PhfemLocal>,
    pub skeleton_residual: f64,
}

pub fn local_systems(mesh: &Mesh, locals: &[PhfemLocal]) -> Vec<LocalSystem> {
    locals
        .iter()
        .map(|l| LocalSystem {
            a: l.a.clone(),
            c: -&l.b,
            g: l.load.clone(),
            dofs: mesh.triangles[l.element].facets.iter().map(|&f| Some(f)).collect(),
        })
        .collect()
}

pub fn assemble(mesh: &Mesh, problem: &dyn Problem, variant: BubbleVariant) -> Vec<PhfemLocal> {
    let mut cache = RuleCache::default();
    (0..mesh.n_elements())
        .map(|t| assemble_local(mesh, t, problem, variant, &mut cache))
        .collect()
}

pub fn condense_and_solve(mesh: &Mesh, problem: &dyn Problem, opts: HybridOptions) -> Result<PhfemSolution, SolveError> {
    let locals = assemble(mesh, problem, opts.variant);
    let systems = local_systems(mesh, &locals);
    let h = solve_condensed(&systems, mesh.n_facets(), opts.flip_coupling).map_err(SolveError::from_linalg)?;
    Ok(PhfemSolution {
        eps: problem.eps(),
        lambda: h.skeleton,
        u: h.local,
        locals,
        skeleton_residual: h.residual,
    })
}

impl PhfemSolution {
    pub fn value(&self, t: usize, l: &Bary) -> f64 {
        let s = self.locals[t].geom.scalar(l);
        (0..SCALAR_DIM).map(|i| self.u[t][i] * s.v[i]).sum()
    }

    pub fn gradient(&self, t: usize, l: &Bary) -> [f64; 2] {
        let s = self.locals[t].geom.scalar(l);
        let mut g = [0.0; 2];
        for i in 0..SCALAR_DIM {
            g[0] += self.u[t][i] * s.g[i][0];
            g[1] += self.u[t][i] * s.g[i][1];
        }
        g
    }

    /// `∫_T u_h`.
    pub fn integral(&self, t: usize) -> f64 {
        let m = &self.locals[t].mass;
        (0..SCALAR_DIM).map(|i| self.u[t][i] * (m[(i, 0)] + m[(i, 1)] + m[(i, 2)])).sum()
    }

    /// `∫_T ∇u_h`, from the boundary integral of the trace.
    pub fn gradient_integral(&self, t: usize) -> [f64; 2] {
        let l = &self.locals[t];
        let mut g = [0.0; 2];
        for k in 0..3 {
            let tr: f64 = (0..SCALAR_DIM).map(|i| self.u[t][i] * l.traces[(i, k)]).sum();
            g[0] += tr * l.geom.normals[k][0];
            g[1] += tr * l.geom.normals[k][1];
        }
        g
    }

    /// Element means.
    pub fn project_p0(&self) -> Vec<f64> {
        (0..self.u.len()).map(|t| self.integral(t) / self.locals[t].geom.area).collect()
    }

    /// Element-wise L2 projections onto P1, as values at the three vertices.
    pub fn project_p1(&self) -> Vec<[f64; 3]> {
        (0..self.u.len())
            .map(|t| {
                let m = &self.locals[t].mass;
                let mom = std::array::from_fn(|j| (0..SCALAR_DIM).map(|i| self.u[t][i] * m[(i, j)]).sum());
                p1_from_moments(mom, self.locals[t].geom.area)
            })
            .collect()
    }

    /// `∫_F [[u_h]]` for every facet (the trace on boundary facets).
    pub fn facet_jump_integrals(&self, mesh: &Mesh) -> Vec<f64> {
        let mut out = vec![0.0; mesh.n_facets()];
        for (t, l) in self.locals.iter().enumerate() {
            for k in 0..3 {
                let tr: f64 = (0..SCALAR_DIM).map(|i| self.u[t][i] * l.traces[(i, k)]).sum();
                out[mesh.triangles[t].facets[k]] += mesh.facet_sign(t, k) * tr;
            }
        }
        out
    }

    /// Largest `|∫_F [[u_h]]| / (|F| max|u_h|)` over all facets.
    pub fn constraint_violation(&self, mesh: &Mesh) -> f64 {
        let scale = self
            .u
            .iter()
            .flat_map(|u| u.iter().take(3).copied())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        self.facet_jump_integrals(mesh)
            .iter()
            .zip(&mesh.facets)
            .map(|(j, f)| j.abs() / (f.length * scale))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condensation::solve_monolithic;
    use crate::problem::ManufacturedProblem;

    struct Constant(f64, f64);
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
            Mesh::unit_square(2)
        }
    }

    #[test]
    fn hat_mass_block() {
        let mesh = Mesh::unit_square(1);
        let l = assemble_local(&mesh, 0, &Constant(1.0, 1.0), BubbleVariant::Exponential, &mut RuleCache::default());
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let exact = if i == j { area / 6.0 } else { area / 12.0 };
                assert!((l.mass[(i, j)] - exact).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn coupling_entries() {
        let mesh = Mesh::unit_square(1);
        let eps = 0.3;
        let l = assemble_local(&mesh, 1, &Constant(1.0, eps), BubbleVariant::Exponential, &mut RuleCache::default());
        for k in 0..3 {
            let s = mesh.facet_sign(1, k);
            for i in 0..3 {
                let expect = if i == k { 0.0 } else { s * eps * l.geom.facet_len[k] / 2.0 };
                assert!((l.b[(i, k)] - expect).abs() < 1e-15);
            }
            assert!(l.b[(6, k)].abs() < 1e-16);
        }
    }

    #[test]
    fn zero_load_gives_zero() {
        let mesh = Mesh::unit_square(2);
        let sol = condense_and_solve(&mesh, &Constant(0.0, 1e-2), HybridOptions::default()).unwrap();
        assert!(sol.lambda.iter().all(|v| *v == 0.0));
        assert!(sol.u.iter().all(|u| u.amax() == 0.0));
    }

    #[test]
    fn matches_monolithic_on_eight_triangles() {
        let mesh = Mesh::unit_square(2);
        for eps in [1.0, 1e-4] {
            let p = ManufacturedProblem::new(eps);
            let sol = condense_and_solve(&mesh, &p, HybridOptions::default()).unwrap();
            let (u, lam) = solve_monolithic(&local_systems(&mesh, &sol.locals), mesh.n_facets()).unwrap();
            for (a, b) in sol.lambda.iter().zip(&lam) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
            for (a, b) in sol.u.iter().zip(&u) {
                assert!((a - b).amax() < 1e-9);
            }
            assert!(sol.constraint_violation(&mesh) < 1e-12);
        }
    }

    #[test]
    fn projections() {
        let mesh = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], None).unwrap();
        let locals = assemble(&mesh, &Constant(1.0, 1.0), BubbleVariant::Exponential);
        let mut u = DVector::zeros(SCALAR_DIM);
        u[1] = 1.0;
        let sol = PhfemSolution { eps: 1.0, lambda: vec![], u: vec![u], locals, skeleton_residual: 0.0 };
        assert!((sol.project_p0()[0] - 1.0 / 3.0).abs() < 1e-15);
        let p1 = sol.project_p1()[0];
        assert!((p1[0]).abs() < 1e-13 && (p1[1] - 1.0).abs() < 1e-13 && p1[2].abs() < 1e-13);
    }
}
