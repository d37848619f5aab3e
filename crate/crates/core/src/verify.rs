//! Self-checks against independent oracles, run by `hyfem verify`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{bubble_scaling, BubbleVariant, ElementGeometry, Layer, SCALAR_DIM, VECTOR_DIM};
use crate::condensation::solve_monolithic;
use crate::dhfem::{condense_and_solve_dual, local_systems_dual};
use crate::mesh::Mesh;
use crate::phfem::{condense_and_solve, local_systems, HybridOptions};
use crate::problem::{ManufacturedProblem, Problem};
use crate::quadrature::{Bary, GradedRule, Rule};

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Pass,
    Fail(String),
    Skipped(String),
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub status: Status,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.status {
            Status::Pass => write!(f, "{:<26} pass", self.name),
            Status::Fail(why) => write!(f, "{:<26} FAIL  {why}", self.name),
            Status::Skipped(why) => write!(f, "{:<26} skipped  {why}", self.name),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Only `eps = 1`, where every element uses standard bubbles.
    pub eps_one_only: bool,
    /// Negates the coupling block in the condensed solve (mutation check).
    pub flip_coupling: bool,
    pub seed: u64,
}

/// Tolerances of the suites.
pub const MONOMIAL_TOL: f64 = 1e-13;
pub const EXPONENTIAL_TOL: f64 = 1e-10;
pub const SCALING_BAND: f64 = 10.0;
pub const TRACE_TOL: f64 = 1e-12;
pub const MONOLITHIC_TOL: f64 = 1e-9;
pub const CONSTRAINT_TOL: f64 = 1e-9;

pub const KAPPAS: [f64; 4] = [1.0, 10.0, 100.0, 1e4];
pub const SCALING_RATIOS: [f64; 6] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

type Check = Result<(), String>;

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `∫_T λ0^a λ1^b λ2^c / |T| = 2 a! b! c! / (a + b + c + 2)!`.
pub fn monomial_moment(a: u32, b: u32, c: u32) -> f64 {
    2.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)
}

/// `∫_0^1 e^{-kappa s} (1 - s)^n ds` by the recursion
/// `I_n = (1 - n I_{n-1}) / kappa`.
pub fn exp_moment_facet(kappa: f64, n: u32) -> f64 {
    let mut i = -(-kappa).exp_m1() / kappa;
    for m in 1..=n {
        i = (1.0 - f64::from(m) * i) / kappa;
    }
    i
}

/// `∫_0^1 e^{-kappa r} r^n dr = n! / kappa^{n+1} (1 - e^{-kappa} Σ_{j<=n} kappa^j / j!)`.
pub fn exp_moment_vertex(kappa: f64, n: u32) -> f64 {
    let partial: f64 = (0..=n).map(|j| kappa.powi(j as i32) / factorial(j)).sum();
    factorial(n) / kappa.powi(n as i32 + 1) * (1.0 - (-kappa).exp() * partial)
}

fn monomial(l: &Bary, e: [u32; 3]) -> f64 {
    l[0].powi(e[0] as i32) * l[1].powi(e[1] as i32) * l[2].powi(e[2] as i32)
}

fn exponents(max_degree: u32) -> impl Iterator<Item = [u32; 3]> {
    (0..=max_degree).flat_map(move |a| (0..=max_degree - a).flat_map(move |b| (0..=max_degree - a - b).map(move |c| [a, b, c])))
}

fn check_rule(name: &str, rule: &Rule, max_degree: u32) -> Check {
    for e in exponents(max_degree) {
        let q = rule.integrate_bary(1.0, |l| monomial(l, e));
        let exact = monomial_moment(e[0], e[1], e[2]);
        if (q - exact).abs() > MONOMIAL_TOL * exact {
            return Err(format!("{name}: monomial {e:?} gives {q:e}, expected {exact:e}"));
        }
    }
    Ok(())
}

/// Polynomial exactness of the plain rule and of the graded rules on
/// polynomial integrands.
pub fn quadrature_suite() -> Check {
    check_rule("plain rule", &Rule::triangle(10), 10)?;
    for k in 0..3 {
        check_rule("facet-graded rule", &GradedRule::toward_facet(k, 1e4).rule, 8)?;
        check_rule("vertex-graded rule", &GradedRule::toward_vertex(k, 1e4).rule, 8)?;
    }
    Ok(())
}

/// Graded rules against closed forms of `e^{-kappa λ_k} λ_a^p λ_b^q` and
/// `e^{-kappa (λ_a + λ_b)} λ_a^p λ_b^q`.
pub fn exponential_suite() -> Check {
    for kappa in KAPPAS {
        for (p, q) in [(0, 0), (1, 0), (1, 1), (2, 1), (2, 2)] {
            let beta = factorial(p) * factorial(q) / factorial(p + q + 1);
            for k in 0..3 {
                let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                let weight = |l: &Bary| l[a].powi(p as i32) * l[b].powi(q as i32);

                let rule = GradedRule::toward_facet(k, kappa).rule;
                let got = rule.integrate_bary(1.0, |l| (-kappa * l[k]).exp() * weight(l));
                let exact = 2.0 * beta * exp_moment_facet(kappa, p + q + 1);
                if (got - exact).abs() > EXPONENTIAL_TOL * exact {
                    return Err(format!("facet layer kappa {kappa} ({p},{q}): {got:e} vs {exact:e}"));
                }

                let rule = GradedRule::toward_vertex(k, kappa).rule;
                let got = rule.integrate_bary(1.0, |l| (-kappa * (l[a] + l[b])).exp() * weight(l));
                let exact = 2.0 * beta * exp_moment_vertex(kappa, p + q + 1);
                if (got - exact).abs() > EXPONENTIAL_TOL * exact {
                    return Err(format!("vertex layer kappa {kappa} ({p},{q}): {got:e} vs {exact:e}"));
                }
            }
        }
    }
    Ok(())
}

fn shapes() -> [[[f64; 2]; 3]; 3] {
    [
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        [[0.0, 0.0], [1.0, 0.0], [0.5, 0.8]],
        [[0.0, 0.0], [2.0, 0.0], [0.3, 0.6]],
    ]
}

/// Spread `max / min` of the normalized bubble sizes over all `eps / h`
/// ratios, facets and shapes, as `(c_val spread, c_grad spread)`.
pub fn bubble_scaling_spread(variant: BubbleVariant) -> (f64, f64) {
    let (mut vmin, mut vmax, mut gmin, mut gmax) = (f64::MAX, 0.0f64, f64::MAX, 0.0f64);
    for pts in shapes() {
        for ratio in SCALING_RATIOS {
            let h = ElementGeometry::from_points(pts, [0, 1, 2], 1.0, variant).diameter;
            let eps = ratio * h;
            let geom = ElementGeometry::from_points(pts, [0, 1, 2], eps, variant);
            for (cv, cg) in bubble_scaling(&geom, eps) {
                vmin = vmin.min(cv);
                vmax = vmax.max(cv);
                gmin = gmin.min(cg);
                gmax = gmax.max(cg);
            }
        }
    }
    (vmax / vmin, gmax / gmin)
}

/// Largest deviation of a layer bubble's trace from the standard bubble on
/// its own facet and from zero on the others.
pub fn bubble_trace_deviation(variant: BubbleVariant) -> f64 {
    let mut worst = 0.0f64;
    for pts in shapes() {
        for ratio in SCALING_RATIOS {
            let h = ElementGeometry::from_points(pts, [0, 1, 2], 1.0, variant).diameter;
            let geom = ElementGeometry::from_points(pts, [0, 1, 2], ratio * h, variant);
            for k in 0..3 {
                for j in 0..3 {
                    for s in [0.0, 0.1, 0.25, 0.5, 0.7, 0.95, 1.0] {
                        let l = ElementGeometry::facet_point(j, s);
                        let standard = if j == k { l[(k + 1) % 3] * l[(k + 2) % 3] } else { 0.0 };
                        worst = worst.max((geom.face_bubble(k, &l).0 - standard).abs());
                    }
                }
            }
        }
    }
    worst
}

pub fn bubble_suite() -> Check {
    for variant in [BubbleVariant::Exponential, BubbleVariant::Polynomial] {
        let (sv, sg) = bubble_scaling_spread(variant);
        if sv > SCALING_BAND || sg > SCALING_BAND {
            return Err(format!("{variant}: constants spread by {sv:.3} (value) and {sg:.3} (gradient)"));
        }
        let dev = bubble_trace_deviation(variant);
        if dev > TRACE_TOL {
            return Err(format!("{variant}: trace deviates by {dev:e}"));
        }
    }
    Ok(())
}

/// Central differences of every scalar shape function, and the normal
/// traces of the vector shape functions, on random elements.
pub fn basis_suite(seed: u64, eps: &[f64]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        let pts: [[f64; 2]; 3] = std::array::from_fn(|i| {
            let base = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]][i];
            [base[0] + rng.gen_range(-0.2..0.2), base[1] + rng.gen_range(-0.2..0.2)]
        });
        for &e in eps {
            for variant in [BubbleVariant::Exponential, BubbleVariant::Polynomial] {
                let geom = ElementGeometry::from_points(pts, [0, 1, 2], e, variant);
                check_gradients(&geom, &mut rng)?;
                check_normal_traces(&geom)?;
            }
        }
    }
    Ok(())
}

fn check_gradients(geom: &ElementGeometry, rng: &mut ChaCha8Rng) -> Check {
    let scale = match geom.layer {
        Layer::Standard => 1.0,
        Layer::Exponential(k) | Layer::Polynomial(k) => k,
    };
    let step = 1e-6 / scale.max(1.0);
    let inv = inverse_map(geom);
    for _ in 0..5 {
        // points in the bulk of the element, away from the polynomial cutoff
        let (a, b) = (rng.gen_range(0.0..1.0f64), rng.gen_range(0.0..1.0f64));
        let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
        let l: Bary = [1.0 - a - b, a, b];
        if let Layer::Polynomial(k) = geom.layer {
            if l.iter().any(|x| (k * x - 1.0).abs() < 1e-3) {
                continue;
            }
        }
        let x = geom.physical(&l);
        let s = geom.scalar(&l);
        for dir in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[dir] += step;
            xm[dir] -= step;
            let (sp, sm) = (geom.scalar(&inv(xp)), geom.scalar(&inv(xm)));
            for i in 0..SCALAR_DIM {
                let fd = (sp.v[i] - sm.v[i]) / (2.0 * step);
                let tol = 1e-5 * (1.0 + s.g[i][dir].abs()) * scale.max(1.0);
                if (fd - s.g[i][dir]).abs() > tol {
                    return Err(format!("shape function {i} direction {dir}: {fd:e} vs {:e}", s.g[i][dir]));
                }
            }
        }
    }
    Ok(())
}

fn inverse_map(geom: &ElementGeometry) -> impl Fn([f64; 2]) -> Bary + '_ {
    move |x| {
        let p = geom.points;
        let g = geom.grad_bary;
        let l1 = g[1][0] * (x[0] - p[0][0]) + g[1][1] * (x[1] - p[0][1]);
        let l2 = g[2][0] * (x[0] - p[0][0]) + g[2][1] * (x[1] - p[0][1]);
        [1.0 - l1 - l2, l1, l2]
    }
}

fn check_normal_traces(geom: &ElementGeometry) -> Check {
    for k in 0..3 {
        for s in [0.1, 0.5, 0.8] {
            let v = geom.vector(&ElementGeometry::facet_point(k, s));
            let n = geom.normals[k];
            for i in 0..VECTOR_DIM {
                let flux = v.v[i][0] * n[0] + v.v[i][1] * n[1];
                let expect = match i {
                    0..=2 if i == k => 1.0 / geom.facet_len[k],
                    3..=5 if i - 3 == k => {
                        let l = ElementGeometry::facet_point(k, s);
                        l[(k + 1) % 3] * l[(k + 2) % 3]
                    }
                    _ => 0.0,
                };
                if (flux - expect).abs() > TRACE_TOL * (1.0 + expect.abs()) {
                    return Err(format!("vector function {i} on facet {k}: normal trace {flux:e}, expected {expect:e}"));
                }
            }
        }
    }
    Ok(())
}

/// Small meshes for the saddle-point comparisons: structured, the
/// manufactured initial mesh, and a randomly perturbed one.
pub fn small_meshes(seed: u64) -> Vec<Mesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Mesh::unit_square(4);
    let vertices = base
        .vertices
        .iter()
        .enumerate()
        .map(|(v, p)| {
            if base.is_boundary_vertex(v) {
                *p
            } else {
                [p[0] + rng.gen_range(-0.08..0.08), p[1] + rng.gen_range(-0.08..0.08)]
            }
        })
        .collect();
    let tris = base.triangles.iter().map(|t| t.vertices).collect();
    let perturbed = Mesh::new(vertices, tris, None).expect("small perturbation keeps orientation");
    vec![Mesh::unit_square(2), ManufacturedProblem::new(1.0).initial_mesh(), perturbed]
}

fn max_diff(a: &[f64], b: &[f64]) -> (f64, f64) {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    (diff, scale)
}

/// Condensed solves of both hybrid methods against the monolithic
/// saddle-point solve.
pub fn monolithic_suite(seed: u64, eps: &[f64], flip_coupling: bool) -> Check {
    for mesh in small_meshes(seed) {
        for &e in eps {
            let p = ManufacturedProblem::new(e);
            let opts = HybridOptions { flip_coupling, ..HybridOptions::default() };
            let tag = format!("{} elements, eps {e:e}", mesh.n_elements());

            let sol = condense_and_solve(&mesh, &p, opts).map_err(|err| format!("primal {tag}: {err}"))?;
            let (u, lam) = solve_monolithic(&local_systems(&mesh, &sol.locals), mesh.n_facets())
                .map_err(|err| format!("primal monolithic {tag}: {err}"))?;
            compare("primal", &tag, &sol.lambda, &lam, &sol.u, &u)?;

            let sol = condense_and_solve_dual(&mesh, &p, opts).map_err(|err| format!("dual {tag}: {err}"))?;
            let (s, w) = solve_monolithic(&local_systems_dual(&mesh, &sol.locals), mesh.n_interior_vertices())
                .map_err(|err| format!("dual monolithic {tag}: {err}"))?;
            compare("dual", &tag, &sol.w, &w, &sol.sigma, &s)?;
        }
    }
    Ok(())
}

fn compare(
    method: &str,
    tag: &str,
    skel: &[f64],
    skel_ref: &[f64],
    local: &[nalgebra::DVector<f64>],
    local_ref: &[nalgebra::DVector<f64>],
) -> Check {
    let (d, s) = max_diff(skel, skel_ref);
    if d > MONOLITHIC_TOL * s {
        return Err(format!("{method} {tag}: skeleton differs by {d:e}"));
    }
    let flat: Vec<f64> = local.iter().flat_map(|v| v.iter().copied()).collect();
    let flat_ref: Vec<f64> = local_ref.iter().flat_map(|v| v.iter().copied()).collect();
    let (d, s) = max_diff(&flat, &flat_ref);
    if d > MONOLITHIC_TOL * s {
        return Err(format!("{method} {tag}: element unknowns differ by {d:e}"));
    }
    Ok(())
}

/// Weak continuity of both methods on small and refined meshes.
pub fn constraint_suite(seed: u64, eps: &[f64]) -> Check {
    let mut meshes = small_meshes(seed);
    meshes.push(ManufacturedProblem::new(1.0).initial_mesh().refine_uniform(4));
    for mesh in &meshes {
        for &e in eps {
            let p = ManufacturedProblem::new(e);
            let opts = HybridOptions::default();
            let v = condense_and_solve(mesh, &p, opts).map_err(|err| err.to_string())?.constraint_violation(mesh);
            if v > CONSTRAINT_TOL {
                return Err(format!("primal facet means violate continuity by {v:e} (eps {e:e})"));
            }
            let v = condense_and_solve_dual(mesh, &p, opts)
                .map_err(|err| err.to_string())?
                .constraint_violation(mesh);
            if v > CONSTRAINT_TOL {
                return Err(format!("dual vertex pairings violate continuity by {v:e} (eps {e:e})"));
            }
        }
    }
    Ok(())
}

fn status(check: Check) -> Status {
    match check {
        Ok(()) => Status::Pass,
        Err(why) => Status::Fail(why),
    }
}

/// Runs every suite.
pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteResult> {
    let eps: &[f64] = if opts.eps_one_only { &[1.0] } else { &[1.0, 1e-2, 1e-4] };
    let layered = |name, check: &dyn Fn() -> Check| SuiteResult {
        name,
        status: if opts.eps_one_only {
            Status::Skipped("eps = 1 uses standard bubbles only".into())
        } else {
            status(check())
        },
    };
    vec![
        SuiteResult { name: "quadrature", status: status(quadrature_suite()) },
        layered("exponential-quadrature", &exponential_suite),
        layered("bubble-scaling", &bubble_suite),
        SuiteResult { name: "basis", status: status(basis_suite(opts.seed, eps)) },
        SuiteResult { name: "condensed-vs-monolithic", status: status(monolithic_suite(opts.seed, eps, opts.flip_coupling)) },
        SuiteResult { name: "constraints", status: status(constraint_suite(opts.seed, eps)) },
    ]
}
