//! Model problems `-eps^2 Δu + u = f` on squares with `u = 0` on the boundary,
//! and the quadrature used for their data.

use crate::mesh::{Mesh, Point};
use crate::quadrature::{collapsed, LineRule, Rule, LAYER_POINTS};

pub trait Problem: Sync {
    fn name(&self) -> &'static str;
    fn eps(&self) -> f64;
    fn load(&self, x: Point) -> f64;
    /// Exact solution and its gradient, when known.
    fn solution(&self, _x: Point) -> Option<(f64, [f64; 2])> {
        None
    }
    /// Decay length of boundary layers in the data and the exact solution;
    /// `None` if the data is piecewise smooth on the mesh.
    fn layer_width(&self) -> Option<f64> {
        None
    }
    fn initial_mesh(&self) -> Mesh;
    fn convex_domain(&self) -> bool {
        true
    }
}

/// `u(x, y) = v(x) v(y)` on the unit square with
/// `v(t) = 1 - (1 - e^{-1/s})(e^{-(1-t)/s} + e^{-t/s}) / (1 - e^{-2/s})`,
/// `s = sqrt(2) eps`, and `f = (v(x) + v(y)) / 2`.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedProblem {
    pub eps: f64,
}

impl ManufacturedProblem {
    pub fn new(eps: f64) -> Self {
        ManufacturedProblem { eps }
    }

    fn scale(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.eps
    }

    /// `v(t)` and `v'(t)`.
    pub fn profile(&self, t: f64) -> (f64, f64) {
        let s = self.scale();
        let c = -(-1.0 / s).exp_m1() / -(-2.0 / s).exp_m1();
        let (e1, e0) = ((-(1.0 - t) / s).exp(), (-t / s).exp());
        (1.0 - c * (e1 + e0), -c * (e1 - e0) / s)
    }

    /// `u`, `∇u`, and `f` at `x`.
    pub fn eval(&self, x: Point) -> (f64, [f64; 2], f64) {
        let (vx, dx) = self.profile(x[0]);
        let (vy, dy) = self.profile(x[1]);
        (vx * vy, [dx * vy, vx * dy], 0.5 * (vx + vy))
    }
}

impl Problem for ManufacturedProblem {
    fn name(&self) -> &'static str {
        "manufactured"
    }

    fn eps(&self) -> f64 {
        self.eps
    }

    fn load(&self, x: Point) -> f64 {
        0.5 * (self.profile(x[0]).0 + self.profile(x[1]).0)
    }

    fn solution(&self, x: Point) -> Option<(f64, [f64; 2])> {
        let (u, g, _) = self.eval(x);
        Some((u, g))
    }

    fn layer_width(&self) -> Option<f64> {
        Some(self.scale())
    }

    /// Two-by-two squares after one bisection sweep (16 elements), so that
    /// two sweeps per level pass through 64 and 1024 elements.
    fn initial_mesh(&self) -> Mesh {
        Mesh::unit_square(2).refine_uniform(1)
    }
}

/// `f = 1` on `(-1/2, 1/2)^2` and `-1` elsewhere in `(-1, 1)^2`.
#[derive(Clone, Copy, Debug)]
pub struct BoxLoadProblem {
    pub eps: f64,
}

impl BoxLoadProblem {
    pub fn new(eps: f64) -> Self {
        BoxLoadProblem { eps }
    }
}

impl Problem for BoxLoadProblem {
    fn name(&self) -> &'static str {
        "boxload"
    }

    fn eps(&self) -> f64 {
        self.eps
    }

    fn load(&self, x: Point) -> f64 {
        if x[0].abs() < 0.5 && x[1].abs() < 0.5 {
            1.0
        } else {
            -1.0
        }
    }

    /// Four-by-four squares, aligned with the jump of `f`.
    fn initial_mesh(&self) -> Mesh {
        Mesh::structured_square([-1.0, -1.0], [1.0, 1.0], 4).expect("box is not degenerate")
    }
}

/// Degree of the data rule on elements away from layers.
pub const DATA_DEGREE: usize = 10;

/// Rule for integrating data on element `t`. Elements touching the
/// boundary are split at the barycenter. A sub-triangle is graded towards its
/// base when the base lies on the boundary or has a boundary endpoint, and
/// along the base towards endpoints where a layer crosses it: domain corners
/// on a boundary base, any boundary vertex on an interior one.
pub fn data_rule(mesh: &Mesh, t: usize, width: Option<f64>) -> Rule {
    data_rule_with(mesh, t, width, LAYER_POINTS, DATA_DEGREE)
}

/// `data_rule` with a given number of Gauss points per graded cell and
/// polynomial degree elsewhere.
pub fn data_rule_with(mesh: &Mesh, t: usize, width: Option<f64>, layer_points: usize, degree: usize) -> Rule {
    let tri = &mesh.triangles[t];
    let on_boundary: [bool; 3] = std::array::from_fn(|k| mesh.is_boundary_vertex(tri.vertices[k]));
    let width = match width {
        Some(w) if on_boundary.iter().any(|b| *b) => w,
        _ => return Rule::triangle(degree),
    };
    let center = [1.0 / 3.0; 3];
    let gauss = LineRule::gauss((degree + 3) / 2);
    let mut rule = Rule::default();
    for k in 0..3 {
        let (a, b) = ((k + 1) % 3, (k + 2) % 3);
        let mut ea = [0.0; 3];
        ea[a] = 1.0;
        let mut eb = [0.0; 3];
        eb[b] = 1.0;
        if !on_boundary[a] && !on_boundary[b] {
            rule.extend(collapsed(center, ea, eb, &gauss, &gauss, 1.0));
            continue;
        }
        let facet = &mesh.facets[tri.facets[k]];
        let height = 2.0 * tri.area / facet.length / 3.0;
        let d_rule = LineRule::graded(height / width, layer_points);
        let crosses = |v: usize| {
            let graded = if facet.is_boundary() { mesh.is_corner_vertex(tri.vertices[v]) } else { on_boundary[v] };
            graded.then_some(facet.length / width)
        };
        let t_rule = LineRule::graded_ends(crosses(a), crosses(b), layer_points);
        rule.extend(collapsed(center, ea, eb, &d_rule, &t_rule, 1.0));
    }
    rule
}
