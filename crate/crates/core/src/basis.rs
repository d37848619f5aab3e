//! Local shape functions: piecewise linears, face bubbles (standard or
//! boundary-layer adapted), the element bubble, and the matching H(div)
//! space built from Raviart-Thomas functions and bubbles.

use std::fmt;
use std::str::FromStr;

use crate::mesh::{Mesh, Point};
use crate::quadrature::{clipped, Bary, GradedRule, Rule};

pub const SCALAR_DIM: usize = 7;
pub const VECTOR_DIM: usize = 8;

/// Which layer-adapted face bubble replaces the standard one on elements
/// larger than the perturbation parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BubbleVariant {
    Exponential,
    Polynomial,
}

impl FromStr for BubbleVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exponential" | "exp" => Ok(BubbleVariant::Exponential),
            "polynomial" | "poly" => Ok(BubbleVariant::Polynomial),
            _ => Err(format!("unknown bubble variant `{s}` (expected exponential|polynomial)")),
        }
    }
}

impl fmt::Display for BubbleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BubbleVariant::Exponential => "exponential",
            BubbleVariant::Polynomial => "polynomial",
        })
    }
}

/// Face bubble in use on one element; `kappa = h_T / eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Layer {
    Standard,
    Exponential(f64),
    Polynomial(f64),
}

impl Layer {
    /// Layer variant iff `eps < h`.
    pub fn select(h: f64, eps: f64, variant: BubbleVariant) -> Layer {
        if eps < h {
            let kappa = h / eps;
            match variant {
                BubbleVariant::Exponential => Layer::Exponential(kappa),
                BubbleVariant::Polynomial => Layer::Polynomial(kappa),
            }
        } else {
            Layer::Standard
        }
    }

    pub fn kappa(&self) -> Option<f64> {
        match *self {
            Layer::Standard => None,
            Layer::Exponential(k) | Layer::Polynomial(k) => Some(k),
        }
    }
}

/// Facet carried by scalar shape function `i`, if it is a face bubble.
pub fn scalar_facet(i: usize) -> Option<usize> {
    (3..6).contains(&i).then(|| i - 3)
}

/// Facet carried by vector shape function `i`, if it is a face bubble.
pub fn vector_facet(i: usize) -> Option<usize> {
    (3..6).contains(&i).then(|| i - 3)
}

#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub points: [Point; 3],
    pub area: f64,
    pub diameter: f64,
    pub grad_bary: [[f64; 2]; 3],
    /// Outward unit normal of local facet `k`.
    pub normals: [[f64; 2]; 3],
    pub facet_len: [f64; 3],
    pub layer: Layer,
    /// Local index of the vertex with the smallest global id; the two edge
    /// bubbles of the vector space live on the edges through it.
    pub tangent_vertex: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ScalarValues {
    pub v: [f64; SCALAR_DIM],
    pub g: [[f64; 2]; SCALAR_DIM],
}

#[derive(Clone, Copy, Debug)]
pub struct VectorValues {
    pub v: [[f64; 2]; VECTOR_DIM],
    pub div: [f64; VECTOR_DIM],
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl ElementGeometry {
    pub fn new(mesh: &Mesh, t: usize, eps: f64, variant: BubbleVariant) -> ElementGeometry {
        let tri = &mesh.triangles[t];
        let points = mesh.element_points(t);
        ElementGeometry::from_points(points, tri.vertices, eps, variant)
    }

    pub fn from_points(points: [Point; 3], ids: [usize; 3], eps: f64, variant: BubbleVariant) -> ElementGeometry {
        let area2 = (points[1][0] - points[0][0]) * (points[2][1] - points[0][1])
            - (points[2][0] - points[0][0]) * (points[1][1] - points[0][1]);
        let mut grad_bary = [[0.0; 2]; 3];
        let mut normals = [[0.0; 2]; 3];
        let mut facet_len = [0.0; 3];
        for i in 0..3 {
            let a = points[(i + 1) % 3];
            let b = points[(i + 2) % 3];
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = d[0].hypot(d[1]);
            grad_bary[i] = [-d[1] / area2, d[0] / area2];
            normals[i] = [d[1] / len, -d[0] / len];
            facet_len[i] = len;
        }
        let diameter = facet_len.iter().cloned().fold(0.0, f64::max);
        let tangent_vertex = (0..3).min_by_key(|&i| ids[i]).unwrap();
        ElementGeometry {
            points,
            area: 0.5 * area2.abs(),
            diameter,
            grad_bary,
            normals,
            facet_len,
            layer: Layer::select(diameter, eps, variant),
            tangent_vertex,
        }
    }

    pub fn physical(&self, l: &Bary) -> Point {
        crate::quadrature::to_physical(&self.points, l)
    }

    /// Face bubble of local facet `k` and its gradient.
    pub fn face_bubble(&self, k: usize, l: &Bary) -> (f64, [f64; 2]) {
        let (a, b) = ((k + 1) % 3, (k + 2) % 3);
        let (ga, gb, gz) = (self.grad_bary[a], self.grad_bary[b], self.grad_bary[k]);
        let eta = l[a] * l[b];
        let geta = [l[b] * ga[0] + l[a] * gb[0], l[b] * ga[1] + l[a] * gb[1]];
        match self.layer {
            Layer::Standard => (eta, geta),
            Layer::Exponential(kappa) => {
                let e = (-kappa * l[k]).exp();
                (
                    e * eta,
                    [e * (geta[0] - kappa * eta * gz[0]), e * (geta[1] - kappa * eta * gz[1])],
                )
            }
            Layer::Polynomial(kappa) => {
                let s = 1.0 - kappa * l[k];
                if s > 0.0 {
                    (
                        eta * s,
                        [s * geta[0] - kappa * eta * gz[0], s * geta[1] - kappa * eta * gz[1]],
                    )
                } else {
                    (0.0, [0.0; 2])
                }
            }
        }
    }

    /// `[lambda_0, lambda_1, lambda_2, b_0, b_1, b_2, eta_T]`.
    pub fn scalar(&self, l: &Bary) -> ScalarValues {
        let mut v = [0.0; SCALAR_DIM];
        let mut g = [[0.0; 2]; SCALAR_DIM];
        for i in 0..3 {
            v[i] = l[i];
            g[i] = self.grad_bary[i];
            let (bv, bg) = self.face_bubble(i, l);
            v[3 + i] = bv;
            g[3 + i] = bg;
        }
        let gb = &self.grad_bary;
        v[6] = l[0] * l[1] * l[2];
        for c in 0..2 {
            g[6][c] = l[1] * l[2] * gb[0][c] + l[0] * l[2] * gb[1][c] + l[0] * l[1] * gb[2][c];
        }
        ScalarValues { v, g }
    }

    /// Raviart-Thomas functions, normal face bubbles, and the two
    /// tangential edge bubbles through `tangent_vertex`.
    pub fn vector(&self, l: &Bary) -> VectorValues {
        let mut v = [[0.0; 2]; VECTOR_DIM];
        let mut div = [0.0; VECTOR_DIM];
        let x = self.physical(l);
        let s = 1.0 / (2.0 * self.area);
        for k in 0..3 {
            let p = self.points[k];
            v[k] = [s * (x[0] - p[0]), s * (x[1] - p[1])];
            div[k] = 1.0 / self.area;
            let (bv, bg) = self.face_bubble(k, l);
            let n = self.normals[k];
            v[3 + k] = [bv * n[0], bv * n[1]];
            div[3 + k] = dot(bg, n);
        }
        let z = self.tangent_vertex;
        for (j, a) in [(z + 1) % 3, (z + 2) % 3].into_iter().enumerate() {
            let (pz, pa) = (self.points[z], self.points[a]);
            let len = (pa[0] - pz[0]).hypot(pa[1] - pz[1]);
            let t = [(pa[0] - pz[0]) / len, (pa[1] - pz[1]) / len];
            let eta = l[z] * l[a];
            let (gz, ga) = (self.grad_bary[z], self.grad_bary[a]);
            let geta = [l[a] * gz[0] + l[z] * ga[0], l[a] * gz[1] + l[z] * ga[1]];
            v[6 + j] = [eta * t[0], eta * t[1]];
            div[6 + j] = dot(geta, t);
        }
        VectorValues { v, div }
    }

    /// Barycentric coordinates of the point at parameter `s` along local
    /// facet `k`, running from local vertex `k+1` to `k+2`.
    pub fn facet_point(k: usize, s: f64) -> Bary {
        let mut l = [0.0; 3];
        l[(k + 1) % 3] = 1.0 - s;
        l[(k + 2) % 3] = s;
        l
    }
}

/// Quadrature rules matched to the face bubbles of one element. With layer
/// bubbles, products are integrated on the rule of the facets they carry:
/// none (plain), one facet, or two facets (graded at their shared vertex).
#[derive(Clone, Debug)]
pub enum ElementRules {
    Uniform(Rule),
    Layered {
        plain: Rule,
        facet: Box<[Rule; 3]>,
        pair: Box<[Rule; 3]>,
    },
}

/// Degree of the plain triangle rule.
pub const PLAIN_DEGREE: usize = 10;

impl ElementRules {
    pub fn new(layer: Layer) -> ElementRules {
        let plain = Rule::triangle(PLAIN_DEGREE);
        match layer {
            Layer::Standard => ElementRules::Uniform(plain),
            Layer::Exponential(kappa) => ElementRules::Layered {
                plain,
                facet: Box::new(std::array::from_fn(|k| GradedRule::toward_facet(k, kappa).rule)),
                pair: Box::new(std::array::from_fn(|v| GradedRule::toward_vertex(v, kappa).rule)),
            },
            Layer::Polynomial(kappa) => ElementRules::Layered {
                plain,
                facet: Box::new(std::array::from_fn(|k| clipped(&[(k, 1.0 / kappa)], PLAIN_DEGREE))),
                pair: Box::new(std::array::from_fn(|v| {
                    clipped(&[((v + 1) % 3, 1.0 / kappa), ((v + 2) % 3, 1.0 / kappa)], PLAIN_DEGREE)
                })),
            },
        }
    }

    pub fn plain(&self) -> &Rule {
        match self {
            ElementRules::Uniform(r) => r,
            ElementRules::Layered { plain, .. } => plain,
        }
    }

    /// Rule for a product of functions carrying facets `a` and `b`.
    pub fn for_pair(&self, a: Option<usize>, b: Option<usize>) -> &Rule {
        match self {
            ElementRules::Uniform(r) => r,
            ElementRules::Layered { plain, facet, pair } => match (a, b) {
                (None, None) => plain,
                (Some(f), None) | (None, Some(f)) => &facet[f],
                (Some(f), Some(g)) if f == g => &facet[f],
                (Some(f), Some(g)) => &pair[3 - f - g],
            },
        }
    }

    pub fn is_layered(&self) -> bool {
        matches!(self, ElementRules::Layered { .. })
    }

    /// Every distinct rule with the facet pair it serves.
    pub fn classes(&self) -> Vec<(Option<usize>, Option<usize>)> {
        match self {
            ElementRules::Uniform(_) => vec![(None, None)],
            ElementRules::Layered { .. } => {
                let mut c = vec![(None, None)];
                for f in 0..3 {
                    c.push((Some(f), None));
                }
                for v in 0..3 {
                    c.push((Some((v + 1) % 3), Some((v + 2) % 3)));
                }
                c
            }
        }
    }
}

/// Class index in `ElementRules::classes` order for a pair of carried facets.
pub fn class_index(a: Option<usize>, b: Option<usize>) -> usize {
    match (a, b) {
        (None, None) => 0,
        (Some(f), None) | (None, Some(f)) => 1 + f,
        (Some(f), Some(g)) if f == g => 1 + f,
        (Some(f), Some(g)) => 4 + (3 - f - g),
    }
}

/// Normalized sizes of the face bubble of every facet:
/// `c_val = ||b_F|| / (|T|^{1/2} (eps/h)^{1/2})` and
/// `c_grad = ||grad b_F|| h / (|T|^{1/2} (h/eps)^{1/2})`.
/// With the standard bubble the ratio `eps/h` is replaced by one.
pub fn bubble_scaling(geom: &ElementGeometry, eps: f64) -> [(f64, f64); 3] {
    let rules = ElementRules::new(geom.layer);
    let ratio = if geom.layer == Layer::Standard { 1.0 } else { eps / geom.diameter };
    std::array::from_fn(|k| {
        let rule = rules.for_pair(Some(k), None);
        let (mut val, mut grad) = (0.0, 0.0);
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let (v, g) = geom.face_bubble(k, l);
            val += w * v * v;
            grad += w * dot(g, g);
        }
        let (val, grad) = ((val * geom.area).sqrt(), (grad * geom.area).sqrt());
        let sqrt_area = geom.area.sqrt();
        (
            val / (sqrt_area * ratio.sqrt()),
            grad * geom.diameter / (sqrt_area / ratio.sqrt()),
        )
    })
}
