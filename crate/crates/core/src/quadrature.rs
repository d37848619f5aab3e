//! Quadrature on triangles and facets.
//!
//! Triangle rules are stored in barycentric coordinates with weights given
//! as fractions of the element area, so one rule serves every element with
//! the same layer parameter. Rules for exponentially layered integrands are
//! collapsed tensor rules whose layer coordinate is split geometrically
//! towards the layer.

use std::sync::OnceLock;

use crate::mesh::Point;

pub type Bary = [f64; 3];

/// Gauss points per graded cell in the layer direction.
pub const LAYER_POINTS: usize = 10;
/// Gauss points per direction parallel to a layer.
pub const ALONG_POINTS: usize = 5;
/// Cells whose layer coordinate starts beyond this many decay lengths are
/// merged into a single cell.
const MERGE_BEYOND: f64 = 256.0;

const MAX_GAUSS: usize = 40;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    assert!((1..=MAX_GAUSS).contains(&n), "gauss order {n} unsupported");
    &TABLE.get_or_init(|| (1..=MAX_GAUSS).map(compute_gauss).collect())[n - 1]
}

fn compute_gauss(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// One-dimensional rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl LineRule {
    pub fn gauss(n: usize) -> LineRule {
        let (x, w) = gauss_legendre(n);
        LineRule { x: x.clone(), w: w.clone() }
    }

    /// Composite Gauss rule on the given breakpoints.
    pub fn composite(breaks: &[f64], n: usize) -> LineRule {
        let (gx, gw) = gauss_legendre(n);
        let mut x = Vec::with_capacity(n * breaks.len());
        let mut w = Vec::with_capacity(n * breaks.len());
        for c in breaks.windows(2) {
            let len = c[1] - c[0];
            for (xi, wi) in gx.iter().zip(gw) {
                x.push(c[0] + len * xi);
                w.push(len * wi);
            }
        }
        LineRule { x, w }
    }

    /// Composite rule for integrands like `exp(-rate * x) p(x)`.
    pub fn graded(rate: f64, n: usize) -> LineRule {
        LineRule::composite(&graded_breaks(rate), n)
    }

    /// Graded towards `x = 1` instead of `x = 0`.
    pub fn reflect(mut self) -> LineRule {
        for x in &mut self.x {
            *x = 1.0 - *x;
        }
        self
    }

    /// Rule graded at each end that has a rate.
    pub fn graded_ends(rate0: Option<f64>, rate1: Option<f64>, n: usize) -> LineRule {
        match (rate0, rate1) {
            (None, None) => LineRule::gauss(n),
            (Some(r), None) => LineRule::graded(r, n),
            (None, Some(r)) => LineRule::graded(r, n).reflect(),
            (Some(r0), Some(r1)) => {
                let left = LineRule::graded(0.5 * r0, n);
                let right = LineRule::graded(0.5 * r1, n).reflect();
                let mut x: Vec<f64> = left.x.iter().map(|x| 0.5 * x).collect();
                x.extend(right.x.iter().map(|x| 0.5 + 0.5 * x));
                let w = left.w.iter().chain(&right.w).map(|w| 0.5 * w).collect();
                LineRule { x, w }
            }
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Breakpoints `0, 2^-L, ..., 1/2, 1` with `L = ceil(log2 max(rate, 2)) + 2`;
/// cells starting beyond `MERGE_BEYOND / rate` are merged.
pub fn graded_breaks(rate: f64) -> Vec<f64> {
    let levels = rate.max(2.0).log2().ceil() as i32 + 2;
    let mut breaks = vec![0.0];
    for k in (1..=levels).rev() {
        let b = 2f64.powi(-k);
        if rate * b <= MERGE_BEYOND {
            breaks.push(b);
        }
    }
    breaks.push(1.0);
    breaks
}

/// Triangle rule in barycentric coordinates; weights sum to one.
#[derive(Clone, Debug, Default)]
pub struct Rule {
    pub bary: Vec<Bary>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Collapsed Gauss rule exact for polynomials of total degree `degree`.
    pub fn triangle(degree: usize) -> Rule {
        // the collapse adds a factor (1 - d)
        let n = (degree + 3) / 2;
        let line = LineRule::gauss(n);
        collapsed([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], &line, &line, 1.0)
    }

    pub fn extend(&mut self, other: Rule) {
        self.bary.extend(other.bary);
        self.weights.extend(other.weights);
    }

    /// `area * sum w f(x)` on a physical triangle.
    pub fn integrate(&self, pts: &[Point; 3], area: f64, f: impl Fn(Point) -> f64) -> f64 {
        area * self
            .bary
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| w * f(to_physical(pts, l)))
            .sum::<f64>()
    }

    /// `area * sum w f(lambda)`, integrand given in barycentric coordinates.
    pub fn integrate_bary(&self, area: f64, f: impl Fn(&Bary) -> f64) -> f64 {
        area * self.bary.iter().zip(&self.weights).map(|(l, w)| w * f(l)).sum::<f64>()
    }
}

pub fn to_physical(pts: &[Point; 3], l: &Bary) -> Point {
    [
        l[0] * pts[0][0] + l[1] * pts[1][0] + l[2] * pts[2][0],
        l[0] * pts[0][1] + l[1] * pts[1][1] + l[2] * pts[2][1],
    ]
}

fn lerp3(a: &Bary, b: &Bary, t: f64) -> Bary {
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Area of a sub-triangle given in barycentric coordinates, as a fraction
/// of the parent's area.
pub fn area_fraction(a: &Bary, b: &Bary, c: &Bary) -> f64 {
    ((b[1] - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (b[2] - a[2])).abs()
}

/// Collapsed rule on the sub-triangle `(apex, a, b)`: the point at
/// `(d, t)` is `(1 - d)((1 - t) a + t b) + d apex`, so `d = 0` is the base
/// `ab` and `d = 1` the apex. `scale` multiplies every weight.
pub fn collapsed(apex: Bary, a: Bary, b: Bary, d_rule: &LineRule, t_rule: &LineRule, scale: f64) -> Rule {
    let frac = area_fraction(&apex, &a, &b) * scale;
    let mut rule = Rule {
        bary: Vec::with_capacity(d_rule.x.len() * t_rule.x.len()),
        weights: Vec::with_capacity(d_rule.x.len() * t_rule.x.len()),
    };
    for (d, wd) in d_rule.x.iter().zip(&d_rule.w) {
        for (t, wt) in t_rule.x.iter().zip(&t_rule.w) {
            let base = lerp3(&a, &b, *t);
            rule.bary.push(lerp3(&base, &apex, *d));
            rule.weights.push(2.0 * frac * (1.0 - d) * wd * wt);
        }
    }
    rule
}

fn unit(i: usize) -> Bary {
    let mut e = [0.0; 3];
    e[i] = 1.0;
    e
}

/// Rule for integrands decaying like `exp(-rate * lambda_k)` away from
/// local facet `k`, split into strips parallel to the facet.
#[derive(Clone, Debug)]
pub struct GradedRule {
    pub rule: Rule,
    /// Strip boundaries in the collapsed coordinate running from the base
    /// (`0`) to the apex (`1`).
    pub breaks: Vec<f64>,
}

impl GradedRule {
    pub fn toward_facet(k: usize, rate: f64) -> GradedRule {
        let breaks = graded_breaks(rate);
        let d_rule = LineRule::composite(&breaks, LAYER_POINTS);
        let t_rule = LineRule::gauss(ALONG_POINTS);
        let rule = collapsed(unit(k), unit((k + 1) % 3), unit((k + 2) % 3), &d_rule, &t_rule, 1.0);
        GradedRule { rule, breaks }
    }

    /// Rule for integrands decaying like `exp(-rate * (1 - lambda_v))`.
    pub fn toward_vertex(v: usize, rate: f64) -> GradedRule {
        let r_breaks = graded_breaks(rate);
        let r_rule = LineRule::composite(&r_breaks, LAYER_POINTS);
        let t_rule = LineRule::gauss(ALONG_POINTS);
        // built in the distance coordinate r directly so that points close to
        // the vertex keep full relative precision in lambda_a + lambda_b = r
        let (a, b) = ((v + 1) % 3, (v + 2) % 3);
        let mut rule = Rule::default();
        for (r, wr) in r_rule.x.iter().zip(&r_rule.w) {
            for (t, wt) in t_rule.x.iter().zip(&t_rule.w) {
                let mut l = [0.0; 3];
                l[v] = 1.0 - r;
                l[a] = r * (1.0 - t);
                l[b] = r * t;
                rule.bary.push(l);
                rule.weights.push(2.0 * r * wr * wt);
            }
        }
        let breaks = r_breaks.iter().rev().map(|r| 1.0 - r).collect();
        GradedRule { rule, breaks }
    }

    /// Areas of the sub-cells on an element of area `area`.
    pub fn cell_areas(&self, area: f64) -> Vec<f64> {
        self.breaks
            .windows(2)
            .map(|c| area * ((1.0 - c[0]).powi(2) - (1.0 - c[1]).powi(2)))
            .collect()
    }
}

/// Exact polynomial rule on `{lambda_j <= bound for (j, bound)} ∩ T`.
pub fn clipped(constraints: &[(usize, f64)], degree: usize) -> Rule {
    let mut poly: Vec<Bary> = vec![unit(0), unit(1), unit(2)];
    for &(j, bound) in constraints {
        let mut next = Vec::with_capacity(poly.len() + 1);
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let (fp, fq) = (p[j] - bound, q[j] - bound);
            if fp <= 0.0 {
                next.push(p);
            }
            if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
                next.push(lerp3(&p, &q, fp / (fp - fq)));
            }
        }
        poly = next;
        if poly.len() < 3 {
            return Rule::default();
        }
    }
    let reference = Rule::triangle(degree);
    let mut rule = Rule::default();
    for i in 1..poly.len() - 1 {
        let (a, b, c) = (poly[0], poly[i], poly[i + 1]);
        let frac = area_fraction(&a, &b, &c);
        if frac <= 0.0 {
            continue;
        }
        for (l, w) in reference.bary.iter().zip(&reference.weights) {
            rule.bary.push([
                l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
                l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
                l[0] * a[2] + l[1] * b[2] + l[2] * c[2],
            ]);
            rule.weights.push(frac * w);
        }
    }
    rule
}

/// `∫_T exp(-kappa lambda_k) g` on an element of area `area`.
pub fn integrate_exponential(area: f64, k: usize, kappa: f64, g: impl Fn(&Bary) -> f64) -> f64 {
    GradedRule::toward_facet(k, kappa)
        .rule
        .integrate_bary(area, |l| (-kappa * l[k]).exp() * g(l))
}

/// Gauss rule on the segment `ab`.
pub fn integrate_facet(a: Point, b: Point, n: usize, f: impl Fn(Point) -> f64) -> f64 {
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let (x, w) = gauss_legendre(n);
    len * x
        .iter()
        .zip(w)
        .map(|(s, w)| w * f([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]))
        .sum::<f64>()
}
