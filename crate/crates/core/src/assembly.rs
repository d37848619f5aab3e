//! Pieces shared by the local assembly routines.

use std::collections::HashMap;
use std::sync::Arc;

use crate::basis::{ElementGeometry, ElementRules, Layer};
use crate::quadrature::Rule;

/// Gauss points on a facet; traces are polynomials of degree at most 3,
/// so squared traces are integrated exactly.
pub const FACET_POINTS: usize = 6;

/// Element rules keyed by layer parameter; structured meshes have few
/// distinct element sizes.
#[derive(Default)]
pub struct RuleCache {
    map: HashMap<(u8, u64), Arc<ElementRules>>,
}

impl RuleCache {
    pub fn get(&mut self, layer: Layer) -> Arc<ElementRules> {
        let key = match layer {
            Layer::Standard => (0, 0),
            Layer::Exponential(k) => (1, k.to_bits()),
            Layer::Polynomial(k) => (2, k.to_bits()),
        };
        self.map
            .entry(key)
            .or_insert_with(|| Arc::new(ElementRules::new(layer)))
            .clone()
    }
}

/// Integrals of the load over one element.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadData {
    /// `∫_T f`.
    pub integral: f64,
    /// `∫_T f^2`.
    pub square: f64,
    /// `∫_T f lambda_j`.
    pub p1: [f64; 3],
}

impl LoadData {
    pub fn new(rule: &Rule, geom: &ElementGeometry, f: &dyn Fn([f64; 2]) -> f64) -> LoadData {
        let mut d = LoadData::default();
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let v = f(geom.physical(l));
            let wa = w * geom.area;
            d.integral += wa * v;
            d.square += wa * v * v;
            for j in 0..3 {
                d.p1[j] += wa * v * l[j];
            }
        }
        d
    }

    /// `||(1 - Π⁰) f||_T^2`.
    pub fn oscillation(&self, area: f64) -> f64 {
        (self.square - self.integral * self.integral / area).max(0.0)
    }
}

/// Coefficients in the barycentric basis of the L2 projection onto P1,
/// given the moments `∫ v lambda_j`.
pub fn p1_from_moments(m: [f64; 3], area: f64) -> [f64; 3] {
    let s = m[0] + m[1] + m[2];
    std::array::from_fn(|j| (12.0 * m[j] - 3.0 * s) / area)
}
