//! Static condensation of hybrid saddle-point systems
//!
//! ```text
//! [ A  C ] [x]   [g]
//! [ C' 0 ] [y] = [0]
//! ```
//!
//! with block-diagonal `A` (one SPD block per element) and skeleton unknowns
//! `y`. Each element eliminates its own unknowns, `x_T = A_T^{-1}(g_T - C_T y)`,
//! leaving the SPD skeleton system `sum C_T' A_T^{-1} C_T y = sum C_T' A_T^{-1} g_T`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{solve_spd, CsrMatrix, LinalgError, SpdFactor};

/// One element's blocks. Columns of `c` whose `dofs` entry is `None` are
/// dropped (skeleton unknowns fixed to zero).
#[derive(Clone, Debug)]
pub struct LocalSystem {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub g: DVector<f64>,
    pub dofs: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct Condensed {
    pub factor: SpdFactor,
    /// `A^{-1} g`.
    pub particular: DVector<f64>,
    /// `A^{-1} C`.
    pub responses: DMatrix<f64>,
}

pub fn condense(local: &LocalSystem, element: usize) -> Result<Condensed, LinalgError> {
    let factor = SpdFactor::new(&local.a, Some(element))?;
    let particular = factor.solve(&local.g);
    let responses = factor.solve_matrix(&local.c);
    Ok(Condensed { factor, particular, responses })
}

/// Skeleton matrix and right-hand side; entries are summed element by
/// element in order.
pub fn skeleton(locals: &[LocalSystem], condensed: &[Condensed], n: usize) -> (CsrMatrix, Vec<f64>) {
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for (l, c) in locals.iter().zip(condensed) {
        let s = l.c.transpose() * &c.responses;
        let r = l.c.transpose() * &c.particular;
        for (i, di) in l.dofs.iter().enumerate() {
            let Some(gi) = *di else { continue };
            rhs[gi] += r[i];
            for (j, dj) in l.dofs.iter().enumerate() {
                if let Some(gj) = *dj {
                    triplets.push((gi, gj, s[(i, j)]));
                }
            }
        }
    }
    (CsrMatrix::from_triplets(n, triplets), rhs)
}

/// Local coefficients for given skeleton values.
pub fn reconstruct(local: &LocalSystem, cond: &Condensed, y: &[f64]) -> DVector<f64> {
    let mut x = cond.particular.clone();
    for (j, d) in local.dofs.iter().enumerate() {
        if let Some(g) = *d {
            x -= cond.responses.column(j) * y[g];
        }
    }
    x
}

#[derive(Clone, Debug)]
pub struct HybridSolution {
    pub local: Vec<DVector<f64>>,
    pub skeleton: Vec<f64>,
    pub condensed: Vec<Condensed>,
    /// `||rhs - S y|| / ||rhs||` of the skeleton solve.
    pub residual: f64,
}

/// Condensed solve. With `flip_coupling` the coupling blocks change sign
/// (mutation hook for the verification suites).
pub fn solve_condensed(locals: &[LocalSystem], n: usize, flip_coupling: bool) -> Result<HybridSolution, LinalgError> {
    let flipped: Vec<LocalSystem>;
    let locals = if flip_coupling {
        flipped = locals
            .iter()
            .map(|l| LocalSystem { c: -&l.c, ..l.clone() })
            .collect();
        &flipped[..]
    } else {
        locals
    };
    let condensed = locals
        .iter()
        .enumerate()
        .map(|(t, l)| condense(l, t))
        .collect::<Result<Vec<_>, _>>()?;
    let (s, rhs) = skeleton(locals, &condensed, n);
    let y = if n == 0 { Vec::new() } else { solve_spd(&s, &rhs)? };
    let mut sy = vec![0.0; n];
    s.mul_vec(&y, &mut sy);
    let norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let res = sy.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let residual = if norm > 0.0 { res / norm } else { res };
    let local = locals
        .iter()
        .zip(&condensed)
        .map(|(l, c)| reconstruct(l, c, &y))
        .collect();
    Ok(HybridSolution { local, skeleton: y, condensed, residual })
}

/// Assembles the full saddle-point matrix densely and solves it with LU.
pub fn solve_monolithic(locals: &[LocalSystem], n: usize) -> Result<(Vec<DVector<f64>>, Vec<f64>), LinalgError> {
    let mut offsets = Vec::with_capacity(locals.len());
    let mut m = 0;
    for l in locals {
        offsets.push(m);
        m += l.a.nrows();
    }
    let dim = m + n;
    let mut k = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    for (l, &o) in locals.iter().zip(&offsets) {
        let nl = l.a.nrows();
        k.view_mut((o, o), (nl, nl)).copy_from(&l.a);
        b.rows_mut(o, nl).copy_from(&l.g);
        for (j, d) in l.dofs.iter().enumerate() {
            if let Some(g) = *d {
                for i in 0..nl {
                    k[(o + i, m + g)] += l.c[(i, j)];
                    k[(m + g, o + i)] += l.c[(i, j)];
                }
            }
        }
    }
    let sol = k.lu().solve(&b).ok_or(LinalgError::Singular)?;
    let local = locals
        .iter()
        .zip(&offsets)
        .map(|(l, &o)| sol.rows(o, l.a.nrows()).into_owned())
        .collect();
    Ok((local, sol.rows(m, n).iter().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vec<LocalSystem> {
        // two 2x2 elements sharing one skeleton unknown; the second has a
        // dropped column
        vec![
            LocalSystem {
                a: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
                c: DMatrix::from_row_slice(2, 1, &[1.0, -0.5]),
                g: DVector::from_vec(vec![1.0, 2.0]),
                dofs: vec![Some(0)],
            },
            LocalSystem {
                a: DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]),
                c: DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 0.25, 1.0]),
                g: DVector::from_vec(vec![0.0, -1.0]),
                dofs: vec![Some(0), None],
            },
        ]
    }

    #[test]
    fn condensed_matches_monolithic() {
        let locals = toy();
        let h = solve_condensed(&locals, 1, false).unwrap();
        let (x, y) = solve_monolithic(&locals, 1).unwrap();
        assert!((h.skeleton[0] - y[0]).abs() < 1e-14);
        for (a, b) in h.local.iter().zip(&x) {
            assert!((a - b).amax() < 1e-14);
        }
        // constraint C' x = 0
        let cx = locals[0].c.column(0).dot(&h.local[0]) + locals[1].c.column(0).dot(&h.local[1]);
        assert!(cx.abs() < 1e-14);
    }

    #[test]
    fn flipped_coupling_changes_multiplier() {
        let locals = toy();
        let h = solve_condensed(&locals, 1, true).unwrap();
        let (x, y) = solve_monolithic(&locals, 1).unwrap();
        assert!((h.skeleton[0] + y[0]).abs() < 1e-14);
        assert!((&h.local[0] - &x[0]).amax() < 1e-14);
    }

    #[test]
    fn empty_skeleton() {
        let mut locals = toy();
        locals.truncate(1);
        locals[0].dofs = vec![None];
        let h = solve_condensed(&locals, 0, false).unwrap();
        let x = locals[0].a.clone().lu().solve(&locals[0].g).unwrap();
        assert!((&h.local[0] - x).amax() < 1e-14);
    }
}
