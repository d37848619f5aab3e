//! Dense local factorizations and the sparse symmetric skeleton solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("local matrix of element {element:?} is not positive definite")]
    NotPositiveDefinite { element: Option<usize> },
    #[error("pivot {pivot:e} of element {element:?} below {threshold:e}")]
    SmallPivot { element: Option<usize>, pivot: f64, threshold: f64 },
    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("saddle-point system is singular")]
    Singular,
}

/// Cholesky factor of a symmetric positive definite matrix with symmetric
/// diagonal scaling, `A = S L L^T S`.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    scale: DVector<f64>,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>, element: Option<usize>) -> Result<SpdFactor, LinalgError> {
        let n = a.nrows();
        let mut scale = DVector::zeros(n);
        for i in 0..n {
            let d = a[(i, i)];
            if !(d > 0.0) {
                return Err(LinalgError::NotPositiveDefinite { element });
            }
            scale[i] = 1.0 / d.sqrt();
        }
        let scaled = DMatrix::from_fn(n, n, |i, j| scale[i] * a[(i, j)] * scale[j]);
        let chol = Cholesky::new(scaled).ok_or(LinalgError::NotPositiveDefinite { element })?;
        Ok(SpdFactor { chol, scale })
    }

    /// Smallest pivot of the scaled factorization relative to the scaled
    /// trace (which equals the dimension).
    pub fn min_relative_pivot(&self) -> f64 {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min) / n as f64
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.component_mul(&self.scale);
        self.chol.solve_mut(&mut x);
        x.component_mul(&self.scale)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * self.scale[i]);
        self.chol.solve_mut(&mut x);
        for j in 0..x.ncols() {
            for i in 0..x.nrows() {
                x[(i, j)] *= self.scale[i];
            }
        }
        x
    }
}

/// Symmetric matrix in compressed sparse row format (both triangles stored).
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> CsrMatrix {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).map(|k| self.vals[self.row_ptr[i] + k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                worst = worst.max((self.vals[k] - self.get(j, i)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.cols[k])] += self.vals[k];
            }
        }
        d
    }
}

/// Relative residual targeted by the iterative solver.
pub const CG_TOLERANCE: f64 = 1e-12;
/// Systems up to this size are factored densely.
pub const DENSE_LIMIT: usize = 600;

/// Solves `S x = b` for symmetric positive definite `S`.
pub fn solve_spd(s: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if s.n <= DENSE_LIMIT {
        let f = SpdFactor::new(&s.to_dense(), None)?;
        Ok(f.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
    } else {
        pcg(s, b, CG_TOLERANCE, 10 * s.n.max(10))
    }
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn pcg(s: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, LinalgError> {
    let n = s.n;
    let inv_diag: Vec<f64> = s
        .diagonal()
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut history = Vec::new();
    for it in 0..max_iter {
        s.mul_vec(&p, &mut q);
        let pq: f64 = p.iter().zip(&q).map(|(a, b)| a * b).sum();
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
        history.push(res);
        if res <= tol {
            // guard against drift of the recursive residual
            let mut ax = vec![0.0; n];
            s.mul_vec(&x, &mut ax);
            let true_res = ax.iter().zip(b).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt() / norm_b;
            if true_res <= 10.0 * tol {
                return Ok(x);
            }
            // restart from the true residual
            for i in 0..n {
                r[i] = b[i] - ax[i];
                z[i] = r[i] * inv_diag[i];
                p[i] = z[i];
            }
            rz = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            continue;
        } else if !res.is_finite() {
            return Err(LinalgError::NotConverged { iterations: it + 1, residual: res, history });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = history.last().copied().unwrap_or(f64::NAN);
    Err(LinalgError::NotConverged { iterations: max_iter, residual, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 1e-3));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_are_summed() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0), (0, 1, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn pcg_matches_dense() {
        let a = laplacian_1d(200);
        let b: Vec<f64> = (0..200).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let x = pcg(&a, &b, 1e-13, 10_000).unwrap();
        let f = SpdFactor::new(&a.to_dense(), None).unwrap();
        let y = f.solve(&DVector::from_column_slice(&b));
        for i in 0..200 {
            assert!((x[i] - y[i]).abs() < 1e-8 * y.amax());
        }
    }

    #[test]
    fn pcg_reports_history() {
        let a = laplacian_1d(300);
        let b = vec![1.0; 300];
        match pcg(&a, &b, 1e-14, 3) {
            Err(LinalgError::NotConverged { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            SpdFactor::new(&a, Some(4)),
            Err(LinalgError::NotPositiveDefinite { element: Some(4) })
        ));
    }

    #[test]
    fn scaled_factor_solves_badly_scaled_system() {
        let a = DMatrix::from_row_slice(3, 3, &[1e8, 1e2, 0.0, 1e2, 1.0, 1e-4, 0.0, 1e-4, 1e-7]);
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let b = &a * &x;
        let f = SpdFactor::new(&a, None).unwrap();
        let y = f.solve(&b);
        assert!((y - x).amax() < 1e-8);
    }
}
