//! Dense row-major matrices and the spectral-norm estimator.

use serde::{Deserialize, Serialize};

/// A dense row-major `rows × cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `y = self · x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (yi, row) in y.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *yi = dot(row, x);
        }
    }

    /// `y = selfᵀ · x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        self.tr_matvec_into(x, &mut y);
        y
    }

    pub fn tr_matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (xi, row) in x.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if *xi == 0.0 {
                continue;
            }
            for (yj, wij) in y.iter_mut().zip(row) {
                *yj += xi * wij;
            }
        }
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, end - start);
        for i in 0..self.rows {
            for j in start..end {
                out[(i, j - start)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest singular value, estimated with `power_iters` rounds of power iteration.
    pub fn spectral_norm(&self, power_iters: usize) -> f64 {
        spectral_norm(self, power_iters)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Fixed, non-degenerate starting vector for power iteration.
fn start_vector(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877_666).sin())
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

/// Power iteration on `WᵀW` from a fixed start vector.
///
/// The returned estimate `‖W v_k‖` is non-decreasing in `power_iters` and
/// approaches the largest singular value from below. A zero matrix yields 0.
pub fn spectral_norm(w: &Matrix, power_iters: usize) -> f64 {
    let mut v = start_vector(w.cols());
    power_iterate(w, &mut v, power_iters.max(1), 0.0)
}

/// Power iteration run until the estimate stops moving (relative change below
/// `tol`) or `max_iters` is reached.
pub fn spectral_norm_converged(w: &Matrix, tol: f64, max_iters: usize) -> f64 {
    let mut v = start_vector(w.cols());
    power_iterate(w, &mut v, max_iters.max(1), tol)
}

/// Runs power iteration in place on the right singular vector estimate `v`.
///
/// `v` must be unit length on entry and is left as the refined estimate, which
/// lets callers warm-start successive calls on a slowly changing matrix.
pub(crate) fn power_iterate(w: &Matrix, v: &mut [f64], iters: usize, tol: f64) -> f64 {
    if w.rows() == 0 || w.cols() == 0 {
        return 0.0;
    }
    let mut u = vec![0.0; w.rows()];
    let mut sigma = 0.0;
    for _ in 0..iters {
        w.matvec_into(v, &mut u);
        let un = norm(&u);
        if un == 0.0 || !un.is_finite() {
            // v is in the null space; either W = 0 or the start vector is degenerate
            if w.as_slice().iter().all(|x| *x == 0.0) {
                return 0.0;
            }
            let fresh = start_vector(w.cols());
            v.copy_from_slice(&fresh);
            v[0] += 1.0;
            let nv = norm(v);
            v.iter_mut().for_each(|x| *x /= nv);
            continue;
        }
        let prev = sigma;
        sigma = un;
        u.iter_mut().for_each(|x| *x /= un);
        w.tr_matvec_into(&u, v);
        let vn = norm(v);
        if vn == 0.0 {
            return sigma;
        }
        v.iter_mut().for_each(|x| *x /= vn);
        if tol > 0.0 && (sigma - prev).abs() <= tol * sigma {
            break;
        }
    }
    // one more application gives the Rayleigh-consistent estimate for the final v
    w.matvec_into(v, &mut u);
    norm(&u).max(sigma)
}
