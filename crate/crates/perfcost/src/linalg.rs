//! Dense matrix kernels for the small (d <= ~10) systems this crate solves:
//! Cholesky factorizations, LU solves, and a cyclic Jacobi symmetric
//! eigensolver. Everything is deterministic and allocation-light; no BLAS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = String;
    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        if rows.is_empty() {
            return Err("matrix needs at least one row".into());
        }
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err("matrix rows must be non-empty and of equal length".into());
        }
        Ok(Matrix::from_rows(&rows))
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn symmetrize(&self) -> Matrix {
        assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Strict lower-triangular Cholesky of a symmetric positive definite
    /// matrix; fails if any pivot drops below `floor^2`.
    pub fn cholesky(&self, floor: f64) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::Shape("cholesky requires a square matrix".into()));
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d < floor * floor {
                return Err(Error::LinAlg(format!(
                    "matrix is not positive definite (pivot {d:.3e} at column {j})"
                )));
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(l)
    }

    /// Cholesky for positive *semi*-definite matrices: pivots in
    /// [-tol, tol] are clipped to zero (the column is zeroed), pivots below
    /// -tol are an error. Supports degenerate covariances.
    pub fn cholesky_psd(&self, tol: f64) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::Shape("cholesky requires a square matrix".into()));
        }
        let n = self.rows;
        let scale = self.data.iter().fold(1e-300_f64, |m, x| m.max(x.abs()));
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d < -tol * scale.max(1.0) {
                return Err(Error::LinAlg(format!(
                    "matrix is not positive semi-definite (pivot {d:.3e} at column {j})"
                )));
            }
            if d <= tol * scale.max(1.0) {
                // Degenerate direction: leave the column at zero.
                continue;
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(l)
    }

    /// Solves `self * x = b` by LU with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let cols = self.solve_multi(&Matrix::from_rows(
            &b.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
        ))?;
        Ok((0..b.len()).map(|i| cols[(i, 0)]).collect())
    }

    /// Solves `self * X = B` for a matrix right-hand side.
    pub fn solve_multi(&self, b: &Matrix) -> Result<Matrix> {
        if !self.is_square() || self.rows != b.rows {
            return Err(Error::Shape("solve dimensions do not match".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.clone();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[(col, col)].abs();
            for r in (col + 1)..n {
                let v = a[(r, col)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return Err(Error::LinAlg("singular matrix in solve".into()));
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(col * n + j, piv * n + j);
                }
                for j in 0..x.cols {
                    x.data.swap(col * x.cols + j, piv * x.cols + j);
                }
            }
            let d = a[(col, col)];
            for r in (col + 1)..n {
                let f = a[(r, col)] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    let v = a[(col, j)];
                    a[(r, j)] -= f * v;
                }
                for j in 0..x.cols {
                    let v = x[(col, j)];
                    x[(r, j)] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            let d = a[(col, col)];
            for j in 0..x.cols {
                let mut s = x[(col, j)];
                for k in (col + 1)..n {
                    s -= a[(col, k)] * x[(k, j)];
                }
                x[(col, j)] = s / d;
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve_multi(&Matrix::identity(self.rows))
    }

    /// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
    /// Returns eigenvalues ascending with matching eigenvector columns.
    pub fn sym_eigen(&self) -> Result<(Vec<f64>, Matrix)> {
        if !self.is_square() {
            return Err(Error::Shape("sym_eigen requires a square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.symmetrize();
        let mut v = Matrix::identity(n);
        let scale = a.frobenius_norm().max(1e-300);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off.sqrt() <= 1e-14 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
        let eigvals: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vecs = Matrix::zeros(n, n);
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                vecs[(k, new)] = v[(k, old)];
            }
        }
        Ok((eigvals, vecs))
    }

    /// Nearest-in-spectrum PSD projection of the symmetric part: eigenvalues
    /// below `floor` are raised to `floor`.
    pub fn psd_clip(&self, floor: f64) -> Result<Matrix> {
        let (vals, vecs) = self.symmetrize().sym_eigen()?;
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for (k, &lam) in vals.iter().enumerate() {
            let l = lam.max(floor);
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += l * vecs[(i, k)] * vecs[(j, k)];
                }
            }
        }
        Ok(out.symmetrize())
    }

    /// Spectral norm: largest singular value, via the eigenvalues of AᵀA.
    pub fn op_norm(&self) -> f64 {
        let gram = self.transpose().matmul(self);
        let (vals, _) = gram.sym_eigen().expect("square gram");
        vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Condition number estimate from the singular values.
    pub fn cond(&self) -> f64 {
        let gram = self.transpose().matmul(self);
        let (vals, _) = gram.sym_eigen().expect("square gram");
        let max = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
        let min = vals.first().copied().unwrap_or(0.0).max(0.0).sqrt();
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Moore-Penrose pseudo-inverse via the Gram eigendecomposition;
    /// singular values below `tol * sigma_max` are treated as zero.
    pub fn pinv(&self, tol: f64) -> Result<Matrix> {
        let gram = self.transpose().matmul(self);
        let (vals, vecs) = gram.sym_eigen()?;
        let smax = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
        let n = self.cols;
        let mut out = Matrix::zeros(n, self.rows);
        if smax == 0.0 {
            return Ok(out);
        }
        for (k, &lam) in vals.iter().enumerate() {
            let s = lam.max(0.0).sqrt();
            if s <= tol * smax {
                continue;
            }
            // u_k = A v_k / s; pinv += v_k u_kᵀ / s
            let vk: Vec<f64> = (0..n).map(|i| vecs[(i, k)]).collect();
            let uk = self.matvec(&vk);
            for i in 0..n {
                for j in 0..self.rows {
                    out[(i, j)] += vk[i] * uk[j] / (s * s);
                }
            }
        }
        Ok(out)
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

/// Euclidean distance squared between two points.
pub fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
