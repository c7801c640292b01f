//! Small dense real linear algebra.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_FLOOR: f64 = 1e-13;
const MAX_EIGEN_DIM: usize = 8;
const SPECTRAL_SEPARATION: f64 = 1e-8;

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: bad.len(),
            });
        }
        Matrix::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn column(v: &[f64]) -> Matrix {
        Matrix::from_row_major(v.len(), 1, v.to_vec()).expect("non-empty column")
    }

    pub fn row(v: &[f64]) -> Matrix {
        Matrix::from_row_major(1, v.len(), v.to_vec()).expect("non-empty row")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row_slice(i).to_vec()).collect()
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

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row_slice(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row_slice(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Stacks `blocks` vertically; all must share the column count.
    pub fn vstack(blocks: &[Matrix]) -> Matrix {
        let cols = blocks[0].cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for b in blocks {
            assert_eq!(b.cols, cols, "vstack column mismatch");
            data.extend_from_slice(&b.data);
            rows += b.rows;
        }
        Matrix { rows, cols, data }
    }

    /// Concatenates `blocks` horizontally; all must share the row count.
    pub fn hstack(blocks: &[Matrix]) -> Matrix {
        let rows = blocks[0].rows;
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut m = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for b in blocks {
            assert_eq!(b.rows, rows, "hstack row mismatch");
            for i in 0..rows {
                for j in 0..b.cols {
                    m[(i, offset + j)] = b[(i, j)];
                }
            }
            offset += b.cols;
        }
        m
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
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
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Solves `m x = rhs` by LU factorization with partial pivoting.
pub fn lu_solve(m: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!(
            "lu_solve needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let mut a = m.data.clone();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let (piv, mag) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(mag > PIVOT_FLOOR) {
            return Err(Error::Singular { col });
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f == 0.0 {
                continue;
            }
            a[r * n + col] = 0.0;
            for j in col + 1..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i * n + j] * x[j];
        }
        x[i] = s / a[i * n + i];
    }
    Ok(x)
}

/// `rhs - m x` with a compensated dot product (twice working precision).
fn residual_dot2(m: &Matrix, x: &[f64], rhs: &[f64]) -> Vec<f64> {
    (0..m.rows)
        .map(|i| {
            let (mut s, mut c) = (rhs[i], 0.0);
            for (a, b) in m.row_slice(i).iter().zip(x) {
                let p = -a * b;
                let pe = (-a).mul_add(*b, -p);
                let t = s + p;
                let z = t - s;
                c += (s - (t - z)) + (p - z) + pe;
                s = t;
            }
            s + c
        })
        .collect()
}

/// [`lu_solve`] followed by `rounds` of iterative refinement with
/// compensated residuals.
pub fn lu_solve_refined(m: &Matrix, rhs: &[f64], rounds: usize) -> Result<Vec<f64>> {
    let mut x = lu_solve(m, rhs)?;
    for _ in 0..rounds {
        let r = residual_dot2(m, &x, rhs);
        let d = lu_solve(m, &r)?;
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi += di;
        }
    }
    Ok(x)
}

/// Eigenvalues sorted by descending magnitude (ties: descending real part,
/// then descending imaginary part).
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("eigenvalues need a square matrix".into()));
    }
    let n = m.rows;
    if n > MAX_EIGEN_DIM {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue routine supports dimension <= {MAX_EIGEN_DIM}, got {n}"
        )));
    }
    let mut eig = match n {
        1 => vec![Complex64::new(m[(0, 0)], 0.0)],
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let half_tr = 0.5 * (a + d);
            let det = a * d - b * c;
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                let r = disc.sqrt();
                // Avoid cancellation: the larger root directly, the other from det.
                let big = if half_tr >= 0.0 { half_tr + r } else { half_tr - r };
                let small = if big != 0.0 { det / big } else { half_tr - r };
                vec![Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
            } else {
                let im = (-disc).sqrt();
                vec![Complex64::new(half_tr, im), Complex64::new(half_tr, -im)]
            }
        }
        _ => {
            let dm = nalgebra::DMatrix::from_row_slice(n, n, &m.data);
            let schur = nalgebra::linalg::Schur::try_new(dm, f64::EPSILON, 10_000)
                .ok_or(Error::EigenNoConvergence)?;
            schur.complex_eigenvalues().iter().copied().collect()
        }
    };
    eig.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then(y.re.total_cmp(&x.re))
            .then(y.im.total_cmp(&x.im))
    });
    Ok(eig)
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.first().map_or(0.0, |z| z.norm()))
}

/// Numerical rank: pivots with magnitude above `tol * ||M||_inf` under
/// complete-pivoting Gaussian elimination.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    let scale = m.norm_inf();
    if scale == 0.0 {
        return 0;
    }
    let threshold = tol * scale;
    let (rows, cols) = (m.rows, m.cols);
    let mut a = m.data.clone();
    let mut r = 0;
    while r < rows.min(cols) {
        let mut best = (r, r, 0.0);
        for i in r..rows {
            for j in r..cols {
                let v = a[i * cols + j].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= threshold {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..cols {
            a.swap(r * cols + j, pi * cols + j);
        }
        for i in 0..rows {
            a.swap(i * cols + r, i * cols + pj);
        }
        let p = a[r * cols + r];
        for i in r + 1..rows {
            let f = a[i * cols + r] / p;
            for j in r..cols {
                a[i * cols + j] -= f * a[r * cols + j];
            }
        }
        r += 1;
    }
    r
}

/// Default rank tolerance relative to `||M||_inf`.
pub const RANK_TOL: f64 = 1e-10;

/// Solves `J F - A J = C` for `J` through the Kronecker-vectorized system
/// `(F^T ⊗ I - I ⊗ A) vec(J) = vec(C)` (column-major `vec`).
pub fn sylvester_solve(f: &Matrix, a: &Matrix, c: &Matrix) -> Result<Matrix> {
    if !f.is_square() || !a.is_square() {
        return Err(Error::InvalidArgument("sylvester_solve needs square F and A".into()));
    }
    let (n, m) = (f.rows, a.rows);
    if c.rows != m || c.cols != n {
        return Err(Error::InvalidArgument(format!(
            "C must be {m}x{n}, got {}x{}",
            c.rows, c.cols
        )));
    }
    let ef = eigenvalues(f)?;
    let ea = eigenvalues(a)?;
    for kf in &ef {
        for ka in &ea {
            if (kf - ka).norm() <= SPECTRAL_SEPARATION {
                return Err(Error::SpectraOverlap {
                    left: format!("{kf}"),
                    right: format!("{ka}"),
                });
            }
        }
    }
    // Unknown J is m x n; vec index of J[i][j] is j*m + i.
    let dim = m * n;
    let mut k = Matrix::zeros(dim, dim);
    for j in 0..n {
        for i in 0..m {
            let row = j * m + i;
            // (J F)[i][j] = sum_l J[i][l] F[l][j]
            for l in 0..n {
                k[(row, l * m + i)] += f[(l, j)];
            }
            // (A J)[i][j] = sum_l A[i][l] J[l][j]
            for l in 0..m {
                k[(row, j * m + l)] -= a[(i, l)];
            }
        }
    }
    let mut rhs = vec![0.0; dim];
    for j in 0..n {
        for i in 0..m {
            rhs[j * m + i] = c[(i, j)];
        }
    }
    let v = lu_solve_refined(&k, &rhs, 2)?;
    let mut jm = Matrix::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            jm[(i, j)] = v[j * m + i];
        }
    }
    Ok(jm)
}
