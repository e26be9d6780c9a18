//! Small dense linear algebra over [`Real`] scalars, plus a Hermitian
//! eigenvalue routine for the entropy kernels.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::dd::Real;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| {
                (0..self.rows)
                    .map(|i| self[(i, j)].to_f64().abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).to_f64().abs())
            .fold(0.0, f64::max)
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: T, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + s * b)
                .collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial (row) pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    /// max |u_ii| / min |u_ii|, a cheap lower bound on the condition number.
    pub pivot_ratio: f64,
}

impl<T: Real> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows;
        assert_eq!(n, a.cols, "LU needs a square matrix");
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold(
                        (k, T::zero()),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pmax == T::zero() || !pmax.is_finite() {
                return Err(Error::IllConditioned {
                    condition_estimate: f64::INFINITY,
                });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        let diag: Vec<f64> = (0..n).map(|i| lu[(i, i)].to_f64().abs()).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            lu,
            perm,
            pivot_ratio: dmax / dmin,
        })
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IllConditioned {
                condition_estimate: self.pivot_ratio,
            });
        }
        Ok(x)
    }

    pub fn solve_matrix(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Matrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col = self.solve(&b.column(j))?;
            for (i, v) in col.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Scratch space for [`hermitian_eigenvalues_with`], reusable across calls
/// of any size.
#[derive(Clone, Debug, Default)]
pub struct EigenWork {
    diag: Vec<f64>,
    off: Vec<f64>,
    u: Vec<Complex64>,
    p: Vec<Complex64>,
}

/// Eigenvalues (ascending) of a Hermitian matrix given in row-major order.
///
/// Householder reduction to a real symmetric tridiagonal matrix followed by
/// implicit QL iterations. Only the lower triangle of `a` is read; `a` is
/// overwritten.
pub fn hermitian_eigenvalues(a: &mut [Complex64], n: usize) -> Vec<f64> {
    hermitian_eigenvalues_with(a, n, &mut EigenWork::default()).to_vec()
}

/// As [`hermitian_eigenvalues`], without allocating once `work` has grown.
pub fn hermitian_eigenvalues_with<'w>(
    a: &mut [Complex64],
    n: usize,
    work: &'w mut EigenWork,
) -> &'w [f64] {
    assert_eq!(a.len(), n * n);
    let EigenWork { diag, off, u, p } = work;
    for v in [&mut *diag, &mut *off] {
        v.clear();
        v.resize(n, 0.0);
    }
    for v in [&mut *u, &mut *p] {
        v.clear();
        v.resize(n, Complex64::new(0.0, 0.0));
    }
    if n == 0 {
        return diag;
    }

    for k in 0..n.saturating_sub(2) {
        // Column below the diagonal: x = a[k+1.., k]
        let m = n - k - 1;
        let mut xnorm2 = 0.0;
        for i in 0..m {
            xnorm2 += a[(k + 1 + i) * n + k].norm_sqr();
        }
        let x0 = a[(k + 1) * n + k];
        let xnorm = xnorm2.sqrt();
        let tail = xnorm2 - x0.norm_sqr();
        if tail <= 1e-300 * xnorm2.max(1e-300) {
            diag[k] = a[k * n + k].re;
            off[k] = x0.norm();
            continue;
        }
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let alpha = -phase * xnorm;
        // u = x - alpha e1, tau = 2 / |u|^2
        for i in 0..m {
            u[i] = a[(k + 1 + i) * n + k];
        }
        u[0] -= alpha;
        let unorm2: f64 = u[..m].iter().map(|z| z.norm_sqr()).sum();
        let tau = 2.0 / unorm2;

        // p = tau * A22 u, using the lower triangle only
        for i in 0..m {
            p[i] = Complex64::new(0.0, 0.0);
        }
        for i in 0..m {
            let row = (k + 1 + i) * n + k + 1;
            let mut s = a[row + i] * u[i];
            for j in 0..i {
                let aij = a[row + j];
                s += aij * u[j];
                p[j] += aij.conj() * u[i];
            }
            p[i] += s;
        }
        for z in p[..m].iter_mut() {
            *z *= tau;
        }
        // q = p - (tau/2)(u^H p) u
        let uhp: Complex64 = u[..m].iter().zip(&p[..m]).map(|(a, b)| a.conj() * b).sum();
        let kfac = 0.5 * tau * uhp;
        for i in 0..m {
            p[i] -= kfac * u[i];
        }
        // A22 -= u q^H + q u^H (lower triangle)
        for i in 0..m {
            let row = (k + 1 + i) * n + k + 1;
            for j in 0..=i {
                a[row + j] -= u[i] * p[j].conj() + p[i] * u[j].conj();
            }
        }
        diag[k] = a[k * n + k].re;
        off[k] = alpha.norm();
    }
    if n >= 2 {
        diag[n - 2] = a[(n - 2) * n + n - 2].re;
        off[n - 2] = a[(n - 1) * n + n - 2].norm();
    }
    diag[n - 1] = a[(n - 1) * n + n - 1].re;
    off[n - 1] = 0.0;

    tridiagonal_ql(diag, off);
    diag.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    diag
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
/// `off[i]` couples rows `i` and `i + 1`; eigenvalues are left in `d`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    // Deflate against the matrix scale as well as the neighbouring diagonal:
    // a purely relative test stalls on clusters of near-zero eigenvalues,
    // which nearly pure reduced density matrices always have.
    let scale = d
        .iter()
        .zip(e.iter())
        .map(|(a, b)| a.abs() + b.abs())
        .fold(0.0, f64::max);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd.max(0.5 * scale) {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            // plain square roots: entries here are far from overflow and
            // libm's hypot dominates the cost for small matrices
            let mut r = (g * g + 1.0).sqrt();
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::DoubleDouble;
    use nalgebra::DMatrix;

    #[test]
    fn lu_solves_small_system() {
        let a = Matrix::from_fn(3, 3, |i, j| {
            [[2.0, 1.0, 1.0], [4.0, -6.0, 0.0], [-2.0, 7.0, 2.0]][i][j]
        });
        let lu = Lu::factor(&a).unwrap();
        let x = lu.solve(&[5.0, -2.0, 9.0]).unwrap();
        for (xi, ei) in x.iter().zip([1.0, 1.0, 2.0]) {
            assert!((xi - ei).abs() < 1e-14);
        }
    }

    #[test]
    fn lu_reports_exact_singularity() {
        let a = Matrix::from_fn(2, 2, |i, _| (i + 1) as f64);
        assert!(matches!(Lu::factor(&a), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn double_double_hilbert_solve() {
        // Hilbert(8) has condition ~1e10; double-double keeps ~20 digits.
        let n = 8;
        let h = Matrix::<DoubleDouble>::from_fn(n, n, |i, j| {
            DoubleDouble::from_f64(1.0) / DoubleDouble::from_f64((i + j + 1) as f64)
        });
        let ones = vec![DoubleDouble::from_f64(1.0); n];
        let b = h.matvec(&ones);
        let x = Lu::factor(&h).unwrap().solve(&b).unwrap();
        for v in x {
            assert!((v - DoubleDouble::from_f64(1.0)).abs().to_f64() < 1e-18);
        }
    }

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<Complex64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        &g + g.adjoint()
    }

    #[test]
    fn hermitian_eigenvalues_match_nalgebra() {
        for (n, seed) in [(1, 1), (2, 2), (3, 3), (6, 4), (11, 5), (26, 6)] {
            let h = random_hermitian(n, seed);
            let mut reference: Vec<f64> =
                h.clone().symmetric_eigenvalues().iter().cloned().collect();
            reference.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut flat: Vec<Complex64> = (0..n * n).map(|k| h[(k / n, k % n)]).collect();
            let ours = hermitian_eigenvalues(&mut flat, n);
            for (a, b) in ours.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-12, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hermitian_eigenvalues_of_rank_one_projector() {
        let v = [
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
            Complex64::new(0.0, 0.0),
        ];
        let mut a: Vec<Complex64> = (0..9).map(|k| v[k / 3] * v[k % 3].conj()).collect();
        let ev = hermitian_eigenvalues(&mut a, 3);
        assert!(ev[0].abs() < 1e-15 && ev[1].abs() < 1e-15);
        assert!((ev[2] - 1.0).abs() < 1e-15);
    }
}
