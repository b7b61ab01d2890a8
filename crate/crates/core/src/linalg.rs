//! Small dense/banded linear algebra kit.
//!
//! Hand-rolled so the whole crate stays generic over the scalar type; the
//! problem sizes here are desk scale (a few thousand unknowns at most, dense
//! matrices of a couple hundred rows), where these textbook routines are
//! entirely adequate.

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> DenseMat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMat { rows: r, cols: c, data }
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![S::zero(); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = S::zero();
            for (a, b) in row.iter().zip(x.iter()) {
                acc += *a * *b;
            }
            y[i] = acc;
        }
        y
    }

    pub fn matmul(&self, other: &DenseMat<S>) -> DenseMat<S> {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMat<S> {
        let mut out = DenseMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&mut self, s: S) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &DenseMat<S>) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest |A_ij - A_ji|; zero for exactly symmetric matrices.
    pub fn asymmetry(&self) -> S {
        let mut m = S::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }
}

impl<S: Copy> std::ops::Index<(usize, usize)> for DenseMat<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S: Copy> std::ops::IndexMut<(usize, usize)> for DenseMat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition A = Q diag(w) Q^T of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen<S> {
    /// Eigenvalues, ascending.
    pub values: Vec<S>,
    /// Column k of `vectors` is the eigenvector for `values[k]`.
    pub vectors: DenseMat<S>,
}

/// Cyclic Jacobi rotation eigensolver for symmetric matrices.
///
/// Converges quadratically; the off-diagonal norm is driven below
/// `eps * frobenius(A)`. Fine up to a few hundred rows.
pub fn sym_eigen<S: Scalar>(a: &DenseMat<S>) -> Result<SymEigen<S>> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::invalid("sym_eigen: matrix must be square"));
    }
    let mut m = a.clone();
    let mut q = DenseMat::identity(n);
    let eps = S::epsilon() * cast::<S>(4.0);
    let fro = {
        let mut s = S::zero();
        for v in &m.data {
            s += *v * *v;
        }
        s.sqrt()
    };
    if fro == S::zero() {
        return Ok(SymEigen { values: vec![S::zero(); n], vectors: q });
    }
    let tol = eps * fro;
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if (off + off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = m[(p, r)];
                if apq.abs() <= tol * cast::<S>(1e-3) {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(r, r)];
                let theta = (aqq - app) / (cast::<S>(2.0) * apq);
                // stable tangent of the rotation angle
                let t = {
                    let sign = if theta >= S::zero() { S::one() } else { -S::one() };
                    sign / (theta.abs() + (theta * theta + S::one()).sqrt())
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, r)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(r, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkq = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkq;
                    q[(k, r)] = s * qkp + c * qkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<S> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("NaN eigenvalue"));
    let values: Vec<S> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = DenseMat::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, new)] = q[(k, old)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Solve A x = b by LU with partial pivoting. A is consumed as a copy.
pub fn lu_solve<S: Scalar>(a: &DenseMat<S>, b: &[S]) -> Result<Vec<S>> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(Error::invalid("lu_solve: shape mismatch"));
    }
    let mut m = a.clone();
    let mut x: Vec<S> = b.to_vec();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = m[(k, k)].abs();
        for i in (k + 1)..n {
            let v = m[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == S::zero() {
            return Err(Error::NumericalFailure {
                context: "lu_solve: singular matrix".into(),
                residual: f64::INFINITY,
            });
        }
        if p != k {
            for j in 0..n {
                let tmp = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = tmp;
            }
            piv.swap(k, p);
            x.swap(k, p);
        }
        let pivot = m[(k, k)];
        for i in (k + 1)..n {
            let f = m[(i, k)] / pivot;
            m[(i, k)] = f;
            for j in (k + 1)..n {
                let mkj = m[(k, j)];
                m[(i, j)] -= f * mkj;
            }
            x[i] = x[i] - f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= m[(i, j)] * x[j];
        }
        x[i] = acc / m[(i, i)];
    }
    Ok(x)
}

/// Least-squares solve min ||A x - b||_2 via normal equations with a tiny
/// Tikhonov floor. A may be tall; the unknown count stays small here.
pub fn lstsq<S: Scalar>(a: &DenseMat<S>, b: &[S]) -> Result<Vec<S>> {
    if a.rows != b.len() {
        return Err(Error::invalid("lstsq: shape mismatch"));
    }
    let at = a.transpose();
    let mut ata = at.matmul(a);
    let atb = at.matvec(b);
    let ridge = S::epsilon() * cast::<S>(64.0) * (ata.max_abs() + S::one());
    for i in 0..ata.rows {
        ata[(i, i)] += ridge;
    }
    lu_solve(&ata, &atb)
}

/// Thomas algorithm for tridiagonal systems.
///
/// `lower[i]` multiplies `x[i-1]` in row i (`lower[0]` unused), `diag[i]` is
/// the main diagonal, `upper[i]` multiplies `x[i+1]` (`upper[n-1]` unused).
pub fn tridiag_solve<S: Scalar>(
    lower: &[S],
    diag: &[S],
    upper: &[S],
    rhs: &[S],
) -> Result<Vec<S>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::invalid("tridiag_solve: shape mismatch"));
    }
    let mut c = vec![S::zero(); n];
    let mut d = vec![S::zero(); n];
    let mut denom = diag[0];
    if denom == S::zero() {
        return Err(Error::NumericalFailure {
            context: "tridiag_solve: zero pivot".into(),
            residual: f64::INFINITY,
        });
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == S::zero() {
            return Err(Error::NumericalFailure {
                context: "tridiag_solve: zero pivot".into(),
                residual: f64::INFINITY,
            });
        }
        if i + 1 < n {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let xi1 = x[i + 1];
        x[i] = x[i] - c[i] * xi1;
    }
    Ok(x)
}

/// Conjugate gradient on the normal equations A^T A x = A^T b, matrix-free.
///
/// `apply` computes A v, `apply_t` computes A^T v. Terminates when the
/// residual ||A x - b|| drops below `rel_tol * ||b||`.
pub fn solve_cgnr<S: Scalar>(
    apply: &dyn Fn(&[S]) -> Vec<S>,
    apply_t: &dyn Fn(&[S]) -> Vec<S>,
    b: &[S],
    x0: &[S],
    rel_tol: S,
    max_iter: usize,
) -> Result<Vec<S>> {
    let n = x0.len();
    let norm_b = dot(b, b).sqrt();
    if norm_b == S::zero() {
        return Ok(vec![S::zero(); n]);
    }
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<S> = b.iter().zip(ax.iter()).map(|(&bi, &ai)| bi - ai).collect();
    let mut z = apply_t(&r);
    let mut p = z.clone();
    let mut zz = dot(&z, &z);
    for _ in 0..max_iter {
        let res = dot(&r, &r).sqrt();
        if res <= rel_tol * norm_b {
            return Ok(x);
        }
        let ap = apply(&p);
        let denom = dot(&ap, &ap);
        if denom == S::zero() {
            break;
        }
        let alpha = zz / denom;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = apply_t(&r);
        let zz_new = dot(&z, &z);
        let beta = zz_new / zz;
        zz = zz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = dot(&r, &r).sqrt() / norm_b;
    if res <= rel_tol {
        Ok(x)
    } else {
        Err(Error::NumericalFailure {
            context: "solve_cgnr: no convergence".into(),
            residual: res.to_f64().unwrap_or(f64::NAN),
        })
    }
}

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc += *x * *y;
    }
    acc
}

#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * *xi;
    }
}

#[inline]
pub fn norm2<S: Scalar>(x: &[S]) -> S {
    dot(x, x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // A = diag(1,2,3) conjugated by a rotation; eigenvalues must survive.
        let a = DenseMat::from_rows(vec![
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ]);
        let e = sym_eigen(&a).unwrap();
        let expected = [2.0 - std::f64::consts::SQRT_2, 2.0, 2.0 + std::f64::consts::SQRT_2];
        for (v, want) in e.values.iter().zip(expected.iter()) {
            assert!((v - want).abs() < 1e-13, "{v} vs {want}");
        }
        // residual ||A q - w q||
        for k in 0..3 {
            let q: Vec<f64> = (0..3).map(|i| e.vectors[(i, k)]).collect();
            let aq = a.matvec(&q);
            for i in 0..3 {
                assert!((aq[i] - e.values[k] * q[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn lu_and_tridiag_agree() {
        let n = 12;
        let mut a = DenseMat::zeros(n, n);
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            diag[i] = 3.0 + i as f64 * 0.1;
            a[(i, i)] = diag[i];
            if i > 0 {
                lower[i] = -1.0 + 0.05 * i as f64;
                a[(i, i - 1)] = lower[i];
            }
            if i + 1 < n {
                upper[i] = -0.7;
                a[(i, i + 1)] = -0.7;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x1 = lu_solve(&a, &b).unwrap();
        let x2 = tridiag_solve(&lower, &diag, &upper, &b).unwrap();
        for (u, v) in x1.iter().zip(x2.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cgnr_solves_nonsymmetric() {
        let a = DenseMat::from_rows(vec![
            vec![4.0, 1.0, 0.0],
            vec![-0.5, 3.0, 0.2],
            vec![0.0, -0.3, 5.0],
        ]);
        let b = vec![1.0, 2.0, -1.0];
        let at = a.transpose();
        let x = solve_cgnr(
            &|v: &[f64]| a.matvec(v),
            &|v: &[f64]| at.matvec(v),
            &b,
            &[0.0; 3],
            1e-12,
            200,
        )
        .unwrap();
        let r = a.matvec(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lstsq_matches_exact_for_square() {
        let a = DenseMat::<f64>::from_rows(vec![vec![2.0, 1.0], vec![1.0, 3.0]]);
        let b = vec![5.0, 10.0];
        let x = lstsq(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9);
        assert!((x[1] - 3.0).abs() < 1e-9);
    }
}
