//! Small dense and banded linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a Gram matrix column is treated as dependent.
const RANK_TOL: f64 = 1e-11;

/// Solves `gram * x = rhs` for a symmetric positive definite Gram matrix.
///
/// Uses a Cholesky factorization; a failed or numerically singular factor is
/// reported with the indices of the dependent columns.
pub fn spd_solve(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    match gram.clone().cholesky() {
        Some(chol) => {
            let l = chol.l_dirty();
            let singular = (0..gram.nrows())
                .any(|j| l[(j, j)] * l[(j, j)] <= RANK_TOL * gram[(j, j)].abs().max(f64::MIN_POSITIVE));
            if singular {
                return Err(Error::RankDeficient { columns: dependent_columns(gram) });
            }
            Ok(chol.solve(rhs))
        }
        None => Err(Error::RankDeficient { columns: dependent_columns(gram) }),
    }
}

/// Columns of a PSD Gram matrix that are (numerically) linear combinations of
/// earlier columns, found by a Cholesky sweep that skips null pivots.
pub fn dependent_columns(gram: &DMatrix<f64>) -> Vec<usize> {
    let n = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut out = Vec::new();
    for j in 0..n {
        let mut d = gram[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= RANK_TOL * gram[(j, j)].abs().max(f64::MIN_POSITIVE) {
            out.push(j);
            continue;
        }
        let piv = d.sqrt();
        l[(j, j)] = piv;
        for i in (j + 1)..n {
            let mut s = gram[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / piv;
        }
    }
    out
}

/// Inverse and log-determinant of an SPD matrix via Cholesky.
pub fn spd_inverse_logdet(m: &DMatrix<f64>, what: &'static str) -> Result<(DMatrix<f64>, f64)> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite(what))?;
    let l = chol.l_dirty();
    let logdet = 2.0 * (0..m.nrows()).map(|j| l[(j, j)].ln()).sum::<f64>();
    if !logdet.is_finite() {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok((chol.inverse(), logdet))
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix with rank diagnostics.
///
/// Returns the pseudo-inverse and a flag set when singular values below
/// `rel_tol * max_sv` were truncated.
pub fn pinv_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, bool) {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cut = rel_tol * max;
    let n = m.nrows();
    let mut out = DMatrix::<f64>::zeros(n, n);
    let mut truncated = false;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() <= cut {
            truncated = true;
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.transpose()) / lam;
    }
    (out, truncated)
}

/// Half-vectorization: lower triangle stacked column by column.
pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for c in 0..n {
        for r in c..n {
            out.push(m[(r, c)]);
        }
    }
    out
}

/// Inverse of [`vech`]; rebuilds the symmetric `n x n` matrix.
pub fn unvech(v: &[f64], n: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), n * (n + 1) / 2, "vech length mismatch");
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut k = 0;
    for c in 0..n {
        for r in c..n {
            m[(r, c)] = v[k];
            m[(c, r)] = v[k];
            k += 1;
        }
    }
    m
}

/// `(row, col)` position (with `row >= col`) of every vech coordinate.
pub fn vech_positions(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for c in 0..n {
        for r in c..n {
            out.push((r, c));
        }
    }
    out
}

/// Averages the matrix with its transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric tridiagonal matrix stored by its diagonal and first off-diagonal.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// `L D L'` factor of a [`SymTridiagonal`]; `L` is unit lower bidiagonal.
#[derive(Debug, Clone)]
pub struct TridiagonalLdl {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl SymTridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i + 1, i)] = self.off[i];
                m[(i, i + 1)] = self.off[i];
            }
        }
        m
    }

    /// O(n) factorization; fails unless every pivot is strictly positive.
    pub fn ldl(&self) -> Option<TridiagonalLdl> {
        let n = self.dim();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        if !(d[0] > 0.0) {
            return None;
        }
        for i in 1..n {
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
            if !(d[i] > 0.0) {
                return None;
            }
        }
        Some(TridiagonalLdl { d, l })
    }
}

impl TridiagonalLdl {
    pub fn logdet(&self) -> f64 {
        self.d.iter().map(|v| v.ln()).sum()
    }

    /// Solves in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            b[i] -= self.l[i - 1] * b[i - 1];
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            b[i] -= self.l[i] * b[i + 1];
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.d.len();
        let mut out = DMatrix::<f64>::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vech_is_column_major_lower() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        assert_eq!(vech(&m), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(unvech(&vech(&m), 3), m);
    }

    #[test]
    fn dependent_column_detected() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 3.0, 1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 5.0, 6.0]);
        let g = x.transpose() * &x;
        assert_eq!(dependent_columns(&g), vec![2]);
        match spd_solve(&g, &DVector::from_element(3, 1.0)) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn tridiagonal_ldl_matches_dense() {
        let t = SymTridiagonal { diag: vec![1.3, 2.0, 2.0, 2.0], off: vec![-1.0; 3] };
        let f = t.ldl().unwrap();
        let dense = t.to_dense();
        let (inv, logdet) = spd_inverse_logdet(&dense, "test").unwrap();
        assert!((f.logdet() - logdet).abs() < 1e-13);
        assert!((f.inverse() - inv).abs().max() < 1e-12);
    }

    #[test]
    fn pinv_flags_truncation() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, truncated) = pinv_symmetric(&m, 1e-12);
        assert!(truncated);
        assert!((&m * &p * &m - &m).abs().max() < 1e-12);
    }
}
