//! Companion-form matrices of the AR(p) recursion.
//!
//! With `F` the companion matrix of `delta`, the lag vectors of the model satisfy
//! `y_{i,-j} = A_j y_i^o + B_j (X_i beta + e_i)`, and the differenced analogue
//! `(0', Delta y_{i,-j}')' = D_j (initial differences', (Delta X_i beta + Delta e_i)')'`.
//! These are exact constructions used as oracles and for ground-truth recursions.

use nalgebra::DMatrix;

/// `F` with `delta'` in the first row and ones on the subdiagonal.
pub fn companion(delta: &[f64]) -> DMatrix<f64> {
    let p = delta.len();
    assert!(p >= 1, "lag order must be at least 1");
    let mut f = DMatrix::<f64>::zeros(p, p);
    for (s, d) in delta.iter().enumerate() {
        f[(0, s)] = *d;
    }
    for r in 1..p {
        f[(r, r - 1)] = 1.0;
    }
    f
}

/// `F^0, F^1, ..., F^max_power`.
pub fn companion_powers(delta: &[f64], max_power: usize) -> Vec<DMatrix<f64>> {
    let f = companion(delta);
    let mut out = Vec::with_capacity(max_power + 1);
    out.push(DMatrix::identity(delta.len(), delta.len()));
    for k in 1..=max_power {
        let next = &out[k - 1] * &f;
        out.push(next);
    }
    out
}

/// `p x p` reversal permutation `I*`.
pub fn reversal(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |r, c| if r + c == p - 1 { 1.0 } else { 0.0 })
}

/// All companion-form matrices for a given `delta` and panel length.
#[derive(Debug, Clone)]
pub struct CompanionMatrices {
    pub f: DMatrix<f64>,
    /// `F^0 ... F^T`.
    pub f_powers: Vec<DMatrix<f64>>,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
    pub i_star: DMatrix<f64>,
}

impl CompanionMatrices {
    pub fn new(delta: &[f64], n_periods: usize) -> Self {
        let p = delta.len();
        assert!(n_periods > p, "need T > p");
        let f_powers = companion_powers(delta, n_periods);
        let mut a = Vec::with_capacity(p);
        let mut b = Vec::with_capacity(p);
        let mut d = Vec::with_capacity(p);
        for j in 1..=p {
            let (aj, bj) = aj_bj_from_powers(&f_powers, p, n_periods, j);
            d.push(dj_from_parts(&aj, &bj, p, n_periods));
            a.push(aj);
            b.push(bj);
        }
        Self { f: companion(delta), f_powers, a, b, d, i_star: reversal(p) }
    }
}

fn aj_bj_from_powers(pw: &[DMatrix<f64>], p: usize, t: usize, j: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = DMatrix::<f64>::zeros(t, p);
    let mut b = DMatrix::<f64>::zeros(t, t);
    for row in 1..=t {
        if row <= j {
            // y_{row-j} is element j-row of y^o
            a[(row - 1, j - row)] = 1.0;
        } else {
            let lag = row - j;
            for s in 0..p {
                a[(row - 1, s)] = pw[lag][(0, s)];
            }
            for s in 1..=lag {
                b[(row - 1, s - 1)] = pw[lag - s][(0, 0)];
            }
        }
    }
    (a, b)
}

fn dj_from_parts(a: &DMatrix<f64>, b: &DMatrix<f64>, p: usize, t: usize) -> DMatrix<f64> {
    let dim = t + p - 1;
    let mut d = DMatrix::<f64>::zeros(dim, dim);
    let at = a.rows(0, t - 1) * reversal(p);
    d.view_mut((p, 0), (t - 1, p)).copy_from(&at);
    d.view_mut((p, p), (t - 1, t - 1)).copy_from(&b.view((0, 0), (t - 1, t - 1)));
    d
}

/// `(A_j, B_j)` for `1 <= j <= p`, `T > j`.
pub fn build_aj_bj(delta: &[f64], n_periods: usize, j: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = delta.len();
    assert!((1..=p).contains(&j) && n_periods > j, "need 1 <= j <= p and T > j");
    let pw = companion_powers(delta, n_periods);
    aj_bj_from_powers(&pw, p, n_periods, j)
}

/// `D_j = [[0, 0], [A~_j I*, B~_j]]`, of dimension `T + p - 1`.
pub fn build_dj(delta: &[f64], n_periods: usize, j: usize) -> DMatrix<f64> {
    let (a, b) = build_aj_bj(delta, n_periods, j);
    dj_from_parts(&a, &b, delta.len(), n_periods)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn companion_shapes() {
        assert_eq!(companion(&[0.5]), DMatrix::from_element(1, 1, 0.5));
        assert_eq!(companion(&[0.5, 0.2]), DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 1.0, 0.0]));
        let pw = companion_powers(&[0.5], 2);
        assert_eq!(pw[2][(0, 0)], 0.25);
    }

    #[test]
    fn ar1_two_periods() {
        // y_0 = y0, y_1 = 0.5 y0 + w_1: lags (y_0, y_1) = A y0 + B w
        let (a, b) = build_aj_bj(&[0.5], 2, 1);
        assert_eq!(a, DMatrix::from_row_slice(2, 1, &[1.0, 0.5]));
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn dj_ar1_three_periods() {
        let d = build_dj(&[0.5], 3, 1);
        assert_eq!(d, DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 1.0, 0.0]));
    }

    #[test]
    fn permutation_block_of_a() {
        let delta = [0.3, -0.2, 0.1];
        for j in 1..=3 {
            let (a, b) = build_aj_bj(&delta, 6, j);
            for r in 0..j {
                let row = a.row(r);
                assert_eq!(row.iter().filter(|v| **v == 1.0).count(), 1);
                assert_eq!(row.iter().filter(|v| **v == 0.0).count(), 2);
            }
            assert_eq!(b.trace(), 0.0);
            assert_eq!(build_dj(&delta, 6, j).trace(), 0.0);
        }
        assert_eq!(reversal(3), DMatrix::from_row_slice(3, 3, &[0., 0., 1., 0., 1., 0., 1., 0., 0.]));
    }
}
