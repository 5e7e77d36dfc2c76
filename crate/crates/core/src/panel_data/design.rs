use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PanelDataset;

/// Per-individual response vectors and design matrices of a linear system
/// `y_i = W_i b + u_i` with a common row dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionStack {
    pub responses: Vec<DVector<f64>>,
    pub designs: Vec<DMatrix<f64>>,
}

impl RegressionStack {
    pub fn n_individuals(&self) -> usize {
        self.responses.len()
    }

    /// Equations per individual.
    pub fn n_rows(&self) -> usize {
        self.responses[0].len()
    }

    pub fn n_coef(&self) -> usize {
        self.designs[0].ncols()
    }

    pub fn residual(&self, i: usize, coef: &DVector<f64>) -> DVector<f64> {
        &self.responses[i] - &self.designs[i] * coef
    }

    pub fn residuals(&self, coef: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.n_individuals()).map(|i| self.residual(i, coef)).collect()
    }
}

/// Levels design `y_i = W_i gamma + u_i` with `W_i = (Y_i, X_i, iota, iota z_i')`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDesign {
    pub stack: RegressionStack,
    pub lag_order: usize,
    pub n_regressors: usize,
    /// `dim(z_i) = K*T + p`.
    pub z_dim: usize,
}

impl AugmentedDesign {
    pub fn n_periods(&self) -> usize {
        self.stack.n_rows()
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let (p, k, t) = (self.lag_order, self.n_regressors, self.n_periods());
        let mut names: Vec<String> = (1..=p).map(|j| format!("delta{j}")).collect();
        names.extend((1..=k).map(|c| format!("beta{c}")));
        names.push("mu".into());
        for s in 1..=t {
            names.extend((1..=k).map(|c| format!("theta_x{s}_{c}")));
        }
        names.extend((0..p).map(|j| format!("theta_y{}", -(j as isize))));
        names
    }
}

/// Which regressor vector the initial-difference projections use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionBasis {
    /// All of `x_{i1}, ..., x_{iT}`.
    FullX,
    /// The distinct elements of `Delta X_i`: `Delta x_{i2}, ..., Delta x_{iT}`.
    DiffX,
}

/// Differenced system `y~_i = W~_i eta + u~_i`: `p` projection rows for the
/// initial differences followed by `T - 1` first-differenced equations.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencedSystem {
    pub stack: RegressionStack,
    pub basis: ProjectionBasis,
    pub lag_order: usize,
    pub n_regressors: usize,
    /// Width of the regressor vector in each projection (constant excluded).
    pub basis_dim: usize,
}

impl DifferencedSystem {
    /// `T + p - 1`.
    pub fn system_dim(&self) -> usize {
        self.stack.n_rows()
    }

    /// First column of the projection block for initial difference `r` (0-based).
    pub fn projection_offset(&self, r: usize) -> usize {
        self.lag_order + self.n_regressors + r * (1 + self.basis_dim)
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let (p, k) = (self.lag_order, self.n_regressors);
        let mut names: Vec<String> = (1..=p).map(|j| format!("delta{j}")).collect();
        names.extend((1..=k).map(|c| format!("beta{c}")));
        for r in 1..=p {
            names.push(format!("mu{r}"));
            names.extend((1..=self.basis_dim).map(|b| format!("theta{r}_{b}")));
        }
        names
    }
}

/// Builds the augmented levels design.
///
/// `z_i` lists `x_{i1}, ..., x_{iT}` (period-major, regressor-minor) and then
/// `y_{i0}, y_{i,-1}, ..., y_{i,-p+1}`.
pub fn build_augmented(ds: &PanelDataset) -> AugmentedDesign {
    let (n, t, p, k) = (ds.n_individuals(), ds.n_periods(), ds.lag_order(), ds.n_regressors());
    let z_dim = k * t + p;
    let ncol = p + k + 1 + z_dim;
    let mut responses = Vec::with_capacity(n);
    let mut designs = Vec::with_capacity(n);
    for i in 0..n {
        let y = DVector::from_fn(t, |r, _| ds.y(i, r as isize + 1));
        let mut z = Vec::with_capacity(z_dim);
        for s in 1..=t {
            for c in 0..k {
                z.push(ds.x(i, s, c));
            }
        }
        z.extend(ds.initial_values(i));
        let mut w = DMatrix::<f64>::zeros(t, ncol);
        for r in 0..t {
            let period = r as isize + 1;
            for j in 1..=p {
                w[(r, j - 1)] = ds.y(i, period - j as isize);
            }
            for c in 0..k {
                w[(r, p + c)] = ds.x(i, r + 1, c);
            }
            w[(r, p + k)] = 1.0;
            for (m, zv) in z.iter().enumerate() {
                w[(r, p + k + 1 + m)] = *zv;
            }
        }
        responses.push(y);
        designs.push(w);
    }
    AugmentedDesign { stack: RegressionStack { responses, designs }, lag_order: p, n_regressors: k, z_dim }
}

/// Builds the differenced system with the chosen projection basis.
pub fn build_differenced(ds: &PanelDataset, basis: ProjectionBasis) -> DifferencedSystem {
    let (n, t, p, k) = (ds.n_individuals(), ds.n_periods(), ds.lag_order(), ds.n_regressors());
    let basis_dim = match basis {
        ProjectionBasis::FullX => k * t,
        ProjectionBasis::DiffX => k * (t - 1),
    };
    let dim = t + p - 1;
    let ncol = p + k + p * (1 + basis_dim);
    let dy = |i: usize, s: isize| ds.y(i, s) - ds.y(i, s - 1);
    let mut responses = Vec::with_capacity(n);
    let mut designs = Vec::with_capacity(n);
    for i in 0..n {
        let regressors: Vec<f64> = match basis {
            ProjectionBasis::FullX => (1..=t).flat_map(|s| (0..k).map(move |c| (s, c))).map(|(s, c)| ds.x(i, s, c)).collect(),
            ProjectionBasis::DiffX => (2..=t)
                .flat_map(|s| (0..k).map(move |c| (s, c)))
                .map(|(s, c)| ds.x(i, s, c) - ds.x(i, s - 1, c))
                .collect(),
        };
        let mut y = DVector::<f64>::zeros(dim);
        let mut w = DMatrix::<f64>::zeros(dim, ncol);
        // projection rows: Delta y_{i,-p+2}, ..., Delta y_{i1}
        for r in 0..p {
            let s = r as isize - p as isize + 2;
            y[r] = dy(i, s);
            let off = p + k + r * (1 + basis_dim);
            w[(r, off)] = 1.0;
            for (b, v) in regressors.iter().enumerate() {
                w[(r, off + 1 + b)] = *v;
            }
        }
        // differenced equations t = 2..=T
        for s in 2..=t {
            let row = p + s - 2;
            y[row] = dy(i, s as isize);
            for j in 1..=p {
                w[(row, j - 1)] = dy(i, s as isize - j as isize);
            }
            for c in 0..k {
                w[(row, p + c)] = ds.x(i, s, c) - ds.x(i, s - 1, c);
            }
        }
        responses.push(y);
        designs.push(w);
    }
    DifferencedSystem { stack: RegressionStack { responses, designs }, basis, lag_order: p, n_regressors: k, basis_dim }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(p: usize, k: usize, t: usize) -> PanelDataset {
        let n = 3;
        let y = (0..n).map(|i| (0..t + p).map(|s| (i * 31 + s * 7) as f64 * 0.1 + (s as f64).sin()).collect()).collect();
        let x = (0..n).map(|i| DMatrix::from_fn(t, k, |r, c| ((i + 1) * (r + 2) * (c + 3)) as f64 * 0.01 + (r as f64).cos())).collect();
        PanelDataset::new(y, x, p, None).unwrap()
    }

    #[test]
    fn ar1_without_regressors() {
        let ds = PanelDataset::new(vec![vec![0.3, 1.0, 2.0], vec![0.0, 0.0, 1.0]], vec![DMatrix::zeros(2, 0); 2], 1, None).unwrap();
        let d = build_augmented(&ds);
        let w = &d.stack.designs[0];
        assert_eq!(w.shape(), (2, 3));
        assert_eq!(w.row(0).iter().copied().collect::<Vec<_>>(), vec![0.3, 1.0, 0.3]);
        assert_eq!(w.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.3]);
        assert_eq!(d.stack.responses[0].as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn augmented_dimensions() {
        let d = build_augmented(&panel(1, 1, 2));
        assert_eq!(d.z_dim, 3);
        assert_eq!(d.stack.designs[0].shape(), (2, 6));

        let ds = panel(2, 1, 3);
        let d = build_augmented(&ds);
        assert_eq!(d.z_dim, 5);
        assert_eq!(d.stack.designs[0].shape(), (3, 9));
        // hand enumeration of the column blocks for individual 1, period 2
        let w = &d.stack.designs[1];
        let expect = [
            ds.y(1, 1),
            ds.y(1, 0),
            ds.x(1, 2, 0),
            1.0,
            ds.x(1, 1, 0),
            ds.x(1, 2, 0),
            ds.x(1, 3, 0),
            ds.y(1, 0),
            ds.y(1, -1),
        ];
        for (c, e) in expect.iter().enumerate() {
            assert_eq!(w[(1, c)], *e, "column {c}");
        }
        assert_eq!(d.coefficient_names().len(), 9);
    }

    #[test]
    fn differenced_shapes() {
        let s = build_differenced(&panel(1, 1, 3), ProjectionBasis::FullX);
        assert_eq!(s.system_dim(), 3);

        let s = build_differenced(&panel(1, 1, 10), ProjectionBasis::DiffX);
        assert_eq!(s.basis_dim + 1, 10);

        let ds = panel(2, 1, 4);
        let s = build_differenced(&ds, ProjectionBasis::FullX);
        let w = &s.stack.designs[0];
        assert_eq!(w.nrows(), 2 + 3);
        assert_eq!(w.ncols(), 2 + 1 + 2 * (1 + 4));
        // projection rows: zero on (dY, dX), I_p (x) (1, x') on the right
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(w[(r, c)], 0.0);
            }
            for q in 0..2 {
                let off = s.projection_offset(q);
                assert_eq!(w[(r, off)], if q == r { 1.0 } else { 0.0 });
                for b in 0..4 {
                    let expect = if q == r { ds.x(0, b + 1, 0) } else { 0.0 };
                    assert_eq!(w[(r, off + 1 + b)], expect);
                }
            }
        }
        // differenced rows: (dY, dX) and zeros on the projection block
        for s_ in 2..=4usize {
            let row = 2 + s_ - 2;
            let dy = |t: isize| ds.y(0, t) - ds.y(0, t - 1);
            assert_eq!(w[(row, 0)], dy(s_ as isize - 1));
            assert_eq!(w[(row, 1)], dy(s_ as isize - 2));
            assert_eq!(w[(row, 2)], ds.x(0, s_, 0) - ds.x(0, s_ - 1, 0));
            assert!((3..w.ncols()).all(|c| w[(row, c)] == 0.0));
        }
        assert_eq!(s.stack.responses[0][0], ds.y(0, 0) - ds.y(0, -1));
        assert_eq!(s.stack.responses[0][1], ds.y(0, 1) - ds.y(0, 0));
    }
}
