//! Exact covariance law of fractional Brownian motion and its increments,
//! and the truncation-error metric used to score approximate models.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, Error, Result};
use crate::grid::GridSpec;

/// Relative tolerance of the positive-semidefinite check.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Dense symmetric covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wraps a matrix after checking that it is square and exactly symmetric.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Dimension {
                expected: entries.nrows(),
                actual: entries.ncols(),
            });
        }
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(domain(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Symmetric Toeplitz matrix with first row `lags`.
    pub fn toeplitz(lags: &[f64]) -> Self {
        let n = lags.len();
        Self {
            entries: DMatrix::from_fn(n, n, |i, j| lags[i.abs_diff(j)]),
        }
    }

    /// Builds `f(i, j)` on the lower triangle and mirrors it.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                entries[(i, j)] = v;
                entries[(j, i)] = v;
            }
        }
        Self { entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        if self.dim() == 0 {
            return (0.0, 0.0);
        }
        let eig = SymmetricEigen::new(self.entries.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    pub fn is_psd(&self) -> bool {
        let (min, max) = self.eigen_range();
        min >= -PSD_TOLERANCE * max.max(0.0)
    }

    /// Rejects matrices failing the PSD tolerance.
    pub fn check_psd(&self) -> Result<()> {
        let (min, max) = self.eigen_range();
        if min >= -PSD_TOLERANCE * max.max(0.0) {
            Ok(())
        } else {
            Err(Error::Factorization(format!(
                "smallest eigenvalue {min:e} below tolerance (largest {max:e})"
            )))
        }
    }

    /// Frobenius norm of the matrix.
    pub fn frobenius(&self) -> f64 {
        self.entries.norm()
    }

    /// Row-major CSV with header `i,j,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,value\n");
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                let _ = writeln!(out, "{i},{j},{}", self.entries[(i, j)]);
            }
        }
        out
    }
}

fn check_hurst_sigma(hurst: f64, sigma: f64) -> Result<()> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(domain(format!("hurst must lie in (0, 1), got {hurst}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(domain(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// `E[B_s B_t] = ½σ²(t^{2H} + s^{2H} − |t−s|^{2H})`.
pub fn path_cov(s: f64, t: f64, hurst: f64, sigma: f64) -> Result<f64> {
    check_hurst_sigma(hurst, sigma)?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(domain(format!("times must be nonnegative, got s={s}, t={t}")));
    }
    let h2 = 2.0 * hurst;
    Ok(0.5 * sigma * sigma * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2)))
}

/// Second difference `½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})` at unit step.
fn unit_increment_cov(k: u64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    match k {
        0 => 1.0,
        1 => 0.5 * (2f64.powf(h2) - 2.0),
        _ => {
            // k^{2H}·[(1+1/k)^{2H} − 1 + (1−1/k)^{2H} − 1], computed without the
            // catastrophic cancellation of the naive form
            let x = 1.0 / k as f64;
            let up = (h2 * x.ln_1p()).exp_m1();
            let down = (h2 * (-x).ln_1p()).exp_m1();
            0.5 * (k as f64).powf(h2) * (up + down)
        }
    }
}

/// Covariance of fractional Gaussian noise at integer lag `k` and step `eps`.
pub fn increment_cov(k: i64, eps: f64, hurst: f64, sigma: f64) -> Result<f64> {
    check_hurst_sigma(hurst, sigma)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(domain(format!("eps must be positive, got {eps}")));
    }
    Ok(sigma * sigma * eps.powf(2.0 * hurst) * unit_increment_cov(k.unsigned_abs(), hurst))
}

/// Large-lag kernel `σ²ε^{2H}·H(2H−1)·|k|^{2H−2}`; diverges at lag zero.
pub fn increment_cov_asymptote(k: i64, eps: f64, hurst: f64, sigma: f64) -> f64 {
    let k = k.unsigned_abs() as f64;
    sigma * sigma * eps.powf(2.0 * hurst) * hurst * (2.0 * hurst - 1.0) * k.powf(2.0 * hurst - 2.0)
}

/// First row of the increment covariance, lags `0..n`.
pub fn increment_cov_lags(n: usize, eps: f64, hurst: f64, sigma: f64) -> Vec<f64> {
    let scale = sigma * sigma * eps.powf(2.0 * hurst);
    (0..n as u64).map(|k| scale * unit_increment_cov(k, hurst)).collect()
}

/// Toeplitz covariance of the `n_steps` increments of the grid.
pub fn increment_cov_matrix(grid: &GridSpec) -> CovarianceMatrix {
    CovarianceMatrix::toeplitz(&increment_cov_lags(
        grid.n_steps(),
        grid.eps(),
        grid.hurst(),
        grid.sigma(),
    ))
}

/// Exact path covariance `E[B_{t_i} B_{t_j}]` for `i, j = 1..=n_steps`.
pub fn path_cov_matrix(grid: &GridSpec) -> CovarianceMatrix {
    let (h, s) = (grid.hurst(), grid.sigma());
    CovarianceMatrix::from_lower_fn(grid.n_steps(), |i, j| {
        path_cov(grid.real_time(i + 1), grid.real_time(j + 1), h, s).expect("validated grid")
    })
}

/// Partial double sums `P[i][j] = Σ_{a≤i, b≤j} C[a][b]`.
pub fn partial_sums(cov: &CovarianceMatrix) -> DMatrix<f64> {
    let n = cov.dim();
    let mut p = cov.matrix().clone();
    for i in 0..n {
        for j in 1..n {
            p[(i, j)] += p[(i, j - 1)];
        }
    }
    for i in 1..n {
        for j in 0..n {
            p[(i, j)] += p[(i - 1, j)];
        }
    }
    p
}

/// Largest gap between the exact path covariance and the partial double sums
/// of an increment covariance model, over all grid pairs `s ≤ t`.
pub fn truncation_error(model_cov: &CovarianceMatrix, grid: &GridSpec) -> Result<f64> {
    let n = grid.n_steps();
    if model_cov.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: model_cov.dim(),
        });
    }
    let partial = partial_sums(model_cov);
    let (h, s) = (grid.hurst(), grid.sigma());
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let exact = path_cov(grid.real_time(i + 1), grid.real_time(j + 1), h, s)?;
            worst = worst.max((exact - partial[(i, j)]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn path_cov_examples() {
        assert!((path_cov(2.0, 3.0, 0.5, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((path_cov(1.0, 1.0, 0.75, 2.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((path_cov(1.0, 2.0, 0.75, 1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(path_cov(-1.0, 2.0, 0.75, 1.0).is_err());
        assert!(path_cov(1.0, 2.0, 1.5, 1.0).is_err());
    }

    #[test]
    fn increment_cov_examples() {
        assert!(increment_cov(1, 1.0, 0.5, 1.0).unwrap().abs() < 1e-15);
        let v = increment_cov(0, 0.5, 0.7, 1.0).unwrap();
        assert!((v - 0.5f64.powf(1.4)).abs() < 1e-15);
        assert!((v - 0.378_929).abs() < 1e-5);
        let exact = increment_cov(8, 1.0, 0.7, 1.0).unwrap();
        let asym = increment_cov_asymptote(8, 1.0, 0.7, 1.0);
        assert!(((exact - asym) / asym).abs() < 0.02);
        assert!(increment_cov(1, 0.0, 0.7, 1.0).is_err());
    }

    #[test]
    fn stable_form_matches_naive_second_difference() {
        for &h in &[0.1, 0.3, 0.5, 0.7, 0.95] {
            for k in 2..200u64 {
                let kf = k as f64;
                let h2 = 2.0 * h;
                let naive = 0.5 * ((kf + 1.0).powf(h2) - 2.0 * kf.powf(h2) + (kf - 1.0).powf(h2));
                let stable = unit_increment_cov(k, h);
                // the naive form loses ~ulp((k+1)^{2H}) to cancellation
                let tol = 16.0 * f64::EPSILON * (kf + 1.0).powf(h2);
                assert!((naive - stable).abs() < tol, "h={h} k={k}");
            }
        }
    }

    #[test]
    fn increment_matrix_examples() {
        let g = GridSpec::new(3, 0.25, 3, 0.5, 2.0).unwrap();
        let c = increment_cov_matrix(&g);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 4.0 * 0.25 } else { 0.0 };
                assert!((c.get(i, j) - want).abs() < 1e-15);
            }
        }
        let g = GridSpec::new(2, 1.0, 2, 0.7, 1.0).unwrap();
        let c = increment_cov_matrix(&g);
        let off = 0.5 * (2f64.powf(1.4) - 2.0);
        assert!((c.get(0, 1) - off).abs() < 1e-15);
        assert!((off - 0.319_507_9).abs() < 1e-6);
        assert_eq!(c.get(0, 0), 1.0);
    }

    #[test]
    fn increment_matrix_is_psd() {
        for &h in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let g = GridSpec::new(64, 0.1, 64, h, 1.3).unwrap();
            assert!(increment_cov_matrix(&g).is_psd(), "H={h}");
        }
    }

    #[test]
    fn truncation_error_examples() {
        let g = GridSpec::new(32, 0.1, 32, 0.7, 1.5).unwrap();
        let scale = g.sigma().powi(2) * g.horizon().powf(2.0 * g.hurst());
        let exact = increment_cov_matrix(&g);
        assert!(truncation_error(&exact, &g).unwrap() < 1e-12 * scale);

        let zero = CovarianceMatrix::zeros(32);
        assert!(zero.is_psd());
        let full = path_cov(g.horizon(), g.horizon(), 0.7, 1.5).unwrap();
        assert!((truncation_error(&zero, &g).unwrap() - full).abs() < 1e-12 * full);

        assert!(matches!(
            truncation_error(&CovarianceMatrix::zeros(5), &g),
            Err(Error::Dimension { expected: 32, actual: 5 })
        ));
    }

    #[test]
    fn telescoping_identity_up_to_64() {
        for &h in &[0.2, 0.5, 0.8] {
            let g = GridSpec::new(64, 0.05, 64, h, 1.0).unwrap();
            let partial = partial_sums(&increment_cov_matrix(&g));
            for i in 0..64 {
                for j in 0..64 {
                    let exact = path_cov(g.real_time(i + 1), g.real_time(j + 1), h, 1.0).unwrap();
                    assert!((partial[(i, j)] - exact).abs() <= 1e-10 * exact.abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn non_symmetric_rejected_and_csv() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(CovarianceMatrix::from_matrix(m).is_err());
        let c = CovarianceMatrix::toeplitz(&[2.0, 0.5]);
        assert_eq!(c.to_csv(), "i,j,value\n0,0,2\n0,1,0.5\n1,0,0.5\n1,1,2\n");
        let bad = CovarianceMatrix::toeplitz(&[1.0, 2.0]);
        assert!(matches!(bad.check_psd(), Err(Error::Factorization(_))));
    }

    proptest! {
        #[test]
        fn path_cov_symmetric_and_self_similar(
            s in 0.0f64..10.0, t in 0.0f64..10.0, a in 0.1f64..10.0, h in 0.05f64..0.95,
        ) {
            let c = path_cov(s, t, h, 1.0).unwrap();
            prop_assert_eq!(c, path_cov(t, s, h, 1.0).unwrap());
            let scaled = path_cov(a * s, a * t, h, 1.0).unwrap();
            let want = a.powf(2.0 * h) * c;
            prop_assert!((scaled - want).abs() <= 1e-12 * want.abs().max(1e-12) + 1e-13);
        }

        #[test]
        fn positive_regime_nonnegative(s in 0.0f64..10.0, dt in 0.0f64..10.0, h in 0.5f64..0.99) {
            prop_assert!(path_cov(s, s + dt, h, 1.0).unwrap() >= -1e-12);
        }
    }
}
