//! Exact-covariance reference samplers: Cholesky factorization and
//! circulant embedding. Both work for every `H ∈ (0, 1)`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::covariance::{increment_cov_lags, increment_cov_matrix};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::rng::{fill_standard_normal, substream, Purpose};
use crate::series::IncrementSeries;

/// Relative floor below which an embedding eigenvalue counts as negative.
pub const EMBEDDING_TOLERANCE: f64 = 1e-9;

const CACHE_CAPACITY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct GridKey(usize, u64, u64, u64);

impl From<&GridSpec> for GridKey {
    fn from(g: &GridSpec) -> Self {
        GridKey(g.n_steps(), g.eps().to_bits(), g.hurst().to_bits(), g.sigma().to_bits())
    }
}

/// Read-mostly map from grid to a derived object.
struct Cache<T>(OnceLock<RwLock<HashMap<GridKey, Arc<T>>>>);

impl<T> Cache<T> {
    const fn new() -> Self {
        Self(OnceLock::new())
    }

    fn get_or_try(&self, grid: &GridSpec, build: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
        let map = self.0.get_or_init(|| RwLock::new(HashMap::new()));
        let key = GridKey::from(grid);
        if let Some(v) = map.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(v.clone());
        }
        let value = Arc::new(build()?);
        let mut w = map.write().unwrap_or_else(|e| e.into_inner());
        if w.len() >= CACHE_CAPACITY {
            w.clear();
        }
        Ok(w.entry(key).or_insert(value).clone())
    }
}

static CHOLESKY: Cache<DMatrix<f64>> = Cache::new();
static CIRCULANT: Cache<Embedding> = Cache::new();

/// Lower-triangular factor of the exact increment covariance, uncached.
pub fn cholesky_factor(grid: &GridSpec) -> Result<DMatrix<f64>> {
    let cov = increment_cov_matrix(grid);
    nalgebra::Cholesky::new(cov.clone().into_matrix())
        .map(|c| c.unpack())
        .ok_or_else(|| match cov.check_psd() {
            Err(e) => e,
            Ok(()) => Error::Factorization("matrix is singular to working precision".into()),
        })
}

/// Increments `L·z` with `L` the Cholesky factor and `z` iid standard normal.
pub fn cholesky_sample(grid: &GridSpec, seed: u64) -> Result<IncrementSeries> {
    let l = CHOLESKY.get_or_try(grid, || cholesky_factor(grid))?;
    Ok(cholesky_sample_with(&l, grid.eps(), seed))
}

/// Sample with an explicit factor; lets benchmarks skip the cache.
pub fn cholesky_sample_with(factor: &DMatrix<f64>, eps: f64, seed: u64) -> IncrementSeries {
    let n = factor.nrows();
    let mut z = vec![0.0; n];
    fill_standard_normal(&mut substream(seed, Purpose::Cholesky, 0), &mut z);
    let x = factor * DVector::from_vec(z);
    IncrementSeries::from_increments(eps, x.data.into())
}

/// Diagonalised circulant embedding of the increment covariance.
pub struct Embedding {
    n_steps: usize,
    eps: f64,
    /// `sqrt(λ_k / M)`
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Embedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedding")
            .field("n_steps", &self.n_steps)
            .field("size", &self.scale.len())
            .finish()
    }
}

/// Embedding size: next power of two at least `2(N−1)`.
pub fn embedding_size(n_steps: usize) -> usize {
    (2 * n_steps.saturating_sub(1)).max(1).next_power_of_two()
}

/// Eigenvalues of the circulant embedding, the transform of its first row.
pub fn circulant_eigenvalues(grid: &GridSpec) -> Vec<f64> {
    let size = embedding_size(grid.n_steps());
    let half = size / 2;
    let lags = increment_cov_lags(half + 1, grid.eps(), grid.hurst(), grid.sigma());
    let mut row: Vec<Complex64> = (0..size)
        .map(|k| Complex64::new(lags[k.min(size - k)], 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(size).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

impl Embedding {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        let lambda = circulant_eigenvalues(grid);
        let size = lambda.len();
        let largest = lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if let Some(&bad) = lambda
            .iter()
            .find(|&&l| l < -EMBEDDING_TOLERANCE * largest.abs())
        {
            return Err(Error::Embedding {
                eigenvalue: bad,
                largest,
            });
        }
        let scale = lambda
            .iter()
            .map(|&l| (l.max(0.0) / size as f64).sqrt())
            .collect();
        Ok(Self {
            n_steps: grid.n_steps(),
            eps: grid.eps(),
            scale,
            fft: FftPlanner::new().plan_fft_forward(size),
        })
    }

    pub fn size(&self) -> usize {
        self.scale.len()
    }

    /// Two independent exact samples, from the real and imaginary parts.
    pub fn sample_pair(&self, seed: u64) -> (IncrementSeries, IncrementSeries) {
        let size = self.size();
        let mut z = vec![0.0; 2 * size];
        fill_standard_normal(&mut substream(seed, Purpose::Circulant, 0), &mut z);
        let mut w: Vec<Complex64> = (0..size)
            .map(|k| Complex64::new(z[2 * k], z[2 * k + 1]) * self.scale[k])
            .collect();
        self.fft.process(&mut w);
        let n = self.n_steps;
        let re = w[..n].iter().map(|c| c.re).collect();
        let im = w[..n].iter().map(|c| c.im).collect();
        (
            IncrementSeries::from_increments(self.eps, re),
            IncrementSeries::from_increments(self.eps, im),
        )
    }
}

/// Exact fractional Gaussian noise via circulant embedding (real part of
/// the pair drawn for `seed`).
pub fn circulant_sample(grid: &GridSpec, seed: u64) -> Result<IncrementSeries> {
    Ok(circulant_sample_pair(grid, seed)?.0)
}

/// Both independent paths drawn for `seed`.
pub fn circulant_sample_pair(grid: &GridSpec, seed: u64) -> Result<(IncrementSeries, IncrementSeries)> {
    let e = CIRCULANT.get_or_try(grid, || Embedding::new(grid))?;
    Ok(e.sample_pair(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::increment_cov;

    #[test]
    fn embedding_sizes() {
        assert_eq!(embedding_size(1), 1);
        assert_eq!(embedding_size(2), 2);
        assert_eq!(embedding_size(64), 128);
        assert_eq!(embedding_size(65), 128);
        assert_eq!(embedding_size(66), 256);
    }

    #[test]
    fn eigenvalues_are_nonnegative() {
        for &h in &[0.05, 0.3, 0.5, 0.7, 0.95] {
            let g = GridSpec::new(64, 1.0, 64, h, 1.0).unwrap();
            let l = circulant_eigenvalues(&g);
            let max = l.iter().cloned().fold(0.0, f64::max);
            assert!(l.iter().all(|&x| x >= -1e-12 * max), "h={h}");
        }
    }

    #[test]
    fn eigenvalues_match_direct_dft() {
        let g = GridSpec::new(10, 0.5, 10, 0.7, 1.0).unwrap();
        let size = embedding_size(10);
        let fast = circulant_eigenvalues(&g);
        for (k, &lf) in fast.iter().enumerate() {
            let direct: f64 = (0..size)
                .map(|j| {
                    let lag = j.min(size - j) as i64;
                    let c = increment_cov(lag, 0.5, 0.7, 1.0).unwrap();
                    c * (2.0 * std::f64::consts::PI * (j * k) as f64 / size as f64).cos()
                })
                .sum();
            assert!((direct - lf).abs() < 1e-10);
        }
    }

    #[test]
    fn single_step_variance() {
        let g = GridSpec::new(1, 0.3, 1, 0.7, 2.0).unwrap();
        let l = cholesky_factor(&g).unwrap();
        assert!((l[(0, 0)].powi(2) - 4.0 * 0.3f64.powf(1.4)).abs() < 1e-14);
        let e = Embedding::new(&g).unwrap();
        assert_eq!(e.size(), 1);
        assert!((e.scale[0].powi(2) - 4.0 * 0.3f64.powf(1.4)).abs() < 1e-14);
        assert_eq!(circulant_sample(&g, 1).unwrap().len(), 1);
    }

    #[test]
    fn factor_reproduces_covariance() {
        let g = GridSpec::new(32, 0.1, 32, 0.3, 1.0).unwrap();
        let l = cholesky_factor(&g).unwrap();
        let back = &l * l.transpose();
        let cov = increment_cov_matrix(&g);
        assert!((back - cov.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let g = GridSpec::new(16, 1.0, 16, 0.7, 1.0).unwrap();
        assert_eq!(cholesky_sample(&g, 3).unwrap(), cholesky_sample(&g, 3).unwrap());
        assert_ne!(cholesky_sample(&g, 3).unwrap(), cholesky_sample(&g, 4).unwrap());
        let (a, b) = circulant_sample_pair(&g, 3).unwrap();
        assert_eq!(a, circulant_sample(&g, 3).unwrap());
        assert_ne!(a, b);
    }
}
