//! Calibrated hierarchical Gaussian tree sampler.
//!
//! Level `L` is a single root, level 0 holds the `N = 2^L` leaves. Node `i`
//! of level `ℓ < L` has parent `p = i/2` and receives
//!
//! ```text
//! v_ℓ[i] = pass_ℓ·v_{ℓ+1}[p] + mix_ℓ·v_{ℓ+1}[p ± 1] + noise_ℓ·z,
//! ```
//!
//! where `p − 1` is used for even `i` and `p + 1` for odd `i`, and missing
//! neighbours at the ends contribute nothing. The root is noise only.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{increment_cov_matrix, CovarianceMatrix};
use crate::error::{domain, Error, Result};
use crate::grid::GridSpec;
use crate::lightcone::{CoefficientTable, NetworkConfig};
use crate::rng::{derive_seed, standard_normal, substream, Purpose};
use crate::series::IncrementSeries;
use crate::stats::{ols, VarianceFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeLayerParams {
    pub level: usize,
    pub pass_coeff: f64,
    pub mix_coeff: f64,
    pub noise_std: f64,
}

/// A full parameter set; persists as JSON with bit-exact floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub hurst: f64,
    pub eps: f64,
    pub sigma: f64,
    pub n_leaves: usize,
    pub levels: Vec<TreeLayerParams>,
    /// Fit quality against the exact covariance; absent before calibration.
    #[serde(default)]
    pub frobenius_rel_error: Option<f64>,
}

impl TreeParams {
    /// Parameters with every level set to `(pass, mix, noise)`; the root
    /// stores zero couplings.
    pub fn uniform(n_leaves: usize, pass: f64, mix: f64, noise: f64) -> Result<Self> {
        let l = tree_height(n_leaves)?;
        let levels = (0..=l)
            .map(|level| TreeLayerParams {
                level,
                pass_coeff: if level == l { 0.0 } else { pass },
                mix_coeff: if level == l { 0.0 } else { mix },
                noise_std: noise,
            })
            .collect();
        Ok(Self {
            hurst: 0.5,
            eps: 1.0,
            sigma: 1.0,
            n_leaves,
            levels,
            frobenius_rel_error: None,
        })
    }

    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let l = tree_height(self.n_leaves)?;
        if self.levels.len() != l + 1 {
            return Err(Error::Dimension {
                expected: l + 1,
                actual: self.levels.len(),
            });
        }
        for (i, p) in self.levels.iter().enumerate() {
            if p.level != i {
                return Err(domain(format!("level {i} is labelled {}", p.level)));
            }
            if !(p.pass_coeff.is_finite() && p.mix_coeff.is_finite() && p.noise_std.is_finite())
                || p.noise_std < 0.0
            {
                return Err(domain(format!("level {i} has invalid parameters {p:?}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree parameters serialise")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s).map_err(|e| domain(format!("bad parameter file: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    fn to_vec(&self) -> Vec<f64> {
        self.levels
            .iter()
            .flat_map(|p| [p.pass_coeff, p.mix_coeff, p.noise_std])
            .collect()
    }

    fn set_from(&mut self, x: &[f64]) {
        for (p, c) in self.levels.iter_mut().zip(x.chunks(3)) {
            p.pass_coeff = c[0];
            p.mix_coeff = c[1];
            p.noise_std = c[2];
        }
    }
}

/// `log2(n)` for a power of two, else a dimension error.
pub fn tree_height(n_leaves: usize) -> Result<usize> {
    if n_leaves == 0 || !n_leaves.is_power_of_two() {
        return Err(Error::Dimension {
            expected: n_leaves.max(1).next_power_of_two(),
            actual: n_leaves,
        });
    }
    Ok(n_leaves.trailing_zeros() as usize)
}

/// Same-side neighbour of parent `p` for child `i`, if inside `0..width`.
#[inline]
fn neighbour(i: usize, width: usize) -> Option<usize> {
    let p = i / 2;
    if i.is_multiple_of(2) {
        p.checked_sub(1)
    } else if p + 1 < width {
        Some(p + 1)
    } else {
        None
    }
}

/// `C_ℓ = T_ℓ·C_{ℓ+1}·T_ℓᵀ + noise_ℓ²·I`, row-major dense buffers.
fn propagate_cov(parent: &[f64], np: usize, pass: f64, mix: f64, noise: f64) -> Vec<f64> {
    let nc = 2 * np;
    // D = T·C, nc × np
    let mut d = vec![0.0; nc * np];
    for i in 0..nc {
        let row = &mut d[i * np..(i + 1) * np];
        let p = i / 2;
        for (r, c) in row.iter_mut().zip(&parent[p * np..(p + 1) * np]) {
            *r = pass * c;
        }
        if let Some(q) = neighbour(i, np) {
            if mix != 0.0 {
                for (r, c) in row.iter_mut().zip(&parent[q * np..(q + 1) * np]) {
                    *r += mix * c;
                }
            }
        }
    }
    // C = D·Tᵀ, symmetric
    let mut out = vec![0.0; nc * nc];
    for i in 0..nc {
        let row = &d[i * np..(i + 1) * np];
        for j in 0..=i {
            let mut v = pass * row[j / 2];
            if let Some(q) = neighbour(j, np) {
                v += mix * row[q];
            }
            out[i * nc + j] = v;
            out[j * nc + i] = v;
        }
        out[i * nc + i] += noise * noise;
    }
    out
}

fn leaf_cov_dense(params: &TreeParams) -> Vec<f64> {
    let l = params.height();
    let s = params.levels[l].noise_std;
    let mut cov = vec![s * s];
    for level in (0..l).rev() {
        let p = &params.levels[level];
        let np = 1usize << (l - level - 1);
        cov = propagate_cov(&cov, np, p.pass_coeff, p.mix_coeff, p.noise_std);
    }
    cov
}

/// Exact covariance of the leaves.
pub fn tree_model_cov(params: &TreeParams) -> Result<CovarianceMatrix> {
    params.validate()?;
    let n = params.n_leaves;
    let dense = leaf_cov_dense(params);
    CovarianceMatrix::from_matrix(DMatrix::from_row_slice(n, n, &dense))
}

/// One draw of the leaves, truncated to `n_out ≤ n_leaves`.
pub fn tree_sample(params: &TreeParams, n_out: usize, seed: u64) -> Result<IncrementSeries> {
    params.validate()?;
    if n_out > params.n_leaves {
        return Err(Error::Dimension {
            expected: params.n_leaves,
            actual: n_out,
        });
    }
    let mut rng = substream(seed, Purpose::TreeNoise, 0);
    let mut leaves = propagate_sample(params, &mut rng, &mut 0);
    leaves.truncate(n_out);
    Ok(IncrementSeries::from_increments(params.eps, leaves))
}

/// Floating-point operations of one tree draw, counted on the fly.
pub fn tree_sample_op_count(params: &TreeParams, seed: u64) -> Result<u64> {
    params.validate()?;
    let mut rng = substream(seed, Purpose::TreeNoise, 0);
    let mut ops = 0;
    propagate_sample(params, &mut rng, &mut ops);
    Ok(ops)
}

fn propagate_sample(params: &TreeParams, rng: &mut ChaCha8Rng, ops: &mut u64) -> Vec<f64> {
    let l = params.height();
    let mut upper = vec![params.levels[l].noise_std * standard_normal(rng)];
    *ops += 1;
    for level in (0..l).rev() {
        let p = &params.levels[level];
        let np = upper.len();
        let lower: Vec<f64> = (0..2 * np)
            .map(|i| {
                let mut v = p.pass_coeff * upper[i / 2] + p.noise_std * standard_normal(rng);
                *ops += 3;
                if let Some(q) = neighbour(i, np) {
                    v += p.mix_coeff * upper[q];
                    *ops += 2;
                }
                v
            })
            .collect();
        upper = lower;
    }
    upper
}

/// Outcome of a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub target: CovarianceMatrix,
    pub achieved: CovarianceMatrix,
    pub frobenius_rel_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Relative Frobenius distance to a dense row-major target.
fn rel_error(params: &TreeParams, target: &[f64], target_norm: f64) -> f64 {
    let cov = leaf_cov_dense(params);
    let sq: f64 = cov.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
    sq.sqrt() / target_norm
}

/// Starting point: for `H > ½` the lag-0 variance of the light-cone network
/// split into dyadic bands of virtual depth, one band per tree level, with
/// unit pass and no mixing. Otherwise flat unit parameters.
pub fn initial_params(grid: &GridSpec) -> Result<TreeParams> {
    let n = grid.n_steps();
    let l = tree_height(n)?;
    let mut params = TreeParams::uniform(n, 1.0, 0.0, 1.0)?;
    params.hurst = grid.hurst();
    params.eps = grid.eps();
    params.sigma = grid.sigma();
    if grid.hurst() > 0.5 {
        let t = CoefficientTable::build(
            n,
            grid.eps(),
            grid.hurst(),
            grid.sigma(),
            grid.depth(),
            &NetworkConfig::default(),
        )?;
        let a2 = t.output_scale().powi(2);
        let mut band = vec![0.0; l + 1];
        band[0] = a2 * t.level_std(0).powi(2);
        for q in 1..=t.depth() {
            // virtual level q reaches real-time distance ~√q, i.e. tree level log4 q
            let level = (((q as f64).ln() / 4f64.ln()).floor() as usize + 1).min(l);
            let ln_w = 2.0 * t.ln_cumulative_m(q) + crate::special::ln_binomial(2 * q as u64, q as u64);
            band[level] += a2 * ln_w.exp() * t.level_std(q).powi(2);
        }
        for (p, b) in params.levels.iter_mut().zip(band) {
            p.noise_std = b.sqrt();
        }
    }
    Ok(params)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const LINE_SEARCH_STEPS: usize = 40;

/// Minimum of `f` on `[lo, hi]` by golden-section search.
fn golden_section(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut a = hi - GOLDEN * (hi - lo);
    let mut b = lo + GOLDEN * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..LINE_SEARCH_STEPS {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - GOLDEN * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + GOLDEN * (hi - lo);
            fb = f(b);
        }
    }
    if fa < fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Fits the tree to the exact increment covariance of `grid` by coordinate
/// descent. Each iteration is one sweep over all free coordinates.
pub fn calibrate(grid: &GridSpec, max_iter: usize, tol: f64) -> Result<(TreeParams, CalibrationReport)> {
    let init = initial_params(grid)?;
    calibrate_from(grid, init, max_iter, tol)
}

/// Calibration from an explicit starting point.
pub fn calibrate_from(
    grid: &GridSpec,
    init: TreeParams,
    max_iter: usize,
    tol: f64,
) -> Result<(TreeParams, CalibrationReport)> {
    let n = grid.n_steps();
    let l = tree_height(n)?;
    init.validate()?;
    if init.n_leaves != n {
        return Err(Error::Dimension {
            expected: n,
            actual: init.n_leaves,
        });
    }
    let target_cov = increment_cov_matrix(grid);
    let target: Vec<f64> = target_cov.matrix().transpose().iter().copied().collect();
    let norm = target.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut params = init;
    let mut x = params.to_vec();
    let mut objective = rel_error(&params, &target, norm);
    // root couplings and the mixing of the root's children never act
    let free: Vec<usize> = (0..3 * (l + 1))
        .filter(|&j| {
            let (level, kind) = (j / 3, j % 3);
            kind == 2 || (level < l && !(kind == 1 && level + 1 == l))
        })
        .collect();
    let mut radius: Vec<f64> = x.iter().map(|v| 0.5 * v.abs().max(0.1)).collect();

    let mut iterations = 0;
    let mut converged = objective <= tol;
    while !converged && iterations < max_iter {
        iterations += 1;
        let before = objective;
        for &j in &free {
            let x0 = x[j];
            let lo = if j % 3 == 2 { (x0 - radius[j]).max(0.0) } else { x0 - radius[j] };
            let hi = x0 + radius[j];
            let mut trial = params.clone();
            let mut scratch = x.clone();
            let (best, f_best) = golden_section(
                |t| {
                    scratch[j] = t;
                    trial.set_from(&scratch);
                    rel_error(&trial, &target, norm)
                },
                lo,
                hi,
            );
            if f_best < objective {
                let step = (best - x0).abs();
                x[j] = best;
                params.set_from(&x);
                objective = f_best;
                let near_edge = (best - lo).min(hi - best) < 0.05 * (hi - lo);
                radius[j] = if near_edge { 2.0 * radius[j] } else { (2.0 * step).max(1e-9) };
            } else {
                radius[j] = (0.5 * radius[j]).max(1e-9);
            }
        }
        if objective > before {
            return Err(Error::Convergence {
                before,
                after: objective,
            });
        }
        converged = objective <= tol;
        if before - objective <= 1e-13 * before && radius.iter().all(|&r| r <= 1e-8) {
            break;
        }
    }
    params.frobenius_rel_error = Some(objective);
    let achieved = tree_model_cov(&params)?;
    Ok((
        params,
        CalibrationReport {
            target: target_cov,
            achieved,
            frobenius_rel_error: objective,
            iterations,
            converged,
        },
    ))
}

/// Dyadic fit times `T/8, T/4, T/2, T` as step counts.
fn fit_steps(n: usize) -> Result<[usize; 4]> {
    if n < 8 {
        return Err(domain(format!("need at least 8 steps for the variance fit, got {n}")));
    }
    Ok([n / 8, n / 4, n / 2, n])
}

/// Monte Carlo variance-growth exponent of the tree's partial sums.
pub fn hurst_fit_from_tree(params: &TreeParams, n_samples: usize, seed: u64) -> Result<VarianceFit> {
    params.validate()?;
    let steps = fit_steps(params.n_leaves)?;
    let rows: Vec<[f64; 4]> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = tree_sample(params, params.n_leaves, derive_seed(seed, i))?;
            Ok(steps.map(|k| s.path()[k - 1].powi(2)))
        })
        .collect::<Result<_>>()?;
    let times = steps.map(|k| k as f64 * params.eps);
    crate::stats::variance_fit_from_squares(&times, &rows)
}

/// The same fit on exact partial-sum variances of the model covariance.
pub fn hurst_fit_exact(params: &TreeParams) -> Result<f64> {
    let cov = tree_model_cov(params)?;
    let steps = fit_steps(params.n_leaves)?;
    let m = cov.matrix();
    let x: Vec<f64> = steps.iter().map(|&k| (k as f64 * params.eps).ln()).collect();
    let y: Vec<f64> = steps.iter().map(|&k| m.view((0, 0), (k, k)).sum().ln()).collect();
    Ok(ols(&x, &y).slope)
}
