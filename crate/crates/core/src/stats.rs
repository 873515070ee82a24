//! Estimators that close the verification loop.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::covariance::CovarianceMatrix;
use crate::error::{domain, Error, Result};
use crate::series::IncrementSeries;

/// Streaming mean and covariance with pairwise (Chan) merging.
#[derive(Debug, Clone, PartialEq)]
pub struct CovAccumulator {
    count: usize,
    mean: Vec<f64>,
    /// Lower triangle of the centred cross-product sum, row-major.
    m2: Vec<f64>,
}

impl CovAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: x.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let w = (n - 1.0) / n;
        for i in 0..d {
            let di = w * delta[i];
            let row = &mut self.m2[i * d..i * d + i + 1];
            for (r, dj) in row.iter_mut().zip(&delta) {
                *r += di * dj;
            }
            self.mean[i] += delta[i] / n;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        let d = self.dim();
        if other.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: other.dim(),
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let w = na * nb / n;
        for i in 0..d {
            for j in 0..=i {
                self.m2[i * d + j] += other.m2[i * d + j] + w * delta[i] * delta[j];
            }
            self.mean[i] += delta[i] * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased covariance and Gaussian fourth-moment standard errors
    /// `sqrt((c_ii·c_jj + c_ij²)/(M−1))`.
    pub fn finish(&self) -> Result<EmpiricalCov> {
        if self.count < 2 {
            return Err(domain(format!("need at least 2 samples, got {}", self.count)));
        }
        let d = self.dim();
        let m1 = self.count as f64 - 1.0;
        let c = DMatrix::from_fn(d, d, |i, j| {
            let (a, b) = if i >= j { (i, j) } else { (j, i) };
            self.m2[a * d + b] / m1
        });
        let se = DMatrix::from_fn(d, d, |i, j| ((c[(i, i)] * c[(j, j)] + c[(i, j)].powi(2)) / m1).sqrt());
        Ok(EmpiricalCov {
            cov: CovarianceMatrix::from_matrix(c)?,
            stderr: se,
            count: self.count,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCov {
    pub cov: CovarianceMatrix,
    pub stderr: DMatrix<f64>,
    pub count: usize,
}

impl EmpiricalCov {
    /// Largest `|empirical − reference| / se` over all entries.
    pub fn max_z(&self, reference: &CovarianceMatrix) -> f64 {
        let d = self.cov.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let se = self.stderr[(i, j)];
                let gap = (self.cov.get(i, j) - reference.get(i, j)).abs();
                worst = worst.max(if se > 0.0 { gap / se } else if gap > 0.0 { f64::INFINITY } else { 0.0 });
            }
        }
        worst
    }
}

const CHUNK: usize = 1024;

/// Covariance of `count` vectors produced by `draw(i)`. Work is split into
/// fixed chunks merged in index order, so the result does not depend on
/// the number of threads.
pub fn monte_carlo_cov(
    dim: usize,
    count: usize,
    draw: impl Fn(u64) -> Result<Vec<f64>> + Sync,
) -> Result<EmpiricalCov> {
    let chunks: Vec<CovAccumulator> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = CovAccumulator::new(dim);
            for i in c * CHUNK..((c + 1) * CHUNK).min(count) {
                acc.push(&draw(i as u64)?)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = CovAccumulator::new(dim);
    for c in &chunks {
        total.merge(c)?;
    }
    total.finish()
}

fn common_len(samples: &[IncrementSeries]) -> Result<usize> {
    let n = samples.first().map(|s| s.len()).unwrap_or(0);
    if let Some(bad) = samples.iter().find(|s| s.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            actual: bad.len(),
        });
    }
    Ok(n)
}

/// Increment covariance of a batch of samples.
pub fn empirical_cov(samples: &[IncrementSeries]) -> Result<EmpiricalCov> {
    let n = common_len(samples)?;
    let mut acc = CovAccumulator::new(n);
    for s in samples {
        acc.push(s.increments())?;
    }
    acc.finish()
}

/// Path covariance `Cov(B_{t_i}, B_{t_j})` of a batch of samples.
pub fn empirical_path_cov(samples: &[IncrementSeries]) -> Result<EmpiricalCov> {
    let n = common_len(samples)?;
    let mut acc = CovAccumulator::new(n);
    for s in samples {
        acc.push(s.path())?;
    }
    acc.finish()
}

/// Ordinary least squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Weights `w` with `slope = Σ w_k y_k`.
pub fn ols_slope_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    x.iter().map(|v| (v - mx) / sxx).collect()
}

pub fn ols(x: &[f64], y: &[f64]) -> OlsFit {
    debug_assert_eq!(x.len(), y.len());
    let w = ols_slope_weights(x);
    let slope: f64 = w.iter().zip(y).map(|(a, b)| a * b).sum();
    let n = x.len() as f64;
    let intercept = (y.iter().sum::<f64>() - slope * x.iter().sum::<f64>()) / n;
    OlsFit { slope, intercept }
}

/// Log-log variance growth: `Ê(B_t²) ∝ t^{exponent}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceFit {
    pub exponent: f64,
    pub stderr: f64,
    pub intercept: f64,
}

/// Fit from per-sample squared path values at `times`. The standard error
/// propagates sample-to-sample variation through the log and the slope.
pub fn variance_fit_from_squares<R: AsRef<[f64]>>(times: &[f64], rows: &[R]) -> Result<VarianceFit> {
    let k = times.len();
    if k < 2 {
        return Err(Error::Range(format!("need at least 2 fit times, got {k}")));
    }
    if rows.is_empty() {
        return Err(domain("no samples"));
    }
    let m = rows.len() as f64;
    let mut v = vec![0.0; k];
    for r in rows {
        let r = r.as_ref();
        if r.len() != k {
            return Err(Error::Dimension {
                expected: k,
                actual: r.len(),
            });
        }
        v.iter_mut().zip(r).for_each(|(a, b)| *a += b);
    }
    v.iter_mut().for_each(|a| *a /= m);
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = v.iter().map(|a| a.ln()).collect();
    let fit = ols(&x, &y);
    let w = ols_slope_weights(&x);
    let infl: Vec<f64> = rows
        .iter()
        .map(|r| r.as_ref().iter().zip(&w).zip(&v).map(|((b, w), v)| w * b / v).sum())
        .collect();
    let (_, sd) = mean_sd(&infl);
    let stderr = if rows.len() > 1 { sd / m.sqrt() } else { f64::INFINITY };
    Ok(VarianceFit {
        exponent: fit.slope,
        stderr,
        intercept: fit.intercept,
    })
}

/// Slope of `log Ê(B_t²)` against `log t` over grid times in `[t_min, t_max]`.
pub fn variance_growth_fit(paths: &[IncrementSeries], t_min: f64, t_max: f64) -> Result<VarianceFit> {
    let n = common_len(paths)?;
    let Some(first) = paths.first() else {
        return Err(domain("no samples"));
    };
    let idx: Vec<usize> = (1..=n)
        .filter(|&k| {
            let t = first.time(k);
            t >= t_min * (1.0 - 1e-12) && t <= t_max * (1.0 + 1e-12)
        })
        .collect();
    if idx.len() < 4 {
        return Err(Error::Range(format!(
            "only {} grid points in [{t_min}, {t_max}], need 4",
            idx.len()
        )));
    }
    let times: Vec<f64> = idx.iter().map(|&k| first.time(k)).collect();
    let rows: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| idx.iter().map(|&k| p.path()[k - 1].powi(2)).collect())
        .collect();
    variance_fit_from_squares(&times, &rows)
}

/// Mean and unbiased standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let (m, sd) = mean_sd(xs);
    (m, sd / (xs.len() as f64).sqrt())
}

/// Path with a leading `B_0 = 0`.
fn full_path(s: &IncrementSeries) -> Vec<f64> {
    std::iter::once(0.0).chain(s.path().iter().copied()).collect()
}

fn sample_structure(path: &[f64], q: f64, lag: usize) -> f64 {
    let cnt = path.len() - lag;
    (0..cnt).map(|t| (path[t + lag] - path[t]).abs().powf(q)).sum::<f64>() / cnt as f64
}

/// `S_q(Δ)` per lag: mean of `|B_{t+Δ} − B_t|^q` over start times `t ≥ 0`
/// (with `B_0 = 0`) and samples, with standard errors from the spread of
/// per-sample averages.
pub fn structure_function(paths: &[IncrementSeries], q: f64, lags: &[usize]) -> Result<Vec<(f64, f64)>> {
    let n = common_len(paths)?;
    if let Some(&bad) = lags.iter().find(|&&l| l == 0 || l > n) {
        return Err(Error::Range(format!("lag {bad} outside 1..={n}")));
    }
    let full: Vec<Vec<f64>> = paths.iter().map(full_path).collect();
    Ok(lags
        .iter()
        .map(|&lag| {
            let per: Vec<f64> = full.iter().map(|p| sample_structure(p, q, lag)).collect();
            mean_se(&per)
        })
        .collect())
}

/// Dyadic lags `2, 4, …, N/8`.
pub fn default_lags(n: usize) -> Vec<usize> {
    let mut lags = Vec::new();
    let mut l = 2;
    while l <= n / 8 {
        lags.push(l);
        l *= 2;
    }
    lags
}

/// `ζ(q)` with a batch standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaEstimate {
    pub q: f64,
    pub zeta: f64,
    pub stderr: f64,
    pub batches: usize,
}

pub const ZETA_BATCHES: usize = 32;

fn zeta_slope(paths: &[Vec<f64>], q: f64, lags: &[usize]) -> f64 {
    let x: Vec<f64> = lags.iter().map(|&l| (l as f64).ln()).collect();
    let y: Vec<f64> = lags
        .iter()
        .map(|&l| {
            let s: f64 = paths.iter().map(|p| sample_structure(p, q, l)).sum();
            (s / paths.len() as f64).ln()
        })
        .collect();
    ols(&x, &y).slope
}

/// Scaling exponents `ζ(q)`: slope of `log S_q(Δ)` against `log Δ`.
/// The standard error comes from 32 disjoint batches of samples.
pub fn scaling_exponents(paths: &[IncrementSeries], qs: &[f64], lags: &[usize]) -> Result<Vec<ZetaEstimate>> {
    let n = common_len(paths)?;
    if lags.len() < 2 {
        return Err(Error::Range(format!("need at least 2 lags, got {}", lags.len())));
    }
    if let Some(&bad) = lags.iter().find(|&&l| l == 0 || l > n) {
        return Err(Error::Range(format!("lag {bad} outside 1..={n}")));
    }
    if paths.len() < 2 * ZETA_BATCHES {
        return Err(domain(format!("need at least {} samples", 2 * ZETA_BATCHES)));
    }
    let full: Vec<Vec<f64>> = paths.iter().map(full_path).collect();
    let size = full.len() / ZETA_BATCHES;
    Ok(qs
        .iter()
        .map(|&q| {
            let per_batch: Vec<f64> = full
                .chunks_exact(size)
                .take(ZETA_BATCHES)
                .map(|b| zeta_slope(b, q, lags))
                .collect();
            let (_, se) = mean_se(&per_batch);
            ZetaEstimate {
                q,
                zeta: zeta_slope(&full, q, lags),
                stderr: se,
                batches: ZETA_BATCHES,
            }
        })
        .collect())
}

/// Whether `ζ(q)/q` is constant: true iff the simultaneous (Bonferroni)
/// confidence intervals at `level` share a common point.
pub fn zeta_over_q_constant(est: &[ZetaEstimate], level: f64) -> bool {
    let (lo, hi) = zeta_over_q_envelope(est, level);
    lo <= hi
}

/// `(max lower bound, min upper bound)` of the simultaneous intervals for
/// `ζ(q)/q`.
pub fn zeta_over_q_envelope(est: &[ZetaEstimate], level: f64) -> (f64, f64) {
    let k = est.len() as f64;
    let alpha = (1.0 - level) / k;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for e in est {
        let t = StudentsT::new(0.0, 1.0, e.batches as f64 - 1.0)
            .expect("valid degrees of freedom")
            .inverse_cdf(1.0 - alpha / 2.0);
        let r = e.zeta / e.q;
        let half = t * e.stderr / e.q;
        lo = lo.max(r - half);
        hi = hi.min(r + half);
    }
    (lo, hi)
}

/// Stieltjes sum `Σ_j f(t_j)·(X_{t_j} − X_{t_{j−1}})`.
pub fn stochastic_integral(path: &IncrementSeries, f: impl Fn(f64) -> f64) -> f64 {
    path.increments()
        .iter()
        .enumerate()
        .map(|(j, x)| f(path.time(j + 1)) * x)
        .sum()
}

/// Excess kurtosis pooled over groups of observations, with a standard error
/// from the spread of per-group influence sums. Observations inside one
/// group may be dependent; groups must be independent.
pub fn pooled_excess_kurtosis<G: AsRef<[f64]>>(groups: &[G]) -> Result<(f64, f64)> {
    let total: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    if groups.len() < 2 || total < 4 {
        return Err(domain("need at least two groups and four observations"));
    }
    let nf = total as f64;
    let mu = groups.iter().flat_map(|g| g.as_ref()).sum::<f64>() / nf;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in groups.iter().flat_map(|g| g.as_ref()) {
        let d2 = (x - mu).powi(2);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m4 /= nf;
    let k = m4 / (m2 * m2) - 3.0;
    // influence of x on m4/m2² (the mean's own influence drops out to first
    // order for symmetric laws)
    let infl: Vec<f64> = groups
        .iter()
        .map(|g| {
            g.as_ref()
                .iter()
                .map(|x| {
                    let d2 = (x - mu).powi(2);
                    (d2 * d2 - m4) / (m2 * m2) - 2.0 * m4 / m2.powi(3) * (d2 - m2)
                })
                .sum::<f64>()
        })
        .collect();
    let g = groups.len() as f64;
    let (mean_i, _) = mean_sd(&infl);
    let var = infl.iter().map(|v| (v - mean_i).powi(2)).sum::<f64>() / (g - 1.0);
    let se = (g * var).sqrt() / nf;
    Ok((k, se))
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(domain("both samples must be non-empty"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    })
}

/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One row of the estimate CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub quantity: String,
    pub param: String,
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(quantity: &str, param: impl ToString, value: f64, stderr: f64) -> Self {
        Self {
            quantity: quantity.to_string(),
            param: param.to_string(),
            value,
            stderr,
        }
    }
}

/// CSV with header `quantity,param,value,stderr`.
pub fn estimates_to_csv(rows: &[Estimate]) -> String {
    let mut out = String::from("quantity,param,value,stderr\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.quantity, r.param, r.value, r.stderr);
    }
    out
}
