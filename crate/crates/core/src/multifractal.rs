//! Self-similar random multipliers and the multifractal light-cone sampler.
//!
//! A multiplier path `M(τ_n)` randomises the couplings of the network:
//!
//! ```text
//! cumulative_m(q)² = ε²·τ_q^{−p}·M(τ_q) / (q·C(2q, q)),
//! ```
//!
//! with every level's noise scale equal to `σ`. Conditional on the path the
//! increments are Gaussian; unconditionally they are a variance mixture.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::grid::GridSpec;
use crate::lightcone::{CoefficientTable, LightCone, DEFAULT_MEMORY_BUDGET};
use crate::rng::{derive_seed, standard_normal, substream, Purpose};
use crate::series::IncrementSeries;
use crate::special::ln_binomial;

pub const MAX_CASCADE_LEVELS: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MultiplierKind {
    /// `M(t) = exp(λ·W(ln t) − λ²/2·ln t)`.
    Lognormal { vol: f64 },
    /// Products of `2·m_η` over fair random bits, `m_1 = 1 − m_0`.
    BinomialCascade { m0: f64, levels: u32 },
}

/// A positive multiplier process with `M ≡ 1` at `base_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierProcess {
    pub kind: MultiplierKind,
    pub base_scale: f64,
}

impl MultiplierProcess {
    pub fn lognormal(vol: f64) -> Result<Self> {
        if !(vol >= 0.0 && vol.is_finite()) {
            return Err(domain(format!("volatility must be nonnegative, got {vol}")));
        }
        Ok(Self {
            kind: MultiplierKind::Lognormal { vol },
            base_scale: 1.0,
        })
    }

    pub fn binomial_cascade(m0: f64, levels: u32) -> Result<Self> {
        check_cascade(m0, levels)?;
        Ok(Self {
            kind: MultiplierKind::BinomialCascade { m0, levels },
            base_scale: 1.0,
        })
    }

    pub fn with_base_scale(mut self, base_scale: f64) -> Result<Self> {
        if !(base_scale > 0.0 && base_scale.is_finite()) {
            return Err(domain(format!("base scale must be positive, got {base_scale}")));
        }
        self.base_scale = base_scale;
        Ok(self)
    }

    /// One joint draw of `M(base_scale·e^{u_i})` for nondecreasing `u_i ≥ 0`.
    pub fn sample_log_times(&self, log_times: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self.kind {
            MultiplierKind::Lognormal { vol } => {
                let mut w = 0.0;
                let mut prev = 0.0;
                log_times
                    .iter()
                    .map(|&u| {
                        debug_assert!(u >= prev);
                        w += (u - prev).sqrt() * standard_normal(rng);
                        prev = u;
                        (vol * w - 0.5 * vol * vol * u).exp()
                    })
                    .collect()
            }
            MultiplierKind::BinomialCascade { m0, levels } => {
                let mut acc = 1.0;
                let mut k = 0u32;
                log_times
                    .iter()
                    .map(|&u| {
                        let want = cascade_level(u, levels);
                        while k < want {
                            acc *= 2.0 * if rng.random::<bool>() { 1.0 - m0 } else { m0 };
                            k += 1;
                        }
                        acc
                    })
                    .collect()
            }
        }
    }

    /// Draws of the scale multiplier, distributed as `M(a·t)/M(t)` for any
    /// `t ≥ base_scale`. The cascade only supports `a = 2^j`.
    pub fn sample_scale_multipliers(&self, a: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
        if !(a >= 1.0 && a.is_finite()) {
            return Err(domain(format!("scale factor must be at least 1, got {a}")));
        }
        let u = a.ln();
        if let MultiplierKind::BinomialCascade { levels, .. } = self.kind {
            let j = a.log2().round();
            if (a.log2() - j).abs() > 1e-9 || j > levels as f64 {
                return Err(domain(format!(
                    "cascade scale factor must be 2^j with j ≤ {levels}, got {a}"
                )));
            }
        }
        let mut rng = substream(seed, Purpose::MultiplierRatio, 0);
        Ok((0..count)
            .map(|_| self.sample_log_times(&[u], &mut rng)[0])
            .collect())
    }
}

fn check_cascade(m0: f64, levels: u32) -> Result<()> {
    if !(m0 > 0.0 && m0 < 1.0) {
        return Err(domain(format!("m0 must lie in (0, 1), got {m0}")));
    }
    if levels == 0 || levels > MAX_CASCADE_LEVELS {
        return Err(domain(format!("levels must lie in 1..={MAX_CASCADE_LEVELS}, got {levels}")));
    }
    Ok(())
}

/// Dyadic cascade level nearest to log-time `u`, capped at `levels`.
fn cascade_level(u: f64, levels: u32) -> u32 {
    ((u / std::f64::consts::LN_2).round().max(0.0) as u32).min(levels)
}

/// Masses of the `2^levels` dyadic cells; cell `(η_1..η_k)` (most
/// significant bit first) has mass `Π m_{η_j}`.
pub fn binomial_cascade_measure(m0: f64, levels: u32) -> Result<Vec<f64>> {
    check_cascade(m0, levels)?;
    let m1 = 1.0 - m0;
    let mut masses = vec![1.0];
    for _ in 0..levels {
        masses = masses.iter().flat_map(|&m| [m * m0, m * m1]).collect();
    }
    Ok(masses)
}

/// `M(τ_n)` on the virtual-time levels of one sample. Level 0 sits at
/// `τ = 0`, carries no multiplier and is stored as 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierPath {
    pub values: Vec<f64>,
    pub seed: u64,
}

impl MultiplierPath {
    pub fn depth(&self) -> usize {
        self.values.len() - 1
    }

    pub fn at(&self, n: usize) -> f64 {
        self.values[n]
    }
}

/// `ln(τ_n/τ_1) = ½ ln n` for levels `1..=depth`.
fn level_log_times(depth: usize) -> Vec<f64> {
    (1..=depth).map(|n| 0.5 * (n as f64).ln()).collect()
}

/// Multiplier path for `grid`, with `τ_1` mapped onto the base scale.
pub fn sample_multiplier_path(proc: &MultiplierProcess, grid: &GridSpec, seed: u64) -> Result<MultiplierPath> {
    if grid.depth() == 0 {
        return Err(domain("the grid has no virtual-time levels"));
    }
    let mut rng = substream(seed, Purpose::Multiplier, 0);
    let mut values = Vec::with_capacity(grid.depth() + 1);
    values.push(1.0);
    values.extend(proc.sample_log_times(&level_log_times(grid.depth()), &mut rng));
    Ok(MultiplierPath { values, seed })
}

/// Multifractal light-cone sampler.
#[derive(Debug, Clone)]
pub struct MultifractalSampler {
    grid: GridSpec,
    process: MultiplierProcess,
    decay_exponent: f64,
    memory_budget: u128,
}

impl MultifractalSampler {
    /// Sampler with the virtual decay exponent `p = 2 − 2H`, which gives
    /// the coupling profile of the unifractal network.
    pub fn new(grid: &GridSpec, process: MultiplierProcess) -> Self {
        Self {
            grid: *grid,
            process,
            decay_exponent: 2.0 - 2.0 * grid.hurst(),
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn with_decay_exponent(mut self, p: f64) -> Result<Self> {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(domain(format!("virtual decay exponent must be nonnegative, got {p}")));
        }
        self.decay_exponent = p;
        Ok(self)
    }

    pub fn with_memory_budget(mut self, budget: u128) -> Self {
        self.memory_budget = budget;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn process(&self) -> &MultiplierProcess {
        &self.process
    }

    pub fn decay_exponent(&self) -> f64 {
        self.decay_exponent
    }

    pub fn multiplier_path(&self, seed: u64) -> Result<MultiplierPath> {
        sample_multiplier_path(&self.process, &self.grid, seed)
    }

    /// Coefficients conditional on a multiplier path.
    pub fn table(&self, path: &MultiplierPath) -> Result<CoefficientTable> {
        let g = &self.grid;
        if path.depth() != g.depth() {
            return Err(crate::error::Error::Dimension {
                expected: g.depth(),
                actual: path.depth(),
            });
        }
        // Built for a unit step; the step enters only through the output
        // scale ε^H, so the law of the increments is the same for every ε.
        let half_p = 0.5 * self.decay_exponent;
        let ln_cum = (0..=g.depth())
            .map(|q| {
                if q == 0 {
                    return 0.0;
                }
                let m = path.at(q);
                if !(m > 0.0 && m.is_finite()) {
                    return f64::NAN;
                }
                let qf = q as f64;
                -half_p * 0.5 * qf.ln() + 0.5 * m.ln() - 0.5 * (qf.ln() + ln_binomial(2 * q as u64, q as u64))
            })
            .collect::<Vec<f64>>();
        if ln_cum.iter().any(|x| x.is_nan()) {
            return Err(domain("multiplier path must be positive and finite"));
        }
        Ok(CoefficientTable::from_log_cumulative(
            g.n_steps(),
            g.eps(),
            g.hurst(),
            g.sigma(),
            ln_cum,
            vec![g.sigma(); g.depth() + 1],
            g.eps().powf(g.hurst()),
        ))
    }

    /// Coefficients with `M ≡ 1`.
    pub fn deterministic_table(&self) -> Result<CoefficientTable> {
        self.table(&MultiplierPath {
            values: vec![1.0; self.grid.depth() + 1],
            seed: 0,
        })
    }

    pub fn network(&self, path: &MultiplierPath) -> Result<LightCone> {
        let lc = LightCone::from_table(self.table(path)?, self.memory_budget, Purpose::MultifractalNoise);
        lc.check_budget()?;
        Ok(lc)
    }

    /// Increments for a frozen multiplier path.
    pub fn sample_conditional(&self, path: &MultiplierPath, noise_seed: u64) -> Result<IncrementSeries> {
        self.network(path)?.sample(noise_seed)
    }

    /// Fresh multiplier path and noise, both keyed by `seed`.
    pub fn sample(&self, seed: u64) -> Result<IncrementSeries> {
        self.sample_conditional(&self.multiplier_path(seed)?, seed)
    }

    /// `count` unconditional samples with seeds derived from `seed`.
    pub fn sample_many(&self, seed: u64, count: usize) -> Result<Vec<IncrementSeries>> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.sample(derive_seed(seed, i)))
            .collect()
    }
}

/// Shorthand for one unconditional multifractal sample.
pub fn sample_multifractal_increments(
    grid: &GridSpec,
    proc: &MultiplierProcess,
    seed: u64,
) -> Result<IncrementSeries> {
    MultifractalSampler::new(grid, *proc).sample(seed)
}

/// Result of a moment-scaling comparison `E(Y^m_{cT})` vs `E(M_c^m)·E(Y^m_T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of `lhs − rhs`.
    pub se: f64,
}

impl MomentCheck {
    pub fn z_score(&self) -> f64 {
        (self.lhs - self.rhs) / self.se
    }
}

/// Variance of the sum of the first `k` increments of a stationary model.
fn partial_sum_variance(table: &CoefficientTable, k: usize) -> f64 {
    (0..k)
        .map(|lag| {
            let w = if lag == 0 { k } else { 2 * (k - lag) };
            w as f64 * table.lag_covariance(lag)
        })
        .sum()
}

/// Empirical check of `E(Y^m_{cT}) = E(M_c^m)·E(Y^m_T)`.
///
/// The process multiplier is `M_c = sqrt(d_c·R)` where `d_c` is the exact
/// variance ratio of the `M ≡ 1` network and `R` is the scale multiplier at
/// `a = 1/c`, drawn independently.
pub fn moment_scaling_check(
    sampler: &MultifractalSampler,
    c: f64,
    order: u32,
    n_samples: usize,
    seed: u64,
) -> Result<MomentCheck> {
    if order != 2 && order != 4 {
        return Err(domain(format!("order must be 2 or 4, got {order}")));
    }
    if n_samples < 10_000 {
        return Err(domain(format!("need at least 10000 samples, got {n_samples}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(domain(format!("c must lie in (0, 1), got {c}")));
    }
    let n = sampler.grid.n_steps();
    let kf = c * n as f64;
    let k = kf.round() as usize;
    if (kf - k as f64).abs() > 1e-9 || k == 0 {
        return Err(domain(format!("c·T = {kf} steps is not on the grid")));
    }

    let ends: Vec<(f64, f64)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = sampler.sample(derive_seed(seed, i))?;
            Ok((s.path()[k - 1], s.endpoint()))
        })
        .collect::<Result<_>>()?;

    let table = sampler.deterministic_table()?;
    let d = partial_sum_variance(&table, k) / partial_sum_variance(&table, n);
    let half = order as i32 / 2;
    let ratios: Vec<f64> = sampler
        .process
        .sample_scale_multipliers(1.0 / c, n_samples, seed)?
        .into_iter()
        .map(|r| r.powi(half))
        .collect();

    let nf = n_samples as f64;
    let a: Vec<f64> = ends.iter().map(|e| e.0.powi(order as i32)).collect();
    let b: Vec<f64> = ends.iter().map(|e| e.1.powi(order as i32)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
    let (ma, mb, mr) = (mean(&a), mean(&b), mean(&ratios));
    let dm = d.powi(half);
    let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - dm * mr * y).collect();
    let md = mean(&diff);
    let se = (var(&diff, md) / nf + (dm * mb).powi(2) * var(&ratios, mr) / ratios.len() as f64).sqrt();
    Ok(MomentCheck {
        lhs: ma,
        rhs: dm * mr * mb,
        se,
    })
}
