//! Light-cone network of Gaussian conditional probabilities.
//!
//! Level `n` of the network carries `n_steps + n` Gaussian variables. Each
//! variable of level `n` is an affine function of two neighbours one level
//! up plus fresh noise,
//!
//! ```text
//! Y_n[k] = m[n] · (Y_{n+1}[k] + Y_{n+1}[k+1]) + ξ_n[k],
//! ```
//!
//! and the top level is pure noise. The increments are the level-0 values,
//! times a single output scale. Unrolling the recursion, the noise cell
//! `(n, k)` reaches increment `j` with weight `cumulative_m(n)·C(n, k−j)`
//! when `0 ≤ k−j ≤ n`, which is the light cone of `j`.

use rayon::prelude::*;

use crate::covariance::{increment_cov_asymptote, CovarianceMatrix};
use crate::error::{domain, Error, Result};
use crate::grid::GridSpec;
use crate::rng::{derive_seed, fill_standard_normal, substream, Purpose};
use crate::series::IncrementSeries;
use crate::special::{gamma, hurwitz_zeta, ln_binomial};

/// Default cap on the number of noise cells one sample may touch.
pub const DEFAULT_MEMORY_BUDGET: u128 = 1 << 27;

/// Variance of the level-0 noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseNoise {
    /// Interior constant for `H ≠ ½` and `σ√ε` at `H = ½`.
    Interior,
    /// Chosen so that the model variance of one increment equals `σ²ε^{2H}`.
    MatchDiagonal,
}

/// Variance of the top (parentless) level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopNoise {
    /// Same constant as every interior level.
    Pure,
    /// Carries the lag-0 variance of all levels above the truncation depth.
    AbsorbTail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub base: BaseNoise,
    pub top: TopNoise,
    /// Upper bound on `depth · (n_steps + depth)`.
    pub memory_budget: u128,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            base: BaseNoise::MatchDiagonal,
            top: TopNoise::AbsorbTail,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl NetworkConfig {
    /// Constant noise at every level, boundaries included.
    pub fn constant_noise() -> Self {
        Self {
            base: BaseNoise::Interior,
            top: TopNoise::Pure,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// Interior noise scale `½σ·sqrt(H|2H−1| / Γ(1−H))`.
pub fn interior_noise_std(hurst: f64, sigma: f64) -> f64 {
    0.5 * sigma * (hurst * (2.0 * hurst - 1.0).abs() / gamma(1.0 - hurst)).sqrt()
}

/// `ln cumulative_m(q) = ln ε + (H−1) ln τ_q − ½ ln(q·C(2q, q))`, zero at `q = 0`.
fn ln_cumulative_m(q: usize, eps: f64, hurst: f64) -> f64 {
    if q == 0 {
        return 0.0;
    }
    let qf = q as f64;
    let tau = eps * qf.sqrt();
    eps.ln() + (hurst - 1.0) * tau.ln() - 0.5 * (qf.ln() + ln_binomial(2 * q as u64, q as u64))
}

/// Level-to-level coupling `m_{τ_n}^{τ_{n+1}}`.
///
/// For `n ≥ 1` the binomial normaliser ratio is the exact rational
/// `n / (2(2n+1))`; level 0 couples with `cumulative_m(1) = ε^H/√2`.
fn level_coupling(n: usize, eps: f64, hurst: f64) -> f64 {
    if n == 0 {
        return ln_cumulative_m(1, eps, hurst).exp();
    }
    let nf = n as f64;
    ((nf + 1.0) / nf).powf(0.5 * (hurst - 1.0)) * (nf / (2.0 * (2.0 * nf + 1.0))).sqrt()
}

/// Lag-`lag` covariance of a network with per-level log cumulative couplings
/// and noise scales, by Vandermonde's identity
/// `Σ_k C(q, k)·C(q, k−L) = C(2q, q−L)`. No output scale applied.
pub(crate) fn lag_covariance_raw(ln_cum: &[f64], level_std: &[f64], lag: usize) -> f64 {
    let depth = ln_cum.len() - 1;
    (lag..=depth)
        .map(|q| {
            let s = level_std[q];
            if s == 0.0 {
                return 0.0;
            }
            let lb = ln_binomial(2 * q as u64, (q - lag) as u64);
            (2.0 * ln_cum[q] + lb).exp() * s * s
        })
        .sum()
}

/// Per-level coefficients of a light-cone network.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    hurst: f64,
    eps: f64,
    sigma: f64,
    n_steps: usize,
    m: Vec<f64>,
    ln_cum: Vec<f64>,
    level_std: Vec<f64>,
    interior_std: f64,
    output_scale: f64,
}

impl CoefficientTable {
    /// Coefficients for an arbitrary truncation depth (depth 0 allowed).
    pub fn build(
        n_steps: usize,
        eps: f64,
        hurst: f64,
        sigma: f64,
        depth: usize,
        config: &NetworkConfig,
    ) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(domain(format!("hurst must lie in (0, 1), got {hurst}")));
        }
        if !(eps > 0.0 && eps.is_finite() && sigma > 0.0 && sigma.is_finite()) || n_steps == 0 {
            return Err(domain("eps, sigma and n_steps must be positive"));
        }
        let m = (0..depth).map(|n| level_coupling(n, eps, hurst)).collect();
        let ln_cum: Vec<f64> = (0..=depth).map(|q| ln_cumulative_m(q, eps, hurst)).collect();
        let interior = interior_noise_std(hurst, sigma);
        let mut level_std = vec![interior; depth + 1];

        if depth >= 1 && config.top == TopNoise::AbsorbTail {
            // cumulative_m(q)²·C(2q, q) = ε^{2H}·q^{H−2} exactly, so the lag-0
            // weight of levels q ≥ D relative to level D is ζ(2−H, D)·D^{2−H}
            let d = depth as f64;
            let factor = hurwitz_zeta(2.0 - hurst, d) * d.powf(2.0 - hurst);
            level_std[depth] = interior * factor.sqrt();
        }

        let lag = (n_steps / 2).max(1);
        let target = increment_cov_asymptote(lag as i64, eps, hurst, sigma);
        let mut scratch = level_std.clone();
        scratch[0] = 0.0;
        let raw = lag_covariance_raw(&ln_cum, &scratch, lag);
        let output_scale = if target > 0.0 && raw > 0.0 {
            (target / raw).sqrt()
        } else {
            1.0
        };

        level_std[0] = match config.base {
            BaseNoise::Interior => {
                if hurst == 0.5 {
                    sigma * eps.sqrt()
                } else {
                    interior
                }
            }
            BaseNoise::MatchDiagonal => {
                let above = lag_covariance_raw(&ln_cum, &scratch, 0);
                let want = sigma * sigma * eps.powf(2.0 * hurst) / (output_scale * output_scale);
                (want - above).max(0.0).sqrt()
            }
        };

        Ok(Self {
            hurst,
            eps,
            sigma,
            n_steps,
            m,
            ln_cum,
            level_std,
            interior_std: interior,
            output_scale,
        })
    }

    /// Table with given log cumulative couplings (`ln_cum[0] = 0`), noise
    /// scales and unit output scale.
    pub(crate) fn from_log_cumulative(
        n_steps: usize,
        eps: f64,
        hurst: f64,
        sigma: f64,
        ln_cum: Vec<f64>,
        level_std: Vec<f64>,
        output_scale: f64,
    ) -> Self {
        debug_assert_eq!(ln_cum.len(), level_std.len());
        debug_assert_eq!(ln_cum[0], 0.0);
        let m = ln_cum.windows(2).map(|w| (w[1] - w[0]).exp()).collect();
        Self {
            hurst,
            eps,
            sigma,
            n_steps,
            m,
            ln_cum,
            level_std,
            interior_std: sigma,
            output_scale,
        }
    }

    pub fn depth(&self) -> usize {
        self.m.len()
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Coupling of level `n+1` into level `n`.
    pub fn m(&self, n: usize) -> f64 {
        self.m[n]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.m
    }

    /// `Π_{q<n} m[q]`.
    pub fn cumulative_m(&self, n: usize) -> f64 {
        self.ln_cum[n].exp()
    }

    pub fn ln_cumulative_m(&self, n: usize) -> f64 {
        self.ln_cum[n]
    }

    pub fn level_std(&self, n: usize) -> f64 {
        self.level_std[n]
    }

    pub fn level_stds(&self) -> &[f64] {
        &self.level_std
    }

    /// The printed interior noise constant.
    pub fn interior_std(&self) -> f64 {
        self.interior_std
    }

    /// Output rescaling applied to the level-0 values.
    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    /// Model covariance of two increments `lag` apart, closed form.
    pub fn lag_covariance(&self, lag: usize) -> f64 {
        self.output_scale.powi(2) * lag_covariance_raw(&self.ln_cum, &self.level_std, lag)
    }
}

/// Coefficient table of the grid's network with the default boundaries.
pub fn coeff_table(grid: &GridSpec) -> Result<CoefficientTable> {
    CoefficientTable::build(
        grid.n_steps(),
        grid.eps(),
        grid.hurst(),
        grid.sigma(),
        grid.depth(),
        &NetworkConfig::default(),
    )
}

/// The two-dimensional array of independent noise variables of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    seed: u64,
    n_steps: usize,
    levels: Vec<Vec<f64>>,
}

impl NoiseField {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn width_at(&self, n: usize) -> usize {
        self.n_steps + n
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n]
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.levels[n][k]
    }
}

/// Light-cone weights, stored per level as a function of the offset `k − j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    n_steps: usize,
    per_level: Vec<Vec<f64>>,
}

impl WeightTable {
    pub fn depth(&self) -> usize {
        self.per_level.len() - 1
    }

    /// Weight of noise cell `(n, k)` in increment `j`; zero outside the cone.
    pub fn weight(&self, j: usize, k: usize, n: usize) -> f64 {
        if k < j || k - j > n || j >= self.n_steps {
            return 0.0;
        }
        self.per_level[n][k - j]
    }

    /// Weights of level `n` indexed by offset `0..=n`.
    pub fn level(&self, n: usize) -> &[f64] {
        &self.per_level[n]
    }
}

/// A truncated light-cone network ready to sample.
#[derive(Debug, Clone)]
pub struct LightCone {
    n_steps: usize,
    eps: f64,
    table: CoefficientTable,
    memory_budget: u128,
    noise_purpose: Purpose,
}

impl LightCone {
    /// Network of the grid with default boundaries. Requires `H ∈ (½, 1)`.
    pub fn new(grid: &GridSpec) -> Result<Self> {
        Self::with_config(grid, NetworkConfig::default())
    }

    pub fn with_config(grid: &GridSpec, config: NetworkConfig) -> Result<Self> {
        Self::truncated(grid, grid.depth(), config)
    }

    /// Network of the grid cut at an arbitrary depth, including depth 0.
    pub fn truncated(grid: &GridSpec, depth: usize, config: NetworkConfig) -> Result<Self> {
        let h = grid.hurst();
        if !(h > 0.5 && h < 1.0) {
            return Err(domain(format!(
                "the light-cone sampler needs hurst in (0.5, 1), got {h}; use a baseline sampler"
            )));
        }
        let table =
            CoefficientTable::build(grid.n_steps(), grid.eps(), h, grid.sigma(), depth, &config)?;
        Ok(Self {
            n_steps: grid.n_steps(),
            eps: grid.eps(),
            table,
            memory_budget: config.memory_budget,
            noise_purpose: Purpose::LightconeNoise,
        })
    }

    /// Network over an explicit coefficient table; used by the multifractal
    /// sampler, whose couplings are random.
    pub(crate) fn from_table(table: CoefficientTable, budget: u128, noise_purpose: Purpose) -> Self {
        Self {
            n_steps: table.n_steps,
            eps: table.eps,
            table,
            memory_budget: budget,
            noise_purpose,
        }
    }

    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    pub fn depth(&self) -> usize {
        self.table.depth()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn width_at(&self, n: usize) -> usize {
        self.n_steps + n
    }

    pub fn output_scale(&self) -> f64 {
        self.table.output_scale
    }

    pub(crate) fn check_budget(&self) -> Result<()> {
        let d = self.depth() as u128;
        let required = d * (self.n_steps as u128 + d);
        if required > self.memory_budget {
            return Err(Error::Resource {
                required,
                budget: self.memory_budget,
            });
        }
        Ok(())
    }

    fn draw_level(&self, seed: u64, n: usize, out: &mut Vec<f64>) {
        out.resize(self.width_at(n), 0.0);
        fill_standard_normal(&mut substream(seed, self.noise_purpose, n as u64), out);
        let s = self.table.level_std[n];
        out.iter_mut().for_each(|x| *x *= s);
    }

    /// Materialises every noise variable of the sample `seed`.
    pub fn draw_noise(&self, seed: u64) -> Result<NoiseField> {
        self.check_budget()?;
        let levels = (0..=self.depth())
            .map(|n| {
                let mut v = Vec::new();
                self.draw_level(seed, n, &mut v);
                v
            })
            .collect();
        Ok(NoiseField {
            seed,
            n_steps: self.n_steps,
            levels,
        })
    }

    fn finish(&self, mut level0: Vec<f64>) -> IncrementSeries {
        let a = self.table.output_scale;
        level0.truncate(self.n_steps);
        level0.iter_mut().for_each(|x| *x *= a);
        IncrementSeries::from_increments(self.eps, level0)
    }

    /// Runs the pairing recursion downward over a given noise field.
    pub fn sample_from_noise(&self, noise: &NoiseField) -> Result<IncrementSeries> {
        if noise.depth() != self.depth() || noise.n_steps != self.n_steps {
            return Err(Error::Dimension {
                expected: self.depth(),
                actual: noise.depth(),
            });
        }
        let mut upper = noise.levels[self.depth()].clone();
        for n in (0..self.depth()).rev() {
            let m = self.table.m[n];
            let xi = &noise.levels[n];
            let lower: Vec<f64> = xi
                .iter()
                .enumerate()
                .map(|(k, x)| m * (upper[k] + upper[k + 1]) + x)
                .collect();
            upper = lower;
        }
        Ok(self.finish(upper))
    }

    /// Draws one sample; level noise is generated on the fly.
    pub fn sample(&self, seed: u64) -> Result<IncrementSeries> {
        self.check_budget()?;
        let mut upper = Vec::new();
        self.draw_level(seed, self.depth(), &mut upper);
        let mut xi = Vec::new();
        for n in (0..self.depth()).rev() {
            self.draw_level(seed, n, &mut xi);
            let m = self.table.m[n];
            for k in 0..xi.len() {
                xi[k] += m * (upper[k] + upper[k + 1]);
            }
            std::mem::swap(&mut upper, &mut xi);
        }
        Ok(self.finish(upper))
    }

    /// `count` samples with seeds derived from `seed`, in seed order.
    pub fn sample_many(&self, seed: u64, count: usize) -> Result<Vec<IncrementSeries>> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.sample(derive_seed(seed, i)))
            .collect()
    }

    /// Closed-form light-cone weights `cumulative_m(n)·C(n, k−j)`.
    pub fn weight_table(&self) -> Result<WeightTable> {
        let d = self.depth() as u128;
        let required = (d + 1) * (d + 2) / 2;
        if required > self.memory_budget {
            return Err(Error::Resource {
                required,
                budget: self.memory_budget,
            });
        }
        let per_level = (0..=self.depth())
            .map(|n| {
                let lc = self.table.ln_cum[n];
                (0..=n)
                    .map(|o| (lc + ln_binomial(n as u64, o as u64)).exp())
                    .collect()
            })
            .collect();
        Ok(WeightTable {
            n_steps: self.n_steps,
            per_level,
        })
    }

    /// Increments as the explicit weighted sum of the noise field.
    pub fn reconstruct(&self, weights: &WeightTable, noise: &NoiseField) -> Vec<f64> {
        let a = self.table.output_scale;
        (0..self.n_steps)
            .map(|j| {
                let mut acc = 0.0;
                for n in 0..=self.depth() {
                    let w = weights.level(n);
                    let xi = &noise.levels[n][j..=j + n];
                    acc += w.iter().zip(xi).map(|(w, x)| w * x).sum::<f64>();
                }
                a * acc
            })
            .collect()
    }

    /// Exact covariance of the increments: the weight table contracted with
    /// itself over the cells shared by two light cones.
    pub fn model_cov(&self) -> Result<CovarianceMatrix> {
        let weights = self.weight_table()?;
        let a2 = self.table.output_scale.powi(2);
        let stds = &self.table.level_std;
        Ok(CovarianceMatrix::from_lower_fn(self.n_steps, |i, j| {
            let lag = i - j;
            let mut acc = 0.0;
            for n in lag..=self.depth() {
                let w = weights.level(n);
                // cells k with offsets k−j ∈ [lag, n] and k−i = (k−j) − lag
                let shared: f64 = (lag..=n).map(|o| w[o] * w[o - lag]).sum();
                acc += shared * stds[n] * stds[n];
            }
            a2 * acc
        }))
    }

    /// Closed-form lag covariance (see [`CoefficientTable::lag_covariance`]).
    pub fn lag_covariance(&self, lag: usize) -> f64 {
        self.table.lag_covariance(lag)
    }
}

/// One sample of the grid's network with default boundaries.
pub fn sample_increments(grid: &GridSpec, seed: u64) -> Result<IncrementSeries> {
    LightCone::new(grid)?.sample(seed)
}

/// Model covariance of the grid's network with default boundaries.
pub fn model_cov(grid: &GridSpec) -> Result<CovarianceMatrix> {
    LightCone::new(grid)?.model_cov()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{increment_cov, truncation_error};
    use crate::special::binomial_u128;

    fn grid(n: usize, depth: usize, h: f64) -> GridSpec {
        GridSpec::new(n, 1.0, depth, h, 1.0).unwrap()
    }

    #[test]
    fn coupling_examples() {
        // γ_1^2 = [2·C(4,2)]^{-1/2} / [1·C(2,1)]^{-1/2}, from exact integers
        let gamma12 = ((1 * binomial_u128(2, 1).unwrap()) as f64
            / (2 * binomial_u128(4, 2).unwrap()) as f64)
            .sqrt();
        assert!((gamma12 - 0.408_248).abs() < 1e-6);

        let g = GridSpec::new(4, 0.5, 16, 0.5, 1.0).unwrap();
        let t = CoefficientTable::build(4, 0.5, 0.5, 1.0, 16, &NetworkConfig::constant_noise()).unwrap();
        let tau_ratio = g.virtual_time(2) / g.virtual_time(1);
        let want = tau_ratio.powf(-0.5) * gamma12;
        assert!((t.m(1) - want).abs() < 1e-12);
        // 2^{-1/4}·sqrt(1/6) = 0.343295
        assert!((t.m(1) - 0.343_304).abs() < 2e-5);
    }

    #[test]
    fn interior_std_example() {
        let s = interior_noise_std(0.75, 1.0);
        // Γ(0.25) = 3.625609908221908
        let want = 0.5 * (0.75 * 0.5 / 3.625_609_908_221_908f64).sqrt();
        assert!((s - want).abs() < 1e-12);
        assert!((s - 0.160_81).abs() < 1e-5);
    }

    #[test]
    fn couplings_match_ratio_of_cumulatives() {
        let t = CoefficientTable::build(8, 0.3, 0.7, 1.0, 2000, &NetworkConfig::default()).unwrap();
        for n in 0..2000 {
            let ratio = (t.ln_cumulative_m(n + 1) - t.ln_cumulative_m(n)).exp();
            assert!((t.m(n) - ratio).abs() < 1e-10 * ratio, "n={n}");
            assert!(t.m(n) > 0.0);
        }
        assert!((t.m(0) - 0.3f64.powf(0.7) / 2f64.sqrt()).abs() < 1e-14);
        // no overflow or underflow deep in the circuit
        assert!(t.ln_cumulative_m(2000).is_finite());
    }

    #[test]
    fn constant_base_noise_at_half() {
        let t = CoefficientTable::build(4, 0.25, 0.5, 2.0, 4, &NetworkConfig::constant_noise()).unwrap();
        assert_eq!(t.level_std(0), 2.0 * 0.5);
        assert_eq!(t.level_std(1), 0.0);
        let t = CoefficientTable::build(4, 0.25, 0.7, 2.0, 4, &NetworkConfig::constant_noise()).unwrap();
        assert_eq!(t.level_std(0), interior_noise_std(0.7, 2.0));
    }

    #[test]
    fn rejects_hurst_outside_upper_half() {
        assert!(LightCone::new(&grid(4, 16, 0.3)).is_err());
        assert!(LightCone::new(&grid(4, 16, 0.5)).is_err());
        assert!(LightCone::new(&grid(4, 16, 0.7)).is_ok());
    }

    #[test]
    fn resource_limit() {
        let cfg = NetworkConfig {
            memory_budget: 1000,
            ..NetworkConfig::default()
        };
        let lc = LightCone::with_config(&grid(4, 100, 0.7), cfg).unwrap();
        assert!(matches!(lc.sample(1), Err(Error::Resource { .. })));
        assert!(matches!(lc.draw_noise(1), Err(Error::Resource { .. })));
    }

    #[test]
    fn noise_field_layout() {
        let lc = LightCone::new(&grid(5, 7, 0.7)).unwrap();
        let f = lc.draw_noise(3).unwrap();
        assert_eq!(f.depth(), 7);
        for n in 0..=7 {
            assert_eq!(f.level(n).len(), 5 + n);
            assert!(f.level(n).iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn depth_zero_is_iid_base_noise() {
        let g = grid(6, 6, 0.7);
        let lc = LightCone::truncated(&g, 0, NetworkConfig::constant_noise()).unwrap();
        assert_eq!(lc.output_scale(), 1.0);
        let f = lc.draw_noise(11).unwrap();
        let s = lc.sample(11).unwrap();
        assert_eq!(s.increments(), f.level(0));
        assert_eq!(lc.table().level_std(0), interior_noise_std(0.7, 1.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let lc = LightCone::new(&grid(8, 64, 0.8)).unwrap();
        let a = lc.sample(5).unwrap();
        let b = lc.sample(5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, lc.sample(6).unwrap());
        assert_eq!(a, lc.sample_from_noise(&lc.draw_noise(5).unwrap()).unwrap());
    }

    #[test]
    fn weight_table_examples() {
        let lc = LightCone::new(&grid(4, 6, 0.7)).unwrap();
        let w = lc.weight_table().unwrap();
        for j in 0..4 {
            assert_eq!(w.weight(j, j, 0), 1.0);
            for k in 0..12 {
                let want = if k == j || k == j + 1 { lc.table().m(0) } else { 0.0 };
                assert!((w.weight(j, k, 1) - want).abs() < 1e-15);
            }
            assert_eq!(w.weight(j, j + 4, 3), 0.0);
            assert_eq!(w.weight(j + 1, j, 3), 0.0);
        }
    }

    #[test]
    fn recursion_equals_weighted_sum() {
        let lc = LightCone::new(&grid(4, 6, 0.7)).unwrap();
        let w = lc.weight_table().unwrap();
        for seed in 0..100 {
            let noise = lc.draw_noise(seed).unwrap();
            let rec = lc.sample_from_noise(&noise).unwrap();
            let closed = lc.reconstruct(&w, &noise);
            for (a, b) in rec.increments().iter().zip(&closed) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn weight_contraction_matches_vandermonde_form() {
        for &(n, d) in &[(8usize, 8usize), (16, 256), (5, 40)] {
            let lc = LightCone::new(&grid(n, d, 0.75)).unwrap();
            let cov = lc.model_cov().unwrap();
            for i in 0..n {
                for j in 0..n {
                    let want = lc.lag_covariance(i.abs_diff(j));
                    assert!((cov.get(i, j) - want).abs() < 1e-12 * want.abs().max(1e-300));
                }
            }
            assert!(cov.is_psd());
        }
    }

    #[test]
    fn diagonal_matches_exact_variance() {
        let g = GridSpec::new(16, 0.1, 256, 0.7, 1.3).unwrap();
        let lc = LightCone::new(&g).unwrap();
        let want = increment_cov(0, 0.1, 0.7, 1.3).unwrap();
        assert!((lc.lag_covariance(0) - want).abs() < 1e-12 * want);
        let lag = 8;
        let asym = increment_cov_asymptote(lag, 0.1, 0.7, 1.3);
        assert!((lc.lag_covariance(lag as usize) - asym).abs() < 1e-12 * asym);
    }

    #[test]
    fn model_is_toeplitz() {
        let lc = LightCone::new(&grid(16, 256, 0.7)).unwrap();
        let cov = lc.model_cov().unwrap();
        for i in 4..12usize {
            for j in 4..12 {
                let reference = cov.get(0, i.abs_diff(j));
                assert!((cov.get(i, j) - reference).abs() <= 0.02 * reference.abs());
            }
        }
    }

    #[test]
    fn truncation_error_shrinks_with_depth() {
        let n = 16;
        let errs: Vec<f64> = [n, n * n, 4 * n * n]
            .iter()
            .map(|&d| {
                let g = grid(n, d, 0.7);
                truncation_error(&model_cov(&g).unwrap(), &g).unwrap()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn lag_ratio_follows_power_law() {
        // interior lags n and 2n with depth ≫ n²
        let h = 0.7;
        let t = CoefficientTable::build(64, 1.0, h, 1.0, 1 << 16, &NetworkConfig::default()).unwrap();
        let ratio = t.lag_covariance(16) / t.lag_covariance(8);
        let want = 2f64.powf(2.0 * h - 2.0);
        assert!((ratio / want - 1.0).abs() < 0.10, "ratio {ratio} vs {want}");
    }
}
