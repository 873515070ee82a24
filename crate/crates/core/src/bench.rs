//! Wall-time scaling of the samplers.

use std::fmt::Write as _;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::baseline::{cholesky_factor, cholesky_sample_with, Embedding};
use crate::error::{domain, Result};
use crate::grid::GridSpec;
use crate::lightcone::{LightCone, NetworkConfig};
use crate::stats::ols;
use crate::tree::{tree_sample, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    /// Factorization plus one draw, no cache.
    Cholesky,
    /// Embedding spectrum plus one draw, no cache.
    Circulant,
    /// One draw from fixed parameters.
    Tree,
    /// One draw from a network of depth `N`.
    Lightcone,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cholesky => "cholesky",
            Self::Circulant => "circulant",
            Self::Tree => "tree",
            Self::Lightcone => "lightcone",
        }
    }
}

impl FromStr for BenchMethod {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "circulant" => Ok(Self::Circulant),
            "tree" => Ok(Self::Tree),
            "lightcone" => Ok(Self::Lightcone),
            other => Err(domain(format!(
                "unknown bench method {other:?}; expected cholesky, circulant, tree or lightcone"
            ))),
        }
    }
}

/// Shortest single measurement; faster calls are repeated inside it.
const MIN_MEASUREMENT: Duration = Duration::from_millis(5);

/// Median seconds per call of `f`. The first, calibrating measurement is
/// discarded as warm-up.
pub fn median_seconds(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut inner = 1usize;
    loop {
        let start = Instant::now();
        for _ in 0..inner {
            f()?;
        }
        if start.elapsed() >= MIN_MEASUREMENT {
            break;
        }
        inner *= 2;
    }
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            for _ in 0..inner {
                f()?;
            }
            Ok(start.elapsed().as_secs_f64() / inner as f64)
        })
        .collect::<Result<_>>()?;
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    })
}

/// Wall time of one sample of size `n`.
pub fn time_method(method: BenchMethod, n: usize, hurst: f64, reps: usize) -> Result<f64> {
    let grid = GridSpec::new(n, 1.0 / n as f64, n, hurst, 1.0)?;
    let mut seed = 0u64;
    match method {
        BenchMethod::Cholesky => median_seconds(reps, || {
            seed += 1;
            let l = cholesky_factor(&grid)?;
            black_box(cholesky_sample_with(&l, grid.eps(), seed));
            Ok(())
        }),
        BenchMethod::Circulant => median_seconds(reps, || {
            seed += 1;
            black_box(Embedding::new(&grid)?.sample_pair(seed));
            Ok(())
        }),
        BenchMethod::Tree => {
            let n_leaves = n.next_power_of_two();
            let params = TreeParams::uniform(n_leaves, 0.9, 0.1, 0.5)?;
            median_seconds(reps, || {
                seed += 1;
                black_box(tree_sample(&params, n, seed)?);
                Ok(())
            })
        }
        BenchMethod::Lightcone => {
            let lc = LightCone::with_config(&grid, NetworkConfig::default())?;
            median_seconds(reps, || {
                seed += 1;
                black_box(lc.sample(seed)?);
                Ok(())
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: BenchMethod,
    pub n: usize,
    pub median_seconds: f64,
}

pub fn run_bench(methods: &[BenchMethod], sizes: &[usize], hurst: f64, reps: usize) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &method in methods {
        for &n in sizes {
            rows.push(BenchRow {
                method,
                n,
                median_seconds: time_method(method, n, hurst, reps)?,
            });
        }
    }
    Ok(rows)
}

/// Log-log slope of time against `n` for one method; `None` with fewer
/// than two distinct sizes.
pub fn loglog_slope(rows: &[BenchRow], method: BenchMethod) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| ((r.n as f64).ln(), r.median_seconds.ln()))
        .collect();
    let distinct = pts.iter().any(|p| p.0 != pts[0].0);
    if pts.len() < 2 || !distinct {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(ols(&x, &y).slope)
}

/// CSV with header `method,n,median_seconds`.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,n,median_seconds\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.method.name(), r.n, r.median_seconds);
    }
    out
}

/// CSV with header `method,slope`; the slope is empty when undefined.
pub fn slope_csv(rows: &[BenchRow], methods: &[BenchMethod]) -> String {
    let mut out = String::from("method,slope\n");
    for &m in methods {
        let slope = loglog_slope(rows, m).map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{slope}", m.name());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_synthetic_cubic() {
        let rows: Vec<BenchRow> = [8usize, 16, 32]
            .iter()
            .map(|&n| BenchRow {
                method: BenchMethod::Cholesky,
                n,
                median_seconds: 1e-9 * (n as f64).powi(3),
            })
            .collect();
        assert!((loglog_slope(&rows, BenchMethod::Cholesky).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&rows, BenchMethod::Tree), None);
        assert_eq!(loglog_slope(&rows[..1], BenchMethod::Cholesky), None);
    }

    #[test]
    fn single_size_has_empty_slope() {
        let rows = run_bench(&[BenchMethod::Circulant], &[8], 0.7, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].median_seconds > 0.0);
        assert_eq!(slope_csv(&rows, &[BenchMethod::Circulant]), "method,slope\ncirculant,\n");
    }

    #[test]
    fn method_names_round_trip() {
        for m in [BenchMethod::Cholesky, BenchMethod::Circulant, BenchMethod::Tree, BenchMethod::Lightcone] {
            assert_eq!(m.name().parse::<BenchMethod>().unwrap(), m);
        }
        assert!("wavelet".parse::<BenchMethod>().is_err());
    }
}
