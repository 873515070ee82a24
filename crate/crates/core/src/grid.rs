//! Discretisation of real time and virtual time.
//!
//! Real time is uniform, `t_k = k·eps`. Virtual time is uniform in its square,
//! `tau_n = sqrt(n·eps²) = eps·sqrt(n)`, so every level of the light-cone
//! network sits one `eps²` further along the contraction axis than the last.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Validated grid parameters shared by every sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n_steps: usize,
    eps: f64,
    depth: usize,
    hurst: f64,
    sigma: f64,
}

impl GridSpec {
    /// Builds a grid, rejecting any parameter outside its domain.
    pub fn new(n_steps: usize, eps: f64, depth: usize, hurst: f64, sigma: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(domain("n_steps must be positive"));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(domain(format!("eps must be finite and positive, got {eps}")));
        }
        if !(hurst.is_finite() && hurst > 0.0 && hurst < 1.0) {
            return Err(domain(format!(
                "hurst must lie in the open interval (0, 1), got {hurst}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(domain(format!("sigma must be finite and positive, got {sigma}")));
        }
        if depth < n_steps {
            return Err(domain(format!(
                "depth {depth} is shallower than the sample length {n_steps}"
            )));
        }
        Ok(Self {
            n_steps,
            eps,
            depth,
            hurst,
            sigma,
        })
    }

    /// Grid with the default circuit depth `n_steps²`.
    pub fn with_default_depth(n_steps: usize, eps: f64, hurst: f64, sigma: f64) -> Result<Self> {
        Self::new(n_steps, eps, default_depth(n_steps), hurst, sigma)
    }

    /// Same grid with a different circuit depth.
    pub fn with_depth(&self, depth: usize) -> Result<Self> {
        Self::new(self.n_steps, self.eps, depth, self.hurst, self.sigma)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `T = n_steps · eps`.
    pub fn horizon(&self) -> f64 {
        self.real_time(self.n_steps)
    }

    pub fn real_time(&self, k: usize) -> f64 {
        k as f64 * self.eps
    }

    pub fn virtual_time(&self, n: usize) -> f64 {
        self.eps * (n as f64).sqrt()
    }
}

/// Depth used when none is given: `n²`, so that `n²/depth` stays bounded.
pub fn default_depth(n_steps: usize) -> usize {
    n_steps.saturating_mul(n_steps)
}

/// Convenience constructor mirroring [`GridSpec::new`].
pub fn make_grid(n_steps: usize, eps: f64, depth: usize, hurst: f64, sigma: f64) -> Result<GridSpec> {
    GridSpec::new(n_steps, eps, depth, hurst, sigma)
}
