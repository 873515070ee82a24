use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Sampled increments `X_{t_1..t_N}` together with the cumulative path
/// `B_{t_k} = Σ_{j≤k} X_{t_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSeries {
    eps: f64,
    increments: Vec<f64>,
    path: Vec<f64>,
}

impl IncrementSeries {
    pub fn from_increments(eps: f64, increments: Vec<f64>) -> Self {
        let path = increments
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        Self {
            eps,
            increments,
            path,
        }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `path()[k-1] = B_{t_k}`.
    pub fn path(&self) -> &[f64] {
        &self.path
    }

    /// Time of the `k`-th increment, one-based.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.eps
    }

    /// Path endpoint `B_T`.
    pub fn endpoint(&self) -> f64 {
        self.path.last().copied().unwrap_or(0.0)
    }

    pub fn truncated(mut self, n: usize) -> Self {
        self.increments.truncate(n);
        self.path.truncate(n);
        self
    }

    /// Rows `k,t,increment,path` without a header.
    pub fn write_csv_rows(&self, prefix: Option<usize>, out: &mut String) {
        for (i, (x, b)) in self.increments.iter().zip(&self.path).enumerate() {
            let k = i + 1;
            if let Some(s) = prefix {
                let _ = write!(out, "{s},");
            }
            let _ = writeln!(out, "{k},{},{x},{b}", self.time(k));
        }
    }

    /// CSV with header `k,t,increment,path`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,t,increment,path\n");
        self.write_csv_rows(None, &mut out);
        out
    }
}
