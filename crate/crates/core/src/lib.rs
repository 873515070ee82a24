//! Fractional Brownian motion on a discrete time grid, sampled through a
//! light-cone network of Gaussian conditional probabilities, with exact
//! baselines, a multifractal extension, a tree-shaped variant and the
//! statistics used to check them.

pub mod baseline;
pub mod bench;
pub mod covariance;
pub mod error;
pub mod grid;
pub mod identities;
pub mod lightcone;
pub mod multifractal;
pub mod rng;
pub mod series;
pub mod special;
pub mod stats;
pub mod tree;

pub use baseline::{circulant_sample, circulant_sample_pair, cholesky_sample};
pub use covariance::{
    increment_cov, increment_cov_matrix, path_cov, path_cov_matrix, truncation_error, CovarianceMatrix,
};
pub use error::{Error, Result};
pub use grid::{make_grid, GridSpec};
pub use identities::{verify_gamma_limit, verify_stirling_ratio, verify_vandermonde};
pub use lightcone::{
    coeff_table, model_cov, sample_increments, BaseNoise, CoefficientTable, LightCone, NetworkConfig, NoiseField,
    TopNoise, WeightTable,
};
pub use multifractal::{
    binomial_cascade_measure, moment_scaling_check, sample_multifractal_increments, sample_multiplier_path,
    MultifractalSampler, MultiplierKind, MultiplierPath, MultiplierProcess,
};
pub use series::IncrementSeries;
pub use tree::{calibrate, hurst_fit_from_tree, tree_model_cov, tree_sample, CalibrationReport, TreeLayerParams, TreeParams};

/// Library version, recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
