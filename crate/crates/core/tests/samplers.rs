use fraclattice::baseline::{cholesky_factor, cholesky_sample_with, Embedding};
use fraclattice::rng::derive_seed;
use fraclattice::stats::{
    empirical_cov, ks_two_sample, mean_se, monte_carlo_cov, stochastic_integral, structure_function,
};
use fraclattice::{
    increment_cov_matrix, path_cov_matrix, tree_model_cov, tree_sample, GridSpec, IncrementSeries, LightCone,
    TreeParams,
};
use proptest::prelude::*;

const Z: f64 = 4.5;

#[test]
fn lightcone_draws_match_their_exact_covariance() {
    let g = GridSpec::new(8, 0.25, 64, 0.75, 1.2).unwrap();
    let lc = LightCone::new(&g).unwrap();
    let model = lc.model_cov().unwrap();
    let mc = monte_carlo_cov(8, 20_000, |i| Ok(lc.sample(derive_seed(3, i))?.increments().to_vec())).unwrap();
    let z = mc.max_z(&model);
    assert!(z < Z, "max |z| = {z}");
}

#[test]
fn tree_draws_match_their_exact_covariance() {
    let params = TreeParams::uniform(16, 0.8, 0.15, 0.6).unwrap();
    let model = tree_model_cov(&params).unwrap();
    let mc = monte_carlo_cov(16, 20_000, |i| Ok(tree_sample(&params, 16, derive_seed(5, i))?.increments().to_vec()))
        .unwrap();
    let z = mc.max_z(&model);
    assert!(z < Z, "max |z| = {z}");
}

#[test]
fn circulant_and_cholesky_endpoints_share_a_law() {
    let g = GridSpec::new(40, 0.1, 40, 0.35, 1.0).unwrap();
    let l = cholesky_factor(&g).unwrap();
    let emb = Embedding::new(&g).unwrap();
    let a: Vec<f64> = (0..4000)
        .map(|i| cholesky_sample_with(&l, g.eps(), derive_seed(1, i)).endpoint())
        .collect();
    let b: Vec<f64> = (0..2000)
        .flat_map(|i| {
            let (re, im) = emb.sample_pair(derive_seed(2, i));
            [re.endpoint(), im.endpoint()]
        })
        .collect();
    let ks = ks_two_sample(&a, &b).unwrap();
    assert!(ks.p_value > 1e-3, "D = {} p = {}", ks.statistic, ks.p_value);
}

#[test]
fn circulant_pair_halves_are_uncorrelated() {
    let g = GridSpec::new(16, 1.0, 16, 0.8, 1.0).unwrap();
    let emb = Embedding::new(&g).unwrap();
    let prods: Vec<f64> = (0..20_000)
        .map(|i| {
            let (re, im) = emb.sample_pair(derive_seed(9, i));
            re.endpoint() * im.endpoint()
        })
        .collect();
    let (m, se) = mean_se(&prods);
    assert!(m.abs() < Z * se, "{m} ± {se}");
}

/// `Σ f(t_j)ΔX_j` is centred Gaussian with variance `fᵀ C f`, where `C` is
/// the increment covariance.
#[test]
fn stieltjes_sums_have_quadratic_form_variance() {
    let g = GridSpec::new(32, 1.0 / 32.0, 32, 0.7, 1.0).unwrap();
    let f = |t: f64| (3.0 * t).cos() + t;
    let cov = increment_cov_matrix(&g);
    let fv: Vec<f64> = (1..=32).map(|j| f(g.real_time(j))).collect();
    let mut want = 0.0;
    for i in 0..32 {
        for j in 0..32 {
            want += fv[i] * fv[j] * cov.get(i, j);
        }
    }
    let l = cholesky_factor(&g).unwrap();
    let sq: Vec<f64> = (0..40_000)
        .map(|i| stochastic_integral(&cholesky_sample_with(&l, g.eps(), derive_seed(4, i)), f).powi(2))
        .collect();
    let (m, se) = mean_se(&sq);
    assert!((m - want).abs() < Z * se, "{m} ± {se} vs {want}");
}

#[test]
fn brownian_structure_function_is_linear_in_the_lag() {
    let sigma = 1.5;
    let g = GridSpec::new(64, 0.5, 64, 0.5, sigma).unwrap();
    let emb = Embedding::new(&g).unwrap();
    let paths: Vec<IncrementSeries> = (0..1500)
        .flat_map(|i| {
            let (a, b) = emb.sample_pair(derive_seed(8, i));
            [a, b]
        })
        .collect();
    let lags = [1, 2, 4, 8];
    for (&lag, (s, se)) in lags.iter().zip(structure_function(&paths, 2.0, &lags).unwrap()) {
        let want = sigma * sigma * lag as f64 * g.eps();
        assert!((s - want).abs() < Z * se, "lag {lag}: {s} ± {se} vs {want}");
    }
}

#[test]
fn empirical_path_covariance_of_cholesky_draws() {
    let g = GridSpec::new(12, 1.0 / 12.0, 12, 0.25, 1.0).unwrap();
    let l = cholesky_factor(&g).unwrap();
    let exact = path_cov_matrix(&g);
    let mc = monte_carlo_cov(12, 20_000, |i| Ok(cholesky_sample_with(&l, g.eps(), derive_seed(6, i)).path().to_vec()))
        .unwrap();
    assert!(mc.max_z(&exact) < Z);
    // the batch estimator agrees with the streaming one
    let draws: Vec<IncrementSeries> = (0..500).map(|i| cholesky_sample_with(&l, g.eps(), derive_seed(6, i))).collect();
    let batch = empirical_cov(&draws).unwrap();
    let stream = monte_carlo_cov(12, 500, |i| Ok(draws[i as usize].increments().to_vec())).unwrap();
    for i in 0..12 {
        for j in 0..12 {
            assert!((batch.cov.get(i, j) - stream.cov.get(i, j)).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recursion_equals_weighted_noise_sum(
        n in 1usize..7,
        extra in 0usize..8,
        hurst in 0.51f64..0.99,
        eps in 0.05f64..3.0,
        seed in any::<u64>(),
    ) {
        let g = GridSpec::new(n, eps, n + extra, hurst, 1.0).unwrap();
        let lc = LightCone::new(&g).unwrap();
        let noise = lc.draw_noise(seed).unwrap();
        let rec = lc.sample_from_noise(&noise).unwrap();
        let closed = lc.reconstruct(&lc.weight_table().unwrap(), &noise);
        for (a, b) in rec.increments().iter().zip(&closed) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn tree_covariance_is_symmetric_psd(
        height in 0u32..6,
        pass in -1.5f64..1.5,
        mix in -0.8f64..0.8,
        noise in 0.01f64..2.0,
    ) {
        let params = TreeParams::uniform(1 << height, pass, mix, noise).unwrap();
        let c = tree_model_cov(&params).unwrap();
        let n = c.dim();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(c.get(i, j), c.get(j, i));
            }
        }
        let (lo, hi) = c.eigen_range();
        prop_assert!(lo >= -1e-9 * hi.max(1.0));
    }

    #[test]
    fn tree_params_survive_json(pass in -2.0f64..2.0, mix in -1.0f64..1.0, noise in 0.0f64..3.0) {
        let params = TreeParams::uniform(8, pass, mix, noise).unwrap();
        let back = TreeParams::from_json(&params.to_json()).unwrap();
        prop_assert_eq!(back, params);
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(seed in any::<u64>()) {
        let g = GridSpec::new(6, 1.0, 10, 0.7, 1.0).unwrap();
        let lc = LightCone::new(&g).unwrap();
        prop_assert_eq!(lc.sample(seed).unwrap(), lc.sample(seed).unwrap());
        let emb = Embedding::new(&g).unwrap();
        prop_assert_eq!(emb.sample_pair(seed), emb.sample_pair(seed));
    }
}
