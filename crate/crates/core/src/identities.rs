//! Numerical checks of the identities behind the light-cone covariance.

use crate::error::{domain, Result};
use crate::special::{binomial_u128, gamma, gamma_lr};

/// Largest `q` for which `C(2q, q)` and all products fit in 128 bits.
pub const VANDERMONDE_MAX_Q: u64 = 60;

/// Terms summed one by one before the gamma-limit tail is integrated.
const GAMMA_LIMIT_DIRECT_TERMS: u64 = 1 << 24;

/// Both sides of `Σ_k C(q, k)·C(q, k−n) = C(2q, q−n)` in exact integers.
pub fn verify_vandermonde(q: u64, n: u64) -> Result<(u128, u128)> {
    if n > q || q > VANDERMONDE_MAX_Q {
        return Err(domain(format!(
            "vandermonde check needs 0 ≤ n ≤ q ≤ {VANDERMONDE_MAX_Q}, got q={q} n={n}"
        )));
    }
    let overflow = || domain("binomial overflow");
    let mut lhs: u128 = 0;
    for k in n..=q {
        let a = binomial_u128(q, k).ok_or_else(overflow)?;
        let b = binomial_u128(q, k - n).ok_or_else(overflow)?;
        lhs = lhs.checked_add(a.checked_mul(b).ok_or_else(overflow)?).ok_or_else(overflow)?;
    }
    let rhs = binomial_u128(2 * q, q - n).ok_or_else(overflow)?;
    Ok((lhs, rhs))
}

/// `(C(2q, q−n)/C(2q, q), exp(−n²/q))`.
///
/// The exact ratio is the telescoped product `Π_{i=1..n} (q−n+i)/(q+i)`.
pub fn verify_stirling_ratio(q: u64, n: u64) -> Result<(f64, f64)> {
    if q == 0 || n > q {
        return Err(domain(format!("stirling ratio needs 0 ≤ n ≤ q, q ≥ 1, got q={q} n={n}")));
    }
    let qf = q as f64;
    let nf = n as f64;
    let exact = (1..=n).fold(1.0, |acc, i| acc * ((q - n + i) as f64 / (q + i) as f64));
    Ok((exact, (-nf * nf / qf).exp()))
}

/// `Σ_{q=n}^{depth} n^{−2}·exp(−n²/q)·(q/n²)^{H−2}`, which tends to `Γ(1−H)`.
///
/// Terms beyond `2^24` are replaced by the midpoint integral, which in
/// `v = n²/q` is an incomplete gamma integral of `e^{−v} v^{−H}`.
pub fn verify_gamma_limit(n: u64, depth: u64, hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(domain(format!("hurst must lie in (0, 1), got {hurst}")));
    }
    if n == 0 {
        return Err(domain("n must be positive"));
    }
    let n2 = (n as f64) * (n as f64);
    if (depth as f64) < n2 {
        return Err(domain(format!("depth {depth} is below n² = {n2}")));
    }
    let term = |q: f64| (-n2 / q).exp() * (q / n2).powf(hurst - 2.0) / n2;
    let direct_end = depth.min(n.saturating_add(GAMMA_LIMIT_DIRECT_TERMS - 1));
    let mut sum = 0.0;
    let mut q = n;
    while q <= direct_end {
        sum += term(q as f64);
        q += 1;
    }
    if direct_end < depth {
        // ∫_{a}^{b} n^{-2} e^{-n²/q} (q/n²)^{H−2} dq = ∫_{n²/b}^{n²/a} e^{-v} v^{-H} dv
        let a = direct_end as f64 + 0.5;
        let b = depth as f64 + 0.5;
        let s = 1.0 - hurst;
        let tail = gamma(s) * (gamma_lr(s, n2 / a) - gamma_lr(s, n2 / b));
        sum += tail;
    }
    Ok(sum)
}
