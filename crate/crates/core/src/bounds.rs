//! Closed-form bounds: binary entropy, binomial coefficients, the ranking
//! rate-distortion curve and the converse code-length bound, plus the
//! regressions used to read scaling exponents off experiments.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::channel::required_bits;
use crate::error::{invalid, Result};

/// Largest `n` evaluated with exact integer arithmetic; `C(64, 32)` still fits
/// in a `u64`, so `u128` leaves headroom for the intermediate products.
pub const EXACT_BINOMIAL_MAX_N: u64 = 64;

/// Below this distance from 1 the distortion budget is treated as saturated.
const EPS_SATURATION: f64 = 1e-12;

/// `−ε log2 ε − (1−ε) log2(1−ε)`.
pub fn binary_entropy(eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(invalid(format!("eps = {eps} is outside [0, 1]")));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(eps) + term(1.0 - eps))
}

fn exact_binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    // Each partial product c·(n−i)/(i+1) is itself a binomial coefficient.
    (0..k).fold(1u128, |c, i| c * (n - i) as u128 / (i + 1) as u128)
}

fn log_binomial_gamma(n: u64, k: u64) -> f64 {
    let (n, k) = (n as f64, k as f64);
    (ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)) / std::f64::consts::LN_2
}

/// `log2 C(n, k)`: exact integer arithmetic up to [`EXACT_BINOMIAL_MAX_N`],
/// log-gamma beyond.
pub fn log_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(invalid(format!("k = {k} exceeds n = {n}")));
    }
    if n <= EXACT_BINOMIAL_MAX_N {
        Ok((exact_binomial(n, k) as f64).log2())
    } else {
        Ok(log_binomial_gamma(n, k).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RdPoint {
    pub n: u64,
    pub k: u64,
    pub eps: f64,
    pub v: u64,
    /// `max(0, (log2 C(n,k) − H(min(ε, 1/2))) / v)`.
    pub rate_bits: f64,
    /// `max(0, log2 C(n,k) · (1 − H(ε)) / v)`, the converse written with the
    /// entropy term scaled by the source entropy.
    pub rate_proof_variant_bits: f64,
}

pub fn rd_rate(n: u64, k: u64, eps: f64, v: u64) -> Result<RdPoint> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if v == 0 {
        return Err(invalid("v must be positive"));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(invalid(format!("eps = {eps} is outside [0, 1]")));
    }
    let (rate_bits, rate_proof_variant_bits) = if eps >= 1.0 - EPS_SATURATION {
        (0.0, 0.0)
    } else {
        let source = log_binomial(n, k)?;
        // A looser distortion budget never costs more bits, so the entropy
        // term stops growing at ε = 1/2.
        let h = binary_entropy(eps.min(0.5))?;
        (
            ((source - h) / v as f64).max(0.0),
            (source * (1.0 - h) / v as f64).max(0.0),
        )
    };
    Ok(RdPoint {
        n,
        k,
        eps,
        v,
        rate_bits,
        rate_proof_variant_bits,
    })
}

/// `k log2(n/k) / v`.
pub fn rd_rate_asymptotic(n: u64, k: u64, v: u64) -> Result<f64> {
    if k == 0 || k > n || v == 0 {
        return Err(invalid(format!(
            "need 1 <= k <= n and v >= 1, got n = {n}, k = {k}, v = {v}"
        )));
    }
    Ok(k as f64 * (n as f64 / k as f64).log2() / v as f64)
}

/// Converse bound `ceil(log2(N/δ) / C)`. Shares its arithmetic with
/// [`required_bits`].
pub fn capacity_lower_bound(n_items: u64, error_prob: f64, capacity_bits: f64) -> Result<u64> {
    required_bits(n_items, error_prob, capacity_bits)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() < 3 {
        return Err(invalid(format!(
            "a fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(invalid("all x values are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok((slope, intercept, r_squared))
}

/// Ordinary least squares on `(log2 x, log2 y)`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(invalid(format!(
            "log-log fit needs positive coordinates, got ({x}, {y})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys)?;
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

pub fn fit_linear(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys)?;
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid(
            "spearman needs two equally long series of at least 2 values",
        ));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(invalid("spearman is undefined for a constant series"));
    }
    Ok(cov / (vx * vy).sqrt())
}
