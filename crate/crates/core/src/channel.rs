//! The hash channel: collision probabilities, KL divergence and the code
//! length needed to tell a neighbor from a non-neighbor.
//!
//! "Capacity" here is the discrimination exponent
//! `D(Bernoulli(q_near) ‖ Bernoulli(q_far))` per code position, where
//! `q_near` and `q_far` are the expected similarity scores of a
//! Δ-neighbor and a zero-overlap item divided by `m`. Positions are treated
//! as independent uses of the channel.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::encoder::expected_similarity;
use crate::error::{invalid, Result, RewaError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelModel {
    pub l: u64,
    pub k: u64,
    pub m: u64,
    pub delta: u64,
    /// A shared witness always collides with itself.
    pub p_collide_given_shared: f64,
    /// Accidental collision probability `K/m`.
    pub p_collide_given_unshared: f64,
    pub q_near: f64,
    pub q_far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMethod {
    ExactKl,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityEstimate {
    pub delta: u64,
    pub bits_per_position: f64,
    pub method: CapacityMethod,
}

pub fn channel_params(l: u64, k: u64, m: u64, delta: u64) -> Result<ChannelModel> {
    if m <= k {
        return Err(RewaError::DegenerateChannel(format!(
            "m = {m} must exceed K = {k}"
        )));
    }
    let q_far = expected_similarity(l, 0, k, m)? / m as f64;
    let q_near = expected_similarity(l, delta, k, m)? / m as f64;
    if q_far >= 1.0 || q_near >= 1.0 {
        return Err(RewaError::DegenerateChannel(format!(
            "per-position collision probability reaches 1 (q_near = {q_near}, q_far = {q_far}) for L = {l}, K = {k}, m = {m}"
        )));
    }
    Ok(ChannelModel {
        l,
        k,
        m,
        delta,
        p_collide_given_shared: 1.0,
        p_collide_given_unshared: k as f64 / m as f64,
        q_near,
        q_far,
    })
}

/// `D(Bernoulli(p) ‖ Bernoulli(q))` in bits.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p = {p} is outside [0, 1]")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(RewaError::DegenerateChannel(format!(
            "reference probability q = {q} must lie strictly inside (0, 1)"
        )));
    }
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    let nats = term(p, q) + term(1.0 - p, 1.0 - q);
    Ok((nats / LN_2).max(0.0))
}

/// Second-order approximation `ε² / (2p(1−p))` of `D(p ‖ p+ε)`, in bits.
pub fn kl_quadratic(p: f64, eps: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p = {p} must lie strictly inside (0, 1)")));
    }
    let shifted = p + eps;
    if !(shifted > 0.0 && shifted < 1.0) {
        return Err(invalid(format!(
            "p + eps = {shifted} must lie strictly inside (0, 1)"
        )));
    }
    Ok(eps * eps / (2.0 * p * (1.0 - p) * LN_2))
}

pub fn capacity(model: &ChannelModel) -> Result<CapacityEstimate> {
    Ok(CapacityEstimate {
        delta: model.delta,
        bits_per_position: kl_bernoulli(model.q_near, model.q_far)?,
        method: CapacityMethod::ExactKl,
    })
}

pub fn quadratic_capacity(model: &ChannelModel) -> Result<CapacityEstimate> {
    Ok(CapacityEstimate {
        delta: model.delta,
        bits_per_position: kl_quadratic(model.q_far, model.q_near - model.q_far)?,
        method: CapacityMethod::Quadratic,
    })
}

/// `ceil((log2 N + log2(1/δ)) / C)`, never less than 1.
pub fn required_bits(n_items: u64, error_prob: f64, capacity_bits: f64) -> Result<u64> {
    if n_items == 0 {
        return Err(invalid("n_items must be positive"));
    }
    if !(error_prob > 0.0 && error_prob < 1.0) {
        return Err(invalid(format!(
            "error probability {error_prob} must lie in (0, 1)"
        )));
    }
    if !capacity_bits.is_finite() || capacity_bits <= 0.0 {
        return Err(RewaError::DegenerateChannel(format!(
            "capacity {capacity_bits} must be positive and finite"
        )));
    }
    let bits = ((n_items as f64).log2() + (1.0 / error_prob).log2()) / capacity_bits;
    Ok((bits.ceil() as u64).max(1))
}

/// Smallest code length `m` that is self-consistent with the capacity bound,
/// i.e. `m >= required_bits(N, δ, C(m))` where `C(m)` is the capacity of the
/// channel at length `m`. `m · C(m)` grows with `m`, so the predicate is
/// monotone and a doubling search followed by bisection finds the boundary.
///
/// Returns `None` when `delta == 0` (zero capacity) or no `m <= limit`
/// qualifies.
pub fn predicted_min_bits(
    n_items: u64,
    error_prob: f64,
    l: u64,
    k: u64,
    delta: u64,
    limit: u64,
) -> Result<Option<u64>> {
    if delta == 0 {
        return Ok(None);
    }
    let satisfied = |m: u64| -> Result<bool> {
        let model = match channel_params(l, k, m, delta) {
            Ok(model) => model,
            Err(RewaError::DegenerateChannel(_)) => return Ok(false),
            Err(e) => return Err(e),
        };
        let c = capacity(&model)?.bits_per_position;
        Ok(c > 0.0 && m >= required_bits(n_items, error_prob, c)?)
    };
    let mut hi = (k + 1).max(2);
    let mut lo = hi - 1;
    while !satisfied(hi)? {
        if hi >= limit {
            return Ok(None);
        }
        lo = hi;
        hi = (hi * 2).min(limit);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if satisfied(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}
