//! Sweep configuration, execution and plot-ready output.
//!
//! A sweep varies one parameter (the planted near overlap or the number of
//! items), measures the smallest code length meeting the target error for
//! each value, and fits the scaling law for that axis:
//!
//! * `delta`: least squares of `log2 m_star` on `log2(L / gap)`.
//! * `n_items`: least squares of `m_star` on `log2 N`.
//!
//! Everything is a deterministic function of the configuration; the base
//! seed is expanded through [`crate::seed::derive_seed`].

use serde::{Deserialize, Serialize};

use crate::bounds::{fit_linear, fit_loglog, ScalingFit};
use crate::channel::predicted_min_bits;
use crate::error::{invalid, Result, RewaError};
use crate::ranking::{find_min_bits, generate_gap_dataset, ErrorEstimate};
use crate::seed::{derive_seed, STREAM_DATASET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Delta,
    NItems,
    None,
}

/// Flat key/value experiment description, stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_items: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub k_topk: usize,
    pub k_hashes: usize,
    pub delta_near: usize,
    pub delta_far: usize,
    pub target_error: f64,
    pub trials: u64,
    pub seed: u64,
    pub sweep_axis: SweepAxis,
    #[serde(default)]
    pub sweep_values: Vec<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| RewaError::Malformed(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `(axis value, n_items, delta_near)` for each row.
    fn row_params(&self) -> Vec<(usize, usize, usize)> {
        match self.sweep_axis {
            SweepAxis::Delta => self
                .sweep_values
                .iter()
                .map(|&d| (d, self.n_items, d))
                .collect(),
            SweepAxis::NItems => self
                .sweep_values
                .iter()
                .map(|&n| (n, n, self.delta_near))
                .collect(),
            SweepAxis::None => vec![(self.delta_near, self.n_items, self.delta_near)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.k_topk == 0 || self.k_hashes == 0 || self.trials == 0 {
            return Err(invalid("L, k_topk, k_hashes and trials must be positive"));
        }
        if !(self.target_error > 0.0 && self.target_error < 1.0) {
            return Err(invalid(format!(
                "target_error {} must lie in (0, 1)",
                self.target_error
            )));
        }
        if self.sweep_axis != SweepAxis::None && self.sweep_values.is_empty() {
            return Err(invalid("a sweep needs at least one value"));
        }
        for (_, n, near) in self.row_params() {
            if self.delta_far >= near || near > self.l {
                return Err(invalid(format!(
                    "need delta_far < delta_near <= L, got far = {}, near = {near}, L = {}",
                    self.delta_far, self.l
                )));
            }
            if self.k_topk >= n {
                return Err(invalid(format!(
                    "k_topk = {} must be below n_items = {n}",
                    self.k_topk
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: usize,
    pub n_items: usize,
    pub delta_near: usize,
    /// `None` when no probed code length met the target.
    pub m_star: Option<u64>,
    pub estimate: Option<ErrorEstimate>,
    pub predicted_lower_bound: Option<u64>,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
    pub fit: Option<ScalingFit>,
}

/// Upper limit of the predicted-bound search.
const PREDICTION_LIMIT: u64 = 1 << 40;

pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut rows = Vec::new();
    for (index, (axis_value, n_items, delta_near)) in config.row_params().into_iter().enumerate() {
        let dataset = generate_gap_dataset(
            n_items,
            config.l,
            delta_near,
            config.delta_far,
            config.k_topk,
            derive_seed(config.seed, STREAM_DATASET, index as u64 + 1),
        )?;
        let (m_star, estimate) = match find_min_bits(
            &dataset,
            config.k_hashes,
            config.target_error,
            config.trials,
            config.seed,
        ) {
            Ok(found) => (Some(found.m_star), Some(found.achieved_estimate)),
            Err(RewaError::SearchExhausted { .. }) => (None, None),
            Err(e) => return Err(e),
        };
        let predicted_lower_bound = predicted_min_bits(
            n_items as u64,
            config.target_error,
            config.l as u64,
            config.k_hashes as u64,
            (delta_near - config.delta_far) as u64,
            PREDICTION_LIMIT,
        )?;
        rows.push(SweepRow {
            axis_value,
            n_items,
            delta_near,
            m_star,
            estimate,
            predicted_lower_bound,
            trials: config.trials,
        });
    }
    let fit = fit_rows(config, &rows)?;
    Ok(SweepResult {
        config: config.clone(),
        rows,
        fit,
    })
}

fn fit_rows(config: &ExperimentConfig, rows: &[SweepRow]) -> Result<Option<ScalingFit>> {
    let measured = rows.iter().filter_map(|r| r.m_star.map(|m| (r, m as f64)));
    let points: Vec<(f64, f64)> = match config.sweep_axis {
        SweepAxis::Delta => measured
            .map(|(r, m)| {
                (
                    config.l as f64 / (r.delta_near - config.delta_far) as f64,
                    m,
                )
            })
            .collect(),
        SweepAxis::NItems => measured
            .map(|(r, m)| ((r.n_items as f64).log2(), m))
            .collect(),
        SweepAxis::None => return Ok(None),
    };
    if points.len() < 3 || points.iter().all(|p| p.0 == points[0].0) {
        return Ok(None);
    }
    match config.sweep_axis {
        SweepAxis::Delta => fit_loglog(&points).map(Some),
        _ => fit_linear(&points).map(Some),
    }
}

pub const SWEEP_CSV_HEADER: [&str; 7] = [
    "axis_value",
    "m_star",
    "error_point",
    "ci_low",
    "ci_high",
    "predicted_lower_bound",
    "trials",
];

/// Missing values (failed searches, unbounded predictions).
pub const NA: &str = "NA";

/// Formats a float as the shortest decimal string that parses back to the
/// same value.
pub fn format_float(x: f64) -> String {
    format!("{x}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| NA.to_string(), |v| v.to_string())
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER).expect("in-memory write");
    for row in &result.rows {
        let est = row.estimate;
        w.write_record([
            row.axis_value.to_string(),
            opt(row.m_star),
            opt(est.map(|e| format_float(e.point))),
            opt(est.map(|e| format_float(e.ci_low))),
            opt(est.map(|e| format_float(e.ci_high))),
            opt(row.predicted_lower_bound),
            row.trials.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn sweep_json(result: &SweepResult) -> String {
    serde_json::to_string_pretty(result).expect("sweep result serializes")
}
