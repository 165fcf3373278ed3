//! End-to-end verification criteria A1–A9.
//!
//! Each criterion returns a [`CriterionOutcome`]; [`run_suite`] runs all of
//! them. Thresholds are fixed here. The `quick` variant reduces trial counts
//! and sweep ranges (flagged in every affected outcome) but keeps every
//! threshold.

use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bounds::{rd_rate, rd_rate_asymptotic, spearman};
use crate::channel::{kl_bernoulli, kl_quadratic};
use crate::encoder::{collision_count, expected_similarity, HashFamily};
use crate::experiment::{run_sweep, sweep_csv, ExperimentConfig, SweepAxis, SweepResult};
use crate::ranking::trial_seed;
use crate::witness::{
    coupled_mutual_information, overlap, overlap_information, WitnessSet, WitnessUniverse,
};

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {} {} ({:.2}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub quick: bool,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            quick: false,
            seed: 20_251_016,
        }
    }
}

fn timed(
    id: &'static str,
    title: &'static str,
    f: impl FnOnce() -> (bool, String),
) -> CriterionOutcome {
    let start = Instant::now();
    let (passed, detail) = f();
    CriterionOutcome {
        id,
        title,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

pub fn run_suite(opts: SuiteOptions) -> Vec<CriterionOutcome> {
    let mut out = vec![a1_isomorphism(), a2_collision_model(opts)];
    let (a3, delta_sweep) = a3_delta_scaling(opts);
    out.push(a3);
    let (a4, n_sweep) = a4_log_n_scaling(opts);
    out.push(a4);
    out.push(a5_prediction_ordering(
        delta_sweep.as_ref(),
        n_sweep.as_ref(),
    ));
    out.push(a6_rate_distortion());
    out.push(a7_coupled_oracle());
    out.push(a8_kl_quadratic());
    out.push(a9_determinism(opts, delta_sweep.as_ref()));
    out
}

pub fn a1_isomorphism() -> CriterionOutcome {
    timed(
        "A1",
        "overlap information is increasing with the predicted slope",
        || {
            let mut worst = 0.0f64;
            for l in [8u64, 64, 512] {
                for delta in 0..l {
                    let lo = overlap_information(l, l, delta).expect("valid").bits;
                    let hi = overlap_information(l, l, delta + 1).expect("valid").bits;
                    if hi <= lo {
                        return (false, format!("not increasing at L = {l}, delta = {delta}"));
                    }
                    let rate = 1.0 / ((2 * l - delta) as f64 * LN_2);
                    worst = worst.max(((hi - lo) - rate).abs() / rate);
                }
            }
            (
                worst <= 0.10,
                format!("max relative derivative error {worst:.4} (limit 0.10)"),
            )
        },
    )
}

/// Sample mean and standard error of collision counts between a fixed
/// 32-witness set and a planted partner sharing `delta` witnesses.
pub fn collision_statistics(delta: u32, trials: u64, seed: u64) -> (f64, f64) {
    const L: u32 = 32;
    let universe = WitnessUniverse::new(2 * L).expect("non-empty");
    let a = WitnessSet::new(universe, 0..L).expect("in range");
    let b = WitnessSet::new(universe, (L - delta)..(2 * L - delta)).expect("in range");
    debug_assert_eq!(overlap(&a, &b).unwrap(), delta as usize);
    let (sum, sum_sq) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = HashFamily::new(4, 4096, trial_seed(seed, t)).expect("valid family");
            let c = collision_count(&a, &b, &f).expect("same universe") as f64;
            (c, c * c)
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    let n = trials as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Checks the empirical collision mean against `expected(L, Δ, K, m)` for
/// L = 32, K = 4, m = 4096 and Δ ∈ {0, 8, 16, 32}.
pub fn check_collision_model(
    trials: u64,
    seed: u64,
    expected: impl Fn(u64, u64, u64, u64) -> f64,
) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for delta in [0u32, 8, 16, 32] {
        let (mean, se) = collision_statistics(delta, trials, seed);
        let target = expected(32, delta as u64, 4, 4096);
        let z = (mean - target) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!(
            "Δ={delta}: mean {mean:.4} vs {target:.4} ({z:+.1} se)"
        ));
    }
    (ok, parts.join("; "))
}

/// Exact mean of `collision_count` under independent uniform positions:
/// the `KΔ` same-witness same-index pairs always collide and each of the
/// remaining `K²L² − KΔ` pairs collides with probability `1/m`.
pub fn exact_collision_mean(l: u64, delta: u64, k: u64, m: u64) -> f64 {
    let (l, delta, k, m) = (l as f64, delta as f64, k as f64, m as f64);
    k * delta + (k * k * l * l - k * delta) / m
}

pub fn a2_collision_model(opts: SuiteOptions) -> CriterionOutcome {
    let trials = if opts.quick { 2_000 } else { 10_000 };
    timed(
        "A2",
        "collision counts follow K·Δ + (K²L²/m)(1 − Δ/L)",
        || {
            let (ok, detail) = check_collision_model(trials, opts.seed, |l, d, k, m| {
                expected_similarity(l, d, k, m).expect("valid parameters")
            });
            let (_, exact) = check_collision_model(trials, opts.seed, exact_collision_mean);
            (
            ok,
            format!("{trials} trials; {detail} | against exact pair count KΔ + (K²L² − KΔ)/m: {exact}"),
        )
        },
    )
}

fn base_config(opts: SuiteOptions) -> ExperimentConfig {
    ExperimentConfig {
        n_items: 256,
        l: 64,
        k_topk: 4,
        k_hashes: 4,
        delta_near: 16,
        delta_far: 0,
        target_error: 0.1,
        trials: if opts.quick { 160 } else { 400 },
        seed: opts.seed,
        sweep_axis: SweepAxis::Delta,
        sweep_values: vec![4, 8, 16, 32],
    }
}

pub fn delta_sweep_config(opts: SuiteOptions) -> ExperimentConfig {
    base_config(opts)
}

pub fn n_sweep_config(opts: SuiteOptions) -> ExperimentConfig {
    let top = if opts.quick { 10 } else { 12 };
    ExperimentConfig {
        sweep_axis: SweepAxis::NItems,
        sweep_values: (6..=top).map(|e| 1usize << e).collect(),
        ..base_config(opts)
    }
}

fn quick_note(opts: SuiteOptions) -> &'static str {
    if opts.quick {
        " [quick: reduced trials/range]"
    } else {
        ""
    }
}

fn sweep_failure(e: crate::RewaError) -> (bool, String) {
    (false, format!("sweep failed: {e}"))
}

pub fn a3_delta_scaling(opts: SuiteOptions) -> (CriterionOutcome, Option<SweepResult>) {
    let mut result = None;
    let outcome = timed("A3", "m_star scales as (L/Δ)^2", || {
        let sweep = match run_sweep(&delta_sweep_config(opts)) {
            Ok(s) => s,
            Err(e) => return sweep_failure(e),
        };
        let m_stars: Vec<String> = sweep
            .rows
            .iter()
            .map(|r| format!("{:?}", r.m_star))
            .collect();
        let verdict = match &sweep.fit {
            Some(fit) => (
                (1.5..=2.5).contains(&fit.slope),
                format!(
                    "slope {:.3} (R² {:.4}, need [1.5, 2.5]); m_star by Δ 4/8/16/32: {}{}",
                    fit.slope,
                    fit.r_squared,
                    m_stars.join(", "),
                    quick_note(opts)
                ),
            ),
            None => (
                false,
                format!("too few successful rows to fit: {}", m_stars.join(", ")),
            ),
        };
        result = Some(sweep);
        verdict
    });
    (outcome, result)
}

pub fn a4_log_n_scaling(opts: SuiteOptions) -> (CriterionOutcome, Option<SweepResult>) {
    let mut result = None;
    let outcome = timed("A4", "m_star grows linearly in log2 N", || {
        let sweep = match run_sweep(&n_sweep_config(opts)) {
            Ok(s) => s,
            Err(e) => return sweep_failure(e),
        };
        let m_stars: Vec<String> = sweep
            .rows
            .iter()
            .map(|r| format!("{:?}", r.m_star))
            .collect();
        let verdict = match &sweep.fit {
            Some(fit) => (
                fit.r_squared >= 0.9 && fit.slope > 0.0,
                format!(
                    "slope {:.2} bits per doubling of N, R² {:.4} (need ≥ 0.9, slope > 0); m_star: {}{}",
                    fit.slope,
                    fit.r_squared,
                    m_stars.join(", "),
                    quick_note(opts)
                ),
            ),
            None => (false, format!("too few successful rows to fit: {}", m_stars.join(", "))),
        };
        result = Some(sweep);
        verdict
    });
    (outcome, result)
}

pub fn a5_prediction_ordering(
    delta_sweep: Option<&SweepResult>,
    n_sweep: Option<&SweepResult>,
) -> CriterionOutcome {
    timed(
        "A5",
        "capacity predictions rank configurations like measurements",
        || {
            let (Some(a), Some(b)) = (delta_sweep, n_sweep) else {
                return (false, "A3/A4 sweeps unavailable".into());
            };
            let pairs: Vec<(f64, f64)> = a
                .rows
                .iter()
                .chain(&b.rows)
                .filter_map(|r| Some((r.predicted_lower_bound? as f64, r.m_star? as f64)))
                .collect();
            let total = a.rows.len() + b.rows.len();
            if pairs.len() < total {
                return (
                    false,
                    format!(
                        "only {} of {total} configurations have both values",
                        pairs.len()
                    ),
                );
            }
            let (predicted, measured): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            match spearman(&predicted, &measured) {
                Ok(rho) => (
                    rho >= 0.9,
                    format!("Spearman {rho:.4} over {total} configurations (need ≥ 0.9)"),
                ),
                Err(e) => (false, e.to_string()),
            }
        },
    )
}

pub fn a6_rate_distortion() -> CriterionOutcome {
    timed("A6", "rate-distortion arithmetic", || {
        let exact = rd_rate(4, 2, 0.0, 1).expect("valid").rate_bits;
        let err = (exact - 6f64.log2()).abs();
        if err > 1e-9 {
            return (false, format!("rd_rate(4,2,0,1) = {exact}, off by {err}"));
        }
        for (n, k) in [(4u64, 2u64), (64, 8), (4096, 32)] {
            let mut prev = f64::INFINITY;
            for i in 0..100 {
                let r = rd_rate(n, k, i as f64 / 100.0, 1).expect("valid").rate_bits;
                if r > prev {
                    return (
                        false,
                        format!("rd_rate({n},{k}) increases at eps = {}", i as f64 / 100.0),
                    );
                }
                prev = r;
            }
        }
        let mut ratios = Vec::new();
        for k in [2u64, 8, 32] {
            let ratio = rd_rate(4096, k, 0.0, 1).expect("valid").rate_bits
                / rd_rate_asymptotic(4096, k, 1).expect("valid");
            if !(0.8..=1.6).contains(&ratio) {
                return (
                    false,
                    format!("exact/asymptotic ratio {ratio:.4} at k = {k}"),
                );
            }
            ratios.push(format!("{ratio:.4}"));
        }
        (
            true,
            format!(
                "log2 6 error {err:.1e}; monotone on 0.01 grid; exact/asymptotic ratios {}",
                ratios.join(", ")
            ),
        )
    })
}

pub fn a7_coupled_oracle() -> CriterionOutcome {
    timed("A7", "coupled mutual information oracle", || {
        let u = WitnessUniverse::new(64).expect("non-empty");
        let set = |r: std::ops::Range<u32>| WitnessSet::new(u, r).expect("in range");
        let disjoint = coupled_mutual_information(&set(0..8), &set(8..16)).expect("valid");
        if disjoint.abs() > 1e-9 {
            return (false, format!("disjoint sets give {disjoint}"));
        }
        for size in [1u32, 4, 8, 13] {
            let s = set(0..size);
            let mi = coupled_mutual_information(&s, &s).expect("valid");
            if (mi - (size as f64).log2()).abs() > 1e-9 {
                return (false, format!("identical sets of size {size} give {mi}"));
            }
        }
        let a = set(0..8);
        let mut values = Vec::new();
        for delta in 0..=8u32 {
            values.push(
                coupled_mutual_information(&a, &set((8 - delta)..(16 - delta))).expect("valid"),
            );
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return (false, format!("not nondecreasing: {values:?}"));
        }
        (
            true,
            format!(
                "0 for disjoint, log2|A| for identical, nondecreasing over Δ = 0..8 (max {:.4})",
                values[8]
            ),
        )
    })
}

pub fn a8_kl_quadratic() -> CriterionOutcome {
    timed("A8", "quadratic KL approximation within 25%", || {
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for p in [1e-3, 1e-2, 1e-1] {
            for ratio in [0.1, 0.25, 0.5] {
                let eps = ratio * p;
                if eps >= p / 2.0 {
                    continue;
                }
                let exact = kl_bernoulli(p + eps, p).expect("valid");
                let quad = kl_quadratic(p, eps).expect("valid");
                worst = worst.max((quad - exact).abs() / exact);
                checked += 1;
            }
        }
        (
            worst <= 0.25,
            format!("max relative error {worst:.4} over {checked} grid points with ε < p/2"),
        )
    })
}

fn sweep_csv_with_threads(config: &ExperimentConfig, threads: usize) -> Result<String, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| run_sweep(config))
        .map(|r| sweep_csv(&r))
        .map_err(|e| e.to_string())
}

pub fn a9_determinism(opts: SuiteOptions, reference: Option<&SweepResult>) -> CriterionOutcome {
    timed(
        "A9",
        "sweep CSV is byte-identical across runs and thread counts",
        || {
            let config = delta_sweep_config(opts);
            let runs = [1usize, 1, 8].map(|t| sweep_csv_with_threads(&config, t));
            let mut csvs = Vec::new();
            for (threads, run) in [1usize, 1, 8].iter().zip(runs) {
                match run {
                    Ok(csv) => csvs.push(csv),
                    Err(e) => return (false, format!("run with {threads} threads failed: {e}")),
                }
            }
            if let Some(r) = reference {
                csvs.push(sweep_csv(r));
            }
            let identical = csvs.windows(2).all(|w| w[0] == w[1]);
            (
                identical,
                format!(
                    "{} CSVs ({} bytes) from runs with 1, 1 and 8 threads{}",
                    csvs.len(),
                    csvs[0].len(),
                    if reference.is_some() {
                        " plus the A3 run"
                    } else {
                        ""
                    }
                ),
            )
        },
    )
}
