use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use rewa_core::acceptance::{run_suite, SuiteOptions};
use rewa_core::bounds::{rd_rate, rd_rate_asymptotic};
use rewa_core::channel::{capacity, channel_params, quadratic_capacity, required_bits};
use rewa_core::experiment::{format_float, run_sweep, sweep_csv, sweep_json, ExperimentConfig, NA};
use rewa_core::witness::{
    coupled_mutual_information, overlap, overlap_information, WitnessSet, WitnessUniverse,
};

use crate::{CapacityArgs, Cli, Command, MiArgs, RdCurveArgs, SweepArgs};

/// Largest set size for which the coupled oracle's dense joint table is built.
const MAX_ORACLE_SIZE: u64 = 2048;

pub fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Mi(args) => emit(cli, &mi(cli, args)?),
        Command::Capacity(args) => emit(cli, &capacity_table(cli, args)?),
        Command::Sweep(args) => sweep(cli, args),
        Command::RdCurve(args) => emit(cli, &rd_curve(cli, args)?),
        Command::Verify => verify(cli),
    }
}

fn emit(cli: &Cli, text: &str) -> Result<ExitCode> {
    match &cli.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
struct MiReport {
    size_a: u64,
    size_b: u64,
    delta: u64,
    jaccard: f64,
    closed_form_bits: f64,
    coupled_bits: Option<f64>,
    rate_bits_per_witness: f64,
    note: Option<String>,
}

/// Reads witness names from two files and maps them onto a shared universe.
fn read_witness_files(a: &Path, b: &Path) -> Result<(WitnessSet, WitnessSet)> {
    let mut ids = BTreeMap::new();
    let mut lists = Vec::new();
    for path in [a, b] {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let names: Vec<String> = text
            .lines()
            .map(|line| line.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace)
            .map(str::to_owned)
            .collect();
        if names.is_empty() {
            bail!("{}: no witnesses", path.display());
        }
        lists.push(names);
    }
    for name in lists.iter().flatten() {
        let next = ids.len() as u32;
        ids.entry(name.clone()).or_insert(next);
    }
    let universe = WitnessUniverse::new(ids.len() as u32)?;
    let set = |names: &[String]| WitnessSet::new(universe, names.iter().map(|n| ids[n]));
    Ok((set(&lists[0])?, set(&lists[1])?))
}

fn mi(cli: &Cli, args: &MiArgs) -> Result<String> {
    let (a, b) = match (&args.file_a, &args.file_b) {
        (Some(fa), Some(fb)) => read_witness_files(fa, fb)?,
        _ => {
            let (sa, sb, d) = (
                args.size_a.unwrap(),
                args.size_b.unwrap(),
                args.delta.unwrap(),
            );
            // Validates sizes and overlap before any allocation.
            overlap_information(sa, sb, d)?;
            if sa.max(sb) > MAX_ORACLE_SIZE {
                return Ok(render_mi(cli, sized_report(sa, sb, d, None)?));
            }
            let universe = WitnessUniverse::new((sa + sb - d) as u32)?;
            let a = WitnessSet::new(universe, 0..sa as u32)?;
            let b = WitnessSet::new(universe, (sa - d) as u32..(sa + sb - d) as u32)?;
            (a, b)
        }
    };
    let (sa, sb, d) = (a.len() as u64, b.len() as u64, overlap(&a, &b)? as u64);
    let coupled = if sa.max(sb) > MAX_ORACLE_SIZE {
        None
    } else {
        Some(coupled_mutual_information(&a, &b)?)
    };
    Ok(render_mi(cli, sized_report(sa, sb, d, coupled)?))
}

fn sized_report(sa: u64, sb: u64, d: u64, coupled: Option<f64>) -> Result<MiReport> {
    let closed = overlap_information(sa, sb, d)?.bits;
    let note = match coupled {
        None => Some(format!("coupled oracle skipped above {MAX_ORACLE_SIZE} witnesses per set")),
        Some(c) if (c - closed).abs() > 1e-9 => Some(format!(
            "closed form and coupled oracle differ by {} bits; the closed form takes the joint entropy to be log2 of the union size",
            format_float(closed - c)
        )),
        Some(_) => None,
    };
    Ok(MiReport {
        size_a: sa,
        size_b: sb,
        delta: d,
        jaccard: d as f64 / (sa + sb - d) as f64,
        closed_form_bits: closed,
        coupled_bits: coupled,
        // d/dΔ of log2(|A||B| / (|A| + |B| − Δ)).
        rate_bits_per_witness: 1.0 / ((sa + sb - d) as f64 * std::f64::consts::LN_2),
        note,
    })
}

fn render_mi(cli: &Cli, r: MiReport) -> String {
    if cli.json {
        return to_json(&r);
    }
    let mut s = String::new();
    writeln!(s, "size_a: {}", r.size_a).unwrap();
    writeln!(s, "size_b: {}", r.size_b).unwrap();
    writeln!(s, "overlap: {}", r.delta).unwrap();
    writeln!(s, "jaccard: {}", format_float(r.jaccard)).unwrap();
    writeln!(s, "closed_form_bits: {}", format_float(r.closed_form_bits)).unwrap();
    writeln!(
        s,
        "coupled_bits: {}",
        r.coupled_bits.map_or(NA.to_string(), format_float)
    )
    .unwrap();
    writeln!(
        s,
        "rate_bits_per_witness: {}",
        format_float(r.rate_bits_per_witness)
    )
    .unwrap();
    if let Some(note) = r.note {
        writeln!(s, "note: {note}").unwrap();
    }
    s
}

#[derive(Debug, Serialize)]
struct CapacityRow {
    delta: u64,
    q_near: f64,
    q_far: f64,
    capacity_bits: f64,
    quadratic_bits: f64,
    /// `None` when the capacity is zero.
    required_bits: Option<u64>,
    /// Capacity relative to the row with half the overlap, when listed.
    ratio_to_half_delta: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CapacityReport {
    l: u64,
    k: u64,
    m: u64,
    n_items: u64,
    error: f64,
    rows: Vec<CapacityRow>,
}

/// Printed in the required-bits column when the capacity is zero.
const INFINITE: &str = "∞";

fn capacity_table(cli: &Cli, args: &CapacityArgs) -> Result<String> {
    if !(args.error > 0.0 && args.error < 1.0) {
        bail!("--error must lie in (0, 1), got {}", args.error);
    }
    if args.n_items == 0 {
        bail!("--n-items must be positive");
    }
    let mut by_delta = BTreeMap::new();
    let mut rows = Vec::new();
    for &delta in &args.deltas {
        let model = channel_params(args.l, args.k, args.m, delta)?;
        let c = capacity(&model)?.bits_per_position;
        let required = if c > 0.0 {
            Some(required_bits(args.n_items, args.error, c)?)
        } else {
            None
        };
        by_delta.insert(delta, c);
        rows.push(CapacityRow {
            delta,
            q_near: model.q_near,
            q_far: model.q_far,
            capacity_bits: c,
            quadratic_bits: quadratic_capacity(&model)?.bits_per_position,
            required_bits: required,
            ratio_to_half_delta: None,
        });
    }
    for row in &mut rows {
        if row.delta > 0 && row.delta % 2 == 0 {
            row.ratio_to_half_delta = by_delta
                .get(&(row.delta / 2))
                .filter(|&&half| half > 0.0)
                .map(|half| row.capacity_bits / half);
        }
    }
    let report = CapacityReport {
        l: args.l,
        k: args.k,
        m: args.m,
        n_items: args.n_items,
        error: args.error,
        rows,
    };
    if cli.json {
        return Ok(to_json(&report));
    }
    let mut s = String::from(
        "delta,q_near,q_far,capacity_bits,quadratic_bits,required_bits,ratio_to_half_delta\n",
    );
    for r in &report.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.delta,
            format_float(r.q_near),
            format_float(r.q_far),
            format_float(r.capacity_bits),
            format_float(r.quadratic_bits),
            r.required_bits
                .map_or(INFINITE.to_string(), |b| b.to_string()),
            r.ratio_to_half_delta.map_or(NA.to_string(), format_float),
        )
        .unwrap();
    }
    Ok(s)
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = args.threads {
        if threads == 0 {
            bail!("--threads must be positive");
        }
        pool = pool.num_threads(threads);
    }
    let result = pool.build()?.install(|| run_sweep(&config))?;
    let csv = sweep_csv(&result);
    let mut json = sweep_json(&result);
    json.push('\n');
    match &cli.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            let json_path = path.with_extension("json");
            fs::write(&json_path, &json)
                .with_context(|| format!("writing {}", json_path.display()))?;
        }
        None => print!("{}", if cli.json { &json } else { &csv }),
    }
    let failed = result.rows.iter().filter(|r| r.m_star.is_none()).count();
    if failed > 0 {
        eprintln!("{failed} row(s) found no code length meeting the target");
    }
    if let Some(fit) = &result.fit {
        eprintln!(
            "fit: slope {} intercept {} r_squared {}",
            format_float(fit.slope),
            format_float(fit.intercept),
            format_float(fit.r_squared)
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct RdRow {
    eps: f64,
    rate_equation: f64,
    rate_proof_variant: f64,
    asymptotic: f64,
}

fn rd_curve(cli: &Cli, args: &RdCurveArgs) -> Result<String> {
    let grid: Vec<f64> = match &args.eps {
        Some(values) => values.clone(),
        None => {
            if !(args.eps_step > 0.0 && args.eps_step <= 1.0) {
                bail!("--eps-step must lie in (0, 1], got {}", args.eps_step);
            }
            (0..)
                .map(|i| i as f64 * args.eps_step)
                .take_while(|&e| e < 1.0)
                .collect()
        }
    };
    if grid.is_empty() {
        bail!("empty eps grid");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        bail!("eps grid must be strictly increasing");
    }
    let asymptotic = rd_rate_asymptotic(args.n, args.k, args.v)?;
    let rows = grid
        .iter()
        .map(|&eps| {
            let p = rd_rate(args.n, args.k, eps, args.v)?;
            Ok(RdRow {
                eps,
                rate_equation: p.rate_bits,
                rate_proof_variant: p.rate_proof_variant_bits,
                asymptotic,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if cli.json {
        return Ok(to_json(&rows));
    }
    let mut s = String::from("eps,rate_equation,rate_proof_variant,asymptotic\n");
    for r in &rows {
        writeln!(
            s,
            "{},{},{},{}",
            format_float(r.eps),
            format_float(r.rate_equation),
            format_float(r.rate_proof_variant),
            format_float(r.asymptotic)
        )
        .unwrap();
    }
    Ok(s)
}

#[derive(Debug, Serialize)]
struct VerifyEntry {
    id: &'static str,
    title: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    quick: bool,
    seed: u64,
    passed: bool,
    failed: Vec<&'static str>,
    criteria: Vec<VerifyEntry>,
}

fn verify(cli: &Cli) -> Result<ExitCode> {
    let mut opts = SuiteOptions {
        quick: cli.quick,
        ..SuiteOptions::default()
    };
    if let Some(seed) = cli.seed {
        opts.seed = seed;
    }
    let start = Instant::now();
    let outcomes = run_suite(opts);
    let failed: Vec<&'static str> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.id)
        .collect();
    let text = if cli.json {
        to_json(&VerifyReport {
            quick: opts.quick,
            seed: opts.seed,
            passed: failed.is_empty(),
            failed: failed.clone(),
            criteria: outcomes
                .iter()
                .map(|o| VerifyEntry {
                    id: o.id,
                    title: o.title,
                    passed: o.passed,
                    detail: o.detail.clone(),
                    seconds: o.elapsed.as_secs_f64(),
                })
                .collect(),
        })
    } else {
        let mut s: String = outcomes.iter().map(|o| o.line() + "\n").collect();
        let total = start.elapsed().as_secs_f64();
        if failed.is_empty() {
            writeln!(s, "all {} criteria passed in {total:.1}s", outcomes.len()).unwrap();
        } else {
            writeln!(s, "failed criteria: {} ({total:.1}s)", failed.join(", ")).unwrap();
        }
        s
    };
    emit(cli, &text)?;
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
