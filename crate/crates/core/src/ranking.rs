//! Planted-gap datasets and Monte-Carlo estimates of top-k retrieval error
//! under hashed encodings.
//!
//! The probability space for every error estimate is the hash randomness:
//! the dataset and query are fixed, and each trial draws a fresh hash family
//! from a seed derived from the base seed and the trial index. Trial `t`
//! uses the same family at every code length, so error estimates at
//! different `m` are driven by common random numbers.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::encoder::HashFamily;
use crate::error::{invalid, Result, RewaError};
use crate::seed::{derive_seed, STREAM_DATASET, STREAM_TRIAL};
use crate::witness::{overlap, WitnessId, WitnessSet, WitnessUniverse};

pub type ItemId = u32;

/// Largest code length probed by [`find_min_bits`].
pub const MAX_PROBE_BITS: u64 = 1 << 24;

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

/// A query and `N` items whose overlaps with the query are planted exactly:
/// the `k` items of `true_neighborhood` share `delta_near` witnesses with the
/// query and every other item shares `delta_far`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapDataset {
    universe: WitnessUniverse,
    query: WitnessSet,
    items: Vec<(ItemId, WitnessSet)>,
    k: usize,
    true_neighborhood: BTreeSet<ItemId>,
    l: usize,
    delta_near: usize,
    delta_far: usize,
    seed: u64,
}

impl GapDataset {
    /// Assembles a dataset from explicit parts. Structure is validated (shared
    /// universe, equal set sizes, unique ids, neighborhood drawn from the
    /// items) but planted overlaps are not: [`check_gap_condition`] reports
    /// the gap that is actually present.
    pub fn from_parts(
        query: WitnessSet,
        items: Vec<(ItemId, WitnessSet)>,
        true_neighborhood: BTreeSet<ItemId>,
        delta_near: usize,
        delta_far: usize,
        seed: u64,
    ) -> Result<Self> {
        let universe = query.universe();
        let l = query.len();
        if l == 0 {
            return Err(RewaError::EmptySet);
        }
        let mut ids = BTreeSet::new();
        for (id, set) in &items {
            if set.universe() != universe {
                return Err(RewaError::UniverseMismatch {
                    left: universe.size(),
                    right: set.universe().size(),
                });
            }
            if set.len() != l {
                return Err(invalid(format!(
                    "item {id} has {} witnesses, expected {l}",
                    set.len()
                )));
            }
            if !ids.insert(*id) {
                return Err(invalid(format!("duplicate item id {id}")));
            }
        }
        if true_neighborhood.is_empty() || true_neighborhood.len() >= items.len() {
            return Err(invalid(
                "the neighborhood must be a non-empty proper subset of the items",
            ));
        }
        if let Some(id) = true_neighborhood.iter().find(|id| !ids.contains(id)) {
            return Err(invalid(format!(
                "neighborhood references unknown item {id}"
            )));
        }
        if delta_far >= delta_near || delta_near > l {
            return Err(invalid(format!(
                "need delta_far < delta_near <= L, got far = {delta_far}, near = {delta_near}, L = {l}"
            )));
        }
        Ok(Self {
            universe,
            query,
            k: true_neighborhood.len(),
            items,
            true_neighborhood,
            l,
            delta_near,
            delta_far,
            seed,
        })
    }

    pub fn universe(&self) -> WitnessUniverse {
        self.universe
    }

    pub fn query(&self) -> &WitnessSet {
        &self.query
    }

    pub fn items(&self) -> &[(ItemId, WitnessSet)] {
        &self.items
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn true_neighborhood(&self) -> &BTreeSet<ItemId> {
        &self.true_neighborhood
    }

    /// Witnesses per set.
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn delta_near(&self) -> usize {
        self.delta_near
    }

    pub fn delta_far(&self) -> usize {
        self.delta_far
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Query witnesses are `0..L`; item `i` draws its shared witnesses from the
/// query and its fillers from the private block `L + i·L ..`, so every
/// overlap is exactly the planted value.
pub fn generate_gap_dataset(
    n_items: usize,
    l: usize,
    delta_near: usize,
    delta_far: usize,
    k: usize,
    seed: u64,
) -> Result<GapDataset> {
    if l == 0 {
        return Err(invalid("L must be positive"));
    }
    if delta_far >= delta_near || delta_near > l {
        return Err(invalid(format!(
            "need 0 <= delta_far < delta_near <= L, got far = {delta_far}, near = {delta_near}, L = {l}"
        )));
    }
    if k == 0 || k >= n_items {
        return Err(invalid(format!(
            "need 1 <= k < n_items, got k = {k}, n_items = {n_items}"
        )));
    }
    let universe_size = l
        .checked_mul(n_items + 1)
        .filter(|&s| s <= u32::MAX as usize)
        .ok_or_else(|| invalid("dataset does not fit in a 32-bit witness universe"))?;
    let universe = WitnessUniverse::new(universe_size as u32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_DATASET, 0));

    let query = WitnessSet::new(universe, 0..l as WitnessId)?;
    let true_neighborhood: BTreeSet<ItemId> = sample(&mut rng, n_items, k)
        .into_iter()
        .map(|i| i as ItemId)
        .collect();

    let mut items = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let shared = if true_neighborhood.contains(&(i as ItemId)) {
            delta_near
        } else {
            delta_far
        };
        let base = l + i * l;
        let members = sample(&mut rng, l, shared)
            .into_iter()
            .chain(base..base + (l - shared))
            .map(|w| w as WitnessId);
        items.push((i as ItemId, WitnessSet::new(universe, members)?));
    }
    GapDataset::from_parts(query, items, true_neighborhood, delta_near, delta_far, seed)
}

/// Minimum overlap inside the neighborhood minus the maximum overlap outside
/// it, recomputed from the witness sets.
pub fn check_gap_condition(d: &GapDataset) -> i64 {
    let mut min_near = i64::MAX;
    let mut max_far = 0i64;
    for (id, set) in &d.items {
        let o = overlap(&d.query, set).expect("dataset sets share a universe") as i64;
        if d.true_neighborhood.contains(id) {
            min_near = min_near.min(o);
        } else {
            max_far = max_far.max(o);
        }
    }
    min_near - max_far
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// Inner product of the OR-encoded codes.
    BitDot,
    /// Pairwise hash collisions; matches the expectation model exactly.
    CollisionCount,
    /// The true overlap; ignores the hash family. Noiseless reference.
    Overlap,
}

/// Scores every item against the query, in item order.
fn score_items(d: &GapDataset, f: &HashFamily, scorer: Scorer) -> Vec<u64> {
    match scorer {
        Scorer::CollisionCount => {
            let mut counts = vec![0u32; f.m()];
            for &w in d.query.members() {
                for p in f.positions(w) {
                    counts[p] += 1;
                }
            }
            d.items
                .iter()
                .map(|(_, set)| {
                    set.members()
                        .iter()
                        .flat_map(|&w| f.positions(w))
                        .map(|p| counts[p] as u64)
                        .sum()
                })
                .collect()
        }
        Scorer::BitDot => {
            let mut query_bits = vec![0u64; f.m().div_ceil(64)];
            for &w in d.query.members() {
                for p in f.positions(w) {
                    query_bits[p / 64] |= 1 << (p % 64);
                }
            }
            let mut scratch = Vec::new();
            d.items
                .iter()
                .map(|(_, set)| {
                    scratch.clear();
                    scratch.extend(set.members().iter().flat_map(|&w| f.positions(w)));
                    scratch.sort_unstable();
                    scratch.dedup();
                    scratch
                        .iter()
                        .filter(|&&p| query_bits[p / 64] >> (p % 64) & 1 == 1)
                        .count() as u64
                })
                .collect()
        }
        Scorer::Overlap => d
            .items
            .iter()
            .map(|(_, set)| d.query.intersection(set).len() as u64)
            .collect(),
    }
}

fn top_k_of(d: &GapDataset, scores: &[u64], k: usize) -> Vec<ItemId> {
    let mut order: Vec<(u64, ItemId)> = scores
        .iter()
        .zip(&d.items)
        .map(|(&s, (id, _))| (s, *id))
        .collect();
    // Descending score, ascending id.
    let cmp = |a: &(u64, ItemId), b: &(u64, ItemId)| b.0.cmp(&a.0).then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    order.into_iter().map(|(_, id)| id).collect()
}

/// The `k` items with the highest encoded similarity to the query, best
/// first; ties go to the smaller item id.
pub fn retrieve_topk(
    d: &GapDataset,
    f: &HashFamily,
    k: usize,
    scorer: Scorer,
) -> Result<Vec<ItemId>> {
    if k == 0 || k > d.n_items() {
        return Err(invalid(format!("k = {k} must lie in 1..={}", d.n_items())));
    }
    Ok(top_k_of(d, &score_items(d, f, scorer), k))
}

/// 0 when the retrieved ids are exactly the true neighborhood, else 1.
pub fn topk_distortion(retrieved: &[ItemId], truth: &BTreeSet<ItemId>) -> Result<u8> {
    if retrieved.is_empty() || retrieved.len() != truth.len() {
        return Err(invalid(format!(
            "retrieved {} ids for a neighborhood of {}",
            retrieved.len(),
            truth.len()
        )));
    }
    let got: BTreeSet<ItemId> = retrieved.iter().copied().collect();
    Ok(u8::from(&got != truth))
}

/// Failure proportion with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub failures: u64,
    pub trials: u64,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ErrorEstimate {
    pub fn wilson(failures: u64, trials: u64) -> Result<Self> {
        if trials == 0 || failures > trials {
            return Err(invalid(format!("{failures} failures in {trials} trials")));
        }
        let n = trials as f64;
        let point = failures as f64 / n;
        let z2 = Z_95 * Z_95;
        let denom = 1.0 + z2 / n;
        let centre = (point + z2 / (2.0 * n)) / denom;
        let half = wilson_half_width(point, trials);
        Ok(Self {
            failures,
            trials,
            point,
            ci_low: (centre - half).clamp(0.0, point),
            ci_high: (centre + half).clamp(point, 1.0),
        })
    }
}

fn wilson_half_width(p: f64, trials: u64) -> f64 {
    let n = trials as f64;
    let z2 = Z_95 * Z_95;
    Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    derive_seed(seed, STREAM_TRIAL, trial)
}

/// Error rate of collision-count retrieval at code length `m`.
pub fn estimate_error_rate(
    d: &GapDataset,
    k_hashes: usize,
    m: usize,
    trials: u64,
    seed: u64,
) -> Result<ErrorEstimate> {
    estimate_error_rate_with(d, k_hashes, m, trials, seed, Scorer::CollisionCount)
}

pub fn estimate_error_rate_with(
    d: &GapDataset,
    k_hashes: usize,
    m: usize,
    trials: u64,
    seed: u64,
    scorer: Scorer,
) -> Result<ErrorEstimate> {
    if trials == 0 {
        return Err(invalid("trials must be positive"));
    }
    // Surface parameter errors before fanning out.
    HashFamily::new(k_hashes, m, seed)?;
    let failures: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = HashFamily::new(k_hashes, m, trial_seed(seed, t)).expect("validated above");
            let top = top_k_of(d, &score_items(d, &f, scorer), d.k);
            u64::from(topk_distortion(&top, &d.true_neighborhood).expect("k matches"))
        })
        .sum();
    ErrorEstimate::wilson(failures, trials)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinBitsResult {
    pub m_star: u64,
    pub target_error: f64,
    pub achieved_estimate: ErrorEstimate,
    /// Every probed `(m, error point estimate)`, in probe order.
    pub search_trace: Vec<(u64, f64)>,
}

pub fn find_min_bits(
    d: &GapDataset,
    k_hashes: usize,
    target_error: f64,
    trials: u64,
    seed: u64,
) -> Result<MinBitsResult> {
    find_min_bits_with(
        d,
        k_hashes,
        target_error,
        trials,
        seed,
        Scorer::CollisionCount,
    )
}

/// Smallest code length whose estimated error meets `target_error`.
///
/// Starts at `m = 2·k_hashes`, doubles until a probe meets the target and
/// then bisects the last bracket down to adjacent integers. The error curve is
/// only statistically monotone in `m`; the search does not enforce it.
pub fn find_min_bits_with(
    d: &GapDataset,
    k_hashes: usize,
    target_error: f64,
    trials: u64,
    seed: u64,
    scorer: Scorer,
) -> Result<MinBitsResult> {
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(invalid(format!(
            "target error {target_error} must lie in (0, 1)"
        )));
    }
    if k_hashes == 0 {
        return Err(invalid("k_hashes must be positive"));
    }
    if trials == 0 || wilson_half_width(target_error, trials) >= target_error / 2.0 {
        return Err(invalid(format!(
            "{trials} trials cannot resolve target error {target_error}: the 95% half-width must be below {}",
            target_error / 2.0
        )));
    }
    let mut trace = Vec::new();
    let mut probe = |m: u64| -> Result<ErrorEstimate> {
        let est = estimate_error_rate_with(d, k_hashes, m as usize, trials, seed, scorer)?;
        trace.push((m, est.point));
        Ok(est)
    };

    let mut m = 2 * k_hashes as u64;
    let mut failed_below = None;
    let mut best = (m, f64::INFINITY);
    let (mut hi, mut hi_est) = loop {
        let est = probe(m)?;
        if est.point <= target_error {
            break (m, est);
        }
        if est.point < best.1 {
            best = (m, est.point);
        }
        failed_below = Some(m);
        if m >= MAX_PROBE_BITS {
            return Err(RewaError::SearchExhausted {
                limit: MAX_PROBE_BITS,
                target: target_error,
                best_m: best.0,
                best_error: best.1,
            });
        }
        m = (m * 2).min(MAX_PROBE_BITS);
    };
    if let Some(mut lo) = failed_below {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let est = probe(mid)?;
            if est.point <= target_error {
                hi = mid;
                hi_est = est;
            } else {
                lo = mid;
            }
        }
    }
    Ok(MinBitsResult {
        m_star: hi,
        target_error,
        achieved_estimate: hi_est,
        search_trace: trace,
    })
}

/// Serializes a dataset as text:
///
/// ```text
/// N L delta_near delta_far k seed
/// q query <L query witness ids>
/// <id> near|far <L witness ids>     (one line per item, in item order)
/// ```
///
/// Witness ids on each line are ascending. The universe size is `L·(N+1)`.
pub fn write_dataset(d: &GapDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {} {} {} {}",
        d.n_items(),
        d.l,
        d.delta_near,
        d.delta_far,
        d.k,
        d.seed
    );
    let line = |out: &mut String, head: &str, set: &WitnessSet| {
        out.push_str(head);
        for w in set.members() {
            let _ = write!(out, " {w}");
        }
        out.push('\n');
    };
    line(&mut out, "q query", &d.query);
    for (id, set) in &d.items {
        let class = if d.true_neighborhood.contains(id) {
            "near"
        } else {
            "far"
        };
        line(&mut out, &format!("{id} {class}"), set);
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<GapDataset> {
    let bad = |msg: String| RewaError::Malformed(msg);
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| bad("empty dataset file".into()))?;
    let fields: Vec<u64> = header
        .split_whitespace()
        .map(|t| {
            t.parse::<u64>()
                .map_err(|e| bad(format!("header field {t:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    let [n, l, near, far, k, seed] = fields[..] else {
        return Err(bad(format!(
            "header needs 6 fields, found {}",
            fields.len()
        )));
    };
    let universe_size = l
        .checked_mul(n + 1)
        .filter(|&s| s > 0 && s <= u32::MAX as u64)
        .ok_or_else(|| bad("header describes an empty or oversized universe".into()))?;
    let universe = WitnessUniverse::new(universe_size as u32)?;

    let parse_ids = |tokens: std::str::SplitWhitespace<'_>, lineno: usize| -> Result<WitnessSet> {
        let ids = tokens
            .map(|t| {
                t.parse::<WitnessId>()
                    .map_err(|e| bad(format!("line {}: {t:?}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let count = ids.len();
        let set = WitnessSet::new(universe, ids)?;
        if set.len() != count {
            return Err(bad(format!("line {}: duplicate witness ids", lineno + 1)));
        }
        Ok(set)
    };

    let (qno, qline) = lines
        .next()
        .ok_or_else(|| bad("missing query line".into()))?;
    let mut tokens = qline.split_whitespace();
    if tokens.next() != Some("q") || tokens.next() != Some("query") {
        return Err(bad(format!("line {}: expected `q query ...`", qno + 1)));
    }
    let query = parse_ids(tokens, qno)?;

    let mut items = Vec::new();
    let mut neighborhood = BTreeSet::new();
    for (lineno, text) in lines {
        let mut tokens = text.split_whitespace();
        let id: ItemId = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(format!("line {}: missing item id", lineno + 1)))?;
        match tokens.next() {
            Some("near") => {
                neighborhood.insert(id);
            }
            Some("far") => {}
            other => {
                return Err(bad(format!(
                    "line {}: unknown overlap class {other:?}",
                    lineno + 1
                )));
            }
        }
        items.push((id, parse_ids(tokens, lineno)?));
    }
    if items.len() as u64 != n || neighborhood.len() as u64 != k || query.len() as u64 != l {
        return Err(bad(format!(
            "header promises N = {n}, k = {k}, L = {l}; body has {} items, {} near, {} query witnesses",
            items.len(),
            neighborhood.len(),
            query.len()
        )));
    }
    GapDataset::from_parts(
        query,
        items,
        neighborhood,
        near as usize,
        far as usize,
        seed,
    )
}
