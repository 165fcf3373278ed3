//! Witness sets, witness distributions and the overlap/information relations
//! between them.
//!
//! Two notions of mutual information live here side by side:
//!
//! * [`overlap_information`] is the closed form `log2(|A||B| / (|A| + |B| - Δ))`
//!   obtained by treating the joint entropy as `log2 |A ∪ B|`. It is strictly
//!   increasing in the overlap but is *not* zero for disjoint sets: at `Δ = 0`
//!   and `|A| = |B| = L` it evaluates to `log2(L / 2)`.
//! * [`coupled_mutual_information`] builds an explicit, normalized joint
//!   distribution (the maximal coupling of the two uniform marginals) and
//!   returns its exact mutual information. It is zero for disjoint sets and
//!   `log2 |A|` for identical sets.
//!
//! The two agree only for identical sets. All information quantities are in
//! bits.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use crate::error::{invalid, Result, RewaError};

pub type WitnessId = u32;

/// The universe Ω of witness identifiers `0..size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WitnessUniverse {
    size: u32,
}

impl WitnessUniverse {
    pub fn new(size: u32) -> Result<Self> {
        if size == 0 {
            return Err(RewaError::EmptyUniverse);
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn contains(&self, id: WitnessId) -> bool {
        id < self.size
    }

    fn check(&self, id: WitnessId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(RewaError::WitnessOutOfRange {
                id,
                size: self.size,
            })
        }
    }
}

/// A finite set of witnesses, stored sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WitnessSet {
    universe: WitnessUniverse,
    members: Vec<WitnessId>,
}

impl WitnessSet {
    /// Builds a set from arbitrary identifiers; duplicates collapse.
    pub fn new(
        universe: WitnessUniverse,
        ids: impl IntoIterator<Item = WitnessId>,
    ) -> Result<Self> {
        let mut members: Vec<WitnessId> = ids.into_iter().collect();
        for &id in &members {
            universe.check(id)?;
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { universe, members })
    }

    pub fn empty(universe: WitnessUniverse) -> Self {
        Self {
            universe,
            members: Vec::new(),
        }
    }

    pub fn universe(&self) -> WitnessUniverse {
        self.universe
    }

    pub fn members(&self) -> &[WitnessId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: WitnessId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    fn same_universe(&self, other: &Self) -> Result<()> {
        if self.universe == other.universe {
            Ok(())
        } else {
            Err(RewaError::UniverseMismatch {
                left: self.universe.size,
                right: other.universe.size,
            })
        }
    }

    /// Sorted intersection with `other`.
    pub fn intersection(&self, other: &Self) -> Vec<WitnessId> {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.members.len() && j < other.members.len() {
            match self.members[i].cmp(&other.members[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.members[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }
}

/// A probability vector over witness identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessDistribution {
    universe: WitnessUniverse,
    mass: BTreeMap<WitnessId, f64>,
}

const MASS_TOLERANCE: f64 = 1e-9;

impl WitnessDistribution {
    /// Validates an explicit probability map. Zero-mass entries are dropped.
    pub fn new(universe: WitnessUniverse, mass: BTreeMap<WitnessId, f64>) -> Result<Self> {
        let mut total = 0.0;
        for (&id, &p) in &mass {
            universe.check(id)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(RewaError::InvalidDistribution(format!(
                    "probability {p} for witness {id} is outside [0, 1]"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(RewaError::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let mass = mass.into_iter().filter(|&(_, p)| p > 0.0).collect();
        Ok(Self { universe, mass })
    }

    pub fn universe(&self) -> WitnessUniverse {
        self.universe
    }

    pub fn mass(&self) -> &BTreeMap<WitnessId, f64> {
        &self.mass
    }

    pub fn probability(&self, id: WitnessId) -> f64 {
        self.mass.get(&id).copied().unwrap_or(0.0)
    }

    /// Number of identifiers with strictly positive mass.
    pub fn support_size(&self) -> usize {
        self.mass.len()
    }
}

/// Closed-form overlap information for a pair of set sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapInfo {
    pub size_a: u64,
    pub size_b: u64,
    pub delta: u64,
    pub bits: f64,
}

pub fn overlap(a: &WitnessSet, b: &WitnessSet) -> Result<usize> {
    a.same_universe(b)?;
    Ok(a.intersection(b).len())
}

/// `Δ / |A ∪ B|`.
pub fn jaccard(a: &WitnessSet, b: &WitnessSet) -> Result<f64> {
    let delta = overlap(a, b)?;
    let union = a.len() + b.len() - delta;
    if union == 0 {
        return Err(RewaError::EmptySet);
    }
    Ok(delta as f64 / union as f64)
}

/// Shannon entropy in bits.
pub fn witness_entropy(d: &WitnessDistribution) -> f64 {
    entropy_bits(d.mass.values().copied())
}

pub(crate) fn entropy_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    let nats: f64 = probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    (nats / LN_2).max(0.0)
}

pub fn uniform_distribution(s: &WitnessSet) -> Result<WitnessDistribution> {
    if s.is_empty() {
        return Err(RewaError::EmptySet);
    }
    let p = 1.0 / s.len() as f64;
    Ok(WitnessDistribution {
        universe: s.universe,
        mass: s.members.iter().map(|&id| (id, p)).collect(),
    })
}

/// Normalizes nonnegative weights into a distribution.
pub fn weighted_distribution(
    universe: WitnessUniverse,
    weights: &BTreeMap<WitnessId, f64>,
) -> Result<WitnessDistribution> {
    let mut total = 0.0;
    for (&id, &w) in weights {
        universe.check(id)?;
        if !w.is_finite() || w < 0.0 {
            return Err(RewaError::InvalidDistribution(format!(
                "weight {w} for witness {id} is not a finite nonnegative number"
            )));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(RewaError::InvalidDistribution(
            "at least one weight must be strictly positive".into(),
        ));
    }
    Ok(WitnessDistribution {
        universe,
        mass: weights
            .iter()
            .filter(|&(_, &w)| w > 0.0)
            .map(|(&id, &w)| (id, w / total))
            .collect(),
    })
}

/// `log2(|A||B| / (|A| + |B| - Δ))`, the closed form obtained by taking the
/// joint entropy to be `log2 |A ∪ B|`.
pub fn overlap_information(size_a: u64, size_b: u64, delta: u64) -> Result<OverlapInfo> {
    if size_a == 0 || size_b == 0 {
        return Err(RewaError::EmptySet);
    }
    let max = size_a.min(size_b);
    if delta > max {
        return Err(RewaError::OverlapTooLarge { delta, max });
    }
    let union = (size_a + size_b - delta) as f64;
    let bits = ((size_a as f64) * (size_b as f64) / union).log2();
    Ok(OverlapInfo {
        size_a,
        size_b,
        delta,
        bits,
    })
}

/// Derivative of the symmetric closed form with respect to Δ, in bits per
/// witness: `1 / ((2L - Δ) ln 2)`.
pub fn overlap_information_rate(l: u64, delta: u64) -> Result<f64> {
    if l == 0 {
        return Err(RewaError::EmptySet);
    }
    if delta >= 2 * l {
        return Err(invalid(format!(
            "rate has a pole at delta = 2L; got delta = {delta}, L = {l}"
        )));
    }
    Ok(1.0 / ((2 * l - delta) as f64 * LN_2))
}

/// Information gained by moving from `delta_far` to `delta_near` shared
/// witnesses between two sets of size `l`.
pub fn information_gap(l: u64, delta_near: u64, delta_far: u64) -> Result<f64> {
    if delta_far >= delta_near || delta_near > l {
        return Err(invalid(format!(
            "need 0 <= delta_far < delta_near <= L; got far = {delta_far}, near = {delta_near}, L = {l}"
        )));
    }
    let near = overlap_information(l, l, delta_near)?.bits;
    let far = overlap_information(l, l, delta_far)?.bits;
    Ok(near - far)
}

/// Exact mutual information of the maximal coupling of `uniform(a)` and
/// `uniform(b)`.
///
/// With probability `ν = Δ / max(|A|, |B|)` both coordinates equal a common
/// witness drawn uniformly from `A ∩ B`; otherwise they are drawn
/// independently from the normalized residual marginals. Both marginals of
/// the resulting joint are exactly the uniform distributions on `A` and `B`.
pub fn coupled_mutual_information(a: &WitnessSet, b: &WitnessSet) -> Result<f64> {
    a.same_universe(b)?;
    if a.is_empty() || b.is_empty() {
        return Err(RewaError::EmptySet);
    }
    let joint = CoupledJoint::new(a, b);
    let px: Vec<f64> = vec![1.0 / a.len() as f64; a.len()];
    let py: Vec<f64> = vec![1.0 / b.len() as f64; b.len()];
    let mut nats = 0.0;
    for (i, row) in joint.table.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                nats += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    Ok((nats / LN_2).max(0.0))
}

/// Dense joint table of the maximal coupling, rows indexed by `a.members()`,
/// columns by `b.members()`.
struct CoupledJoint {
    table: Vec<Vec<f64>>,
}

impl CoupledJoint {
    fn new(a: &WitnessSet, b: &WitnessSet) -> Self {
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let shared = a.intersection(b);
        let common = 1.0 / na.max(nb);
        let nu = shared.len() as f64 * common;

        let residual = |s: &WitnessSet, own: f64| -> Vec<f64> {
            s.members()
                .iter()
                .map(|&w| {
                    let overlap_mass = if shared.binary_search(&w).is_ok() {
                        common
                    } else {
                        0.0
                    };
                    if nu < 1.0 {
                        (1.0 / own - overlap_mass) / (1.0 - nu)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let ra = residual(a, na);
        let rb = residual(b, nb);

        let mut table = vec![vec![0.0; b.len()]; a.len()];
        for (i, &wa) in a.members().iter().enumerate() {
            for (j, &wb) in b.members().iter().enumerate() {
                let mut p = (1.0 - nu) * ra[i] * rb[j];
                if wa == wb && shared.binary_search(&wa).is_ok() {
                    p += common;
                }
                table[i][j] = p;
            }
        }
        Self { table }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn set(universe: u32, ids: &[u32]) -> WitnessSet {
        WitnessSet::new(WitnessUniverse::new(universe).unwrap(), ids.iter().copied()).unwrap()
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(
            overlap(&set(16, &[1, 2, 3]), &set(16, &[2, 3, 4])).unwrap(),
            2
        );
        assert_eq!(overlap(&set(16, &[1, 2]), &set(16, &[5, 6])).unwrap(), 0);
        let all: Vec<u32> = (0..8).collect();
        assert_eq!(overlap(&set(16, &all), &set(16, &all)).unwrap(), 8);
        assert_eq!(overlap(&set(16, &[]), &set(16, &[])).unwrap(), 0);
    }

    #[test]
    fn overlap_rejects_mismatched_universes() {
        assert_eq!(
            overlap(&set(16, &[1]), &set(32, &[1])),
            Err(RewaError::UniverseMismatch {
                left: 16,
                right: 32
            })
        );
    }

    #[test]
    fn set_construction_checks_range_and_canonicalizes() {
        let u = WitnessUniverse::new(4).unwrap();
        assert!(matches!(
            WitnessSet::new(u, [4]),
            Err(RewaError::WitnessOutOfRange { id: 4, size: 4 })
        ));
        assert_eq!(set(8, &[3, 1, 3, 2]).members(), &[1, 2, 3]);
        assert_eq!(WitnessUniverse::new(0), Err(RewaError::EmptyUniverse));
    }

    #[test]
    fn jaccard_examples() {
        assert_abs_diff_eq!(
            jaccard(&set(8, &[1, 2]), &set(8, &[2, 3])).unwrap(),
            1.0 / 3.0
        );
        assert_eq!(jaccard(&set(8, &[1, 2]), &set(8, &[1, 2])).unwrap(), 1.0);
        assert_eq!(jaccard(&set(8, &[1, 2]), &set(8, &[4, 5])).unwrap(), 0.0);
        assert_eq!(
            jaccard(&set(8, &[]), &set(8, &[])),
            Err(RewaError::EmptySet)
        );
    }

    #[test]
    fn entropy_examples() {
        let uniform = uniform_distribution(&set(8, &[0, 1, 2, 3, 4, 5, 6, 7])).unwrap();
        assert_abs_diff_eq!(witness_entropy(&uniform), 3.0, epsilon = 1e-12);
        let point = uniform_distribution(&set(8, &[5])).unwrap();
        assert_eq!(witness_entropy(&point), 0.0);
        let mass = BTreeMap::from([(0, 0.5), (1, 0.25), (2, 0.25)]);
        let d = WitnessDistribution::new(WitnessUniverse::new(3).unwrap(), mass).unwrap();
        // Exact rational evaluation: 0.5*1 + 2*0.25*2.
        assert_abs_diff_eq!(witness_entropy(&d), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn distribution_validation() {
        let u = WitnessUniverse::new(4).unwrap();
        assert!(WitnessDistribution::new(u, BTreeMap::from([(0, 0.5), (1, 0.4)])).is_err());
        assert!(WitnessDistribution::new(u, BTreeMap::from([(0, 1.5), (1, -0.5)])).is_err());
        assert!(WitnessDistribution::new(u, BTreeMap::from([(9, 1.0)])).is_err());
        assert!(WitnessDistribution::new(u, BTreeMap::from([(0, 1.0 - 1e-12), (1, 0.0)])).is_ok());
    }

    #[test]
    fn uniform_distribution_examples() {
        let d = uniform_distribution(&set(8, &[3, 7])).unwrap();
        assert_eq!(d.mass(), &BTreeMap::from([(3, 0.5), (7, 0.5)]));
        let d = uniform_distribution(&set(8, &[5])).unwrap();
        assert_eq!(d.mass(), &BTreeMap::from([(5, 1.0)]));
        let all: Vec<u32> = (0..16).collect();
        let d = uniform_distribution(&set(16, &all)).unwrap();
        assert_eq!(d.support_size(), 16);
        assert!(d.mass().values().all(|&p| p == 1.0 / 16.0));
        assert_eq!(uniform_distribution(&set(8, &[])), Err(RewaError::EmptySet));
    }

    #[test]
    fn weighted_distribution_examples() {
        let u = WitnessUniverse::new(8).unwrap();
        let d = weighted_distribution(u, &BTreeMap::from([(1, 3.0), (2, 1.0)])).unwrap();
        assert_eq!(d.mass(), &BTreeMap::from([(1, 0.75), (2, 0.25)]));
        let d = weighted_distribution(u, &BTreeMap::from([(4, 2.5)])).unwrap();
        assert_eq!(d.mass(), &BTreeMap::from([(4, 1.0)]));
        let d = weighted_distribution(u, &(0..5).map(|i| (i, 7.0)).collect()).unwrap();
        assert!(d.mass().values().all(|&p| (p - 0.2).abs() < 1e-15));
        assert!(weighted_distribution(u, &BTreeMap::from([(1, 0.0)])).is_err());
        assert!(weighted_distribution(u, &BTreeMap::from([(1, 1.0), (2, -1.0)])).is_err());
    }

    // Expected values below were evaluated at 40 significant digits with
    // mpmath and rounded.
    #[test]
    fn overlap_information_examples() {
        assert_abs_diff_eq!(
            overlap_information(10, 10, 5).unwrap().bits,
            2.736_965_594_166_206,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            overlap_information(8, 8, 8).unwrap().bits,
            3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            overlap_information(10, 10, 0).unwrap().bits,
            2.321_928_094_887_362,
            epsilon = 1e-12
        );
        assert_eq!(
            overlap_information(4, 6, 5),
            Err(RewaError::OverlapTooLarge { delta: 5, max: 4 })
        );
    }

    #[test]
    fn overlap_information_rate_examples() {
        assert_abs_diff_eq!(
            overlap_information_rate(10, 0).unwrap(),
            0.072_134_752_044_448_17,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            overlap_information_rate(10, 10).unwrap(),
            0.144_269_504_088_896_34,
            epsilon = 1e-14
        );
        assert!(overlap_information_rate(10, 20).is_err());
    }

    #[test]
    fn rate_matches_forward_difference() {
        let l = 64;
        for delta in 0..l {
            let diff = overlap_information(l, l, delta + 1).unwrap().bits
                - overlap_information(l, l, delta).unwrap().bits;
            let rate = overlap_information_rate(l, delta).unwrap();
            assert!(
                (diff - rate).abs() / rate <= 0.10,
                "delta {delta}: {diff} vs {rate}"
            );
        }
    }

    #[test]
    fn closed_form_is_strictly_increasing() {
        for l in [8u64, 64, 512] {
            for delta in 0..l {
                let lo = overlap_information(l, l, delta).unwrap().bits;
                let hi = overlap_information(l, l, delta + 1).unwrap().bits;
                assert!(hi > lo, "L={l} delta={delta}");
            }
        }
    }

    #[test]
    fn information_gap_examples() {
        assert_abs_diff_eq!(
            information_gap(10, 5, 0).unwrap(),
            0.415_037_499_278_843_8,
            epsilon = 1e-12
        );
        assert!(information_gap(10, 3, 3).is_err());
        assert!(information_gap(10, 2, 3).is_err());
        assert!(information_gap(10, 11, 3).is_err());
    }

    #[test]
    fn information_gap_dominates_far_denominator_bound() {
        let l = 32u64;
        for far in 0..l {
            for near in far + 1..=l {
                let gap = information_gap(l, near, far).unwrap();
                let bound = (near - far) as f64 / ((2 * l - far) as f64 * LN_2);
                assert!(gap >= bound - 1e-12, "near={near} far={far}");
            }
        }
    }

    /// Independent closed form for the coupled MI with |A| = |B| = L:
    /// the diagonal carries mass 1/L per shared witness and the off-diagonal
    /// block is uniform with mass 1/(L(L-Δ)), giving
    /// `log2 L - (1 - Δ/L) log2(L - Δ)`.
    fn coupled_equal_sizes(l: f64, delta: f64) -> f64 {
        if delta == l {
            l.log2()
        } else {
            l.log2() - (1.0 - delta / l) * (l - delta).log2()
        }
    }

    #[test]
    fn coupled_mi_examples() {
        assert_eq!(
            coupled_mutual_information(&set(16, &[1, 2]), &set(16, &[5, 6])).unwrap(),
            0.0
        );
        let a = set(16, &[0, 1, 2, 3]);
        assert_abs_diff_eq!(
            coupled_mutual_information(&a, &a).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        let mid = coupled_mutual_information(&a, &set(16, &[2, 3, 4, 5])).unwrap();
        assert_abs_diff_eq!(mid, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mid, coupled_equal_sizes(4.0, 2.0), epsilon = 1e-12);
        assert!(mid > 0.0 && mid < 2.0);
        assert_eq!(
            coupled_mutual_information(&a, &set(16, &[])),
            Err(RewaError::EmptySet)
        );
    }

    #[test]
    fn coupled_joint_has_uniform_marginals() {
        let a = set(32, &[0, 1, 2, 3, 4, 5]);
        let b = set(32, &[4, 5, 6, 7]);
        let joint = CoupledJoint::new(&a, &b);
        for row in &joint.table {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0 / 6.0, epsilon = 1e-12);
        }
        for j in 0..b.len() {
            let col: f64 = joint.table.iter().map(|r| r[j]).sum();
            assert_abs_diff_eq!(col, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn coupled_mi_nondecreasing_over_sliding_window() {
        let a = set(32, &(0..8).collect::<Vec<_>>());
        let mut prev = -1.0;
        for delta in 0..=8u32 {
            let b = set(32, &((8 - delta)..(16 - delta)).collect::<Vec<_>>());
            assert_eq!(overlap(&a, &b).unwrap(), delta as usize);
            let mi = coupled_mutual_information(&a, &b).unwrap();
            assert_abs_diff_eq!(mi, coupled_equal_sizes(8.0, delta as f64), epsilon = 1e-12);
            assert!(mi >= prev);
            prev = mi;
        }
    }

    fn arb_set(universe: u32) -> impl Strategy<Value = WitnessSet> {
        proptest::collection::btree_set(0..universe, 1..12usize)
            .prop_map(move |ids| set(universe, &ids.into_iter().collect::<Vec<_>>()))
    }

    proptest! {
        #[test]
        fn pairwise_quantities_are_symmetric(a in arb_set(24), b in arb_set(24)) {
            prop_assert_eq!(overlap(&a, &b).unwrap(), overlap(&b, &a).unwrap());
            prop_assert_eq!(jaccard(&a, &b).unwrap(), jaccard(&b, &a).unwrap());
            let (la, lb, d) = (a.len() as u64, b.len() as u64, overlap(&a, &b).unwrap() as u64);
            prop_assert_eq!(
                overlap_information(la, lb, d).unwrap().bits,
                overlap_information(lb, la, d).unwrap().bits
            );
            let ab = coupled_mutual_information(&a, &b).unwrap();
            let ba = coupled_mutual_information(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn coupled_mi_bounded_by_marginal_entropies(a in arb_set(24), b in arb_set(24)) {
            let mi = coupled_mutual_information(&a, &b).unwrap();
            let ha = witness_entropy(&uniform_distribution(&a).unwrap());
            let hb = witness_entropy(&uniform_distribution(&b).unwrap());
            prop_assert!(mi >= 0.0);
            prop_assert!(mi <= ha.min(hb) + 1e-9);
        }

        #[test]
        fn entropy_between_zero_and_log_support(
            weights in proptest::collection::btree_map(0u32..32, 0.01f64..10.0, 1..20usize)
        ) {
            let u = WitnessUniverse::new(32).unwrap();
            let d = weighted_distribution(u, &weights).unwrap();
            let h = witness_entropy(&d);
            let cap = (d.support_size() as f64).log2();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= cap + 1e-12);
            let all_equal = weights.values().all(|&w| w == *weights.values().next().unwrap());
            if all_equal {
                prop_assert!((h - cap).abs() < 1e-9);
            } else {
                prop_assert!(h < cap);
            }
        }
    }
}
