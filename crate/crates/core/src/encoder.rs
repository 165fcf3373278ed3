//! Seeded hash families and Bloom-style binary encoding of witness sets.
//!
//! Each of the `k` hash functions is a random cubic polynomial modulo the
//! Mersenne prime `2^61 − 1`, scaled into `[0, m)`. Every witness sets up to
//! `k` bits of its code.
//!
//! The variance of a collision count involves up to four distinct witnesses,
//! so the family must be 4-wise independent for the count to fluctuate the
//! way independent positions predict. Pairwise-independent multiply-shift
//! hashing maps runs of consecutive identifiers to arithmetic progressions,
//! and simple tabulation maps id blocks that differ in one byte to XOR
//! translates of each other; both inflate the variance by orders of
//! magnitude on planted datasets, whose fillers are consecutive ids.
//!
//! Two similarity scores are exposed:
//!
//! * [`similarity_bits`]: the inner product of two codes (shared set bits).
//! * [`collision_count`]: the number of `(witness, hash index)` pairs of one
//!   set that land on the same position as a pair of the other. Unlike the
//!   bit inner product it does not saturate once positions are hit more than
//!   once. Its exact mean is `KΔ + (K²L² − KΔ)/m`; [`expected_similarity`]
//!   leaves out the accidental collisions of the shared witnesses, which
//!   undercounts by `KΔ(KL − 1)/m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result, RewaError};
use crate::seed::{derive_seed, STREAM_HASH};
use crate::witness::{WitnessId, WitnessSet};

const MERSENNE_61: u64 = (1 << 61) - 1;

#[inline]
fn mod_mersenne61(x: u128) -> u64 {
    let folded = (x as u64 & MERSENNE_61) + (x >> 61) as u64;
    let folded = (folded & MERSENNE_61) + (folded >> 61);
    if folded >= MERSENNE_61 {
        folded - MERSENNE_61
    } else {
        folded
    }
}

/// Random cubic polynomial over the field of integers modulo `2^61 − 1`.
/// Values at any four distinct keys are independent and uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cubic {
    coefficients: [u64; 4],
}

impl Cubic {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            coefficients: std::array::from_fn(|_| rng.gen_range(0..MERSENNE_61)),
        }
    }

    #[inline]
    fn hash(&self, x: u32) -> u64 {
        let [c0, c1, c2, c3] = self.coefficients;
        let x = x as u128;
        let h = mod_mersenne61(c3 as u128 * x + c2 as u128);
        let h = mod_mersenne61(h as u128 * x + c1 as u128);
        mod_mersenne61(h as u128 * x + c0 as u128)
    }
}

/// `k` independent hash functions from witness identifiers into `[0, m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    k: usize,
    m: usize,
    seed: u64,
    functions: Vec<Cubic>,
}

impl HashFamily {
    pub fn new(k: usize, m: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(invalid("a hash family needs at least one function"));
        }
        if m < 2 {
            return Err(invalid(format!("code length must be at least 2, got {m}")));
        }
        if m as u64 > u32::MAX as u64 {
            return Err(invalid(format!("code length {m} exceeds 2^32 - 1")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_HASH, 0));
        let functions = (0..k).map(|_| Cubic::random(&mut rng)).collect();
        Ok(Self {
            k,
            m,
            seed,
            functions,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Position of witness `w` under hash function `index`.
    #[inline]
    pub fn hash(&self, index: usize, w: WitnessId) -> usize {
        let h = self.functions[index].hash(w);
        ((h as u128 * self.m as u128) >> 61) as usize
    }

    /// The `k` positions of `w`, in hash-index order.
    #[inline]
    pub fn positions(&self, w: WitnessId) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).map(move |i| self.hash(i, w))
    }
}

pub fn build_hash_family(k: usize, m: usize, seed: u64) -> Result<HashFamily> {
    HashFamily::new(k, m, seed)
}

/// An `m`-bit code with a cached popcount.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCode {
    words: Vec<u64>,
    len: usize,
    popcount: usize,
}

impl BinaryCode {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
            popcount: 0,
        }
    }

    /// Builds a code from explicit set positions.
    pub fn from_positions(len: usize, positions: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut code = Self::zeros(len);
        for p in positions {
            if p >= len {
                return Err(invalid(format!("bit {p} out of range for length {len}")));
            }
            code.set(p);
        }
        Ok(code)
    }

    #[inline]
    fn set(&mut self, pos: usize) {
        let (word, bit) = (pos / 64, pos % 64);
        let mask = 1u64 << bit;
        if self.words[word] & mask == 0 {
            self.words[word] |= mask;
            self.popcount += 1;
        }
    }

    #[inline]
    pub fn get(&self, pos: usize) -> bool {
        pos < self.len && self.words[pos / 64] >> (pos % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn popcount(&self) -> usize {
        self.popcount
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&p| self.get(p))
    }
}

/// OR-encodes every `(witness, hash index)` pair of `s` into an `m`-bit code.
pub fn encode(s: &WitnessSet, f: &HashFamily) -> Result<BinaryCode> {
    if s.is_empty() {
        return Err(RewaError::EmptySet);
    }
    let mut code = BinaryCode::zeros(f.m());
    for &w in s.members() {
        for p in f.positions(w) {
            code.set(p);
        }
    }
    Ok(code)
}

/// Number of positions set in both codes.
pub fn similarity_bits(a: &BinaryCode, b: &BinaryCode) -> Result<usize> {
    if a.len != b.len {
        return Err(RewaError::LengthMismatch {
            left: a.len,
            right: b.len,
        });
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x & y).count_ones() as usize)
        .sum())
}

fn sorted_positions(s: &WitnessSet, f: &HashFamily) -> Vec<usize> {
    let mut out: Vec<usize> = s.members().iter().flat_map(|&w| f.positions(w)).collect();
    out.sort_unstable();
    out
}

/// Counts pairs `(w_a, i, w_b, j)` with `h_i(w_a) = h_j(w_b)`.
pub fn collision_count(a: &WitnessSet, b: &WitnessSet, f: &HashFamily) -> Result<u64> {
    if a.universe() != b.universe() {
        return Err(RewaError::UniverseMismatch {
            left: a.universe().size(),
            right: b.universe().size(),
        });
    }
    let pa = sorted_positions(a, f);
    let pb = sorted_positions(b, f);
    let (mut i, mut j, mut total) = (0, 0, 0u64);
    while i < pa.len() && j < pb.len() {
        match pa[i].cmp(&pb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let p = pa[i];
                let run_a = pa[i..].iter().take_while(|&&x| x == p).count();
                let run_b = pb[j..].iter().take_while(|&&x| x == p).count();
                total += (run_a * run_b) as u64;
                i += run_a;
                j += run_b;
            }
        }
    }
    Ok(total)
}

/// `K·Δ + (K²L²/m)(1 − Δ/L)`: signal from shared witnesses plus the
/// accidental collisions of the unshared ones.
pub fn expected_similarity(l: u64, delta: u64, k: u64, m: u64) -> Result<f64> {
    if l == 0 || k == 0 {
        return Err(invalid("L and K must be positive"));
    }
    if delta > l {
        return Err(RewaError::OverlapTooLarge { delta, max: l });
    }
    if m < 2 {
        return Err(invalid(format!("code length must be at least 2, got {m}")));
    }
    let (l, delta, k, m) = (l as f64, delta as f64, k as f64, m as f64);
    Ok(k * delta + (k * k * l * l / m) * (1.0 - delta / l))
}

pub const CODE_MAGIC: &[u8; 4] = b"RWC1";
const HEADER_LEN: usize = 4 + 3 * 8;

/// Header fields of a serialized code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeHeader {
    pub k: u64,
    pub m: u64,
    pub seed: u64,
}

impl CodeHeader {
    pub fn of(f: &HashFamily) -> Self {
        Self {
            k: f.k() as u64,
            m: f.m() as u64,
            seed: f.seed(),
        }
    }
}

/// `"RWC1"`, then `k`, `m`, `seed` as little-endian u64, then `ceil(m/8)`
/// bytes with bit `j` at byte `j / 8`, bit `j % 8` (LSB first).
pub fn write_code(header: CodeHeader, code: &BinaryCode) -> Result<Vec<u8>> {
    if header.m != code.len() as u64 {
        return Err(RewaError::LengthMismatch {
            left: header.m as usize,
            right: code.len(),
        });
    }
    let body_len = code.len().div_ceil(8);
    let mut out = Vec::with_capacity(HEADER_LEN + body_len);
    out.extend_from_slice(CODE_MAGIC);
    out.extend_from_slice(&header.k.to_le_bytes());
    out.extend_from_slice(&header.m.to_le_bytes());
    out.extend_from_slice(&header.seed.to_le_bytes());
    // Little-endian u64 words are already in the required byte/bit order.
    out.extend(
        code.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(body_len),
    );
    Ok(out)
}

pub fn read_code(bytes: &[u8]) -> Result<(CodeHeader, BinaryCode)> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != CODE_MAGIC {
        return Err(RewaError::Malformed("missing RWC1 header".into()));
    }
    let field = |i: usize| u64::from_le_bytes(bytes[4 + 8 * i..12 + 8 * i].try_into().unwrap());
    let header = CodeHeader {
        k: field(0),
        m: field(1),
        seed: field(2),
    };
    let len = usize::try_from(header.m)
        .map_err(|_| RewaError::Malformed(format!("code length {} too large", header.m)))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != len.div_ceil(8) {
        return Err(RewaError::Malformed(format!(
            "expected {} payload bytes for m = {len}, found {}",
            len.div_ceil(8),
            body.len()
        )));
    }
    let mut code = BinaryCode::zeros(len);
    for (i, &byte) in body.iter().enumerate() {
        for bit in 0..8 {
            if byte >> bit & 1 == 1 {
                let pos = 8 * i + bit;
                if pos >= len {
                    return Err(RewaError::Malformed(format!("padding bit {pos} is set")));
                }
                code.set(pos);
            }
        }
    }
    Ok((header, code))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::witness::WitnessUniverse;
    use proptest::prelude::*;

    fn set(universe: u32, ids: impl IntoIterator<Item = u32>) -> WitnessSet {
        WitnessSet::new(WitnessUniverse::new(universe).unwrap(), ids).unwrap()
    }

    #[test]
    fn family_is_deterministic() {
        let f = build_hash_family(4, 4096, 17).unwrap();
        let g = build_hash_family(4, 4096, 17).unwrap();
        for w in 0..1000 {
            for i in 0..4 {
                assert_eq!(f.hash(i, w), g.hash(i, w));
            }
        }
        let other = build_hash_family(4, 4096, 18).unwrap();
        assert!((0..1000).any(|w| f.hash(0, w) != other.hash(0, w)));
    }

    #[test]
    fn family_range_and_parameter_checks() {
        let f = build_hash_family(1, 2, 0).unwrap();
        assert!((0..10_000).all(|w| f.hash(0, w) < 2));
        assert!((0..10_000).any(|w| f.hash(0, w) == 0));
        assert!((0..10_000).any(|w| f.hash(0, w) == 1));
        assert!(build_hash_family(1, 1, 0).is_err());
        assert!(build_hash_family(0, 16, 0).is_err());
    }

    #[test]
    fn positions_are_uniform() {
        // 10^5 identifiers hashed by each of 4 functions; every position's
        // count must sit within 5 binomial standard deviations of n/m.
        let (m, n) = (4096usize, 100_000u32);
        let f = build_hash_family(4, m, 0xfeed).unwrap();
        let mean = n as f64 / m as f64;
        let sd = (n as f64 * (1.0 / m as f64) * (1.0 - 1.0 / m as f64)).sqrt();
        for i in 0..4 {
            let mut hits = vec![0u32; m];
            // Spread identifiers over the full u32 range rather than 0..n.
            for w in 0..n {
                hits[f.hash(i, w.wrapping_mul(2_654_435_761))] += 1;
            }
            for (pos, &h) in hits.iter().enumerate() {
                assert!(
                    (h as f64 - mean).abs() <= 5.0 * sd,
                    "function {i} position {pos}: {h} hits vs mean {mean}"
                );
            }
        }
    }

    #[test]
    fn encode_examples() {
        let f = build_hash_family(1, 1024, 3).unwrap();
        assert_eq!(encode(&set(64, [9]), &f).unwrap().popcount(), 1);
        let s = set(64, [1, 5, 9, 33]);
        assert_eq!(encode(&s, &f).unwrap(), encode(&s, &f).unwrap());
        assert_eq!(encode(&set(64, []), &f), Err(RewaError::EmptySet));
    }

    #[test]
    fn encode_popcount_matches_balls_in_bins() {
        // 128 balls into 4096 bins: expected occupied bins
        // 4096(1 - (1 - 1/4096)^128) = 126.0358 (evaluated with mpmath).
        let expected = 126.035_818_290_627_57;
        let s = set(64, 0..32);
        let counts: Vec<f64> = (0..1000u64)
            .map(|seed| {
                let code = encode(&s, &build_hash_family(4, 4096, seed).unwrap()).unwrap();
                assert!((1..=128).contains(&code.popcount()));
                code.popcount() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var =
            counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
        let se = (var / counts.len() as f64).sqrt();
        assert!((mean - expected).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn similarity_bits_examples() {
        let f = build_hash_family(3, 512, 11).unwrap();
        let code = encode(&set(64, [2, 4, 6, 8]), &f).unwrap();
        assert_eq!(similarity_bits(&code, &code).unwrap(), code.popcount());

        let evens = BinaryCode::from_positions(10, (0..10).step_by(2)).unwrap();
        let odds = BinaryCode::from_positions(10, (1..10).step_by(2)).unwrap();
        assert_eq!(similarity_bits(&evens, &odds).unwrap(), 0);
        assert!(similarity_bits(&evens, &BinaryCode::zeros(11)).is_err());

        // With K = 1 and m = 2^20 an accidental collision among the 3x3
        // witness pairs has probability at most 9/m.
        let a = set(8, [1, 2, 3]);
        let b = set(8, [2, 3, 4]);
        let exact_two = (0..100u64)
            .filter(|&seed| {
                let f = build_hash_family(1, 1 << 20, seed).unwrap();
                similarity_bits(&encode(&a, &f).unwrap(), &encode(&b, &f).unwrap()).unwrap() == 2
            })
            .count();
        assert!(exact_two >= 95, "{exact_two}");
    }

    #[test]
    fn collision_count_diagonal_cases() {
        let one = set(16, [7]);
        for k in 1..6 {
            let f = build_hash_family(k, 64, k as u64).unwrap();
            assert!(collision_count(&one, &one, &f).unwrap() >= k as u64);
        }
        let a = set(256, (0..40).map(|i| i * 5));
        let f = build_hash_family(1, 1 << 16, 5).unwrap();
        assert!(collision_count(&a, &a, &f).unwrap() >= a.len() as u64);
    }

    #[test]
    fn collision_count_matches_brute_force() {
        let a = set(128, [0, 3, 9, 17, 40, 41]);
        let b = set(128, [3, 4, 40, 90, 100]);
        for seed in 0..20 {
            let f = build_hash_family(3, 16, seed).unwrap();
            let mut brute = 0u64;
            for &wa in a.members() {
                for &wb in b.members() {
                    for i in 0..3 {
                        for j in 0..3 {
                            brute += (f.hash(i, wa) == f.hash(j, wb)) as u64;
                        }
                    }
                }
            }
            assert_eq!(collision_count(&a, &b, &f).unwrap(), brute);
        }
    }

    #[test]
    fn disjoint_collision_mean_matches_pair_count() {
        // K = 1: E[count] = |A||B|/m exactly for disjoint sets.
        let a = set(64, 0..8);
        let b = set(64, 8..20);
        let m = 64usize;
        let trials = 20_000u64;
        let samples: Vec<f64> = (0..trials)
            .map(|s| collision_count(&a, &b, &build_hash_family(1, m, s).unwrap()).unwrap() as f64)
            .collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let expected = 8.0 * 12.0 / m as f64;
        assert!((mean - expected).abs() <= 3.0 * (var / trials as f64).sqrt());
    }

    #[test]
    fn expected_similarity_examples() {
        assert_eq!(expected_similarity(32, 0, 4, 4096).unwrap(), 4.0);
        assert_eq!(expected_similarity(32, 8, 4, 4096).unwrap(), 35.0);
        assert!(expected_similarity(32, 33, 4, 4096).is_err());
        assert!(expected_similarity(32, 3, 4, 1).is_err());
    }

    #[test]
    fn code_frame_layout() {
        let code = BinaryCode::from_positions(12, [0, 3, 8, 11]).unwrap();
        let bytes = write_code(
            CodeHeader {
                k: 2,
                m: 12,
                seed: 0x0102,
            },
            &code,
        )
        .unwrap();
        assert_eq!(&bytes[..4], b"RWC1");
        assert_eq!(&bytes[4..12], &2u64.to_le_bytes());
        assert_eq!(&bytes[12..20], &12u64.to_le_bytes());
        assert_eq!(&bytes[20..28], &0x0102u64.to_le_bytes());
        assert_eq!(&bytes[28..], &[0b0000_1001, 0b0000_1001]);
    }

    #[test]
    fn code_frame_rejects_corruption() {
        let code = BinaryCode::from_positions(12, [1]).unwrap();
        let header = CodeHeader {
            k: 1,
            m: 12,
            seed: 0,
        };
        let bytes = write_code(header, &code).unwrap();
        assert!(read_code(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_code(&bad).is_err());
        let mut padded = bytes.clone();
        *padded.last_mut().unwrap() |= 0x80;
        assert!(read_code(&padded).is_err());
        assert!(write_code(CodeHeader { m: 13, ..header }, &code).is_err());
    }

    proptest! {
        #[test]
        fn code_frame_round_trips(
            len in 2usize..300,
            raw in proptest::collection::vec(any::<usize>(), 0..40),
            k in 1u64..8,
            seed in any::<u64>(),
        ) {
            let code = BinaryCode::from_positions(len, raw.iter().map(|p| p % len)).unwrap();
            let header = CodeHeader { k, m: len as u64, seed };
            let (h, back) = read_code(&write_code(header, &code).unwrap()).unwrap();
            prop_assert_eq!(h, header);
            prop_assert_eq!(back, code);
        }

        #[test]
        fn popcount_is_cached_and_bounded(
            ids in proptest::collection::btree_set(0u32..1000, 1..40usize),
            k in 1usize..6,
            m in 2usize..2048,
            seed in any::<u64>(),
        ) {
            let s = set(1000, ids);
            let f = build_hash_family(k, m, seed).unwrap();
            let code = encode(&s, &f).unwrap();
            prop_assert_eq!(code.popcount(), code.ones().count());
            prop_assert!(code.popcount() <= (k * s.len()).min(m));
            for &w in s.members() {
                for p in f.positions(w) {
                    prop_assert!(code.get(p));
                }
            }
        }
    }
}
