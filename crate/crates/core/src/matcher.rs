//! Modified longest-common-substring matching of video hashes.
//!
//! Two keyframe records match when their hashes are within `hash_threshold`
//! bits *and* their dropped-frame counts are within `drop_threshold`. A
//! contiguous diagonal run of matches scores `1 + round(avg dropped)` per
//! matched pair; the video score is the best run.

use serde::{Deserialize, Serialize};

use crate::keyframe::KeyframeRecord;
use crate::video_hash::VideoHash;
use crate::{Error, Result};

/// How the average dropped-frame count of a matched pair is rounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    #[default]
    HalfUp,
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchParams {
    pub hash_threshold: u32,
    pub drop_threshold: u32,
    pub rounding: Rounding,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            hash_threshold: 8,
            drop_threshold: 5,
            rounding: Rounding::HalfUp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub score: u64,
    /// `(i, j)` record index pairs of the best run.
    pub alignment: Vec<(usize, usize)>,
    pub self_score_a: u64,
    pub self_score_b: u64,
}

/// Score added for one matched record pair.
#[inline]
pub fn increment(dropped_a: u32, dropped_b: u32, rounding: Rounding) -> u64 {
    let sum = u64::from(dropped_a) + u64::from(dropped_b);
    1 + match rounding {
        Rounding::HalfUp => (sum + 1) / 2,
        Rounding::Floor => sum / 2,
    }
}

/// Score of a hash matched against itself along the main diagonal:
/// `sum(1 + dropped_before)`.
pub fn self_score(records: &[KeyframeRecord]) -> u64 {
    records.iter().map(|r| 1 + u64::from(r.dropped_before)).sum()
}

#[inline]
fn records_match(a: &KeyframeRecord, b: &KeyframeRecord, params: &MatchParams) -> bool {
    a.dropped_before.abs_diff(b.dropped_before) <= params.drop_threshold
        && a.hash.distance_unchecked(&b.hash) <= params.hash_threshold
}

/// Compares two video hashes built with the same resolution and block grid.
pub fn compare(a: &VideoHash, b: &VideoHash, params: &MatchParams) -> Result<MatchResult> {
    let (ha, hb) = (&a.header, &b.header);
    if (ha.resolution, ha.block_grid) != (hb.resolution, hb.block_grid) {
        return Err(Error::ParameterMismatch(format!(
            "F={} B={} vs F={} B={}",
            ha.resolution, ha.block_grid, hb.resolution, hb.block_grid
        )));
    }
    compare_records(&a.records, &b.records, params)
}

/// The O(m*n) dynamic program over two record sequences.
pub fn compare_records(
    a: &[KeyframeRecord],
    b: &[KeyframeRecord],
    params: &MatchParams,
) -> Result<MatchResult> {
    if let (Some(x), Some(y)) = (a.first(), b.first()) {
        if x.hash.block_count() != y.hash.block_count() {
            return Err(Error::LengthMismatch(x.hash.block_count(), y.hash.block_count()));
        }
    }
    // (run value, run length) ending at the previous row's column j.
    let mut prev = vec![(0u64, 0usize); b.len() + 1];
    let mut cur = prev.clone();
    // (score, start_a, start_b, length)
    let mut best: Option<(u64, usize, usize, usize)> = None;
    for (i, ra) in a.iter().enumerate() {
        for (j, rb) in b.iter().enumerate() {
            cur[j + 1] = if records_match(ra, rb, params) {
                let (v, len) = prev[j];
                let cell = (v + increment(ra.dropped_before, rb.dropped_before, params.rounding), len + 1);
                let (start_a, start_b) = (i + 1 - cell.1, j + 1 - cell.1);
                let better = match best {
                    None => true,
                    Some((s, sa, sb, _)) => cell.0 > s || (cell.0 == s && (start_a, start_b) < (sa, sb)),
                };
                if better {
                    best = Some((cell.0, start_a, start_b, cell.1));
                }
                cell
            } else {
                (0, 0)
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (score, alignment) = match best {
        Some((s, sa, sb, len)) => (s, (0..len).map(|t| (sa + t, sb + t)).collect()),
        None => (0, Vec::new()),
    };
    Ok(MatchResult {
        score,
        alignment,
        self_score_a: self_score(a),
        self_score_b: self_score(b),
    })
}

/// `score / min(self scores)`, clamped to `[0, 1]`; 0 when either side is empty.
pub fn similarity(result: &MatchResult) -> f64 {
    let denom = result.self_score_a.min(result.self_score_b);
    if denom == 0 {
        return 0.0;
    }
    (result.score as f64 / denom as f64).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_hash::FrameHash;
    use proptest::prelude::*;

    fn word_hash(word: u64) -> FrameHash {
        FrameHash::from_bits(&(0..64).map(|b| word >> b & 1 == 1).collect::<Vec<_>>())
    }

    fn symbol_hash(sym: u8) -> FrameHash {
        // splitmix64 finalizer: distinct symbols get unrelated words
        let mut z = u64::from(sym).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        word_hash(z ^ (z >> 31))
    }

    fn string_records(s: &str) -> Vec<KeyframeRecord> {
        s.bytes()
            .enumerate()
            .map(|(i, c)| KeyframeRecord {
                hash: symbol_hash(c - b'A'),
                dropped_before: 0,
                source_index: i as u32,
            })
            .collect()
    }

    fn exact() -> MatchParams {
        MatchParams {
            hash_threshold: 0,
            drop_threshold: 0,
            rounding: Rounding::HalfUp,
        }
    }

    /// Textbook longest common substring over bytes.
    fn classical_lcs(a: &[u8], b: &[u8]) -> usize {
        let mut best = 0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut k = 0;
                while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                    k += 1;
                }
                best = best.max(k);
            }
        }
        best
    }

    /// Enumerates every common-substring alignment under the dual condition.
    fn brute_force(a: &[KeyframeRecord], b: &[KeyframeRecord], p: &MatchParams) -> u64 {
        let mut best = 0;
        for i0 in 0..a.len() {
            for j0 in 0..b.len() {
                for len in 1..=(a.len() - i0).min(b.len() - j0) {
                    let pairs: Vec<_> = (0..len).map(|t| (&a[i0 + t], &b[j0 + t])).collect();
                    if pairs.iter().all(|(x, y)| {
                        x.hash.distance_unchecked(&y.hash) <= p.hash_threshold
                            && x.dropped_before.abs_diff(y.dropped_before) <= p.drop_threshold
                    }) {
                        let s = pairs
                            .iter()
                            .map(|(x, y)| increment(x.dropped_before, y.dropped_before, p.rounding))
                            .sum();
                        best = best.max(s);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn symbol_hashes_are_distinct() {
        for a in 0..26u8 {
            for b in 0..26u8 {
                assert_eq!(symbol_hash(a) == symbol_hash(b), a == b);
            }
        }
    }

    #[test]
    fn abacab_example() {
        let a = string_records("ABABACABBC");
        let b = string_records("ABACABACBBCA");
        let r = compare_records(&a, &b, &exact()).unwrap();
        assert_eq!(r.score, 6);
        let matched: String = r.alignment.iter().map(|&(i, _)| "ABABACABBC".as_bytes()[i] as char).collect();
        assert_eq!(matched, "ABACAB");
        assert!(r.alignment.windows(2).all(|w| w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1));
    }

    #[test]
    fn tie_break_prefers_earliest_start() {
        let a = string_records("ABXAB");
        let b = string_records("AB");
        let r = compare_records(&a, &b, &exact()).unwrap();
        assert_eq!(r.score, 2);
        assert_eq!(r.alignment, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn self_match_and_empty() {
        let mut a = string_records("ABCA");
        for (r, d) in a.iter_mut().zip([0, 7, 3, 12]) {
            r.dropped_before = d;
        }
        let r = compare_records(&a, &a, &MatchParams::default()).unwrap();
        assert_eq!(r.score, 4 + 22);
        assert_eq!(r.score, r.self_score_a);
        assert_eq!(similarity(&r), 1.0);

        let empty = compare_records(&a, &[], &MatchParams::default()).unwrap();
        assert_eq!((empty.score, similarity(&empty)), (0, 0.0));
        let disjoint = compare_records(&string_records("AAA"), &string_records("BBB"), &exact()).unwrap();
        assert_eq!(similarity(&disjoint), 0.0);
    }

    #[test]
    fn increment_rounding() {
        assert_eq!(increment(2, 3, Rounding::HalfUp), 4);
        assert_eq!(increment(2, 3, Rounding::Floor), 3);
        assert_eq!(increment(0, 0, Rounding::HalfUp), 1);
    }

    #[test]
    fn drop_condition_gates_matches() {
        let mut a = string_records("AB");
        let b = string_records("AB");
        a[1].dropped_before = 6;
        let r = compare_records(&a, &b, &MatchParams { hash_threshold: 0, ..Default::default() }).unwrap();
        assert_eq!(r.score, 1);
        a[1].dropped_before = 5;
        let r = compare_records(&a, &b, &MatchParams { hash_threshold: 0, ..Default::default() }).unwrap();
        assert_eq!(r.score, 1 + 4);
    }

    #[test]
    fn large_comparison_is_fast() {
        let a: Vec<_> = (0..200)
            .map(|i| KeyframeRecord {
                hash: FrameHash::from_bits(&(0..64).map(|b| (i * 7 + b) % 3 == 0).collect::<Vec<_>>()),
                dropped_before: i as u32 % 9,
                source_index: i as u32,
            })
            .collect();
        let start = std::time::Instant::now();
        let r = compare_records(&a, &a, &MatchParams::default()).unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        assert!(r.score >= r.self_score_a);
        assert!(40_000.0 / elapsed >= 1e5, "{elapsed}s for 40k cells");
    }

    fn record_strategy() -> impl Strategy<Value = KeyframeRecord> {
        // small alphabet of hashes so near-matches are common
        (0u64..4, 0u64..64, 0u32..8).prop_map(|(base, flip, d)| {
            let mut bits: Vec<bool> = (0..64).map(|b| base.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> b & 1 == 1).collect();
            bits[flip as usize] ^= flip % 3 == 0;
            KeyframeRecord {
                hash: FrameHash::from_bits(&bits),
                dropped_before: d,
                source_index: 0,
            }
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            a in proptest::collection::vec(record_strategy(), 0..=12),
            b in proptest::collection::vec(record_strategy(), 0..=12),
            th in 0u32..4, td in 0u32..4, floor: bool,
        ) {
            let p = MatchParams { hash_threshold: th, drop_threshold: td, rounding: if floor { Rounding::Floor } else { Rounding::HalfUp } };
            let r = compare_records(&a, &b, &p).unwrap();
            prop_assert_eq!(r.score, brute_force(&a, &b, &p));
            let back = compare_records(&b, &a, &p).unwrap();
            prop_assert_eq!(back.score, r.score);
            let alignment_score: u64 = r.alignment.iter()
                .map(|&(i, j)| increment(a[i].dropped_before, b[j].dropped_before, p.rounding))
                .sum();
            prop_assert_eq!(alignment_score, r.score);
        }

        #[test]
        fn reduces_to_classical_lcs(a in "[A-D]{0,30}", b in "[A-D]{0,30}") {
            let r = compare_records(&string_records(&a), &string_records(&b), &exact()).unwrap();
            prop_assert_eq!(r.score as usize, classical_lcs(a.as_bytes(), b.as_bytes()));
        }

        #[test]
        fn monotone_in_hash_threshold(
            a in proptest::collection::vec(record_strategy(), 0..=10),
            b in proptest::collection::vec(record_strategy(), 0..=10),
            th in 0u32..10,
        ) {
            let lo = MatchParams { hash_threshold: th, ..Default::default() };
            let hi = MatchParams { hash_threshold: th + 1, ..Default::default() };
            prop_assert!(compare_records(&a, &b, &hi).unwrap().score >= compare_records(&a, &b, &lo).unwrap().score);
        }
    }
}
