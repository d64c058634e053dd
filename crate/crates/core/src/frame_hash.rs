//! Block-sum sign hash.
//!
//! The frame is cut into a `B x B` grid of equal blocks. With `S_k` the pixel
//! sum of block `k`, `S` the total and `K = B * B`, bit `k` is set iff
//! `K * S_k - S > 0`, i.e. the block is brighter than the frame average.
//! Only additions and integer scalar multiplications are involved, which is
//! what lets [`crate::enc_pipeline`] evaluate the same quantity under
//! Paillier encryption.

use std::fmt;

use crate::media::PreprocessedFrame;
use crate::{Error, Result};

/// Default number of blocks per side.
pub const DEFAULT_BLOCK_GRID: usize = 8;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FrameHash {
    words: Vec<u64>,
    block_count: usize,
}

impl FrameHash {
    pub fn zeros(block_count: usize) -> Self {
        FrameHash {
            words: vec![0; block_count.div_ceil(64)],
            block_count,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut h = FrameHash::zeros(bits.len());
        for (k, &b) in bits.iter().enumerate() {
            h.set(k, b);
        }
        h
    }

    /// Bit `k` lives in byte `k / 8` at position `k % 8`.
    pub fn from_bytes(bytes: &[u8], block_count: usize) -> Result<Self> {
        if bytes.len() != Self::byte_len(block_count) {
            return Err(Error::LengthMismatch(bytes.len() * 8, block_count));
        }
        let mut h = FrameHash::zeros(block_count);
        for k in 0..block_count {
            h.set(k, bytes[k / 8] >> (k % 8) & 1 == 1);
        }
        if bytes.iter().enumerate().any(|(i, &b)| {
            (0..8).any(|j| i * 8 + j >= block_count && b >> j & 1 == 1)
        }) {
            return Err(Error::Malformed("padding bits set in frame hash".into()));
        }
        Ok(h)
    }

    pub fn byte_len(block_count: usize) -> usize {
        block_count.div_ceil(8)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; Self::byte_len(self.block_count)];
        for k in 0..self.block_count {
            if self.bit(k) {
                out[k / 8] |= 1 << (k % 8);
            }
        }
        out
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn bit(&self, k: usize) -> bool {
        assert!(k < self.block_count);
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn set(&mut self, k: usize, value: bool) {
        assert!(k < self.block_count);
        let mask = 1u64 << (k % 64);
        if value {
            self.words[k / 64] |= mask;
        } else {
            self.words[k / 64] &= !mask;
        }
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.block_count).map(|k| self.bit(k))
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Hamming distance without the length check.
    #[inline]
    pub(crate) fn distance_unchecked(&self, other: &FrameHash) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

impl fmt::Debug for FrameHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FrameHash(")?;
        for b in self.to_bytes() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

fn check_grid(resolution: usize, block_grid: usize) -> Result<usize> {
    if block_grid == 0 || resolution == 0 || resolution % block_grid != 0 {
        return Err(Error::Config(format!(
            "resolution {resolution} is not divisible by block grid {block_grid}"
        )));
    }
    Ok(resolution / block_grid)
}

/// Per-block pixel sums in row-major block order.
pub fn block_sums(frame: &PreprocessedFrame, block_grid: usize) -> Result<Vec<i64>> {
    let side = check_grid(frame.resolution, block_grid)?;
    let f = frame.resolution;
    let mut sums = vec![0i64; block_grid * block_grid];
    for (y, row) in frame.pixels.chunks_exact(f).enumerate() {
        let by = y / side;
        for (bx, chunk) in row.chunks_exact(side).enumerate() {
            sums[by * block_grid + bx] += chunk.iter().map(|&p| i64::from(p)).sum::<i64>();
        }
    }
    Ok(sums)
}

/// `K * S_k - S` for every block `k`.
pub fn block_differences(frame: &PreprocessedFrame, block_grid: usize) -> Result<Vec<i64>> {
    let sums = block_sums(frame, block_grid)?;
    let k = sums.len() as i64;
    let total: i64 = sums.iter().sum();
    Ok(sums.iter().map(|s| k * s - total).collect())
}

/// Hashes one pre-processed frame. Exact ties map to 0.
pub fn hash_frame(frame: &PreprocessedFrame, block_grid: usize) -> Result<FrameHash> {
    let diffs = block_differences(frame, block_grid)?;
    let mut h = FrameHash::zeros(diffs.len());
    for (k, d) in diffs.iter().enumerate() {
        if *d > 0 {
            h.set(k, true);
        }
    }
    Ok(h)
}

/// L1 distance of the bit vectors, i.e. the Hamming distance.
pub fn hash_distance(a: &FrameHash, b: &FrameHash) -> Result<u32> {
    if a.block_count != b.block_count {
        return Err(Error::LengthMismatch(a.block_count, b.block_count));
    }
    Ok(a.distance_unchecked(b))
}
