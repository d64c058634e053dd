//! Blank-frame removal and keyframe selection.

use serde::{Deserialize, Serialize};

use crate::frame_hash::{hash_frame, FrameHash, DEFAULT_BLOCK_GRID};
use crate::media::{PreprocessedFrame, DEFAULT_RESOLUTION};
use crate::par::{self, Execution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    /// Frames whose luma standard deviation is below this are blank.
    pub blank_std_threshold: f64,
    /// A frame becomes a keyframe when its hash differs from the previous
    /// keyframe's by more than this many bits.
    pub keyframe_distance_threshold: u32,
    pub resolution: usize,
    pub block_grid: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            blank_std_threshold: 4.0,
            keyframe_distance_threshold: 16,
            resolution: DEFAULT_RESOLUTION,
            block_grid: DEFAULT_BLOCK_GRID,
        }
    }
}

impl SelectionParams {
    pub fn block_count(&self) -> usize {
        self.block_grid * self.block_grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_grid == 0 || self.resolution == 0 || self.resolution % self.block_grid != 0 {
            return Err(Error::Config(format!(
                "resolution {} is not divisible by block grid {}",
                self.resolution, self.block_grid
            )));
        }
        if self.resolution > u16::MAX as usize || self.block_grid > u16::MAX as usize {
            return Err(Error::Config("resolution and block grid must fit in 16 bits".into()));
        }
        let k = self.block_count() as u32;
        if !(1..=k).contains(&self.keyframe_distance_threshold) {
            return Err(Error::Config(format!(
                "keyframe threshold {} outside [1, {k}]",
                self.keyframe_distance_threshold
            )));
        }
        if !(self.blank_std_threshold >= 0.0 && self.blank_std_threshold.is_finite()) {
            return Err(Error::Config(format!(
                "blank threshold {} must be a non-negative number",
                self.blank_std_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyframeRecord {
    pub hash: FrameHash,
    /// Content frames discarded since the previous keyframe. Blank frames
    /// are not counted.
    pub dropped_before: u32,
    pub source_index: u32,
}

/// Keyframes plus the bookkeeping needed for the frame-count identity
/// `total = blanks + keyframes + sum(dropped_before) + trailing_drops`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub records: Vec<KeyframeRecord>,
    pub total_frames: u32,
    pub blank_count: u32,
    /// Frames dropped after the last keyframe.
    pub trailing_drops: u32,
}

impl Selection {
    pub fn content_frames(&self) -> u32 {
        self.total_frames - self.blank_count
    }

    pub fn keyframe_percentage(&self) -> f64 {
        match self.content_frames() {
            0 => 0.0,
            c => 100.0 * self.records.len() as f64 / f64::from(c),
        }
    }
}

pub fn is_blank(frame: &PreprocessedFrame, params: &SelectionParams) -> bool {
    frame.content_std < params.blank_std_threshold
}

/// Sequential selection scan. `None` marks a blank frame.
pub fn select_from_hashes<I>(frames: I, keyframe_distance_threshold: u32) -> Selection
where
    I: IntoIterator<Item = (u32, Option<FrameHash>)>,
{
    let mut sel = Selection::default();
    let mut pending = 0u32;
    for (source_index, hash) in frames {
        sel.total_frames += 1;
        let Some(hash) = hash else {
            sel.blank_count += 1;
            continue;
        };
        let is_key = match sel.records.last() {
            None => true,
            Some(prev) => prev.hash.distance_unchecked(&hash) > keyframe_distance_threshold,
        };
        if is_key {
            sel.records.push(KeyframeRecord {
                hash,
                dropped_before: pending,
                source_index,
            });
            pending = 0;
        } else {
            pending += 1;
        }
    }
    sel.trailing_drops = pending;
    sel
}

/// Hashes every non-blank frame and runs the selection scan.
pub fn select_keyframes(frames: &[PreprocessedFrame], params: &SelectionParams) -> Result<Selection> {
    select_keyframes_with(frames, params, Execution::default())
}

pub fn select_keyframes_with(
    frames: &[PreprocessedFrame],
    params: &SelectionParams,
    exec: Execution,
) -> Result<Selection> {
    params.validate()?;
    if let Some(f) = frames.iter().find(|f| f.resolution != params.resolution) {
        return Err(Error::Config(format!(
            "frame resolution {} differs from configured {}",
            f.resolution, params.resolution
        )));
    }
    let hashes = par::try_map(exec, frames, |f| -> Result<(u32, Option<FrameHash>)> {
        if is_blank(f, params) {
            Ok((f.source_index, None))
        } else {
            Ok((f.source_index, Some(hash_frame(f, params.block_grid)?)))
        }
    })?;
    Ok(select_from_hashes(hashes, params.keyframe_distance_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pf(pixels: Vec<u8>, idx: u32) -> PreprocessedFrame {
        let content_std = crate::media::std_dev(&pixels);
        PreprocessedFrame {
            resolution: 64,
            pixels,
            source_index: idx,
            content_std,
        }
    }

    /// Left half bright or top half bright: hashes differ in 32 bits.
    fn half(vertical: bool, idx: u32) -> PreprocessedFrame {
        let px = (0..4096)
            .map(|i| {
                let (x, y) = (i % 64, i / 64);
                if (vertical && x < 32) || (!vertical && y < 32) { 200 } else { 20 }
            })
            .collect();
        pf(px, idx)
    }

    fn params() -> SelectionParams {
        SelectionParams::default()
    }

    #[test]
    fn blank_rule() {
        assert!(is_blank(&pf(vec![7; 4096], 0), &params()));
        let checker = (0..4096).map(|i| if (i + i / 64) % 2 == 0 { 0 } else { 255 }).collect();
        assert!(!is_blank(&pf(checker, 0), &params()));
        let mut at_threshold = pf(vec![0; 4096], 0);
        at_threshold.content_std = 4.0;
        assert!(!is_blank(&at_threshold, &params()));
    }

    #[test]
    fn identical_frames_give_one_keyframe() {
        let frames: Vec<_> = (0..10).map(|i| half(true, i)).collect();
        let s = select_keyframes(&frames, &params()).unwrap();
        assert_eq!(s.records.len(), 1);
        assert_eq!(s.records[0].dropped_before, 0);
        assert_eq!(s.trailing_drops, 9);
    }

    #[test]
    fn alternating_frames_are_all_keyframes() {
        let frames: Vec<_> = (0..6).map(|i| half(i % 2 == 0, i)).collect();
        let s = select_keyframes(&frames, &params()).unwrap();
        assert_eq!(s.records.len(), 6);
        assert!(s.records.iter().all(|r| r.dropped_before == 0));
    }

    #[test]
    fn aaab_trace() {
        let frames = vec![half(true, 0), half(true, 1), half(true, 2), half(false, 3)];
        let s = select_keyframes(&frames, &params()).unwrap();
        let trace: Vec<_> = s.records.iter().map(|r| (r.source_index, r.dropped_before)).collect();
        assert_eq!(trace, vec![(0, 0), (3, 2)]);
        assert_eq!(s.trailing_drops, 0);
    }

    #[test]
    fn all_blank_is_empty_not_error() {
        let frames: Vec<_> = (0..5).map(|i| pf(vec![0; 4096], i)).collect();
        let s = select_keyframes(&frames, &params()).unwrap();
        assert!(s.records.is_empty());
        assert_eq!(s.blank_count, 5);
        assert_eq!(s.keyframe_percentage(), 0.0);
    }

    #[test]
    fn params_validation() {
        let mut p = params();
        p.keyframe_distance_threshold = 0;
        assert!(p.validate().is_err());
        p.keyframe_distance_threshold = 65;
        assert!(p.validate().is_err());
        let mut p = params();
        p.block_grid = 7;
        assert!(p.validate().is_err());
        let mut p = params();
        p.blank_std_threshold = -1.0;
        assert!(p.validate().is_err());
    }

    fn sequence() -> impl Strategy<Value = Vec<Option<u64>>> {
        // a handful of distinct words so both keep and drop paths happen
        proptest::collection::vec(
            prop_oneof![1 => Just(None), 6 => (0u64..6).prop_map(|w| Some(w * 0x0f0f_0f0f_3333_5555))],
            0..60,
        )
    }

    fn hashes(seq: &[Option<u64>]) -> Vec<(u32, Option<FrameHash>)> {
        seq.iter()
            .enumerate()
            .map(|(i, w)| {
                let h = w.map(|w| FrameHash::from_bits(&(0..64).map(|b| w >> b & 1 == 1).collect::<Vec<_>>()));
                (i as u32, h)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn frame_count_identity(seq in sequence(), thr in 1u32..40) {
            let s = select_from_hashes(hashes(&seq), thr);
            let dropped: u32 = s.records.iter().map(|r| r.dropped_before).sum();
            prop_assert_eq!(s.total_frames as usize, seq.len());
            prop_assert_eq!(s.blank_count + s.records.len() as u32 + dropped + s.trailing_drops, s.total_frames);
            if let Some(first) = s.records.first() {
                prop_assert_eq!(first.dropped_before, 0);
            }
            for w in s.records.windows(2) {
                prop_assert!(w[0].source_index < w[1].source_index);
                prop_assert!(hash_distance_ok(&w[0].hash, &w[1].hash, thr));
            }
        }

        #[test]
        fn leading_blanks_are_invisible(seq in sequence(), blanks in 0usize..10, thr in 1u32..40) {
            let base = select_from_hashes(hashes(&seq), thr);
            let mut padded = vec![None; blanks];
            padded.extend(seq.iter().copied());
            let s = select_from_hashes(hashes(&padded), thr);
            let strip = |s: &Selection| s.records.iter().map(|r| (r.hash.clone(), r.dropped_before)).collect::<Vec<_>>();
            prop_assert_eq!(strip(&s), strip(&base));
            prop_assert_eq!(s.blank_count, base.blank_count + blanks as u32);
        }
    }

    fn hash_distance_ok(a: &FrameHash, b: &FrameHash, thr: u32) -> bool {
        a.distance_unchecked(b) > thr
    }
}
