//! Robust perceptual video hashing that works the same on plaintext frames
//! and on Paillier-encrypted frames.
//!
//! The pipeline has four phases:
//!
//! 1. content-frame selection ([`keyframe`]): blank frames are removed and
//!    only frames that add new information become keyframes;
//! 2. pre-processing ([`media`]): luma extraction, fixed-resolution bilinear
//!    resize and histogram equalization;
//! 3. hashing ([`frame_hash`], [`video_hash`]): a block-sum sign hash per
//!    keyframe, concatenated in temporal order together with the number of
//!    frames dropped between keyframes;
//! 4. comparison ([`matcher`]): a longest-common-substring dynamic program
//!    whose match condition checks both hash distance and dropped-frame
//!    difference.
//!
//! The frame hash only needs additions and integer scalar multiplications,
//! so [`enc_pipeline`] can compute it over Paillier ciphertexts
//! ([`paillier`]) and obtain the exact same [`VideoHash`].
//!
//! [`bench`] holds the synthetic corpus, distortion generators and ROC
//! harness used to measure robustness.

pub mod bench;
pub mod enc_pipeline;
mod error;
pub mod frame_hash;
pub mod keyframe;
pub mod matcher;
pub mod media;
pub mod paillier;
pub mod par;
pub mod video_hash;
mod wire;

pub use error::{Error, Result};
pub use frame_hash::{hash_distance, hash_frame, FrameHash};
pub use keyframe::{is_blank, select_keyframes, KeyframeRecord, Selection, SelectionParams};
pub use matcher::{compare, similarity, MatchParams, MatchResult, Rounding};
pub use media::{
    load_frame_directory, parse_y4m, preprocess, write_y4m, Frame, FrameRate, PreprocessedFrame,
    VideoStream,
};
pub use par::Execution;
pub use video_hash::{build_video_hash, HashIndex, Threshold, VideoHash, VideoHeader};
