//! Desk-scale robustness benchmark: a seeded synthetic corpus, the four
//! distortion families, ROC curves and per-distortion sensitivity panels.

pub mod corpus;
pub mod distort;
pub mod roc;
pub mod suite;

pub use corpus::{generate_corpus, generate_video, CorpusParams};
pub use distort::{apply_distortion, apply_distortion_with, DistortionRanges, DistortionSpec};
pub use roc::{build_roc, FprPoint, RocReport};
pub use suite::{run_robustness_suite, Bucket, SensitivityPanel, SimilarPair, SuiteConfig, SuiteReport};
