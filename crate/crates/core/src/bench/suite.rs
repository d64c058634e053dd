//! Robustness suite: similar pairs (original vs distorted variant) against
//! different pairs (original vs every other original).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::distort::{apply_distortion_with, DistortionRanges, DistortionSpec};
use super::roc::{build_roc, RocReport, DEFAULT_TARGET_FPRS};
use crate::keyframe::SelectionParams;
use crate::matcher::{compare, similarity, MatchParams};
use crate::media::VideoStream;
use crate::par::{self, Execution};
use crate::video_hash::{build_video_hash_with, VideoHash};
use crate::{Error, Result};

pub const COMPRESSION_NOTE: &str = "compression surrogate: per-frame 8x8 DCT quantization with a scaled \
JPEG luminance table stands in for MPEG encoding";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub variants_per_video: usize,
    pub ranges: DistortionRanges,
    pub selection: SelectionParams,
    pub matching: MatchParams,
    pub seed: u64,
    pub target_fprs: Vec<f64>,
    /// FPR at which the sensitivity panels pick their operating threshold.
    pub panel_fpr: f64,
    /// Originals at least this similar to an earlier original are dropped.
    pub dedup_similarity: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            variants_per_video: 25,
            ranges: DistortionRanges::full(),
            selection: SelectionParams::default(),
            matching: MatchParams::default(),
            seed: 0,
            target_fprs: DEFAULT_TARGET_FPRS.to_vec(),
            panel_fpr: 1e-3,
            dedup_similarity: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarPair {
    pub source_id: String,
    pub variant: usize,
    pub spec: DistortionSpec,
    pub score: u64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_similarity: Option<f64>,
    /// Fraction of the bucket at or above the panel's operating threshold.
    pub tpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPanel {
    pub parameter: String,
    pub operating_fpr: f64,
    pub operating_threshold: f64,
    pub buckets: Vec<Bucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub videos: usize,
    pub duplicates_removed: Vec<String>,
    pub empty_hashes_removed: Vec<String>,
    pub roc: RocReport,
    pub panels: Vec<SensitivityPanel>,
    pub similar: Vec<SimilarPair>,
    pub different_similarities: Vec<f64>,
    pub notes: Vec<String>,
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        self.selection.validate()?;
        if self.variants_per_video == 0 {
            return Err(Error::Config("variants_per_video must be at least 1".into()));
        }
        if !(self.panel_fpr > 0.0 && self.panel_fpr <= 1.0) {
            return Err(Error::Config(format!("panel FPR {} outside (0, 1]", self.panel_fpr)));
        }
        if self.target_fprs.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Config("target FPRs must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

fn panel_edges() -> Vec<(&'static str, Vec<f64>)> {
    vec![
        ("gamma", vec![0.5, 0.6, 0.75, 0.9, 1.1, 1.35, 1.65, 2.0]),
        ("snr_db", vec![15.0, 20.0, 25.0, 35.0, 45.0, 60.0]),
        ("quality", vec![2.0, 5.0, 8.0, 11.0, 14.0, 17.0, 20.0, 23.0]),
        ("scale", vec![0.25, 0.4, 0.55, 0.7, 0.85, 1.0]),
    ]
}

fn parameter_value(spec: &DistortionSpec, parameter: &str) -> Option<f64> {
    match parameter {
        "gamma" => Some(spec.gamma),
        "snr_db" => spec.snr_db,
        "quality" => spec.quality.map(f64::from),
        "scale" => Some(spec.scale),
        _ => None,
    }
}

/// Buckets are `[lo, hi)` except the last, which includes `hi`.
pub fn bucketize(pairs: &[SimilarPair], parameter: &str, edges: &[f64], threshold: f64) -> Vec<Bucket> {
    let last = edges.len() - 2;
    edges
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (lo, hi) = (w[0], w[1]);
            let sims: Vec<f64> = pairs
                .iter()
                .filter_map(|p| parameter_value(&p.spec, parameter).map(|v| (v, p.similarity)))
                .filter(|&(v, _)| v >= lo && (v < hi || (i == last && v <= hi)))
                .map(|(_, s)| s)
                .collect();
            let n = sims.len();
            Bucket {
                lo,
                hi,
                count: n,
                mean_similarity: (n > 0).then(|| sims.iter().sum::<f64>() / n as f64),
                tpr: (n > 0).then(|| sims.iter().filter(|&&s| s >= threshold).count() as f64 / n as f64),
            }
        })
        .collect()
}

impl SensitivityPanel {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,lo,hi,count,mean_similarity,tpr\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for b in &self.buckets {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.parameter,
                b.lo,
                b.hi,
                b.count,
                opt(b.mean_similarity),
                opt(b.tpr)
            ));
        }
        out
    }
}

/// Hashes every original, drops empty hashes and near-duplicates, scores
/// each kept original against its distorted variants and against every
/// other kept original, and builds the ROC and sensitivity panels.
pub fn run_robustness_suite(corpus: &[VideoStream], config: &SuiteConfig, exec: Execution) -> Result<SuiteReport> {
    config.validate()?;
    let hashes = par::try_map(exec, corpus, |v| build_video_hash_with(v, &config.selection, Execution::Sequential))?;

    let mut kept: Vec<usize> = Vec::new();
    let mut duplicates_removed = Vec::new();
    let mut empty_hashes_removed = Vec::new();
    for (i, h) in hashes.iter().enumerate() {
        if h.records.is_empty() {
            empty_hashes_removed.push(h.header.source_id.clone());
            continue;
        }
        let sims = par::try_map(exec, &kept, |&k| compare(&hashes[k], h, &config.matching).map(|r| similarity(&r)))?;
        if sims.iter().any(|&s| s >= config.dedup_similarity) {
            duplicates_removed.push(h.header.source_id.clone());
        } else {
            kept.push(i);
        }
    }
    if kept.len() < 2 {
        return Err(Error::Config("fewer than 2 usable videos after deduplication".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let jobs: Vec<(usize, usize, DistortionSpec)> = kept
        .iter()
        .flat_map(|&v| (0..config.variants_per_video).map(move |k| (v, k)))
        .map(|(v, k)| (v, k, config.ranges.sample(&mut rng)))
        .collect();
    let similar = par::try_map(exec, &jobs, |&(v, variant, spec)| -> Result<SimilarPair> {
        let distorted = apply_distortion_with(&corpus[v], &spec, Execution::Sequential)?;
        let h = build_video_hash_with(&distorted, &config.selection, Execution::Sequential)?;
        let r = compare(&hashes[v], &h, &config.matching)?;
        Ok(SimilarPair {
            source_id: corpus[v].source_id.clone(),
            variant,
            spec,
            score: r.score,
            similarity: similarity(&r),
        })
    })?;

    let pairs: Vec<(usize, usize)> = (0..kept.len())
        .flat_map(|i| (i + 1..kept.len()).map(move |j| (i, j)))
        .collect();
    let kept_hashes: Vec<&VideoHash> = kept.iter().map(|&k| &hashes[k]).collect();
    let different_similarities = par::try_map(exec, &pairs, |&(i, j)| {
        compare(kept_hashes[i], kept_hashes[j], &config.matching).map(|r| similarity(&r))
    })?;

    let similar_values: Vec<f64> = similar.iter().map(|p| p.similarity).collect();
    let roc = build_roc(&similar_values, &different_similarities, &config.target_fprs)?;
    let operating_threshold = roc.threshold_at_fpr(config.panel_fpr);
    let panels = panel_edges()
        .into_iter()
        .map(|(name, edges)| SensitivityPanel {
            parameter: name.to_owned(),
            operating_fpr: config.panel_fpr,
            operating_threshold,
            buckets: bucketize(&similar, name, &edges, operating_threshold),
        })
        .collect();

    let mut notes = vec![COMPRESSION_NOTE.to_owned()];
    if (different_similarities.len() as f64) * config.panel_fpr < 1.0 {
        notes.push(format!(
            "panel FPR {:e} is below the resolution of {} different pairs",
            config.panel_fpr,
            different_similarities.len()
        ));
    }
    Ok(SuiteReport {
        config: config.clone(),
        videos: kept.len(),
        duplicates_removed,
        empty_hashes_removed,
        roc,
        panels,
        similar,
        different_similarities,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::corpus::{generate_corpus, CorpusParams};

    fn corpus(count: usize) -> Vec<VideoStream> {
        let params = CorpusParams {
            count,
            min_seconds: 1.0,
            max_seconds: 2.0,
            seed: 21,
            ..CorpusParams::default()
        };
        generate_corpus(&params, Execution::default()).unwrap()
    }

    #[test]
    fn bucket_edges() {
        let pair = |gamma: f64, similarity: f64| SimilarPair {
            source_id: String::new(),
            variant: 0,
            spec: DistortionSpec { gamma, ..DistortionSpec::identity() },
            score: 0,
            similarity,
        };
        let pairs = vec![pair(0.5, 1.0), pair(1.0, 0.5), pair(2.0, 0.0), pair(1.5, 0.25)];
        let b = bucketize(&pairs, "gamma", &[0.5, 1.0, 2.0], 0.4);
        assert_eq!(b[0].count, 1);
        assert_eq!(b[1].count, 3);
        assert_eq!(b[0].mean_similarity, Some(1.0));
        assert_eq!(b[1].mean_similarity, Some(0.25));
        assert_eq!(b[1].tpr, Some(1.0 / 3.0));
        let none = bucketize(&pairs, "snr_db", &[15.0, 60.0], 0.4);
        assert_eq!(none[0].count, 0);
        assert_eq!(none[0].mean_similarity, None);
    }

    #[test]
    fn small_suite_runs_and_is_deterministic() {
        let corpus = corpus(6);
        let config = SuiteConfig {
            variants_per_video: 2,
            ranges: DistortionRanges::mild(),
            ..SuiteConfig::default()
        };
        let a = run_robustness_suite(&corpus, &config, Execution::Sequential).unwrap();
        let b = run_robustness_suite(&corpus, &config, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.similar.len(), 2 * a.videos);
        assert_eq!(a.roc.different_pairs, a.videos * (a.videos - 1) / 2);
        assert!(a.roc.is_monotone());
        assert_eq!(a.roc.tpr[0], 1.0);
        assert_eq!(a.panels.len(), 4);
        assert!(a.notes[0].contains("compression surrogate"));
        assert!(a.roc.warnings.len() == 3);
        let csv = a.panels[0].to_csv();
        assert!(csv.starts_with("parameter,lo,hi"));
        assert_eq!(csv.lines().count(), 8);
    }

    #[test]
    fn rejects_bad_config() {
        let c = SuiteConfig { variants_per_video: 0, ..SuiteConfig::default() };
        assert!(run_robustness_suite(&corpus(2), &c, Execution::default()).is_err());
        let c = SuiteConfig { panel_fpr: 0.0, ..SuiteConfig::default() };
        assert!(c.validate().is_err());
    }
}
