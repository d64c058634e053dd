//! Layered settings: built-in defaults, then a `key = value` file, then
//! command-line flags. Every layer goes through [`Config::set`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hvh_core::bench::{DistortionRanges, SuiteConfig};
use hvh_core::{Execution, MatchParams, Rounding, SelectionParams};
use serde::Serialize;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeSet {
    Full,
    Mild,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub resolution: usize,
    pub block_grid: usize,
    pub blank_std_threshold: f64,
    pub keyframe_threshold: u32,
    pub hash_threshold: u32,
    pub drop_threshold: u32,
    pub rounding: Rounding,
    /// Unset means fresh OS entropy where randomness is needed, and 0 for
    /// the benchmark.
    pub seed: Option<u64>,
    /// 0 lets the thread pool pick.
    pub threads: usize,
    pub execution: Execution,
    pub key_bits: u32,
    pub public_key: Option<PathBuf>,
    pub private_key: Option<PathBuf>,
    pub bench_videos: usize,
    pub bench_variants: usize,
    pub bench_ranges: RangeSet,
    pub bench_min_seconds: f64,
    pub bench_max_seconds: f64,
    pub bench_panel_fpr: f64,
}

impl Default for Config {
    fn default() -> Self {
        let selection = SelectionParams::default();
        let matching = MatchParams::default();
        let suite = SuiteConfig::default();
        Config {
            resolution: selection.resolution,
            block_grid: selection.block_grid,
            blank_std_threshold: selection.blank_std_threshold,
            keyframe_threshold: selection.keyframe_distance_threshold,
            hash_threshold: matching.hash_threshold,
            drop_threshold: matching.drop_threshold,
            rounding: matching.rounding,
            seed: None,
            threads: 0,
            execution: Execution::default(),
            key_bits: 2048,
            public_key: None,
            private_key: None,
            bench_videos: 200,
            bench_variants: suite.variants_per_video,
            bench_ranges: RangeSet::Full,
            bench_min_seconds: 2.0,
            bench_max_seconds: 6.0,
            bench_panel_fpr: suite.panel_fpr,
        }
    }
}

/// Keys accepted in config files and by [`Config::set`].
pub const KEYS: &[&str] = &[
    "resolution",
    "block_grid",
    "blank_std_threshold",
    "keyframe_threshold",
    "hash_threshold",
    "drop_threshold",
    "rounding",
    "seed",
    "threads",
    "execution",
    "key_bits",
    "public_key",
    "private_key",
    "bench_videos",
    "bench_variants",
    "bench_ranges",
    "bench_min_seconds",
    "bench_max_seconds",
    "bench_panel_fpr",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| UsageError(format!("invalid value {value:?} for {key}")).into())
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "resolution" => self.resolution = parse(key, value)?,
            "block_grid" => self.block_grid = parse(key, value)?,
            "blank_std_threshold" => self.blank_std_threshold = parse(key, value)?,
            "keyframe_threshold" => self.keyframe_threshold = parse(key, value)?,
            "hash_threshold" => self.hash_threshold = parse(key, value)?,
            "drop_threshold" => self.drop_threshold = parse(key, value)?,
            "rounding" => {
                self.rounding = match value {
                    "half-up" => Rounding::HalfUp,
                    "floor" => Rounding::Floor,
                    _ => bail!(UsageError(format!("rounding must be half-up or floor, got {value:?}"))),
                }
            }
            "seed" => self.seed = if value.is_empty() { None } else { Some(parse(key, value)?) },
            "threads" => self.threads = parse(key, value)?,
            "execution" => {
                self.execution = match value {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => bail!(UsageError(format!(
                        "execution must be parallel or sequential, got {value:?}"
                    ))),
                }
            }
            "key_bits" => self.key_bits = parse(key, value)?,
            "public_key" => self.public_key = (!value.is_empty()).then(|| PathBuf::from(value)),
            "private_key" => self.private_key = (!value.is_empty()).then(|| PathBuf::from(value)),
            "bench_videos" => self.bench_videos = parse(key, value)?,
            "bench_variants" => self.bench_variants = parse(key, value)?,
            "bench_ranges" => {
                self.bench_ranges = match value {
                    "full" => RangeSet::Full,
                    "mild" => RangeSet::Mild,
                    _ => bail!(UsageError(format!("bench_ranges must be full or mild, got {value:?}"))),
                }
            }
            "bench_min_seconds" => self.bench_min_seconds = parse(key, value)?,
            "bench_max_seconds" => self.bench_max_seconds = parse(key, value)?,
            "bench_panel_fpr" => self.bench_panel_fpr = parse(key, value)?,
            _ => bail!(UsageError(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// skipped. Relative key paths are resolved against the file's folder.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (number, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!(UsageError(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    number + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            let value = match key {
                "public_key" | "private_key" if !value.is_empty() && Path::new(value).is_relative() => {
                    base.join(value).to_string_lossy().into_owned()
                }
                _ => value.to_owned(),
            };
            self.set(key, &value)
                .with_context(|| format!("{}:{}", path.display(), number + 1))?;
        }
        Ok(())
    }

    pub fn selection(&self) -> SelectionParams {
        SelectionParams {
            blank_std_threshold: self.blank_std_threshold,
            keyframe_distance_threshold: self.keyframe_threshold,
            resolution: self.resolution,
            block_grid: self.block_grid,
        }
    }

    pub fn matching(&self) -> MatchParams {
        MatchParams {
            hash_threshold: self.hash_threshold,
            drop_threshold: self.drop_threshold,
            rounding: self.rounding,
        }
    }

    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            variants_per_video: self.bench_variants,
            ranges: match self.bench_ranges {
                RangeSet::Full => DistortionRanges::full(),
                RangeSet::Mild => DistortionRanges::mild(),
            },
            selection: self.selection(),
            matching: self.matching(),
            seed: self.seed.unwrap_or(0),
            panel_fpr: self.bench_panel_fpr,
            ..SuiteConfig::default()
        }
    }

    /// Rejects inconsistent settings before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.selection()
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        if self.hash_threshold as usize > self.selection().block_count() {
            bail!(UsageError(format!(
                "hash_threshold {} exceeds the {} hash bits",
                self.hash_threshold,
                self.selection().block_count()
            )));
        }
        if self.bench_videos < 2 {
            bail!(UsageError("bench_videos must be at least 2".into()));
        }
        self.suite().validate().map_err(|e| UsageError(e.to_string()))?;
        if !(self.bench_min_seconds > 0.0 && self.bench_min_seconds <= self.bench_max_seconds) {
            bail!(UsageError(format!(
                "bad bench duration range [{}, {}]",
                self.bench_min_seconds, self.bench_max_seconds
            )));
        }
        Ok(())
    }

    /// Effective settings as `key = value` lines, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let values = [
            self.resolution.to_string(),
            self.block_grid.to_string(),
            self.blank_std_threshold.to_string(),
            self.keyframe_threshold.to_string(),
            self.hash_threshold.to_string(),
            self.drop_threshold.to_string(),
            match self.rounding {
                Rounding::HalfUp => "half-up".into(),
                Rounding::Floor => "floor".into(),
            },
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.threads.to_string(),
            match self.execution {
                Execution::Parallel => "parallel".into(),
                Execution::Sequential => "sequential".into(),
            },
            self.key_bits.to_string(),
            path(&self.public_key),
            path(&self.private_key),
            self.bench_videos.to_string(),
            self.bench_variants.to_string(),
            match self.bench_ranges {
                RangeSet::Full => "full".into(),
                RangeSet::Mild => "mild".into(),
            },
            self.bench_min_seconds.to_string(),
            self.bench_max_seconds.to_string(),
            self.bench_panel_fpr.to_string(),
        ];
        let mut out = String::new();
        for (key, value) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips_through_set() {
        let mut c = Config::default();
        c.set("seed", "9").unwrap();
        c.set("rounding", "floor").unwrap();
        c.set("public_key", "/tmp/k.pub").unwrap();
        let mut back = Config::default();
        for line in c.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            back.set(k.trim(), v).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn every_key_is_settable() {
        let text = Config::default().to_text();
        assert_eq!(text.lines().count(), KEYS.len());
    }

    #[test]
    fn bad_grid_is_rejected() {
        let mut c = Config::default();
        c.set("block_grid", "7").unwrap();
        assert!(c.validate().unwrap_err().downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn unknown_key_is_a_usage_error() {
        assert!(Config::default().set("colour", "red").is_err());
    }
}
