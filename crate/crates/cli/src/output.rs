//! Report types shared by the JSON and human-readable outputs.

use anyhow::Result;
use hvh_core::VideoHash;
use serde::Serialize;

use crate::config::Config;

/// Prints `value` as one line of JSON, or `human` otherwise.
pub fn emit<T: Serialize>(value: &T, json: bool, human: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string(value)?);
    } else {
        print!("{}", human());
    }
    Ok(())
}

pub fn print_config(config: &Config, json: bool) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a> {
        command: &'static str,
        config: &'a Config,
    }
    emit(&Out { command: "print-config", config }, json, || config.to_text())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn fingerprint(value: u64) -> String {
    format!("{value:016x}")
}

#[derive(Serialize)]
pub struct RecordSummary {
    pub source_index: u32,
    pub dropped_before: u32,
    pub hash: String,
}

#[derive(Serialize)]
pub struct HashSummary {
    pub source_id: String,
    pub format_version: u16,
    pub frame_rate: String,
    pub total_frames: u32,
    pub blank_frames: u32,
    pub keyframes: usize,
    pub dropped_frames: u64,
    pub trailing_drops: u32,
    pub keyframe_percentage: f64,
    pub resolution: u16,
    pub block_grid: u16,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<RecordSummary>>,
}

impl HashSummary {
    pub fn new(hash: &VideoHash, with_records: bool) -> Self {
        let h = &hash.header;
        HashSummary {
            source_id: h.source_id.clone(),
            format_version: h.format_version,
            frame_rate: format!("{}/{}", h.frame_rate.num, h.frame_rate.den),
            total_frames: h.total_frames,
            blank_frames: h.blank_count,
            keyframes: hash.records.len(),
            dropped_frames: hash.records.iter().map(|r| u64::from(r.dropped_before)).sum(),
            trailing_drops: h.trailing_drops,
            keyframe_percentage: h.keyframe_percentage,
            resolution: h.resolution,
            block_grid: h.block_grid,
            records: with_records.then(|| {
                hash.records
                    .iter()
                    .map(|r| RecordSummary {
                        source_index: r.source_index,
                        dropped_before: r.dropped_before,
                        hash: hex(&r.hash.to_bytes()),
                    })
                    .collect()
            }),
        }
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "source id        {}\n\
             frame rate       {}\n\
             total frames     {}\n\
             blank frames     {}\n\
             keyframes        {}\n\
             dropped frames   {}\n\
             trailing drops   {}\n\
             keyframe share   {:.2}%\n\
             resolution       {}x{} in {}x{} blocks\n",
            self.source_id,
            self.frame_rate,
            self.total_frames,
            self.blank_frames,
            self.keyframes,
            self.dropped_frames,
            self.trailing_drops,
            self.keyframe_percentage,
            self.resolution,
            self.resolution,
            self.block_grid,
            self.block_grid,
        );
        if let Some(records) = &self.records {
            out.push_str("\n  frame  dropped  hash\n");
            for r in records {
                out.push_str(&format!("{:>7}  {:>7}  {}\n", r.source_index, r.dropped_before, r.hash));
            }
        }
        out
    }
}
