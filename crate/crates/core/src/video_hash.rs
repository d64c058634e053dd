//! Variable-length video hashes, their binary format and an on-disk index.
//!
//! # Hash file (`.hvh`), format version 1, little-endian
//!
//! | size      | field                                   |
//! |-----------|-----------------------------------------|
//! | 4         | magic `HVH1`                            |
//! | 2         | format version (1)                      |
//! | 2         | resolution F                            |
//! | 2         | block grid B                            |
//! | 2         | source id length L                      |
//! | L         | source id, UTF-8                        |
//! | 4 + 4     | frame rate numerator, denominator       |
//! | 4         | total frames                            |
//! | 4         | blank frames                            |
//! | 4         | trailing dropped frames                 |
//! | 8         | keyframe percentage (f64)               |
//! | 4         | record count R                          |
//! | R x (H+6) | records                                 |
//!
//! Each record is the `H = ceil(B*B / 8)` hash bytes (bit `k` in byte
//! `k / 8`, position `k % 8`), a u16 dropped-before count saturating at
//! 65535 and a u32 source frame index.
//!
//! # Index file, version 1
//!
//! `HVX1`, u16 version, then the concatenated hash files, then an entry
//! table of `(u64 offset, u32 length)` pairs and a 16-byte footer:
//! u32 entry count, u64 table offset, magic `HVXT`. Adding an entry
//! overwrites the old table and footer.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::frame_hash::FrameHash;
use crate::keyframe::{select_keyframes_with, KeyframeRecord, Selection, SelectionParams};
use crate::matcher::{compare, similarity, MatchParams, MatchResult};
use crate::media::{preprocess, FrameRate, VideoStream};
use crate::par::{self, Execution};
use crate::wire::Reader;
use crate::{Error, Result};

pub const FORMAT_VERSION: u16 = 1;
const HASH_MAGIC: &str = "HVH1";
const INDEX_MAGIC: &str = "HVX1";
const INDEX_FOOTER_MAGIC: &str = "HVXT";
const INDEX_FOOTER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoHeader {
    pub format_version: u16,
    pub source_id: String,
    pub frame_rate: FrameRate,
    pub total_frames: u32,
    pub blank_count: u32,
    pub trailing_drops: u32,
    /// Keyframes as a percentage of non-blank frames. Informational only.
    pub keyframe_percentage: f64,
    pub resolution: u16,
    pub block_grid: u16,
}

impl VideoHeader {
    pub fn from_selection(
        source_id: &str,
        frame_rate: FrameRate,
        selection: &Selection,
        params: &SelectionParams,
    ) -> Self {
        VideoHeader {
            format_version: FORMAT_VERSION,
            source_id: source_id.to_owned(),
            frame_rate,
            total_frames: selection.total_frames,
            blank_count: selection.blank_count,
            trailing_drops: selection.trailing_drops,
            keyframe_percentage: selection.keyframe_percentage(),
            resolution: params.resolution as u16,
            block_grid: params.block_grid as u16,
        }
    }

    pub fn block_count(&self) -> usize {
        usize::from(self.block_grid) * usize::from(self.block_grid)
    }

    pub(crate) fn encode(&self, out: &mut Vec<u8>) {
        let id = self.source_id.as_bytes();
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&self.resolution.to_le_bytes());
        out.extend_from_slice(&self.block_grid.to_le_bytes());
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&self.frame_rate.num.to_le_bytes());
        out.extend_from_slice(&self.frame_rate.den.to_le_bytes());
        out.extend_from_slice(&self.total_frames.to_le_bytes());
        out.extend_from_slice(&self.blank_count.to_le_bytes());
        out.extend_from_slice(&self.trailing_drops.to_le_bytes());
        out.extend_from_slice(&self.keyframe_percentage.to_le_bytes());
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let format_version = r.u16_le("format version")?;
        if format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(format_version));
        }
        let resolution = r.u16_le("resolution")?;
        let block_grid = r.u16_le("block grid")?;
        if block_grid == 0 || resolution == 0 || resolution % block_grid != 0 {
            return Err(Error::Malformed(format!(
                "resolution {resolution} not divisible by block grid {block_grid}"
            )));
        }
        let id_len = r.u16_le("source id length")?;
        let id = r.take(usize::from(id_len), "source id")?;
        let source_id = String::from_utf8(id.to_vec())
            .map_err(|_| Error::Malformed("source id is not UTF-8".into()))?;
        let frame_rate = FrameRate::new(r.u32_le("frame rate")?, r.u32_le("frame rate")?)
            .map_err(|_| Error::Malformed("zero frame rate".into()))?;
        Ok(VideoHeader {
            format_version,
            source_id,
            frame_rate,
            total_frames: r.u32_le("total frames")?,
            blank_count: r.u32_le("blank count")?,
            trailing_drops: r.u32_le("trailing drops")?,
            keyframe_percentage: r.f64_le("keyframe percentage")?,
            resolution,
            block_grid,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoHash {
    pub header: VideoHeader,
    pub records: Vec<KeyframeRecord>,
}

impl VideoHash {
    pub fn from_selection(
        source_id: &str,
        frame_rate: FrameRate,
        selection: Selection,
        params: &SelectionParams,
    ) -> Self {
        VideoHash {
            header: VideoHeader::from_selection(source_id, frame_rate, &selection, params),
            records: selection.records,
        }
    }

    /// `total = blanks + keyframes + sum(dropped_before) + trailing_drops`.
    pub fn frame_count_identity_holds(&self) -> bool {
        let dropped: u64 = self.records.iter().map(|r| u64::from(r.dropped_before)).sum();
        u64::from(self.header.total_frames)
            == u64::from(self.header.blank_count)
                + self.records.len() as u64
                + dropped
                + u64::from(self.header.trailing_drops)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let hash_len = FrameHash::byte_len(self.header.block_count());
        let mut out = Vec::with_capacity(64 + self.records.len() * (hash_len + 6));
        out.extend_from_slice(HASH_MAGIC.as_bytes());
        self.header.encode(&mut out);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.hash.to_bytes());
            out.extend_from_slice(&(r.dropped_before.min(u32::from(u16::MAX)) as u16).to_le_bytes());
            out.extend_from_slice(&r.source_index.to_le_bytes());
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(HASH_MAGIC)?;
        let header = VideoHeader::decode(&mut r)?;
        let k = header.block_count();
        let count = r.u32_le("record count")? as usize;
        let record_len = FrameHash::byte_len(k) + 6;
        if count.saturating_mul(record_len) > r.remaining() {
            return Err(Error::Truncated {
                offset: bytes.len(),
                what: "records",
            });
        }
        let mut records: Vec<KeyframeRecord> = Vec::with_capacity(count);
        for _ in 0..count {
            let hash = FrameHash::from_bytes(r.take(FrameHash::byte_len(k), "record hash")?, k)?;
            let dropped_before = u32::from(r.u16_le("dropped count")?);
            let source_index = r.u32_le("source index")?;
            if records.last().is_some_and(|p| p.source_index >= source_index) {
                return Err(Error::Malformed("record source indices not increasing".into()));
            }
            records.push(KeyframeRecord {
                hash,
                dropped_before,
                source_index,
            });
        }
        r.finish()?;
        Ok(VideoHash { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::deserialize(&std::fs::read(path)?)
    }
}

/// Runs the whole plaintext pipeline on a stream.
pub fn build_video_hash(stream: &VideoStream, params: &SelectionParams) -> Result<VideoHash> {
    build_video_hash_with(stream, params, Execution::default())
}

pub fn build_video_hash_with(
    stream: &VideoStream,
    params: &SelectionParams,
    exec: Execution,
) -> Result<VideoHash> {
    params.validate()?;
    if stream.frames.is_empty() {
        return Err(Error::EmptyStream);
    }
    let frames = par::map(exec, &stream.frames, |f| preprocess(f, params.resolution));
    let selection = select_keyframes_with(&frames, params, exec)?;
    Ok(VideoHash::from_selection(
        &stream.source_id,
        stream.frame_rate,
        selection,
        params,
    ))
}

/// Minimum score (raw) or similarity (normalised) an index hit must reach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Score(u64),
    Similarity(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexHit {
    pub source_id: String,
    pub similarity: f64,
    pub result: MatchResult,
}

/// In-memory map of hashes, optionally mirrored to an append-only file.
#[derive(Debug, Default)]
pub struct HashIndex {
    entries: BTreeMap<String, VideoHash>,
    storage: Option<IndexFile>,
}

#[derive(Debug)]
struct IndexFile {
    path: PathBuf,
    table: Vec<(u64, u32)>,
    table_offset: u64,
}

impl HashIndex {
    pub fn in_memory() -> Self {
        HashIndex::default()
    }

    /// Opens `path`, creating an empty index file if it does not exist.
    pub fn open(path: &Path) -> Result<Self> {
        if !path.exists() {
            let mut bytes = INDEX_MAGIC.as_bytes().to_vec();
            bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
            let table_offset = bytes.len() as u64;
            write_footer(&mut bytes, &[], table_offset);
            std::fs::write(path, bytes)?;
        }
        let bytes = std::fs::read(path)?;
        let (entries, table, table_offset) = parse_index(&bytes)?;
        Ok(HashIndex {
            entries,
            storage: Some(IndexFile {
                path: path.to_path_buf(),
                table,
                table_offset,
            }),
        })
    }

    pub fn storage_path(&self) -> Option<&Path> {
        self.storage.as_ref().map(|s| s.path.as_path())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, source_id: &str) -> Option<&VideoHash> {
        self.entries.get(source_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &VideoHash)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn add(&mut self, hash: VideoHash) -> Result<()> {
        let id = hash.header.source_id.clone();
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        if let Some(storage) = &mut self.storage {
            let blob = hash.serialize();
            let mut file = OpenOptions::new().write(true).open(&storage.path)?;
            file.set_len(storage.table_offset)?;
            file.seek(SeekFrom::Start(storage.table_offset))?;
            storage.table.push((storage.table_offset, blob.len() as u32));
            storage.table_offset += blob.len() as u64;
            let mut tail = blob;
            write_footer(&mut tail, &storage.table, storage.table_offset);
            file.write_all(&tail)?;
            file.sync_data()?;
        }
        self.entries.insert(id, hash);
        Ok(())
    }

    /// Compares `query` against every entry; hits sorted by score
    /// descending, then source id.
    pub fn query(
        &self,
        query: &VideoHash,
        params: &MatchParams,
        threshold: Threshold,
        exec: Execution,
    ) -> Result<Vec<IndexHit>> {
        let entries: Vec<(&String, &VideoHash)> = self.entries.iter().collect();
        let results = par::try_map(exec, &entries, |(id, h)| -> Result<IndexHit> {
            let result = compare(query, h, params)?;
            Ok(IndexHit {
                source_id: (*id).clone(),
                similarity: similarity(&result),
                result,
            })
        })?;
        let mut hits: Vec<IndexHit> = results
            .into_iter()
            .filter(|h| match threshold {
                Threshold::Score(s) => h.result.score >= s,
                Threshold::Similarity(s) => h.similarity >= s,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.result
                .score
                .cmp(&a.result.score)
                .then_with(|| a.source_id.cmp(&b.source_id))
        });
        Ok(hits)
    }
}

fn write_footer(out: &mut Vec<u8>, table: &[(u64, u32)], table_offset: u64) {
    for (offset, len) in table {
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
    }
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    out.extend_from_slice(&table_offset.to_le_bytes());
    out.extend_from_slice(INDEX_FOOTER_MAGIC.as_bytes());
}

type ParsedIndex = (BTreeMap<String, VideoHash>, Vec<(u64, u32)>, u64);

fn parse_index(bytes: &[u8]) -> Result<ParsedIndex> {
    let mut r = Reader::new(bytes);
    r.magic(INDEX_MAGIC)?;
    let version = r.u16_le("index version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < 6 + INDEX_FOOTER_LEN {
        return Err(Error::Truncated {
            offset: bytes.len(),
            what: "index footer",
        });
    }
    let mut footer = Reader::new(&bytes[bytes.len() - INDEX_FOOTER_LEN..]);
    let count = footer.u32_le("entry count")? as usize;
    let table_offset = footer.u64_le("table offset")?;
    footer.magic(INDEX_FOOTER_MAGIC)?;
    let table_start = usize::try_from(table_offset).map_err(|_| Error::Malformed("table offset".into()))?;
    if table_start < 6 || table_start + count * 12 + INDEX_FOOTER_LEN != bytes.len() {
        return Err(Error::Malformed("index table does not fit the file".into()));
    }
    let mut t = Reader::new(&bytes[table_start..bytes.len() - INDEX_FOOTER_LEN]);
    let mut table = Vec::with_capacity(count);
    let mut entries = BTreeMap::new();
    for _ in 0..count {
        let offset = t.u64_le("entry offset")?;
        let len = t.u32_le("entry length")?;
        let start = offset as usize;
        let end = start
            .checked_add(len as usize)
            .filter(|&e| e <= table_start && start >= 6)
            .ok_or_else(|| Error::Malformed("index entry out of bounds".into()))?;
        let hash = VideoHash::deserialize(&bytes[start..end])?;
        let id = hash.header.source_id.clone();
        if entries.insert(id.clone(), hash).is_some() {
            return Err(Error::DuplicateId(id));
        }
        table.push((offset, len));
    }
    Ok((entries, table, table_offset))
}
