//! The hash pipeline split across a trusted zone and an untrusted server.
//!
//! The trusted zone selects keyframes and pre-processes them in the clear,
//! then encrypts every pixel of every keyframe. The server only ever sees
//! the public key: it multiplies ciphertexts into per-block sums and forms
//! encryptions of `K * S_k - S`, which it rerandomizes. The trusted zone
//! decrypts those components and keeps only their signs, which is the frame
//! hash. Exactly one transfer goes each way per video.
//!
//! # Encrypted video file, version 1
//!
//! `HVE1`, the video header in the `.hvh` layout (see [`crate::video_hash`])
//! without its magic, u64 key fingerprint, u16 ciphertext width `W`, u32
//! frame count, then per frame: u16 resolution `F`, u64 key fingerprint,
//! u32 source frame index, u32 dropped-before count and `F * F` ciphertexts
//! of exactly `W` big-endian bytes in row-major order. Integers other than
//! ciphertexts are little-endian.
//!
//! # Components file, version 1
//!
//! `HVC1`, the same header, fingerprint, width and frame count, then per
//! frame: u32 source index, u32 dropped-before count, u8 rerandomized flag,
//! u16 component count `K` and `K` ciphertexts of `W` bytes.

use num_bigint::{BigInt, BigUint};
use num_traits::Signed;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::frame_hash::FrameHash;
use crate::keyframe::{select_keyframes_with, KeyframeRecord, SelectionParams};
use crate::media::{preprocess, PreprocessedFrame, VideoStream};
use crate::paillier::{Ciphertext, Plaintext, PrivateKey, PublicKey};
use crate::par::{self, Execution};
use crate::video_hash::{VideoHash, VideoHeader};
use crate::wire::Reader;
use crate::{Error, Result};

const VIDEO_MAGIC: &str = "HVE1";
const COMPONENTS_MAGIC: &str = "HVC1";

/// One keyframe, encrypted pixel by pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedFrame {
    pub resolution: usize,
    pub source_index: u32,
    pub dropped_before: u32,
    pub ciphertexts: Vec<Ciphertext>,
}

/// Everything the trusted zone hands to the server for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedVideo {
    pub header: VideoHeader,
    pub key_fingerprint: u64,
    pub frames: Vec<EncryptedFrame>,
}

/// Encryptions of `K * S_k - S` for each block `k` of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedHashComponents {
    pub source_index: u32,
    pub dropped_before: u32,
    pub block_diffs: Vec<Ciphertext>,
    pub rerandomized: bool,
}

/// The server's reply for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedComponents {
    pub header: VideoHeader,
    pub key_fingerprint: u64,
    pub frames: Vec<EncryptedHashComponents>,
}

/// Holds the private key. No method hands the key back out.
pub struct TrustedZone {
    key: PrivateKey,
    public: PublicKey,
    params: SelectionParams,
}

impl TrustedZone {
    pub fn new(key: PrivateKey, params: SelectionParams) -> Result<Self> {
        params.validate()?;
        let public = key.public_key();
        // |K * S_k - S| and every pixel sum are at most F^2 * 255; both
        // signs must stay distinguishable mod n.
        let f = params.resolution as u64;
        let bound = BigUint::from(f * f * 255);
        if bound * 2u32 >= *public.n() {
            return Err(Error::ParameterMismatch(format!(
                "a {}-bit key is too small for resolution {}",
                public.bits(),
                params.resolution
            )));
        }
        Ok(TrustedZone { key, public, params })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn params(&self) -> &SelectionParams {
        &self.params
    }

    /// Selects and pre-processes keyframes, then encrypts them.
    pub fn prepare<R: RngCore + ?Sized>(
        &self,
        stream: &VideoStream,
        rng: &mut R,
        exec: Execution,
    ) -> Result<EncryptedVideo> {
        if stream.frames.is_empty() {
            return Err(Error::EmptyStream);
        }
        let frames = par::map(exec, &stream.frames, |f| preprocess(f, self.params.resolution));
        let selection = select_keyframes_with(&frames, &self.params, exec)?;
        let header = VideoHeader::from_selection(
            &stream.source_id,
            stream.frame_rate,
            &selection,
            &self.params,
        );
        // Seeds are drawn in order so the output does not depend on `exec`.
        let jobs: Vec<(&PreprocessedFrame, &KeyframeRecord, u64)> = selection
            .records
            .iter()
            .map(|r| (&frames[r.source_index as usize], r, rng.next_u64()))
            .collect();
        let encrypted = par::try_map(exec, &jobs, |&(frame, record, seed)| {
            let mut ciphertexts = self.encrypt_frame(frame, seed, exec)?;
            ciphertexts.shrink_to_fit();
            Ok::<_, Error>(EncryptedFrame {
                resolution: frame.resolution,
                source_index: record.source_index,
                dropped_before: record.dropped_before,
                ciphertexts,
            })
        })?;
        Ok(EncryptedVideo {
            header,
            key_fingerprint: self.public.fingerprint(),
            frames: encrypted,
        })
    }

    fn encrypt_frame(&self, frame: &PreprocessedFrame, seed: u64, exec: Execution) -> Result<Vec<Ciphertext>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rows: Vec<(&[u8], u64)> = frame
            .pixels
            .chunks(frame.resolution)
            .map(|row| (row, rng.next_u64()))
            .collect();
        let rows = par::try_map(exec, &rows, |&(row, seed)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            row.iter()
                .map(|&p| self.key.encrypt(&Plaintext::from(u64::from(p)), &mut rng))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(rows.into_iter().flatten().collect())
    }

    /// Decrypts one frame's components and keeps only their signs.
    pub fn finalize_frame(&self, components: &EncryptedHashComponents) -> Result<FrameHash> {
        if !components.rerandomized {
            return Err(Error::Malformed("components were not rerandomized".into()));
        }
        let k = self.params.block_count();
        if components.block_diffs.len() != k {
            return Err(Error::LengthMismatch(components.block_diffs.len(), k));
        }
        let mut hash = FrameHash::zeros(k);
        for (i, c) in components.block_diffs.iter().enumerate() {
            let v = self.key.decrypt_signed(c)?;
            hash.set(i, v.is_positive());
        }
        Ok(hash)
    }

    /// Turns the server's reply into the plaintext video hash.
    pub fn finalize(&self, components: &EncryptedComponents, exec: Execution) -> Result<VideoHash> {
        if components.key_fingerprint != self.public.fingerprint() {
            return Err(Error::KeyMismatch);
        }
        check_header(&components.header, &self.params)?;
        let hashes = par::try_map(exec, &components.frames, |c| self.finalize_frame(c))?;
        let records = components
            .frames
            .iter()
            .zip(hashes)
            .map(|(c, hash)| KeyframeRecord {
                hash,
                dropped_before: c.dropped_before,
                source_index: c.source_index,
            })
            .collect();
        Ok(VideoHash {
            header: components.header.clone(),
            records,
        })
    }
}

impl std::fmt::Debug for TrustedZone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrustedZone")
            .field("public", &self.public)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

fn check_header(header: &VideoHeader, params: &SelectionParams) -> Result<()> {
    if usize::from(header.resolution) != params.resolution || usize::from(header.block_grid) != params.block_grid {
        return Err(Error::ParameterMismatch(format!(
            "data is F={} B={}, expected F={} B={}",
            header.resolution, header.block_grid, params.resolution, params.block_grid
        )));
    }
    Ok(())
}

/// Server side: block aggregation for one frame. Needs only the public key.
pub fn server_aggregate_frame<R: RngCore + ?Sized>(
    pk: &PublicKey,
    frame: &EncryptedFrame,
    block_grid: usize,
    rng: &mut R,
    exec: Execution,
) -> Result<EncryptedHashComponents> {
    let f = frame.resolution;
    if block_grid == 0 || f % block_grid != 0 {
        return Err(Error::Config(format!("resolution {f} is not divisible by block grid {block_grid}")));
    }
    if frame.ciphertexts.len() != f * f {
        return Err(Error::LengthMismatch(frame.ciphertexts.len(), f * f));
    }
    let k = block_grid * block_grid;
    let side = f / block_grid;
    let seeds: Vec<u64> = (0..k).map(|_| rng.next_u64()).collect();

    if frame.ciphertexts.iter().any(|c| c.key_fingerprint() != pk.fingerprint()) {
        return Err(Error::KeyMismatch);
    }
    let sums = par::map_range(exec, k, |b| {
        let (by, bx) = (b / block_grid, b % block_grid);
        let mut cells = (by * side..(by + 1) * side)
            .flat_map(|y| &frame.ciphertexts[y * f + bx * side..y * f + (bx + 1) * side]);
        let first = cells.next().expect("blocks are non-empty").clone();
        cells.try_fold(first, |acc, c| pk.homomorphic_add(&acc, c))
    })
    .into_iter()
    .collect::<Result<Vec<Ciphertext>>>()?;

    let mut total = sums[0].clone();
    for s in &sums[1..] {
        total = pk.homomorphic_add(&total, s)?;
    }
    let neg_total = pk.scalar_multiply(&total, &BigInt::from(-1))?;
    let scale = BigInt::from(k);
    let jobs: Vec<(&Ciphertext, u64)> = sums.iter().zip(seeds).collect();
    let block_diffs = par::try_map(exec, &jobs, |&(s, seed)| {
        let scaled = pk.scalar_multiply(s, &scale)?;
        let diff = pk.homomorphic_add(&scaled, &neg_total)?;
        pk.rerandomize(&diff, &mut ChaCha20Rng::seed_from_u64(seed))
    })?;
    Ok(EncryptedHashComponents {
        source_index: frame.source_index,
        dropped_before: frame.dropped_before,
        block_diffs,
        rerandomized: true,
    })
}

/// Server side: aggregates every frame of an encrypted video.
pub fn server_aggregate<R: RngCore + ?Sized>(
    pk: &PublicKey,
    video: &EncryptedVideo,
    rng: &mut R,
    exec: Execution,
) -> Result<EncryptedComponents> {
    if video.key_fingerprint != pk.fingerprint() {
        return Err(Error::KeyMismatch);
    }
    let block_grid = usize::from(video.header.block_grid);
    let resolution = usize::from(video.header.resolution);
    if let Some(f) = video.frames.iter().find(|f| f.resolution != resolution) {
        return Err(Error::ParameterMismatch(format!(
            "frame {} has resolution {}, header says {resolution}",
            f.source_index, f.resolution
        )));
    }
    let jobs: Vec<(&EncryptedFrame, u64)> = video.frames.iter().map(|f| (f, rng.next_u64())).collect();
    let frames = par::try_map(exec, &jobs, |&(frame, seed)| {
        server_aggregate_frame(pk, frame, block_grid, &mut ChaCha20Rng::seed_from_u64(seed), exec)
    })?;
    Ok(EncryptedComponents {
        header: video.header.clone(),
        key_fingerprint: video.key_fingerprint,
        frames,
    })
}

fn write_ciphertexts(out: &mut Vec<u8>, cts: &[Ciphertext], width: usize) {
    for c in cts {
        out.extend_from_slice(&c.to_bytes_be(width));
    }
}

fn read_ciphertexts(r: &mut Reader<'_>, count: usize, width: usize, pk: &PublicKey) -> Result<Vec<Ciphertext>> {
    let bytes = r.take(count.checked_mul(width).ok_or(Error::MalformedCiphertext)?, "ciphertexts")?;
    bytes
        .chunks_exact(width)
        .map(|b| Ciphertext::from_value(BigUint::from_bytes_be(b), pk))
        .collect()
}

fn read_preamble(r: &mut Reader<'_>, magic: &'static str, pk: &PublicKey) -> Result<(VideoHeader, u64, usize)> {
    r.magic(magic)?;
    let header = VideoHeader::decode(r)?;
    let fingerprint = r.u64_le("key fingerprint")?;
    if fingerprint != pk.fingerprint() {
        return Err(Error::KeyMismatch);
    }
    let width = usize::from(r.u16_le("ciphertext width")?);
    if width != pk.ciphertext_width() {
        return Err(Error::Malformed(format!(
            "ciphertext width {width}, key needs {}",
            pk.ciphertext_width()
        )));
    }
    Ok((header, fingerprint, width))
}

fn write_preamble(out: &mut Vec<u8>, magic: &str, header: &VideoHeader, fingerprint: u64, width: usize, frames: usize) {
    out.extend_from_slice(magic.as_bytes());
    header.encode(out);
    out.extend_from_slice(&fingerprint.to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&(frames as u32).to_le_bytes());
}

impl EncryptedVideo {
    pub fn serialize(&self, pk: &PublicKey) -> Vec<u8> {
        let width = pk.ciphertext_width();
        let mut out = Vec::new();
        write_preamble(&mut out, VIDEO_MAGIC, &self.header, self.key_fingerprint, width, self.frames.len());
        for f in &self.frames {
            out.extend_from_slice(&(f.resolution as u16).to_le_bytes());
            out.extend_from_slice(&self.key_fingerprint.to_le_bytes());
            out.extend_from_slice(&f.source_index.to_le_bytes());
            out.extend_from_slice(&f.dropped_before.to_le_bytes());
            write_ciphertexts(&mut out, &f.ciphertexts, width);
        }
        out
    }

    pub fn deserialize(bytes: &[u8], pk: &PublicKey) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let (header, key_fingerprint, width) = read_preamble(&mut r, VIDEO_MAGIC, pk)?;
        let count = r.u32_le("frame count")?;
        let mut frames = Vec::new();
        for _ in 0..count {
            let resolution = usize::from(r.u16_le("frame resolution")?);
            if r.u64_le("frame key fingerprint")? != key_fingerprint {
                return Err(Error::KeyMismatch);
            }
            let source_index = r.u32_le("source index")?;
            let dropped_before = r.u32_le("dropped count")?;
            let ciphertexts = read_ciphertexts(&mut r, resolution * resolution, width, pk)?;
            frames.push(EncryptedFrame {
                resolution,
                source_index,
                dropped_before,
                ciphertexts,
            });
        }
        r.finish()?;
        Ok(EncryptedVideo {
            header,
            key_fingerprint,
            frames,
        })
    }
}

impl EncryptedComponents {
    pub fn serialize(&self, pk: &PublicKey) -> Vec<u8> {
        let width = pk.ciphertext_width();
        let mut out = Vec::new();
        write_preamble(&mut out, COMPONENTS_MAGIC, &self.header, self.key_fingerprint, width, self.frames.len());
        for f in &self.frames {
            out.extend_from_slice(&f.source_index.to_le_bytes());
            out.extend_from_slice(&f.dropped_before.to_le_bytes());
            out.push(u8::from(f.rerandomized));
            out.extend_from_slice(&(f.block_diffs.len() as u16).to_le_bytes());
            write_ciphertexts(&mut out, &f.block_diffs, width);
        }
        out
    }

    pub fn deserialize(bytes: &[u8], pk: &PublicKey) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let (header, key_fingerprint, width) = read_preamble(&mut r, COMPONENTS_MAGIC, pk)?;
        let count = r.u32_le("frame count")?;
        let mut frames = Vec::new();
        for _ in 0..count {
            let source_index = r.u32_le("source index")?;
            let dropped_before = r.u32_le("dropped count")?;
            let rerandomized = match r.take(1, "rerandomized flag")?[0] {
                0 => false,
                1 => true,
                v => return Err(Error::Malformed(format!("rerandomized flag {v}"))),
            };
            let k = usize::from(r.u16_le("component count")?);
            let block_diffs = read_ciphertexts(&mut r, k, width, pk)?;
            frames.push(EncryptedHashComponents {
                source_index,
                dropped_before,
                block_diffs,
                rerandomized,
            });
        }
        r.finish()?;
        Ok(EncryptedComponents {
            header,
            key_fingerprint,
            frames,
        })
    }
}
