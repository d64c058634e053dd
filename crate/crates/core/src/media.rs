//! Video ingestion and frame pre-processing.
//!
//! Inputs are YUV4MPEG2 streams (luma plane only) or directories of binary
//! PGM/PPM frames. Every frame is reduced to 8-bit luma, bilinearly resized
//! to a fixed square resolution and histogram-equalized before hashing.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default side length of pre-processed frames.
pub const DEFAULT_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("invalid frame rate {num}:{den}")));
        }
        Ok(FrameRate { num, den })
    }

    pub fn fps(&self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

impl fmt::Display for FrameRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.num, self.den)
    }
}

/// One 8-bit luma frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub source_index: u32,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, source_index: u32) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Config(format!(
                "frame buffer of {} bytes does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
            source_index,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8, source_index: u32) -> Self {
        Frame {
            width,
            height,
            pixels: vec![value; width * height],
            source_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoStream {
    pub frames: Vec<Frame>,
    pub frame_rate: FrameRate,
    pub source_id: String,
}

impl VideoStream {
    /// Validates non-emptiness, consistent dimensions and renumbers
    /// `source_index` from zero.
    pub fn new(source_id: impl Into<String>, frame_rate: FrameRate, mut frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyStream);
        }
        let (w, h) = (frames[0].width, frames[0].height);
        for (i, f) in frames.iter_mut().enumerate() {
            if (f.width, f.height) != (w, h) {
                return Err(Error::Config(format!(
                    "frame {i} is {}x{}, expected {w}x{h}",
                    f.width, f.height
                )));
            }
            f.source_index = i as u32;
        }
        Ok(VideoStream {
            frames,
            frame_rate,
            source_id: source_id.into(),
        })
    }

    pub fn dimensions(&self) -> (usize, usize) {
        self.frames
            .first()
            .map(|f| (f.width, f.height))
            .unwrap_or((0, 0))
    }
}

/// A frame after resize and equalization, ready for hashing.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedFrame {
    pub resolution: usize,
    pub pixels: Vec<u8>,
    pub source_index: u32,
    /// Population standard deviation of the resized frame before
    /// equalization; used by the blank-frame test.
    pub content_std: f64,
}

/// Y4M chroma layouts with 8-bit samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

impl Chroma {
    fn parse(tag: &str) -> std::result::Result<Self, String> {
        match tag {
            "420" | "420jpeg" | "420paldv" | "420mpeg2" => Ok(Chroma::C420),
            "422" => Ok(Chroma::C422),
            "444" => Ok(Chroma::C444),
            "mono" => Ok(Chroma::Mono),
            t if t.contains('p') && t.rsplit('p').next().is_some_and(|d| d.parse::<u32>().is_ok()) => {
                Err(format!("unsupported bit depth in colorspace {t:?} (only 8-bit)"))
            }
            t => Err(format!("unsupported colorspace {t:?}")),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Chroma::C420 => "420jpeg",
            Chroma::C422 => "422",
            Chroma::C444 => "444",
            Chroma::Mono => "mono",
        }
    }

    /// Combined size of both chroma planes.
    fn chroma_bytes(self, w: usize, h: usize) -> usize {
        match self {
            Chroma::C420 => 2 * w.div_ceil(2) * h.div_ceil(2),
            Chroma::C422 => 2 * w.div_ceil(2) * h,
            Chroma::C444 => 2 * w * h,
            Chroma::Mono => 0,
        }
    }
}

fn y4m_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Y4m {
        offset,
        message: message.into(),
    }
}

fn parse_u32_tag(value: &str, offset: usize, what: &str) -> Result<u32> {
    value
        .parse::<u32>()
        .ok()
        .filter(|v| *v > 0)
        .ok_or_else(|| y4m_err(offset, format!("invalid {what} {value:?}")))
}

/// Parses a YUV4MPEG2 stream, keeping the Y plane of every frame.
pub fn parse_y4m(bytes: &[u8]) -> Result<VideoStream> {
    const SIGNATURE: &[u8] = b"YUV4MPEG2";
    if !bytes.starts_with(SIGNATURE) {
        return Err(y4m_err(0, "missing YUV4MPEG2 signature"));
    }
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| y4m_err(bytes.len(), "unterminated stream header"))?;
    let header = std::str::from_utf8(&bytes[SIGNATURE.len()..header_end])
        .map_err(|_| y4m_err(SIGNATURE.len(), "stream header is not ASCII"))?;

    let (mut width, mut height, mut rate, mut chroma) = (None, None, None, Chroma::C420);
    let mut offset = SIGNATURE.len();
    for token in header.split(' ') {
        let tag_offset = offset;
        offset += token.len() + 1;
        let Some(kind) = token.chars().next() else {
            continue;
        };
        let value = &token[1..];
        match kind {
            'W' => width = Some(parse_u32_tag(value, tag_offset, "width")? as usize),
            'H' => height = Some(parse_u32_tag(value, tag_offset, "height")? as usize),
            'F' => {
                let (n, d) = value
                    .split_once(':')
                    .ok_or_else(|| y4m_err(tag_offset, format!("invalid frame rate {value:?}")))?;
                rate = Some(FrameRate {
                    num: parse_u32_tag(n, tag_offset, "frame rate")?,
                    den: parse_u32_tag(d, tag_offset, "frame rate")?,
                });
            }
            'C' => chroma = Chroma::parse(value).map_err(|m| y4m_err(tag_offset, m))?,
            // interlacing, aspect ratio and extensions do not affect luma
            'I' | 'A' | 'X' => {}
            _ => return Err(y4m_err(tag_offset, format!("unknown header tag {token:?}"))),
        }
    }
    let width = width.ok_or_else(|| y4m_err(header_end, "missing W tag"))?;
    let height = height.ok_or_else(|| y4m_err(header_end, "missing H tag"))?;
    let frame_rate = rate.ok_or_else(|| y4m_err(header_end, "missing F tag"))?;
    let luma = width * height;
    let payload = luma + chroma.chroma_bytes(width, height);

    let mut frames = Vec::new();
    let mut pos = header_end + 1;
    while pos < bytes.len() {
        if !bytes[pos..].starts_with(b"FRAME") {
            return Err(y4m_err(pos, "expected FRAME marker"));
        }
        let line_end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| pos + p)
            .ok_or(Error::Y4mTruncated {
                frame_index: frames.len(),
                offset: bytes.len(),
            })?;
        let start = line_end + 1;
        if bytes.len() < start + payload {
            return Err(Error::Y4mTruncated {
                frame_index: frames.len(),
                offset: bytes.len(),
            });
        }
        frames.push(Frame {
            width,
            height,
            pixels: bytes[start..start + luma].to_vec(),
            source_index: frames.len() as u32,
        });
        pos = start + payload;
    }
    if frames.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(VideoStream {
        frames,
        frame_rate,
        source_id: String::new(),
    })
}

/// Serializes the luma frames as Y4M with neutral (128) chroma planes.
pub fn write_y4m(stream: &VideoStream, chroma: Chroma) -> Vec<u8> {
    let (w, h) = stream.dimensions();
    let chroma_len = chroma.chroma_bytes(w, h);
    let mut out = format!(
        "YUV4MPEG2 W{w} H{h} F{} Ip A1:1 C{}\n",
        stream.frame_rate,
        chroma.tag()
    )
    .into_bytes();
    out.reserve(stream.frames.len() * (6 + w * h + chroma_len));
    for frame in &stream.frames {
        out.extend_from_slice(b"FRAME\n");
        out.extend_from_slice(&frame.pixels);
        out.resize(out.len() + chroma_len, 128);
    }
    out
}

/// `round((77 R + 150 G + 29 B) / 256)`.
pub fn rgb_to_luma(r: u8, g: u8, b: u8) -> u8 {
    ((77 * u32::from(r) + 150 * u32::from(g) + 29 * u32::from(b) + 128) >> 8) as u8
}

fn frame_file_err(path: &Path, message: impl Into<String>) -> Error {
    Error::FrameFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn load_pnm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| frame_file_err(path, e.to_string()))?;
    if !(bytes.starts_with(b"P5") || bytes.starts_with(b"P6")) {
        return Err(frame_file_err(
            path,
            "unsupported image format; expected binary PGM (P5) or PPM (P6) with maxval 255",
        ));
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| frame_file_err(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        image::DynamicImage::ImageLuma8(g) => g.into_raw(),
        image::DynamicImage::ImageRgb8(rgb) => rgb
            .pixels()
            .map(|p| rgb_to_luma(p.0[0], p.0[1], p.0[2]))
            .collect(),
        _ => return Err(frame_file_err(path, "only 8-bit samples (maxval 255) are supported")),
    };
    Ok((w, h, pixels))
}

/// Loads every file in `dir`, in file-name order, as one frame.
pub fn load_frame_directory(dir: &Path, frame_rate: FrameRate) -> Result<VideoStream> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut frames: Vec<Frame> = Vec::with_capacity(paths.len());
    for (i, path) in paths.iter().enumerate() {
        let (w, h, pixels) = load_pnm(path)?;
        if let Some(first) = frames.first() {
            if (first.width, first.height) != (w, h) {
                return Err(Error::DimensionMismatch {
                    path: path.clone(),
                    expected: (first.width, first.height),
                    found: (w, h),
                });
            }
        }
        frames.push(Frame::new(w, h, pixels, i as u32)?);
    }
    let source_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    VideoStream::new(source_id, frame_rate, frames)
}

/// Bilinear resize with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(pixels: &[u8], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let taps = |src: usize, dst: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, (pos - lo as f64) as f32)
            })
            .collect()
    };
    let xs = taps(width, out_w);
    let ys = taps(height, out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        let r0 = &pixels[y0 * width..(y0 + 1) * width];
        let r1 = &pixels[y1 * width..(y1 + 1) * width];
        for &(x0, x1, fx) in &xs {
            let top = f32::from(r0[x0]) + fx * (f32::from(r0[x1]) - f32::from(r0[x0]));
            let bottom = f32::from(r1[x0]) + fx * (f32::from(r1[x1]) - f32::from(r1[x0]));
            let v = top + fy * (bottom - top);
            out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// 256-bin histogram equalization anchored at the smallest non-zero CDF
/// count. A single-level image is returned unchanged.
pub fn equalize_histogram(pixels: &[u8]) -> Vec<u8> {
    let mut hist = [0u64; 256];
    for &p in pixels {
        hist[p as usize] += 1;
    }
    let total = pixels.len() as u64;
    let mut cdf = [0u64; 256];
    let mut running = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        running += h;
        *c = running;
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let denom = total - cdf_min;
    if denom == 0 {
        return pixels.to_vec();
    }
    let mut lut = [0u8; 256];
    for (l, &c) in lut.iter_mut().zip(&cdf) {
        let num = 255 * c.saturating_sub(cdf_min);
        *l = ((2 * num + denom) / (2 * denom)) as u8;
    }
    pixels.iter().map(|&p| lut[p as usize]).collect()
}

/// Population standard deviation of 8-bit samples.
pub fn std_dev(pixels: &[u8]) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let n = pixels.len() as f64;
    let (sum, sum_sq) = pixels.iter().fold((0u64, 0u64), |(s, q), &p| {
        (s + u64::from(p), q + u64::from(p) * u64::from(p))
    });
    let mean = sum as f64 / n;
    (sum_sq as f64 / n - mean * mean).max(0.0).sqrt()
}

/// Resize to `resolution` x `resolution`, then equalize.
pub fn preprocess(frame: &Frame, resolution: usize) -> PreprocessedFrame {
    let resized = if (frame.width, frame.height) == (resolution, resolution) {
        frame.pixels.clone()
    } else {
        resize_bilinear(&frame.pixels, frame.width, frame.height, resolution, resolution)
    };
    PreprocessedFrame {
        resolution,
        content_std: std_dev(&resized),
        pixels: equalize_histogram(&resized),
        source_index: frame.source_index,
    }
}
