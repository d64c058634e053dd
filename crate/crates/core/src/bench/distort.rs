//! Distortions applied to raw frames before hashing.
//!
//! Per frame, in this order: gamma correction, down-and-up bilinear
//! scaling, a block-DCT compression surrogate and additive Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::media::{resize_bilinear, Frame, VideoStream};
use crate::par::{self, Execution};
use crate::{Error, Result};

pub const GAMMA_RANGE: (f64, f64) = (0.5, 2.0);
pub const SNR_RANGE_DB: (f64, f64) = (15.0, 60.0);
pub const QUALITY_RANGE: (u8, u8) = (2, 23);
pub const SCALE_RANGE: (f64, f64) = (0.25, 1.0);

/// Standard JPEG luminance quantization table, row-major.
const LUMA_TABLE: [f64; 64] = [
    16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0, //
    12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0, //
    14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0, //
    14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0, //
    18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0, //
    24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0, //
    49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0, //
    72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0,
];

/// Table scale at the mildest and strongest quality settings.
const QUALITY_SCALE: (f64, f64) = (0.2, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub gamma: f64,
    /// `None` means no noise.
    pub snr_db: Option<f64>,
    /// `None` means no compression; 2 is mildest, 23 strongest.
    pub quality: Option<u8>,
    pub scale: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn identity() -> Self {
        DistortionSpec {
            gamma: 1.0,
            snr_db: None,
            quality: None,
            scale: 1.0,
            seed: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.gamma == 1.0 && self.snr_db.is_none() && self.quality.is_none() && self.scale == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !within(self.gamma, GAMMA_RANGE) {
            return Err(Error::Distortion(format!("gamma {} outside [0.5, 2]", self.gamma)));
        }
        if let Some(snr) = self.snr_db {
            if !within(snr, SNR_RANGE_DB) {
                return Err(Error::Distortion(format!("SNR {snr} dB outside [15, 60]")));
            }
        }
        if let Some(q) = self.quality {
            if !(QUALITY_RANGE.0..=QUALITY_RANGE.1).contains(&q) {
                return Err(Error::Distortion(format!("quality {q} outside [2, 23]")));
            }
        }
        if !within(self.scale, SCALE_RANGE) {
            return Err(Error::Distortion(format!("scale {} outside [0.25, 1]", self.scale)));
        }
        Ok(())
    }
}

pub fn gamma_table(gamma: f64) -> [u8; 256] {
    let mut t = [0u8; 256];
    for (v, out) in t.iter_mut().enumerate() {
        *out = (255.0 * (v as f64 / 255.0).powf(gamma)).round() as u8;
    }
    t
}

pub fn apply_gamma(pixels: &mut [u8], gamma: f64) {
    if gamma == 1.0 {
        return;
    }
    let t = gamma_table(gamma);
    for p in pixels {
        *p = t[usize::from(*p)];
    }
}

/// Bilinear resize by `scale` and back to the original size.
pub fn apply_scale(pixels: &[u8], width: usize, height: usize, scale: f64) -> Vec<u8> {
    if scale == 1.0 {
        return pixels.to_vec();
    }
    let sw = ((width as f64 * scale).round() as usize).max(1);
    let sh = ((height as f64 * scale).round() as usize).max(1);
    let small = resize_bilinear(pixels, width, height, sw, sh);
    resize_bilinear(&small, sw, sh, width, height)
}

/// Quantization table for a quality setting, entries at least 1.
pub fn quantization_table(quality: u8) -> [f64; 64] {
    let (q0, q1) = (f64::from(QUALITY_RANGE.0), f64::from(QUALITY_RANGE.1));
    let t = (f64::from(quality) - q0) / (q1 - q0);
    let factor = QUALITY_SCALE.0 + t * (QUALITY_SCALE.1 - QUALITY_SCALE.0);
    let mut out = [0.0; 64];
    for (o, base) in out.iter_mut().zip(LUMA_TABLE) {
        *o = (base * factor).round().max(1.0);
    }
    out
}

fn dct_basis() -> [[f64; 8]; 8] {
    let mut c = [[0.0; 8]; 8];
    for (u, row) in c.iter_mut().enumerate() {
        let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = alpha * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    c
}

/// 8x8 block DCT, quantize, dequantize, inverse DCT. Partial edge blocks
/// are padded by replicating the last row and column.
pub fn apply_compression(pixels: &mut [u8], width: usize, height: usize, quality: u8) {
    let q = quantization_table(quality);
    let c = dct_basis();
    for by in (0..height).step_by(8) {
        for bx in (0..width).step_by(8) {
            let mut block = [[0.0f64; 8]; 8];
            for (y, row) in block.iter_mut().enumerate() {
                let sy = (by + y).min(height - 1);
                for (x, v) in row.iter_mut().enumerate() {
                    let sx = (bx + x).min(width - 1);
                    *v = f64::from(pixels[sy * width + sx]) - 128.0;
                }
            }
            // coefficients = C * block * C^T
            let mut tmp = [[0.0f64; 8]; 8];
            for u in 0..8 {
                for x in 0..8 {
                    tmp[u][x] = (0..8).map(|y| c[u][y] * block[y][x]).sum();
                }
            }
            let mut coef = [[0.0f64; 8]; 8];
            for u in 0..8 {
                for v in 0..8 {
                    let raw: f64 = (0..8).map(|x| tmp[u][x] * c[v][x]).sum();
                    let step = q[u * 8 + v];
                    coef[u][v] = (raw / step).round() * step;
                }
            }
            // block = C^T * coefficients * C
            for y in 0..8 {
                for v in 0..8 {
                    tmp[y][v] = (0..8).map(|u| c[u][y] * coef[u][v]).sum();
                }
            }
            for y in 0..8 {
                if by + y >= height {
                    break;
                }
                for x in 0..8 {
                    if bx + x >= width {
                        break;
                    }
                    let v: f64 = (0..8).map(|v| tmp[y][v] * c[v][x]).sum();
                    pixels[(by + y) * width + bx + x] = (v + 128.0).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
}

/// Adds zero-mean Gaussian noise with variance `mean(v^2) / 10^(snr/10)`.
pub fn apply_noise<R: Rng + ?Sized>(pixels: &mut [u8], snr_db: f64, rng: &mut R) {
    let power = pixels.iter().map(|&p| f64::from(p).powi(2)).sum::<f64>() / pixels.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    for p in pixels {
        *p = (f64::from(*p) + normal.sample(rng)).round().clamp(0.0, 255.0) as u8;
    }
}

/// Applies all enabled distortions to one frame.
pub fn distort_frame(frame: &Frame, spec: &DistortionSpec) -> Frame {
    let (w, h) = (frame.width, frame.height);
    let mut px = frame.pixels.clone();
    apply_gamma(&mut px, spec.gamma);
    let mut px = apply_scale(&px, w, h, spec.scale);
    if let Some(q) = spec.quality {
        apply_compression(&mut px, w, h, q);
    }
    if let Some(snr) = spec.snr_db {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::from(frame.source_index));
        apply_noise(&mut px, snr, &mut rng);
    }
    Frame {
        width: w,
        height: h,
        pixels: px,
        source_index: frame.source_index,
    }
}

pub fn apply_distortion(stream: &VideoStream, spec: &DistortionSpec) -> Result<VideoStream> {
    apply_distortion_with(stream, spec, Execution::default())
}

pub fn apply_distortion_with(stream: &VideoStream, spec: &DistortionSpec, exec: Execution) -> Result<VideoStream> {
    spec.validate()?;
    let frames = par::map(exec, &stream.frames, |f| distort_frame(f, spec));
    Ok(VideoStream {
        frames,
        frame_rate: stream.frame_rate,
        source_id: stream.source_id.clone(),
    })
}

/// Parameter ranges random specs are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionRanges {
    pub gamma: (f64, f64),
    pub snr_db: (f64, f64),
    pub quality: (u8, u8),
    pub scale: (f64, f64),
}

impl DistortionRanges {
    /// The full ranges.
    pub fn full() -> Self {
        DistortionRanges {
            gamma: GAMMA_RANGE,
            snr_db: SNR_RANGE_DB,
            quality: QUALITY_RANGE,
            scale: SCALE_RANGE,
        }
    }

    /// Distortions the hash is expected to survive.
    pub fn mild() -> Self {
        DistortionRanges {
            gamma: (0.8, 1.25),
            snr_db: (25.0, 60.0),
            quality: (2, 10),
            scale: (0.5, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lo = DistortionSpec {
            gamma: self.gamma.0,
            snr_db: Some(self.snr_db.0),
            quality: Some(self.quality.0),
            scale: self.scale.0,
            seed: 0,
        };
        let hi = DistortionSpec {
            gamma: self.gamma.1,
            snr_db: Some(self.snr_db.1),
            quality: Some(self.quality.1),
            scale: self.scale.1,
            seed: 0,
        };
        lo.validate()?;
        hi.validate()?;
        if self.gamma.0 > self.gamma.1
            || self.snr_db.0 > self.snr_db.1
            || self.quality.0 > self.quality.1
            || self.scale.0 > self.scale.1
        {
            return Err(Error::Distortion("range lower bound above upper bound".into()));
        }
        Ok(())
    }

    /// Gamma is drawn log-uniformly so that `g` and `1/g` are equally
    /// likely; the other parameters uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DistortionSpec {
        let uniform = |rng: &mut R, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let gamma = uniform(rng, (self.gamma.0.ln(), self.gamma.1.ln())).exp();
        DistortionSpec {
            gamma: gamma.clamp(self.gamma.0, self.gamma.1),
            snr_db: Some(uniform(rng, self.snr_db)),
            quality: Some(rng.random_range(self.quality.0..=self.quality.1)),
            scale: uniform(rng, self.scale),
            seed: rng.next_u64(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::FrameRate;
    use proptest::prelude::*;
    use rand::Rng;

    fn ramp(w: usize, h: usize) -> Frame {
        let px = (0..w * h).map(|i| ((i % w) * 255 / (w - 1)) as u8 / 2 + ((i / w) * 100 / h) as u8).collect();
        Frame::new(w, h, px, 0).unwrap()
    }

    #[test]
    fn identity_leaves_frames_unchanged() {
        let f = ramp(37, 21);
        let s = VideoStream::new("x", FrameRate::new(30, 1).unwrap(), vec![f.clone()]).unwrap();
        let out = apply_distortion(&s, &DistortionSpec::identity()).unwrap();
        assert_eq!(out, s);
        assert!(DistortionSpec::identity().is_identity());
    }

    #[test]
    fn gamma_examples() {
        let t = gamma_table(2.0);
        assert_eq!(t[128], 64);
        assert_eq!(t[0], 0);
        assert_eq!(t[255], 255);
        assert_eq!(gamma_table(1.0).to_vec(), (0..=255u8).collect::<Vec<_>>());
        assert_eq!(gamma_table(0.5)[64], 128);
    }

    #[test]
    fn out_of_range_specs_are_rejected() {
        let ok = DistortionSpec::identity();
        for bad in [
            DistortionSpec { gamma: 2.5, ..ok },
            DistortionSpec { gamma: 0.4, ..ok },
            DistortionSpec { snr_db: Some(10.0), ..ok },
            DistortionSpec { quality: Some(1), ..ok },
            DistortionSpec { quality: Some(24), ..ok },
            DistortionSpec { scale: 0.2, ..ok },
            DistortionSpec { scale: 1.5, ..ok },
            DistortionSpec { gamma: f64::NAN, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(DistortionRanges::full().validate().is_ok());
        assert!(DistortionRanges::mild().validate().is_ok());
    }

    #[test]
    fn noise_hits_requested_snr() {
        let px: Vec<u8> = (0..64 * 64).map(|i| 100 + (i % 64) as u8).collect();
        let power = px.iter().map(|&p| f64::from(p).powi(2)).sum::<f64>() / px.len() as f64;
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for snr in [15.0, 25.0, 40.0] {
            let mut noise_power = 0.0;
            for _ in 0..100 {
                let mut noisy = px.clone();
                apply_noise(&mut noisy, snr, &mut rng);
                noise_power += noisy
                    .iter()
                    .zip(&px)
                    .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                    .sum::<f64>()
                    / px.len() as f64;
            }
            let realized = 10.0 * (power / (noise_power / 100.0)).log10();
            assert!((realized - snr).abs() <= 1.0, "asked {snr} dB, got {realized}");
        }
    }

    #[test]
    fn noise_is_deterministic_per_seed_and_frame() {
        let f = ramp(16, 16);
        let spec = DistortionSpec { snr_db: Some(20.0), seed: 9, ..DistortionSpec::identity() };
        assert_eq!(distort_frame(&f, &spec), distort_frame(&f, &spec));
        let mut g = f.clone();
        g.source_index = 1;
        assert_ne!(distort_frame(&f, &spec).pixels, distort_frame(&g, &spec).pixels);
    }

    #[test]
    fn black_frames_stay_constant() {
        let f = Frame::filled(20, 12, 0, 0);
        let spec = DistortionSpec { gamma: 2.0, snr_db: Some(15.0), quality: Some(23), scale: 0.25, seed: 1 };
        let out = distort_frame(&f, &spec);
        assert!(out.pixels.iter().all(|&p| p == out.pixels[0]));
    }

    /// Direct evaluation of the 2-D DCT definition.
    fn naive_round_trip(block: &[f64; 64], q: &[f64; 64]) -> Vec<f64> {
        use std::f64::consts::PI;
        let a = |u: usize| if u == 0 { (0.125f64).sqrt() } else { 0.5 };
        let mut coef = [0.0; 64];
        for u in 0..8 {
            for v in 0..8 {
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += block[y * 8 + x]
                            * ((2 * y + 1) as f64 * u as f64 * PI / 16.0).cos()
                            * ((2 * x + 1) as f64 * v as f64 * PI / 16.0).cos();
                    }
                }
                let raw = a(u) * a(v) * s;
                coef[u * 8 + v] = (raw / q[u * 8 + v]).round() * q[u * 8 + v];
            }
        }
        (0..64)
            .map(|i| {
                let (y, x) = (i / 8, i % 8);
                let mut s = 0.0;
                for u in 0..8 {
                    for v in 0..8 {
                        s += a(u) * a(v) * coef[u * 8 + v]
                            * ((2 * y + 1) as f64 * u as f64 * PI / 16.0).cos()
                            * ((2 * x + 1) as f64 * v as f64 * PI / 16.0).cos();
                    }
                }
                s
            })
            .collect()
    }

    #[test]
    fn compression_matches_direct_dct() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for quality in [2u8, 10, 23] {
            let px: Vec<u8> = (0..64).map(|_| rng.random()).collect();
            let mut out = px.clone();
            apply_compression(&mut out, 8, 8, quality);
            let block: [f64; 64] = std::array::from_fn(|i| f64::from(px[i]) - 128.0);
            let expected = naive_round_trip(&block, &quantization_table(quality));
            for (o, e) in out.iter().zip(expected) {
                assert_eq!(f64::from(*o), (e + 128.0).round().clamp(0.0, 255.0));
            }
        }
    }

    #[test]
    fn stronger_quality_loses_more() {
        let f = ramp(64, 48);
        let err = |q: u8| {
            let mut px = f.pixels.clone();
            let mut rng = ChaCha20Rng::seed_from_u64(1);
            for p in px.iter_mut() {
                *p = p.saturating_add(rng.random_range(0..40));
            }
            let orig = px.clone();
            apply_compression(&mut px, 64, 48, q);
            px.iter().zip(&orig).map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2)).sum::<f64>()
        };
        assert!(err(2) < err(12));
        assert!(err(12) < err(23));
        assert_eq!(quantization_table(2)[0], 3.0);
        assert_eq!(quantization_table(23)[0], 32.0);
    }

    #[test]
    fn scaling_keeps_dimensions() {
        let f = ramp(30, 20);
        let out = apply_scale(&f.pixels, 30, 20, 0.25);
        assert_eq!(out.len(), 600);
        assert_eq!(apply_scale(&f.pixels, 30, 20, 1.0), f.pixels);
        let flat = vec![77u8; 600];
        assert_eq!(apply_scale(&flat, 30, 20, 0.4), flat);
    }

    proptest! {
        #[test]
        fn sampled_specs_are_valid(seed: u64, mild: bool) {
            let ranges = if mild { DistortionRanges::mild() } else { DistortionRanges::full() };
            let spec = ranges.sample(&mut ChaCha20Rng::seed_from_u64(seed));
            prop_assert!(spec.validate().is_ok());
            prop_assert!(spec.gamma >= ranges.gamma.0 && spec.gamma <= ranges.gamma.1);
        }

        #[test]
        fn gamma_table_is_monotone(g in 0.5f64..2.0) {
            let t = gamma_table(g);
            prop_assert!(t.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
