//! Seeded synthetic video corpus.
//!
//! Each video is one to three shots. A shot renders a tilted gradient, a few
//! drifting Gaussian blobs and a slowly moving sinusoid texture; the camera
//! pans a little. Some videos contain a short run of black frames between
//! shots.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::media::{Frame, FrameRate, VideoStream};
use crate::par::{self, Execution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub count: usize,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub frame_rate: FrameRate,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            count: 200,
            min_seconds: 2.0,
            max_seconds: 6.0,
            frame_rate: FrameRate { num: 30, den: 1 },
            width: 96,
            height: 72,
            seed: 0,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::Config("a corpus needs at least 2 videos".into()));
        }
        if !(self.min_seconds > 0.0 && self.min_seconds <= self.max_seconds && self.max_seconds.is_finite()) {
            return Err(Error::Config(format!(
                "bad duration range [{}, {}]",
                self.min_seconds, self.max_seconds
            )));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config("frames must be at least 8x8".into()));
        }
        if self.frame_rate.num == 0 || self.frame_rate.den == 0 {
            return Err(Error::Config("zero frame rate".into()));
        }
        Ok(())
    }
}

struct Blob {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    sigma: f64,
    amplitude: f64,
}

struct Shot {
    frames: usize,
    base: f64,
    gx: f64,
    gy: f64,
    blobs: Vec<Blob>,
    tex_fx: f64,
    tex_fy: f64,
    tex_amp: f64,
    tex_speed: f64,
    tex_phase: f64,
    pan_x: f64,
    pan_y: f64,
}

impl Shot {
    fn random(rng: &mut ChaCha20Rng, frames: usize, w: f64, h: f64) -> Self {
        let contrast = rng.random_range(0.25..1.0);
        let blobs = (0..rng.random_range(6..14))
            .map(|_| {
                let speed = rng.random_range(0.2..1.0);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                Blob {
                    x: rng.random_range(0.0..w),
                    y: rng.random_range(0.0..h),
                    vx: speed * angle.cos(),
                    vy: speed * angle.sin(),
                    sigma: rng.random_range(0.05..0.15) * w,
                    amplitude: contrast * rng.random_range(50.0..110.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                }
            })
            .collect();
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let slope = contrast * rng.random_range(10.0..60.0) / w;
        Shot {
            frames,
            base: rng.random_range(20.0..100.0),
            gx: slope * angle.cos(),
            gy: slope * angle.sin(),
            blobs,
            tex_fx: rng.random_range(-0.35..0.35),
            tex_fy: rng.random_range(-0.35..0.35),
            tex_amp: contrast * rng.random_range(5.0..20.0),
            tex_speed: rng.random_range(0.02..0.15),
            tex_phase: rng.random_range(0.0..std::f64::consts::TAU),
            pan_x: rng.random_range(-0.4..0.4),
            pan_y: rng.random_range(-0.3..0.3),
        }
    }

    fn render(&self, t: usize, w: usize, h: usize) -> Vec<u8> {
        let t = t as f64;
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let blobs: Vec<(f64, f64, f64, f64)> = self
            .blobs
            .iter()
            .map(|b| (b.x + b.vx * t, b.y + b.vy * t, 1.0 / (2.0 * b.sigma * b.sigma), b.amplitude))
            .collect();
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let sy = y as f64 + self.pan_y * t;
            for x in 0..w {
                let sx = x as f64 + self.pan_x * t;
                let mut v = self.base + self.gx * (sx - cx) + self.gy * (sy - cy);
                for &(bx, by, k, a) in &blobs {
                    let d2 = (sx - bx).powi(2) + (sy - by).powi(2);
                    v += a * (-d2 * k).exp();
                }
                v += self.tex_amp * (self.tex_fx * sx + self.tex_fy * sy + self.tex_phase + self.tex_speed * t).sin();
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

/// Seed of video `index` in a corpus, independent of the corpus size.
fn video_seed(corpus_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(corpus_seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Renders video `index` of the corpus described by `params`.
pub fn generate_video(params: &CorpusParams, index: usize) -> VideoStream {
    let mut rng = ChaCha20Rng::seed_from_u64(video_seed(params.seed, index));
    let seconds = if params.max_seconds > params.min_seconds {
        rng.random_range(params.min_seconds..=params.max_seconds)
    } else {
        params.min_seconds
    };
    let total = ((seconds * params.frame_rate.fps()).round() as usize).max(1);
    let shot_count = rng.random_range(1..=3usize).min(total);
    // Cut points split the video into roughly comparable shots.
    let mut cuts: Vec<usize> = (1..shot_count)
        .map(|s| {
            let centre = total * s / shot_count;
            let spread = total / (shot_count * 4) + 1;
            (centre + rng.random_range(0..spread)).saturating_sub(spread / 2).clamp(1, total - 1)
        })
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(total);

    let (w, h) = (params.width, params.height);
    let mut frames = Vec::with_capacity(total);
    for span in bounds.windows(2) {
        let len = span[1] - span[0];
        let mut shot = Shot::random(&mut rng, len, w as f64, h as f64);
        let mut gap = 0;
        if span[0] > 0 && len > 12 && rng.random_bool(0.3) {
            gap = rng.random_range(3..=8usize);
            shot.frames = len - gap;
        }
        for _ in 0..gap {
            frames.push(Frame::filled(w, h, 0, frames.len() as u32));
        }
        for t in 0..shot.frames {
            let px = shot.render(t, w, h);
            frames.push(Frame::new(w, h, px, frames.len() as u32).expect("rendered frame has the right size"));
        }
    }
    VideoStream::new(format!("synthetic-{index:05}"), params.frame_rate, frames)
        .expect("generated stream is consistent")
}

/// Renders the whole corpus; video `i` only depends on `(seed, i)`.
pub fn generate_corpus(params: &CorpusParams, exec: Execution) -> Result<Vec<VideoStream>> {
    params.validate()?;
    Ok(par::map_range(exec, params.count, |i| generate_video(params, i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyframe::SelectionParams;
    use crate::matcher::{compare, similarity, MatchParams};
    use crate::video_hash::build_video_hash;

    fn small(count: usize, seed: u64) -> CorpusParams {
        CorpusParams {
            count,
            min_seconds: 2.0,
            max_seconds: 6.0,
            seed,
            ..CorpusParams::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_corpus(&small(3, 11), Execution::Sequential).unwrap();
        let b = generate_corpus(&small(3, 11), Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&small(3, 12), Execution::default()).unwrap();
        assert_ne!(a[0].frames, c[0].frames);
    }

    #[test]
    fn video_depends_only_on_seed_and_index() {
        let big = small(5, 3);
        let v = generate_video(&big, 4);
        assert_eq!(v, generate_corpus(&big, Execution::default()).unwrap()[4]);
    }

    #[test]
    fn shape_contract() {
        let corpus = generate_corpus(&small(20, 1), Execution::default()).unwrap();
        assert_eq!(corpus.len(), 20);
        for v in &corpus {
            assert!((60..=180).contains(&v.frames.len()), "{} frames", v.frames.len());
            assert_eq!(v.dimensions(), (96, 72));
            assert_eq!(v.frame_rate, FrameRate { num: 30, den: 1 });
        }
    }

    #[test]
    fn too_small_corpus_is_rejected() {
        assert!(generate_corpus(&small(1, 0), Execution::default()).is_err());
    }

    #[test]
    fn near_duplicates_are_rare_among_fifty_videos() {
        // a single-keyframe hash can match by chance; the suite removes those
        let corpus = generate_corpus(&small(50, 5), Execution::default()).unwrap();
        let params = SelectionParams::default();
        let hashes: Vec<_> = corpus.iter().map(|v| build_video_hash(v, &params).unwrap()).collect();
        for h in &hashes {
            assert!(!h.records.is_empty());
        }
        let mut alike = 0;
        for i in 0..hashes.len() {
            for j in i + 1..hashes.len() {
                let r = compare(&hashes[i], &hashes[j], &MatchParams::default()).unwrap();
                if similarity(&r) >= 0.5 {
                    alike += 1;
                    let shortest = hashes[i].records.len().min(hashes[j].records.len());
                    assert!(shortest <= 1, "videos {i} and {j} look alike");
                }
            }
        }
        assert!(alike <= 12, "{alike} of 1225 pairs look alike");
    }
}
