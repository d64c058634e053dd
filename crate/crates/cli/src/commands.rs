use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hvh_core::bench::{generate_corpus, run_robustness_suite, CorpusParams};
use hvh_core::enc_pipeline::{server_aggregate as aggregate, EncryptedComponents, EncryptedVideo, TrustedZone};
use hvh_core::paillier::{KeyPair, PrivateKey, PublicKey};
use hvh_core::{
    compare as compare_hashes, load_frame_directory, parse_y4m, similarity, FrameRate, HashIndex,
    Threshold, VideoHash, VideoStream,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::config::Config;
use crate::output::{emit, fingerprint, HashSummary};
use crate::{InputError, SourceArgs, UsageError};

pub const PUBLIC_KEY_FILE: &str = "hvh.pub";
pub const PRIVATE_KEY_FILE: &str = "hvh.key";

/// Seeded stream `stream` of the configured seed, or fresh entropy.
fn rng(config: &Config, stream: u64) -> ChaCha20Rng {
    match config.seed {
        Some(seed) => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            rng
        }
        None => ChaCha20Rng::from_rng(&mut rand::rng()),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn parse_fps(text: &str) -> Result<FrameRate> {
    let (num, den) = text.split_once('/').unwrap_or((text, "1"));
    let parsed = num.trim().parse().ok().zip(den.trim().parse().ok());
    parsed
        .and_then(|(n, d)| FrameRate::new(n, d).ok())
        .ok_or_else(|| UsageError(format!("invalid frame rate {text:?}")).into())
}

fn read_stream(input: Option<&Path>, source: &SourceArgs) -> Result<VideoStream> {
    let (mut stream, default_id) = match input {
        None => read_stdin()?,
        Some(p) if p == Path::new("-") => read_stdin()?,
        Some(p) if p.is_dir() => {
            let stream = load_frame_directory(p, parse_fps(&source.fps)?)
                .with_context(|| format!("cannot load frames from {}", p.display()))?;
            let id = stream.source_id.clone();
            (stream, id)
        }
        Some(p) => {
            let stream = parse_y4m(&read_file(p)?).with_context(|| format!("cannot parse {}", p.display()))?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (stream, id)
        }
    };
    stream.source_id = source.id.clone().unwrap_or(default_id);
    if stream.source_id.len() > usize::from(u16::MAX) {
        return Err(UsageError("source id longer than 65535 bytes".into()).into());
    }
    Ok(stream)
}

fn read_stdin() -> Result<(VideoStream, String)> {
    let mut bytes = Vec::new();
    std::io::stdin()
        .read_to_end(&mut bytes)
        .context("cannot read stdin")?;
    let stream = parse_y4m(&bytes).context("cannot parse Y4M from stdin")?;
    Ok((stream, "stdin".to_owned()))
}

fn key_path<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| UsageError(format!("this command needs --{flag} (or {} in the config file)", flag.replace('-', "_"))).into())
}

fn load_public_key(config: &Config) -> Result<PublicKey> {
    let path = key_path(&config.public_key, "public-key")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    PublicKey::from_text(&text).with_context(|| format!("bad public key {}", path.display()))
}

fn load_private_key(config: &Config) -> Result<PrivateKey> {
    let path = key_path(&config.private_key, "private-key")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    PrivateKey::from_text(&text).with_context(|| format!("bad private key {}", path.display()))
}

fn load_hash(path: &Path) -> Result<VideoHash> {
    VideoHash::load(path).with_context(|| format!("cannot load hash {}", path.display()))
}

fn write_private(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut options = std::fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options
        .open(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    file.write_all(text.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))
}

pub fn keygen(config: &Config, out: &Path, json: bool) -> Result<()> {
    #[derive(Serialize)]
    struct Out {
        command: &'static str,
        key_bits: u32,
        fingerprint: String,
        public_key: String,
        private_key: String,
    }
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let pair = KeyPair::generate(config.key_bits, &mut rng(config, 0)).map_err(|e| match e {
        hvh_core::Error::KeyGeneration(m) if m.contains("below minimum") => anyhow::Error::from(UsageError(m)),
        e => e.into(),
    })?;
    let public_path = out.join(PUBLIC_KEY_FILE);
    let private_path = out.join(PRIVATE_KEY_FILE);
    write_file(&public_path, pair.public.to_text().as_bytes())?;
    write_private(&private_path, &pair.private.to_text())?;
    let report = Out {
        command: "keygen",
        key_bits: pair.public.bits(),
        fingerprint: fingerprint(pair.public.fingerprint()),
        public_key: public_path.display().to_string(),
        private_key: private_path.display().to_string(),
    };
    emit(&report, json, || {
        format!(
            "{}-bit key {}\npublic   {}\nprivate  {}\n",
            report.key_bits, report.fingerprint, report.public_key, report.private_key
        )
    })
}

#[derive(Serialize)]
struct HashOut {
    command: &'static str,
    output: Option<String>,
    #[serde(flatten)]
    summary: HashSummary,
}

fn report_hash(command: &'static str, hash: &VideoHash, out: Option<&Path>, json: bool) -> Result<()> {
    if let Some(path) = out {
        write_file(path, &hash.serialize())?;
    }
    let report = HashOut {
        command,
        output: out.map(|p| p.display().to_string()),
        summary: HashSummary::new(hash, false),
    };
    emit(&report, json, || {
        let mut s = report.summary.table();
        if let Some(o) = &report.output {
            s.push_str(&format!("written to       {o}\n"));
        }
        s
    })
}

pub fn hash(config: &Config, input: Option<&Path>, out: Option<&Path>, source: &SourceArgs, json: bool) -> Result<()> {
    let stream = read_stream(input, source)?;
    let hash = hvh_core::video_hash::build_video_hash_with(&stream, &config.selection(), config.execution)?;
    report_hash("hash", &hash, out, json)
}

pub fn tz_prepare(config: &Config, input: Option<&Path>, out: &Path, source: &SourceArgs, json: bool) -> Result<()> {
    #[derive(Serialize)]
    struct Out {
        command: &'static str,
        source_id: String,
        keyframes: usize,
        ciphertexts: usize,
        key_fingerprint: String,
        output: String,
    }
    let zone = TrustedZone::new(load_private_key(config)?, config.selection())?;
    let stream = read_stream(input, source)?;
    let video = zone.prepare(&stream, &mut rng(config, 1), config.execution)?;
    write_file(out, &video.serialize(zone.public_key()))?;
    let report = Out {
        command: "tz-prepare",
        source_id: video.header.source_id.clone(),
        keyframes: video.frames.len(),
        ciphertexts: video.frames.iter().map(|f| f.ciphertexts.len()).sum(),
        key_fingerprint: fingerprint(video.key_fingerprint),
        output: out.display().to_string(),
    };
    emit(&report, json, || {
        format!(
            "encrypted {} keyframes ({} ciphertexts) of {} under key {}\nwritten to {}\n",
            report.keyframes, report.ciphertexts, report.source_id, report.key_fingerprint, report.output
        )
    })
}

pub fn server_aggregate(config: &Config, input: &Path, out: &Path, json: bool) -> Result<()> {
    #[derive(Serialize)]
    struct Out {
        command: &'static str,
        source_id: String,
        frames: usize,
        components: usize,
        key_fingerprint: String,
        output: String,
    }
    let pk = load_public_key(config)?;
    let video = EncryptedVideo::deserialize(&read_file(input)?, &pk)
        .with_context(|| format!("cannot load encrypted video {}", input.display()))?;
    let components = aggregate(&pk, &video, &mut rng(config, 2), config.execution)?;
    write_file(out, &components.serialize(&pk))?;
    let report = Out {
        command: "server-aggregate",
        source_id: components.header.source_id.clone(),
        frames: components.frames.len(),
        components: components.frames.iter().map(|f| f.block_diffs.len()).sum(),
        key_fingerprint: fingerprint(components.key_fingerprint),
        output: out.display().to_string(),
    };
    emit(&report, json, || {
        format!(
            "aggregated {} frames into {} components for {}\nwritten to {}\n",
            report.frames, report.components, report.source_id, report.output
        )
    })
}

pub fn tz_finalize(config: &Config, input: &Path, out: &Path, json: bool) -> Result<()> {
    let zone = TrustedZone::new(load_private_key(config)?, config.selection())?;
    let components = EncryptedComponents::deserialize(&read_file(input)?, zone.public_key())
        .with_context(|| format!("cannot load components {}", input.display()))?;
    let hash = zone.finalize(&components, config.execution)?;
    report_hash("tz-finalize", &hash, Some(out), json)
}

pub fn compare(config: &Config, a: &Path, b: &Path, json: bool) -> Result<()> {
    #[derive(Serialize)]
    struct Out {
        command: &'static str,
        a: String,
        b: String,
        score: u64,
        self_score_a: u64,
        self_score_b: u64,
        similarity: f64,
        alignment: Vec<(usize, usize)>,
    }
    let (ha, hb) = (load_hash(a)?, load_hash(b)?);
    let result = compare_hashes(&ha, &hb, &config.matching())?;
    let report = Out {
        command: "compare",
        a: ha.header.source_id.clone(),
        b: hb.header.source_id.clone(),
        score: result.score,
        self_score_a: result.self_score_a,
        self_score_b: result.self_score_b,
        similarity: similarity(&result),
        alignment: result.alignment.clone(),
    };
    emit(&report, json, || {
        format!(
            "{} vs {}\nscore       {} (self scores {} and {})\nsimilarity  {:.4}\nmatched     {} keyframes\n",
            report.a,
            report.b,
            report.score,
            report.self_score_a,
            report.self_score_b,
            report.similarity,
            report.alignment.len()
        )
    })
}

pub fn index_add(index: &Path, hashes: &[PathBuf], json: bool) -> Result<()> {
    #[derive(Serialize)]
    struct Out {
        command: &'static str,
        index: String,
        added: Vec<String>,
        entries: usize,
    }
    let loaded = hashes.iter().map(|p| load_hash(p)).collect::<Result<Vec<_>>>()?;
    let mut idx = HashIndex::open(index).with_context(|| format!("cannot open index {}", index.display()))?;
    let mut added = Vec::new();
    for h in loaded {
        let id = h.header.source_id.clone();
        idx.add(h).with_context(|| format!("cannot add {id:?}"))?;
        added.push(id);
    }
    let report = Out {
        command: "index-add",
        index: index.display().to_string(),
        added,
        entries: idx.len(),
    };
    emit(&report, json, || {
        format!(
            "added {} hashes to {} ({} entries)\n",
            report.added.len(),
            report.index,
            report.entries
        )
    })
}

pub fn index_query(
    config: &Config,
    index: &Path,
    query: &Path,
    min_similarity: Option<f64>,
    min_score: Option<u64>,
    top: Option<usize>,
    json: bool,
) -> Result<()> {
    #[derive(Serialize)]
    struct Hit {
        source_id: String,
        score: u64,
        similarity: f64,
    }
    #[derive(Serialize)]
    struct Out {
        command: &'static str,
        index: String,
        query: String,
        hits: Vec<Hit>,
    }
    let threshold = match (min_similarity, min_score) {
        (Some(s), _) if !(0.0..=1.0).contains(&s) => {
            return Err(UsageError(format!("--min-similarity {s} outside [0, 1]")).into())
        }
        (Some(s), _) => Threshold::Similarity(s),
        (None, Some(s)) => Threshold::Score(s),
        (None, None) => Threshold::Similarity(0.0),
    };
    if !index.exists() {
        return Err(InputError(format!("no index at {}", index.display())).into());
    }
    let idx = HashIndex::open(index).with_context(|| format!("cannot open index {}", index.display()))?;
    let q = load_hash(query)?;
    let mut hits = idx.query(&q, &config.matching(), threshold, config.execution)?;
    if let Some(n) = top {
        hits.truncate(n);
    }
    let report = Out {
        command: "index-query",
        index: index.display().to_string(),
        query: q.header.source_id.clone(),
        hits: hits
            .into_iter()
            .map(|h| Hit {
                source_id: h.source_id,
                score: h.result.score,
                similarity: h.similarity,
            })
            .collect(),
    };
    emit(&report, json, || {
        let mut s = format!("{} hits for {}\n", report.hits.len(), report.query);
        if !report.hits.is_empty() {
            s.push_str(&format!("{:>8}  {:>10}  source id\n", "score", "similarity"));
        }
        for h in &report.hits {
            s.push_str(&format!("{:>8}  {:>10.4}  {}\n", h.score, h.similarity, h.source_id));
        }
        s
    })
}

pub fn bench(config: &Config, out: &Path, json: bool) -> Result<()> {
    #[derive(Serialize)]
    struct Fpr {
        target_fpr: f64,
        tpr: Option<f64>,
        threshold: Option<f64>,
    }
    #[derive(Serialize)]
    struct Out {
        command: &'static str,
        report: String,
        panels: Vec<String>,
        videos: usize,
        duplicates_removed: usize,
        similar_pairs: usize,
        different_pairs: usize,
        crossover_accuracy: f64,
        crossover_threshold: f64,
        tpr_at_fpr: Vec<Fpr>,
        warnings: Vec<String>,
        notes: Vec<String>,
    }
    let corpus_params = CorpusParams {
        count: config.bench_videos,
        min_seconds: config.bench_min_seconds,
        max_seconds: config.bench_max_seconds,
        seed: config.seed.unwrap_or(0),
        ..CorpusParams::default()
    };
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let corpus = generate_corpus(&corpus_params, config.execution)?;
    let suite = run_robustness_suite(&corpus, &config.suite(), config.execution)?;

    let report_path = out.join("report.json");
    write_file(&report_path, serde_json::to_string_pretty(&suite)?.as_bytes())?;
    let mut panels = Vec::new();
    for panel in &suite.panels {
        let path = out.join(format!("panel_{}.csv", panel.parameter));
        write_file(&path, panel.to_csv().as_bytes())?;
        panels.push(path.display().to_string());
    }
    let roc = &suite.roc;
    let report = Out {
        command: "bench",
        report: report_path.display().to_string(),
        panels,
        videos: suite.videos,
        duplicates_removed: suite.duplicates_removed.len(),
        similar_pairs: roc.similar_pairs,
        different_pairs: roc.different_pairs,
        crossover_accuracy: roc.crossover_accuracy,
        crossover_threshold: roc.crossover_threshold,
        tpr_at_fpr: roc
            .tpr_at_fpr
            .iter()
            .map(|p| Fpr {
                target_fpr: p.target_fpr,
                tpr: p.tpr,
                threshold: p.threshold,
            })
            .collect(),
        warnings: roc.warnings.clone(),
        notes: suite.notes.clone(),
    };
    emit(&report, json, || {
        let mut s = format!(
            "videos            {} ({} near-duplicates removed)\n\
             similar pairs     {}\n\
             different pairs   {}\n\
             crossover         {:.4} at similarity {:.4}\n",
            report.videos,
            report.duplicates_removed,
            report.similar_pairs,
            report.different_pairs,
            report.crossover_accuracy,
            report.crossover_threshold
        );
        for p in &report.tpr_at_fpr {
            match p.tpr {
                Some(t) => s.push_str(&format!("TPR at FPR {:e}  {:.4}\n", p.target_fpr, t)),
                None => s.push_str(&format!("TPR at FPR {:e}  not estimated\n", p.target_fpr)),
            }
        }
        for w in report.warnings.iter().chain(&report.notes) {
            s.push_str(&format!("note: {w}\n"));
        }
        s.push_str(&format!("report            {}\n", report.report));
        s
    })
}

pub fn inspect(config: &Config, file: &Path, json: bool) -> Result<()> {
    #[derive(Serialize)]
    struct IndexEntry {
        source_id: String,
        keyframes: usize,
        total_frames: u32,
    }
    #[derive(Serialize)]
    #[serde(tag = "kind", rename_all = "kebab-case")]
    enum Details {
        VideoHash(HashSummary),
        Index { entries: Vec<IndexEntry> },
        PublicKey { key_bits: u32, fingerprint: String },
        PrivateKey { key_bits: u32, fingerprint: String },
        EncryptedVideo { source_id: String, keyframes: usize, key_fingerprint: String },
        Components { source_id: String, frames: usize, key_fingerprint: String },
    }
    #[derive(Serialize)]
    struct Out {
        command: &'static str,
        file: String,
        #[serde(flatten)]
        details: Details,
    }
    let bytes = read_file(file)?;
    let context = || format!("cannot parse {}", file.display());
    let details = match bytes.get(..4) {
        Some(b"HVH1") => Details::VideoHash(HashSummary::new(
            &VideoHash::deserialize(&bytes).with_context(context)?,
            true,
        )),
        Some(b"HVX1") => {
            let idx = HashIndex::open(file).with_context(context)?;
            Details::Index {
                entries: idx
                    .iter()
                    .map(|(id, h)| IndexEntry {
                        source_id: id.to_owned(),
                        keyframes: h.records.len(),
                        total_frames: h.header.total_frames,
                    })
                    .collect(),
            }
        }
        Some(b"HVE1") => {
            let v = EncryptedVideo::deserialize(&bytes, &load_public_key(config)?).with_context(context)?;
            Details::EncryptedVideo {
                source_id: v.header.source_id,
                keyframes: v.frames.len(),
                key_fingerprint: fingerprint(v.key_fingerprint),
            }
        }
        Some(b"HVC1") => {
            let c = EncryptedComponents::deserialize(&bytes, &load_public_key(config)?).with_context(context)?;
            Details::Components {
                source_id: c.header.source_id,
                frames: c.frames.len(),
                key_fingerprint: fingerprint(c.key_fingerprint),
            }
        }
        _ => {
            let text = String::from_utf8(bytes).map_err(|_| InputError(format!("{}: unknown file type", file.display())))?;
            if text.contains("hvh-paillier-private") {
                let k = PrivateKey::from_text(&text).with_context(context)?;
                Details::PrivateKey {
                    key_bits: k.bits(),
                    fingerprint: fingerprint(k.fingerprint()),
                }
            } else if text.contains("hvh-paillier-public") {
                let k = PublicKey::from_text(&text).with_context(context)?;
                Details::PublicKey {
                    key_bits: k.bits(),
                    fingerprint: fingerprint(k.fingerprint()),
                }
            } else {
                return Err(InputError(format!("{}: unknown file type", file.display())).into());
            }
        }
    };
    let report = Out {
        command: "inspect",
        file: file.display().to_string(),
        details,
    };
    emit(&report, json, || match &report.details {
        Details::VideoHash(s) => s.table(),
        Details::Index { entries } => {
            let mut s = format!("hash index with {} entries\n", entries.len());
            for e in entries {
                s.push_str(&format!("{:>6} keyframes  {:>6} frames  {}\n", e.keyframes, e.total_frames, e.source_id));
            }
            s
        }
        Details::PublicKey { key_bits, fingerprint } => format!("public key, {key_bits} bits, {fingerprint}\n"),
        Details::PrivateKey { key_bits, fingerprint } => format!("private key, {key_bits} bits, {fingerprint}\n"),
        Details::EncryptedVideo {
            source_id,
            keyframes,
            key_fingerprint,
        } => format!("encrypted video {source_id}: {keyframes} keyframes under key {key_fingerprint}\n"),
        Details::Components {
            source_id,
            frames,
            key_fingerprint,
        } => format!("hash components for {source_id}: {frames} frames under key {key_fingerprint}\n"),
    })
}

