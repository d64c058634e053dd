//! `hvh`: perceptual video hashing, plaintext or split across a trusted zone
//! and an untrusted server.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::Config;

/// Bad flags, bad config values or an invalid combination of settings.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Unreadable or malformed input.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "hvh", version, about = "Perceptual video hashing over plaintext or Paillier-encrypted frames")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// Flat key = value settings file, applied over the defaults
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,
    /// Print the effective settings and exit
    #[arg(long, global = true)]
    print_config: bool,
    /// Seed for every random choice; fresh entropy when unset
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// parallel or sequential
    #[arg(long, global = true)]
    execution: Option<String>,
    /// Side length F of pre-processed frames
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Blocks per side B; F must be divisible by B
    #[arg(long, global = true)]
    block_grid: Option<usize>,
    /// Luma standard deviation below which a frame is blank
    #[arg(long, global = true)]
    blank_threshold: Option<f64>,
    /// Hash distance above which a frame becomes a keyframe
    #[arg(long, global = true)]
    keyframe_threshold: Option<u32>,
    /// Max hash distance for matching keyframes (T_h)
    #[arg(long, global = true)]
    hash_threshold: Option<u32>,
    /// Max dropped-count difference for matching keyframes (T_d)
    #[arg(long, global = true)]
    drop_threshold: Option<u32>,
    /// half-up or floor
    #[arg(long, global = true)]
    rounding: Option<String>,
    /// Public key file
    #[arg(long, global = true, value_name = "FILE")]
    public_key: Option<PathBuf>,
    /// Private key file
    #[arg(long, global = true, value_name = "FILE")]
    private_key: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a Paillier key pair
    Keygen {
        /// Modulus size in bits
        #[arg(long)]
        bits: Option<u32>,
        /// Directory receiving hvh.pub and hvh.key
        #[arg(long)]
        out: PathBuf,
    },
    /// Hash a Y4M file, a directory of PGM/PPM frames, or Y4M on stdin
    Hash {
        /// Input path; `-` or omitted reads Y4M from stdin
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Hash through the encrypted pipeline, one stage per invocation
    #[command(subcommand)]
    HashEnc(HashEncCommand),
    /// Compare two .hvh files
    Compare { a: PathBuf, b: PathBuf },
    /// Maintain and search a hash index
    #[command(subcommand)]
    Index(IndexCommand),
    /// Run the robustness benchmark on a synthetic corpus
    Bench {
        /// Directory receiving report.json and one CSV per panel
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        videos: Option<usize>,
        #[arg(long)]
        variants: Option<usize>,
        /// full or mild
        #[arg(long)]
        ranges: Option<String>,
        #[arg(long)]
        min_seconds: Option<f64>,
        #[arg(long)]
        max_seconds: Option<f64>,
        /// FPR fixing the threshold of the sensitivity panels
        #[arg(long)]
        panel_fpr: Option<f64>,
    },
    /// Describe a hash, index, key, encrypted video or components file
    Inspect { file: PathBuf },
}

#[derive(Args, Debug)]
struct SourceArgs {
    /// Source id stored in the hash; defaults to the input's file stem
    #[arg(long)]
    id: Option<String>,
    /// Frame rate of a frame directory, as N or N/D
    #[arg(long, default_value = "30")]
    fps: String,
}

#[derive(Subcommand, Debug)]
enum HashEncCommand {
    /// Trusted zone: select, pre-process and encrypt keyframes
    TzPrepare {
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Server: aggregate encrypted blocks using only the public key
    ServerAggregate {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trusted zone: decrypt components into the video hash
    TzFinalize {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum IndexCommand {
    /// Append hashes to an index, creating it if needed
    Add {
        index: PathBuf,
        #[arg(required = true)]
        hashes: Vec<PathBuf>,
    },
    /// List index entries matching a query hash
    Query {
        index: PathBuf,
        query: PathBuf,
        /// Minimum normalised similarity
        #[arg(long, conflicts_with = "min_score")]
        min_similarity: Option<f64>,
        /// Minimum raw score
        #[arg(long)]
        min_score: Option<u64>,
        /// Keep at most this many hits
        #[arg(long)]
        top: Option<usize>,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key: &'static str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key, v));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("threads", self.threads.map(|v| v.to_string()));
        push("execution", self.execution.clone());
        push("resolution", self.resolution.map(|v| v.to_string()));
        push("block_grid", self.block_grid.map(|v| v.to_string()));
        push("blank_std_threshold", self.blank_threshold.map(|v| v.to_string()));
        push("keyframe_threshold", self.keyframe_threshold.map(|v| v.to_string()));
        push("hash_threshold", self.hash_threshold.map(|v| v.to_string()));
        push("drop_threshold", self.drop_threshold.map(|v| v.to_string()));
        push("rounding", self.rounding.clone());
        push("public_key", self.public_key.as_ref().map(|p| p.display().to_string()));
        push("private_key", self.private_key.as_ref().map(|p| p.display().to_string()));
        out
    }
}

impl Command {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        match self {
            Command::Keygen { bits: Some(b), .. } => out.push(("key_bits", b.to_string())),
            Command::Bench {
                videos,
                variants,
                ranges,
                min_seconds,
                max_seconds,
                panel_fpr,
                ..
            } => {
                let pairs = [
                    ("bench_videos", videos.map(|v| v.to_string())),
                    ("bench_variants", variants.map(|v| v.to_string())),
                    ("bench_ranges", ranges.clone()),
                    ("bench_min_seconds", min_seconds.map(|v| v.to_string())),
                    ("bench_max_seconds", max_seconds.map(|v| v.to_string())),
                    ("bench_panel_fpr", panel_fpr.map(|v| v.to_string())),
                ];
                out.extend(pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
            }
            _ => {}
        }
        out
    }
}

fn effective_config(cli: &Cli) -> Result<Config> {
    let mut config = Config::default();
    if let Some(path) = &cli.global.config {
        config.apply_file(path).map_err(|e| {
            if e.downcast_ref::<UsageError>().is_some() {
                e
            } else {
                InputError(format!("{e:#}")).into()
            }
        })?;
    }
    let command_overrides = cli.command.as_ref().map(Command::overrides).unwrap_or_default();
    for (key, value) in cli.global.overrides().into_iter().chain(command_overrides) {
        config.set(key, &value)?;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = effective_config(&cli)?;
    let json = cli.global.json;
    if cli.global.print_config {
        return output::print_config(&config, json);
    }
    if config.threads > 0 {
        hvh_core::par::set_threads(config.threads);
    }
    let Some(command) = cli.command else {
        return Err(UsageError("no subcommand given; see --help".into()).into());
    };
    match command {
        Command::Keygen { out, .. } => commands::keygen(&config, &out, json),
        Command::Hash { input, out, source } => commands::hash(&config, input.as_deref(), out.as_deref(), &source, json),
        Command::HashEnc(HashEncCommand::TzPrepare { input, out, source }) => {
            commands::tz_prepare(&config, input.as_deref(), &out, &source, json)
        }
        Command::HashEnc(HashEncCommand::ServerAggregate { input, out }) => {
            commands::server_aggregate(&config, &input, &out, json)
        }
        Command::HashEnc(HashEncCommand::TzFinalize { input, out }) => commands::tz_finalize(&config, &input, &out, json),
        Command::Compare { a, b } => commands::compare(&config, &a, &b, json),
        Command::Index(IndexCommand::Add { index, hashes }) => commands::index_add(&index, &hashes, json),
        Command::Index(IndexCommand::Query {
            index,
            query,
            min_similarity,
            min_score,
            top,
        }) => commands::index_query(&config, &index, &query, min_similarity, min_score, top, json),
        Command::Bench { out, .. } => commands::bench(&config, &out, json),
        Command::Inspect { file } => commands::inspect(&config, &file, json),
    }
}

/// Maps an error chain onto the documented exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    use hvh_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<InputError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) | E::Distortion(_) => EXIT_USAGE,
                E::KeyGeneration(_) | E::PlaintextRange | E::MalformedCiphertext | E::InvalidRandomness => {
                    EXIT_INTERNAL
                }
                _ => EXIT_INPUT,
            };
        }
    }
    EXIT_INTERNAL
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn exit_codes_follow_the_error_chain() {
        let usage = anyhow::Error::from(UsageError("x".into())).context("outer");
        assert_eq!(exit_code(&usage), EXIT_USAGE);
        let input: Result<()> = Err(hvh_core::Error::EmptyStream).context("reading");
        assert_eq!(exit_code(&input.unwrap_err()), EXIT_INPUT);
        let io = anyhow::Error::from(std::io::Error::other("disk"));
        assert_eq!(exit_code(&io), EXIT_INPUT);
        let config = anyhow::Error::from(hvh_core::Error::Config("grid".into()));
        assert_eq!(exit_code(&config), EXIT_USAGE);
        let internal = anyhow::Error::from(hvh_core::Error::PlaintextRange);
        assert_eq!(exit_code(&internal), EXIT_INTERNAL);
        assert_eq!(exit_code(&anyhow::anyhow!("invariant broken")), EXIT_INTERNAL);
    }
}
