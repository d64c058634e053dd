use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("plaintext out of range (must be < n)")]
    PlaintextRange,
    #[error("malformed ciphertext")]
    MalformedCiphertext,
    #[error("ciphertext and key do not belong together")]
    KeyMismatch,
    #[error("encryption randomness must satisfy 0 < r < n and gcd(r, n) = 1")]
    InvalidRandomness,
    #[error("invalid key file: {0}")]
    KeyFormat(String),

    #[error("y4m parse error at byte {offset}: {message}")]
    Y4m { offset: usize, message: String },
    #[error("y4m frame {frame_index} truncated at byte {offset}")]
    Y4mTruncated { frame_index: usize, offset: usize },
    #[error("cannot read frame {}: {message}", path.display())]
    FrameFile { path: PathBuf, message: String },
    #[error("frame dimensions {found:?} differ from {expected:?} in {}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("empty video stream")]
    EmptyStream,

    #[error("configuration error: {0}")]
    Config(String),
    #[error("hash lengths differ: {0} vs {1} blocks")]
    LengthMismatch(usize, usize),
    #[error("hashes built with different parameters: {0}")]
    ParameterMismatch(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated input at byte {offset}: {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("duplicate source id {0:?}")]
    DuplicateId(String),

    #[error("invalid distortion: {0}")]
    Distortion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
