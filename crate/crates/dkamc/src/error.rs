use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol index {index} out of range for constellation of size {size}")]
    InvalidSymbol { index: usize, size: usize },

    #[error("cannot add noise to an all-zero signal")]
    ZeroPower,

    #[error("noisy and clean sequences are identical; SNR is infinite")]
    InfiniteSnr,

    #[error("invalid channel config: {0}")]
    InvalidConfig(String),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unknown format version {0}")]
    UnknownVersion(u8),

    #[error("file truncated while reading frame {frame_index}")]
    Truncated { frame_index: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error(
        "duplicate attribute rows for classes {0} and {1}: classes indistinguishable by attributes"
    )]
    DegenerateTaxonomy(usize, usize),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("stratified split needs at least 2 frames per (class, snr) cell; cell (class {class}, {snr_db} dB) has {count}")]
    CellTooSmall {
        class: usize,
        snr_db: i8,
        count: usize,
    },

    #[error("train fraction must be in (0, 1), got {0}")]
    BadFraction(f64),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
