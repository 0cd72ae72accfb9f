use thiserror::Error;

/// Which side of a canonical correlation problem an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    X,
    Y,
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Block::X => f.write_str("X"),
            Block::Y => f.write_str("Y"),
        }
    }
}

/// Broad class of an error, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum RfccaError {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate sample: n = {n} must exceed p + q = {dims}")]
    DegenerateSample { n: usize, dims: usize },

    #[error("block {block} is rank deficient after centering")]
    RankDeficient { block: Block },

    #[error("bag of observations has {distinct} distinct rows, needs more than p + q = {dims}")]
    DegenerateBop { distinct: usize, dims: usize },

    #[error("no out-of-bag estimates available")]
    NoEstimates,

    #[error("generator error: {0}")]
    Generator(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RfccaError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            RfccaError::InvalidConfig(_) => ErrorKind::Usage,
            RfccaError::InvalidData(_)
            | RfccaError::Dimension(_)
            | RfccaError::Manifest(_)
            | RfccaError::Parse { .. }
            | RfccaError::ModelFormat(_)
            | RfccaError::Io(_) => ErrorKind::Data,
            RfccaError::DegenerateSample { .. }
            | RfccaError::RankDeficient { .. }
            | RfccaError::DegenerateBop { .. }
            | RfccaError::NoEstimates
            | RfccaError::Generator(_) => ErrorKind::Numeric,
        }
    }
}

pub type Result<T, E = RfccaError> = std::result::Result<T, E>;
