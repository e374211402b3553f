use thiserror::Error;

/// Errors raised by the bounds library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stratum share {share:.3e} is not above the floor {floor:.3e}{}", context_suffix(.context))]
    ZeroShare {
        share: f64,
        floor: f64,
        context: Option<String>,
    },

    #[error("row {row}: regular moments are undefined where s0 = s1 (label Xzero)")]
    Partition { row: usize },

    #[error("row {row}: smoothed trimming fraction {value:.3e} is not positive; lower h")]
    DegenerateTrim { row: usize, value: f64 },

    #[error("every row was trimmed")]
    AllTrimmed,

    #[error("no selected outcomes in cell {cell} for arm {arm}")]
    EmptyCell { cell: String, arm: u8 },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

fn context_suffix(ctx: &Option<String>) -> String {
    ctx.as_ref().map(|c| format!(" ({c})")).unwrap_or_default()
}

impl Error {
    pub(crate) fn zero_share(share: f64, floor: f64) -> Self {
        Error::ZeroShare {
            share,
            floor,
            context: None,
        }
    }

    /// Stable machine-readable identifier, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid_input",
            Error::Domain(_) => "domain",
            Error::ZeroShare { .. } => "zero_share",
            Error::Partition { .. } => "partition",
            Error::DegenerateTrim { .. } => "degenerate_trim",
            Error::AllTrimmed => "all_trimmed",
            Error::EmptyCell { .. } => "empty_cell",
            Error::Fold { source, .. } => source.kind(),
            Error::Unsupported(_) => "unsupported",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
