use thiserror::Error;

/// Errors surfaced by dataset construction, fitting, inference, and aggregation.
///
/// Row numbers in data errors are 1-based indices of data rows (the header
/// row is not counted).
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse {value:?} as a finite value")]
    UnparsableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {0}: self-dyad (both members identical)")]
    SelfDyad(usize),

    #[error("dataset contains no observations")]
    EmptyDataset,

    #[error("design matrix is rank deficient (reciprocal condition number {rcond:.3e})")]
    RankDeficient { rcond: f64 },

    #[error("small-sample correction requires at least 2 units, got {0}")]
    DegenerateUnits(usize),

    #[error("inference tables do not match: {0}")]
    MismatchedCoefficients(String),

    #[error("aggregation group `{0}` contains no records")]
    EmptyGroup(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable discriminant, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::UnparsableCell { .. } => "UnparsableCell",
            Error::SelfDyad(_) => "SelfDyad",
            Error::EmptyDataset => "EmptyDataset",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::DegenerateUnits(_) => "DegenerateUnits",
            Error::MismatchedCoefficients(_) => "MismatchedCoefficients",
            Error::EmptyGroup(_) => "EmptyGroup",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
