use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("variant index {index} out of range 1..={num_variants}")]
    VariantOutOfRange { index: usize, num_variants: usize },

    #[error("step size too large on day {day}: total exit probability {probability}")]
    StepSize { day: usize, probability: f64 },

    #[error("horizon mismatch: expected {expected} days, found {found}")]
    HorizonMismatch { expected: usize, found: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    CsvBackend(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
