use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at row {row}, column `{column}`: {message}")]
    CsvCell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("unknown level `{level}` in column `{column}` at row {row}")]
    UnknownLevel {
        column: String,
        level: String,
        row: usize,
    },
    #[error("invalid value in column `{column}` at row {row}: {message}")]
    InvalidValue {
        column: String,
        row: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid roles: {0}")]
    Roles(String),
    #[error("treatment effect not estimable: {0}")]
    Inestimable(String),
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("model fit did not converge: {0}")]
    NonConvergence(String),
    #[error("non-finite objective: {0}")]
    NonFinite(String),
    #[error("empty row set")]
    EmptyRowSet,
    #[error("root fit failed: {0}")]
    RootFit(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
