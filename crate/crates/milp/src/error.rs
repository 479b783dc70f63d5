use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("column {column} has invalid bounds [{lower}, {upper}]")]
    Bounds { column: usize, lower: f64, upper: f64 },
    #[error("row {row} references column {column}, which does not exist")]
    ColumnIndex { row: usize, column: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("enumeration refused: {count} integer columns exceed the cap of {cap}")]
    TooManyBinaries { count: usize, cap: usize },
    #[error("enumeration supports binary columns only; column {0} is general integer")]
    GeneralInteger(usize),
}
