//! On-disk formats and kernel construction helpers.

mod export;
mod kernel_file;
mod parametric;
mod validate;

use std::path::PathBuf;

pub use export::{
    export_table, read_survival_csv, write_table, CsvTable, LabeledLedger, LabeledPhi,
    QuoteTable,
};
pub use kernel_file::{
    export_kernel, load_kernel, parse_kernel, parse_kernel_unchecked, read_kernel_unchecked,
    write_kernel,
};
pub use parametric::{
    build_parametric_kernel, geometric_kernel, CalendarSpec, ParametricSpec, SojournFamily,
    TransitionSpec,
};
pub use validate::{validate_kernel, TopUp, ValidationReport, Violation};

use crate::error::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid kernel\n{0}")]
    Invalid(ValidationReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<ValidationReport> for IoError {
    fn from(report: ValidationReport) -> Self {
        Self::Invalid(report)
    }
}

fn file_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}
