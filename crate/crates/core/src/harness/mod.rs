//! Experiment configuration, dispatch and output.

mod config;
mod output;
mod run;

pub use config::{Command, ConfigOverrides, ExperimentConfig, Format, DEFAULT_REPLICAS};
pub use output::{write_csv, write_json, Row, CSV_HEADER};
pub use run::{run_experiment, theta_grid, ExperimentResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error{}: {field}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, field: String, message: String },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Compute(String),
}

impl HarnessError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        HarnessError::Config { line: None, field: field.to_string(), message: message.into() }
    }

    /// Process exit code: 2 config, 3 budget, 4 I/O, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::BudgetExceeded(_) => 3,
            HarnessError::Io(_) => 4,
            HarnessError::Compute(_) => 1,
        }
    }
}

impl From<crate::observables::ObservableError> for HarnessError {
    fn from(e: crate::observables::ObservableError) -> Self {
        use crate::observables::ObservableError as E;
        match e {
            E::BudgetExceeded { .. } | E::Piles(crate::piles::PileError::CapExceeded(_)) => {
                HarnessError::BudgetExceeded(e.to_string())
            }
            E::UnsortedTimes | E::NoReplicas | E::DimensionMismatch(..) => HarnessError::config("t", e.to_string()),
            other => HarnessError::Compute(other.to_string()),
        }
    }
}
