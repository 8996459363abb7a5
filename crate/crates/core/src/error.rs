//! Crate-wide error type and the structured validation report.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::AlgebraError;
use crate::sdp::solver::{SolverError, SolverStatus};

/// One named check with its residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Outcome of a validation: every check is listed, passing or not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject: String,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new(subject: impl Into<String>) -> Self {
        ValidationReport { subject: subject.into(), checks: Vec::new() }
    }

    /// Records `residual ≤ tolerance` under `name`.
    pub fn push(&mut self, name: impl Into<String>, residual: f64, tolerance: f64) {
        let passed = residual <= tolerance;
        self.checks.push(Check { name: name.into(), residual, tolerance, passed });
    }

    /// Records a check that passes when `value ≥ −tolerance`.
    pub fn push_lower_bound(&mut self, name: impl Into<String>, value: f64, tolerance: f64) {
        let passed = value >= -tolerance;
        self.checks.push(Check { name: name.into(), residual: value, tolerance, passed });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        let prefix = other.subject;
        for mut c in other.checks {
            if !prefix.is_empty() {
                c.name = format!("{prefix}: {}", c.name);
            }
            self.checks.push(c);
        }
    }

    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual.abs()).fold(0.0, f64::max)
    }

    pub fn into_result(self) -> Result<(), Error> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", if self.subject.is_empty() { "object" } else { &self.subject })?;
        let failed: Vec<&Check> = self.failures().collect();
        if failed.is_empty() {
            return write!(f, ": valid");
        }
        write!(f, ": ")?;
        for (k, c) in failed.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{} (residual {:.3e}, tol {:.1e})", c.name, c.residual, c.tolerance)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("validation failed: {0}")]
    Invalid(ValidationReport),
    #[error("solver error: {0}")]
    Solver(#[from] SolverError),
    #[error("solver did not converge (status {status:?})")]
    SolverStatus { status: SolverStatus },
    #[error("input set is not tomographically complete: {0}")]
    Frame(String),
    #[error("not a witness: {0}")]
    NotAWitness(String),
    #[error("invalid bracket: {0}")]
    InvalidBracket(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
