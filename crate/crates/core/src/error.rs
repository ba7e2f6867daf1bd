//! Errors, truncation reports and check verdicts shared across the crate.

use thiserror::Error;

/// A truncation window was too small to decide a comparison.
///
/// Carries the variable that ran out, the exclusive upper exponent bound that
/// would have been needed, and the bound that was actually available.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncationNeed {
    pub var: String,
    pub needed: i64,
    pub available: i64,
}

impl std::fmt::Display for TruncationNeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "window for `{}` too small: need exponents below {}, only exact below {}",
            self.var, self.needed, self.available
        )
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VqgError {
    #[error("ring mismatch: {0}")]
    RingMismatch(String),
    #[error("variable set mismatch: {0}")]
    VarSetMismatch(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("scalar is not an invertible monomial: {0}")]
    NonInvertibleScalar(String),
    #[error("series is not invertible: {0}")]
    NonInvertibleSeries(String),
    #[error("{0}")]
    Truncation(TruncationNeed),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

/// Counterexample data attached to a failed check.
///
/// `states` lists the basis states (canonical state syntax) the check was
/// evaluated on; `exponents` is the first differing exponent vector when the
/// comparison happened inside a series, and is empty for element comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub check: String,
    pub states: Vec<String>,
    pub exponents: Vec<i64>,
    pub lhs: String,
    pub rhs: String,
}

impl std::fmt::Display for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} fails", self.check)?;
        if !self.states.is_empty() {
            write!(f, " on ({})", self.states.join(", "))?;
        }
        if !self.exponents.is_empty() {
            let e: Vec<String> = self.exponents.iter().map(|k| k.to_string()).collect();
            write!(f, " at exponent ({})", e.join(","))?;
        }
        write!(f, ": lhs = {}, rhs = {}", self.lhs, self.rhs)
    }
}

/// Outcome of a single axiom check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Pass,
    Fail(Witness),
    /// The truncation window was insufficient to decide; retry with more room.
    Insufficient(TruncationNeed),
}

impl CheckOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, CheckOutcome::Pass)
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            CheckOutcome::Fail(w) => Some(w),
            _ => None,
        }
    }

    /// Chains checks: first non-pass wins.
    pub fn and_then(self, next: impl FnOnce() -> CheckOutcome) -> CheckOutcome {
        if self.is_pass() {
            next()
        } else {
            self
        }
    }
}

impl From<Result<(), Witness>> for CheckOutcome {
    fn from(r: Result<(), Witness>) -> Self {
        match r {
            Ok(()) => CheckOutcome::Pass,
            Err(w) => CheckOutcome::Fail(w),
        }
    }
}
