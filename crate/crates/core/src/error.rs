//! Crate-wide error type.

use thiserror::Error;

/// Severity of a validation diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// One finding from circuit validation, with a remedy hint where possible.
#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub hint: Option<String>,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, message: message.into(), hint: None }
    }

    pub fn warning(message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, message: message.into(), hint: None }
    }

    pub fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = Some(hint.into());
        self
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: {}", sev, self.message)?;
        if let Some(hint) = &self.hint {
            write!(f, " ({hint})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{message}")]
    Flatten { message: String },

    #[error("circuit validation failed:\n{}", format_diagnostics(.diagnostics))]
    Validation { diagnostics: Vec<Diagnostic> },

    #[error("element {instance}: {message}")]
    Element { instance: String, message: String },

    #[error("singular matrix at pivot for unknown `{slot}` (index {index}): check for a floating node or a zero-resistance loop")]
    Singular { index: usize, slot: String },

    #[error("Newton-Raphson failed to converge at t={time:.9e} after {iterations} iterations (|residual|={residual:.3e})")]
    NonConvergence { time: f64, iterations: usize, residual: f64 },

    #[error("transient aborted at t={time:.9e}: {message}")]
    Transient { time: f64, message: String },

    #[error("steady-state shooting failed: {message}")]
    Ssw { message: String },

    #[error("{message}")]
    Postproc { message: String },

    #[error("solve block {index}: {message}")]
    SolveBlock { index: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
