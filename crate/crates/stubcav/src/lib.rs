//! Files, configuration and command-line pipeline around `stubcav-core`.
//!
//! The pipeline runs in stages that share an output directory:
//! `mode-solve`, `shift-map`, `calibrate`, `sweep`, `fit`, `invert-height`.
//! Each stage writes CSV artifacts whose comment header records the
//! configuration that produced them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod io;

use stubcav_core::Error as CoreError;

/// Command failure, grouped by exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AppError {
    /// Bad configuration, geometry or missing prerequisite stage.
    #[error("{0}")]
    Config(String),
    /// A solver, fit or inversion failed.
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl AppError {
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => AppError::Config(m),
            e @ (CoreError::Geometry(_) | CoreError::Precondition(_)) => AppError::Config(e.to_string()),
            e => AppError::Numerical(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
            AppError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Numerical(_) => "numerical",
            AppError::Io(_) => "io",
        }
    }

    /// Prefixes the message with `what`.
    pub fn context(self, what: &str) -> Self {
        match self {
            AppError::Config(m) => AppError::Config(format!("{what}: {m}")),
            AppError::Numerical(m) => AppError::Numerical(format!("{what}: {m}")),
            AppError::Io(m) => AppError::Io(format!("{what}: {m}")),
        }
    }

    /// Single-line form for stderr.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error kind={} code={} msg={msg}", self.kind(), self.exit_code())
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        AppError::from_core(e)
    }
}

impl From<config::ConfigError> for AppError {
    fn from(e: config::ConfigError) -> Self {
        AppError::Config(e.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_groups() {
        assert_eq!(AppError::from(CoreError::Config("x".into())).exit_code(), 2);
        assert_eq!(AppError::from(CoreError::Precondition("x".into())).exit_code(), 2);
        assert_eq!(AppError::from(CoreError::NoConvergence { residual: 1.0 }).exit_code(), 3);
        assert_eq!(AppError::Io("x".into()).exit_code(), 4);
        assert!(!AppError::Config("a\nb".into()).line().contains('\n'));
    }
}
