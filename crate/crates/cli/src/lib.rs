//! Config-driven experiment runner: parse an experiment file, build the
//! model, engine and state, run one command and write CSV/JSON outputs with a
//! manifest.

pub mod config;
pub mod output;
pub mod run;

use std::path::Path;

use serde_json::json;

pub use config::{parse_config, ConfigError, ExperimentConfig, COMMANDS};
pub use output::{Format, RunManifest};
pub use run::{run, RunOptions, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Core {
        context: String,
        source: lr_ergo_core::Error,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        use lr_ergo_core::Error as E;
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Io { .. } => EXIT_IO,
            RunError::Core { source, .. } => match source {
                E::OverflowGuard { .. }
                | E::SafeWindowExceeded(_)
                | E::WrapGuard(_)
                | E::Numerical(_)
                | E::NotSelfAdjoint { .. } => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_CONFIG => "config",
            EXIT_NUMERICAL => "numerical_guard",
            _ => "io",
        }
    }

    /// Machine-readable error document.
    pub fn to_json(&self, command: &str) -> serde_json::Value {
        let line = match self {
            RunError::Config(e) => e.line,
            _ => None,
        };
        json!({ "error": { "kind": self.kind(), "exit_code": self.exit_code(), "command": command, "line": line, "message": self.to_string() } })
    }
}

/// Error document for a failed certificate or check.
pub fn violation_json(command: &str, message: &str) -> serde_json::Value {
    json!({ "error": { "kind": "violation", "exit_code": EXIT_VIOLATION, "command": command, "line": null, "message": message } })
}

/// Reads and validates `config_path`, checks it against `command`, and runs it.
pub fn run_file(
    command: &str,
    config_path: &Path,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    if !COMMANDS.contains(&command) {
        return Err(config::unknown_command(command).into());
    }
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", config_path.display())))?;
    let cfg = parse_config(&text)?;
    if cfg.command.name() != command {
        return Err(ConfigError::new(format!(
            "command line asks for {command:?} but the config's [command] block is {:?}",
            cfg.command.name()
        ))
        .into());
    }
    run(&cfg, &text, opts)
}
