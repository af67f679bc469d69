//! Command-line driver for the benchmark: configuration, the pipeline
//! commands and the mapping from failures to exit codes.

pub mod config;
pub mod pipeline;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;

/// Environment variable overriding the configured output root.
pub const OUTPUT_ENV: &str = "ECBENCH_OUTPUT";

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// An invalid configuration or an inconsistent on-disk state.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Exit code for a failure: 2 configuration, 3 numerical, 4 I/O, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<ecbench_core::Error>() {
            return match e.root() {
                _ if e.is_numerical() => EXIT_NUMERICAL,
                ecbench_core::Error::Config(_) | ecbench_core::Error::Shape(_) => EXIT_CONFIG,
                _ => EXIT_IO,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_IO;
        }
    }
    1
}

/// `--output`, then `$ECBENCH_OUTPUT`, then the config's `output`, then `./ecbench-out`.
pub fn output_root(flag: Option<&Path>, env: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or(env.filter(|p| !p.as_os_str().is_empty()))
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("ecbench-out"))
}
