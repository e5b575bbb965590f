//! File formats: CSV time series, JSON model and report files, SVG plots.

mod config;
mod manifest;
mod model;
mod report;
mod series;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{DictionaryConfig, RunConfig, SimulationConfig, SynthesisSection, SystemConfig};
pub use manifest::{file_sha256, read_manifest, FileRecord, Manifest};
pub use model::{
    read_model, write_model, DictionarySpec, MatrixData, ModelFile, Provenance, Residuals,
    FORMAT_VERSION,
};
pub use report::{ClfFile, ControllabilityFile, RankSampleFile, SynthesisFile};
pub use series::{read_timeseries_csv, write_timeseries_csv, TimeSeries};
pub use svg::{emit_plot_svg, render_svg, PlotStyle, Series};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid header: {0}")]
    Header(String),
    #[error("JSON error at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported model format_version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },
    #[error("inconsistent file: {0}")]
    Inconsistent(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Core(#[from] koopctl_core::Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        IoError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> IoResult<String> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `contents`, creating parent directories.
pub(crate) fn write_file(path: &Path, contents: &[u8]) -> IoResult<()> {
    let wrap = |source| IoError::File {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(wrap)?;
    }
    fs::write(path, contents).map_err(wrap)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> IoResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> IoResult<T> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}
