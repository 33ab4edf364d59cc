//! File formats, report bundles and pipeline plumbing for the `prismetric`
//! command-line tool.
//!
//! The numerics live in `prismetric-core`; this crate adds everything
//! OS-shaped: STL and point-cloud ingestion, CSV/JSON artifact writers,
//! and the orchestration that turns raw scans into report bundles.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod cloud;
pub mod gridcsv;
pub mod jsonio;
pub mod records;
pub mod report;
pub mod stl;

/// Errors raised while reading or writing artifact files.
#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}: file contains no data")]
    Empty { path: PathBuf },
}

impl FileError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FileError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FileError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn malformed(path: &Path, message: impl Into<String>) -> Self {
        FileError::Malformed {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

/// Default decimal places for fixed-point numeric output.
pub const DEFAULT_DECIMALS: usize = 4;

/// Fixed-decimal rendering used by every CSV/text artifact so diffs stay
/// stable; non-finite values render as `nan`.
pub fn fmt_fixed(x: f64, decimals: usize) -> String {
    if x.is_finite() {
        // Avoid the "-0.0000" artifact for tiny negative values.
        let s = format!("{x:.decimals$}");
        if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
            s[1..].to_string()
        } else {
            s
        }
    } else {
        "nan".to_string()
    }
}

/// `fmt_fixed` lifted over missing values (`None` renders as `nan`).
pub fn fmt_opt(x: Option<f64>, decimals: usize) -> String {
    match x {
        Some(v) => fmt_fixed(v, decimals),
        None => "nan".to_string(),
    }
}
