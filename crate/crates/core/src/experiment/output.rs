//! Atomic file output and small CSV helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;

use crate::error::{Error, Result};

/// Writes `contents` to `path` through a sibling temporary file and a rename,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp: PathBuf = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Matrix as CSV with a header row; an optional leading time column.
pub fn matrix_csv(header: &[String], times: Option<&[f64]>, m: &Mat<f64>) -> String {
    let mut out = String::new();
    if times.is_some() {
        out.push_str("t,");
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..m.nrows() {
        if let Some(t) = times {
            let _ = write!(out, "{},", t[i]);
        }
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}
