//! On-disk formats: binary datasets (`LWTD`), binary checkpoints (`LWTM`)
//! and the `key = value` configuration text.

mod bytes;
mod checkpoint;
mod config;
mod dataset;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{load_config, read_config, Config, ConfigError};
pub use dataset::{
    dataset_file_len, load_dataset, read_dataset, save_dataset, write_dataset, DATASET_HEADER_LEN,
    DATASET_MAGIC, DATASET_VERSION,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not a {format} file: magic bytes {found:?}")]
    BadMagic { format: &'static str, found: String },
    #[error("{format} format version {version} is not supported (expected {supported})")]
    UnsupportedVersion {
        format: &'static str,
        version: u16,
        supported: u16,
    },
    #[error("truncated file: {what} needs {needed} bytes but only {available} remain")]
    Truncated {
        what: String,
        needed: usize,
        available: usize,
    },
    #[error("{0} unexpected trailing bytes after the declared payload")]
    TrailingBytes(usize),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid record {index}: {detail}")]
    InvalidRecord { index: usize, detail: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, StoreError> {
    fs::read(path).map_err(io_err(path))
}
