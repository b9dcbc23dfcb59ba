//! Frame directories: `.ppm` files with numeric names, read in numeric order.

use std::path::{Path, PathBuf};

use mfst_core::Tensor3;

use crate::error::{CliError, Result};
use crate::ppm;

pub fn frame_name(index: usize) -> String {
    format!("{index:05}.ppm")
}

pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::missing(dir, "frames directory not found"));
    }
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("ppm") {
            continue;
        }
        let number = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok());
        if let Some(n) = number {
            frames.push((n, path));
        }
    }
    if frames.is_empty() {
        return Err(CliError::missing(dir, "no numbered .ppm frames"));
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

pub fn load_frame(path: &Path) -> Result<Tensor3> {
    ppm::read_frame(path).map_err(|source| match source {
        ppm::PpmError::Io(e) => CliError::io(path, e),
        source => CliError::Frame {
            path: path.to_path_buf(),
            source,
        },
    })
}
