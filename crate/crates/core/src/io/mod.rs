//! File codecs and atomic output.

pub mod json;
pub mod ply;
pub mod png;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use json::{read_json, write_json};
pub use ply::{read_ply, read_ply_mesh, write_ply, write_ply_mesh, PlyError, PlyFormat};
pub use png::{read_color_png, read_depth_png, read_mask_png, write_color_png, write_depth_png, write_mask_png};

/// Writes to a temporary sibling and renames it over `path`, so readers
/// never observe a partially written file. Parent directories are created.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn atomic_write_str(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes())
}
