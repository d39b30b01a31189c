use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::{PruneError, Result};

/// Write `bytes` to `path` through a temporary file in the same directory,
/// renamed into place once fully written.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| PruneError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| PruneError::io(path, e))?;
    tmp.flush().map_err(|e| PruneError::io(path, e))?;
    tmp.persist(path).map_err(|e| PruneError::io(path, e.error))?;
    Ok(())
}
