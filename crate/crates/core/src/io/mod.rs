//! File formats and on-disk plumbing: the binary tensor format, parameter
//! checkpoints, flat key=value configuration, and scene-set generation.
//!
//! All writers go through [`write_atomic`]: contents land in a temp file in
//! the destination directory and are renamed into place, so a failed command
//! never leaves a partial output behind.

mod checkpoint;
mod config;
mod dataset;
mod tensor_file;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint, LoadedParams};
pub use config::{parse_data_spec, parse_kv, parse_train_setup, DataSpec, Precision, TrainSetup};
pub use dataset::{generate_scene_set, load_scene_pairs, write_loss_csv, MANIFEST_NAME};
pub use tensor_file::{TensorData, TensorFile, TENSOR_MAGIC};

use std::path::Path;

use crate::error::Result;

/// Writes via temp-file-and-rename in the target directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp_name = format!(".{file_name}.tmp{}", std::process::id());
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => std::path::PathBuf::from(&tmp_name),
    };
    if let Err(e) = std::fs::write(&tmp, bytes) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.bin");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(leftovers.len(), 1);
    }
}
