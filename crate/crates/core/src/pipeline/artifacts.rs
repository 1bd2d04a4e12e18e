//! JSONL artifact I/O and stage completion markers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

pub const MARKER_DIR: &str = ".markers";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sibling of `path` that receives the bytes until they are complete.
fn staging_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through a staging file renamed over `path`, so a reader never
/// sees a truncated artifact.
pub(crate) fn write_atomic(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), PipelineError> {
    let staging = staging_path(path);
    let mut w = BufWriter::new(File::create(&staging).map_err(io_err(&staging))?);
    fill(&mut w).and_then(|_| w.flush()).map_err(io_err(&staging))?;
    drop(w);
    std::fs::rename(&staging, path).map_err(io_err(path))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), PipelineError> {
    write_atomic(path, |w| {
        for item in items {
            serde_json::to_writer(&mut *w, &item)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Artifact {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Written after a stage's outputs are complete; a stage is skipped on
/// re-run only if its marker matches the current run and every output
/// still hashes to the recorded digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMarker {
    pub stage: String,
    pub config_digest: String,
    pub corpus_digest: String,
    pub backend: String,
    pub outputs: BTreeMap<String, String>,
}

pub fn marker_path(out_dir: &Path, stage: &str) -> PathBuf {
    out_dir.join(MARKER_DIR).join(format!("{stage}.json"))
}

pub fn read_marker(out_dir: &Path, stage: &str) -> Option<StageMarker> {
    let text = std::fs::read_to_string(marker_path(out_dir, stage)).ok()?;
    serde_json::from_str(&text).ok()
}

/// All markers present in `out_dir`.
pub fn read_markers(out_dir: &Path) -> Vec<StageMarker> {
    let Ok(dir) = std::fs::read_dir(out_dir.join(MARKER_DIR)) else {
        return Vec::new();
    };
    let mut paths: Vec<PathBuf> = dir.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    paths
        .iter()
        .filter_map(|p| serde_json::from_str(&std::fs::read_to_string(p).ok()?).ok())
        .collect()
}

pub fn write_marker(out_dir: &Path, marker: &StageMarker) -> Result<(), PipelineError> {
    let path = marker_path(out_dir, &marker.stage);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_json(&path, marker)
}

pub fn remove_marker(out_dir: &Path, stage: &str) -> Result<(), PipelineError> {
    let path = marker_path(out_dir, stage);
    match std::fs::remove_file(&path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(io_err(&path)(e)),
    }
}

/// True when the marker's outputs exist and still match their digests.
pub fn outputs_intact(out_dir: &Path, marker: &StageMarker) -> bool {
    marker
        .outputs
        .iter()
        .all(|(name, digest)| sha256_file(&out_dir.join(name)).is_ok_and(|d| &d == digest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_markers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        write_jsonl(&p, [1u32, 2, 3]).unwrap();
        assert_eq!(read_jsonl::<u32>(&p).unwrap(), [1, 2, 3]);
        let mut outputs = BTreeMap::new();
        outputs.insert("x.jsonl".to_string(), sha256_file(&p).unwrap());
        let m = StageMarker {
            stage: "align".into(),
            config_digest: "c".into(),
            corpus_digest: "d".into(),
            backend: "b".into(),
            outputs,
        };
        write_marker(dir.path(), &m).unwrap();
        assert_eq!(read_marker(dir.path(), "align"), Some(m.clone()));
        assert!(outputs_intact(dir.path(), &m));
        std::fs::write(&p, "9\n").unwrap();
        assert!(!outputs_intact(dir.path(), &m));
        remove_marker(dir.path(), "align").unwrap();
        remove_marker(dir.path(), "align").unwrap();
        assert!(read_markers(dir.path()).is_empty());
    }
}
