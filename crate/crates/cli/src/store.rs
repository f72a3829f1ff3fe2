//! On-disk layout of a simulated world and its per-day ground truth.
//!
//! ```text
//! <dir>/world.json                     the generated world, including its SimConfig
//! <dir>/days/<d>/ground_truth.jsonl    one QueryRecord per line for day d
//! ```
//!
//! A `QueryRecord` line holds the search query plus every one-way leg quote
//! and round-trip quote observed for it.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use farecombo::simgen::{GroundTruthDay, QueryRecord, World};
use serde::Serialize;

use crate::error::CliError;

pub const WORLD_FILE: &str = "world.json";
const LOCK_FILE: &str = ".farecombo.lock";

pub fn day_dir(root: &Path, day: u32) -> PathBuf {
    root.join("days").join(day.to_string())
}

pub fn ground_truth_path(root: &Path, day: u32) -> PathBuf {
    day_dir(root, day).join("ground_truth.jsonl")
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(dir.display().to_string()))
            }
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

pub fn write_day(root: &Path, day: &GroundTruthDay) -> Result<(), CliError> {
    let path = ground_truth_path(root, day.day);
    let dir = day_dir(root, day.day);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut out = BufWriter::new(file);
    for record in &day.records {
        serde_json::to_writer(&mut out, record).map_err(|e| CliError::Failed(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| CliError::io(&path, e))?;
    }
    out.flush().map_err(|e| CliError::io(&path, e))
}

fn missing(root: &Path, what: &Path) -> CliError {
    CliError::MissingData(format!(
        "{} not found; run `farecombo simulate --out {}` first",
        what.display(),
        root.display()
    ))
}

pub fn load_world(root: &Path) -> Result<World, CliError> {
    let path = root.join(WORLD_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing(root, &path)),
        Err(e) => return Err(CliError::io(&path, e)),
    };
    serde_json::from_str(&text)
        .map_err(|e| CliError::CorruptData { path: path.display().to_string(), reason: e.to_string() })
}

pub fn load_day(root: &Path, day: u32) -> Result<GroundTruthDay, CliError> {
    let path = ground_truth_path(root, day);
    let file = match File::open(&path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(missing(root, &path)),
        Err(e) => return Err(CliError::io(&path, e)),
    };
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryRecord = serde_json::from_str(&line).map_err(|e| CliError::CorruptData {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        records.push(record);
    }
    Ok(GroundTruthDay { day, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(CliError::Locked(_))));
        drop(lock);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn missing_world_is_missing_data() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_world(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
