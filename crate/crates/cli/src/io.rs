//! File plumbing shared by the stages: JSONL round trips and atomic
//! writes, so an interrupted run never leaves a half-written artifact.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::errors::CliError;

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::other(format!("cannot read {}: {e}", path.display())))
}

/// Writes through a sibling temp file and renames over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::other(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!("{file_name}.tmp"));
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::other(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::other(format!("cannot finalize {}: {e}", path.display())))
}

pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let raw = read_to_string(path)?;
    raw.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| {
                CliError::other(format!(
                    "{} line {}: bad record: {e}",
                    path.display(),
                    i + 1
                ))
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut out = String::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| CliError::other(format!("cannot serialize record: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Appends one record immediately (crash durability during long
/// stages); the stage rewrites the file sorted once it completes.
pub fn append_jsonl<T: Serialize>(path: &Path, row: &T) -> Result<(), CliError> {
    let line = serde_json::to_string(row)
        .map_err(|e| CliError::other(format!("cannot serialize record: {e}")))?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::other(format!("cannot open {}: {e}", path.display())))?;
    writeln!(file, "{line}")
        .map_err(|e| CliError::other(format!("cannot append to {}: {e}", path.display())))
}

pub fn write_pretty_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::other(format!("cannot serialize {}: {e}", path.display())))?;
    out.push('\n');
    write_atomic(path, out.as_bytes())
}

pub fn read_pretty_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = read_to_string(path)?;
    serde_json::from_str(&raw)
        .map_err(|e| CliError::other(format!("{}: bad JSON: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        id: u32,
        name: String,
    }

    #[test]
    fn jsonl_round_trip_and_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let rows = vec![
            Row {
                id: 1,
                name: "a".into(),
            },
            Row {
                id: 2,
                name: "b".into(),
            },
        ];
        write_jsonl(&path, &rows).unwrap();
        append_jsonl(
            &path,
            &Row {
                id: 3,
                name: "c".into(),
            },
        )
        .unwrap();
        let back: Vec<Row> = load_jsonl(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(
            back[2],
            Row {
                id: 3,
                name: "c".into()
            }
        );
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second");
        assert!(!path.with_file_name("x.txt.tmp").exists());
    }
}
