//! On-disk formats for the experience pool and the tips dictionary.
//!
//! Pool: JSON lines. The first line is a header record carrying the schema
//! version, focus points, embedder id, every task and the number of trial
//! records that follow. Each further line is one trajectory. Tips: a single
//! pretty-printed JSON document.

use std::fs;
use std::io;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ExperiencePool, FocusPointSet, MemoryError, TaskSpec, Tip, TipsDictionary, Trajectory};

pub const POOL_SCHEMA_VERSION: u32 = 1;
pub const TIPS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("truncated pool: header announces {expected} trial records, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: MemoryError,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PoolRecord {
    Header(PoolHeader),
    Trial(Trajectory),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolHeader {
    schema_version: u32,
    embedder_id: String,
    focus_points: FocusPointSet,
    tasks: Vec<TaskSpec>,
    trial_count: usize,
}

pub fn pool_to_string(pool: &ExperiencePool) -> String {
    let header = PoolRecord::Header(PoolHeader {
        schema_version: POOL_SCHEMA_VERSION,
        embedder_id: pool.embedder_id.clone(),
        focus_points: pool.focus_points.clone(),
        tasks: pool.entries().iter().map(|e| e.task.clone()).collect(),
        trial_count: pool.trial_count(),
    });
    let mut out = serde_json::to_string(&header).expect("pool header serializes");
    out.push('\n');
    for entry in pool.entries() {
        for trial in &entry.trials {
            let rec = PoolRecord::Trial(trial.clone());
            out.push_str(&serde_json::to_string(&rec).expect("trajectory serializes"));
            out.push('\n');
        }
    }
    out
}

fn check_version(value: &serde_json::Value, expected: u32, line: usize) -> Result<(), PersistError> {
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(found) if found == u64::from(expected) => Ok(()),
        Some(found) => Err(PersistError::VersionMismatch { found, expected }),
        None => Err(PersistError::Parse {
            line,
            message: "missing schema_version".into(),
        }),
    }
}

pub fn pool_from_str(text: &str) -> Result<ExperiencePool, PersistError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (line_no, first) = lines.next().ok_or(PersistError::Parse {
        line: 1,
        message: "empty file, expected a header record".into(),
    })?;
    let value: serde_json::Value = serde_json::from_str(first).map_err(|e| PersistError::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    check_version(&value, POOL_SCHEMA_VERSION, line_no)?;
    let header = match serde_json::from_value(value) {
        Ok(PoolRecord::Header(h)) => h,
        Ok(PoolRecord::Trial(_)) => {
            return Err(PersistError::Parse {
                line: line_no,
                message: "expected header record first".into(),
            })
        }
        Err(e) => {
            return Err(PersistError::Parse {
                line: line_no,
                message: e.to_string(),
            })
        }
    };

    let mut pool = ExperiencePool::new(header.focus_points, header.embedder_id);
    for task in header.tasks {
        pool.add_task(task)
            .map_err(|source| PersistError::Invalid { line: line_no, source })?;
    }
    let mut found = 0;
    for (line, text) in lines {
        let rec: PoolRecord = serde_json::from_str(text).map_err(|e| PersistError::Parse {
            line,
            message: e.to_string(),
        })?;
        match rec {
            PoolRecord::Trial(t) => {
                pool.append_trial(t)
                    .map_err(|source| PersistError::Invalid { line, source })?;
                found += 1;
            }
            PoolRecord::Header(_) => {
                return Err(PersistError::Parse {
                    line,
                    message: "unexpected second header record".into(),
                })
            }
        }
    }
    if found != header.trial_count {
        return Err(PersistError::Truncated {
            expected: header.trial_count,
            found,
        });
    }
    Ok(pool)
}

fn write(path: &Path, contents: &str) -> Result<(), PersistError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| PersistError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String, PersistError> {
    fs::read_to_string(path).map_err(|source| PersistError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_pool(pool: &ExperiencePool, path: &Path) -> Result<(), PersistError> {
    write(path, &pool_to_string(pool))
}

pub fn load_pool(path: &Path) -> Result<ExperiencePool, PersistError> {
    pool_from_str(&read(path)?)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TipsDocument {
    schema_version: u32,
    env_name: String,
    entries: IndexMap<String, Vec<Tip>>,
}

pub fn tips_to_string(tips: &TipsDictionary) -> String {
    let doc = TipsDocument {
        schema_version: TIPS_SCHEMA_VERSION,
        env_name: tips.env_name.clone(),
        entries: tips.entries.clone(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("tips serialize");
    out.push('\n');
    out
}

pub fn tips_from_str(text: &str) -> Result<TipsDictionary, PersistError> {
    let json_err = |e: serde_json::Error| PersistError::Parse {
        line: e.line(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    check_version(&value, TIPS_SCHEMA_VERSION, 1)?;
    let doc: TipsDocument = serde_json::from_value(value).map_err(|e| PersistError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(TipsDictionary {
        env_name: doc.env_name,
        entries: doc.entries,
    })
}

pub fn save_tips(tips: &TipsDictionary, path: &Path) -> Result<(), PersistError> {
    write(path, &tips_to_string(tips))
}

pub fn load_tips(path: &Path) -> Result<TipsDictionary, PersistError> {
    tips_from_str(&read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::tests::pool_with;
    use crate::memory::TipOrigin;

    #[test]
    fn pool_round_trip() {
        let mut pool = pool_with(&[("a", &[false, true]), ("b", &[true]), ("c", &[false])]);
        pool.focus_points = FocusPointSet {
            items: vec!["check drawers".into()],
            source_env: "minihouse".into(),
        };
        let text = pool_to_string(&pool);
        let back = pool_from_str(&text).unwrap();
        assert_eq!(back, pool);
        assert_eq!(pool_to_string(&back), text);
    }

    #[test]
    fn empty_pool_round_trip() {
        let pool = ExperiencePool::default();
        assert_eq!(pool_from_str(&pool_to_string(&pool)).unwrap(), pool);
    }

    #[test]
    fn truncated_pool_is_rejected() {
        let pool = pool_with(&[("a", &[false, true]), ("b", &[true])]);
        let text = pool_to_string(&pool);
        // drop the last record at a line boundary
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            pool_from_str(&cut),
            Err(PersistError::Truncated { expected: 3, found: 1 })
        ));
        // cut in the middle of a record
        let mid = &text[..text.len() - 20];
        match pool_from_str(mid) {
            Err(PersistError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch() {
        let text = pool_to_string(&ExperiencePool::default()).replace(
            "\"schema_version\":1",
            "\"schema_version\":9",
        );
        assert!(matches!(
            pool_from_str(&text),
            Err(PersistError::VersionMismatch { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn tips_round_trip_and_errors() {
        let mut td = TipsDictionary::new("minihouse");
        td.entries.insert(
            "a".into(),
            vec![
                Tip::new("look in drawers", TipOrigin::Compare),
                Tip::new("carry one item", TipOrigin::SuccessSupplement),
            ],
        );
        let text = tips_to_string(&td);
        assert_eq!(tips_from_str(&text).unwrap(), td);
        assert!(matches!(
            tips_from_str(&text[..text.len() / 2]),
            Err(PersistError::Parse { .. })
        ));
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(
            tips_from_str(&bumped),
            Err(PersistError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let pool = pool_with(&[("a", &[true])]);
        let path = dir.path().join("nested/pool.jsonl");
        save_pool(&pool, &path).unwrap();
        assert_eq!(load_pool(&path).unwrap(), pool);
        assert!(matches!(
            load_pool(&dir.path().join("missing.jsonl")),
            Err(PersistError::Io { .. })
        ));
    }
}
