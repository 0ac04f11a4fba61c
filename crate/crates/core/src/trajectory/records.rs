//! Line-delimited JSON record files: one tagged object per line, every line
//! newline-terminated. See `docs/record-schema.md` for the field reference.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KtoExample, PreferencePair, Trajectory, TrajectoryError};
use crate::advantage::AdvantageProfile;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum Record<T> {
    Trajectory(Trajectory<T>),
    PreferencePair(PreferencePair<T>),
    KtoExample(KtoExample<T>),
    AdvantageProfile(AdvantageProfile<T>),
}

impl<T: Scalar> Record<T> {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        match self {
            Record::Trajectory(t) => t.validate(None),
            Record::PreferencePair(p) => p.validate(),
            Record::KtoExample(k) => k.validate(),
            Record::AdvantageProfile(a) => a
                .validate()
                .map_err(|e| TrajectoryError::InvalidTrajectory(e.to_string())),
        }
    }
}

impl<T> From<Trajectory<T>> for Record<T> {
    fn from(t: Trajectory<T>) -> Self {
        Record::Trajectory(t)
    }
}

impl<T> From<PreferencePair<T>> for Record<T> {
    fn from(p: PreferencePair<T>) -> Self {
        Record::PreferencePair(p)
    }
}

impl<T> From<KtoExample<T>> for Record<T> {
    fn from(k: KtoExample<T>) -> Self {
        Record::KtoExample(k)
    }
}

impl<T> From<AdvantageProfile<T>> for Record<T> {
    fn from(a: AdvantageProfile<T>) -> Self {
        Record::AdvantageProfile(a)
    }
}

/// Serializes records one per line. Records are validated first; nothing is
/// written if any fails.
pub fn to_jsonl<T: Scalar>(records: &[Record<T>]) -> Result<String, TrajectoryError> {
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| TrajectoryError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    Ok(out)
}

/// Parses and validates a JSONL document. A final line without its newline
/// is treated as a truncated write and rejected.
pub fn from_jsonl<T: Scalar>(text: &str) -> Result<Vec<Record<T>>, TrajectoryError> {
    if !text.is_empty() && !text.ends_with('\n') {
        let line = text.lines().count();
        return Err(TrajectoryError::Line {
            line,
            message: "truncated record (missing trailing newline)".into(),
        });
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let record: Record<T> = serde_json::from_str(line).map_err(|e| TrajectoryError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.validate().map_err(|e| TrajectoryError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Atomically writes a record file and returns the number of records.
pub fn write_records<T: Scalar>(path: &Path, records: &[Record<T>]) -> Result<usize, TrajectoryError> {
    let text = to_jsonl(records)?;
    crate::io::write_atomic(path, text.as_bytes()).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(records.len())
}

pub fn read_records<T: Scalar>(path: &Path) -> Result<Vec<Record<T>>, TrajectoryError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_jsonl(&text)
}
