//! File formats and whole-file atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::sequence::{DistillationRecord, RecordMeta, Token, TokenSeq, Trajectory, Vocab};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path
        .file_name()
        .ok_or_else(|| HarnessError::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable value");
    v.push(b'\n');
    v
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    write_atomic(path, &to_json_bytes(value))
}

/// One line of a trajectory file. `truth` is the reference the order is paired
/// with; `teacher` is what the teacher itself wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub prompt: Vec<Token>,
    pub truth: Vec<Token>,
    pub order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<Vec<Token>>,
    pub vocab: Vocab,
}

impl TrajectoryLine {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            order: self.order.clone(),
            truth: TokenSeq::new(self.truth.clone()),
        }
    }
}

/// One line of a distillation file; masked positions are written as -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub prompt: Vec<Token>,
    pub noisy: Vec<i64>,
    pub label_positions: Vec<usize>,
    pub labels: Vec<Token>,
    pub t: f64,
    pub s: usize,
    pub k: usize,
    pub step_index: usize,
    pub vocab: Vocab,
}

impl RecordLine {
    pub fn from_record(r: &DistillationRecord, vocab: &Vocab) -> Self {
        RecordLine {
            prompt: r.prompt.clone(),
            noisy: r
                .noisy
                .tokens()
                .iter()
                .map(|&t| if t == vocab.mask_id { -1 } else { t as i64 })
                .collect(),
            label_positions: r.label_positions.clone(),
            labels: r.labels.clone(),
            t: r.meta.t,
            s: r.meta.s,
            k: r.meta.k,
            step_index: r.meta.step_index,
            vocab: *vocab,
        }
    }

    pub fn to_record(&self) -> Result<DistillationRecord, String> {
        let noisy = self
            .noisy
            .iter()
            .map(|&t| match t {
                -1 => Ok(self.vocab.mask_id),
                t if t >= 0 && t < self.vocab.size as i64 && t != self.vocab.mask_id as i64 => {
                    Ok(t as Token)
                }
                t => Err(format!("token {t} outside the vocabulary")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DistillationRecord {
            prompt: self.prompt.clone(),
            noisy: TokenSeq::new(noisy),
            label_positions: self.label_positions.clone(),
            labels: self.labels.clone(),
            meta: RecordMeta {
                t: self.t,
                s: self.s,
                k: self.k,
                step_index: self.step_index,
            },
        })
    }
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("serializable value");
        out.push(b'\n');
    }
    out
}

/// Parses non-empty lines; errors carry the 1-based line number.
pub fn parse_jsonl<T: DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryLine>, HarnessError> {
    let lines: Vec<TrajectoryLine> = parse_jsonl(path, &read_text(path)?)?;
    if lines.is_empty() {
        return Err(HarnessError::Data(format!("{}: no trajectories", path.display())));
    }
    Ok(lines)
}

pub fn read_records(path: &Path) -> Result<(Vec<DistillationRecord>, Vocab), HarnessError> {
    let lines: Vec<RecordLine> = parse_jsonl(path, &read_text(path)?)?;
    let vocab = lines
        .first()
        .map(|l| l.vocab)
        .ok_or_else(|| HarnessError::Data(format!("{}: no records", path.display())))?;
    let records = lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if l.vocab != vocab {
                return Err(format!("record {i}: vocabulary differs from the first record"));
            }
            l.to_record().map_err(|m| format!("record {i}: {m}"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|message| HarnessError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
    Ok((records, vocab))
}
