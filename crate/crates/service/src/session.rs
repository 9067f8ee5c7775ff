//! Annotation sessions and their append-only journals.
//!
//! Each session owns `<id>.jsonl` in the journal directory: one `created`
//! record followed by `judgment`, `skipped` and `trained` records in the order
//! they were acknowledged. The latest model lives in `<id>.model.json`.
//! Replaying the journal rebuilds the session exactly.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use storypoint_core::models::TrainedModel;
use storypoint_core::pairing::{AnnotationPair, ComparativePair, Judgment};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

impl Choice {
    pub fn judgment(self) -> Judgment {
        match self {
            Choice::A => Judgment::AMore,
            Choice::B => Judgment::BMore,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Collecting,
    Trained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub pair_index: usize,
    pub a: String,
    pub b: String,
    pub choice: Choice,
    pub y: Judgment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    pub at_ms: u64,
}

impl JudgmentRecord {
    pub fn pair(&self) -> ComparativePair {
        ComparativePair {
            a: self.a.clone(),
            b: self.b.clone(),
            y: self.y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JournalRecord {
    Created {
        session_id: String,
        dataset: String,
        k: usize,
        seed: u64,
        queue: Vec<AnnotationPair>,
        at_ms: u64,
    },
    Judgment(JudgmentRecord),
    Skipped {
        pair_index: usize,
        at_ms: u64,
    },
    Trained {
        judgments: usize,
        at_ms: u64,
    },
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub id: String,
    pub dataset: String,
    pub k: usize,
    pub seed: u64,
    pub queue: Vec<AnnotationPair>,
    /// Serving order over queue indices; a skip moves an index to the end.
    pub order: Vec<usize>,
    pub judged: Vec<bool>,
    pub judgments: Vec<JudgmentRecord>,
    pub skips: usize,
    pub model: Option<TrainedModel>,
    /// Judgment count behind the current model.
    pub trained_on: Option<usize>,
    pub status: Status,
}

impl SessionState {
    pub fn new(id: String, dataset: String, k: usize, seed: u64, queue: Vec<AnnotationPair>) -> Self {
        SessionState {
            order: (0..queue.len()).collect(),
            judged: vec![false; queue.len()],
            id,
            dataset,
            k,
            seed,
            queue,
            judgments: Vec::new(),
            skips: 0,
            model: None,
            trained_on: None,
            status: Status::Collecting,
        }
    }

    /// The first unjudged index in serving order.
    pub fn next_index(&self) -> Option<usize> {
        self.order.iter().copied().find(|&i| !self.judged[i])
    }

    pub fn check_open(&self, pair_index: usize) -> ApiResult<&AnnotationPair> {
        let pair = self
            .queue
            .get(pair_index)
            .ok_or_else(|| ApiError::NotFound(format!("pair {pair_index} is not in the queue")))?;
        if self.judged[pair_index] {
            return Err(ApiError::Conflict(format!("pair {pair_index} is already judged")));
        }
        Ok(pair)
    }

    /// Apply a record that has already been validated and persisted.
    pub fn apply(&mut self, record: &JournalRecord) {
        match record {
            JournalRecord::Created { .. } => {}
            JournalRecord::Judgment(j) => {
                self.judged[j.pair_index] = true;
                self.judgments.push(j.clone());
            }
            JournalRecord::Skipped { pair_index, .. } => {
                if let Some(pos) = self.order.iter().position(|i| i == pair_index) {
                    let i = self.order.remove(pos);
                    self.order.push(i);
                }
                self.skips += 1;
            }
            JournalRecord::Trained { judgments, .. } => {
                self.status = Status::Trained;
                self.trained_on = Some(*judgments);
            }
        }
    }

    pub fn training_pairs(&self) -> Vec<ComparativePair> {
        self.judgments.iter().map(JudgmentRecord::pair).collect()
    }
}

/// Append handle for one session's journal. Every append is flushed and
/// synced to disk before it returns.
#[derive(Debug)]
pub struct Journal {
    file: Option<File>,
    path: Option<PathBuf>,
}

fn storage(path: &Path, e: impl std::fmt::Display) -> ApiError {
    ApiError::Storage(format!("{}: {e}", path.display()))
}

impl Journal {
    /// A journal that keeps nothing, for in-memory services.
    pub fn memory() -> Self {
        Journal { file: None, path: None }
    }

    pub fn create(dir: &Path, session_id: &str) -> ApiResult<Self> {
        let path = dir.join(format!("{session_id}.jsonl"));
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| storage(&path, e))?;
        Ok(Journal {
            file: Some(file),
            path: Some(path),
        })
    }

    fn reopen(path: PathBuf) -> ApiResult<Self> {
        let file = OpenOptions::new().append(true).open(&path).map_err(|e| storage(&path, e))?;
        Ok(Journal {
            file: Some(file),
            path: Some(path),
        })
    }

    pub fn append(&mut self, record: &JournalRecord) -> ApiResult<()> {
        let (Some(file), Some(path)) = (&mut self.file, &self.path) else {
            return Ok(());
        };
        let mut line = serde_json::to_string(record).map_err(|e| storage(path, e))?;
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(|e| storage(path, e))?;
        file.sync_data().map_err(|e| storage(path, e))
    }

    pub fn model_path(&self) -> Option<PathBuf> {
        self.path.as_ref().map(|p| p.with_extension("model.json"))
    }

    /// Write the model next to the journal, via a synced temporary file.
    pub fn save_model(&self, model: &TrainedModel) -> ApiResult<()> {
        let Some(path) = self.model_path() else {
            return Ok(());
        };
        let tmp = path.with_extension("json.tmp");
        let text = model.to_json()?;
        let mut file = File::create(&tmp).map_err(|e| storage(&tmp, e))?;
        file.write_all(text.as_bytes()).map_err(|e| storage(&tmp, e))?;
        file.sync_data().map_err(|e| storage(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| storage(&path, e))
    }
}

/// Rebuild a session from its journal file.
pub fn replay(path: &Path) -> ApiResult<(SessionState, Journal)> {
    let file = File::open(path).map_err(|e| storage(path, e))?;
    let mut state: Option<SessionState> = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| storage(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JournalRecord =
            serde_json::from_str(&line).map_err(|e| storage(path, format!("line {}: {e}", n + 1)))?;
        match (&mut state, &record) {
            (None, JournalRecord::Created { session_id, dataset, k, seed, queue, .. }) => {
                state = Some(SessionState::new(session_id.clone(), dataset.clone(), *k, *seed, queue.clone()));
            }
            (None, _) => return Err(storage(path, "journal does not start with a created record")),
            (Some(s), JournalRecord::Judgment(j)) => {
                s.check_open(j.pair_index)
                    .map_err(|e| storage(path, format!("line {}: {e}", n + 1)))?;
                s.apply(&record);
            }
            (Some(s), _) => s.apply(&record),
        }
    }
    let mut state = state.ok_or_else(|| storage(path, "empty journal"))?;
    let journal = Journal::reopen(path.to_path_buf())?;
    if state.status == Status::Trained {
        let model_path = journal.model_path().expect("file journal has a path");
        match TrainedModel::load(&model_path) {
            Ok(model) => state.model = Some(model),
            // a crash between journaling and saving leaves no usable model
            Err(_) => {
                state.status = Status::Collecting;
                state.trained_on = None;
            }
        }
    }
    Ok((state, journal))
}
