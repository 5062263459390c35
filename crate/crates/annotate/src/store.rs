use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use prefaudit_core::datasets::{build_dpo, DegradationTag, ScoreCard};
use prefaudit_core::VulnFamily;
use serde::{Deserialize, Serialize};

use crate::task::{Event, ReviewTask, TaskSeed, TaskStatus, DEFAULT_DISPUTE_THRESHOLD};
use crate::AnnotateError;

/// Actor recorded for tasks loaded by the operator rather than a reviewer.
pub const SYSTEM_ACTOR: &str = "system";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Member {
    pub id: String,
    pub token: String,
}

/// Static bearer-token roster.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Roster {
    pub members: Vec<Member>,
}

impl Roster {
    pub fn new(members: Vec<Member>) -> Result<Self, AnnotateError> {
        for (i, m) in members.iter().enumerate() {
            if m.id.trim().is_empty() || m.token.trim().is_empty() {
                return Err(AnnotateError::Validation(format!("roster entry {i} has an empty id or token")));
            }
            if m.id == SYSTEM_ACTOR {
                return Err(AnnotateError::Validation(format!("`{SYSTEM_ACTOR}` is reserved")));
            }
            if members[..i].iter().any(|o| o.id == m.id || o.token == m.token) {
                return Err(AnnotateError::Validation(format!("roster entry `{}` is not unique", m.id)));
            }
        }
        Ok(Roster { members })
    }

    pub fn from_json(text: &str) -> Result<Self, AnnotateError> {
        let members: Vec<Member> = serde_json::from_str(text)?;
        Roster::new(members)
    }

    pub fn authenticate(&self, token: &str) -> Option<&str> {
        self.members.iter().find(|m| m.token == token).map(|m| m.id.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m.id == id)
    }
}

/// One line of the append-only event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditLogEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub actor: String,
    pub task_id: String,
    pub action: String,
    pub before_version: u64,
    pub after_version: u64,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Queue {
    /// Tasks the caller is assigned to review.
    #[default]
    Review,
    /// Disputed tasks the caller could arbitrate.
    Arbitration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDraft {
    pub chosen: String,
    pub rejected: String,
    pub tag: Option<String>,
}

struct Inner {
    tasks: BTreeMap<String, ReviewTask>,
    log: Vec<AuditLogEntry>,
    sink: Option<File>,
}

/// Task state plus the event log it is derived from.
///
/// Every write goes through one mutex: the version check, the log append and
/// the in-memory update happen together, so of several writers holding the
/// same version exactly one wins.
pub struct Store {
    inner: Mutex<Inner>,
    roster: Roster,
    dispute_threshold: u8,
}

/// Rebuilds task state from log entries, re-checking every transition.
pub fn replay(entries: &[AuditLogEntry], dispute_threshold: u8) -> Result<BTreeMap<String, ReviewTask>, AnnotateError> {
    let mut tasks = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        let bad = |reason: String| AnnotateError::Replay { seq: e.seq, reason };
        if e.seq != i as u64 + 1 {
            return Err(bad(format!("expected sequence number {}", i + 1)));
        }
        apply_entry(&mut tasks, e, dispute_threshold).map_err(|err| bad(err.to_string()))?;
    }
    Ok(tasks)
}

fn apply_entry(
    tasks: &mut BTreeMap<String, ReviewTask>,
    e: &AuditLogEntry,
    dispute_threshold: u8,
) -> Result<(), AnnotateError> {
    let current = tasks.get(&e.task_id).map_or(0, |t| t.version);
    if current != e.before_version {
        return Err(AnnotateError::VersionConflict { current_version: current });
    }
    let updated = match &e.event {
        Event::Created { task } => {
            if current != 0 {
                return Err(AnnotateError::Conflict(format!("task `{}` already exists", e.task_id)));
            }
            if task.id != e.task_id {
                return Err(AnnotateError::Validation("entry and task ids differ".into()));
            }
            ReviewTask::from_seed(task.clone())?
        }
        other => {
            let mut t = tasks[&e.task_id].clone();
            t.apply(&e.actor, other, dispute_threshold)?;
            t
        }
    };
    if updated.version != e.after_version {
        return Err(AnnotateError::Validation(format!(
            "entry claims version {} but replay yields {}",
            e.after_version, updated.version
        )));
    }
    tasks.insert(e.task_id.clone(), updated);
    Ok(())
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Store {
    pub fn in_memory(roster: Roster) -> Self {
        Store {
            inner: Mutex::new(Inner { tasks: BTreeMap::new(), log: Vec::new(), sink: None }),
            roster,
            dispute_threshold: DEFAULT_DISPUTE_THRESHOLD,
        }
    }

    pub fn with_dispute_threshold(mut self, threshold: u8) -> Self {
        self.dispute_threshold = threshold;
        self
    }

    /// Opens (or creates) a log file, replays it and appends to it from then on.
    pub fn open(path: &Path, roster: Roster, dispute_threshold: u8) -> Result<Self, AnnotateError> {
        let mut log = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: AuditLogEntry = serde_json::from_str(&line).map_err(|e| AnnotateError::Replay {
                    seq: n as u64 + 1,
                    reason: e.to_string(),
                })?;
                log.push(entry);
            }
        }
        let tasks = replay(&log, dispute_threshold)?;
        let sink = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Store {
            inner: Mutex::new(Inner { tasks, log, sink: Some(sink) }),
            roster,
            dispute_threshold,
        })
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn dispute_threshold(&self) -> u8 {
        self.dispute_threshold
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // A panic while holding the lock cannot leave a half-applied write:
        // state is only replaced after the log line is durable.
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn commit(
        &self,
        actor: &str,
        task_id: &str,
        expected_version: Option<u64>,
        event: Event,
    ) -> Result<ReviewTask, AnnotateError> {
        let mut inner = self.lock();
        let current = inner.tasks.get(task_id).map(|t| t.version);
        if !matches!(event, Event::Created { .. }) {
            let current = current.ok_or_else(|| AnnotateError::NotFound(format!("no task `{task_id}`")))?;
            if expected_version.is_some_and(|v| v != current) {
                return Err(AnnotateError::VersionConflict { current_version: current });
            }
        }
        let entry = AuditLogEntry {
            seq: inner.log.len() as u64 + 1,
            timestamp_ms: now_ms(),
            actor: actor.to_string(),
            task_id: task_id.to_string(),
            action: event.action().to_string(),
            before_version: current.unwrap_or(0),
            after_version: current.unwrap_or(0) + 1,
            event,
        };
        let mut staged = BTreeMap::new();
        if let Some(t) = inner.tasks.get(task_id) {
            staged.insert(task_id.to_string(), t.clone());
        }
        apply_entry(&mut staged, &entry, self.dispute_threshold)?;
        if let Some(sink) = inner.sink.as_mut() {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            sink.write_all(line.as_bytes())?;
            sink.flush()?;
        }
        let task = staged.remove(task_id).expect("staged task");
        inner.tasks.insert(task_id.to_string(), task.clone());
        inner.log.push(entry);
        Ok(task)
    }

    pub fn create_task(&self, seed: TaskSeed) -> Result<ReviewTask, AnnotateError> {
        for r in &seed.reviewers {
            if !self.roster.contains(r) {
                return Err(AnnotateError::Validation(format!("reviewer `{r}` is not on the roster")));
            }
        }
        let id = seed.id.clone();
        self.commit(SYSTEM_ACTOR, &id, None, Event::Created { task: seed })
    }

    /// Creates every seed whose id is not present yet; returns how many were new.
    pub fn ensure_tasks(&self, seeds: Vec<TaskSeed>) -> Result<usize, AnnotateError> {
        let mut created = 0;
        for seed in seeds {
            if self.lock().tasks.contains_key(&seed.id) {
                continue;
            }
            self.create_task(seed)?;
            created += 1;
        }
        Ok(created)
    }

    fn member(&self, actor: &str) -> Result<(), AnnotateError> {
        if self.roster.contains(actor) {
            Ok(())
        } else {
            Err(AnnotateError::Forbidden(format!("unknown reviewer `{actor}`")))
        }
    }

    pub fn list_tasks(
        &self,
        actor: &str,
        status: Option<TaskStatus>,
        queue: Queue,
    ) -> Result<Vec<ReviewTask>, AnnotateError> {
        self.member(actor)?;
        let inner = self.lock();
        Ok(inner
            .tasks
            .values()
            .filter(|t| status.is_none_or(|s| t.status == s))
            .filter(|t| match queue {
                Queue::Review => t.is_reviewer(actor),
                Queue::Arbitration => t.status == TaskStatus::Disputed && !t.is_reviewer(actor),
            })
            .cloned()
            .collect())
    }

    pub fn get_task(&self, actor: &str, id: &str) -> Result<ReviewTask, AnnotateError> {
        self.member(actor)?;
        self.lock().tasks.get(id).cloned().ok_or_else(|| AnnotateError::NotFound(format!("no task `{id}`")))
    }

    pub fn submit_scores(&self, actor: &str, id: &str, version: u64, scores: ScoreCard) -> Result<ReviewTask, AnnotateError> {
        self.member(actor)?;
        self.commit(actor, id, Some(version), Event::Scored { scores })
    }

    pub fn arbitrate(&self, actor: &str, id: &str, version: u64, scores: ScoreCard) -> Result<ReviewTask, AnnotateError> {
        self.member(actor)?;
        self.commit(actor, id, Some(version), Event::Arbitrated { scores })
    }

    pub fn submit_pair(&self, actor: &str, id: &str, version: u64, draft: PairDraft) -> Result<ReviewTask, AnnotateError> {
        self.member(actor)?;
        let tag = match draft.tag.as_deref().map(str::trim) {
            None | Some("") => return Err(AnnotateError::Validation("the rejected output needs a degradation tag".into())),
            Some(s) => s.parse::<DegradationTag>().map_err(|e| AnnotateError::Validation(e.to_string()))?,
        };
        self.commit(actor, id, Some(version), Event::PairStored { chosen: draft.chosen, rejected: draft.rejected, tag })
    }

    /// DPO JSONL over finalized tasks, optionally restricted to one family.
    pub fn export_dpo(&self, family: Option<VulnFamily>) -> Result<String, AnnotateError> {
        let records: Vec<_> = self
            .lock()
            .tasks
            .values()
            .filter(|t| family.is_none_or(|f| t.family == f))
            .filter_map(ReviewTask::dpo_record)
            .collect();
        Ok(build_dpo(&records)?)
    }

    pub fn tasks(&self) -> BTreeMap<String, ReviewTask> {
        self.lock().tasks.clone()
    }

    pub fn log(&self) -> Vec<AuditLogEntry> {
        self.lock().log.clone()
    }
}

/// Parses a task seed file, one JSON object per line.
pub fn parse_seeds(text: &str) -> Result<Vec<TaskSeed>, AnnotateError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| AnnotateError::Validation(format!("seed line {}: {e}", n + 1)))
        })
        .collect()
}
