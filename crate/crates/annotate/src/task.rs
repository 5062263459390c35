use std::collections::BTreeMap;
use std::fmt;

use prefaudit_core::datasets::{dpo_prompt, DegradationTag, DpoRecord, ScoreCard};
use prefaudit_core::VulnFamily;
use serde::{Deserialize, Serialize};

use crate::AnnotateError;

/// Largest per-dimension gap two reviewers may have before a task is disputed.
pub const DEFAULT_DISPUTE_THRESHOLD: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Scored,
    Disputed,
    Arbitrated,
    Finalized,
}

impl TaskStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Pending => "pending",
            TaskStatus::Scored => "scored",
            TaskStatus::Disputed => "disputed",
            TaskStatus::Arbitrated => "arbitrated",
            TaskStatus::Finalized => "finalized",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One generated explanation shown to the reviewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub generator: String,
    pub explanation: String,
    /// Automatic pre-score, if the generator stage produced one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreCard>,
}

/// What a task looks like before anyone has touched it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSeed {
    pub id: String,
    pub contract: String,
    pub family: VulnFamily,
    pub candidates: Vec<Candidate>,
    pub reviewers: [String; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredPair {
    pub chosen: String,
    pub rejected: String,
    pub tag: DegradationTag,
    pub author: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub id: String,
    pub contract: String,
    pub family: VulnFamily,
    pub candidates: Vec<Candidate>,
    pub reviewers: [String; 2],
    pub status: TaskStatus,
    pub version: u64,
    /// Latest card per reviewer id.
    pub scores: BTreeMap<String, ScoreCard>,
    pub arbitrator: Option<String>,
    /// Agreed scores: the rounded reviewer mean, or the arbitrated card.
    pub final_scores: Option<ScoreCard>,
    pub pair: Option<StoredPair>,
}

/// A state transition, exactly as it is written to the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Created { task: TaskSeed },
    Scored { scores: ScoreCard },
    Arbitrated { scores: ScoreCard },
    PairStored { chosen: String, rejected: String, tag: DegradationTag },
}

impl Event {
    pub fn action(&self) -> &'static str {
        match self {
            Event::Created { .. } => "create",
            Event::Scored { .. } => "score",
            Event::Arbitrated { .. } => "arbitrate",
            Event::PairStored { .. } => "pair",
        }
    }
}

impl ReviewTask {
    pub fn from_seed(seed: TaskSeed) -> Result<Self, AnnotateError> {
        if seed.id.trim().is_empty() {
            return Err(AnnotateError::Validation("task id is empty".into()));
        }
        if seed.contract.trim().is_empty() {
            return Err(AnnotateError::Validation(format!("task `{}` has no contract", seed.id)));
        }
        if seed.candidates.is_empty() {
            return Err(AnnotateError::Validation(format!("task `{}` has no candidates", seed.id)));
        }
        if seed.reviewers[0] == seed.reviewers[1] {
            return Err(AnnotateError::Validation(format!(
                "task `{}` needs two distinct reviewers",
                seed.id
            )));
        }
        Ok(ReviewTask {
            id: seed.id,
            contract: seed.contract,
            family: seed.family,
            candidates: seed.candidates,
            reviewers: seed.reviewers,
            status: TaskStatus::Pending,
            version: 1,
            scores: BTreeMap::new(),
            arbitrator: None,
            final_scores: None,
            pair: None,
        })
    }

    pub fn is_reviewer(&self, who: &str) -> bool {
        self.reviewers.iter().any(|r| r == who)
    }

    /// Checks whether `actor` may apply `event` and, if so, applies it.
    ///
    /// Live requests and log replay both go through here, so a replayed log
    /// reproduces the stored state by construction.
    pub fn apply(&mut self, actor: &str, event: &Event, dispute_threshold: u8) -> Result<(), AnnotateError> {
        match event {
            Event::Created { .. } => {
                return Err(AnnotateError::Conflict(format!("task `{}` already exists", self.id)));
            }
            Event::Scored { scores } => {
                if !self.is_reviewer(actor) {
                    return Err(AnnotateError::Forbidden(format!(
                        "`{actor}` is not a reviewer of task `{}`",
                        self.id
                    )));
                }
                self.require(&[TaskStatus::Pending, TaskStatus::Scored], "score")?;
                self.scores.insert(actor.to_string(), *scores);
                let both: Vec<&ScoreCard> = self.reviewers.iter().filter_map(|r| self.scores.get(r)).collect();
                if let [a, b] = both[..] {
                    if a.max_gap(b) > dispute_threshold {
                        self.status = TaskStatus::Disputed;
                        self.final_scores = None;
                    } else {
                        self.status = TaskStatus::Scored;
                        self.final_scores = Some(mean_card(a, b));
                    }
                }
            }
            Event::Arbitrated { scores } => {
                if self.is_reviewer(actor) {
                    return Err(AnnotateError::Forbidden(format!(
                        "arbitrator `{actor}` is a reviewer of task `{}`",
                        self.id
                    )));
                }
                self.require(&[TaskStatus::Disputed], "arbitrate")?;
                self.arbitrator = Some(actor.to_string());
                self.final_scores = Some(*scores);
                self.status = TaskStatus::Arbitrated;
            }
            Event::PairStored { chosen, rejected, tag } => {
                if !self.is_reviewer(actor) && self.arbitrator.as_deref() != Some(actor) {
                    return Err(AnnotateError::Forbidden(format!(
                        "`{actor}` may not author the pair for task `{}`",
                        self.id
                    )));
                }
                self.require(&[TaskStatus::Scored, TaskStatus::Arbitrated], "submit a pair for")?;
                if tag.family() != self.family {
                    return Err(AnnotateError::Validation(format!(
                        "tag `{tag}` belongs to {} but the task is {}",
                        tag.family(),
                        self.family
                    )));
                }
                let record = DpoRecord {
                    id: self.id.clone(),
                    prompt: dpo_prompt(&self.contract, self.family),
                    chosen: chosen.clone(),
                    rejected: rejected.clone(),
                    tag: Some(*tag),
                };
                record.validate().map_err(|e| AnnotateError::Validation(e.to_string()))?;
                self.pair = Some(StoredPair {
                    chosen: chosen.clone(),
                    rejected: rejected.clone(),
                    tag: *tag,
                    author: actor.to_string(),
                });
                self.status = TaskStatus::Finalized;
            }
        }
        self.version += 1;
        Ok(())
    }

    fn require(&self, allowed: &[TaskStatus], action: &str) -> Result<(), AnnotateError> {
        if allowed.contains(&self.status) {
            Ok(())
        } else {
            Err(AnnotateError::InvalidState {
                message: format!("cannot {action} task `{}` while it is {}", self.id, self.status),
                current_version: self.version,
            })
        }
    }

    /// The exported preference record, once the task is finalized.
    pub fn dpo_record(&self) -> Option<DpoRecord> {
        let pair = self.pair.as_ref().filter(|_| self.status == TaskStatus::Finalized)?;
        Some(DpoRecord {
            id: self.id.clone(),
            prompt: dpo_prompt(&self.contract, self.family),
            chosen: pair.chosen.clone(),
            rejected: pair.rejected.clone(),
            tag: Some(pair.tag),
        })
    }
}

/// Per-dimension mean of two cards, halves rounded up.
fn mean_card(a: &ScoreCard, b: &ScoreCard) -> ScoreCard {
    let m = |x: u8, y: u8| (i64::from(x) + i64::from(y) + 1) / 2;
    ScoreCard::new(
        m(a.correctness, b.correctness),
        m(a.thoroughness, b.thoroughness),
        m(a.clarity, b.clarity),
    )
    .expect("mean of in-range scores is in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> ReviewTask {
        ReviewTask::from_seed(TaskSeed {
            id: "t1".into(),
            contract: "contract C { function f() public {} }".into(),
            family: VulnFamily::RE,
            candidates: vec![Candidate { generator: "g".into(), explanation: "e".into(), score: None }],
            reviewers: ["ana".into(), "ben".into()],
        })
        .unwrap()
    }

    fn card(c: i64, t: i64, l: i64) -> ScoreCard {
        ScoreCard::new(c, t, l).unwrap()
    }

    #[test]
    fn agreement_scores_and_gap_disputes() {
        let mut t = task();
        t.apply("ana", &Event::Scored { scores: card(8, 7, 9) }, 3).unwrap();
        assert_eq!(t.status, TaskStatus::Pending);
        t.apply("ben", &Event::Scored { scores: card(6, 7, 10) }, 3).unwrap();
        assert_eq!(t.status, TaskStatus::Scored);
        assert_eq!(t.final_scores, Some(card(7, 7, 10)));
        assert_eq!(t.version, 3);

        let mut t = task();
        t.apply("ana", &Event::Scored { scores: card(9, 7, 7) }, 3).unwrap();
        t.apply("ben", &Event::Scored { scores: card(4, 7, 7) }, 3).unwrap();
        assert_eq!(t.status, TaskStatus::Disputed);
    }

    #[test]
    fn gap_of_exactly_the_threshold_is_agreement() {
        let mut t = task();
        t.apply("ana", &Event::Scored { scores: card(8, 5, 5) }, 3).unwrap();
        t.apply("ben", &Event::Scored { scores: card(5, 5, 5) }, 3).unwrap();
        assert_eq!(t.status, TaskStatus::Scored);
    }

    #[test]
    fn failed_transition_leaves_task_untouched() {
        let mut t = task();
        let before = t.clone();
        assert!(matches!(
            t.apply("cy", &Event::Scored { scores: card(5, 5, 5) }, 3),
            Err(AnnotateError::Forbidden(_))
        ));
        assert!(matches!(
            t.apply("cy", &Event::Arbitrated { scores: card(5, 5, 5) }, 3),
            Err(AnnotateError::InvalidState { .. })
        ));
        assert_eq!(t, before);
    }

    #[test]
    fn pair_tag_must_match_family() {
        let mut t = task();
        t.apply("ana", &Event::Scored { scores: card(8, 8, 8) }, 3).unwrap();
        t.apply("ben", &Event::Scored { scores: card(8, 8, 8) }, 3).unwrap();
        let wrong = Event::PairStored {
            chosen: "a".into(),
            rejected: "b".into(),
            tag: DegradationTag::TdDirectTimestampOnly,
        };
        assert!(matches!(t.apply("ana", &wrong, 3), Err(AnnotateError::Validation(_))));
        let ok = Event::PairStored {
            chosen: "a".into(),
            rejected: "b".into(),
            tag: DegradationTag::ReObviousExternalCallsOnly,
        };
        t.apply("ana", &ok, 3).unwrap();
        assert_eq!(t.status, TaskStatus::Finalized);
        assert_eq!(t.dpo_record().unwrap().tag, Some(DegradationTag::ReObviousExternalCallsOnly));
    }
}
