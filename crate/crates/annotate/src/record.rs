//! Annotation records and the review state machine.
//!
//! A record moves through generation and review until it is either approved
//! or escalated to an expert after three rejected candidates. Every change is
//! a [`Mutation`]; the record keeps the full list so its state can be rebuilt
//! from scratch.

use serde::{Deserialize, Serialize};

use medthink::data::{ImageRef, VqaSample};

use crate::error::{Error, Result};

/// Candidates a generator may produce before a human takes over.
pub const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    PendingGeneration,
    PendingReview,
    Approved,
    Regenerate,
    ExpertEscalated,
    ExpertWritten,
}

impl State {
    pub const ALL: [State; 6] = [
        State::PendingGeneration,
        State::PendingReview,
        State::Approved,
        State::Regenerate,
        State::ExpertEscalated,
        State::ExpertWritten,
    ];

    /// Terminal states are the ones eligible for export.
    pub fn is_terminal(self) -> bool {
        matches!(self, State::Approved | State::ExpertWritten)
    }

    pub fn name(self) -> &'static str {
        match self {
            State::PendingGeneration => "pending_generation",
            State::PendingReview => "pending_review",
            State::Approved => "approved",
            State::Regenerate => "regenerate",
            State::ExpertEscalated => "expert_escalated",
            State::ExpertWritten => "expert_written",
        }
    }
}

impl std::str::FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        State::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::contract(format!("unknown state {s:?}")))
    }
}

impl std::fmt::Display for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Pass,
    Fail,
}

impl Check {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Check::Pass
        } else {
            Check::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Check::Pass
    }
}

/// One expert judgement of a candidate rationale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    /// The rationale reads as a coherent argument.
    pub coherence: Check,
    /// It addresses the question that was asked.
    pub relevance: Check,
    /// It contains no factual or medical errors.
    pub accuracy: Check,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub reviewer: String,
    /// Seconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: u64,
}

impl ReviewVerdict {
    pub fn new(coherence: bool, relevance: bool, accuracy: bool) -> Self {
        Self {
            coherence: Check::from_bool(coherence),
            relevance: Check::from_bool(relevance),
            accuracy: Check::from_bool(accuracy),
            note: String::new(),
            reviewer: String::new(),
            timestamp: 0,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.coherence.passed() && self.relevance.passed() && self.accuracy.passed()
    }
}

/// A single recorded change to a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mutation {
    Generated {
        rationale: String,
        generator_id: String,
        prompt_template_id: String,
        latency_ms: u64,
        timestamp: u64,
    },
    GenerationFailed {
        error: String,
        timestamp: u64,
    },
    Reviewed {
        verdict: ReviewVerdict,
    },
    ExpertWritten {
        rationale: String,
        reviewer: String,
        timestamp: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub image: ImageRef,
    pub question: String,
    pub answer: String,
    pub candidate_rationale: Option<String>,
    pub attempts: u32,
    pub state: State,
    pub verdicts: Vec<ReviewVerdict>,
    pub version: u64,
    /// Generator that produced the current candidate.
    pub generator_id: Option<String>,
    /// Set by a failed generation call, cleared by the next successful change.
    pub last_error: Option<String>,
    pub history: Vec<Mutation>,
}

impl AnnotationRecord {
    pub fn new(sample: &VqaSample) -> Self {
        Self {
            sample_id: sample.id.clone(),
            image: sample.image.clone(),
            question: sample.question.clone(),
            answer: sample.answer.clone(),
            candidate_rationale: None,
            attempts: 0,
            state: State::PendingGeneration,
            verdicts: Vec::new(),
            version: 0,
            generator_id: None,
            last_error: None,
            history: Vec::new(),
        }
    }

    /// The record as it was before any mutation.
    pub fn initial(&self) -> Self {
        Self {
            candidate_rationale: None,
            attempts: 0,
            state: State::PendingGeneration,
            verdicts: Vec::new(),
            version: 0,
            generator_id: None,
            last_error: None,
            history: Vec::new(),
            ..self.clone()
        }
    }

    pub fn check_version(&self, expected: u64) -> Result<()> {
        if expected != self.version {
            return Err(Error::Conflict {
                id: self.sample_id.clone(),
                expected,
                actual: self.version,
            });
        }
        Ok(())
    }

    /// Checks that `m` is legal in the current state without applying it.
    pub fn admits(&self, m: &Mutation) -> Result<()> {
        let id = &self.sample_id;
        match m {
            Mutation::Generated { rationale, .. } => {
                self.check_can_generate()?;
                if rationale.trim().is_empty() {
                    return Err(Error::contract(format!("{id}: generated rationale is empty")));
                }
            }
            Mutation::GenerationFailed { .. } => self.check_can_generate()?,
            Mutation::Reviewed { .. } => {
                if self.state != State::PendingReview {
                    return Err(Error::contract(format!("{id}: review requires pending_review, record is {}", self.state)));
                }
            }
            Mutation::ExpertWritten { rationale, .. } => {
                if self.state != State::ExpertEscalated {
                    return Err(Error::contract(format!(
                        "{id}: expert rationale requires expert_escalated, record is {}",
                        self.state
                    )));
                }
                if rationale.trim().is_empty() {
                    return Err(Error::contract(format!("{id}: expert rationale is empty")));
                }
            }
        }
        Ok(())
    }

    fn check_can_generate(&self) -> Result<()> {
        let id = &self.sample_id;
        if !matches!(self.state, State::PendingGeneration | State::Regenerate) {
            return Err(Error::contract(format!("{id}: generation requires pending_generation or regenerate, record is {}", self.state)));
        }
        if self.attempts >= MAX_ATTEMPTS {
            return Err(Error::contract(format!("{id}: {MAX_ATTEMPTS} attempts used, escalate instead")));
        }
        Ok(())
    }

    /// Applies `m` and bumps the version by one.
    pub fn apply(&mut self, m: Mutation) -> Result<()> {
        self.admits(&m)?;
        match &m {
            Mutation::Generated { rationale, generator_id, .. } => {
                self.candidate_rationale = Some(rationale.clone());
                self.generator_id = Some(generator_id.clone());
                self.attempts += 1;
                self.state = State::PendingReview;
                self.last_error = None;
            }
            Mutation::GenerationFailed { error, .. } => {
                self.last_error = Some(error.clone());
            }
            Mutation::Reviewed { verdict } => {
                self.state = if verdict.all_pass() {
                    State::Approved
                } else if self.attempts < MAX_ATTEMPTS {
                    State::Regenerate
                } else {
                    State::ExpertEscalated
                };
                self.verdicts.push(verdict.clone());
                self.last_error = None;
            }
            Mutation::ExpertWritten { rationale, .. } => {
                self.candidate_rationale = Some(rationale.clone());
                self.state = State::ExpertWritten;
                self.last_error = None;
            }
        }
        self.version += 1;
        self.history.push(m);
        Ok(())
    }

    /// Applies `m` to a copy after checking the caller's version.
    pub fn mutated(&self, expected_version: u64, m: Mutation) -> Result<Self> {
        self.check_version(expected_version)?;
        let mut next = self.clone();
        next.apply(m)?;
        Ok(next)
    }

    /// Rebuilds the record from its initial form and history.
    pub fn replay(&self) -> Result<Self> {
        let mut r = self.initial();
        for m in &self.history {
            r.apply(m.clone())?;
        }
        Ok(r)
    }
}

/// Records a reviewer's verdict: all three criteria passing approves the
/// candidate, anything else asks for another one until the attempts run out.
pub fn review_transition(record: &AnnotationRecord, version: u64, verdict: ReviewVerdict) -> Result<AnnotationRecord> {
    record.mutated(version, Mutation::Reviewed { verdict })
}

pub fn submit_expert_rationale(
    record: &AnnotationRecord,
    version: u64,
    text: &str,
    reviewer: &str,
    timestamp: u64,
) -> Result<AnnotationRecord> {
    record.mutated(
        version,
        Mutation::ExpertWritten {
            rationale: text.to_string(),
            reviewer: reviewer.to_string(),
            timestamp,
        },
    )
}

pub fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
