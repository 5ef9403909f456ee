//! Transmitter-side policy controller and the fixed knowledge policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::TaskKind;
use crate::protocol::FeedbackMessage;
use crate::semantics::{ElementKind, SemanticBundle, SemanticElement};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("initial transmission already made")]
    AlreadyStarted,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LadderPreset {
    /// One escalation step matched to the task: text then A-seg or B-seg.
    #[default]
    Table2,
    /// Text, A-seg, B-seg, sub-images for every task.
    Progressive,
}

/// Order in which a session may escalate through element kinds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationLadder(Vec<ElementKind>);

impl EscalationLadder {
    pub fn new(kinds: Vec<ElementKind>) -> Result<Self, PolicyError> {
        if kinds.first() != Some(&ElementKind::Text) {
            return Err(PolicyError::InvalidLadder("must start with text".into()));
        }
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(PolicyError::InvalidLadder(format!("{k} repeated")));
            }
        }
        Ok(Self(kinds))
    }

    pub fn preset(preset: LadderPreset, task: TaskKind) -> Self {
        use ElementKind::*;
        Self(match (preset, task) {
            (LadderPreset::Table2, TaskKind::Caption) => vec![Text],
            (LadderPreset::Table2, TaskKind::Segmentation) => vec![Text, Aseg],
            (LadderPreset::Table2, TaskKind::Reconstruction) => vec![Text, Bseg],
            (LadderPreset::Progressive, _) => vec![Text, Aseg, Bseg, Simg],
        })
    }

    pub fn kinds(&self) -> &[ElementKind] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Kind at ladder position `pos`, or `None` past the end.
    pub fn get(&self, pos: usize) -> Option<ElementKind> {
        self.0.get(pos).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Active,
    Done,
}

/// Per-image transmitter state. The ladder position only moves forward and
/// `Done` is absorbing.
#[derive(Clone, Debug)]
pub struct TransmitterSession<'a> {
    bundle: &'a SemanticBundle,
    ladder: EscalationLadder,
    position: usize,
    filter: Option<Vec<u8>>,
    status: SessionStatus,
}

impl<'a> TransmitterSession<'a> {
    pub fn new(bundle: &'a SemanticBundle, ladder: EscalationLadder) -> Self {
        Self { bundle, ladder, position: 0, filter: None, status: SessionStatus::Active }
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn filter(&self) -> Option<&[u8]> {
        self.filter.as_deref()
    }

    pub fn ladder(&self) -> &EscalationLadder {
        &self.ladder
    }

    /// The caption text, always the first thing sent.
    pub fn initial_transmission(&mut self) -> Result<SemanticElement, PolicyError> {
        if self.status == SessionStatus::Done || self.position != 0 {
            return Err(PolicyError::AlreadyStarted);
        }
        self.position = 1;
        Ok(self.bundle.element(ElementKind::Text))
    }

    pub fn on_feedback(&mut self, feedback: &FeedbackMessage) -> Result<Option<SemanticElement>, PolicyError> {
        if self.status == SessionStatus::Done {
            return Err(PolicyError::ProtocolViolation("session already done".into()));
        }
        if self.position == 0 {
            return Err(PolicyError::ProtocolViolation("feedback before initial transmission".into()));
        }
        match feedback {
            FeedbackMessage::Complete => {
                self.status = SessionStatus::Done;
                Ok(None)
            }
            FeedbackMessage::Request { kind, categories } => {
                let expected = self.ladder.get(self.position);
                if expected != Some(*kind) {
                    return Err(PolicyError::ProtocolViolation(format!(
                        "requested {kind}, next on ladder is {}",
                        expected.map_or("nothing".to_string(), |k| k.to_string())
                    )));
                }
                self.position += 1;
                self.filter = Some(categories.clone());
                Ok(Some(self.bundle.element_filtered(*kind, categories)))
            }
        }
    }
}

/// Element kinds the task-aware, feedback-free scheme sends for `task`.
pub fn knowledge_policy(task: TaskKind) -> Vec<ElementKind> {
    match task {
        TaskKind::Caption => vec![ElementKind::Text],
        TaskKind::Segmentation => vec![ElementKind::Aseg],
        TaskKind::Reconstruction => vec![ElementKind::Text, ElementKind::Bseg],
    }
}

/// Mean multi-rate cost when a task escalates one step with probability
/// `relevance`: `text + relevance * sub`.
pub fn expected_multirate_bytes(text: f64, sub: f64, relevance: f64) -> f64 {
    text + relevance * sub
}

/// True when escalating on demand is cheaper than always sending `sub`,
/// i.e. `relevance < 1 - text / sub`.
pub fn multirate_beats_knowledge(text: f64, sub: f64, relevance: f64) -> bool {
    relevance < 1.0 - text / sub
}
