use serde::{Deserialize, Serialize};

use super::frame::{Frame, FrameError, FrameType};
use crate::semantics::ElementKind;

/// Receiver-to-transmitter control message.
///
/// REQUEST payload: requested kind tag (1 B), category count (1 B), category
/// ids. COMPLETE has an empty payload.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FeedbackMessage {
    Request { kind: ElementKind, categories: Vec<u8> },
    Complete,
}

impl FeedbackMessage {
    pub fn frame_type(&self) -> FrameType {
        match self {
            FeedbackMessage::Request { .. } => FrameType::Request,
            FeedbackMessage::Complete => FrameType::Complete,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        match self {
            FeedbackMessage::Request { kind, categories } => {
                let n = categories.len().min(u8::MAX as usize);
                let mut p = vec![kind.tag(), n as u8];
                p.extend_from_slice(&categories[..n]);
                p
            }
            FeedbackMessage::Complete => Vec::new(),
        }
    }

    pub fn to_frame(&self, session_id: u16, seq: u16) -> Frame {
        Frame::new(self.frame_type(), session_id, seq, self.payload())
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, FrameError> {
        match frame.ftype {
            FrameType::Complete if frame.payload.is_empty() => Ok(FeedbackMessage::Complete),
            FrameType::Request => {
                let p = &frame.payload;
                let kind = p.first().and_then(|&t| ElementKind::from_tag(t)).ok_or(FrameError::BadFeedback)?;
                let n = *p.get(1).ok_or(FrameError::BadFeedback)? as usize;
                if p.len() != 2 + n {
                    return Err(FrameError::BadFeedback);
                }
                Ok(FeedbackMessage::Request { kind, categories: p[2..].to_vec() })
            }
            _ => Err(FrameError::BadFeedback),
        }
    }

    /// True when every requested category id is below `vocab_len`.
    pub fn categories_valid(&self, vocab_len: usize) -> bool {
        match self {
            FeedbackMessage::Request { categories, .. } => categories.iter().all(|&c| (c as usize) < vocab_len),
            FeedbackMessage::Complete => true,
        }
    }
}
