use std::collections::HashMap;

use thiserror::Error;

use super::frame::{Frame, FrameType, FLAG_LAST, MAX_PAYLOAD};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FragmentError {
    #[error("missing fragment: {0}")]
    MissingFragment(String),
    #[error("duplicate sequence number {0}")]
    DuplicateSeq(u16),
    #[error("non-data frame in fragment set")]
    UnexpectedFrame,
}

/// Splits an element into DATA frames numbered from `base_seq` (wrapping).
/// An empty input still yields one flagged, empty frame.
pub fn fragment_from(bytes: &[u8], session_id: u16, base_seq: u16) -> Vec<Frame> {
    let mut frames: Vec<Frame> = bytes
        .chunks(MAX_PAYLOAD)
        .enumerate()
        .map(|(i, c)| Frame::new(FrameType::Data, session_id, base_seq.wrapping_add(i as u16), c.to_vec()))
        .collect();
    if frames.is_empty() {
        frames.push(Frame::new(FrameType::Data, session_id, base_seq, Vec::new()));
    }
    if let Some(last) = frames.last_mut() {
        last.flags |= FLAG_LAST;
    }
    frames
}

pub fn fragment(bytes: &[u8], session_id: u16) -> Vec<Frame> {
    fragment_from(bytes, session_id, 0)
}

/// Reassembles the fragments of one element, in any order.
///
/// The run starts at the only sequence number whose predecessor is absent and
/// must end, with no gaps, at the single frame flagged last.
pub fn reassemble(frames: &[Frame]) -> Result<Vec<u8>, FragmentError> {
    let mut by_seq: HashMap<u16, &Frame> = HashMap::with_capacity(frames.len());
    for f in frames {
        if f.ftype != FrameType::Data {
            return Err(FragmentError::UnexpectedFrame);
        }
        if by_seq.insert(f.seq, f).is_some() {
            return Err(FragmentError::DuplicateSeq(f.seq));
        }
    }
    if frames.is_empty() {
        return Err(FragmentError::MissingFragment("no frames".into()));
    }
    let starts: Vec<u16> = by_seq.keys().copied().filter(|s| !by_seq.contains_key(&s.wrapping_sub(1))).collect();
    let base = match starts.as_slice() {
        [b] => *b,
        [] => return Err(FragmentError::MissingFragment("sequence wraps with no start".into())),
        _ => return Err(FragmentError::MissingFragment("gap in sequence numbers".into())),
    };
    let mut out = Vec::new();
    for i in 0..frames.len() {
        let seq = base.wrapping_add(i as u16);
        let f = by_seq
            .get(&seq)
            .ok_or_else(|| FragmentError::MissingFragment(format!("seq {seq}")))?;
        out.extend_from_slice(&f.payload);
        let at_end = i + 1 == frames.len();
        if f.is_last() != at_end {
            return Err(FragmentError::MissingFragment(if at_end {
                "final fragment not flagged".into()
            } else {
                format!("seq {seq} flagged last before the end")
            }));
        }
    }
    Ok(out)
}
