//! Wire frame layout, little-endian:
//!
//! ```text
//! 0..4    magic "SCM1"
//! 4       version (1)
//! 5       frame type
//! 6..8    session id
//! 8..10   sequence number
//! 10      flags (bit 0: last fragment)
//! 11..13  payload length (<= 1024)
//! 13..    payload
//! end-4.. CRC-32 (IEEE, reflected 0xEDB88320) over every preceding byte
//! ```

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SCM1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 13;
pub const CRC_LEN: usize = 4;
/// Bytes a frame adds on top of its payload.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + CRC_LEN;
pub const MAX_PAYLOAD: usize = 1024;
pub const FLAG_LAST: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("CRC mismatch")]
    CrcMismatch,
    #[error("truncated frame")]
    Truncated,
    #[error("{0} bytes after the frame end")]
    TrailingBytes(usize),
    #[error("payload of {0} bytes exceeds 1024")]
    PayloadTooLarge(usize),
    #[error("unknown frame type {0:#04x}")]
    BadFrameType(u8),
    #[error("malformed feedback payload")]
    BadFeedback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Data = 0x01,
    Request = 0x02,
    Complete = 0x03,
    Ack = 0x04,
    Nak = 0x05,
}

impl FrameType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0x01 => FrameType::Data,
            0x02 => FrameType::Request,
            0x03 => FrameType::Complete,
            0x04 => FrameType::Ack,
            0x05 => FrameType::Nak,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            FrameType::Data => "DATA",
            FrameType::Request => "REQUEST",
            FrameType::Complete => "COMPLETE",
            FrameType::Ack => "ACK",
            FrameType::Nak => "NAK",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub ftype: FrameType,
    pub session_id: u16,
    pub seq: u16,
    pub flags: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(ftype: FrameType, session_id: u16, seq: u16, payload: Vec<u8>) -> Self {
        Self { ftype, session_id, seq, flags: 0, payload }
    }

    pub fn is_last(&self) -> bool {
        self.flags & FLAG_LAST != 0
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }
}

/// CRC-32 (IEEE, reflected) used for the frame trailer.
pub fn frame_crc(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

pub fn frame_encode(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    if frame.payload.len() > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(frame.payload.len()));
    }
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(frame.ftype as u8);
    out.extend_from_slice(&frame.session_id.to_le_bytes());
    out.extend_from_slice(&frame.seq.to_le_bytes());
    out.push(frame.flags);
    out.extend_from_slice(&(frame.payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    let crc = frame_crc(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn frame_decode(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < FRAME_OVERHEAD {
        return Err(FrameError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(FrameError::BadMagic);
    }
    if bytes[4] != VERSION {
        return Err(FrameError::BadVersion(bytes[4]));
    }
    let len = u16::from_le_bytes([bytes[11], bytes[12]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::PayloadTooLarge(len));
    }
    let total = FRAME_OVERHEAD + len;
    if bytes.len() < total {
        return Err(FrameError::Truncated);
    }
    if bytes.len() > total {
        return Err(FrameError::TrailingBytes(bytes.len() - total));
    }
    let body = &bytes[..HEADER_LEN + len];
    let crc = u32::from_le_bytes(bytes[HEADER_LEN + len..total].try_into().expect("4 bytes"));
    if frame_crc(body) != crc {
        return Err(FrameError::CrcMismatch);
    }
    let ftype = FrameType::from_u8(bytes[5]).ok_or(FrameError::BadFrameType(bytes[5]))?;
    Ok(Frame {
        ftype,
        session_id: u16::from_le_bytes([bytes[6], bytes[7]]),
        seq: u16::from_le_bytes([bytes[8], bytes[9]]),
        flags: bytes[10],
        payload: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
    })
}
