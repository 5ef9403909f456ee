//! Wire protocol: frames, fragmentation, feedback messages and the
//! stop-and-wait session engine that drives both endpoints over a simulated
//! link.

mod feedback;
mod fragment;
mod frame;
mod session;

pub use feedback::FeedbackMessage;
pub use fragment::{fragment, fragment_from, reassemble, FragmentError};
pub use frame::{
    frame_crc, frame_decode, frame_encode, Frame, FrameError, FrameType, CRC_LEN, FLAG_LAST, FRAME_OVERHEAD, HEADER_LEN, MAGIC,
    MAX_PAYLOAD, VERSION,
};
pub use session::{
    run_fixed_session, run_fixed_session_over, run_session, run_session_over, DecisionRecord, Direction,
    ElementRecord, EventKind, FrameEvent, IdealLink, Link, PayloadKind, PhyLink, ProtocolError, ReceiverContext,
    ReceiverState, SessionLog, SessionParams, DEFAULT_MAX_RETRIES, TIMEOUT_TICKS,
};
