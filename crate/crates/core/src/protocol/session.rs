use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::feedback::FeedbackMessage;
use super::fragment::{fragment_from, reassemble, FragmentError};
use super::frame::{frame_decode, frame_encode, Frame, FrameError, FrameType};
use crate::channel::{transmit, ChannelConfig};
use crate::correlation::{assess_relevance, make_feedback, Gazetteer, RelevanceDecision, TaskDescriptor};
use crate::embeddings::{ClassVocabulary, EmbeddingError, Embeddings};
use crate::policy::{EscalationLadder, PolicyError, SessionStatus, TransmitterSession};
use crate::reconstruct::ReceivedSemantics;
use crate::semantics::{decode_element, encode_element, ElementKind, SemanticElement, SemanticsError};
use crate::Real;

/// Ticks a sender waits for an ACK/NAK before retransmitting.
pub const TIMEOUT_TICKS: u64 = 4;
pub const DEFAULT_MAX_RETRIES: u32 = 8;

/// One direction of transport. `None` means the bytes never arrived.
pub trait Link {
    fn carry(&mut self, bytes: &[u8]) -> Option<Vec<u8>>;
}

impl<F: FnMut(&[u8]) -> Option<Vec<u8>>> Link for F {
    fn carry(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        self(bytes)
    }
}

/// Error-free, lossless link.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdealLink;

impl Link for IdealLink {
    fn carry(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        Some(bytes.to_vec())
    }
}

/// The simulated PHY on its own noise stream.
#[derive(Clone, Debug)]
pub struct PhyLink {
    config: ChannelConfig,
    rng: ChaCha8Rng,
}

impl PhyLink {
    pub fn new(config: ChannelConfig, stream: u64) -> Self {
        Self { rng: config.rng_for_stream(stream), config }
    }
}

impl Link for PhyLink {
    fn carry(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        Some(transmit(bytes, &self.config, &mut self.rng))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    pub channel: ChannelConfig,
    pub max_retries: u32,
    /// Send feedback and ACK/NAK traffic through the channel too. When off,
    /// the receiver-to-transmitter path is error-free.
    pub feedback_over_channel: bool,
}

impl Default for SessionParams {
    fn default() -> Self {
        Self { channel: ChannelConfig::perfect(), max_retries: DEFAULT_MAX_RETRIES, feedback_over_channel: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Transmitter to receiver.
    Forward,
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Sent,
    Delivered,
    Duplicate,
    /// CRC failed; the receiver answers with a NAK.
    Corrupted,
    /// Undecodable for another reason; silently discarded.
    Discarded,
    Lost,
    Acked,
    Naked,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEvent {
    pub tick: u64,
    pub direction: Direction,
    pub ftype: String,
    pub seq: u16,
    pub bytes: usize,
    pub event: EventKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    Element(ElementKind),
    /// A whole image compressed at the given quality (digital schemes).
    Image(u8),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub payload: PayloadKind,
    /// Encoded payload length before framing.
    pub bytes: u64,
    pub frames: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub relevant: bool,
    pub matched_categories: Vec<String>,
    pub best_score: f64,
}

impl<T: Real> From<&RelevanceDecision<T>> for DecisionRecord {
    fn from(d: &RelevanceDecision<T>) -> Self {
        Self { relevant: d.relevant, matched_categories: d.matched_categories.clone(), best_score: d.best_score.as_f64() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: u16,
    pub elements: Vec<ElementRecord>,
    pub feedback: Vec<FeedbackMessage>,
    /// Sum of element payload bytes; independent of channel noise.
    pub semantic_bytes: u64,
    /// Framed DATA bytes, retransmissions included.
    pub wire_bytes: u64,
    /// Framed ACK, NAK, REQUEST and COMPLETE bytes in both directions.
    pub control_wire_bytes: u64,
    pub retransmissions: u32,
    pub ticks: u64,
    pub decision: Option<DecisionRecord>,
    #[serde(skip)]
    pub events: Vec<FrameEvent>,
    /// Element bytes as handed to the link, in order.
    #[serde(skip)]
    pub sent: Vec<Vec<u8>>,
    /// Element bytes as reassembled by the receiver, in order.
    #[serde(skip)]
    pub delivered: Vec<Vec<u8>>,
    #[serde(skip)]
    pub received: ReceivedSemantics,
}

impl SessionLog {
    /// Frame events as JSON lines.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error("session {session_id} aborted: {reason}")]
    SessionAbort { session_id: u16, reason: String, log: Box<SessionLog> },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("protocol violation: {0}")]
    Violation(String),
}

/// Tables shared by transmitter and receiver.
#[derive(Clone, Copy, Debug)]
pub struct ReceiverContext<'a, T> {
    pub table: &'a Embeddings<T>,
    pub vocab: &'a ClassVocabulary,
    pub nouns: &'a Gazetteer,
    pub threshold: T,
}

/// Receiver endpoint: runs correlation on the caption and walks the same
/// ladder as the transmitter to decide what to ask for next.
#[derive(Clone, Debug)]
pub struct ReceiverState<'a, T> {
    ctx: ReceiverContext<'a, T>,
    task: TaskDescriptor,
    ladder: EscalationLadder,
    count: usize,
    decision: Option<RelevanceDecision<T>>,
    received: ReceivedSemantics,
}

impl<'a, T: Real> ReceiverState<'a, T> {
    pub fn new(ctx: ReceiverContext<'a, T>, task: TaskDescriptor, ladder: EscalationLadder, image_id: u32) -> Self {
        Self { ctx, task, ladder, count: 0, decision: None, received: ReceivedSemantics::new(image_id) }
    }

    pub fn decision(&self) -> Option<&RelevanceDecision<T>> {
        self.decision.as_ref()
    }

    pub fn received(&self) -> &ReceivedSemantics {
        &self.received
    }

    /// Absorbs one complete element and returns the feedback to send back.
    pub fn on_element(&mut self, element: SemanticElement) -> Result<FeedbackMessage, ProtocolError> {
        let expected = self.ladder.get(self.count);
        if expected != Some(element.kind()) {
            return Err(ProtocolError::Violation(format!("received {} out of ladder order", element.kind())));
        }
        if let SemanticElement::Text(text) = &element {
            let c = &self.ctx;
            self.decision = Some(assess_relevance(&self.task, text, c.table, c.vocab, c.nouns, c.threshold)?);
        }
        self.received.insert(element);
        self.count += 1;
        let decision = self.decision.as_ref().ok_or_else(|| ProtocolError::Violation("no caption received".into()))?;
        Ok(make_feedback(decision, self.ladder.get(self.count), self.ctx.vocab))
    }
}

struct Engine<'l> {
    sid: u16,
    params: SessionParams,
    fwd: &'l mut dyn Link,
    rev: &'l mut dyn Link,
    tick: u64,
    data_seq: u16,
    fb_seq: u16,
    log: SessionLog,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Route {
    /// DATA: forward, ACK on the reverse path.
    Data,
    /// Feedback: reverse, ACK on the forward path.
    Feedback,
}

impl<'l> Engine<'l> {
    fn event(&mut self, direction: Direction, frame: &Frame, bytes: usize, event: EventKind) {
        self.log.events.push(FrameEvent {
            tick: self.tick,
            direction,
            ftype: frame.ftype.name().to_string(),
            seq: frame.seq,
            bytes,
            event,
        });
    }

    fn carry(&mut self, route: Route, to_receiver: bool, bytes: &[u8]) -> Option<Vec<u8>> {
        let over_channel = route == Route::Data && to_receiver || self.params.feedback_over_channel;
        if !over_channel {
            return Some(bytes.to_vec());
        }
        let forward = (route == Route::Data) == to_receiver;
        if forward {
            self.fwd.carry(bytes)
        } else {
            self.rev.carry(bytes)
        }
    }

    fn abort(&mut self, reason: String) -> ProtocolError {
        self.log.ticks = self.tick;
        ProtocolError::SessionAbort { session_id: self.sid, reason, log: Box::new(std::mem::take(&mut self.log)) }
    }

    /// Stop-and-wait delivery of one frame. Returns the frame as accepted by
    /// the far end.
    fn deliver(&mut self, frame: &Frame, route: Route) -> Result<Frame, ProtocolError> {
        let (out_dir, back_dir) = match route {
            Route::Data => (Direction::Forward, Direction::Reverse),
            Route::Feedback => (Direction::Reverse, Direction::Forward),
        };
        let bytes = frame_encode(frame)?;
        let mut accepted: Option<Frame> = None;
        for attempt in 0..=self.params.max_retries {
            if attempt > 0 {
                self.log.retransmissions += 1;
            }
            let sent_at = self.tick;
            self.tick += 1;
            self.event(out_dir, frame, bytes.len(), EventKind::Sent);
            match route {
                Route::Data => self.log.wire_bytes += bytes.len() as u64,
                Route::Feedback => self.log.control_wire_bytes += bytes.len() as u64,
            }
            let reply = match self.carry(route, true, &bytes) {
                None => {
                    self.event(out_dir, frame, bytes.len(), EventKind::Lost);
                    None
                }
                Some(rx) => match frame_decode(&rx) {
                    Ok(got) if got.session_id == frame.session_id && got.seq == frame.seq && got.ftype == frame.ftype => {
                        let kind = if accepted.is_some() { EventKind::Duplicate } else { EventKind::Delivered };
                        self.event(out_dir, frame, rx.len(), kind);
                        accepted.get_or_insert(got);
                        Some(FrameType::Ack)
                    }
                    Err(FrameError::CrcMismatch) => {
                        self.event(out_dir, frame, rx.len(), EventKind::Corrupted);
                        Some(FrameType::Nak)
                    }
                    _ => {
                        self.event(out_dir, frame, rx.len(), EventKind::Discarded);
                        None
                    }
                },
            };
            if let Some(kind) = reply {
                let ctrl = Frame::new(kind, frame.session_id, frame.seq, Vec::new());
                let cbytes = frame_encode(&ctrl)?;
                self.log.control_wire_bytes += cbytes.len() as u64;
                self.event(back_dir, &ctrl, cbytes.len(), EventKind::Sent);
                let heard = self.carry(route, false, &cbytes).and_then(|b| frame_decode(&b).ok());
                match heard {
                    Some(f) if f.seq == frame.seq && f.session_id == frame.session_id && f.ftype == FrameType::Ack => {
                        self.event(back_dir, &ctrl, cbytes.len(), EventKind::Acked);
                        return accepted.ok_or_else(|| ProtocolError::Violation("ACK without delivery".into()));
                    }
                    Some(f) if f.seq == frame.seq && f.session_id == frame.session_id && f.ftype == FrameType::Nak => {
                        self.event(back_dir, &ctrl, cbytes.len(), EventKind::Naked);
                        continue;
                    }
                    _ => {}
                }
            }
            self.tick = sent_at + TIMEOUT_TICKS;
            self.event(out_dir, frame, bytes.len(), EventKind::Timeout);
        }
        Err(self.abort(format!(
            "{} seq {} undelivered after {} retries",
            frame.ftype.name(),
            frame.seq,
            self.params.max_retries
        )))
    }

    /// Fragments and delivers one payload; returns the reassembled bytes.
    fn send_payload(&mut self, kind: PayloadKind, bytes: Vec<u8>) -> Result<Vec<u8>, ProtocolError> {
        let frames = fragment_from(&bytes, self.sid, self.data_seq);
        self.data_seq = self.data_seq.wrapping_add(frames.len() as u16);
        let mut got = Vec::with_capacity(frames.len());
        for f in &frames {
            got.push(self.deliver(f, Route::Data)?);
        }
        let delivered = reassemble(&got)?;
        self.log.elements.push(ElementRecord { payload: kind, bytes: bytes.len() as u64, frames: frames.len() as u32 });
        self.log.semantic_bytes += bytes.len() as u64;
        self.log.sent.push(bytes);
        self.log.delivered.push(delivered.clone());
        Ok(delivered)
    }

    fn send_feedback(&mut self, msg: &FeedbackMessage) -> Result<FeedbackMessage, ProtocolError> {
        let frame = msg.to_frame(self.sid, self.fb_seq);
        self.fb_seq = self.fb_seq.wrapping_add(1);
        let got = self.deliver(&frame, Route::Feedback)?;
        self.log.feedback.push(msg.clone());
        Ok(FeedbackMessage::from_frame(&got)?)
    }
}

fn ensure_valid(params: &SessionParams) -> Result<(), ProtocolError> {
    if !params.channel.is_valid() {
        return Err(ProtocolError::Violation("channel Eb/N0 must be finite".into()));
    }
    Ok(())
}

/// Adaptive session over the configured PHY. The forward noise stream is
/// `session_id`; the reverse path uses a disjoint stream.
pub fn run_session<T: Real>(
    tx: TransmitterSession<'_>,
    rx: ReceiverState<'_, T>,
    params: &SessionParams,
    session_id: u16,
) -> Result<SessionLog, ProtocolError> {
    let mut fwd = PhyLink::new(params.channel, session_id as u64);
    let mut rev = PhyLink::new(params.channel, (1 << 32) | session_id as u64);
    run_session_over(tx, rx, params, session_id, &mut fwd, &mut rev)
}

/// Adaptive session: the caption goes first, then the receiver's
/// REQUEST/COMPLETE feedback drives the transmitter up its ladder.
pub fn run_session_over<T: Real>(
    mut tx: TransmitterSession<'_>,
    mut rx: ReceiverState<'_, T>,
    params: &SessionParams,
    session_id: u16,
    forward: &mut dyn Link,
    reverse: &mut dyn Link,
) -> Result<SessionLog, ProtocolError> {
    ensure_valid(params)?;
    let mut eng = Engine {
        sid: session_id,
        params: *params,
        fwd: forward,
        rev: reverse,
        tick: 0,
        data_seq: 0,
        fb_seq: 0,
        log: SessionLog { session_id, ..SessionLog::default() },
    };
    let mut next = Some(tx.initial_transmission()?);
    while let Some(element) = next.take() {
        let kind = element.kind();
        let delivered = eng.send_payload(PayloadKind::Element(kind), encode_element(&element)?)?;
        let fb = rx.on_element(decode_element(&delivered)?)?;
        if !fb.categories_valid(rx.ctx.vocab.len()) {
            return Err(ProtocolError::Violation("feedback names a category outside the vocabulary".into()));
        }
        let heard = eng.send_feedback(&fb)?;
        next = tx.on_feedback(&heard)?;
    }
    debug_assert_eq!(tx.status(), SessionStatus::Done);
    eng.log.decision = rx.decision.as_ref().map(DecisionRecord::from);
    eng.log.received = rx.received;
    eng.log.ticks = eng.tick;
    Ok(eng.log)
}

/// Feedback-free session sending `payloads` in order. Element payloads are
/// decoded into `received`; image payloads are only carried.
pub fn run_fixed_session(
    payloads: Vec<(PayloadKind, Vec<u8>)>,
    image_id: u32,
    params: &SessionParams,
    session_id: u16,
) -> Result<SessionLog, ProtocolError> {
    let mut fwd = PhyLink::new(params.channel, session_id as u64);
    let mut rev = PhyLink::new(params.channel, (1 << 32) | session_id as u64);
    run_fixed_session_over(payloads, image_id, params, session_id, &mut fwd, &mut rev)
}

pub fn run_fixed_session_over(
    payloads: Vec<(PayloadKind, Vec<u8>)>,
    image_id: u32,
    params: &SessionParams,
    session_id: u16,
    forward: &mut dyn Link,
    reverse: &mut dyn Link,
) -> Result<SessionLog, ProtocolError> {
    ensure_valid(params)?;
    let mut eng = Engine {
        sid: session_id,
        params: *params,
        fwd: forward,
        rev: reverse,
        tick: 0,
        data_seq: 0,
        fb_seq: 0,
        log: SessionLog { session_id, received: ReceivedSemantics::new(image_id), ..SessionLog::default() },
    };
    for (kind, bytes) in payloads {
        let delivered = eng.send_payload(kind, bytes)?;
        if let PayloadKind::Element(k) = kind {
            let el = decode_element(&delivered)?;
            if el.kind() != k {
                return Err(ProtocolError::Violation(format!("{k} payload decoded as {}", el.kind())));
            }
            eng.log.received.insert(el);
        }
    }
    eng.log.ticks = eng.tick;
    Ok(eng.log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelMode;
    use crate::correlation::TaskKind;
    use crate::policy::LadderPreset;
    use crate::semantics::{AsegInstance, AsegMap, BBox, BsegMap, BsegRegion, IsText, SemanticBundle, BACKGROUND};

    struct Fixture {
        table: Embeddings<f64>,
        vocab: ClassVocabulary,
        nouns: Gazetteer,
        bundle: SemanticBundle,
    }

    fn fixture() -> Fixture {
        let table = Embeddings::parse("3 3\nperson 1 0 0\ndog 0 1 0\nfield 0 0 1\n").unwrap();
        let vocab = ClassVocabulary::new(vec!["person".into(), "dog".into()], &table).unwrap();
        let nouns: Gazetteer = ["person", "dog", "field"].into_iter().collect();
        let (w, h) = (16u16, 16u16);
        let mut grid = vec![BACKGROUND; 256];
        for y in 2..6 {
            for x in 2..6 {
                grid[y * 16 + x] = 0;
            }
        }
        for y in 9..13 {
            for x in 9..13 {
                grid[y * 16 + x] = 1;
            }
        }
        let bundle = SemanticBundle {
            image_id: 3,
            text: IsText::new("a person with a dog").unwrap(),
            aseg: AsegMap {
                width: w,
                height: h,
                instances: vec![
                    AsegInstance { instance_id: 0, category_id: 0, bbox: BBox::new(2, 2, 4, 4) },
                    AsegInstance { instance_id: 1, category_id: 1, bbox: BBox::new(9, 9, 4, 4) },
                ],
                class_grid: grid,
            },
            bseg: BsegMap {
                width: w,
                height: h,
                regions: vec![
                    BsegRegion { instance_id: 0, category_id: 0, polygon: vec![(2, 2), (6, 2), (6, 6), (2, 6)] },
                    BsegRegion { instance_id: 1, category_id: 1, polygon: vec![(9, 9), (13, 9), (13, 13)] },
                ],
            },
            subimages: Vec::new(),
        };
        Fixture { table, vocab, nouns, bundle }
    }

    fn run(
        fx: &Fixture,
        kind: TaskKind,
        desc: &str,
        params: &SessionParams,
        fwd: &mut dyn Link,
    ) -> Result<SessionLog, ProtocolError> {
        let ladder = EscalationLadder::preset(LadderPreset::Table2, kind);
        let ctx = ReceiverContext { table: &fx.table, vocab: &fx.vocab, nouns: &fx.nouns, threshold: 0.5 };
        let task = TaskDescriptor::new(kind, desc).unwrap();
        let tx = TransmitterSession::new(&fx.bundle, ladder.clone());
        let rx = ReceiverState::new(ctx, task, ladder, fx.bundle.image_id);
        run_session_over(tx, rx, params, 9, fwd, &mut IdealLink)
    }

    #[test]
    fn caption_sends_text_then_completes() {
        let fx = fixture();
        let log = run(&fx, TaskKind::Caption, "describe the dog", &SessionParams::default(), &mut IdealLink).unwrap();
        assert_eq!(log.elements.len(), 1);
        assert_eq!(log.elements[0].payload, PayloadKind::Element(ElementKind::Text));
        assert_eq!(log.feedback, vec![FeedbackMessage::Complete]);
        assert_eq!(log.retransmissions, 0);
        assert_eq!(log.wire_bytes, log.semantic_bytes + 17);
    }

    #[test]
    fn relevant_segmentation_escalates_filtered() {
        let fx = fixture();
        let log = run(&fx, TaskKind::Segmentation, "segment the dog", &SessionParams::default(), &mut IdealLink).unwrap();
        let kinds: Vec<_> = log.elements.iter().map(|e| e.payload).collect();
        assert_eq!(kinds, vec![PayloadKind::Element(ElementKind::Text), PayloadKind::Element(ElementKind::Aseg)]);
        assert_eq!(log.feedback[0], FeedbackMessage::Request { kind: ElementKind::Aseg, categories: vec![1] });
        assert_eq!(log.feedback[1], FeedbackMessage::Complete);
        let aseg = log.received.aseg.as_ref().unwrap();
        assert_eq!(aseg.instances.len(), 1);
        assert_eq!(aseg.instances[0].category_id, 1);
        assert!(log.decision.as_ref().unwrap().relevant);
    }

    #[test]
    fn irrelevant_task_stops_after_text() {
        let fx = fixture();
        let log = run(&fx, TaskKind::Reconstruction, "the field", &SessionParams::default(), &mut IdealLink).unwrap();
        assert_eq!(log.elements.len(), 1);
        assert!(!log.decision.unwrap().relevant);
    }

    #[test]
    fn dropping_link_aborts() {
        let fx = fixture();
        let params = SessionParams { max_retries: 3, ..SessionParams::default() };
        let mut drop_all = |_: &[u8]| -> Option<Vec<u8>> { None };
        match run(&fx, TaskKind::Caption, "the dog", &params, &mut drop_all) {
            Err(ProtocolError::SessionAbort { log, .. }) => {
                assert_eq!(log.retransmissions, 3);
                assert_eq!(log.ticks, 4 * TIMEOUT_TICKS);
                assert_eq!(log.events.iter().filter(|e| e.event == EventKind::Timeout).count(), 4);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn corruption_is_naked_and_retried() {
        let fx = fixture();
        let mut n = 0;
        let mut flip_first_two = |b: &[u8]| {
            n += 1;
            let mut v = b.to_vec();
            if n <= 2 {
                v[14] ^= 0x10;
            }
            Some(v)
        };
        let log = run(&fx, TaskKind::Segmentation, "segment the dog", &SessionParams::default(), &mut flip_first_two)
            .unwrap();
        assert_eq!(log.retransmissions, 2);
        assert_eq!(log.events.iter().filter(|e| e.event == EventKind::Naked).count(), 2);
        assert_eq!(log.sent, log.delivered);
        let clean = run(&fx, TaskKind::Segmentation, "segment the dog", &SessionParams::default(), &mut IdealLink).unwrap();
        assert_eq!(clean.semantic_bytes, log.semantic_bytes);
        assert!(log.wire_bytes > clean.wire_bytes);
    }

    #[test]
    fn lost_ack_gives_duplicate_not_double_delivery() {
        let fx = fixture();
        let params = SessionParams { feedback_over_channel: true, ..SessionParams::default() };
        let ladder = EscalationLadder::preset(LadderPreset::Table2, TaskKind::Caption);
        let ctx = ReceiverContext { table: &fx.table, vocab: &fx.vocab, nouns: &fx.nouns, threshold: 0.5 };
        let task = TaskDescriptor::new(TaskKind::Caption, "the dog").unwrap();
        let tx = TransmitterSession::new(&fx.bundle, ladder.clone());
        let rx = ReceiverState::new(ctx, task, ladder, 3);
        let mut first = true;
        let mut lose_first = |b: &[u8]| {
            if std::mem::take(&mut first) {
                None
            } else {
                Some(b.to_vec())
            }
        };
        let log = run_session_over(tx, rx, &params, 1, &mut IdealLink, &mut lose_first).unwrap();
        assert_eq!(log.events.iter().filter(|e| e.event == EventKind::Duplicate).count(), 1);
        assert_eq!(log.sent, log.delivered);
        assert_eq!(log.elements.len(), 1);
    }

    #[test]
    fn awgn_session_delivers_exact_bytes() {
        let fx = fixture();
        let params = SessionParams {
            channel: ChannelConfig::new(ChannelMode::AwgnUncoded, 6.0, 11),
            max_retries: 30,
            feedback_over_channel: true,
        };
        let ladder = EscalationLadder::preset(LadderPreset::Progressive, TaskKind::Reconstruction);
        let ctx = ReceiverContext { table: &fx.table, vocab: &fx.vocab, nouns: &fx.nouns, threshold: 0.5 };
        let task = TaskDescriptor::new(TaskKind::Reconstruction, "draw the person").unwrap();
        let tx = TransmitterSession::new(&fx.bundle, ladder.clone());
        let rx = ReceiverState::new(ctx, task, ladder, 3);
        let log = run_session(tx, rx, &params, 5).unwrap();
        assert_eq!(log.sent, log.delivered);
        assert_eq!(log.elements.len(), 4);
    }

    #[test]
    fn fixed_session_carries_blob() {
        let blob: Vec<u8> = (0..3000u32).map(|i| (i * 7) as u8).collect();
        let log =
            run_fixed_session(vec![(PayloadKind::Image(30), blob.clone())], 0, &SessionParams::default(), 2).unwrap();
        assert_eq!(log.delivered, vec![blob]);
        assert_eq!(log.elements[0].frames, 3);
        assert_eq!(log.wire_bytes, 3000 + 3 * 17);
        let line = log.events_jsonl().lines().next().unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        for k in ["tick", "direction", "ftype", "seq", "bytes", "event"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
