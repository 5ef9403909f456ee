use std::collections::HashSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semcom::channel::{measure_ber, shipped_code, transmit_seeded, ChannelConfig, ChannelMode};
use semcom::correlation::{TaskDescriptor, TaskKind};
use semcom::harness::{Corpus, CorpusConfig, SyntheticCorpus};
use semcom::policy::{EscalationLadder, LadderPreset, TransmitterSession};
use semcom::protocol::{
    frame_decode, run_fixed_session_over, run_session, IdealLink, PayloadKind, ProtocolError,
    ReceiverContext, ReceiverState, SessionParams,
};
use semcom::semantics::{encode_element, ElementKind, SemanticElement};

fn corpus() -> &'static SyntheticCorpus {
    static C: OnceLock<SyntheticCorpus> = OnceLock::new();
    C.get_or_init(|| {
        let cfg = CorpusConfig { n_images: 24, n_categories: 6, presence: 0.25, width: 64, height: 64, ..Default::default() };
        SyntheticCorpus::new(cfg, 11).unwrap()
    })
}

/// A link that flips bits and drops frames at random.
fn noisy(seed: u64, flip: f64, drop: f64) -> impl FnMut(&[u8]) -> Option<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move |bytes: &[u8]| {
        if rng.gen_bool(drop) {
            return None;
        }
        let mut out = bytes.to_vec();
        for b in out.iter_mut() {
            if rng.gen_bool(flip) {
                *b ^= 1 << rng.gen_range(0..8);
            }
        }
        Some(out)
    }
}

fn kinds() -> impl Strategy<Value = TaskKind> {
    prop::sample::select(TaskKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Whatever the error pattern, a completed session delivers exactly the
    /// sent bytes and accounts the same semantic bytes as a clean run.
    #[test]
    fn delivery_is_exact_under_any_errors(
        image in 0usize..24,
        seed in any::<u64>(),
        flip in 0.0f64..0.01,
        drop in 0.0f64..0.3,
    ) {
        let c = corpus();
        let img = c.load(image).unwrap();
        let payloads: Vec<_> = ElementKind::ALL
            .into_iter()
            .map(|k| (PayloadKind::Element(k), encode_element(&img.bundle.element(k)).unwrap()))
            .collect();
        let params = SessionParams { max_retries: 12, feedback_over_channel: true, ..Default::default() };
        let clean = run_fixed_session_over(payloads.clone(), 0, &params, 1, &mut IdealLink, &mut IdealLink).unwrap();
        let mut fwd = noisy(seed, flip, drop);
        let mut rev = noisy(!seed, flip, drop);
        match run_fixed_session_over(payloads.clone(), 0, &params, 1, &mut fwd, &mut rev) {
            Ok(log) => {
                prop_assert_eq!(&log.delivered, &log.sent);
                let expected: Vec<Vec<u8>> = payloads.iter().map(|p| p.1.clone()).collect();
                prop_assert_eq!(&log.sent, &expected);
                prop_assert_eq!(log.semantic_bytes, clean.semantic_bytes);
                prop_assert!(log.wire_bytes >= clean.wire_bytes);
            }
            Err(ProtocolError::SessionAbort { log, .. }) => {
                // Whatever made it through before the abort is still exact.
                prop_assert_eq!(&log.delivered[..], &log.sent[..log.delivered.len()]);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    /// Each kind goes out at most once, never more than the ladder allows,
    /// and every session ends.
    #[test]
    fn sessions_climb_the_ladder_once(image in 0usize..24, target in 0u8..6, kind in kinds(), progressive in any::<bool>()) {
        let c = corpus();
        let k = c.knowledge();
        let img = c.load(image).unwrap();
        let preset = if progressive { LadderPreset::Progressive } else { LadderPreset::Table2 };
        let ladder = EscalationLadder::preset(preset, kind);
        let name = &c.categories()[target as usize];
        let task = TaskDescriptor::new(kind, format!("work on the {name}")).unwrap();
        let ctx = ReceiverContext { table: &k.table, vocab: &k.vocab, nouns: &k.nouns, threshold: 0.5 };
        let tx = TransmitterSession::new(&img.bundle, ladder.clone());
        let rx = ReceiverState::new(ctx, task, ladder.clone(), img.bundle.image_id);
        let log = run_session(tx, rx, &SessionParams::default(), 9).unwrap();
        let sent: Vec<PayloadKind> = log.elements.iter().map(|e| e.payload).collect();
        let unique: HashSet<_> = sent.iter().collect();
        prop_assert_eq!(unique.len(), sent.len());
        prop_assert!(sent.len() <= ladder.len());
        prop_assert_eq!(sent[0], PayloadKind::Element(ElementKind::Text));
        let present = c.presence(image).contains(&target);
        if kind != TaskKind::Caption {
            prop_assert_eq!(sent.len() > 1, present);
        }
    }

    #[test]
    fn frame_decode_is_total(bytes in prop::collection::vec(any::<u8>(), 0..80), magic in any::<bool>()) {
        let mut b = bytes;
        if magic && b.len() >= 4 {
            b[..4].copy_from_slice(b"SCM1");
        }
        let _ = frame_decode(&b);
    }
}

#[test]
fn ldpc_sessions_account_like_perfect() {
    let c = corpus();
    let k = c.knowledge();
    let noisy = SessionParams { channel: ChannelConfig::new(ChannelMode::AwgnLdpc, 2.0, 5), max_retries: 16, feedback_over_channel: false };
    for image in 0..6 {
        let img = c.load(image).unwrap();
        let target = c.presence(image)[0];
        let name = &c.categories()[target as usize];
        let run = |params: &SessionParams| {
            let ladder = EscalationLadder::preset(LadderPreset::Progressive, TaskKind::Reconstruction);
            let task = TaskDescriptor::new(TaskKind::Reconstruction, format!("reconstruct the {name}")).unwrap();
            let ctx = ReceiverContext { table: &k.table, vocab: &k.vocab, nouns: &k.nouns, threshold: 0.5 };
            let tx = TransmitterSession::new(&img.bundle, ladder.clone());
            run_session(tx, ReceiverState::new(ctx, task, ladder, 0), params, image as u16).unwrap()
        };
        let (clean, rough) = (run(&SessionParams::default()), run(&noisy));
        assert_eq!(rough.delivered, rough.sent);
        assert_eq!(rough.sent, clean.sent);
        assert_eq!(rough.semantic_bytes, clean.semantic_bytes);
        assert!(rough.wire_bytes >= clean.wire_bytes);
    }
}

#[test]
fn dead_reverse_link_aborts_with_context() {
    let c = corpus();
    let img = c.load(0).unwrap();
    let payloads = vec![(PayloadKind::Element(ElementKind::Text), encode_element(&SemanticElement::Text(img.bundle.text.clone())).unwrap())];
    let params = SessionParams { feedback_over_channel: true, max_retries: 2, ..Default::default() };
    let err = run_fixed_session_over(payloads, 0, &params, 77, &mut IdealLink, &mut |_: &[u8]| None).unwrap_err();
    match err {
        ProtocolError::SessionAbort { session_id, log, .. } => {
            assert_eq!(session_id, 77);
            assert_eq!(log.retransmissions, 2);
        }
        e => panic!("{e}"),
    }
}

#[test]
fn shipped_code_generator_is_orthogonal() {
    let code = shipped_code();
    code.verify_generator().unwrap();
    assert_eq!((code.n(), code.k()), (1024, 512));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let info: Vec<u8> = (0..code.k()).map(|_| rng.gen_range(0..2)).collect();
        let cw = code.encode(&info);
        assert!(code.syndrome_is_zero(&cw));
        assert_eq!(code.extract_info(&cw), info);
    }
}

#[test]
fn ber_is_monotone_on_a_fixed_seed_sweep() {
    for mode in [ChannelMode::AwgnUncoded, ChannelMode::AwgnLdpc] {
        let bits = if mode == ChannelMode::AwgnLdpc { 100_000 } else { 400_000 };
        let bers: Vec<f64> = [0.0, 2.0, 4.0, 6.0, 8.0].iter().map(|&e| measure_ber(mode, e, bits, 3).ber).collect();
        assert!(bers.windows(2).all(|w| w[1] <= w[0]), "{mode:?} {bers:?}");
    }
}

#[test]
fn uncoded_ber_near_one_in_1e5_at_9_6_db() {
    // Q(sqrt(2 * 10^0.96)) = 1.0e-5 to two digits.
    let p = measure_ber(ChannelMode::AwgnUncoded, 9.6, 4_000_000, 8);
    assert!(p.ber > 3e-6 && p.ber < 3e-5, "{}", p.ber);
}

#[test]
fn transmit_is_deterministic() {
    let bytes: Vec<u8> = (0..=255).collect();
    for mode in [ChannelMode::AwgnUncoded, ChannelMode::AwgnLdpc] {
        let cfg = ChannelConfig::new(mode, 1.0, 42);
        assert_eq!(transmit_seeded(&bytes, &cfg), transmit_seeded(&bytes, &cfg));
        let other = ChannelConfig { seed: 43, ..cfg };
        assert_ne!(transmit_seeded(&bytes, &cfg), transmit_seeded(&bytes, &other));
    }
}
