//! Digital PHY: QPSK over AWGN, optionally protected by a rate-1/2 LDPC code.
//!
//! Hard-decision bytes cross this boundary; errors that survive decoding
//! show up as corrupted bytes for the framing layer to catch.

mod ldpc;
mod modem;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ldpc::{parse_alist, to_alist, DecodeOutcome, LdpcCode, LdpcError};
pub use modem::{awgn, noise_variance, qpsk_demodulate, qpsk_modulate};

/// Block length of the shipped code.
pub const SHIPPED_N: usize = 1024;
const SHIPPED_SEED: u64 = 0x5EC0_DE01;
pub const MAX_BP_ITERS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    Perfect,
    AwgnUncoded,
    AwgnLdpc,
}

impl ChannelMode {
    pub fn name(self) -> &'static str {
        match self {
            ChannelMode::Perfect => "perfect",
            ChannelMode::AwgnUncoded => "uncoded",
            ChannelMode::AwgnLdpc => "ldpc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    /// Eb/N0 in dB; ignored in `Perfect` mode.
    #[serde(default)]
    pub ebn0_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self::perfect()
    }
}

impl ChannelConfig {
    pub fn perfect() -> Self {
        Self { mode: ChannelMode::Perfect, ebn0_db: 0.0, seed: 0 }
    }

    pub fn new(mode: ChannelMode, ebn0_db: f64, seed: u64) -> Self {
        Self { mode, ebn0_db, seed }
    }

    pub fn is_valid(&self) -> bool {
        self.mode == ChannelMode::Perfect || self.ebn0_db.is_finite()
    }

    /// Noise stream for one session; independent across `stream` ids.
    pub fn rng_for_stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// The regular (3,6) rate-1/2 code of length 1024 used by `AwgnLdpc`.
pub fn shipped_code() -> &'static LdpcCode {
    static CODE: OnceLock<LdpcCode> = OnceLock::new();
    CODE.get_or_init(|| LdpcCode::peg_regular(SHIPPED_N, 3, 6, SHIPPED_SEED).expect("shipped LDPC code must build"))
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|&b| (0..8).rev().map(move |i| b >> i & 1)).collect()
}

/// Packs MSB-first bits; a trailing partial byte is zero-filled.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | (b & 1) << (7 - i))).collect()
}

fn uncoded_bits<R: Rng + ?Sized>(bits: &[u8], ebn0_db: f64, rng: &mut R) -> Vec<u8> {
    let (symbols, _) = qpsk_modulate::<f64>(bits);
    let noisy = awgn(&symbols, ebn0_db, 2, 1.0, rng);
    let (_, mut hard) = qpsk_demodulate(&noisy, 2.0 * noise_variance(ebn0_db, 2, 1.0));
    hard.truncate(bits.len());
    hard
}

fn ldpc_bits<R: Rng + ?Sized>(bits: &[u8], ebn0_db: f64, code: &LdpcCode, rng: &mut R) -> (Vec<u8>, usize) {
    let (k, rate) = (code.k(), code.rate());
    let n0 = 2.0 * noise_variance(ebn0_db, 2, rate);
    let mut out = Vec::with_capacity(bits.len() + k);
    let mut failures = 0;
    for block in bits.chunks(k) {
        let mut info = block.to_vec();
        info.resize(k, 0);
        let (symbols, _) = qpsk_modulate::<f64>(&code.encode(&info));
        let noisy = awgn(&symbols, ebn0_db, 2, rate, rng);
        let (mut llrs, _) = qpsk_demodulate(&noisy, n0);
        llrs.truncate(code.n());
        let decoded = code.decode(&llrs, MAX_BP_ITERS);
        failures += usize::from(!decoded.converged);
        out.extend_from_slice(&decoded.info[..block.len()]);
    }
    (out, failures)
}

/// Sends `bytes` through the configured PHY; the output has the same length.
pub fn transmit<R: Rng + ?Sized>(bytes: &[u8], config: &ChannelConfig, rng: &mut R) -> Vec<u8> {
    match config.mode {
        ChannelMode::Perfect => bytes.to_vec(),
        ChannelMode::AwgnUncoded => bits_to_bytes(&uncoded_bits(&bytes_to_bits(bytes), config.ebn0_db, rng)),
        ChannelMode::AwgnLdpc => {
            bits_to_bytes(&ldpc_bits(&bytes_to_bits(bytes), config.ebn0_db, shipped_code(), rng).0)
        }
    }
}

/// [`transmit`] with a fresh generator seeded from `config.seed`.
pub fn transmit_seeded(bytes: &[u8], config: &ChannelConfig) -> Vec<u8> {
    transmit(bytes, config, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub mode: String,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
}

/// Monte-Carlo bit error rate over `bits` random information bits.
pub fn measure_ber(mode: ChannelMode, ebn0_db: f64, bits: u64, seed: u64) -> BerPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(1);
    let mut errors = 0u64;
    let mut done = 0u64;
    // Chunks keep memory flat; LDPC chunks are whole code blocks.
    let chunk = match mode {
        ChannelMode::AwgnLdpc => shipped_code().k() as u64 * 16,
        _ => 1 << 16,
    };
    while done < bits {
        let len = chunk.min(bits - done) as usize;
        let tx: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2u8)).collect();
        let rx = match mode {
            ChannelMode::Perfect => tx.clone(),
            ChannelMode::AwgnUncoded => uncoded_bits(&tx, ebn0_db, &mut noise),
            ChannelMode::AwgnLdpc => ldpc_bits(&tx, ebn0_db, shipped_code(), &mut noise).0,
        };
        errors += tx.iter().zip(&rx).filter(|(a, b)| a != b).count() as u64;
        done += len as u64;
    }
    BerPoint { ebn0_db, mode: mode.name().to_string(), bits, errors, ber: errors as f64 / bits.max(1) as f64 }
}
