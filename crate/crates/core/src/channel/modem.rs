//! Gray-mapped QPSK and the AWGN channel.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::Real;

/// Maps bit pairs to unit-energy symbols: 00 -> (+1+j)/√2, 01 -> (-1+j)/√2,
/// 11 -> (-1-j)/√2, 10 -> (+1-j)/√2. An odd-length input is padded with one
/// zero bit; the returned flag records that.
pub fn qpsk_modulate<T: Real>(bits: &[u8]) -> (Vec<Complex<T>>, bool) {
    let a = T::FRAC_1_SQRT_2();
    let level = |b: u8| if b & 1 == 0 { a } else { -a };
    let padded = bits.len() % 2 == 1;
    let symbols = bits
        .chunks(2)
        .map(|pair| {
            let (b0, b1) = (pair[0], pair.get(1).copied().unwrap_or(0));
            Complex::new(level(b1), level(b0))
        })
        .collect();
    (symbols, padded)
}

/// Soft and hard decisions for each bit of `symbols`.
///
/// `n0` is the total complex noise variance (twice the per-component
/// variance). A positive LLR favours bit 0; its value is `2√2·y / n0` for the
/// matching component `y`.
pub fn qpsk_demodulate<T: Real>(symbols: &[Complex<T>], n0: T) -> (Vec<T>, Vec<u8>) {
    let n0 = n0.max(T::min_positive_value());
    let scale = T::of(2.0) * T::SQRT_2() / n0;
    let mut llrs = Vec::with_capacity(symbols.len() * 2);
    let mut hard = Vec::with_capacity(symbols.len() * 2);
    for s in symbols {
        for y in [s.im, s.re] {
            llrs.push(scale * y);
            hard.push(u8::from(y < T::zero()));
        }
    }
    (llrs, hard)
}

/// Per-component noise variance for a given Eb/N0. Symbols have unit energy.
pub fn noise_variance(ebn0_db: f64, bits_per_symbol: u32, code_rate: f64) -> f64 {
    1.0 / (2.0 * code_rate * bits_per_symbol as f64 * 10f64.powf(ebn0_db / 10.0))
}

/// Adds i.i.d. complex Gaussian noise at the variance given by [`noise_variance`].
pub fn awgn<T: Real, R: Rng + ?Sized>(
    symbols: &[Complex<T>],
    ebn0_db: f64,
    bits_per_symbol: u32,
    code_rate: f64,
    rng: &mut R,
) -> Vec<Complex<T>> {
    let sigma = noise_variance(ebn0_db, bits_per_symbol, code_rate).sqrt();
    symbols
        .iter()
        .map(|s| {
            let nr: f64 = rng.sample(StandardNormal);
            let ni: f64 = rng.sample(StandardNormal);
            Complex::new(s.re + T::of(sigma * nr), s.im + T::of(sigma * ni))
        })
        .collect()
}
