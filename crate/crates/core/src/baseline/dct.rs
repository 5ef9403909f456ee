//! Block-DCT lossy image codec standing in for JPEG.
//!
//! Bitstream (all multibyte header fields little-endian):
//!
//! ```text
//! 0..4   magic "DCTC"
//! 4      version (1)
//! 5      quality q, 1..=100
//! 6..8   width
//! 8..10  height
//! 10..   entropy-coded blocks, MSB-first, zero-padded to a byte
//! ```
//!
//! The image is padded to a multiple of 16 by edge replication and converted
//! to YCbCr (JFIF matrix) with both chroma planes averaged over 2x2. Blocks
//! are coded plane by plane (Y, Cb, Cr), raster order within a plane. Each
//! 8x8 block is level-shifted by 128 and transformed with an orthonormal
//! type-II DCT. The DC coefficient is quantized with step 8 (exactly one
//! gray level of block mean) and AC coefficients with step `101 - q`.
//!
//! Per block: `se(dc - previous dc of the same plane)`, then for each
//! nonzero AC coefficient in zigzag order `ue(zero_run + 1)` and `se(level)`,
//! closed by `ue(0)`. `ue`/`se` are order-0 exponential-Golomb codes.

use std::sync::OnceLock;

use thiserror::Error;

use crate::semantics::ImageRaster;

pub const MAGIC: &[u8; 4] = b"DCTC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
const DC_STEP: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("quality {0} outside 1..=100")]
    BadQuality(u8),
    #[error("malformed bitstream: {0}")]
    MalformedBitstream(String),
}

fn malformed(msg: impl Into<String>) -> CodecError {
    CodecError::MalformedBitstream(msg.into())
}

#[rustfmt::skip]
const ZIGZAG: [usize; 64] = [
     0,  1,  8, 16,  9,  2,  3, 10,
    17, 24, 32, 25, 18, 11,  4,  5,
    12, 19, 26, 33, 40, 48, 41, 34,
    27, 20, 13,  6,  7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36,
    29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46,
    53, 60, 61, 54, 47, 55, 62, 63,
];

// basis[k][n] = c(k) cos((2n+1) k pi / 16)
fn basis() -> &'static [[f64; 8]; 8] {
    static B: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    B.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (k, row) in b.iter_mut().enumerate() {
            let c = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = c * (((2 * n + 1) * k) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        b
    })
}

fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| b[u][x] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| b[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    n: u32,
}

impl BitWriter {
    fn new(bytes: Vec<u8>) -> Self {
        Self { bytes, acc: 0, n: 0 }
    }

    fn put(&mut self, value: u64, bits: u32) {
        for i in (0..bits).rev() {
            self.acc = (self.acc << 1) | ((value >> i) & 1);
            self.n += 1;
            if self.n == 8 {
                self.bytes.push(self.acc as u8);
                self.acc = 0;
                self.n = 0;
            }
        }
    }

    fn ue(&mut self, v: u32) {
        let x = v as u64 + 1;
        let len = 64 - x.leading_zeros();
        self.put(0, len - 1);
        self.put(x, len);
    }

    fn se(&mut self, v: i32) {
        self.ue(if v > 0 { 2 * v as u32 - 1 } else { 2 * v.unsigned_abs() });
    }

    fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            let pad = 8 - self.n;
            self.put(0, pad);
        }
        self.bytes
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn bit(&mut self) -> Result<u32, CodecError> {
        let byte = self.data.get(self.pos / 8).ok_or_else(|| malformed("bitstream ends early"))?;
        let b = (byte >> (7 - self.pos % 8)) & 1;
        self.pos += 1;
        Ok(b as u32)
    }

    fn ue(&mut self) -> Result<u32, CodecError> {
        let mut zeros = 0;
        while self.bit()? == 0 {
            zeros += 1;
            if zeros > 31 {
                return Err(malformed("exp-Golomb prefix too long"));
            }
        }
        let mut x: u64 = 1;
        for _ in 0..zeros {
            x = (x << 1) | self.bit()? as u64;
        }
        u32::try_from(x - 1).map_err(|_| malformed("exp-Golomb value overflows"))
    }

    fn se(&mut self) -> Result<i32, CodecError> {
        let k = self.ue()?;
        let mag = i32::try_from(k.div_ceil(2)).map_err(|_| malformed("level overflows"))?;
        Ok(if k % 2 == 1 { mag } else { -mag })
    }
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

fn padded(n: u16) -> usize {
    (n as usize).div_ceil(16) * 16
}

fn to_planes(img: &ImageRaster) -> [Plane; 3] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (pw, ph) = (padded(img.width()), padded(img.height()));
    let mut y_plane = vec![0.0; pw * ph];
    let mut cb_full = vec![0.0; pw * ph];
    let mut cr_full = vec![0.0; pw * ph];
    for py in 0..ph {
        for px in 0..pw {
            let [r, g, b] = img.pixel(px.min(w - 1) as u32, py.min(h - 1) as u32).map(f64::from);
            let i = py * pw + px;
            y_plane[i] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb_full[i] = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
            cr_full[i] = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
        }
    }
    let sub = |full: &[f64]| {
        let (cw, ch) = (pw / 2, ph / 2);
        let mut out = vec![0.0; cw * ch];
        for y in 0..ch {
            for x in 0..cw {
                let i = 2 * y * pw + 2 * x;
                out[y * cw + x] = (full[i] + full[i + 1] + full[i + pw] + full[i + pw + 1]) / 4.0;
            }
        }
        Plane { w: cw, h: ch, data: out }
    };
    [Plane { w: pw, h: ph, data: y_plane }, sub(&cb_full), sub(&cr_full)]
}

fn ac_step(q: u8) -> f64 {
    (101 - q as u32) as f64
}

pub fn dct_encode(img: &ImageRaster, q: u8) -> Result<Vec<u8>, CodecError> {
    if !(1..=100).contains(&q) {
        return Err(CodecError::BadQuality(q));
    }
    let mut header = Vec::with_capacity(HEADER_LEN + 1024);
    header.extend_from_slice(MAGIC);
    header.push(VERSION);
    header.push(q);
    header.extend_from_slice(&img.width().to_le_bytes());
    header.extend_from_slice(&img.height().to_le_bytes());
    let mut bw = BitWriter::new(header);
    let step = ac_step(q);
    for plane in to_planes(img) {
        let mut prev_dc = 0i32;
        for by in (0..plane.h).step_by(8) {
            for bx in (0..plane.w).step_by(8) {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    for x in 0..8 {
                        block[y * 8 + x] = plane.data[(by + y) * plane.w + bx + x] - 128.0;
                    }
                }
                let coef = fdct(&block);
                let dc = (coef[0] / DC_STEP).round() as i32;
                bw.se(dc - prev_dc);
                prev_dc = dc;
                let mut run = 0u32;
                for &zz in &ZIGZAG[1..] {
                    let level = (coef[zz] / step).round() as i32;
                    if level == 0 {
                        run += 1;
                    } else {
                        bw.ue(run + 1);
                        bw.se(level);
                        run = 0;
                    }
                }
                bw.ue(0);
            }
        }
    }
    Ok(bw.finish())
}

pub fn dct_decode(bytes: &[u8]) -> Result<ImageRaster, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(malformed("header truncated"));
    }
    if &bytes[..4] != MAGIC {
        return Err(malformed("bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(malformed(format!("unsupported version {}", bytes[4])));
    }
    let q = bytes[5];
    if !(1..=100).contains(&q) {
        return Err(malformed(format!("quality {q} out of range")));
    }
    let w = u16::from_le_bytes([bytes[6], bytes[7]]);
    let h = u16::from_le_bytes([bytes[8], bytes[9]]);
    if w == 0 || h == 0 {
        return Err(malformed("zero dimension"));
    }
    let (pw, ph) = (padded(w), padded(h));
    // Each block costs at least two bits (DC delta and end-of-block), which
    // bounds what a forged header can make us allocate.
    let blocks = (pw / 8) * (ph / 8) * 3 / 2;
    if (bytes.len() - HEADER_LEN) * 8 < 2 * blocks {
        return Err(malformed("bitstream too short for the stated dimensions"));
    }
    let step = ac_step(q);
    let mut br = BitReader { data: &bytes[HEADER_LEN..], pos: 0 };
    let mut planes = Vec::with_capacity(3);
    for (plane_w, plane_h) in [(pw, ph), (pw / 2, ph / 2), (pw / 2, ph / 2)] {
        let mut data = vec![0.0; plane_w * plane_h];
        let mut prev_dc = 0i32;
        for by in (0..plane_h).step_by(8) {
            for bx in (0..plane_w).step_by(8) {
                let mut coef = [0.0; 64];
                let dc = prev_dc.checked_add(br.se()?).ok_or_else(|| malformed("DC overflow"))?;
                prev_dc = dc;
                coef[0] = dc as f64 * DC_STEP;
                let mut idx = 1usize;
                loop {
                    let sym = br.ue()? as usize;
                    if sym == 0 {
                        break;
                    }
                    idx += sym - 1;
                    if idx > 63 {
                        return Err(malformed("AC run past the end of the block"));
                    }
                    let level = br.se()?;
                    if level == 0 {
                        return Err(malformed("zero AC level"));
                    }
                    coef[ZIGZAG[idx]] = level as f64 * step;
                    idx += 1;
                }
                let px = idct(&coef);
                for y in 0..8 {
                    for x in 0..8 {
                        data[(by + y) * plane_w + bx + x] = px[y * 8 + x] + 128.0;
                    }
                }
            }
        }
        planes.push(Plane { w: plane_w, h: plane_h, data });
    }
    let rest = &bytes[HEADER_LEN..];
    if br.pos.div_ceil(8) != rest.len() {
        return Err(malformed(format!("{} trailing bytes", rest.len() - br.pos.div_ceil(8))));
    }
    let mut pixels = Vec::with_capacity(w as usize * h as usize * 3);
    let cw = planes[1].w;
    for y in 0..h as usize {
        for x in 0..w as usize {
            let yy = planes[0].data[y * pw + x];
            let ci = (y / 2) * cw + x / 2;
            let cb = planes[1].data[ci] - 128.0;
            let cr = planes[2].data[ci] - 128.0;
            let r = yy + 1.402 * cr;
            let g = yy - 0.344_136 * cb - 0.714_136 * cr;
            let b = yy + 1.772 * cb;
            pixels.extend([r, g, b].map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    debug_assert_eq!(planes[1].h, ph / 2);
    ImageRaster::new(w, h, pixels).map_err(|e| malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn dct_is_orthonormal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut block = [0.0; 64];
        block.iter_mut().for_each(|v| *v = rng.gen_range(-128.0..128.0));
        let back = idct(&fdct(&block));
        for (a, b) in block.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let energy: f64 = block.iter().map(|v| v * v).sum();
        let coef_energy: f64 = fdct(&block).iter().map(|v| v * v).sum();
        assert!((energy - coef_energy).abs() < 1e-6 * energy);
    }

    #[test]
    fn exp_golomb_round_trip() {
        let mut bw = BitWriter::new(Vec::new());
        let vals = [0i32, 1, -1, 2, -2, 100, -1000, 65535];
        for &v in &vals {
            bw.se(v);
            bw.ue(v.unsigned_abs());
        }
        let bytes = bw.finish();
        let mut br = BitReader { data: &bytes, pos: 0 };
        for &v in &vals {
            assert_eq!(br.se().unwrap(), v);
            assert_eq!(br.ue().unwrap(), v.unsigned_abs());
        }
    }

    #[test]
    fn uniform_gray_is_exact() {
        for v in [0u8, 17, 128, 200, 255] {
            let img = ImageRaster::filled(37, 21, [v, v, v]);
            for q in [1, 25, 50, 100] {
                let back = dct_decode(&dct_encode(&img, q).unwrap()).unwrap();
                assert_eq!(back, img, "v={v} q={q}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(dct_encode(&ImageRaster::filled(8, 8, [0; 3]), 0), Err(CodecError::BadQuality(0)));
        let good = dct_encode(&ImageRaster::filled(8, 8, [9; 3]), 50).unwrap();
        assert!(dct_decode(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(dct_decode(&extra).is_err());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(dct_decode(&bad).is_err());
    }

    #[test]
    fn fuzzed_decode_never_panics() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let good = dct_encode(&ImageRaster::filled(16, 16, [30, 90, 200]), 70).unwrap();
        for _ in 0..2000 {
            let mut b = good.clone();
            let i = rng.gen_range(0..b.len());
            b[i] = rng.gen();
            let _ = dct_decode(&b);
            let n = rng.gen_range(0..64);
            let junk: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            let _ = dct_decode(&junk);
        }
    }
}
