//! Binary PPM (`P6`, maxval 255) reading and writing.

use std::path::Path;

use super::{ImageRaster, SemanticsError};

fn bad(msg: impl Into<String>) -> SemanticsError {
    SemanticsError::BadPpm(msg.into())
}

pub fn encode_ppm(raster: &ImageRaster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    out.extend_from_slice(raster.pixels());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageRaster, SemanticsError> {
    let mut pos = 0usize;
    let mut fields = [0u32; 3];
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(bad("missing P6 magic"));
    }
    pos += 2;
    for field in &mut fields {
        // Whitespace and '#' comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let digits = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = digits.parse().map_err(|_| bad(format!("bad header field at byte {start}")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing separator before pixel data")),
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    if w == 0 || h == 0 || w > u16::MAX as u32 || h > u16::MAX as u32 {
        return Err(bad(format!("unsupported dimensions {w}x{h}")));
    }
    let need = w as usize * h as usize * 3;
    let data = &bytes[pos..];
    if data.len() != need {
        return Err(bad(format!("expected {need} pixel bytes, found {}", data.len())));
    }
    ImageRaster::new(w as u16, h as u16, data.to_vec())
}

pub fn read_ppm(path: &Path) -> Result<ImageRaster, SemanticsError> {
    let bytes = std::fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    decode_ppm(&bytes)
}

pub fn write_ppm(path: &Path, raster: &ImageRaster) -> std::io::Result<()> {
    std::fs::write(path, encode_ppm(raster))
}
