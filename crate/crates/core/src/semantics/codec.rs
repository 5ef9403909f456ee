//! Byte layout of semantic elements.
//!
//! Every element starts with its one-byte kind tag; multi-byte integers are
//! little-endian.
//!
//! | kind | body |
//! |------|------|
//! | TEXT | UTF-8 caption bytes (1..=200) |
//! | ASEG | `w u16, h u16, n u16`, n × `(id u16, cat u8, x u16, y u16, bw u16, bh u16)`, then RLE of the class grid |
//! | BSEG | `w u16, h u16, n u16`, n × `(id u16, cat u8, nv u16, x0 u16, y0 u16, deltas…)` |
//! | SIMG | `n u16`, n × `(id u16, x u16, y u16, bw u16, bh u16, bw·bh·3 pixel bytes)` |
//!
//! B-seg vertex deltas are `(dx i8, dy i8)` when both fit in `-127..=127`;
//! otherwise the escape pair `(-128, -128)` is followed by `(dx i16, dy i16)`.
//! Deltas wrap modulo 2^16, so every `u16` coordinate pair is reachable.
//!
//! Decoding accepts only the canonical encoding: `encode_element(decode_element(b)) == b`.

use super::{
    rle_decode, rle_encode, AsegInstance, AsegMap, BBox, BsegMap, BsegRegion, ElementKind, IsText,
    SemanticElement, SemanticsError, SubImage, MAX_TEXT_BYTES,
};

const ESCAPE: i8 = i8::MIN;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bbox(&mut self, b: BBox) {
        for v in [b.x, b.y, b.w, b.h] {
            self.u16(v);
        }
    }
    fn count(&mut self, n: usize, what: &str) -> Result<(), SemanticsError> {
        let n = u16::try_from(n)
            .map_err(|_| SemanticsError::InvariantViolation(format!("too many {what}: {n}")))?;
        self.u16(n);
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(msg: impl Into<String>) -> SemanticsError {
    SemanticsError::MalformedElement(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SemanticsError> {
        if self.buf.len() - self.pos < n {
            return Err(malformed(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, SemanticsError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, SemanticsError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn bbox(&mut self) -> Result<BBox, SemanticsError> {
        Ok(BBox::new(self.u16()?, self.u16()?, self.u16()?, self.u16()?))
    }
    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }
    fn finish(&self) -> Result<(), SemanticsError> {
        if self.pos != self.buf.len() {
            return Err(malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_element(element: &SemanticElement) -> Result<Vec<u8>, SemanticsError> {
    element.validate()?;
    let mut w = Writer(vec![element.kind().tag()]);
    match element {
        SemanticElement::Text(t) => w.0.extend_from_slice(t.as_str().as_bytes()),
        SemanticElement::Aseg(a) => {
            w.u16(a.width);
            w.u16(a.height);
            w.count(a.instances.len(), "instances")?;
            for inst in &a.instances {
                w.u16(inst.instance_id);
                w.u8(inst.category_id);
                w.bbox(inst.bbox);
            }
            w.0.extend_from_slice(&rle_encode(&a.class_grid));
        }
        SemanticElement::Bseg(b) => {
            w.u16(b.width);
            w.u16(b.height);
            w.count(b.regions.len(), "regions")?;
            for r in &b.regions {
                w.u16(r.instance_id);
                w.u8(r.category_id);
                w.count(r.polygon.len(), "vertices")?;
                let (mut px, mut py) = r.polygon[0];
                w.u16(px);
                w.u16(py);
                for &(x, y) in &r.polygon[1..] {
                    let dx = x.wrapping_sub(px) as i16;
                    let dy = y.wrapping_sub(py) as i16;
                    let small = |d: i16| (-127..=127).contains(&d);
                    if small(dx) && small(dy) {
                        w.u8(dx as i8 as u8);
                        w.u8(dy as i8 as u8);
                    } else {
                        w.u8(ESCAPE as u8);
                        w.u8(ESCAPE as u8);
                        w.0.extend_from_slice(&dx.to_le_bytes());
                        w.0.extend_from_slice(&dy.to_le_bytes());
                    }
                    (px, py) = (x, y);
                }
            }
        }
        SemanticElement::Simg(crops) => {
            w.count(crops.len(), "sub-images")?;
            for c in crops {
                w.u16(c.instance_id);
                w.bbox(c.bbox);
                w.0.extend_from_slice(&c.pixels);
            }
        }
    }
    Ok(w.0)
}

fn decode_body(kind: ElementKind, r: &mut Reader<'_>) -> Result<SemanticElement, SemanticsError> {
    Ok(match kind {
        ElementKind::Text => {
            let body = r.rest();
            if body.is_empty() || body.len() > MAX_TEXT_BYTES {
                return Err(malformed(format!("text body of {} bytes", body.len())));
            }
            let s = std::str::from_utf8(body).map_err(|e| malformed(format!("text: {e}")))?;
            SemanticElement::Text(IsText::new(s)?)
        }
        ElementKind::Aseg => {
            let (width, height) = (r.u16()?, r.u16()?);
            let n = r.u16()? as usize;
            let mut instances = Vec::with_capacity(n.min(4096));
            for _ in 0..n {
                instances.push(AsegInstance {
                    instance_id: r.u16()?,
                    category_id: r.u8()?,
                    bbox: r.bbox()?,
                });
            }
            let class_grid = rle_decode(r.rest()).map_err(|e| malformed(e.to_string()))?;
            SemanticElement::Aseg(AsegMap { width, height, instances, class_grid })
        }
        ElementKind::Bseg => {
            let (width, height) = (r.u16()?, r.u16()?);
            let n = r.u16()? as usize;
            let mut regions = Vec::with_capacity(n.min(4096));
            for _ in 0..n {
                let instance_id = r.u16()?;
                let category_id = r.u8()?;
                let nv = r.u16()? as usize;
                if nv == 0 {
                    return Err(malformed("region without vertices"));
                }
                let mut polygon = Vec::with_capacity(nv);
                let (mut x, mut y) = (r.u16()?, r.u16()?);
                polygon.push((x, y));
                for _ in 1..nv {
                    let (a, b) = (r.u8()? as i8, r.u8()? as i8);
                    let (dx, dy) = if a == ESCAPE && b == ESCAPE {
                        (r.u16()? as i16, r.u16()? as i16)
                    } else {
                        (a as i16, b as i16)
                    };
                    x = x.wrapping_add(dx as u16);
                    y = y.wrapping_add(dy as u16);
                    polygon.push((x, y));
                }
                regions.push(BsegRegion { instance_id, category_id, polygon });
            }
            SemanticElement::Bseg(BsegMap { width, height, regions })
        }
        ElementKind::Simg => {
            let n = r.u16()? as usize;
            let mut crops = Vec::with_capacity(n.min(4096));
            for _ in 0..n {
                let instance_id = r.u16()?;
                let bbox = r.bbox()?;
                let pixels = r.take(bbox.area() * 3)?.to_vec();
                crops.push(SubImage { instance_id, bbox, pixels });
            }
            SemanticElement::Simg(crops)
        }
    })
}

pub fn decode_element(bytes: &[u8]) -> Result<SemanticElement, SemanticsError> {
    let (&tag, _) = bytes.split_first().ok_or_else(|| malformed("empty input"))?;
    let kind = ElementKind::from_tag(tag).ok_or_else(|| malformed(format!("unknown tag {tag:#04x}")))?;
    let mut r = Reader { buf: bytes, pos: 1 };
    let element = decode_body(kind, &mut r)?;
    r.finish()?;
    element.validate().map_err(|e| malformed(e.to_string()))?;
    // Rejects alternative spellings such as unsplit-but-mergeable runs or
    // unnecessary delta escapes.
    if encode_element(&element)? != bytes {
        return Err(malformed("non-canonical encoding"));
    }
    Ok(element)
}
