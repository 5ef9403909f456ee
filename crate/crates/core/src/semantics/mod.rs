//! Explainable semantic payloads: caption text, coarse and fine segmentation
//! maps, and ROI-masked sub-images, with their discrete wire codecs.

mod codec;
pub mod mask;
pub mod ppm;
mod rle;
mod subimage;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::{decode_element, encode_element};
pub use rle::{rle_decode, rle_encode, MAX_RUN};
pub use subimage::extract_subimages;

/// Category id marking unlabeled pixels in a class grid.
pub const BACKGROUND: u8 = 255;

/// Maximum encoded length of caption text, in bytes.
pub const MAX_TEXT_BYTES: usize = 200;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("malformed run-length data: {0} trailing bytes")]
    MalformedRle(usize),
    #[error("malformed element: {0}")]
    MalformedElement(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad PPM: {0}")]
    BadPpm(String),
}

fn violation(msg: impl Into<String>) -> SemanticsError {
    SemanticsError::InvariantViolation(msg.into())
}

/// Axis-aligned box in pixel units, `[x, y, w, h]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u16,
    pub y: u16,
    pub w: u16,
    pub h: u16,
}

impl BBox {
    pub fn new(x: u16, y: u16, w: u16, h: u16) -> Self {
        Self { x, y, w, h }
    }

    pub fn full(width: u16, height: u16) -> Self {
        Self::new(0, 0, width, height)
    }

    /// True when the box is non-empty and lies inside a `width` x `height` image.
    pub fn fits(&self, width: u16, height: u16) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x as u32 + self.w as u32 <= width as u32
            && self.y as u32 + self.h as u32 <= height as u32
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x as u32
            && py >= self.y as u32
            && px < self.x as u32 + self.w as u32
            && py < self.y as u32 + self.h as u32
    }

    pub fn area(&self) -> usize {
        self.w as usize * self.h as usize
    }
}

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRaster {
    width: u16,
    height: u16,
    pixels: Vec<u8>,
}

impl ImageRaster {
    pub fn new(width: u16, height: u16, pixels: Vec<u8>) -> Result<Self, SemanticsError> {
        if width == 0 || height == 0 {
            return Err(violation("raster dimensions must be at least 1x1"));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(violation(format!(
                "raster has {} samples, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// A raster filled with one color.
    pub fn filled(width: u16, height: u16, rgb: [u8; 3]) -> Self {
        let n = width.max(1) as usize * height.max(1) as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self { width: width.max(1), height: height.max(1), pixels }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Copy of the `bbox` region; the box must fit.
    pub fn crop(&self, bbox: BBox) -> Vec<u8> {
        let mut out = Vec::with_capacity(bbox.area() * 3);
        for y in bbox.y as u32..bbox.y as u32 + bbox.h as u32 {
            let start = self.offset(bbox.x as u32, y);
            out.extend_from_slice(&self.pixels[start..start + bbox.w as usize * 3]);
        }
        out
    }
}

/// Caption-style image semantic text, at most [`MAX_TEXT_BYTES`] of UTF-8.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct IsText(String);

impl IsText {
    /// Builds caption text, truncating at the last whole code point that fits.
    pub fn new(text: impl Into<String>) -> Result<Self, SemanticsError> {
        let mut text = text.into();
        if text.len() > MAX_TEXT_BYTES {
            let mut cut = MAX_TEXT_BYTES;
            while !text.is_char_boundary(cut) {
                cut -= 1;
            }
            text.truncate(cut);
        }
        if text.is_empty() {
            return Err(violation("caption text is empty"));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for IsText {
    type Error = SemanticsError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<IsText> for String {
    fn from(value: IsText) -> Self {
        value.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsegInstance {
    pub instance_id: u16,
    pub category_id: u8,
    pub bbox: BBox,
}

/// Coarse segmentation: instance boxes plus a dense per-pixel class grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsegMap {
    pub width: u16,
    pub height: u16,
    pub instances: Vec<AsegInstance>,
    /// Row-major category ids, [`BACKGROUND`] for unlabeled pixels.
    pub class_grid: Vec<u8>,
}

impl AsegMap {
    pub fn validate(&self) -> Result<(), SemanticsError> {
        if self.width == 0 || self.height == 0 {
            return Err(violation("A-seg dimensions must be at least 1x1"));
        }
        let n = self.width as usize * self.height as usize;
        if self.class_grid.len() != n {
            return Err(violation(format!(
                "class grid has {} cells, expected {n}",
                self.class_grid.len()
            )));
        }
        let mut ids = HashSet::new();
        for inst in &self.instances {
            if !ids.insert(inst.instance_id) {
                return Err(violation(format!("duplicate instance id {}", inst.instance_id)));
            }
            if inst.category_id == BACKGROUND {
                return Err(violation("instance uses the background category id"));
            }
            if !inst.bbox.fits(self.width, self.height) {
                return Err(violation(format!(
                    "instance {} bbox {:?} outside {}x{}",
                    inst.instance_id, inst.bbox, self.width, self.height
                )));
            }
        }
        // Boxes grouped by category so each labeled pixel checks only its own class.
        let mut by_cat: Vec<Vec<BBox>> = vec![Vec::new(); 256];
        for inst in &self.instances {
            by_cat[inst.category_id as usize].push(inst.bbox);
        }
        let w = self.width as usize;
        for (i, &c) in self.class_grid.iter().enumerate() {
            if c == BACKGROUND {
                continue;
            }
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            if !by_cat[c as usize].iter().any(|b| b.contains(x, y)) {
                return Err(violation(format!(
                    "pixel ({x}, {y}) labeled {c} lies outside every box of that category"
                )));
            }
        }
        Ok(())
    }

    /// Checks every category id against a vocabulary of `vocab_len` names.
    pub fn validate_vocabulary(&self, vocab_len: usize) -> Result<(), SemanticsError> {
        match self.instances.iter().find(|i| i.category_id as usize >= vocab_len) {
            Some(i) => Err(violation(format!(
                "category {} outside vocabulary of {vocab_len}",
                i.category_id
            ))),
            None => Ok(()),
        }
    }

    /// Keeps only instances of `categories`; other grid cells become background.
    pub fn filtered(&self, categories: &[u8]) -> AsegMap {
        let keep = |c: u8| categories.contains(&c);
        AsegMap {
            width: self.width,
            height: self.height,
            instances: self.instances.iter().filter(|i| keep(i.category_id)).copied().collect(),
            class_grid: self
                .class_grid
                .iter()
                .map(|&c| if c != BACKGROUND && keep(c) { c } else { BACKGROUND })
                .collect(),
        }
    }

    pub fn category_of(&self, instance_id: u16) -> Option<u8> {
        self.instances.iter().find(|i| i.instance_id == instance_id).map(|i| i.category_id)
    }
}

pub type Vertex = (u16, u16);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BsegRegion {
    pub instance_id: u16,
    pub category_id: u8,
    /// Closed contour; the last vertex connects back to the first.
    pub polygon: Vec<Vertex>,
}

/// Fine segmentation: one simple polygon per instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BsegMap {
    pub width: u16,
    pub height: u16,
    pub regions: Vec<BsegRegion>,
}

impl BsegMap {
    pub fn validate(&self) -> Result<(), SemanticsError> {
        if self.width == 0 || self.height == 0 {
            return Err(violation("B-seg dimensions must be at least 1x1"));
        }
        let mut ids = HashSet::new();
        for r in &self.regions {
            if !ids.insert(r.instance_id) {
                return Err(violation(format!("duplicate region id {}", r.instance_id)));
            }
            if r.category_id == BACKGROUND {
                return Err(violation("region uses the background category id"));
            }
            if r.polygon.len() < 3 {
                return Err(violation(format!("region {} has fewer than 3 vertices", r.instance_id)));
            }
            if r.polygon.len() > u16::MAX as usize {
                return Err(violation(format!("region {} has too many vertices", r.instance_id)));
            }
            if let Some(v) = r.polygon.iter().find(|v| v.0 > self.width || v.1 > self.height) {
                return Err(violation(format!(
                    "region {} vertex {v:?} outside {}x{}",
                    r.instance_id, self.width, self.height
                )));
            }
            if !mask::is_simple(&r.polygon) {
                return Err(violation(format!("region {} polygon self-intersects", r.instance_id)));
            }
        }
        Ok(())
    }

    pub fn filtered(&self, categories: &[u8]) -> BsegMap {
        BsegMap {
            width: self.width,
            height: self.height,
            regions: self
                .regions
                .iter()
                .filter(|r| categories.contains(&r.category_id))
                .cloned()
                .collect(),
        }
    }

    pub fn region(&self, instance_id: u16) -> Option<&BsegRegion> {
        self.regions.iter().find(|r| r.instance_id == instance_id)
    }
}

/// ROI crop of one instance; pixels outside its polygon are zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubImage {
    pub instance_id: u16,
    pub bbox: BBox,
    pub pixels: Vec<u8>,
}

impl SubImage {
    pub fn validate(&self) -> Result<(), SemanticsError> {
        if self.bbox.w == 0 || self.bbox.h == 0 {
            return Err(violation(format!("sub-image {} has an empty box", self.instance_id)));
        }
        if self.pixels.len() != self.bbox.area() * 3 {
            return Err(violation(format!(
                "sub-image {} has {} samples for a {}x{} box",
                self.instance_id,
                self.pixels.len(),
                self.bbox.w,
                self.bbox.h
            )));
        }
        Ok(())
    }
}

/// Discriminant of a [`SemanticElement`]; the value is its wire tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ElementKind {
    Text = 0x01,
    Aseg = 0x02,
    Bseg = 0x03,
    Simg = 0x04,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] =
        [ElementKind::Text, ElementKind::Aseg, ElementKind::Bseg, ElementKind::Simg];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Text => "text",
            ElementKind::Aseg => "aseg",
            ElementKind::Bseg => "bseg",
            ElementKind::Simg => "simg",
        }
    }
}

impl std::fmt::Display for ElementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The unit of transmission.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SemanticElement {
    Text(IsText),
    Aseg(AsegMap),
    Bseg(BsegMap),
    Simg(Vec<SubImage>),
}

impl SemanticElement {
    pub fn kind(&self) -> ElementKind {
        match self {
            SemanticElement::Text(_) => ElementKind::Text,
            SemanticElement::Aseg(_) => ElementKind::Aseg,
            SemanticElement::Bseg(_) => ElementKind::Bseg,
            SemanticElement::Simg(_) => ElementKind::Simg,
        }
    }

    pub fn validate(&self) -> Result<(), SemanticsError> {
        match self {
            SemanticElement::Text(_) => Ok(()),
            SemanticElement::Aseg(a) => a.validate(),
            SemanticElement::Bseg(b) => b.validate(),
            SemanticElement::Simg(crops) => crops.iter().try_for_each(SubImage::validate),
        }
    }
}

/// Every explainable semantic extracted from one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticBundle {
    pub image_id: u32,
    pub text: IsText,
    pub aseg: AsegMap,
    pub bseg: BsegMap,
    pub subimages: Vec<SubImage>,
}

impl SemanticBundle {
    pub fn validate(&self) -> Result<(), SemanticsError> {
        self.aseg.validate()?;
        self.bseg.validate()?;
        if (self.aseg.width, self.aseg.height) != (self.bseg.width, self.bseg.height) {
            return Err(SemanticsError::DimensionMismatch(format!(
                "A-seg {}x{} vs B-seg {}x{}",
                self.aseg.width, self.aseg.height, self.bseg.width, self.bseg.height
            )));
        }
        for r in &self.bseg.regions {
            if self.aseg.category_of(r.instance_id) != Some(r.category_id) {
                return Err(violation(format!(
                    "region {} has no matching A-seg instance",
                    r.instance_id
                )));
            }
        }
        for s in &self.subimages {
            s.validate()?;
            let inst = self.aseg.instances.iter().find(|i| i.instance_id == s.instance_id);
            if inst.map(|i| i.bbox) != Some(s.bbox) {
                return Err(violation(format!(
                    "sub-image {} does not match an A-seg instance box",
                    s.instance_id
                )));
            }
        }
        Ok(())
    }

    pub fn dimensions(&self) -> (u16, u16) {
        (self.aseg.width, self.aseg.height)
    }

    /// The full element of `kind`.
    pub fn element(&self, kind: ElementKind) -> SemanticElement {
        match kind {
            ElementKind::Text => SemanticElement::Text(self.text.clone()),
            ElementKind::Aseg => SemanticElement::Aseg(self.aseg.clone()),
            ElementKind::Bseg => SemanticElement::Bseg(self.bseg.clone()),
            ElementKind::Simg => SemanticElement::Simg(self.subimages.clone()),
        }
    }

    /// The element of `kind` restricted to instances of `categories`.
    pub fn element_filtered(&self, kind: ElementKind, categories: &[u8]) -> SemanticElement {
        match kind {
            ElementKind::Text => SemanticElement::Text(self.text.clone()),
            ElementKind::Aseg => SemanticElement::Aseg(self.aseg.filtered(categories)),
            ElementKind::Bseg => SemanticElement::Bseg(self.bseg.filtered(categories)),
            ElementKind::Simg => SemanticElement::Simg(
                self.subimages
                    .iter()
                    .filter(|s| {
                        self.aseg
                            .category_of(s.instance_id)
                            .is_some_and(|c| categories.contains(&c))
                    })
                    .cloned()
                    .collect(),
            ),
        }
    }
}
