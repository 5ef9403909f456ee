//! Receiver-side image reconstruction.
//!
//! [`render_reference`] is a deterministic, rule-based renderer over whatever
//! semantics arrived. Stages refine each other: a TEXT-only render is a flat
//! background; A-seg boxes are filled with the category color for instances
//! that have no received B-seg polygon; B-seg polygons are filled exactly; and
//! sub-image pixels are pasted inside the polygon masks.
//!
//! [`reconstruct_external`] hands the same semantics to an external process
//! through a file exchange:
//!
//! ```text
//! WORKDIR/request/manifest.json   {image_id, width, height, elements: [{kind, file}], palette}
//! WORKDIR/request/<kind>.bin      element bytes, as produced by encode_element
//! WORKDIR/response/image.ppm      written by the tool (binary P6)
//! ```
//!
//! The tool is run as `command args... WORKDIR`.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::embeddings::ClassVocabulary;
use crate::semantics::mask::polygon_mask;
use crate::semantics::ppm::{read_ppm, write_ppm};
use crate::semantics::{
    decode_element, encode_element, AsegMap, BsegMap, ElementKind, ImageRaster, IsText, SemanticElement,
    SemanticsError, SubImage,
};

pub const BACKGROUND_RGB: [u8; 3] = [128, 128, 128];
const PALETTE_SEED: u64 = 0x5EC0_C0102;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("image dimensions unknown: no segmentation element received and none supplied")]
    DimensionUnknown,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("external tool failed: {0}")]
    ExternalToolFailure(String),
    #[error("external tool exceeded {0:?}")]
    Timeout(Duration),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Category colors. Each color is the low 24 bits of a seeded hash of the
/// category name, so it depends only on the name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette(Vec<[u8; 3]>);

impl Palette {
    pub fn new(vocab: &ClassVocabulary) -> Self {
        Self(vocab.names().iter().map(|n| color_of(n)).collect())
    }

    pub fn from_colors(colors: Vec<[u8; 3]>) -> Self {
        Self(colors)
    }

    /// Color of `category`. Ids outside the palette get the background color.
    pub fn color(&self, category: u8) -> [u8; 3] {
        self.0.get(category as usize).copied().unwrap_or(BACKGROUND_RGB)
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.0
    }
}

pub fn color_of(name: &str) -> [u8; 3] {
    let h = xxh3_64_with_seed(name.as_bytes(), PALETTE_SEED);
    [(h >> 16) as u8, (h >> 8) as u8, h as u8]
}

/// The elements that actually arrived during one session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReceivedSemantics {
    pub image_id: u32,
    pub text: Option<IsText>,
    pub aseg: Option<AsegMap>,
    pub bseg: Option<BsegMap>,
    pub simg: Option<Vec<SubImage>>,
}

impl ReceivedSemantics {
    pub fn new(image_id: u32) -> Self {
        Self { image_id, ..Self::default() }
    }

    /// Stores `element`, replacing an earlier element of the same kind.
    pub fn insert(&mut self, element: SemanticElement) {
        match element {
            SemanticElement::Text(t) => self.text = Some(t),
            SemanticElement::Aseg(a) => self.aseg = Some(a),
            SemanticElement::Bseg(b) => self.bseg = Some(b),
            SemanticElement::Simg(s) => self.simg = Some(s),
        }
    }

    pub fn kinds(&self) -> Vec<ElementKind> {
        let mut k = Vec::new();
        if self.text.is_some() {
            k.push(ElementKind::Text);
        }
        if self.aseg.is_some() {
            k.push(ElementKind::Aseg);
        }
        if self.bseg.is_some() {
            k.push(ElementKind::Bseg);
        }
        if self.simg.is_some() {
            k.push(ElementKind::Simg);
        }
        k
    }

    pub fn elements(&self) -> Vec<SemanticElement> {
        let mut out = Vec::new();
        if let Some(t) = &self.text {
            out.push(SemanticElement::Text(t.clone()));
        }
        if let Some(a) = &self.aseg {
            out.push(SemanticElement::Aseg(a.clone()));
        }
        if let Some(b) = &self.bseg {
            out.push(SemanticElement::Bseg(b.clone()));
        }
        if let Some(s) = &self.simg {
            out.push(SemanticElement::Simg(s.clone()));
        }
        out
    }

    /// Dimensions carried by a segmentation element, if one arrived.
    pub fn dimensions(&self) -> Option<(u16, u16)> {
        self.aseg
            .as_ref()
            .map(|a| (a.width, a.height))
            .or_else(|| self.bseg.as_ref().map(|b| (b.width, b.height)))
    }

    /// Dimensions from the segmentation elements, falling back to `given`.
    pub fn resolve_dimensions(&self, given: Option<(u16, u16)>) -> Result<(u16, u16), ReconstructError> {
        self.dimensions().or(given).ok_or(ReconstructError::DimensionUnknown)
    }
}

fn fill_box(img: &mut ImageRaster, bbox: crate::semantics::BBox, rgb: [u8; 3]) {
    for y in bbox.y as u32..bbox.y as u32 + bbox.h as u32 {
        for x in bbox.x as u32..bbox.x as u32 + bbox.w as u32 {
            img.set_pixel(x, y, rgb);
        }
    }
}

fn check_dims(what: &str, got: (u16, u16), want: (u16, u16)) -> Result<(), ReconstructError> {
    if got != want {
        return Err(ReconstructError::DimensionMismatch(format!(
            "{what} is {}x{}, canvas is {}x{}",
            got.0, got.1, want.0, want.1
        )));
    }
    Ok(())
}

pub fn render_reference(
    received: &ReceivedSemantics,
    width: u16,
    height: u16,
    palette: &Palette,
) -> Result<ImageRaster, ReconstructError> {
    let dims = (width, height);
    let mut img = ImageRaster::filled(width, height, BACKGROUND_RGB);
    let has_polygon = |id: u16| received.bseg.as_ref().is_some_and(|b| b.region(id).is_some());

    if let Some(aseg) = &received.aseg {
        check_dims("A-seg", (aseg.width, aseg.height), dims)?;
        for inst in aseg.instances.iter().filter(|i| !has_polygon(i.instance_id)) {
            fill_box(&mut img, inst.bbox, palette.color(inst.category_id));
        }
    }
    if let Some(bseg) = &received.bseg {
        check_dims("B-seg", (bseg.width, bseg.height), dims)?;
        for region in &bseg.regions {
            let bbox = polygon_bbox(&region.polygon);
            let rgb = palette.color(region.category_id);
            for (i, inside) in polygon_mask(&region.polygon, bbox).into_iter().enumerate() {
                if inside {
                    let (x, y) = (bbox.x as u32 + (i % bbox.w as usize) as u32, bbox.y as u32 + (i / bbox.w as usize) as u32);
                    img.set_pixel(x, y, rgb);
                }
            }
        }
    }
    if let Some(subs) = &received.simg {
        for sub in subs {
            let b = sub.bbox;
            if !b.fits(width, height) {
                return Err(ReconstructError::DimensionMismatch(format!(
                    "sub-image {} box exceeds the {}x{} canvas",
                    sub.instance_id, width, height
                )));
            }
            let mask = match received.bseg.as_ref().and_then(|bs| bs.region(sub.instance_id)) {
                Some(r) => polygon_mask(&r.polygon, b),
                None => vec![true; b.area()],
            };
            for (i, (px, inside)) in sub.pixels.chunks_exact(3).zip(mask).enumerate() {
                if inside {
                    let (x, y) = (b.x as u32 + (i % b.w as usize) as u32, b.y as u32 + (i / b.w as usize) as u32);
                    img.set_pixel(x, y, [px[0], px[1], px[2]]);
                }
            }
        }
    }
    Ok(img)
}

/// Renders with dimensions taken from the received elements, or `given`.
pub fn render_received(
    received: &ReceivedSemantics,
    given: Option<(u16, u16)>,
    palette: &Palette,
) -> Result<ImageRaster, ReconstructError> {
    let (w, h) = received.resolve_dimensions(given)?;
    render_reference(received, w, h, palette)
}

/// Smallest box covering every pixel a polygon can touch. Vertices may sit on
/// the far image edge, so the box never extends past it.
fn polygon_bbox(polygon: &[(u16, u16)]) -> crate::semantics::BBox {
    let x0 = polygon.iter().map(|v| v.0).min().unwrap_or(0);
    let x1 = polygon.iter().map(|v| v.0).max().unwrap_or(0);
    let y0 = polygon.iter().map(|v| v.1).min().unwrap_or(0);
    let y1 = polygon.iter().map(|v| v.1).max().unwrap_or(0);
    crate::semantics::BBox::new(x0, y0, x1 - x0, y1 - y0)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub kind: ElementKind,
    pub file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RequestManifest {
    pub image_id: u32,
    pub width: u16,
    pub height: u16,
    pub elements: Vec<ManifestEntry>,
    pub palette: Vec<[u8; 3]>,
}

#[derive(Clone, Debug)]
pub struct ExternalConfig {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalConfig {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self { program: program.into(), args: Vec::new(), timeout: Duration::from_secs(30) }
    }
}

/// Writes the request bundle for `received` into `workdir/request/`.
pub fn write_request(
    received: &ReceivedSemantics,
    dims: (u16, u16),
    palette: &Palette,
    workdir: &Path,
) -> Result<RequestManifest, ReconstructError> {
    let req = workdir.join("request");
    std::fs::create_dir_all(&req)?;
    let mut elements = Vec::new();
    for el in received.elements() {
        let file = format!("{}.bin", el.kind().name());
        std::fs::write(req.join(&file), encode_element(&el)?)?;
        elements.push(ManifestEntry { kind: el.kind(), file });
    }
    let manifest = RequestManifest {
        image_id: received.image_id,
        width: dims.0,
        height: dims.1,
        elements,
        palette: palette.colors().to_vec(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| std::io::Error::other(e.to_string()))?;
    std::fs::write(req.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Loads a request bundle back into semantics, dimensions and palette.
pub fn read_request(workdir: &Path) -> Result<(RequestManifest, ReceivedSemantics), ReconstructError> {
    let req = workdir.join("request");
    let raw = std::fs::read(req.join("manifest.json"))?;
    let manifest: RequestManifest =
        serde_json::from_slice(&raw).map_err(|e| ReconstructError::BadResponse(format!("manifest: {e}")))?;
    let mut received = ReceivedSemantics::new(manifest.image_id);
    for entry in &manifest.elements {
        if entry.file.contains('/') || entry.file.contains("..") {
            return Err(ReconstructError::BadResponse(format!("element file {:?} escapes the request dir", entry.file)));
        }
        let el = decode_element(&std::fs::read(req.join(&entry.file))?)?;
        if el.kind() != entry.kind {
            return Err(ReconstructError::BadResponse(format!("{} holds a {} element", entry.file, el.kind())));
        }
        received.insert(el);
    }
    Ok((manifest, received))
}

/// Reference implementation of the tool side: renders the request in
/// `workdir` and writes `response/image.ppm`.
pub fn serve_request(workdir: &Path) -> Result<ImageRaster, ReconstructError> {
    let (manifest, received) = read_request(workdir)?;
    let img = render_reference(&received, manifest.width, manifest.height, &Palette::from_colors(manifest.palette))?;
    let resp = workdir.join("response");
    std::fs::create_dir_all(&resp)?;
    write_ppm(&resp.join("image.ppm"), &img)?;
    Ok(img)
}

pub fn reconstruct_external(
    received: &ReceivedSemantics,
    dims: (u16, u16),
    palette: &Palette,
    workdir: &Path,
    config: &ExternalConfig,
) -> Result<ImageRaster, ReconstructError> {
    let response = workdir.join("response").join("image.ppm");
    if response.exists() {
        std::fs::remove_file(&response)?;
    }
    write_request(received, dims, palette, workdir)?;
    let mut child = Command::new(&config.program)
        .args(&config.args)
        .arg(workdir)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| ReconstructError::ExternalToolFailure(format!("spawn {}: {e}", config.program.display())))?;
    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() >= config.timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ReconstructError::Timeout(config.timeout));
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    if !status.success() {
        let mut err = String::new();
        if let Some(mut s) = child.stderr.take() {
            use std::io::Read;
            let _ = s.read_to_string(&mut err);
        }
        return Err(ReconstructError::ExternalToolFailure(format!("{status}: {}", err.trim())));
    }
    let img = read_ppm(&response).map_err(|e| ReconstructError::BadResponse(e.to_string()))?;
    if (img.width(), img.height()) != dims {
        return Err(ReconstructError::BadResponse(format!(
            "image is {}x{}, expected {}x{}",
            img.width(),
            img.height(),
            dims.0,
            dims.1
        )));
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{AsegInstance, BBox, BsegRegion, BACKGROUND};

    fn palette() -> Palette {
        Palette::from_colors(vec![[10, 200, 30], [250, 0, 90]])
    }

    fn scene() -> (AsegMap, BsegMap) {
        let (w, h) = (8u16, 6u16);
        let mut grid = vec![BACKGROUND; 48];
        for y in 1..5 {
            for x in 1..5 {
                grid[y * 8 + x] = 0;
            }
        }
        let aseg = AsegMap {
            width: w,
            height: h,
            instances: vec![AsegInstance { instance_id: 1, category_id: 0, bbox: BBox::new(1, 1, 4, 4) }],
            class_grid: grid,
        };
        let bseg = BsegMap {
            width: w,
            height: h,
            regions: vec![BsegRegion { instance_id: 1, category_id: 0, polygon: vec![(1, 1), (5, 1), (1, 5)] }],
        };
        (aseg, bseg)
    }

    #[test]
    fn text_only_is_background() {
        let mut r = ReceivedSemantics::new(0);
        r.insert(SemanticElement::Text(IsText::new("a cat").unwrap()));
        assert!(matches!(render_received(&r, None, &palette()), Err(ReconstructError::DimensionUnknown)));
        let img = render_received(&r, Some((4, 3)), &palette()).unwrap();
        assert!(img.pixels().chunks(3).all(|p| p == BACKGROUND_RGB));
    }

    #[test]
    fn full_frame_aseg_is_solid() {
        let aseg = AsegMap {
            width: 5,
            height: 4,
            instances: vec![AsegInstance { instance_id: 0, category_id: 1, bbox: BBox::full(5, 4) }],
            class_grid: vec![1; 20],
        };
        let mut r = ReceivedSemantics::new(0);
        r.insert(SemanticElement::Aseg(aseg));
        let img = render_received(&r, None, &palette()).unwrap();
        assert!(img.pixels().chunks(3).all(|p| p == [250, 0, 90]));
    }

    #[test]
    fn polygon_replaces_box() {
        let (aseg, bseg) = scene();
        let mut r = ReceivedSemantics::new(0);
        r.insert(SemanticElement::Aseg(aseg));
        let boxed = render_received(&r, None, &palette()).unwrap();
        assert_eq!(boxed.pixel(4, 4), [10, 200, 30]);
        r.insert(SemanticElement::Bseg(bseg));
        let poly = render_received(&r, None, &palette()).unwrap();
        assert_eq!(poly.pixel(1, 1), [10, 200, 30]);
        assert_eq!(poly.pixel(4, 4), BACKGROUND_RGB);
        assert_eq!(poly.pixel(0, 0), BACKGROUND_RGB);
    }

    #[test]
    fn mismatched_dims() {
        let (aseg, mut bseg) = scene();
        bseg.width = 9;
        let mut r = ReceivedSemantics::new(0);
        r.insert(SemanticElement::Aseg(aseg));
        r.insert(SemanticElement::Bseg(bseg));
        assert!(matches!(render_received(&r, None, &palette()), Err(ReconstructError::DimensionMismatch(_))));
    }

    #[test]
    fn palette_is_name_derived() {
        assert_eq!(color_of("person"), color_of("person"));
        assert_ne!(color_of("person"), color_of("dog"));
    }

    #[test]
    fn request_round_trip() {
        let (aseg, bseg) = scene();
        let mut r = ReceivedSemantics::new(7);
        r.insert(SemanticElement::Aseg(aseg));
        r.insert(SemanticElement::Bseg(bseg));
        let dir = tempfile::tempdir().unwrap();
        write_request(&r, (8, 6), &palette(), dir.path()).unwrap();
        let (m, back) = read_request(dir.path()).unwrap();
        assert_eq!(m.image_id, 7);
        assert_eq!(back, r);
        let served = serve_request(dir.path()).unwrap();
        assert_eq!(served, render_received(&r, None, &palette()).unwrap());
    }
}
