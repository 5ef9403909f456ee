//! Corpus directories and annotation ingestion.
//!
//! ```text
//! DIR/annotations.json          {images: [{id, width, height, caption, instances:
//!                                 [{instance_id, category_id, bbox: [x, y, w, h],
//!                                   polygon: [[x, y], ...] | null}]}],
//!                                categories: [names]}
//! DIR/embeddings.txt            word vectors ("count dim" header)
//! DIR/gazetteer.txt             one noun per line
//! DIR/images/NNNNNN.ppm         ground truth, optional for ingested data
//! DIR/semantics/NNNNNN_KIND.bin encoded elements (generated corpora only)
//! DIR/corpus.json               generator config and seed (generated corpora only)
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::synthetic::{CorpusConfig, SyntheticCorpus};
use super::{Corpus, CorpusImage, HarnessError, Knowledge};
use crate::correlation::Gazetteer;
use crate::embeddings::{ClassVocabulary, Embeddings};
use crate::semantics::mask::{is_simple, paint_polygon};
use crate::semantics::ppm::{read_ppm, write_ppm};
use crate::semantics::{
    encode_element, extract_subimages, AsegInstance, AsegMap, BBox, BsegMap, BsegRegion, ElementKind, ImageRaster,
    IsText, SemanticBundle, BACKGROUND, MAX_TEXT_BYTES,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedInstance {
    pub instance_id: u16,
    pub category_id: u8,
    pub bbox: [u16; 4],
    pub polygon: Option<Vec<[u16; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub id: u32,
    pub width: u16,
    pub height: u16,
    pub caption: String,
    pub instances: Vec<AnnotatedInstance>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<AnnotatedImage>,
    pub categories: Vec<String>,
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Schema { pointer: pointer.into(), message: message.into() }
}

fn get<'v>(v: &'v Value, key: &str, at: &str) -> Result<(&'v Value, String), HarnessError> {
    let ptr = format!("{at}/{key}");
    v.get(key).map(|x| (x, ptr.clone())).ok_or_else(|| schema(ptr, "missing field"))
}

fn uint(v: &Value, ptr: &str, max: u64) -> Result<u64, HarnessError> {
    v.as_u64()
        .filter(|&x| x <= max)
        .ok_or_else(|| schema(ptr, format!("expected an integer in 0..={max}")))
}

fn array<'v>(v: &'v Value, ptr: &str) -> Result<&'v Vec<Value>, HarnessError> {
    v.as_array().ok_or_else(|| schema(ptr, "expected an array"))
}

fn parse_instance(v: &Value, at: &str) -> Result<AnnotatedInstance, HarnessError> {
    let (id, p) = get(v, "instance_id", at)?;
    let instance_id = uint(id, &p, u16::MAX as u64)? as u16;
    let (cat, p) = get(v, "category_id", at)?;
    let category_id = uint(cat, &p, 254)? as u8;
    let (bb, p) = get(v, "bbox", at)?;
    let bb_arr = array(bb, &p)?;
    if bb_arr.len() != 4 {
        return Err(schema(p, "bbox must be [x, y, w, h]"));
    }
    let mut bbox = [0u16; 4];
    for (i, x) in bb_arr.iter().enumerate() {
        bbox[i] = uint(x, &format!("{p}/{i}"), u16::MAX as u64)? as u16;
    }
    let polygon = match v.get("polygon") {
        None | Some(Value::Null) => None,
        Some(poly) => {
            let p = format!("{at}/polygon");
            let mut out = Vec::new();
            for (i, pt) in array(poly, &p)?.iter().enumerate() {
                let pp = format!("{p}/{i}");
                let xy = array(pt, &pp)?;
                if xy.len() != 2 {
                    return Err(schema(pp, "vertex must be [x, y]"));
                }
                out.push([
                    uint(&xy[0], &format!("{pp}/0"), u16::MAX as u64)? as u16,
                    uint(&xy[1], &format!("{pp}/1"), u16::MAX as u64)? as u16,
                ]);
            }
            Some(out)
        }
    };
    Ok(AnnotatedInstance { instance_id, category_id, bbox, polygon })
}

fn check_image(img: &AnnotatedImage, n_categories: usize, at: &str) -> Result<(), HarnessError> {
    if img.width == 0 || img.height == 0 {
        return Err(schema(format!("{at}/width"), "dimensions must be positive"));
    }
    if img.caption.trim().is_empty() || img.caption.len() > MAX_TEXT_BYTES {
        return Err(schema(format!("{at}/caption"), format!("caption must be 1..={MAX_TEXT_BYTES} bytes")));
    }
    for (j, inst) in img.instances.iter().enumerate() {
        let ip = format!("{at}/instances/{j}");
        if img.instances[..j].iter().any(|o| o.instance_id == inst.instance_id) {
            return Err(schema(format!("{ip}/instance_id"), "duplicate instance id"));
        }
        if inst.category_id as usize >= n_categories {
            return Err(schema(format!("{ip}/category_id"), "category id outside the category list"));
        }
        let [x, y, w, h] = inst.bbox;
        if w == 0 || h == 0 || !BBox::new(x, y, w, h).fits(img.width, img.height) {
            return Err(schema(format!("{ip}/bbox"), "box is empty or leaves the image"));
        }
        if let Some(poly) = &inst.polygon {
            let verts: Vec<(u16, u16)> = poly.iter().map(|p| (p[0], p[1])).collect();
            if verts.iter().any(|&(vx, vy)| vx < x || vy < y || vx > x + w || vy > y + h) {
                return Err(schema(format!("{ip}/polygon"), "vertex outside the instance box"));
            }
            if !is_simple(&verts) {
                return Err(schema(format!("{ip}/polygon"), "polygon is not simple"));
            }
        }
    }
    Ok(())
}

/// Parses and validates an annotation document.
pub fn parse_annotations(text: &str) -> Result<AnnotationSet, HarnessError> {
    let root: Value = serde_json::from_str(text).map_err(|e| schema("", format!("invalid JSON: {e}")))?;
    let (cats, p) = get(&root, "categories", "")?;
    let categories = array(cats, &p)?
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.as_str()
                .map(str::to_lowercase)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| schema(format!("/categories/{i}"), "expected a non-empty string"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if categories.len() > ClassVocabulary::MAX_CLASSES {
        return Err(schema("/categories", "more than 255 categories"));
    }
    let (imgs, p) = get(&root, "images", "")?;
    let mut images = Vec::new();
    for (i, v) in array(imgs, &p)?.iter().enumerate() {
        let at = format!("/images/{i}");
        let (id, p) = get(v, "id", &at)?;
        let id = uint(id, &p, u32::MAX as u64)? as u32;
        let (w, p) = get(v, "width", &at)?;
        let width = uint(w, &p, u16::MAX as u64)? as u16;
        let (h, p) = get(v, "height", &at)?;
        let height = uint(h, &p, u16::MAX as u64)? as u16;
        let (c, p) = get(v, "caption", &at)?;
        let caption = c.as_str().ok_or_else(|| schema(p, "expected a string"))?.to_string();
        let (inst, p) = get(v, "instances", &at)?;
        let instances = array(inst, &p)?
            .iter()
            .enumerate()
            .map(|(j, x)| parse_instance(x, &format!("{at}/instances/{j}")))
            .collect::<Result<Vec<_>, _>>()?;
        let img = AnnotatedImage { id, width, height, caption, instances };
        check_image(&img, categories.len(), &at)?;
        if images.iter().any(|o: &AnnotatedImage| o.id == id) {
            return Err(schema(format!("{at}/id"), "duplicate image id"));
        }
        images.push(img);
    }
    Ok(AnnotationSet { images, categories })
}

pub fn ingest_annotations(path: &Path) -> Result<AnnotationSet, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse_annotations(&text)
}

impl AnnotationSet {
    /// Builds the semantic bundle of image `index`. The class grid is
    /// rasterized from the polygons (boxes for instances without one) in
    /// instance order; sub-images need the raster.
    pub fn bundle(&self, index: usize, raster: Option<&ImageRaster>) -> Result<SemanticBundle, HarnessError> {
        let img = &self.images[index];
        let at = format!("/images/{index}");
        let (w, h) = (img.width, img.height);
        let mut grid = vec![BACKGROUND; w as usize * h as usize];
        let mut instances = Vec::new();
        let mut regions = Vec::new();
        for inst in &img.instances {
            let [x, y, bw, bh] = inst.bbox;
            let bbox = BBox::new(x, y, bw, bh);
            match &inst.polygon {
                Some(poly) => {
                    let verts: Vec<(u16, u16)> = poly.iter().map(|p| (p[0], p[1])).collect();
                    paint_polygon(&mut grid, w, &verts, bbox, inst.category_id);
                    regions.push(BsegRegion {
                        instance_id: inst.instance_id,
                        category_id: inst.category_id,
                        polygon: verts,
                    });
                }
                None => {
                    for py in y..y + bh {
                        let row = py as usize * w as usize;
                        grid[row + x as usize..row + (x + bw) as usize].fill(inst.category_id);
                    }
                }
            }
            instances.push(AsegInstance { instance_id: inst.instance_id, category_id: inst.category_id, bbox });
        }
        let aseg = AsegMap { width: w, height: h, instances, class_grid: grid };
        let bseg = BsegMap { width: w, height: h, regions };
        let subimages = match raster {
            Some(r) => extract_subimages(r, &aseg, &bseg, None).map_err(|e| schema(at.clone(), e.to_string()))?,
            None => Vec::new(),
        };
        let text = IsText::new(img.caption.clone()).map_err(|e| schema(format!("{at}/caption"), e.to_string()))?;
        let bundle = SemanticBundle { image_id: img.id, text, aseg, bseg, subimages };
        bundle.validate().map_err(|e| schema(at, e.to_string()))?;
        Ok(bundle)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotations serialize")
    }
}

impl AnnotatedImage {
    pub fn from_bundle(bundle: &SemanticBundle) -> Self {
        let instances = bundle
            .aseg
            .instances
            .iter()
            .map(|i| AnnotatedInstance {
                instance_id: i.instance_id,
                category_id: i.category_id,
                bbox: [i.bbox.x, i.bbox.y, i.bbox.w, i.bbox.h],
                polygon: bundle.bseg.region(i.instance_id).map(|r| r.polygon.iter().map(|&(x, y)| [x, y]).collect()),
            })
            .collect();
        Self {
            id: bundle.image_id,
            width: bundle.aseg.width,
            height: bundle.aseg.height,
            caption: bundle.text.as_str().to_string(),
            instances,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

#[derive(Serialize, Deserialize)]
struct CorpusManifest {
    generator: String,
    seed: u64,
    config: CorpusConfig,
}

pub fn image_file(id: u32) -> String {
    format!("{id:06}.ppm")
}

/// Writes every image of `corpus` with its semantics into `dir`.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<(), HarnessError> {
    use rayon::prelude::*;
    for sub in ["images", "semantics"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| io_err(dir, e))?;
    }
    let annotated = (0..corpus.len())
        .into_par_iter()
        .map(|i| -> Result<AnnotatedImage, HarnessError> {
            let img = corpus.generate(i)?;
            let id = img.bundle.image_id;
            if let Some(r) = &img.raster {
                let p = dir.join("images").join(image_file(id));
                write_ppm(&p, r).map_err(|e| io_err(&p, e))?;
            }
            for kind in ElementKind::ALL {
                let p = dir.join("semantics").join(format!("{id:06}_{}.bin", kind.name()));
                write(&p, encode_element(&img.bundle.element(kind))?)?;
            }
            Ok(AnnotatedImage::from_bundle(&img.bundle))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let set = AnnotationSet { images: annotated, categories: corpus.categories().to_vec() };
    write(&dir.join("annotations.json"), set.to_json())?;
    let k = corpus.knowledge();
    write(&dir.join("embeddings.txt"), k.table.to_text())?;
    write(&dir.join("gazetteer.txt"), k.nouns.to_text())?;
    let manifest = CorpusManifest { generator: "synthetic".into(), seed: corpus.seed(), config: corpus.config().clone() };
    write(&dir.join("corpus.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(())
}

/// A corpus directory, loaded lazily image by image.
#[derive(Debug)]
pub struct DirCorpus {
    dir: PathBuf,
    annotations: AnnotationSet,
    presence: Vec<Vec<u8>>,
    knowledge: Knowledge,
}

impl DirCorpus {
    pub fn open(dir: &Path) -> Result<Self, HarnessError> {
        let annotations = ingest_annotations(&dir.join("annotations.json"))?;
        let table = Embeddings::load(&dir.join("embeddings.txt"))?;
        let nouns_path = dir.join("gazetteer.txt");
        let nouns = Gazetteer::load(&nouns_path).map_err(|e| io_err(&nouns_path, e))?;
        let vocab = ClassVocabulary::new(annotations.categories.clone(), &table)?;
        let presence = annotations
            .images
            .iter()
            .map(|img| {
                let mut p: Vec<u8> = img.instances.iter().map(|i| i.category_id).collect();
                p.sort_unstable();
                p.dedup();
                p
            })
            .collect();
        Ok(Self { dir: dir.to_path_buf(), annotations, presence, knowledge: Knowledge { table, vocab, nouns } })
    }

    pub fn annotations(&self) -> &AnnotationSet {
        &self.annotations
    }
}

impl Corpus for DirCorpus {
    fn categories(&self) -> &[String] {
        &self.annotations.categories
    }

    fn len(&self) -> usize {
        self.annotations.images.len()
    }

    fn presence(&self, image: usize) -> &[u8] {
        &self.presence[image]
    }

    fn load(&self, image: usize) -> Result<CorpusImage, HarnessError> {
        let p = self.dir.join("images").join(image_file(self.annotations.images[image].id));
        let raster = if p.exists() { Some(read_ppm(&p).map_err(|e| io_err(&p, e))?) } else { None };
        let bundle = self.annotations.bundle(image, raster.as_ref())?;
        Ok(CorpusImage { bundle, raster })
    }

    fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{"categories": ["person", "dog"], "images": [
        {"id": 5, "width": 10, "height": 8, "caption": "a person",
         "instances": [{"instance_id": 1, "category_id": 0, "bbox": [1, 1, 4, 4],
                        "polygon": [[1, 1], [5, 1], [5, 5], [1, 5]]},
                       {"instance_id": 2, "category_id": 1, "bbox": [6, 2, 3, 3], "polygon": null}]}]}"#;

    #[test]
    fn parses_and_builds() {
        let set = parse_annotations(DOC).unwrap();
        let b = set.bundle(0, None).unwrap();
        assert_eq!(b.aseg.class_grid.iter().filter(|&&c| c == 0).count(), 16);
        assert_eq!(b.aseg.class_grid.iter().filter(|&&c| c == 1).count(), 9);
        assert_eq!(b.bseg.regions.len(), 1);
    }

    #[test]
    fn pointer_errors() {
        let cases = [
            (DOC.replace(r#""bbox": [1, 1, 4, 4],"#, ""), "/images/0/instances/0/bbox"),
            (DOC.replace(r#""category_id": 1"#, r#""category_id": 7"#), "/images/0/instances/1/category_id"),
            (DOC.replace("[6, 2, 3, 3]", "[6, 2, 9, 3]"), "/images/0/instances/1/bbox"),
            (DOC.replace("[5, 5], [1, 5]", "[1, 5], [5, 5]"), "/images/0/instances/0/polygon"),
            (DOC.replace(r#""width": 10"#, r#""width": "ten""#), "/images/0/width"),
            (DOC.replace(r#""dog""#, "3"), "/categories/1"),
        ];
        for (doc, want) in cases {
            match parse_annotations(&doc) {
                Err(HarnessError::Schema { pointer, .. }) => assert_eq!(pointer, want),
                other => panic!("{want}: {other:?}"),
            }
        }
    }
}
