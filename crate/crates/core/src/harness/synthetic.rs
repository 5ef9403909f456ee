//! Seeded synthetic corpus.
//!
//! Category presence is stratified: category `c` occupies the `m = round(p n)`
//! consecutive slots `c m .. c m + m` of a ring of `n` images, and the ring is
//! then shuffled. Every category therefore appears in exactly `m` images and
//! no image holds a category twice.
//!
//! Each instance is a star-shaped polygon in its own grid cell, filled with
//! the category's palette color plus texture that only ever pushes a channel
//! further from the background gray. With polygons covering at least half of
//! their box this guarantees that each reconstruction stage is at least as
//! close to the ground truth as the previous one.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::names::{category_names, EXTRA_NOUNS, PERSON_SYNONYMS};
use super::{Corpus, CorpusImage, HarnessError, Knowledge};
use crate::correlation::Gazetteer;
use crate::embeddings::{ClassVocabulary, Embeddings};
use crate::reconstruct::{color_of, BACKGROUND_RGB};
use crate::semantics::mask::{is_simple, paint_polygon, polygon_mask};
use crate::semantics::{
    extract_subimages, AsegInstance, AsegMap, BBox, BsegMap, BsegRegion, ImageRaster, IsText, SemanticBundle, Vertex,
    BACKGROUND, MAX_TEXT_BYTES,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_images: usize,
    pub n_categories: usize,
    /// Fraction of images each category appears in.
    pub presence: f64,
    pub width: u16,
    pub height: u16,
    /// Inclusive range of instances drawn per present category.
    pub instances_per_category: (u8, u8),
    /// Largest per-channel texture offset.
    pub texture_amplitude: u8,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_images: 4000,
            n_categories: 80,
            presence: 0.10,
            width: 256,
            height: 256,
            instances_per_category: (1, 1),
            texture_amplitude: 48,
        }
    }
}

impl CorpusConfig {
    /// Images per category.
    pub fn images_per_category(&self) -> usize {
        (self.presence * self.n_images as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::ConfigInvalid(m));
        if self.n_images == 0 {
            return bad("n_images must be positive".into());
        }
        if self.n_categories == 0 || self.n_categories > ClassVocabulary::MAX_CLASSES {
            return bad(format!("n_categories {} outside 1..=255", self.n_categories));
        }
        if !(self.presence > 0.0 && self.presence <= 1.0) {
            return bad(format!("presence {} outside (0, 1]", self.presence));
        }
        let (lo, hi) = self.instances_per_category;
        if lo == 0 || lo > hi {
            return bad(format!("instances_per_category {lo}..={hi} is empty or includes 0"));
        }
        let per_image = (self.n_categories * self.images_per_category()).div_ceil(self.n_images) * hi as usize;
        let g = grid_side(per_image);
        if (self.width as usize) / g < 8 || (self.height as usize) / g < 8 {
            return bad(format!(
                "{}x{} is too small for up to {per_image} instances per image",
                self.width, self.height
            ));
        }
        if per_image > u16::MAX as usize {
            return bad("too many instances per image".into());
        }
        Ok(())
    }
}

fn grid_side(n: usize) -> usize {
    let mut g = 1;
    while g * g < n {
        g += 1;
    }
    g
}

/// Lazily generated corpus: presence is computed up front, images on demand.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    config: CorpusConfig,
    seed: u64,
    categories: Vec<String>,
    presence: Vec<Vec<u8>>,
    knowledge: Knowledge,
}

impl SyntheticCorpus {
    pub fn new(config: CorpusConfig, seed: u64) -> Result<Self, HarnessError> {
        config.validate()?;
        let categories = category_names(config.n_categories);
        let n = config.n_images;
        let m = config.images_per_category();
        let mut ring: Vec<usize> = (0..n).collect();
        ring.shuffle(&mut stream_rng(seed, 0));
        let mut presence = vec![Vec::new(); n];
        for c in 0..config.n_categories {
            for j in 0..m {
                presence[ring[(c * m + j) % n]].push(c as u8);
            }
        }
        presence.iter_mut().for_each(|p| p.sort_unstable());
        let knowledge = synthetic_knowledge(&categories, seed)?;
        Ok(Self { config, seed, categories, presence, knowledge })
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generate(&self, index: usize) -> Result<CorpusImage, HarnessError> {
        generate_image(&self.config, &self.categories, &self.presence[index], index as u32, self.seed)
    }
}

impl Corpus for SyntheticCorpus {
    fn categories(&self) -> &[String] {
        &self.categories
    }

    fn len(&self) -> usize {
        self.presence.len()
    }

    fn presence(&self, image: usize) -> &[u8] {
        &self.presence[image]
    }

    fn load(&self, image: usize) -> Result<CorpusImage, HarnessError> {
        self.generate(image)
    }

    fn knowledge(&self) -> &Knowledge {
        &self.knowledge
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Orthonormal word vectors: every category and extra noun gets its own
/// axis; the person synonyms sit at cosine 2/sqrt(5) from "person".
pub fn synthetic_knowledge(categories: &[String], seed: u64) -> Result<Knowledge, HarnessError> {
    let mut words: Vec<String> = categories.to_vec();
    for w in PERSON_SYNONYMS.iter().chain(EXTRA_NOUNS.iter()) {
        if !words.iter().any(|c| c == w) {
            words.push(w.to_string());
        }
    }
    let basis = orthonormal_basis(words.len(), &mut stream_rng(seed, u64::MAX));
    let person = categories.iter().position(|c| c == "person");
    let vectors = words.iter().enumerate().map(|(i, w)| {
        let mut v = basis[i].clone();
        if let (Some(p), true) = (person, PERSON_SYNONYMS.contains(&w.as_str())) {
            v.iter_mut().zip(&basis[p]).for_each(|(x, b)| *x += 2.0 * b);
        }
        (w.clone(), v)
    });
    let table = Embeddings::from_vectors(words.len(), vectors)?;
    let vocab = ClassVocabulary::new(categories.to_vec(), &table)?;
    let nouns: Gazetteer = words.iter().cloned().collect();
    Ok(Knowledge { table, vocab, nouns })
}

fn orthonormal_basis(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        // Two passes of modified Gram-Schmidt keep the set orthogonal to
        // rounding precision.
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

fn tight_box(poly: &[Vertex]) -> BBox {
    let x0 = poly.iter().map(|v| v.0).min().unwrap_or(0);
    let x1 = poly.iter().map(|v| v.0).max().unwrap_or(0);
    let y0 = poly.iter().map(|v| v.1).min().unwrap_or(0);
    let y1 = poly.iter().map(|v| v.1).max().unwrap_or(0);
    BBox::new(x0, y0, x1 - x0, y1 - y0)
}

/// A simple star-shaped polygon inside `area` whose interior covers at least
/// half of its own bounding box; falls back to the rectangle itself.
fn star_polygon(area: BBox, rng: &mut ChaCha8Rng) -> Vec<Vertex> {
    let (cx, cy) = (area.x as f64 + area.w as f64 / 2.0, area.y as f64 + area.h as f64 / 2.0);
    let (hw, hh) = (area.w as f64 / 2.0, area.h as f64 / 2.0);
    for _ in 0..32 {
        let n = rng.gen_range(5..=10);
        let mut poly: Vec<Vertex> = Vec::with_capacity(n);
        for k in 0..n {
            let a = std::f64::consts::TAU * (k as f64 + rng.gen_range(0.0..0.6)) / n as f64;
            let (c, s) = (a.cos(), a.sin());
            let t = (hw / c.abs().max(1e-12)).min(hh / s.abs().max(1e-12));
            let r = rng.gen_range(0.75..=1.0) * t;
            let x = (cx + r * c).round().clamp(area.x as f64, (area.x + area.w) as f64) as u16;
            let y = (cy + r * s).round().clamp(area.y as f64, (area.y + area.h) as f64) as u16;
            if poly.last() != Some(&(x, y)) {
                poly.push((x, y));
            }
        }
        if poly.len() > 1 && poly.first() == poly.last() {
            poly.pop();
        }
        if poly.len() < 3 || !is_simple(&poly) {
            continue;
        }
        let b = tight_box(&poly);
        if b.w < 2 || b.h < 2 {
            continue;
        }
        let inside = polygon_mask(&poly, b).into_iter().filter(|&m| m).count();
        if 2 * inside >= b.area() {
            return poly;
        }
    }
    let (x0, y0, x1, y1) = (area.x, area.y, area.x + area.w, area.y + area.h);
    vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
}

/// Caption naming each present category once, in instance order.
pub fn caption_for(names: &[&str]) -> String {
    let mut seen: Vec<&str> = Vec::new();
    for n in names {
        if !seen.contains(n) {
            seen.push(n);
        }
    }
    if seen.is_empty() {
        "an empty scene".to_string()
    } else {
        format!("a scene with {}", seen.join(", "))
    }
}

fn generate_image(
    config: &CorpusConfig,
    categories: &[String],
    present: &[u8],
    image_id: u32,
    seed: u64,
) -> Result<CorpusImage, HarnessError> {
    let mut rng = stream_rng(seed, 1 + image_id as u64);
    let (w, h) = (config.width, config.height);
    let mut cats: Vec<u8> = Vec::new();
    let (lo, hi) = config.instances_per_category;
    for &c in present {
        for _ in 0..rng.gen_range(lo..=hi) {
            cats.push(c);
        }
    }
    let g = grid_side(cats.len());
    let mut cells: Vec<usize> = (0..g * g).collect();
    cells.shuffle(&mut rng);

    let mut raster = ImageRaster::filled(w, h, BACKGROUND_RGB);
    let mut grid = vec![BACKGROUND; w as usize * h as usize];
    let mut instances = Vec::with_capacity(cats.len());
    let mut regions = Vec::with_capacity(cats.len());
    for (i, &c) in cats.iter().enumerate() {
        let (gx, gy) = (cells[i] % g, cells[i] / g);
        let x0 = (gx * w as usize / g) as u16;
        let x1 = ((gx + 1) * w as usize / g) as u16;
        let y0 = (gy * h as usize / g) as u16;
        let y1 = ((gy + 1) * h as usize / g) as u16;
        let (cw, ch) = (x1 - x0, y1 - y0);
        let bw = rng.gen_range(cw / 2..=cw - 2);
        let bh = rng.gen_range(ch / 2..=ch - 2);
        let bx = x0 + rng.gen_range(1..=cw - bw - 1);
        let by = y0 + rng.gen_range(1..=ch - bh - 1);
        let poly = star_polygon(BBox::new(bx, by, bw, bh), &mut rng);
        let bbox = tight_box(&poly);

        let color = color_of(&categories[c as usize]);
        let amp = config.texture_amplitude;
        for (k, inside) in polygon_mask(&poly, bbox).into_iter().enumerate() {
            if !inside {
                continue;
            }
            let px = bbox.x as u32 + (k % bbox.w as usize) as u32;
            let py = bbox.y as u32 + (k / bbox.w as usize) as u32;
            let mut rgb = color;
            for ch in rgb.iter_mut() {
                let t = rng.gen_range(0..=amp);
                *ch = if *ch >= 128 { ch.saturating_add(t) } else { ch.saturating_sub(t) };
            }
            raster.set_pixel(px, py, rgb);
        }
        paint_polygon(&mut grid, w, &poly, bbox, c);
        instances.push(AsegInstance { instance_id: i as u16, category_id: c, bbox });
        regions.push(BsegRegion { instance_id: i as u16, category_id: c, polygon: poly });
    }

    let names: Vec<&str> = cats.iter().map(|&c| categories[c as usize].as_str()).collect();
    let caption = caption_for(&names);
    if caption.len() > MAX_TEXT_BYTES {
        return Err(HarnessError::ConfigInvalid(format!(
            "caption of image {image_id} needs {} bytes, the limit is {MAX_TEXT_BYTES}",
            caption.len()
        )));
    }
    let aseg = AsegMap { width: w, height: h, instances, class_grid: grid };
    let bseg = BsegMap { width: w, height: h, regions };
    let subimages = extract_subimages(&raster, &aseg, &bseg, None)?;
    let bundle = SemanticBundle { image_id, text: IsText::new(caption)?, aseg, bseg, subimages };
    bundle.validate()?;
    Ok(CorpusImage { bundle, raster: Some(raster) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::cosine_similarity;

    fn small() -> CorpusConfig {
        CorpusConfig { n_images: 40, n_categories: 10, presence: 0.25, width: 96, height: 96, ..Default::default() }
    }

    #[test]
    fn presence_is_exact() {
        let c = SyntheticCorpus::new(small(), 3).unwrap();
        for cat in 0..10u8 {
            assert_eq!((0..40).filter(|&i| c.presence(i).contains(&cat)).count(), 10);
        }
        let all = SyntheticCorpus::new(
            CorpusConfig { n_images: 10, n_categories: 1, presence: 1.0, width: 32, height: 32, ..Default::default() },
            1,
        )
        .unwrap();
        assert!((0..10).all(|i| all.presence(i) == [0]));
    }

    #[test]
    fn images_are_valid_and_deterministic() {
        let c = SyntheticCorpus::new(small(), 9).unwrap();
        for i in 0..40 {
            let a = c.generate(i).unwrap();
            let b = c.generate(i).unwrap();
            assert_eq!(a.bundle, b.bundle);
            assert_eq!(a.raster, b.raster);
            let cats: Vec<u8> = a.bundle.aseg.instances.iter().map(|x| x.category_id).collect();
            assert_eq!(cats, c.presence(i));
        }
    }

    #[test]
    fn knowledge_geometry() {
        let k = synthetic_knowledge(&category_names(80), 4).unwrap();
        let v = |w: &str| k.table.get(w).unwrap().to_vec();
        assert!(cosine_similarity(&v("cat"), &v("dog")).unwrap().abs() < 1e-12);
        assert!((cosine_similarity(&v("cat"), &v("cat")).unwrap() - 1.0).abs() < 1e-12);
        let s = cosine_similarity(&v("people"), &v("person")).unwrap();
        assert!((s - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!(k.nouns.contains("trafficlight") && k.nouns.contains("field"));
        assert_eq!(category_names(82)[81], "object082");
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            CorpusConfig { presence: 0.0, ..small() },
            CorpusConfig { presence: 1.5, ..small() },
            CorpusConfig { n_categories: 256, ..small() },
            CorpusConfig { width: 8, ..small() },
            CorpusConfig { instances_per_category: (0, 2), ..small() },
        ] {
            assert!(matches!(SyntheticCorpus::new(bad, 0), Err(HarnessError::ConfigInvalid(_))));
        }
    }
}
