use super::mask::polygon_mask;
use super::{AsegMap, BsegMap, ImageRaster, SemanticsError, SubImage};

/// ROI-masked crops of every A-seg instance whose category passes `categories`
/// (`None` keeps all). Pixels outside the instance's B-seg polygon are zeroed;
/// an instance without a polygon keeps its whole box.
pub fn extract_subimages(
    raster: &ImageRaster,
    aseg: &AsegMap,
    bseg: &BsegMap,
    categories: Option<&[u8]>,
) -> Result<Vec<SubImage>, SemanticsError> {
    let dims = (raster.width(), raster.height());
    if dims != (aseg.width, aseg.height) || dims != (bseg.width, bseg.height) {
        return Err(SemanticsError::DimensionMismatch(format!(
            "raster {}x{}, A-seg {}x{}, B-seg {}x{}",
            dims.0, dims.1, aseg.width, aseg.height, bseg.width, bseg.height
        )));
    }
    let mut out = Vec::new();
    for inst in &aseg.instances {
        if categories.is_some_and(|f| !f.contains(&inst.category_id)) {
            continue;
        }
        let mut pixels = raster.crop(inst.bbox);
        if let Some(region) = bseg.region(inst.instance_id) {
            let mask = polygon_mask(&region.polygon, inst.bbox);
            for (px, inside) in pixels.chunks_exact_mut(3).zip(mask) {
                if !inside {
                    px.fill(0);
                }
            }
        }
        out.push(SubImage { instance_id: inst.instance_id, bbox: inst.bbox, pixels });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{AsegInstance, BBox, BsegRegion, BACKGROUND};

    fn checkerboard(w: u16, h: u16) -> ImageRaster {
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let v = if (x + y) % 2 == 0 { 200 } else { 40 };
                px.extend_from_slice(&[v, v / 2, 255 - v]);
            }
        }
        ImageRaster::new(w, h, px).unwrap()
    }

    // Independent per-pixel even-odd ray cast in floating point.
    fn inside_oracle(poly: &[(u16, u16)], cx: f64, cy: f64) -> bool {
        let mut inside = false;
        for i in 0..poly.len() {
            let (x1, y1) = (poly[i].0 as f64, poly[i].1 as f64);
            let (x2, y2) = (poly[(i + 1) % poly.len()].0 as f64, poly[(i + 1) % poly.len()].1 as f64);
            if (y1 > cy) != (y2 > cy) {
                let xi = x1 + (cy - y1) * (x2 - x1) / (y2 - y1);
                if cx < xi {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn single(w: u16, h: u16, bbox: BBox, polygon: Vec<(u16, u16)>) -> (AsegMap, BsegMap) {
        let aseg = AsegMap {
            width: w,
            height: h,
            instances: vec![AsegInstance { instance_id: 4, category_id: 2, bbox }],
            class_grid: vec![BACKGROUND; w as usize * h as usize],
        };
        let bseg = BsegMap {
            width: w,
            height: h,
            regions: vec![BsegRegion { instance_id: 4, category_id: 2, polygon }],
        };
        (aseg, bseg)
    }

    #[test]
    fn rectangular_full_frame_is_identity() {
        let r = checkerboard(9, 7);
        let (a, b) = single(9, 7, BBox::full(9, 7), vec![(0, 0), (9, 0), (9, 7), (0, 7)]);
        let subs = extract_subimages(&r, &a, &b, None).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].pixels, r.pixels());
    }

    #[test]
    fn filter_without_match_is_empty() {
        let r = checkerboard(4, 4);
        let (a, b) = single(4, 4, BBox::full(4, 4), vec![(0, 0), (4, 0), (4, 4)]);
        assert!(extract_subimages(&r, &a, &b, Some(&[9])).unwrap().is_empty());
        assert_eq!(extract_subimages(&r, &a, &b, Some(&[2])).unwrap().len(), 1);
    }

    #[test]
    fn l_shape_matches_brute_force_oracle() {
        let r = checkerboard(20, 16);
        let bbox = BBox::new(2, 3, 14, 11);
        let poly = vec![(2, 3), (8, 3), (8, 9), (16, 9), (16, 14), (2, 14)];
        let (a, b) = single(20, 16, bbox, poly.clone());
        let sub = &extract_subimages(&r, &a, &b, None).unwrap()[0];
        for dy in 0..bbox.h as u32 {
            for dx in 0..bbox.w as u32 {
                let (x, y) = (bbox.x as u32 + dx, bbox.y as u32 + dy);
                let o = ((dy * bbox.w as u32 + dx) * 3) as usize;
                let want = if inside_oracle(&poly, x as f64 + 0.5, y as f64 + 0.5) {
                    r.pixel(x, y)
                } else {
                    [0, 0, 0]
                };
                assert_eq!(&sub.pixels[o..o + 3], &want, "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn slanted_polygons_match_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let r = checkerboard(40, 40);
        for _ in 0..200 {
            let poly: Vec<(u16, u16)> = (0..3).map(|_| (rng.gen_range(0..=40), rng.gen_range(0..=40))).collect();
            if !crate::semantics::mask::is_simple(&poly) {
                continue;
            }
            let (a, b) = single(40, 40, BBox::full(40, 40), poly.clone());
            let sub = &extract_subimages(&r, &a, &b, None).unwrap()[0];
            for y in 0..40u32 {
                for x in 0..40u32 {
                    let o = ((y * 40 + x) * 3) as usize;
                    let inside = inside_oracle(&poly, x as f64 + 0.5, y as f64 + 0.5);
                    assert_eq!(sub.pixels[o..o + 3] != [0, 0, 0], inside, "{poly:?} at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn masking_is_idempotent() {
        let r = checkerboard(12, 12);
        let bbox = BBox::new(1, 2, 10, 9);
        let poly = vec![(1, 2), (11, 4), (6, 11)];
        let (a, b) = single(12, 12, bbox, poly);
        let first = extract_subimages(&r, &a, &b, None).unwrap().remove(0);
        // Composite the masked crop onto an empty canvas and extract again.
        let mut canvas = ImageRaster::filled(12, 12, [0, 0, 0]);
        for (i, px) in first.pixels.chunks_exact(3).enumerate() {
            let (x, y) = (bbox.x as u32 + (i % 10) as u32, bbox.y as u32 + (i / 10) as u32);
            canvas.set_pixel(x, y, [px[0], px[1], px[2]]);
        }
        let second = extract_subimages(&canvas, &a, &b, None).unwrap().remove(0);
        assert_eq!(first, second);
    }

    #[test]
    fn dimension_mismatch() {
        let r = checkerboard(5, 5);
        let (a, b) = single(4, 4, BBox::full(4, 4), vec![(0, 0), (4, 0), (4, 4)]);
        assert!(matches!(extract_subimages(&r, &a, &b, None), Err(SemanticsError::DimensionMismatch(_))));
    }
}
