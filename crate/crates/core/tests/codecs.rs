use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semcom::baseline::{dct_decode, dct_encode};
use semcom::semantics::mask::{is_simple, polygon_mask};
use semcom::semantics::{
    decode_element, encode_element, extract_subimages, rle_encode, AsegInstance, AsegMap, BBox, BsegMap,
    BsegRegion, ImageRaster, IsText, SemanticElement, SubImage, Vertex, BACKGROUND, MAX_TEXT_BYTES,
};

const CASES: u32 = 10_000;

fn bbox_in(w: u16, h: u16) -> impl Strategy<Value = BBox> {
    (0..w, 0..h).prop_flat_map(move |(x, y)| (Just(x), Just(y), 1..=w - x, 1..=h - y))
        .prop_map(|(x, y, bw, bh)| BBox::new(x, y, bw, bh))
}

fn aseg() -> impl Strategy<Value = AsegMap> {
    (1u16..48, 1u16..48)
        .prop_flat_map(|(w, h)| {
            let inst = (0u8..BACKGROUND, bbox_in(w, h));
            (Just(w), Just(h), prop::collection::vec(inst, 0..6), any::<u64>())
        })
        .prop_map(|(w, h, insts, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let instances: Vec<AsegInstance> = insts
                .into_iter()
                .enumerate()
                .map(|(i, (c, b))| AsegInstance { instance_id: i as u16 * 7 + 1, category_id: c, bbox: b })
                .collect();
            let mut grid = vec![BACKGROUND; w as usize * h as usize];
            for inst in &instances {
                let b = inst.bbox;
                for y in b.y..b.y + b.h {
                    for x in b.x..b.x + b.w {
                        if rng.gen_bool(0.7) {
                            grid[y as usize * w as usize + x as usize] = inst.category_id;
                        }
                    }
                }
            }
            AsegMap { width: w, height: h, instances, class_grid: grid }
        })
}

/// Angle-sorted vertices around a center; kept only when simple.
fn polygon(w: u16, h: u16, seed: u64) -> Option<Vec<Vertex>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..12);
    let (cx, cy) = (rng.gen_range(0..=w) as f64, rng.gen_range(0..=h) as f64);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let rmax = w.max(h) as f64;
    let poly: Vec<Vertex> = angles
        .iter()
        .map(|a| {
            let r = rng.gen_range(1.0..rmax.max(2.0));
            let x = (cx + r * a.cos()).round().clamp(0.0, w as f64) as u16;
            let y = (cy + r * a.sin()).round().clamp(0.0, h as f64) as u16;
            (x, y)
        })
        .collect();
    is_simple(&poly).then_some(poly)
}

fn bseg() -> impl Strategy<Value = BsegMap> {
    // Large maps exercise the wide-delta escape.
    (prop_oneof![1u16..64, 200u16..=u16::MAX], prop_oneof![1u16..64, 200u16..=u16::MAX])
        .prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec((0u8..BACKGROUND, any::<u64>()), 0..5)))
        .prop_map(|(w, h, specs)| {
            let regions = specs
                .into_iter()
                .enumerate()
                .filter_map(|(i, (c, seed))| {
                    polygon(w, h, seed).map(|p| BsegRegion { instance_id: i as u16, category_id: c, polygon: p })
                })
                .collect();
            BsegMap { width: w, height: h, regions }
        })
}

fn simg() -> impl Strategy<Value = Vec<SubImage>> {
    let crop = (any::<u16>(), 0u16..1000, 0u16..1000, 1u16..10, 1u16..10, any::<u64>()).prop_map(
        |(id, x, y, w, h, seed)| {
            let mut pixels = vec![0u8; w as usize * h as usize * 3];
            ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut pixels);
            SubImage { instance_id: id, bbox: BBox::new(x, y, w, h), pixels }
        },
    );
    prop::collection::vec(crop, 0..4)
}

fn round_trips(e: &SemanticElement) {
    let bytes = encode_element(e).unwrap();
    assert_eq!(&decode_element(&bytes).unwrap(), e);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn text_bijective(s in "\\PC{1,120}") {
        let t = IsText::new(s).unwrap();
        let e = SemanticElement::Text(t);
        let bytes = encode_element(&e).unwrap();
        prop_assert!(bytes.len() <= MAX_TEXT_BYTES + 1);
        round_trips(&e);
    }

    #[test]
    fn aseg_bijective(a in aseg()) {
        a.validate().unwrap();
        round_trips(&SemanticElement::Aseg(a));
    }

    #[test]
    fn bseg_bijective(b in bseg()) {
        b.validate().unwrap();
        round_trips(&SemanticElement::Bseg(b));
    }

    #[test]
    fn simg_bijective(s in simg()) {
        round_trips(&SemanticElement::Simg(s));
    }

    #[test]
    fn rle_size_is_three_per_run(grid in prop::collection::vec(0u8..3, 0..400)) {
        let runs = grid.chunk_by(|a, b| a == b).count();
        let enc = rle_encode(&grid);
        prop_assert_eq!(enc.len(), 3 * runs);
        prop_assert!(enc.len() <= 3 * grid.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn long_text_is_capped(s in "\\PC{150,400}") {
        let bytes = encode_element(&SemanticElement::Text(IsText::new(s).unwrap())).unwrap();
        prop_assert!(bytes.len() <= MAX_TEXT_BYTES + 1);
    }

    /// Decoding is total, and whatever it accepts re-encodes to the input.
    #[test]
    fn fuzzed_decode_is_total(bytes in prop::collection::vec(any::<u8>(), 0..300), tag in 1u8..=4) {
        let mut b = bytes;
        if !b.is_empty() {
            b[0] = tag;
        }
        if let Ok(e) = decode_element(&b) {
            prop_assert_eq!(encode_element(&e).unwrap(), b);
        }
    }

    #[test]
    fn mutated_encodings_never_panic(a in aseg(), flips in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..4)) {
        let mut bytes = encode_element(&SemanticElement::Aseg(a)).unwrap();
        for (i, v) in flips {
            let k = i.index(bytes.len());
            bytes[k] ^= v;
        }
        if let Ok(e) = decode_element(&bytes) {
            prop_assert_eq!(&encode_element(&e).unwrap(), &bytes);
        }
        let cut = bytes.len() / 2;
        let _ = decode_element(&bytes[..cut]);
    }

    #[test]
    fn masking_is_idempotent(seed in any::<u64>()) {
        let (w, h) = (24u16, 20u16);
        let Some(poly) = polygon(w, h, seed) else { return Ok(()) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut px = vec![0u8; w as usize * h as usize * 3];
        rng.fill_bytes(&mut px);
        let raster = ImageRaster::new(w, h, px).unwrap();
        let bbox = BBox::full(w, h);
        let inst = AsegInstance { instance_id: 1, category_id: 0, bbox };
        let aseg = AsegMap { width: w, height: h, instances: vec![inst], class_grid: vec![BACKGROUND; w as usize * h as usize] };
        let bseg = BsegMap { width: w, height: h, regions: vec![BsegRegion { instance_id: 1, category_id: 0, polygon: poly.clone() }] };
        let once = extract_subimages(&raster, &aseg, &bseg, None).unwrap();
        let masked = ImageRaster::new(w, h, once[0].pixels.clone()).unwrap();
        let twice = extract_subimages(&masked, &aseg, &bseg, None).unwrap();
        let mask = polygon_mask(&poly, bbox);
        for ((a, b), inside) in once[0].pixels.chunks(3).zip(twice[0].pixels.chunks(3)).zip(mask) {
            if inside {
                prop_assert_eq!(a, b);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dct_round_trip_keeps_dimensions(w in 1u16..70, h in 1u16..70, q in 1u8..=100, seed in any::<u64>()) {
        let mut px = vec![0u8; w as usize * h as usize * 3];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut px);
        let img = ImageRaster::new(w, h, px).unwrap();
        let back = dct_decode(&dct_encode(&img, q).unwrap()).unwrap();
        prop_assert_eq!((back.width(), back.height()), (w, h));
    }
}
