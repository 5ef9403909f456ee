use super::SemanticsError;

/// Longest run a single `(value, length)` pair can carry.
pub const MAX_RUN: usize = u16::MAX as usize;

/// Run-length encodes a byte grid as `(value: u8, run: u16 LE)` triples.
///
/// Runs longer than [`MAX_RUN`] are split, so two adjacent triples share a
/// value only when the first one is saturated.
pub fn rle_encode(grid: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut iter = grid.iter().copied();
    let Some(mut value) = iter.next() else {
        return out;
    };
    let mut run = 1usize;
    let push = |out: &mut Vec<u8>, v: u8, n: usize| {
        out.push(v);
        out.extend_from_slice(&(n as u16).to_le_bytes());
    };
    for b in iter {
        if b == value && run < MAX_RUN {
            run += 1;
        } else {
            push(&mut out, value, run);
            value = b;
            run = 1;
        }
    }
    push(&mut out, value, run);
    out
}

pub fn rle_decode(bytes: &[u8]) -> Result<Vec<u8>, SemanticsError> {
    if !bytes.len().is_multiple_of(3) {
        return Err(SemanticsError::MalformedRle(bytes.len() % 3));
    }
    let total: usize = bytes.chunks_exact(3).map(|c| u16::from_le_bytes([c[1], c[2]]) as usize).sum();
    let mut out = Vec::with_capacity(total);
    for c in bytes.chunks_exact(3) {
        let n = u16::from_le_bytes([c[1], c[2]]) as usize;
        out.resize(out.len() + n, c[0]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_decode(bytes: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for c in bytes.chunks(3) {
            for _ in 0..(c[1] as usize | (c[2] as usize) << 8) {
                out.push(c[0]);
            }
        }
        out
    }

    #[test]
    fn encodes_runs() {
        assert_eq!(rle_encode(&[5, 5, 5, 2]), vec![5, 3, 0, 2, 1, 0]);
        assert_eq!(rle_encode(&[7]), vec![7, 1, 0]);
        assert!(rle_encode(&[]).is_empty());
    }

    #[test]
    fn splits_long_runs() {
        let grid = vec![0u8; 70_000];
        let enc = rle_encode(&grid);
        assert_eq!(enc, vec![0, 0xFF, 0xFF, 0, 0x71, 0x11]); // 65535, 4465
        assert_eq!(naive_decode(&enc), grid);
    }

    #[test]
    fn decodes() {
        assert_eq!(rle_decode(&[5, 3, 0, 2, 1, 0]).unwrap(), vec![5, 5, 5, 2]);
        assert!(rle_decode(&[]).unwrap().is_empty());
        assert_eq!(rle_decode(&[1, 1, 0, 9]), Err(SemanticsError::MalformedRle(1)));
    }

    #[test]
    fn seeded_512_grid_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(512);
        // Blocky content so runs vary in length.
        let grid: Vec<u8> = (0..512 * 512)
            .scan(0u8, |v, _| {
                if rng.gen_bool(0.05) {
                    *v = rng.gen_range(0..4);
                }
                Some(*v)
            })
            .collect();
        assert_eq!(rle_decode(&rle_encode(&grid)).unwrap(), grid);
    }

    proptest! {
        #[test]
        fn size_is_three_per_run(grid in proptest::collection::vec(0u8..3, 1..2000)) {
            let enc = rle_encode(&grid);
            let runs = 1 + grid.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert_eq!(enc.len(), 3 * runs);
            prop_assert!(enc.len() <= 3 * grid.len());
            prop_assert_eq!(rle_decode(&enc).unwrap(), grid);
        }
    }
}
