//! Property checks for the feature extractor against brute-force oracles.

use jcl_core::features::{
    bin_count, extract_feature, extract_patches, feature_dimension, selected_subbands,
    BinSchedule, ChannelKind,
};
use jcl_core::jpeg::{CoeffPlane, QuantTable, QuantizedDctPlanes};
use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_planes(rng: &mut impl Rng, width: usize, height: usize, spread: i32) -> QuantizedDctPlanes {
    let bw = width.div_ceil(8);
    let bh = height.div_ceil(8);
    let mut planes = [(); 3].map(|_| CoeffPlane::zeroed(bw, bh));
    for plane in planes.iter_mut() {
        for by in 0..bh {
            for bx in 0..bw {
                for c in plane.block_mut(bx, by).iter_mut() {
                    *c = rng.gen_range(-spread..=spread);
                }
            }
        }
    }
    QuantizedDctPlanes { width, height, planes, qtables: [(); 3].map(|_| QuantTable([1; 64])) }
}

fn random_schedule(rng: &mut impl Rng) -> BinSchedule {
    // Non-increasing bins along the diagonals, random threshold.
    fn make(rng: &mut impl Rng, start: u32) -> [u32; 8] {
        let mut bins = [0u32; 8];
        let mut cur = start;
        for b in bins.iter_mut() {
            *b = cur;
            cur = cur.saturating_sub(rng.gen_range(0..=cur / 2 + 1)).max(1);
        }
        bins
    }
    let luma_start = rng.gen_range(20..200);
    let chroma_start = rng.gen_range(10..120);
    BinSchedule {
        luma_bins: make(rng, luma_start),
        chroma_bins: make(rng, chroma_start),
        threshold: rng.gen_range(1..60),
        patch_size: 8 * rng.gen_range(1..=4),
    }
}

#[test]
fn dimension_matches_output_length_for_random_schedules() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..50 {
        let schedule = random_schedule(&mut rng);
        schedule.validate().unwrap();
        let planes =
            random_planes(&mut rng, schedule.patch_size * 2, schedule.patch_size, 40);
        let patches = extract_patches(&planes, schedule.patch_size);
        assert_eq!(patches.len(), 2);
        for patch in &patches {
            let f = extract_feature(patch, &schedule);
            assert_eq!(f.values.len(), feature_dimension(&schedule));
        }
    }
}

#[test]
fn feature_is_sign_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let schedule = BinSchedule { patch_size: 16, ..Default::default() };
    let planes = random_planes(&mut rng, 32, 32, 25);
    let mut negated = planes.clone();
    for plane in negated.planes.iter_mut() {
        for by in 0..plane.blocks_h {
            for bx in 0..plane.blocks_w {
                for c in plane.block_mut(bx, by).iter_mut() {
                    *c = -*c;
                }
            }
        }
    }
    let a: Vec<_> = extract_patches(&planes, 16)
        .iter()
        .map(|p| extract_feature(p, &schedule).values)
        .collect();
    let b: Vec<_> = extract_patches(&negated, 16)
        .iter()
        .map(|p| extract_feature(p, &schedule).values)
        .collect();
    assert_eq!(a, b);
}

#[test]
fn feature_is_block_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let planes = random_planes(&mut rng, 32, 32, 25);
    let schedule = BinSchedule { patch_size: 32, ..Default::default() };

    // Shuffle the 16 blocks of the single patch identically per channel.
    let mut order: Vec<usize> = (0..16).collect();
    order.shuffle(&mut rng);
    let mut shuffled = planes.clone();
    for ch in 0..3 {
        for (dst, &src) in order.iter().enumerate() {
            let block = *planes.planes[ch].block(src % 4, src / 4);
            *shuffled.planes[ch].block_mut(dst % 4, dst / 4) = block;
        }
    }

    let a = extract_feature(&extract_patches(&planes, 32)[0], &schedule);
    let b = extract_feature(&extract_patches(&shuffled, 32)[0], &schedule);
    assert_eq!(a.values, b.values);
}

#[test]
fn segments_sum_to_one_or_are_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let schedule = BinSchedule { patch_size: 16, ..Default::default() };
    for round in 0..20 {
        // Mix dense and sparse planes so empty bands actually occur.
        let spread = if round % 2 == 0 { 30 } else { 1 };
        let planes = random_planes(&mut rng, 16, 16, spread);
        let patches = extract_patches(&planes, 16);
        let f = extract_feature(&patches[0], &schedule);
        let mut at = 0;
        for (ch, k1, k2) in selected_subbands(&schedule) {
            let kind = if ch == 0 { ChannelKind::Luma } else { ChannelKind::Chroma };
            let n = bin_count(kind, k1, k2, &schedule) as usize;
            let seg = &f.values[at..at + n];
            let sum: f64 = seg.iter().sum();
            let all_zero = seg.iter().all(|&v| v == 0.0);
            assert!(
                all_zero || (sum - 1.0).abs() < 1e-9,
                "band ({},{},{}) sums to {}",
                ch,
                k1,
                k2,
                sum
            );
            at += n;
        }
        assert_eq!(at, f.values.len());
    }
}

#[test]
fn histogram_counts_match_brute_force_on_1000_patches() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let schedule = BinSchedule { patch_size: 16, ..Default::default() };
    let bands = selected_subbands(&schedule);
    for _ in 0..1000 {
        let planes = random_planes(&mut rng, 16, 16, 60);
        let patches = extract_patches(&planes, 16);
        let f = extract_feature(&patches[0], &schedule);

        let mut at = 0;
        for &(ch, k1, k2) in &bands {
            let kind = if ch == 0 { ChannelKind::Luma } else { ChannelKind::Chroma };
            let n = bin_count(kind, k1, k2, &schedule) as usize;

            // Brute force directly over the raw plane storage.
            let plane = &planes.planes[ch];
            let mut counts = vec![0usize; n];
            let mut total = 0usize;
            for by in 0..2 {
                for bx in 0..2 {
                    let v = plane.coeff(bx, by, k1 - 1, k2 - 1).unsigned_abs() as usize;
                    if v >= 1 && v <= n {
                        counts[v - 1] += 1;
                        total += 1;
                    }
                }
            }

            let seg = &f.values[at..at + n];
            for (i, &c) in counts.iter().enumerate() {
                let expected = if total == 0 { 0.0 } else { c as f64 / total as f64 };
                assert_eq!(seg[i], expected, "band ({},{},{}) bin {}", ch, k1, k2, i);
            }
            at += n;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Scaling all coefficients by any positive factor never breaks the
    /// [0, 1] range or the segment property.
    #[test]
    fn feature_values_stay_in_unit_range(seed in any::<u64>(), spread in 1i32..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = BinSchedule { patch_size: 8, ..Default::default() };
        let planes = random_planes(&mut rng, 8, 8, spread);
        let patches = extract_patches(&planes, 8);
        let f = extract_feature(&patches[0], &schedule);
        prop_assert!(f.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
