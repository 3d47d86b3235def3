//! Property tests against brute-force oracles.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use image::{Rgb, RgbImage};
use proptest::prelude::*;
use streetscape_core::annotation::{fill_rings, perimeter, shoelace_area, Point};
use streetscape_core::augment::{self, AffineParams, Sample};
use streetscape_core::contour::{analyze, analyze_with, DenominatorMode};
use streetscape_core::dataset::{split, DatasetManifest, ManifestEntry, SplitRatios};
use streetscape_core::inference::{predict_primary, predict_secondary, BackendOutput, InferenceError, ScoreMap, SecondaryConfig, SegmentationBackend};
use streetscape_core::mask::{merge, CanonicalClass, ClassMap, LabelMask, IGNORE};
use streetscape_core::metrics::ConfusionMatrix;

fn mask_strategy(max_side: u32, ids: Vec<u8>) -> impl Strategy<Value = LabelMask> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(w, h)| {
        proptest::collection::vec(proptest::sample::select(ids.clone()), (w * h) as usize)
            .prop_map(move |data| LabelMask::new(w, h, data).unwrap())
    })
}

fn pair_strategy(side: u32, ids: Vec<u8>) -> impl Strategy<Value = (LabelMask, LabelMask)> {
    let n = (side * side) as usize;
    (
        proptest::collection::vec(proptest::sample::select(ids.clone()), n),
        proptest::collection::vec(proptest::sample::select(ids), n),
    )
        .prop_map(move |(a, b)| (LabelMask::new(side, side, a).unwrap(), LabelMask::new(side, side, b).unwrap()))
}

fn canonical_ids() -> Vec<u8> {
    CanonicalClass::ALL.iter().map(|c| c.id()).collect()
}

proptest! {
    #[test]
    fn class_areas_match_counting_loop(m in mask_strategy(32, (0..=255).collect())) {
        let mut oracle = BTreeMap::new();
        for y in 0..m.height() {
            for x in 0..m.width() {
                *oracle.entry(m.get(x, y)).or_insert(0u64) += 1;
            }
        }
        let areas = m.class_areas();
        prop_assert_eq!(areas.values().sum::<u64>(), m.pixel_count());
        prop_assert_eq!(areas, oracle);
    }

    #[test]
    fn remap_is_pixelwise(m in mask_strategy(16, (0..=40).chain([255]).collect())) {
        let map = ClassMap::cityscapes_label_ids();
        let out = m.remap(&map);
        prop_assert_eq!(out.dimensions(), m.dimensions());
        prop_assert!(out.is_canonical());
        for (o, i) in out.data().iter().zip(m.data()) {
            prop_assert_eq!(*o, map.get(*i).id());
        }
    }

    #[test]
    fn merge_matches_precedence_rule((a, b) in pair_strategy(12, canonical_ids())) {
        let merged = merge(&a, &b).unwrap();
        for i in 0..a.data().len() {
            let want = if b.data()[i] == CanonicalClass::Secondary.id() { b.data()[i] } else { a.data()[i] };
            prop_assert_eq!(merged.data()[i], want);
        }
        prop_assert_eq!(merge(&a, &LabelMask::filled(12, 12, 0)).unwrap(), a);
    }

    #[test]
    fn confusion_matrix_matches_double_loop((pred, truth) in pair_strategy(32, vec![0, 1, 2, IGNORE])) {
        let cm = ConfusionMatrix::new(&[0, 1, 2]).unwrap().accumulated(&pred, &truth).unwrap();
        let mut oracle = [[0u64; 3]; 3];
        for y in 0..32 {
            for x in 0..32 {
                let (p, t) = (pred.get(x, y), truth.get(x, y));
                if p != IGNORE && t != IGNORE {
                    oracle[t as usize][p as usize] += 1;
                }
            }
        }
        for g in 0..3u8 {
            for p in 0..3u8 {
                prop_assert_eq!(cm.get(g, p).unwrap(), oracle[g as usize][p as usize]);
            }
        }
    }

    #[test]
    fn iou_symmetric_under_swap((pred, truth) in pair_strategy(10, vec![0, 1, 2, IGNORE])) {
        let a = ConfusionMatrix::new(&[0, 1, 2]).unwrap().accumulated(&pred, &truth).unwrap();
        let b = ConfusionMatrix::new(&[0, 1, 2]).unwrap().accumulated(&truth, &pred).unwrap();
        prop_assert_eq!(a.transposed(), b.clone());
        prop_assert_eq!(a.iou_per_class(), b.iou_per_class());
        for v in a.iou_per_class().values().flatten() {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn accumulation_is_additive(pairs in proptest::collection::vec(pair_strategy(6, vec![0, 2, IGNORE]), 1..6)) {
        let mut whole = ConfusionMatrix::new(&[0, 2]).unwrap();
        let mut summed = ConfusionMatrix::new(&[0, 2]).unwrap();
        for (p, t) in &pairs {
            whole.accumulate(p, t).unwrap();
            summed.merge(&ConfusionMatrix::new(&[0, 2]).unwrap().accumulated(p, t).unwrap()).unwrap();
        }
        prop_assert_eq!(whole, summed);
    }

    #[test]
    fn split_partitions_ids(n in 1usize..300, seed in any::<u64>(), a in 1u32..100, b in 1u32..100, c in 1u32..100) {
        let total = (a + b + c) as f64;
        let ratios = SplitRatios::new(a as f64 / total, b as f64 / total, 1.0 - a as f64 / total - b as f64 / total);
        prop_assume!(ratios.is_ok());
        let ratios = ratios.unwrap();
        let manifest = manifest(n);
        let s = split(&manifest, ratios, seed).unwrap();
        let all: Vec<&String> = s.train.iter().chain(&s.val).chain(&s.test).collect();
        prop_assert_eq!(all.len(), n);
        let unique: HashSet<&str> = all.iter().map(|s| s.as_str()).collect();
        prop_assert_eq!(unique, manifest.ids().collect::<HashSet<_>>());
        for (size, r) in s.sizes().iter().zip(ratios.as_array()) {
            prop_assert!((*size as f64 - n as f64 * r).abs() < 1.0);
        }
    }

    #[test]
    fn rasterize_translation_consistent(
        verts in proptest::collection::vec((0i32..160, 0i32..160), 3..8),
        dx in -8i32..8, dy in -8i32..8,
    ) {
        // coordinates on a 1/8 grid keep translation exact in floating point
        let ring: Vec<Point> = verts.iter().map(|&(x, y)| Point::new(10.0 + x as f64 / 8.0, 10.0 + y as f64 / 8.0)).collect();
        let moved: Vec<Point> = ring.iter().map(|p| Point::new(p.x + dx as f64, p.y + dy as f64)).collect();
        let mut a = LabelMask::filled(48, 48, 0);
        let mut b = LabelMask::filled(48, 48, 0);
        fill_rings(&mut a, &[&ring], 2);
        fill_rings(&mut b, &[&moved], 2);
        for y in 0..48i32 {
            for x in 0..48i32 {
                let (tx, ty) = (x + dx, y + dy);
                if (0..48).contains(&tx) && (0..48).contains(&ty) {
                    prop_assert_eq!(a.get(x as u32, y as u32), b.get(tx as u32, ty as u32));
                }
            }
        }
    }

    #[test]
    fn affine_conserves_labels(
        m in mask_strategy(20, vec![0, 1, 2, 3]),
        sx in -0.3f64..0.3, sy in -0.3f64..0.3, scale in 0.5f64..2.0, rot in -180f64..180.0,
    ) {
        let s = Sample::new(RgbImage::new(m.width(), m.height()), m.clone()).unwrap();
        let out = augment::affine(&s, AffineParams { shift: (sx, sy), scale, rotate_deg: rot }).unwrap();
        prop_assert_eq!(out.image().dimensions(), out.mask().dimensions());
        let before: BTreeSet<u8> = m.distinct_ids().into_iter().chain([IGNORE]).collect();
        prop_assert!(out.mask().distinct_ids().iter().all(|id| before.contains(id)));
    }

    #[test]
    fn perspective_conserves_labels(
        m in mask_strategy(20, vec![0, 1, 2, 4]),
        d in proptest::collection::vec((0.0f64..0.2, 0.0f64..0.2), 4),
    ) {
        let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let mut disp = [(0.0, 0.0); 4];
        for i in 0..4 {
            disp[i] = (signs[i].0 * d[i].0, signs[i].1 * d[i].1);
        }
        let s = Sample::new(RgbImage::new(m.width(), m.height()), m.clone()).unwrap();
        let out = augment::perspective(&s, disp).unwrap();
        let before: BTreeSet<u8> = m.distinct_ids().into_iter().chain([IGNORE]).collect();
        prop_assert!(out.mask().distinct_ids().iter().all(|id| before.contains(id)));
    }

    #[test]
    fn contour_ratio_ignores_background_mix(m in mask_strategy(24, canonical_ids())) {
        let r = analyze(&m, "a").unwrap();
        let n = analyze_with(&m, "a", DenominatorMode::NonSkyRoad).unwrap();
        prop_assert_eq!(r.ratio_sp, n.ratio_sp);
        prop_assert!((r.coverage.values().sum::<f64>() - 1.0).abs() < 1e-9);
        // replace every sky/road/other pixel with other: ratio must not move
        let flattened = LabelMask::new(
            m.width(), m.height(),
            m.data().iter().map(|&v| if v == 1 || v == 2 { v } else { 0 }).collect(),
        ).unwrap();
        prop_assert_eq!(analyze(&flattened, "a").unwrap().ratio_sp, r.ratio_sp);
        if let Some(ratio) = r.ratio_sp {
            let p = r.coverage_of(CanonicalClass::Primary);
            let s = r.coverage_of(CanonicalClass::Secondary);
            prop_assert!((ratio - s / p).abs() < 1e-12);
        }
    }

    #[test]
    fn threshold_is_monotone(
        raw in proptest::collection::vec(-6.0f32..6.0, 2 * 16),
        t1 in 0.0f32..1.0, t2 in 0.0f32..1.0,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let mut backend = Fixed { labels: vec![0, 1], output: BackendOutput::Scores(ScoreMap::new(4, 4, 2, raw).unwrap()) };
        let img = RgbImage::new(8, 8);
        let low = predict_secondary(&img, &mut backend, &SecondaryConfig { threshold: lo, billboard_class: None }).unwrap();
        let high = predict_secondary(&img, &mut backend, &SecondaryConfig { threshold: hi, billboard_class: None }).unwrap();
        for (l, h) in low.data().iter().zip(high.data()) {
            prop_assert!(!(*h == 2 && *l != 2));
        }
    }

    #[test]
    fn primary_matches_argmax_oracle(raw in proptest::collection::vec(-3i8..3, 5 * 9)) {
        // small integer scores make ties common
        let scores: Vec<f32> = raw.iter().map(|&v| v as f32).collect();
        let labels = vec![11u8, 23, 7, 12, 40];
        let mut backend = Fixed { labels: labels.clone(), output: BackendOutput::Scores(ScoreMap::new(3, 3, 5, scores.clone()).unwrap()) };
        let map = ClassMap::cityscapes_label_ids();
        let out = predict_primary(&RgbImage::new(3, 3), &mut backend, &map).unwrap();
        for px in 0..9 {
            let mut best = 0;
            for c in 0..5 {
                if scores[c * 9 + px] > scores[best * 9 + px] {
                    best = c;
                }
            }
            prop_assert_eq!(out.data()[px], map.get(labels[best]).id());
        }
    }
}

struct Fixed {
    labels: Vec<u8>,
    output: BackendOutput,
}

impl SegmentationBackend for Fixed {
    fn label_space(&self) -> &[u8] {
        &self.labels
    }

    fn infer(&mut self, _image: &RgbImage) -> Result<BackendOutput, InferenceError> {
        Ok(self.output.clone())
    }
}

fn manifest(n: usize) -> DatasetManifest {
    DatasetManifest::new(
        (0..n)
            .map(|i| ManifestEntry {
                id: format!("id{i}"),
                image_path: format!("{i}.jpg"),
                annotation_path: None,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn seeds_change_assignment() {
    let m = manifest(20);
    let base = split(&m, SplitRatios::DEFAULT, 0).unwrap();
    let differing = (1..50).filter(|&s| split(&m, SplitRatios::DEFAULT, s).unwrap().train != base.train).count();
    assert!(differing >= 45, "only {differing} of 49 seeds changed the split");
}

#[test]
fn random_convex_polygons_respect_area_bound() {
    use streetscape_core::rng::SeededRng;
    let mut rng = SeededRng::new(77);
    for _ in 0..200 {
        let ring = convex_polygon(&mut rng);
        let mut m = LabelMask::filled(64, 64, 0);
        fill_rings(&mut m, &[&ring], 2);
        let count = m.class_areas().get(&2).copied().unwrap_or(0) as f64;
        let area = shoelace_area(&ring).abs();
        assert!((count - area).abs() <= perimeter(&ring) / 2.0 + 4.0, "{count} vs {area}");
    }
}

fn convex_polygon(rng: &mut streetscape_core::rng::SeededRng) -> Vec<Point> {
    let (cx, cy) = (rng.uniform(20.0, 44.0), rng.uniform(20.0, 44.0));
    let r = rng.uniform(2.0, 18.0);
    let n = rng.between(3, 12) as usize;
    let mut angles: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.iter().map(|a| Point::new(cx + r * a.cos(), cy + r * a.sin())).collect()
}

#[test]
fn flip_and_upscale_keep_coverage() {
    let m = LabelMask::from_fn(9, 7, |x, y| [0, 1, 2, 3, 4, 255][((x * 7 + y * 3) % 6) as usize]);
    let base = analyze(&m, "m").unwrap();
    for variant in [m.flip_horizontal(), m.upscale_nearest(2)] {
        let r = analyze(&variant, "m").unwrap();
        assert_eq!(r.coverage, base.coverage);
        assert_eq!(r.ratio_sp, base.ratio_sp);
    }
    let img = RgbImage::from_fn(9, 7, |x, y| Rgb([x as u8, y as u8, 0]));
    let s = Sample::new(img, m.clone()).unwrap();
    assert_eq!(augment::flip_h(&s).mask(), &m.flip_horizontal());
}
