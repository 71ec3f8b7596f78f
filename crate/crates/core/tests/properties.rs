use nnnf_core::channels::Plane;
use nnnf_core::eval::{roc, GroundTruthBox};
use nnnf_core::featpool::{gen_pool, mirror_descriptor, KindCounts, PoolConfig};
use nnnf_core::synth::{build_ternary_model, classify_sidf, sidf_class_fractions, TernaryLabel};
use nnnf_core::{nms, Detection, FeatureDescriptor};
use proptest::prelude::*;

fn det(x: f64, y: f64, w: f64, score: f64) -> Detection {
    Detection {
        x,
        y,
        w,
        h: 2.0 * w,
        score,
        scale: 1.0,
    }
}

fn dets() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((0.0..200.0f64, 0.0..200.0f64, 8.0..60.0f64, 0u8..8), 0..60)
        .prop_map(|v| v.into_iter().map(|(x, y, w, s)| det(x, y, w, s as f64)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nms_keeps_a_separated_subset(d in dets(), overlap in 0.1..0.9f64) {
        let kept = nms(&d, overlap);
        for k in &kept {
            prop_assert!(d.contains(k));
        }
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.bbox().iou(&b.bbox()) <= overlap);
            }
        }
        // every dropped box overlaps a kept box that scores at least as high
        for x in d.iter().filter(|x| !kept.contains(x)) {
            prop_assert!(kept.iter().any(|k| k.score >= x.score && k.bbox().iou(&x.bbox()) > overlap));
        }
        prop_assert_eq!(nms(&kept, overlap), kept);
    }

    #[test]
    fn roc_is_monotone(d in dets(), g in prop::collection::vec((0.0..200.0f64, 0.0..200.0f64, 8.0..60.0f64, 0usize..3), 1..20)) {
        let gts: Vec<GroundTruthBox> = g
            .iter()
            .map(|&(x, y, w, i)| GroundTruthBox { image: format!("{i}.ppm"), x, y, w, h: 2.0 * w, ignore: false })
            .collect();
        let rows: Vec<(String, Detection)> =
            d.iter().enumerate().map(|(k, d)| (format!("{}.ppm", k % 3), *d)).collect();
        let c = roc(&rows, &gts, &[], 0.5).unwrap();
        for p in c.points.windows(2) {
            prop_assert!(p[1].threshold < p[0].threshold);
            prop_assert!(p[1].fppi >= p[0].fppi);
            prop_assert!(p[1].miss_rate <= p[0].miss_rate);
        }
        prop_assert!(c.lamr > 0.0 && c.lamr <= 1.0);
    }

    #[test]
    fn ternary_labels_and_sidf_classes(data in prop::collection::vec(0.0..1.0f32, 32 * 64), seed in 0u64..1000) {
        let plane = Plane { width: 32, height: 64, data };
        let tm = build_ternary_model(&plane, None).unwrap();
        prop_assert_eq!(tm.labels.len(), 32 * 64);
        let total: usize = [TernaryLabel::Background, TernaryLabel::ContourBody, TernaryLabel::InnerBody]
            .iter()
            .map(|&l| tm.count(l))
            .sum();
        prop_assert_eq!(total, 32 * 64);

        let pool = gen_pool(&PoolConfig {
            counts: KindCounts { local_mean: 10, neighbor_diff: 10, sidf: 40, ssf: 10 },
            seed,
            ..PoolConfig::default()
        })
        .unwrap();
        for d in &pool.descriptors {
            prop_assert_eq!(classify_sidf(d, &tm).is_some(), matches!(d, FeatureDescriptor::Sidf { .. }));
        }
        let (f, n) = sidf_class_fractions(&pool.descriptors, &tm);
        prop_assert_eq!(n, 40);
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mirroring_is_an_involution(seed in 0u64..1000) {
        let pool = gen_pool(&PoolConfig {
            counts: KindCounts { local_mean: 20, neighbor_diff: 20, sidf: 20, ssf: 20 },
            seed,
            ..PoolConfig::default()
        })
        .unwrap();
        for d in &pool.descriptors {
            let m = mirror_descriptor(d, pool.template_w);
            prop_assert_eq!(m.kind(), d.kind());
            prop_assert_eq!(&mirror_descriptor(&m, pool.template_w), d);
        }
    }
}
