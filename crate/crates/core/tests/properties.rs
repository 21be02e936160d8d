use proptest::prelude::*;

use pstl_percept::adaptation::{apply_contrast, optimal_contrast_delta};
use pstl_percept::io::{decode_pgm, encode_pgm};
use pstl_percept::model::{iou, BoundingBox, Detection, GrayImage, Track, Tracker};
use pstl_percept::probes::{localization_deviation, shannon_entropy, WindowConfig};
use pstl_percept::pstl::{evaluate_axiom, monitor_stream, parse_axiom, AxiomFormula, MonitorConfig};
use pstl_percept::{michelson_contrast, DetectionVerdict, ProbeRecord};

fn bbox() -> impl Strategy<Value = BoundingBox<f64>> {
    (0.0..100.0f64, 0.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h).unwrap())
}

fn image() -> impl Strategy<Value = GrayImage> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h).prop_map(move |d| GrayImage::new(w, h, d).unwrap())
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contrast_and_entropy_ignore_pixel_order(img in image(), seed in any::<u64>()) {
        let mut shuffled = img.pixels().to_vec();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let other = GrayImage::new(img.width(), img.height(), shuffled).unwrap();
        prop_assert_eq!(michelson_contrast::<f64>(&img), michelson_contrast::<f64>(&other));
        let h: f64 = shannon_entropy(&img, 256).unwrap();
        prop_assert!((h - shannon_entropy::<f64>(&other, 256).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn contrast_and_entropy_ranges(img in image(), bins_log in 0u32..9) {
        let c: f64 = michelson_contrast(&img);
        prop_assert!((0.0..=1.0).contains(&c));
        let bins = 1usize << bins_log;
        let h: f64 = shannon_entropy(&img, bins).unwrap();
        let cap = (bins as f64).log2().min((img.pixels().len() as f64).log2());
        prop_assert!(h >= 0.0 && h <= cap + 1e-12, "{} > {}", h, cap);
    }

    #[test]
    fn generic_scalar_agrees(img in image()) {
        let c64: f64 = michelson_contrast(&img);
        let c32: f32 = michelson_contrast(&img);
        prop_assert!((c64 - c32 as f64).abs() < 1e-6);
    }

    #[test]
    fn zero_bound_is_identity_and_remap_is_monotone(img in image(), b in -40.0..40.0f64) {
        let (lo, hi) = img.extremes();
        prop_assume!(lo < hi);
        let (i_max, i_min) = (hi as f64, lo as f64);
        prop_assert_eq!(apply_contrast(&img, 0.0, i_max, i_min), img.clone());
        let out = apply_contrast(&img, b, i_max, i_min);
        let mut pairs: Vec<(u8, u8)> = img.pixels().iter().copied().zip(out.pixels().iter().copied()).collect();
        pairs.sort();
        for w in pairs.windows(2) {
            prop_assert!(w[0].1 <= w[1].1, "{:?}", w);
        }
    }

    #[test]
    fn optimum_is_at_least_as_good_as_neighbors(c in prop::collection::vec(0.0..1.0f64, 1..40), c_d in 0.0..1.0f64, eps in 1e-6..0.1f64) {
        let obj = |d: f64| c.iter().map(|ci| (ci - c_d - d).abs()).sum::<f64>();
        let d = optimal_contrast_delta(&c, c_d).unwrap();
        prop_assert!(obj(d) <= obj(d + eps) + 1e-12);
        prop_assert!(obj(d) <= obj(d - eps) + 1e-12);
    }

    #[test]
    fn localization_deviation_is_translation_invariant(
        centers in prop::collection::vec((0.0..50.0f64, 0.0..50.0f64), 4..12),
        dx in -20i32..20,
        dy in -20i32..20,
    ) {
        let build = |ox: f64, oy: f64| {
            let mut t = Track::<f64>::new(0, 0);
            for (f, (x, y)) in centers.iter().enumerate() {
                let b = BoundingBox::new(x + ox + 30.0, y + oy + 30.0, 8.0, 6.0).unwrap();
                t.push(Detection::new(f, b, 0, 0.9).unwrap()).unwrap();
            }
            t
        };
        let cfg = WindowConfig::new(5, 2).unwrap();
        let last = centers.len() - 1;
        let a = localization_deviation(&build(0.0, 0.0), last, &cfg).unwrap();
        let b = localization_deviation(&build(dx as f64, dy as f64), last, &cfg).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn lowering_p_tp_never_breaks_a_pass(
        values in prop::collection::vec(prop::option::of(-1.0..2.0f64), 1..20),
        p_hi in 0.01..0.99f64,
        frac in 0.0..1.0f64,
    ) {
        let p_lo = (p_hi * frac).max(1e-3);
        let ax = |p: f64| parse_axiom::<f64>(&format!("axiom a: Pr(0 <= contrast <= 1, window={}) >= {p}", values.len())).unwrap();
        let strict = evaluate_axiom(&ax(p_hi), &values);
        let lax = evaluate_axiom(&ax(p_lo), &values);
        prop_assert_eq!(strict.empirical_frequency, lax.empirical_frequency);
        prop_assert!(!strict.pass || lax.pass);
    }

    #[test]
    fn pgm_round_trip(img in image()) {
        prop_assert_eq!(decode_pgm(&encode_pgm(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn tracker_ids_are_unique_per_frame(frames in prop::collection::vec(prop::collection::vec(bbox(), 0..5), 1..8)) {
        let mut tracker = Tracker::<f64>::default();
        for (t, boxes) in frames.iter().enumerate() {
            let dets: Vec<Detection<f64>> = boxes.iter().map(|b| Detection::new(t, *b, 0, 0.5).unwrap()).collect();
            let mut ids: Vec<u64> = tracker.update(dets).iter().map(|d| d.track_id.unwrap()).collect();
            let n = ids.len();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), n);
        }
    }
}

fn stream(len: usize, seed: u64) -> (Vec<Vec<Detection<f64>>>, Vec<GrayImage>) {
    let mut frames = Vec::new();
    let mut images = Vec::new();
    for t in 0..len {
        let img = GrayImage::from_fn(40, 30, |r, c| ((r * 7 + c * 3 + t + seed as usize) % 200) as u8 + 20).unwrap();
        let x = 2.0 + t as f64 + (seed % 3) as f64;
        let det = Detection::new(t, BoundingBox::new(x, 5.0, 10.0, 10.0).unwrap(), 0, 0.8).unwrap();
        let mut dets = vec![det];
        if (t + seed as usize) % 4 == 0 {
            dets.push(Detection::new(t, BoundingBox::new(25.0, 15.0, 6.0, 6.0).unwrap(), 0, 0.3).unwrap());
        }
        frames.push(dets);
        images.push(img);
    }
    (frames, images)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monitor_is_causal(len in 2usize..20, cut in 1usize..20, seed in 0u64..50) {
        let cut = cut.min(len);
        let (frames, images) = stream(len, seed);
        let axioms: Vec<AxiomFormula<f64>> = vec![
            parse_axiom("axiom c: Pr(contrast >= 0.5, window=4) >= 0.7").unwrap(),
            parse_axiom("axiom l: Pr(loc_dev_px <= 0.5, window=4) >= 0.7").unwrap(),
        ];
        let cfg = MonitorConfig::default();
        let whole = monitor_stream(&axioms, &frames, &images, &cfg).unwrap();
        let prefix = monitor_stream(&axioms, &frames[..cut], &images[..cut], &cfg).unwrap();
        prop_assert_eq!(&whole[..cut], &prefix[..]);
    }

    #[test]
    fn verdicts_and_probe_records_survive_json(len in 1usize..10, seed in 0u64..50) {
        let (frames, images) = stream(len, seed);
        let axioms: Vec<AxiomFormula<f64>> = vec![parse_axiom("axiom c: Pr(0.1 <= contrast <= 0.9, window=3) >= 0.6").unwrap()];
        for report in monitor_stream(&axioms, &frames, &images, &MonitorConfig::default()).unwrap() {
            for v in &report.verdicts {
                let back: DetectionVerdict = serde_json::from_str(&serde_json::to_string(v).unwrap()).unwrap();
                prop_assert_eq!(&back, v);
            }
            for (d, pv) in report.detections.iter().zip(&report.probes) {
                let rec = ProbeRecord::new(d, *pv, None);
                let back: ProbeRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
                prop_assert_eq!(back, rec);
            }
        }
    }
}
