//! Property tests over the hand-written components.

mod common;

use common::*;
use nalgebra::DMatrix;
use pivotlm::corpus::{format_example, pack_batches, PackConfig, ParallelExample};
use pivotlm::geometry::{project_sphere, spd_distance, voronoi_assign};
use pivotlm::interpret::{mask_by_threshold, region_coverage, LayerCoverage};
use pivotlm::metrics::{bleu, chrf};
use pivotlm::tokenizer::{train_bpe, BpeTrainerConfig, Vocabulary};
use pivotlm::training::{lr_at_step, TrainConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vocab() -> &'static Vocabulary {
    static V: std::sync::OnceLock<Vocabulary> = std::sync::OnceLock::new();
    V.get_or_init(|| {
        let text = [
            ("cat_Latn", "El gat dorm al sofà."),
            ("spa_Latn", "El gato duerme en el sofá."),
            ("deu_Latn", "Die Katze schläft auf dem Sofa."),
            ("eus_Latn", "Katua sofan lo dago."),
        ];
        let cfg = BpeTrainerConfig {
            vocab_size: 13 + 256 + 40,
            ..Default::default()
        };
        train_bpe(text.iter().cycle().take(40).copied(), &cfg).unwrap()
    })
}

proptest! {
    #[test]
    fn byte_level_round_trip(s in any::<String>()) {
        let v = vocab();
        prop_assert_eq!(v.decode(&v.encode(&s)).unwrap(), s);
    }

    #[test]
    fn coverage_is_bounded_and_monotone_in_the_region(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_attention(&mut rng, n);
        let flat = flatten_f32(&a);
        let decoded: Vec<usize> = (n / 2..n).collect();
        let small: Vec<usize> = (0..n / 2).collect();
        let big: Vec<usize> = (0..n).collect();
        let cs = region_coverage(&flat, n, &small, &decoded).unwrap();
        let cb = region_coverage(&flat, n, &big, &decoded).unwrap();
        prop_assert!(cs >= 0.0);
        prop_assert!(cb <= decoded.len() as f64 + 1e-6);
        prop_assert!(cs <= cb + 1e-9);
        prop_assert!((cs - coverage_oracle(&a, &small, &decoded)).abs() < 1e-5);
    }

    #[test]
    fn spd_distance_is_a_metric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (random_spd(&mut rng, 3), random_spd(&mut rng, 3), random_spd(&mut rng, 3));
        let ab = spd_distance(&a, &b).unwrap();
        prop_assert!((ab - spd_distance(&b, &a).unwrap()).abs() < 1e-8);
        prop_assert!(spd_distance(&a, &a).unwrap().abs() < 1e-8);
        prop_assert!(spd_distance(&a, &c).unwrap() <= ab + spd_distance(&b, &c).unwrap() + 1e-8);
        prop_assert!((ab - spd_distance_oracle(&a, &b)).abs() < 1e-8 * (1.0 + ab));
    }

    #[test]
    fn spd_distance_is_affine_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_spd(&mut rng, 3), random_spd(&mut rng, 3));
        let m = random_spd(&mut rng, 3) + DMatrix::from_fn(3, 3, |i, j| if i < j { 0.3 } else { 0.0 });
        let ma = m.transpose() * &a * &m;
        let mb = m.transpose() * &b * &m;
        prop_assert!((spd_distance(&ma, &mb).unwrap() - spd_distance(&a, &b).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn sphere_points_have_unit_norm(x in -10.0f64..10.0, y in -10.0f64..10.0) {
        prop_assert!((project_sphere(x, y).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn voronoi_matches_brute_force(seed in any::<u64>(), k in 2usize..5, per in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<_> = (0..k * per).map(|i| (i % k, random_sphere_point(&mut rng))).collect();
        let (cents, assign) = voronoi_oracle(&pts, k);
        let v = voronoi_assign(&pts, k).unwrap();
        for (c, o) in v.centroids.iter().zip(&cents) {
            prop_assert!((c.x - o[0]).abs() < 1e-12 && (c.y - o[1]).abs() < 1e-12 && (c.z - o[2]).abs() < 1e-12);
        }
        prop_assert_eq!(v.assignment, assign);
    }

    #[test]
    fn threshold_masks_are_nested(raw in proptest::collection::vec(0.0f64..10.0, 2..8), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let lc = LayerCoverage::from_raw(raw);
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (a, b) = (mask_by_threshold(&lc, lo, 4), mask_by_threshold(&lc, hi, 4));
        for l in 0..lc.raw.len() {
            for h in 0..4 {
                prop_assert!(!a.contains(l, h) || b.contains(l, h));
            }
        }
    }

    #[test]
    fn packing_conserves_prompts(lens in proptest::collection::vec(1usize..5, 1..30), ctx in 24usize..64) {
        let v = vocab();
        let examples: Vec<ParallelExample> = lens
            .iter()
            .map(|&n| ParallelExample::new("cat_Latn", "spa_Latn", &"gat ".repeat(n), &"gato ".repeat(n)).unwrap())
            .collect();
        let prompts: Vec<_> = examples.iter().map(|e| format_example(e, v).unwrap()).collect();
        let cfg = PackConfig { context_len: ctx, ..Default::default() };
        let (seqs, stats) = pack_batches(prompts.clone(), &cfg, v.pad_id()).unwrap();
        prop_assert_eq!(stats.accepted + stats.dropped, prompts.len());
        let mut seen = 0usize;
        for s in &seqs {
            prop_assert_eq!(s.ids.len(), ctx);
            for p in &s.prompts {
                let end = p.offset + p.regions.eos + 1;
                prop_assert!(end <= ctx);
                prop_assert_eq!(&s.ids[p.offset..end], &prompts[seen].ids[..]);
                seen += 1;
            }
        }
        prop_assert_eq!(seen, stats.accepted);
        let real: usize = seqs.iter().map(|s| s.non_pad_tokens()).sum();
        prop_assert_eq!(real + stats.pad_tokens, seqs.len() * ctx);
    }

    #[test]
    fn scores_stay_in_range(words in proptest::collection::vec("[a-d]{1,3}", 1..12), other in proptest::collection::vec("[a-d]{1,3}", 1..12)) {
        let h = [words.join(" ")];
        let r = [other.join(" ")];
        let b = bleu(&h, &r).unwrap();
        let c = chrf(&h, &r).unwrap();
        prop_assert!((0.0..=100.0 + 1e-9).contains(&b));
        prop_assert!((0.0..=100.0 + 1e-9).contains(&c));
    }

    #[test]
    fn schedule_is_bounded_and_rises_during_warmup(total in 10u64..5000, warm_frac in 0.0f64..1.0) {
        let cfg = TrainConfig { total_steps: total, warmup_steps: (total as f64 * warm_frac) as u64, ..Default::default() };
        let mut prev = 0.0;
        for step in 0..=total {
            let lr = lr_at_step(&cfg, step).unwrap();
            prop_assert!(lr >= 0.0 && lr <= cfg.peak_lr);
            if step <= cfg.warmup_steps {
                prop_assert!(lr >= prev);
            }
            prev = lr;
        }
        prop_assert!(lr_at_step(&cfg, total + 1).is_err());
    }
}

#[test]
fn bpe_training_is_deterministic() {
    let train = || {
        let text = [("cat_Latn", "El gat dorm al sofà."), ("spa_Latn", "El gato duerme.")];
        let cfg = BpeTrainerConfig {
            vocab_size: 13 + 256 + 10,
            ..Default::default()
        };
        train_bpe(text.iter().cycle().take(40).copied(), &cfg).unwrap().to_text()
    };
    assert_eq!(train(), train());
}
