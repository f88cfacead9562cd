//! Property tests for the invariants every module promises.

mod common;

use std::sync::OnceLock;

use corrsense::autoencoder::AeConfig;
use corrsense::detector::{train_models, PipelineConfig, TrainedModels};
use corrsense::distance::{calibrate, classify_with, distance_matrix, FlagRule};
use corrsense::eval::{confusion, prf1};
use corrsense::hybrid::{run_stream, DetectorKind, Stage};
use corrsense::kv::KvMap;
use corrsense::pca::{fit_level_pca, fit_pca};
use corrsense::stream::{NormStats, ReadingMatrix, SensorWindow};
use corrsense::synth::{gen_baseline, inject_erasure, inject_mean_shift, AnomalyKind, ScenarioSpec};
use proptest::prelude::*;

fn latents(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-50.0..50.0f64, d), n))
}

fn rows(max_m: usize, w: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, w), 3..=max_m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn distance_matrix_is_a_metric(l in latents(7, 5)) {
        let m = distance_matrix(&l).unwrap();
        let n = m.n();
        for i in 0..n {
            prop_assert_eq!(m.get(i, i), 0.0);
            for j in 0..n {
                prop_assert!(m.get(i, j) >= 0.0);
                prop_assert_eq!(m.get(i, j), m.get(j, i));
                for k in 0..n {
                    prop_assert!(m.get(i, k) <= m.get(i, j) + m.get(j, k) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn permuting_sensors_permutes_matrix_and_flags(
        l in latents(6, 4),
        seed in any::<u64>(),
        threshold in 0.0..60.0f64,
    ) {
        let n = l.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| l[p].clone()).collect();
        let m = distance_matrix(&l).unwrap();
        let mp = distance_matrix(&permuted).unwrap();
        let expect = m.permuted(&perm);
        prop_assert_eq!(mp.as_slice(), expect.as_slice());
        for rule in [FlagRule::AllOthers, FlagRule::Majority] {
            let f = classify_with(&m, threshold, rule);
            let fp = classify_with(&mp, threshold, rule);
            for i in 0..n {
                prop_assert_eq!(fp[i], f[perm[i]]);
            }
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_flags(l in latents(6, 3), a in 0.0..80.0f64, b in 0.0..80.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m = distance_matrix(&l).unwrap();
        for rule in [FlagRule::AllOthers, FlagRule::Majority] {
            let f_lo = classify_with(&m, lo, rule);
            let f_hi = classify_with(&m, hi, rule);
            prop_assert!(f_lo.iter().zip(&f_hi).all(|(x, y)| y <= x));
        }
    }

    #[test]
    fn confusion_counts_and_metrics_are_consistent(pairs in prop::collection::vec((0..2u8, 0..2u8), 1..300)) {
        let (flags, labels): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let c = confusion(&flags, &labels).unwrap();
        prop_assert_eq!(c.total() as usize, flags.len());
        let m = prf1(c);
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        if m.precision == 0.0 || m.recall == 0.0 {
            prop_assert_eq!(m.f1, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn window_replay_keeps_the_last_w(values in prop::collection::vec(-1e6..1e6f64, 0..400), w in 1..120usize) {
        let mut win = SensorWindow::new(w);
        for &v in &values {
            win.push(v);
        }
        prop_assert_eq!(win.len(), values.len().min(w));
        if values.len() >= w {
            prop_assert_eq!(win.snapshot().unwrap(), values[values.len() - w..].to_vec());
        } else {
            prop_assert!(win.snapshot().is_err());
        }
    }

    #[test]
    fn normalize_round_trips(data in prop::collection::vec(-1e3..1e3f64, 8..200), x in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let n = 2;
        let steps = data.len() / n;
        let m = ReadingMatrix::from_rows(n, data[..steps * n].to_vec()).unwrap();
        let stats = NormStats::fit(&m, 0, steps).unwrap();
        for s in 0..n {
            let back = stats.denormalize(&stats.normalize(&x, s), s);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn pca_components_are_orthonormal_and_projection_is_affine(
        r in rows(40, 12),
        k in 1..5usize,
        alpha in -2.0..2.0f64,
        level in any::<bool>(),
    ) {
        let k = k.min(r.len()).min(12);
        let model = if level { fit_level_pca(&r, k) } else { fit_pca(&r, k) }.unwrap();
        prop_assert!(model.orthonormality_error() < 1e-8);
        let (x, y) = (&r[0], &r[1]);
        let mix: Vec<f64> = x.iter().zip(y).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let (px, py, pm) = (model.project(x), model.project(y), model.project(&mix));
        for c in 0..k {
            prop_assert!((pm[c] - (alpha * px[c] + (1.0 - alpha) * py[c])).abs() < 1e-9);
        }
    }

    #[test]
    fn calibrated_threshold_grows_with_c(l in prop::collection::vec(latents(5, 3), 2..20), c1 in 0.0..5.0f64, c2 in 0.0..5.0f64) {
        let n = l[0].len();
        let ms: Vec<_> = l.iter().filter(|x| x.len() == n && x[0].len() == l[0][0].len())
            .map(|x| distance_matrix(x).unwrap()).collect();
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        let a = calibrate(&ms, lo, &[], 0.99).unwrap();
        let b = calibrate(&ms, hi, &[], 0.99).unwrap();
        prop_assert!(a.distance_threshold <= b.distance_threshold);
        prop_assert!(a.distance_threshold >= a.calibration.train_mean - 1e-12);
    }

    #[test]
    fn mean_shift_touches_only_the_faulty_sensor(seed in any::<u64>(), start in 0..120usize, delta in -50.0..50.0f64, sensor in 0..4usize) {
        let (base, mut labels) = gen_baseline(4, 120, 50.0, 5.0, seed).unwrap();
        let mut shifted = base.clone();
        inject_mean_shift(&mut shifted, &mut labels, sensor, start, delta);
        for t in 0..120 {
            for s in 0..4 {
                let expect = if s == sensor && t >= start { base.get(t, s) + delta } else { base.get(t, s) };
                prop_assert!((shifted.get(t, s) - expect).abs() < 1e-9);
                prop_assert_eq!(labels.get(t, s), (s == sensor && t >= start) as u8);
            }
        }
    }

    #[test]
    fn erasure_zeroes_exactly_the_labeled_readings(seed in any::<u64>(), rate in 0.0..=1.0f64, start in 0..150usize) {
        let (base, mut labels) = gen_baseline(3, 150, 50.0, 5.0, seed).unwrap();
        let mut erased = base.clone();
        let mut r = common::rng(seed ^ 1);
        inject_erasure(&mut erased, &mut labels, 2, start, rate, &mut r);
        for t in 0..150 {
            for s in 0..3 {
                if labels.get(t, s) == 1 {
                    prop_assert!(s == 2 && t >= start);
                    prop_assert_eq!(erased.get(t, s), 0.0);
                } else {
                    prop_assert_eq!(erased.get(t, s), base.get(t, s));
                }
            }
        }
    }

    #[test]
    fn scenario_kv_round_trips(seed in any::<u64>(), delta in -60.0..60.0f64, start in 0..500usize) {
        let spec = ScenarioSpec {
            anomaly_start: start,
            ..ScenarioSpec::fig1(AnomalyKind::MeanShift { delta }, seed)
        };
        let text = spec.to_kv().render();
        let back = ScenarioSpec::from_kv(&KvMap::parse(&text).unwrap()).unwrap();
        prop_assert_eq!(back, spec);
    }
}

fn small_models() -> &'static TrainedModels {
    static MODELS: OnceLock<TrainedModels> = OnceLock::new();
    MODELS.get_or_init(|| {
        let cfg = PipelineConfig {
            window: 12,
            ae: AeConfig {
                input_len: 12,
                hidden: 8,
                latent: 2,
                epochs: 3,
                batch: 16,
                ..AeConfig::default()
            },
            ae_train_stride: 1,
            ..PipelineConfig::default()
        };
        let sc = ScenarioSpec {
            steps: 300,
            ..ScenarioSpec::fig1(AnomalyKind::None, 77)
        }
        .generate()
        .unwrap();
        train_models(&sc.readings, 0, 300, &cfg).unwrap().0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn hybrid_gating_is_sound(seed in any::<u64>(), delta in -30.0..30.0f64, rate in 0.0..0.3f64, start in 0..150usize) {
        let models = small_models();
        let (mut readings, mut labels) = gen_baseline(4, 150, 50.0, 5.0, seed).unwrap();
        inject_mean_shift(&mut readings, &mut labels, 1, start, delta);
        let mut r = common::rng(seed);
        inject_erasure(&mut readings, &mut labels, 3, start / 2, rate, &mut r);

        let pca = run_stream(DetectorKind::Pca, &readings, models).unwrap();
        let hy = run_stream(DetectorKind::Hybrid, &readings, models).unwrap();
        prop_assert_eq!(hy.counters.ae_invocations, hy.counters.pca_flagged_steps);
        prop_assert_eq!(hy.counters.pca_flagged_steps, pca.counters.pca_flagged_steps);
        for (p, h) in pca.verdicts.iter().zip(&hy.verdicts) {
            if h.stage == Stage::PcaClear {
                prop_assert!(h.flags.iter().all(|f| f.bit() == Some(0)));
            }
            for s in 0..4 {
                // The hybrid only ever keeps a flag PCA raised.
                prop_assert!(h.flag_bit(s) <= p.flag_bit(s));
            }
        }
        for s in 0..4 {
            let l = labels.column(s);
            let fp = |run: &corrsense::hybrid::StreamRun| {
                run.flag_track(s).iter().zip(&l).filter(|(f, &y)| **f == Some(1) && y == 0).count()
            };
            prop_assert!(fp(&hy) <= fp(&pca));
        }
    }
}
