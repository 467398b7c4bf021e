use ltcas_core::classify::*;
use ltcas_core::data::{generate_dataset, Dataset, ImageSample, LongTailProfile, Split};
use ltcas_core::numeric::{Matrix, RngStream};
use ltcas_core::synth::SynthPool;
use ltcas_core::Error;
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

fn balanced_pair() -> Dataset {
    generate_dataset(&LongTailProfile::new(2, 150, 1.0), 21).unwrap()
}

fn pool_from_train(d: &Dataset, per_class: usize) -> SynthPool {
    let mut images = vec![Vec::new(); d.num_classes];
    for s in d.split(Split::Train) {
        if images[s.label].len() < per_class {
            images[s.label].push(s.pixels.clone());
        }
    }
    for class in &mut images {
        let base = class.clone();
        while class.len() < per_class {
            class.push(base[class.len() % base.len()].clone());
        }
    }
    SynthPool {
        images,
        pixels: 256,
        checkpoint_epoch: 1,
        seed: 0,
    }
}

#[test]
fn baseline_learns_balanced_pair() {
    let d = balanced_pair();
    let out = train_classifier(
        &d,
        None,
        Strategy::Baseline,
        &ClassifierConfig::default(),
        1,
    )
    .unwrap();
    let val: Vec<&ImageSample> = d.split(Split::Val).collect();
    let acc = confusion_on(&out.model, &val).unwrap().accuracy();
    println!("val accuracy {acc:.3}");
    assert!(acc >= 0.95);
    assert_eq!(out.history.len(), 30);
    assert!(out
        .history
        .iter()
        .all(|h| h.synthetic_per_class == vec![0, 0]));
}

#[test]
fn fixed_mix_uses_two_per_class_every_batch() {
    let d = generate_dataset(&LongTailProfile::new(3, 80, 4.0), 3).unwrap();
    let pool = pool_from_train(&d, 16);
    let cfg = ClassifierConfig {
        epochs: 2,
        ..ClassifierConfig::default()
    };
    let out = train_classifier(&d, Some(&pool), Strategy::FixedMix, &cfg, 4).unwrap();
    let nb = cfg.batch.batches_per_epoch(d.split(Split::Train).count());
    for h in &out.history {
        assert_eq!(h.synthetic_per_class, vec![2 * nb; 3]);
    }
}

#[test]
fn same_seed_same_history() {
    let d = generate_dataset(&LongTailProfile::new(3, 60, 3.0), 8).unwrap();
    let pool = pool_from_train(&d, 64);
    let cfg = ClassifierConfig {
        epochs: 3,
        rlcas: ltcas_core::rlcas::RlCasConfig {
            agent_epochs: 3,
            ..Default::default()
        },
        ..ClassifierConfig::default()
    };
    for s in Strategy::ALL {
        let a = train_classifier(&d, Some(&pool), s, &cfg, 6).unwrap();
        let b = train_classifier(&d, Some(&pool), s, &cfg, 6).unwrap();
        assert_eq!(
            format!("{:?}", a.history),
            format!("{:?}", b.history),
            "{s}"
        );
        assert_eq!(a.model, b.model);
        assert_eq!(a.rl_log, b.rl_log);
    }
    let c = train_classifier(&d, Some(&pool), Strategy::Baseline, &cfg, 7).unwrap();
    let a = train_classifier(&d, Some(&pool), Strategy::Baseline, &cfg, 6).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn strategies_needing_a_pool_reject_none() {
    let d = balanced_pair();
    for s in [
        Strategy::FixedMix,
        Strategy::ClassBalancedResample,
        Strategy::RlCas,
    ] {
        assert!(matches!(
            train_classifier(&d, None, s, &ClassifierConfig::default(), 0),
            Err(Error::Contract(_))
        ));
    }
    assert!(matches!("mixup".parse::<Strategy>(), Err(Error::Config(_))));
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
}

#[test]
fn metric_examples() {
    let perfect = ConfusionMatrix::from_predictions(3, &[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap();
    let r = MetricsReport::from_confusion(
        perfect,
        &[120, 50, 10],
        &ShotThresholds::default(),
        AllAccuracy::Sample,
    )
    .unwrap();
    for v in [
        r.f1,
        r.precision,
        r.recall,
        r.all,
        r.many.unwrap(),
        r.med.unwrap(),
        r.few.unwrap(),
    ] {
        assert_eq!(v, 100.0);
    }
    assert_eq!(
        r.groups,
        vec![ShotGroup::Many, ShotGroup::Med, ShotGroup::Few]
    );

    let truth = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    let cm = ConfusionMatrix::from_predictions(2, &truth, &[0; 10]).unwrap();
    let r =
        MetricsReport::from_confusion(cm, &[5, 5], &ShotThresholds::default(), AllAccuracy::Sample)
            .unwrap();
    assert!((r.precision - 25.0).abs() < 1e-12);
    assert!((r.recall - 50.0).abs() < 1e-12);
    assert!((r.all - 50.0).abs() < 1e-12);
    assert!(r.many.is_none() && r.med.is_none());
}

#[test]
fn balanced_softmax_examples() {
    let l = balanced_softmax_loss(&[1.0, 1.0], 0, &[0.5, 0.5]).unwrap();
    assert!((l - 2f64.ln()).abs() < 1e-15);
    // Equal logits with a 0.9/0.1 prior: the adjusted logit gap is log 9.
    let l0 = balanced_softmax_loss(&[0.0, 0.0], 0, &[0.9, 0.1]).unwrap();
    let l1 = balanced_softmax_loss(&[0.0, 0.0], 1, &[0.9, 0.1]).unwrap();
    assert!(((l1 - l0) - 9f64.ln()).abs() < 1e-12);
    assert!(matches!(
        balanced_softmax_loss(&[0.0, 0.0], 0, &[1.0, 0.0]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn frechet_closed_forms() {
    let mut rng = RngStream::new(2, 2);
    let a: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.normal(), rng.normal()]).collect();
    assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-6);
    let col = |xs: &[f64]| xs.iter().map(|&x| vec![x]).collect::<Vec<_>>();
    let d = frechet_distance_with(&col(&[-1.0, 1.0]), &col(&[0.0, 2.0]), 0.0).unwrap();
    assert!((d - 1.0).abs() < 1e-6, "{d}");
    let s2 = 2f64.sqrt();
    let wide = col(&[-s2, s2]);
    let narrow = col(&[-1.0 / s2, 1.0 / s2]);
    let d = frechet_distance_with(&wide, &narrow, 0.0).unwrap();
    assert!((d - 1.0).abs() < 1e-6, "{d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn report_bounds_and_consistency(
        pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..80),
        counts in proptest::collection::vec(1usize..200, 4),
    ) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let cm = ConfusionMatrix::from_predictions(4, &truth, &pred).unwrap();
        prop_assert_eq!(cm.total(), truth.len() as u64);
        let r = MetricsReport::from_confusion(cm.clone(), &counts, &ShotThresholds::default(), AllAccuracy::Sample).unwrap();
        for v in [r.f1, r.precision, r.recall, r.all] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        prop_assert_eq!(r.all, 100.0 * (cm.trace() as f64 / cm.total() as f64));
        let mean_recall = r.per_class_recall.iter().sum::<f64>() / 4.0;
        prop_assert!((mean_recall - r.recall).abs() < 1e-12);
        let mut weighted = 0.0;
        let mut n = 0usize;
        for (grp, val) in [(ShotGroup::Many, r.many), (ShotGroup::Med, r.med), (ShotGroup::Few, r.few)] {
            let k = r.groups.iter().filter(|&&x| x == grp).count();
            if let Some(v) = val {
                weighted += v * k as f64;
                n += k;
            }
        }
        prop_assert_eq!(n, 4);
        prop_assert!((weighted / 4.0 - r.recall).abs() < 1e-9);
    }

    #[test]
    fn frechet_is_symmetric(seed in any::<u64>(), shift in -2.0f64..2.0) {
        let mut rng = RngStream::new(seed, 0);
        let a: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let b: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| shift + 1.5 * rng.normal()).collect()).collect();
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-6, "{} vs {}", ab, ba);
    }

    #[test]
    fn constant_logit_shift_keeps_prediction(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = RngStream::new(seed, 1);
        let model = ClassifierModel::new(6, [5, 4], vec![0.5, 0.3, 0.2], &mut rng).unwrap();
        let x = Matrix::from_fn(3, 6, |_, _| rng.uniform());
        let logits = model.logits(&x).unwrap();
        let prior: Vec<f64> = model.log_prior();
        for r in 0..3 {
            let adj: Vec<f64> = (0..3).map(|c| logits[(r, c)] + prior[c]).collect();
            let shifted: Vec<f64> = adj.iter().map(|v| v + shift).collect();
            prop_assert_eq!(argmax(&adj), argmax(&shifted));
        }
    }
}

#[test]
fn classifier_file_round_trip() {
    let mut rng = RngStream::new(3, 3);
    let model = ClassifierModel::new(256, [16, 8], vec![0.7, 0.2, 0.1], &mut rng).unwrap();
    let bytes = model.to_bytes();
    assert_eq!(ClassifierModel::from_bytes(&bytes).unwrap(), model);
    let mut bad = bytes.clone();
    bad[40] ^= 4;
    assert!(matches!(
        ClassifierModel::from_bytes(&bad),
        Err(Error::Corruption(_))
    ));
    assert!(matches!(
        ClassifierModel::from_bytes(b"NOPE1234"),
        Err(Error::Format(_))
    ));
    assert!(matches!(
        ClassifierModel::from_bytes(&bytes[..bytes.len() - 9]),
        Err(Error::Corruption(_))
    ));
}
