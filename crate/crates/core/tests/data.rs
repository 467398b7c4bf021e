use ltcas_core::data::shapes::{draw_sample, render, split_sizes, RenderParams};
use ltcas_core::data::*;
use ltcas_core::numeric::RngStream;
use ltcas_core::Error;
use proptest::prelude::*;

#[test]
fn default_profile_tail_count() {
    let counts = LongTailProfile::new(8, 1000, 47.98).counts().unwrap();
    assert_eq!(counts[7], 21);
    assert_eq!(counts[0], 1000);
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn balanced_profile() {
    assert_eq!(
        LongTailProfile::new(2, 10, 1.0).counts().unwrap(),
        vec![10, 10]
    );
}

#[test]
fn too_small_tail_is_profile_error() {
    assert!(matches!(
        LongTailProfile::new(4, 20, 10.0).counts(),
        Err(Error::Profile(_))
    ));
    assert!(matches!(
        LongTailProfile::new(17, 100, 2.0).counts(),
        Err(Error::Profile(_))
    ));
}

#[test]
fn generation_is_deterministic() {
    let p = LongTailProfile::new(4, 60, 5.0);
    let a = generate_dataset(&p, 9).unwrap();
    let b = generate_dataset(&p, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, generate_dataset(&p, 10).unwrap());
}

#[test]
fn empirical_imbalance_matches_ratio() {
    for &(c, n, rho) in &[(8, 1000, 47.98), (5, 500, 10.0), (3, 300, 3.0)] {
        let d = generate_dataset(&LongTailProfile::new(c, n, rho), 1).unwrap();
        let max = *d.class_counts.iter().max().unwrap() as f64;
        let min = *d.class_counts.iter().min().unwrap() as f64;
        assert!(
            ((max / min) / rho - 1.0).abs() <= 0.05,
            "{max}/{min} vs {rho}"
        );
    }
}

#[test]
fn splits_follow_seven_one_two() {
    let d = generate_dataset(&LongTailProfile::new(3, 100, 2.0), 2).unwrap();
    for (c, &n) in d.class_counts.iter().enumerate() {
        let per_split: Vec<usize> = Split::ALL
            .iter()
            .map(|&s| d.split(s).filter(|x| x.label == c).count())
            .collect();
        let (tr, va, te) = split_sizes(n);
        assert_eq!(per_split, vec![tr, va, te]);
    }
    assert_eq!(split_sizes(100), (70, 10, 20));
}

#[test]
fn samples_are_valid() {
    let d = generate_dataset(&LongTailProfile::new(8, 80, 8.0), 3).unwrap();
    for s in &d.samples {
        assert!(s.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(s.sketch.iter().all(|&b| b <= 1));
        assert!(s.label < 8);
        assert_eq!(s.sketch, extract_sketch(&s.pixels, IMAGE_SIDE));
    }
}

#[test]
fn disk_edges_form_closed_ring() {
    let mut img = vec![0.0; IMAGE_PIXELS];
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let (dx, dy) = (c as f64 + 0.5 - 8.0, r as f64 + 0.5 - 8.0);
            if dx * dx + dy * dy <= 25.0 {
                img[r * IMAGE_SIDE + c] = 1.0;
            }
        }
    }
    let sk = extract_sketch(&img, IMAGE_SIDE);
    let at = |r: isize, c: isize| {
        (0..IMAGE_SIDE as isize).contains(&r)
            && (0..IMAGE_SIDE as isize).contains(&c)
            && sk[r as usize * IMAGE_SIDE + c as usize] == 1
    };
    let mut edges = 0;
    for r in 0..IMAGE_SIDE as isize {
        for c in 0..IMAGE_SIDE as isize {
            if !at(r, c) {
                continue;
            }
            edges += 1;
            let neighbours = (-1..=1)
                .flat_map(|dr| (-1..=1).map(move |dc| (dr, dc)))
                .filter(|&(dr, dc)| (dr, dc) != (0, 0) && at(r + dr, c + dc))
                .count();
            assert!(
                neighbours >= 2,
                "edge pixel ({r},{c}) has {neighbours} neighbours"
            );
        }
    }
    assert!(edges > 8);
    // the centre of the disk is flat
    assert!(!at(8, 8));
}

#[test]
fn nearest_centroid_separates_clean_renders() {
    // Centroids from noise-free renders at the nominal pose (intensity jitter
    // kept); held-out renders additionally carry the dataset's pixel noise.
    let classes = ShapeFamily::ALL.len();
    let mut rng = RngStream::new(4, 0);
    let clean = |c: usize, rng: &mut RngStream| {
        let mut p = RenderParams::nominal();
        p.intensity = RenderParams::jittered(rng).intensity;
        render(ShapeFamily::for_class(c), &p)
    };
    let centroids: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let imgs: Vec<Vec<f64>> = (0..100).map(|_| clean(c, &mut rng)).collect();
            (0..IMAGE_PIXELS)
                .map(|p| imgs.iter().map(|i| i[p]).sum::<f64>() / imgs.len() as f64)
                .collect()
        })
        .collect();
    let noise = RenderConfig::default().pixel_noise;
    let mut correct = 0;
    let mut total = 0;
    for c in 0..classes {
        for _ in 0..50 {
            let img: Vec<f64> = clean(c, &mut rng)
                .into_iter()
                .map(|v| (v + noise * rng.normal()).clamp(0.0, 1.0))
                .collect();
            let dist = |m: &Vec<f64>| {
                img.iter()
                    .zip(m)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            };
            let best = (0..classes)
                .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                .unwrap();
            correct += usize::from(best == c);
            total += 1;
        }
    }
    let acc = correct as f64 / total as f64;
    assert!(acc >= 0.95, "nearest-centroid accuracy {acc}");
}

#[test]
fn nominal_renders_differ_between_families() {
    let imgs: Vec<Vec<f64>> = ShapeFamily::ALL
        .iter()
        .map(|&f| render(f, &RenderParams::nominal()))
        .collect();
    for i in 0..imgs.len() {
        for j in i + 1..imgs.len() {
            assert_ne!(imgs[i], imgs[j], "families {i} and {j} render identically");
        }
    }
}

#[test]
fn file_round_trip_and_corruption() {
    let d = generate_dataset(&LongTailProfile::new(3, 40, 4.0), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ltg");
    save_dataset(&d, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), d);

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Corruption(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Format(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_sizes_partition(n in 4usize..5000) {
        let (tr, va, te) = split_sizes(n);
        prop_assert_eq!(tr + va + te, n);
        prop_assert!(tr >= 1 && va >= 1 && te >= 1);
    }

    #[test]
    fn profile_counts_non_increasing(c in 2usize..=16, n in 50usize..=5000, rho in 1.0f64..10.0) {
        let p = LongTailProfile::new(c, n, rho);
        if let Ok(counts) = p.counts() {
            prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(*counts.last().unwrap() >= 4);
        }
    }

    #[test]
    fn sketches_are_binary(seed in any::<u64>(), class in 0usize..16) {
        let mut rng = RngStream::new(seed, 0);
        let (pixels, sketch) = draw_sample(class, &RenderConfig::default(), &mut rng);
        prop_assert!(pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(sketch.iter().all(|&b| b <= 1));
        prop_assert_eq!(sketch, extract_sketch(&pixels, IMAGE_SIDE));
    }
}
