use ltcas_core::numeric::{sqrtm_psd, sym_eig, Matrix, RngStream};
use ltcas_core::Error;
use proptest::prelude::*;

fn random(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

fn triple_loop(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        let mut s = 0.0;
        for p in 0..a.cols() {
            s += a[(i, p)] * b[(p, j)];
        }
        s
    })
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = RngStream::new(1, 0);
    for &(m, k, n) in &[(1, 1, 1), (3, 5, 2), (17, 33, 9), (40, 7, 41)] {
        let a = random(m, k, &mut rng);
        let b = random(k, n, &mut rng);
        assert!(a.matmul(&b).unwrap().max_abs_diff(&triple_loop(&a, &b)) < 1e-12);
    }
}

#[test]
fn sym_eig_reconstructs_random_symmetric() {
    let mut rng = RngStream::new(2, 0);
    for _ in 0..10 {
        let c = random(6, 6, &mut rng);
        let a = c.add(&c.transpose()).unwrap();
        let eig = sym_eig(&a).unwrap();
        assert!(eig.reconstruct().max_abs_diff(&a) < 1e-8);
        let vtv = eig.vectors.transpose().matmul(&eig.vectors).unwrap();
        assert!(vtv.max_abs_diff(&Matrix::identity(6)) < 1e-8);
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn sym_eig_classic_cases() {
    let eig = sym_eig(&Matrix::from_diag(&[3.0, 1.0])).unwrap();
    assert_eq!(eig.values, vec![3.0, 1.0]);
    assert!(eig.vectors.max_abs_diff(&Matrix::identity(2)) < 1e-15);
    let eig = sym_eig(&Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
    assert!((eig.values[0] - 3.0).abs() < 1e-12 && (eig.values[1] - 1.0).abs() < 1e-12);
}

#[test]
fn sym_eig_rejects_asymmetric() {
    let a = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
    assert!(matches!(sym_eig(&a), Err(Error::Contract(_))));
}

#[test]
fn sqrtm_squares_back() {
    let mut rng = RngStream::new(3, 0);
    for _ in 0..10 {
        let c = random(5, 5, &mut rng);
        let b = c.transpose().matmul(&c).unwrap();
        let r = sqrtm_psd(&b).unwrap();
        assert!(r.is_symmetric(1e-10));
        assert!(r.matmul(&r).unwrap().max_abs_diff(&b) < 1e-7);
    }
    assert!(
        sqrtm_psd(&Matrix::identity(4))
            .unwrap()
            .max_abs_diff(&Matrix::identity(4))
            < 1e-15
    );
    let d = sqrtm_psd(&Matrix::from_diag(&[4.0, 9.0])).unwrap();
    assert!(d.max_abs_diff(&Matrix::from_diag(&[2.0, 3.0])) < 1e-15);
}

#[test]
fn sqrtm_rejects_negative_eigenvalue() {
    let a = Matrix::from_diag(&[1.0, -0.5]);
    assert!(matches!(sqrtm_psd(&a), Err(Error::NotPsd(_))));
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let draw = |seed, stream| {
        let mut r = RngStream::new(seed, stream);
        (0..16).map(|_| r.uniform()).collect::<Vec<_>>()
    };
    assert_eq!(draw(7, 1), draw(7, 1));
    assert_ne!(draw(7, 1), draw(7, 2));
    assert_ne!(draw(7, 1), draw(8, 1));
    let base = RngStream::new(5, 0);
    let a: Vec<f64> = {
        let mut d = base.derive(3);
        (0..8).map(|_| d.normal()).collect()
    };
    let b: Vec<f64> = {
        let mut d = base.derive(3);
        (0..8).map(|_| d.normal()).collect()
    };
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transpose_of_product(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, n in 1usize..6) {
        let mut rng = RngStream::new(seed, 0);
        let a = random(m, k, &mut rng);
        let b = random(k, n, &mut rng);
        let lhs = a.matmul(&b).unwrap().transpose();
        let rhs = b.transpose().matmul(&a.transpose()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn eigenvalues_sum_to_trace(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = RngStream::new(seed, 0);
        let c = random(n, n, &mut rng);
        let a = c.add(&c.transpose()).unwrap();
        let eig = sym_eig(&a).unwrap();
        prop_assert!((eig.values.iter().sum::<f64>() - a.trace()).abs() < 1e-9);
    }

    #[test]
    fn uniform_draws_stay_in_unit_interval(seed in any::<u64>(), stream in any::<u64>()) {
        let mut r = RngStream::new(seed, stream);
        for _ in 0..100 {
            let u = r.uniform();
            prop_assert!((0.0..1.0).contains(&u));
        }
    }
}
