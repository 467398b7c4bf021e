//! Central finite-difference checks shared by the gradient tests and the
//! acceptance target. Each check returns the worst relative error over
//! `POINTS` random directions.

use ltcas_core::classify::{balanced_softmax_loss, ClassifierModel};
use ltcas_core::numeric::{Matrix, RngStream, Tape};
use ltcas_core::synth::{
    loss_and_gradients, total_loss, DenoiserConfig, DenoiserModel, DiffusionBatch, NoiseSchedule,
};

pub const POINTS: u64 = 20;
pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn random_direction(
    params: &[Matrix],
    only: Option<&[usize]>,
    rng: &mut RngStream,
) -> Vec<Matrix> {
    params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if only.is_some_and(|o| !o.contains(&i)) {
                Matrix::zeros(p.rows(), p.cols())
            } else {
                Matrix::from_fn(p.rows(), p.cols(), |_, _| rng.normal())
            }
        })
        .collect()
}

pub fn shifted(params: &[Matrix], dir: &[Matrix], h: f64) -> Vec<Matrix> {
    params
        .iter()
        .zip(dir)
        .map(|(p, d)| {
            let mut q = p.clone();
            q.axpy(h, d);
            q
        })
        .collect()
}

pub fn dot(a: &[Matrix], b: &[Matrix]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.data()
                .iter()
                .zip(y.data())
                .map(|(u, v)| u * v)
                .sum::<f64>()
        })
        .sum()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn toy_denoiser(seed: u64) -> (DenoiserModel, NoiseSchedule, DiffusionBatch) {
    let mut rng = RngStream::new(seed, 11);
    let cfg = DenoiserConfig {
        steps: 10,
        num_classes: 3,
        pixels: 16,
        embed_dim: 4,
        hidden: [8, 8],
    };
    let model = DenoiserModel::new(cfg, &mut rng).unwrap();
    let schedule = NoiseSchedule::linear(10, 1e-3, 0.2).unwrap();
    let n = 5;
    let batch = DiffusionBatch {
        z0: Matrix::from_fn(n, 16, |_, _| rng.uniform()),
        sketches: Matrix::from_fn(n, 16, |_, _| if rng.uniform() < 0.3 { 1.0 } else { 0.0 }),
        classes: (0..n).map(|_| rng.below(3)).collect(),
        steps: (0..n).map(|_| 1 + rng.below(10)).collect(),
        noise: Matrix::from_fn(n, 16, |_, _| rng.normal()),
    };
    (model, schedule, batch)
}

pub fn denoiser_worst(lambda: f64, only: Option<&[usize]>) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..POINTS {
        let (model, schedule, batch) = toy_denoiser(seed);
        let (_, grads) = loss_and_gradients(&model, &schedule, &batch, lambda).unwrap();
        let mut rng = RngStream::new(seed, 12);
        let dir = random_direction(&model.params, only, &mut rng);
        let eval = |h: f64| {
            let mut m = model.clone();
            m.params = shifted(&model.params, &dir, h);
            total_loss(&m, &schedule, &batch, lambda).unwrap().total
        };
        let numeric = (eval(H) - eval(-H)) / (2.0 * H);
        worst = worst.max(relative_error(dot(&grads, &dir), numeric));
    }
    worst
}

pub fn classifier_worst() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..POINTS {
        let mut rng = RngStream::new(seed, 21);
        let prior = vec![0.6, 0.25, 0.1, 0.05];
        let model = ClassifierModel::new(12, [7, 5], prior, &mut rng).unwrap();
        let x = Matrix::from_fn(6, 12, |_, _| rng.uniform());
        let labels: Vec<usize> = (0..6).map(|_| rng.below(4)).collect();
        let (_, grads) = model.loss_and_gradients(&x, &labels).unwrap();
        let dir = random_direction(&model.params, None, &mut rng);
        let eval = |h: f64| {
            let mut m = model.clone();
            m.params = shifted(&model.params, &dir, h);
            m.loss(&x, &labels).unwrap()
        };
        let numeric = (eval(H) - eval(-H)) / (2.0 * H);
        worst = worst.max(relative_error(dot(&grads, &dir), numeric));
    }
    worst
}

/// Tape cross-entropy with a log-prior offset against the scalar Balanced
/// Softmax loss, then against finite differences.
pub fn balanced_softmax_worst() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..POINTS {
        let mut rng = RngStream::new(seed, 31);
        let c = 5;
        let raw: Vec<f64> = (0..c).map(|_| 0.05 + rng.uniform()).collect();
        let total: f64 = raw.iter().sum();
        let prior: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let logits: Vec<f64> = (0..c).map(|_| 3.0 * rng.normal()).collect();
        let label = rng.below(c);

        let mut tape = Tape::new();
        let z = tape.var(Matrix::row_vector(&logits));
        let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
        let loss = tape.cross_entropy(z, &[label], Some(&log_prior)).unwrap();
        let grad = tape.backward(loss).unwrap().take(z).unwrap();
        let direct = balanced_softmax_loss(&logits, label, &prior).unwrap();
        assert!((tape.value(loss).as_scalar().unwrap() - direct).abs() < 1e-12);

        let dir: Vec<f64> = (0..c).map(|_| rng.normal()).collect();
        let eval = |h: f64| {
            let zs: Vec<f64> = logits.iter().zip(&dir).map(|(z, d)| z + h * d).collect();
            balanced_softmax_loss(&zs, label, &prior).unwrap()
        };
        let numeric = (eval(H) - eval(-H)) / (2.0 * H);
        let analytic: f64 = grad.data().iter().zip(&dir).map(|(g, d)| g * d).sum();
        worst = worst.max(relative_error(analytic, numeric));
    }
    worst
}
