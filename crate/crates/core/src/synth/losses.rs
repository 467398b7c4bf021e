//! Diffusion objective: noise regression plus the √ᾱ_t-weighted sketch loss.

use crate::error::{Error, Result};
use crate::numeric::{Matrix, NodeId, Tape};
use crate::synth::model::{DenoiserModel, NoisePredictor};
use crate::synth::schedule::NoiseSchedule;

/// One training batch with its sampled steps and noise.
#[derive(Clone, Debug)]
pub struct DiffusionBatch {
    /// Clean images, one per row.
    pub z0: Matrix,
    /// Ground-truth sketches, same shape as `z0`.
    pub sketches: Matrix,
    pub classes: Vec<usize>,
    /// 1-based diffusion steps.
    pub steps: Vec<usize>,
    /// Standard-normal noise, same shape as `z0`.
    pub noise: Matrix,
}

impl DiffusionBatch {
    pub fn len(&self) -> usize {
        self.z0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.z0.rows() == 0
    }

    /// Forward-diffused inputs `z_t`, one row per example.
    pub fn noised(&self, schedule: &NoiseSchedule) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.z0.rows(), self.z0.cols());
        for (r, &t) in self.steps.iter().enumerate() {
            let zt = schedule.forward_diffuse(self.z0.row(r), t, self.noise.row(r))?;
            out.row_mut(r).copy_from_slice(&zt);
        }
        Ok(out)
    }

    fn sketch_weights(&self, schedule: &NoiseSchedule) -> Vec<f64> {
        self.steps
            .iter()
            .map(|&t| schedule.sqrt_alpha_bar(t))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub ldm: f64,
    pub sketch: f64,
    pub total: f64,
}

/// Mean squared error between the injected and the predicted noise,
/// averaged over pixels and examples.
pub fn ldm_loss<P: NoisePredictor>(
    model: &P,
    schedule: &NoiseSchedule,
    batch: &DiffusionBatch,
) -> Result<f64> {
    let zt = batch.noised(schedule)?;
    let pred = model.predict_noise(&zt, &batch.steps, &batch.classes)?;
    if pred.shape() != batch.noise.shape() {
        return Err(Error::Shape("noise prediction shape".into()));
    }
    let n = pred.len().max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(batch.noise.data())
        .map(|(p, e)| (e - p) * (e - p))
        .sum::<f64>()
        / n)
}

/// `mean_b √ᾱ_{t_b} · mean_d |Ŝ_bd − S_bd|`.
pub fn sketch_loss(
    pred: &Matrix,
    target: &Matrix,
    steps: &[usize],
    schedule: &NoiseSchedule,
) -> Result<f64> {
    if pred.shape() != target.shape() || steps.len() != pred.rows() {
        return Err(Error::Shape("sketch loss inputs disagree".into()));
    }
    let d = pred.cols().max(1) as f64;
    let mut total = 0.0;
    for (r, &t) in steps.iter().enumerate() {
        schedule.check_step(t)?;
        let l1: f64 = pred
            .row(r)
            .iter()
            .zip(target.row(r))
            .map(|(p, s)| (p - s).abs())
            .sum::<f64>()
            / d;
        total += schedule.sqrt_alpha_bar(t) * l1;
    }
    Ok(total / steps.len().max(1) as f64)
}

/// `L = L_LDM + λ · L_s`.
pub fn combine_losses(ldm: f64, sketch: f64, lambda: f64) -> f64 {
    ldm + lambda * sketch
}

/// Evaluates the full objective without recording gradients.
pub fn total_loss(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    batch: &DiffusionBatch,
    lambda: f64,
) -> Result<LossBreakdown> {
    let ldm = ldm_loss(model, schedule, batch)?;
    let zt = batch.noised(schedule)?;
    let sk = model.predict_sketch(&zt, &batch.steps, &batch.classes)?;
    let sketch = sketch_loss(&sk, &batch.sketches, &batch.steps, schedule)?;
    Ok(LossBreakdown {
        ldm,
        sketch,
        total: combine_losses(ldm, sketch, lambda),
    })
}

/// Tape handles of a recorded objective.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub ldm: NodeId,
    pub sketch: NodeId,
    pub total: NodeId,
}

pub fn record_total_loss(
    model: &DenoiserModel,
    tape: &mut Tape,
    params: &[NodeId],
    schedule: &NoiseSchedule,
    batch: &DiffusionBatch,
    lambda: f64,
) -> Result<LossNodes> {
    let zt = batch.noised(schedule)?;
    let nodes = model.record(tape, params, &zt, &batch.steps, &batch.classes)?;
    let ldm = tape.mse(nodes.noise, &batch.noise)?;
    let sketch = tape.weighted_l1(
        nodes.sketch,
        &batch.sketches,
        &batch.sketch_weights(schedule),
    )?;
    let weighted = tape.scale(sketch, lambda);
    let total = tape.add(ldm, weighted)?;
    Ok(LossNodes { ldm, sketch, total })
}

/// Objective value and its gradient with respect to every model parameter.
pub fn loss_and_gradients(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    batch: &DiffusionBatch,
    lambda: f64,
) -> Result<(LossBreakdown, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = model.params.iter().map(|p| tape.var(p.clone())).collect();
    let nodes = record_total_loss(model, &mut tape, &ids, schedule, batch, lambda)?;
    let mut grads = tape.backward(nodes.total)?;
    let scalar = |id| tape.value(id).as_scalar().unwrap_or(f64::NAN);
    let breakdown = LossBreakdown {
        ldm: scalar(nodes.ldm),
        sketch: scalar(nodes.sketch),
        total: scalar(nodes.total),
    };
    let g = ids
        .iter()
        .zip(&model.params)
        .map(|(&id, p)| {
            grads
                .take(id)
                .unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()))
        })
        .collect();
    Ok((breakdown, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rigged {
        offset: f64,
        noise: Matrix,
    }

    impl NoisePredictor for Rigged {
        fn predict_noise(&self, _: &Matrix, _: &[usize], _: &[usize]) -> Result<Matrix> {
            Ok(self.noise.map(|e| e + self.offset))
        }
    }

    fn batch() -> DiffusionBatch {
        DiffusionBatch {
            z0: Matrix::from_rows(&[&[0.1, 0.5, 0.9], &[0.0, 1.0, 0.3]]),
            sketches: Matrix::from_rows(&[&[0.0, 1.0, 0.0], &[1.0, 1.0, 0.0]]),
            classes: vec![0, 1],
            steps: vec![3, 17],
            noise: Matrix::from_rows(&[&[0.3, -1.2, 0.8], &[2.0, 0.1, -0.4]]),
        }
    }

    #[test]
    fn exact_noise_gives_zero_and_unit_offset_gives_one() {
        let s = NoiseSchedule::linear(20, 1e-4, 0.02).unwrap();
        let b = batch();
        let exact = Rigged {
            offset: 0.0,
            noise: b.noise.clone(),
        };
        assert_eq!(ldm_loss(&exact, &s, &b).unwrap(), 0.0);
        let off = Rigged {
            offset: 1.0,
            noise: b.noise.clone(),
        };
        assert!((ldm_loss(&off, &s, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sketch_loss_direct_evaluation() {
        // ᾱ = 0.25 at the only step, mean |Ŝ − S| = 0.4  →  0.5 · 0.4
        let s = NoiseSchedule::from_betas(vec![0.75, 0.5]).unwrap();
        assert_eq!(s.alpha_bar(1), 0.25);
        let pred = Matrix::row_vector(&[0.4, 0.6, 0.2, 0.0]);
        let gt = Matrix::row_vector(&[0.0, 1.0, 0.0, 0.6]);
        let l = sketch_loss(&pred, &gt, &[1], &s).unwrap();
        assert!((l - 0.2).abs() < 1e-12);
        assert_eq!(sketch_loss(&gt, &gt, &[2], &s).unwrap(), 0.0);
    }

    #[test]
    fn sketch_loss_shrinks_with_step() {
        let s = NoiseSchedule::linear(200, 1e-4, 0.02).unwrap();
        let pred = Matrix::row_vector(&[0.3, 0.7]);
        let gt = Matrix::row_vector(&[0.0, 1.0]);
        let early = sketch_loss(&pred, &gt, &[10], &s).unwrap();
        let late = sketch_loss(&pred, &gt, &[150], &s).unwrap();
        assert!(early > late);
    }

    #[test]
    fn combination() {
        assert!((combine_losses(0.8, 0.2, 0.1) - 0.82).abs() < 1e-15);
        assert_eq!(combine_losses(0.8, 0.2, 0.0), 0.8);
    }
}
