//! Synthesizer training loop.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ImageSample, Split};
use crate::error::{Error, Result};
use crate::numeric::{Adam, AdamConfig, Matrix, RngStream};
use crate::synth::losses::{loss_and_gradients, total_loss, DiffusionBatch, LossBreakdown};
use crate::synth::model::{DenoiserConfig, DenoiserModel};
use crate::synth::schedule::NoiseSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub embed_dim: usize,
    pub hidden: [usize; 2],
    /// Weight of the sketch loss.
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            beta_min: 1e-4,
            beta_max: 0.02,
            embed_dim: 32,
            hidden: [128, 128],
            lambda: 0.1,
            lr: 1e-4,
            weight_decay: 1e-2,
            epochs: 40,
            batch_size: 16,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        NoiseSchedule::linear(self.steps, self.beta_min, self.beta_max)?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be >= 0", self.lambda));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be > 0", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay {} must be >= 0", self.weight_decay));
        }
        if self.epochs == 0
            || self.batch_size == 0
            || self.embed_dim == 0
            || self.hidden.contains(&0)
        {
            return bad("epochs, batch size, embedding and hidden widths must be positive".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_min, self.beta_max)
    }

    /// FNV-1a over a canonical rendering of every field.
    pub fn config_hash(&self) -> u64 {
        let text = format!(
            "steps={};beta_min={:?};beta_max={:?};embed={};hidden={:?};lambda={:?};lr={:?};wd={:?};epochs={};batch={}",
            self.steps,
            self.beta_min,
            self.beta_max,
            self.embed_dim,
            self.hidden,
            self.lambda,
            self.lr,
            self.weight_decay,
            self.epochs,
            self.batch_size
        );
        fnv1a(text.as_bytes())
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A trained synthesizer plus its training record.
#[derive(Clone, Debug)]
pub struct TrainedSynth {
    pub model: DenoiserModel,
    pub schedule: NoiseSchedule,
    pub config_hash: u64,
    /// Mean objective per epoch over the training batches.
    pub epoch_losses: Vec<LossBreakdown>,
    /// Objective on a fixed probe batch, before training and after each epoch.
    pub probe_losses: Vec<f64>,
}

impl TrainedSynth {
    pub fn initial_probe_loss(&self) -> f64 {
        self.probe_losses[0]
    }

    pub fn final_probe_loss(&self) -> f64 {
        *self
            .probe_losses
            .last()
            .expect("probe history is never empty")
    }
}

fn to_matrix<'a>(rows: impl Iterator<Item = &'a [f64]>, cols: usize) -> Matrix {
    let data: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
    Matrix::new(data.len() / cols.max(1), cols, data).expect("pixel data is finite")
}

/// Assembles a batch, drawing steps uniformly from `[1, T]` and fresh noise.
pub fn make_batch(
    samples: &[&ImageSample],
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> DiffusionBatch {
    let px = samples.first().map_or(0, |s| s.pixels.len());
    let z0 = to_matrix(samples.iter().map(|s| s.pixels.as_slice()), px);
    let sketch_rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.sketch.iter().map(|&b| b as f64).collect())
        .collect();
    let sketches = to_matrix(sketch_rows.iter().map(Vec::as_slice), px);
    let steps: Vec<usize> = samples
        .iter()
        .map(|_| 1 + rng.below(schedule.steps()))
        .collect();
    let noise = Matrix::from_fn(samples.len(), px, |_, _| rng.normal());
    DiffusionBatch {
        z0,
        sketches,
        classes: samples.iter().map(|s| s.label).collect(),
        steps,
        noise,
    }
}

const PROBE_SIZE: usize = 64;

/// Trains the conditional denoiser on the train split of `dataset`.
pub fn train_synthesizer(
    dataset: &Dataset,
    config: &SynthConfig,
    seed: u64,
) -> Result<TrainedSynth> {
    config.validate()?;
    let counts = dataset.train_class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Contract(format!(
            "class {c} has no training samples"
        )));
    }
    let schedule = config.schedule()?;
    let root = RngStream::new(seed, 0x5157);
    let model_cfg = DenoiserConfig {
        steps: config.steps,
        num_classes: dataset.num_classes,
        pixels: dataset.side * dataset.side,
        embed_dim: config.embed_dim,
        hidden: config.hidden,
    };
    let train: Vec<&ImageSample> = dataset.split(Split::Train).collect();
    let mut model = DenoiserModel::new(model_cfg, &mut root.derive(1))?;
    let second_moment = train
        .iter()
        .flat_map(|s| s.pixels.iter().map(|v| v * v))
        .sum::<f64>()
        / (train.len() * model_cfg.pixels) as f64;
    model.init_skip_gain(&schedule, second_moment)?;
    let mut opt = Adam::new(
        AdamConfig::adamw(config.lr, config.weight_decay),
        &model.params,
    );

    let mut probe_rng = root.derive(3);
    let mut probe_idx: Vec<usize> = (0..train.len()).collect();
    probe_rng.shuffle(&mut probe_idx);
    let probe_samples: Vec<&ImageSample> = probe_idx
        .iter()
        .take(PROBE_SIZE)
        .map(|&i| train[i])
        .collect();
    let probe = make_batch(&probe_samples, &schedule, &mut probe_rng);
    let mut probe_losses = vec![total_loss(&model, &schedule, &probe, config.lambda)?.total];

    let mut rng = root.derive(2);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut sum = LossBreakdown {
            ldm: 0.0,
            sketch: 0.0,
            total: 0.0,
        };
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let samples: Vec<&ImageSample> = chunk.iter().map(|&i| train[i]).collect();
            let batch = make_batch(&samples, &schedule, &mut rng);
            let (loss, grads) = loss_and_gradients(&model, &schedule, &batch, config.lambda)?;
            if !loss.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("loss {} after {batches} batches", loss.total),
                });
            }
            opt.step(&mut model.params, &grads);
            sum.ldm += loss.ldm;
            sum.sketch += loss.sketch;
            sum.total += loss.total;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        epoch_losses.push(LossBreakdown {
            ldm: sum.ldm / n,
            sketch: sum.sketch / n,
            total: sum.total / n,
        });
        model.trained_epochs = epoch as u32;
        let probe_loss = total_loss(&model, &schedule, &probe, config.lambda)?.total;
        if !probe_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: "probe loss is not finite".into(),
            });
        }
        probe_losses.push(probe_loss);
    }
    Ok(TrainedSynth {
        model,
        schedule,
        config_hash: config.config_hash(),
        epoch_losses,
        probe_losses,
    })
}
