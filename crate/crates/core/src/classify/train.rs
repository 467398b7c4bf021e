//! Classifier training under the competing batch-composition strategies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{AllAccuracy, ConfusionMatrix, MetricsReport, ShotThresholds};
use super::model::{prior_from_counts, ClassifierModel, ClassifierState};
use crate::data::{Dataset, ImageSample, Split};
use crate::error::{Error, Result};
use crate::numeric::{AdamConfig, Matrix, RngStream};
use crate::rlcas::{
    assemble_batch, compose_batch, resample_fill, BatchConfig, EpisodeEnvironment, EpochLog,
    RealSampler, RlCasConfig, RlCasRunner, SamplerState,
};
use crate::synth::SynthPool;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Real data only.
    Baseline,
    /// A constant number of synthetic samples per class in every batch.
    FixedMix,
    /// Synthetic samples lift every class to the batch's head-class count.
    ClassBalancedResample,
    /// Per-class counts chosen by the RL-CAS agents.
    RlCas,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Baseline,
        Strategy::FixedMix,
        Strategy::ClassBalancedResample,
        Strategy::RlCas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::FixedMix => "fixed-mix",
            Strategy::ClassBalancedResample => "class-balanced-resample",
            Strategy::RlCas => "rl-cas",
        }
    }

    pub fn uses_pool(self) -> bool {
        self != Strategy::Baseline
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

/// Metric fed back as the episode score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMetric {
    #[default]
    MacroF1,
    Accuracy,
}

impl ValidationMetric {
    /// Score in `[0, 1]`.
    pub fn score(self, confusion: &ConfusionMatrix) -> f64 {
        match self {
            ValidationMetric::MacroF1 => confusion.macro_f1(),
            ValidationMetric::Accuracy => confusion.accuracy(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub hidden: [usize; 2],
    pub lr: f64,
    pub epochs: usize,
    pub fixed_count: usize,
    pub batch: BatchConfig,
    pub metric: ValidationMetric,
    pub thresholds: ShotThresholds,
    pub all_mode: AllAccuracy,
    pub rlcas: RlCasConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: [128, 64],
            lr: 1e-3,
            epochs: 30,
            fixed_count: 2,
            batch: BatchConfig::default(),
            metric: ValidationMetric::MacroF1,
            thresholds: ShotThresholds::default(),
            all_mode: AllAccuracy::Sample,
            rlcas: RlCasConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("classifier hidden widths must be > 0".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "classifier lr {} must be > 0",
                self.lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("classifier epochs must be ≥ 1".into()));
        }
        if self.batch.real_per_batch == 0 {
            return Err(Error::Config("real samples per batch must be ≥ 1".into()));
        }
        self.thresholds.validate()?;
        self.rlcas.validate()
    }

    /// Epoch budget for a strategy; RL-CAS runs one classifier epoch per agent epoch.
    pub fn epochs_for(&self, strategy: Strategy) -> usize {
        match strategy {
            Strategy::RlCas => self.rlcas.agent_epochs,
            _ => self.epochs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Validation score in `[0, 1]`.
    pub val_metric: f64,
    /// Synthetic images used this epoch, per class.
    pub synthetic_per_class: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub model: ClassifierModel,
    pub history: Vec<EpochRecord>,
    pub rl_log: Vec<EpochLog>,
}

pub fn stack_pixels(samples: &[&ImageSample]) -> Result<Matrix> {
    let cols = samples.first().map_or(0, |s| s.pixels.len());
    let mut data = Vec::with_capacity(samples.len() * cols);
    for s in samples {
        if s.pixels.len() != cols {
            return Err(Error::Shape("ragged sample sizes".into()));
        }
        data.extend_from_slice(&s.pixels);
    }
    Matrix::new(samples.len(), cols, data)
}

pub fn confusion_on(model: &ClassifierModel, samples: &[&ImageSample]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(model.num_classes());
    for chunk in samples.chunks(256) {
        let pred = model.predict(&stack_pixels(chunk)?)?;
        let truth: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let part = ConfusionMatrix::from_predictions(model.num_classes(), &truth, &pred)?;
        for (row, add) in cm.counts.iter_mut().zip(&part.counts) {
            for (v, a) in row.iter_mut().zip(add) {
                *v += a;
            }
        }
    }
    Ok(cm)
}

pub fn evaluate(
    model: &ClassifierModel,
    samples: &[&ImageSample],
    train_counts: &[usize],
    thresholds: &ShotThresholds,
    all_mode: AllAccuracy,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty split".into()));
    }
    MetricsReport::from_confusion(
        confusion_on(model, samples)?,
        train_counts,
        thresholds,
        all_mode,
    )
}

fn divergence(epoch: usize, loss: f64) -> Error {
    Error::Divergence {
        epoch,
        detail: format!("classifier loss {loss}"),
    }
}

/// Trains copies of a classifier for one pass under a sampler state.
pub struct ClassifierEnvironment<'a> {
    pub train: &'a [&'a ImageSample],
    pub val: &'a [&'a ImageSample],
    pub pool: Option<&'a SynthPool>,
    pub batch: BatchConfig,
    pub metric: ValidationMetric,
    pub num_classes: usize,
}

impl EpisodeEnvironment for ClassifierEnvironment<'_> {
    type Checkpoint = ClassifierState;

    fn run_episode(
        &self,
        start: &ClassifierState,
        state: &SamplerState,
        rng: &mut RngStream,
    ) -> Result<(ClassifierState, f64)> {
        let mut clf = start.clone();
        let mut sampler = RealSampler::new(self.train, self.num_classes, self.batch.real_mode)?;
        for _ in 0..self.batch.batches_per_epoch(self.train.len()) {
            let b = compose_batch(state, self.train, &mut sampler, self.pool, &self.batch, rng)?;
            let loss = clf.step(&b.x, &b.labels)?;
            if !loss.is_finite() {
                return Err(divergence(0, loss));
            }
        }
        let score = self.metric.score(&confusion_on(&clf.model, self.val)?);
        Ok((clf, score))
    }
}

/// Trains a classifier on `dataset` under `strategy`.
pub fn train_classifier(
    dataset: &Dataset,
    pool: Option<&SynthPool>,
    strategy: Strategy,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<TrainingOutcome> {
    config.validate()?;
    if strategy.uses_pool() && pool.is_none() {
        return Err(Error::Contract(format!(
            "strategy {strategy} needs a synthetic pool"
        )));
    }
    let c = dataset.num_classes;
    let train: Vec<&ImageSample> = dataset.split(Split::Train).collect();
    let val: Vec<&ImageSample> = dataset.split(Split::Val).collect();
    if train.is_empty() || val.is_empty() {
        return Err(Error::Contract(
            "train and validation splits must be non-empty".into(),
        ));
    }
    let prior = prior_from_counts(&dataset.train_class_counts())?;
    let pixels = train[0].pixels.len();

    let root = RngStream::new(seed, 0xC1A5);
    let model = ClassifierModel::new(pixels, config.hidden, prior, &mut root.derive(1))?;
    let mut clf = ClassifierState::new(model, AdamConfig::adam(config.lr));
    let mut rng = root.derive(2);
    let epochs = config.epochs_for(strategy);
    let mut history = Vec::with_capacity(epochs);
    let mut rl_log = Vec::new();

    if strategy == Strategy::RlCas {
        let env = ClassifierEnvironment {
            train: &train,
            val: &val,
            pool,
            batch: config.batch,
            metric: config.metric,
            num_classes: c,
        };
        let mut runner = RlCasRunner::new(c, config.rlcas.clone())?;
        let nb = config.batch.batches_per_epoch(train.len());
        for epoch in 1..=epochs {
            let mut epoch_rng = rng.derive(epoch as u64);
            let (best, log) = runner.run_epoch(&env, &clf, &mut epoch_rng)?;
            clf = best;
            history.push(EpochRecord {
                epoch,
                mean_loss: f64::NAN,
                val_metric: log.metrics[log.winner],
                synthetic_per_class: log.states[log.winner].iter().map(|s| s * nb).collect(),
            });
            rl_log.push(log);
        }
    } else {
        let mut sampler = RealSampler::new(&train, c, config.batch.real_mode)?;
        let fixed = vec![config.fixed_count; c];
        let zeros = vec![0; c];
        for epoch in 1..=epochs {
            let mut loss_sum = 0.0;
            let mut used = vec![0; c];
            let nb = config.batch.batches_per_epoch(train.len());
            for _ in 0..nb {
                let real = sampler.next_indices(config.batch.real_per_batch, &mut rng);
                let counts = match strategy {
                    Strategy::Baseline => zeros.clone(),
                    Strategy::FixedMix => fixed.clone(),
                    Strategy::ClassBalancedResample => {
                        let mut hist = vec![0; c];
                        for &i in &real {
                            hist[train[i].label] += 1;
                        }
                        resample_fill(&hist)
                    }
                    Strategy::RlCas => unreachable!(),
                };
                let b = assemble_batch(&counts, &train, &real, pool, &mut rng)?;
                let loss = clf.step(&b.x, &b.labels)?;
                if !loss.is_finite() {
                    return Err(divergence(epoch, loss));
                }
                loss_sum += loss;
                for (u, s) in used.iter_mut().zip(&counts) {
                    *u += s;
                }
            }
            let val_metric = config.metric.score(&confusion_on(&clf.model, &val)?);
            history.push(EpochRecord {
                epoch,
                mean_loss: loss_sum / nb as f64,
                val_metric,
                synthetic_per_class: used,
            });
        }
    }
    Ok(TrainingOutcome {
        model: clf.model,
        history,
        rl_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!(matches!("smote".parse::<Strategy>(), Err(Error::Config(_))));
    }
}
