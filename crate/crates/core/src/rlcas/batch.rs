//! Mini-batch construction from real train samples and a synthetic pool.

use serde::{Deserialize, Serialize};

use super::policy::SamplerState;
use crate::data::ImageSample;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, RngStream};
use crate::synth::SynthPool;

/// How the real portion of a batch is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealMode {
    /// Uniform over train samples, preserving the long-tailed histogram.
    #[default]
    Empirical,
    /// Uniform over classes, then uniform within the class.
    ClassBalanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub real_per_batch: usize,
    pub real_mode: RealMode,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            real_per_batch: 32,
            real_mode: RealMode::Empirical,
        }
    }
}

impl BatchConfig {
    /// `⌈N / R_real⌉`, the number of batches in one pass over `n` samples.
    pub fn batches_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.real_per_batch.max(1))
    }
}

/// Feeds real train indices to batches, one shuffled pass at a time.
#[derive(Clone, Debug)]
pub struct RealSampler {
    labels: Vec<usize>,
    by_class: Vec<Vec<usize>>,
    mode: RealMode,
    order: Vec<usize>,
    pos: usize,
}

impl RealSampler {
    pub fn new(train: &[&ImageSample], num_classes: usize, mode: RealMode) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Contract("empty train split".into()));
        }
        let labels: Vec<usize> = train.iter().map(|s| s.label).collect();
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            by_class
                .get_mut(y)
                .ok_or_else(|| Error::Contract(format!("label {y} out of range")))?
                .push(i);
        }
        Ok(Self {
            labels,
            by_class,
            mode,
            order: Vec::new(),
            pos: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn next_indices(&mut self, n: usize, rng: &mut RngStream) -> Vec<usize> {
        match self.mode {
            RealMode::Empirical => {
                let mut out = Vec::with_capacity(n);
                while out.len() < n {
                    if self.pos == self.order.len() {
                        self.order = (0..self.labels.len()).collect();
                        rng.shuffle(&mut self.order);
                        self.pos = 0;
                    }
                    out.push(self.order[self.pos]);
                    self.pos += 1;
                }
                out
            }
            RealMode::ClassBalanced => {
                let present: Vec<usize> = (0..self.by_class.len())
                    .filter(|&c| !self.by_class[c].is_empty())
                    .collect();
                (0..n)
                    .map(|_| {
                        let members = &self.by_class[present[rng.below(present.len())]];
                        members[rng.below(members.len())]
                    })
                    .collect()
            }
        }
    }
}

/// A composed batch: features, labels and the synthetic class histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub real_count: usize,
    pub synthetic_counts: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.labels.len()
    }
}

/// `R_real` real samples plus exactly `s_i` distinct pool images of class `i`.
pub fn compose_batch(
    state: &SamplerState,
    train: &[&ImageSample],
    sampler: &mut RealSampler,
    pool: Option<&SynthPool>,
    config: &BatchConfig,
    rng: &mut RngStream,
) -> Result<Batch> {
    let real = sampler.next_indices(config.real_per_batch, rng);
    assemble_batch(&state.counts, train, &real, pool, rng)
}

/// Builds a batch from chosen real indices plus `counts[i]` pool images of class `i`.
pub fn assemble_batch(
    counts: &[usize],
    train: &[&ImageSample],
    real: &[usize],
    pool: Option<&SynthPool>,
    rng: &mut RngStream,
) -> Result<Batch> {
    let synth_total: usize = counts.iter().sum();
    let pixels = train
        .first()
        .map(|s| s.pixels.len())
        .ok_or_else(|| Error::Contract("empty train split".into()))?;
    if synth_total > 0 {
        let pool = pool.ok_or(Error::Pool {
            class: counts.iter().position(|&s| s > 0).unwrap_or(0),
            needed: synth_total,
            available: 0,
        })?;
        if pool.num_classes() != counts.len() {
            return Err(Error::Shape(format!(
                "pool has {} classes, state has {}",
                pool.num_classes(),
                counts.len()
            )));
        }
        if pool.pixels != pixels {
            return Err(Error::Shape(format!(
                "pool images have {} pixels, train images {pixels}",
                pool.pixels
            )));
        }
        for (class, &s) in counts.iter().enumerate() {
            if pool.class_len(class) < s {
                return Err(Error::Pool {
                    class,
                    needed: s,
                    available: pool.class_len(class),
                });
            }
        }
    }

    let total = real.len() + synth_total;
    let mut data = Vec::with_capacity(total * pixels);
    let mut labels = Vec::with_capacity(total);
    for &i in real {
        data.extend_from_slice(&train[i].pixels);
        labels.push(train[i].label);
    }
    if let Some(pool) = pool.filter(|_| synth_total > 0) {
        for (class, &s) in counts.iter().enumerate() {
            if s == 0 {
                continue;
            }
            for idx in draw_distinct(pool.class_len(class), s, rng) {
                data.extend_from_slice(&pool.images[class][idx]);
                labels.push(class);
            }
        }
    }
    Ok(Batch {
        x: Matrix::new(total, pixels, data)?,
        labels,
        real_count: real.len(),
        synthetic_counts: counts.to_vec(),
    })
}

/// `k` distinct indices from `0..n` by partial Fisher–Yates.
fn draw_distinct(n: usize, k: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Synthetic counts that lift every class to the largest real count in `real_hist`.
pub fn resample_fill(real_hist: &[usize]) -> Vec<usize> {
    let head = real_hist.iter().copied().max().unwrap_or(0);
    real_hist.iter().map(|&h| head - h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_to_head() {
        assert_eq!(resample_fill(&[10, 3, 0]), vec![0, 7, 10]);
    }

    #[test]
    fn distinct_draws() {
        let mut rng = RngStream::new(1, 0);
        let mut d = draw_distinct(10, 10, &mut rng);
        d.sort();
        assert_eq!(d, (0..10).collect::<Vec<_>>());
    }
}
