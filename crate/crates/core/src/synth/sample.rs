//! Ancestral sampling and the synthetic image pool.

use std::fs;
use std::path::Path;

use crate::data::shapes::quantize;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, RngStream};
use crate::synth::model::{DenoiserModel, NoisePredictor};
use crate::synth::schedule::NoiseSchedule;

/// Runs the reverse chain from pure noise for `n` images of class `class`.
///
/// `x_{t−1} = (x_t − β_t/√(1−ᾱ_t) · ε̂) / √α_t + √β̃_t · z`, with no noise
/// added at the last step. Outputs are clipped to `[0, 1]`.
pub fn sample(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    class: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = RngStream::new(seed, 0x5A4D).derive(class as u64);
    sample_with(model, schedule, class, n, &mut rng, |_, _| {})
}

/// Like [`sample`] but with an explicit stream and a hook that sees every
/// intermediate state `(t, x_{t−1})`.
pub fn sample_with(
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    class: usize,
    n: usize,
    rng: &mut RngStream,
    mut observe: impl FnMut(usize, &Matrix),
) -> Result<Vec<Vec<f64>>> {
    if model.trained_epochs == 0 {
        return Err(Error::Model("checkpoint has not been trained".into()));
    }
    if model.config.steps != schedule.steps() {
        return Err(Error::Model(format!(
            "model has {} time embeddings but schedule has {} steps",
            model.config.steps,
            schedule.steps()
        )));
    }
    if class >= model.config.num_classes {
        return Err(Error::Contract(format!(
            "class {class} outside [0, {})",
            model.config.num_classes
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let px = model.config.pixels;
    let mut x = Matrix::from_fn(n, px, |_, _| rng.normal());
    let classes = vec![class; n];
    for t in (1..=schedule.steps()).rev() {
        let steps = vec![t; n];
        let eps = model.predict_noise(&x, &steps, &classes)?;
        let coef = schedule.beta(t) / (1.0 - schedule.alpha_bar(t)).sqrt();
        let inv_sqrt_alpha = 1.0 / schedule.alpha(t).sqrt();
        let sigma = schedule.posterior_variance(t).sqrt();
        for (xv, ev) in x.data_mut().iter_mut().zip(eps.data()) {
            *xv = inv_sqrt_alpha * (*xv - coef * ev);
        }
        if t > 1 {
            for xv in x.data_mut() {
                *xv += sigma * rng.normal();
            }
        }
        if !x.all_finite() {
            return Err(Error::Numeric(format!(
                "reverse chain produced NaN at step {t}"
            )));
        }
        observe(t, &x);
    }
    Ok((0..n)
        .map(|r| x.row(r).iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .collect())
}

/// Pre-generated class-conditional images.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthPool {
    /// `images[c]` are the images of class `c`.
    pub images: Vec<Vec<Vec<f64>>>,
    pub pixels: usize,
    /// Training epochs of the generating checkpoint.
    pub checkpoint_epoch: u32,
    pub seed: u64,
}

impl SynthPool {
    /// Samples `per_class` images for every class. Pixel values are
    /// quantized to the 8-bit grid so the pool survives a file round trip.
    pub fn generate(
        model: &DenoiserModel,
        schedule: &NoiseSchedule,
        per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        let images = (0..model.config.num_classes)
            .map(|c| {
                sample(model, schedule, c, per_class, seed).map(|imgs| {
                    imgs.into_iter()
                        .map(|img| img.into_iter().map(quantize).collect())
                        .collect()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            images,
            pixels: model.config.pixels,
            checkpoint_epoch: model.trained_epochs,
            seed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.images.len()
    }

    pub fn class_len(&self, class: usize) -> usize {
        self.images.get(class).map_or(0, Vec::len)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per_class = self.images.first().map_or(0, Vec::len);
        let mut out = Vec::new();
        out.extend_from_slice(POOL_MAGIC);
        out.extend_from_slice(&(self.num_classes() as u32).to_le_bytes());
        out.extend_from_slice(&(self.pixels as u32).to_le_bytes());
        out.extend_from_slice(&(per_class as u32).to_le_bytes());
        out.extend_from_slice(&self.checkpoint_epoch.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for class in &self.images {
            for img in class {
                out.extend(
                    img.iter()
                        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
                );
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != POOL_MAGIC {
            return Err(Error::Format("missing LTP1 magic".into()));
        }
        const HEADER: usize = 4 + 4 * 4 + 8;
        if bytes.len() < HEADER {
            return Err(Error::Corruption("truncated pool header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let classes = u32_at(4) as usize;
        let pixels = u32_at(8) as usize;
        let per_class = u32_at(12) as usize;
        let checkpoint_epoch = u32_at(16);
        let seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let expected = classes
            .checked_mul(per_class)
            .and_then(|v| v.checked_mul(pixels))
            .ok_or_else(|| Error::Corruption("pool header overflows".into()))?;
        if bytes.len() - HEADER != expected {
            return Err(Error::Corruption(format!(
                "pool payload has {} bytes, header implies {expected}",
                bytes.len() - HEADER
            )));
        }
        let mut chunks = bytes[HEADER..].chunks_exact(pixels.max(1));
        let images = (0..classes)
            .map(|_| {
                (0..per_class)
                    .map(|_| {
                        chunks
                            .next()
                            .expect("length checked")
                            .iter()
                            .map(|&b| b as f64 / 255.0)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            images,
            pixels,
            checkpoint_epoch,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub const POOL_MAGIC: &[u8; 4] = b"LTP1";
