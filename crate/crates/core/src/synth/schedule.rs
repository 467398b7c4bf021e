//! Linear variance schedule for the forward diffusion process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `β_t` linearly spaced over `t = 1..=T`, with `α_t = 1 − β_t` and
/// `ᾱ_t = Π_{s≤t} α_s`. Public accessors take 1-based steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!(
                "need at least 2 diffusion steps, got {steps}"
            )));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::Config(format!(
                "beta range [{beta_min}, {beta_max}] must satisfy 0 < min <= max < 1"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
            .collect();
        Self::from_betas(betas)
    }

    /// Rebuilds the derived tables from stored betas.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Config("betas must lie in (0, 1) with T >= 2".into()));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut prod = 1.0;
        for a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn idx(&self, t: usize) -> usize {
        assert!(
            (1..=self.steps()).contains(&t),
            "diffusion step {t} outside [1, {}]",
            self.steps()
        );
        t - 1
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if (1..=self.steps()).contains(&t) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "diffusion step {t} outside [1, {}]",
                self.steps()
            )))
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[self.idx(t)]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[self.idx(t)]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[self.idx(t)]
    }

    /// `√ᾱ_t`, the signal scale at step `t` and the sketch-loss weight.
    pub fn sqrt_alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar(t).sqrt()
    }

    /// `β̃_t = β_t (1 − ᾱ_{t−1}) / (1 − ᾱ_t)` with `ᾱ_0 = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        let prev = if t > 1 { self.alpha_bar(t - 1) } else { 1.0 };
        self.beta(t) * (1.0 - prev) / (1.0 - self.alpha_bar(t))
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `z_t = √ᾱ_t · z_0 + √(1 − ᾱ_t) · ε`.
    pub fn forward_diffuse(&self, z0: &[f64], t: usize, noise: &[f64]) -> Result<Vec<f64>> {
        self.check_step(t)?;
        if z0.len() != noise.len() {
            return Err(Error::Shape(format!(
                "signal has {} values, noise {}",
                z0.len(),
                noise.len()
            )));
        }
        let ab = self.alpha_bar(t);
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(z0.iter().zip(noise).map(|(x, e)| s * x + n * e).collect())
    }
}
