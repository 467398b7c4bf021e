//! TOML experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ltcas_core::classify::{ClassifierConfig, Strategy};
use ltcas_core::data::LongTailProfile;
use ltcas_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Which synthesizer a pool comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Class-conditional only (λ = 0).
    Class,
    /// Class-conditional with sketch supervision (λ from the config).
    Sketch,
}

impl Generator {
    pub const ALL: [Generator; 2] = [Generator::Class, Generator::Sketch];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Class => "class",
            Generator::Sketch => "sketch",
        }
    }
}

impl FromStr for Generator {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown generator {s:?}")))
    }
}

/// One row of the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Baseline,
    SynClass,
    SynSketch,
    SynClassResample,
    SynClassRlCas,
    Ours,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Baseline,
        Variant::SynClass,
        Variant::SynSketch,
        Variant::SynClassResample,
        Variant::SynClassRlCas,
        Variant::Ours,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::SynClass => "syn-class",
            Variant::SynSketch => "syn-sketch",
            Variant::SynClassResample => "syn-class-resample",
            Variant::SynClassRlCas => "syn-class-rl-cas",
            Variant::Ours => "ours",
        }
    }

    /// Row label in the report table.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Baseline => "Baseline",
            Variant::SynClass => "+SynClass",
            Variant::SynSketch => "+SynSketch",
            Variant::SynClassResample => "+SynClass+Re-sampling",
            Variant::SynClassRlCas => "+SynClass+RL-CAS",
            Variant::Ours => "Ours",
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            Variant::Baseline => Strategy::Baseline,
            Variant::SynClass | Variant::SynSketch => Strategy::FixedMix,
            Variant::SynClassResample => Strategy::ClassBalancedResample,
            Variant::SynClassRlCas | Variant::Ours => Strategy::RlCas,
        }
    }

    pub fn generator(self) -> Option<Generator> {
        match self {
            Variant::Baseline => None,
            Variant::SynClass | Variant::SynClassResample | Variant::SynClassRlCas => {
                Some(Generator::Class)
            }
            Variant::SynSketch | Variant::Ours => Some(Generator::Sketch),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub classes: usize,
    pub head_count: usize,
    pub imbalance_ratio: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            head_count: 1000,
            imbalance_ratio: 47.98,
        }
    }
}

impl DataConfig {
    pub fn profile(&self) -> LongTailProfile {
        LongTailProfile::new(self.classes, self.head_count, self.imbalance_ratio)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    /// Images sampled per class from each synthesizer.
    pub per_class: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self { per_class: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Ablation rows trained by `train-clf` and `eval`.
    pub variants: Vec<Variant>,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub pool: PoolConfig,
    pub classifier: ClassifierConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            variants: Variant::ALL.to_vec(),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            pool: PoolConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> CliResult<()> {
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!(
                "seed {} exceeds {}",
                self.seed,
                i64::MAX
            )));
        }
        if self.variants.is_empty() {
            return Err(CliError::Config("at least one variant is required".into()));
        }
        let mut sorted = self.variants.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.variants.len() {
            return Err(CliError::Config("variants must not repeat".into()));
        }
        self.data.profile().validate()?;
        self.synth.validate()?;
        self.classifier.validate()?;
        let c = &self.classifier;
        let needed = c
            .fixed_count
            .max(c.rlcas.max_count)
            .max(c.batch.real_per_batch);
        if self.variants.iter().any(|v| v.generator().is_some()) && self.pool.per_class < needed {
            return Err(CliError::Config(format!(
                "pool.per_class {} is below the {needed} images a batch may draw from one class",
                self.pool.per_class
            )));
        }
        Ok(())
    }

    /// Synthesizer settings for a generator.
    pub fn synth_for(&self, generator: Generator) -> SynthConfig {
        match generator {
            Generator::Class => SynthConfig {
                lambda: 0.0,
                ..self.synth.clone()
            },
            Generator::Sketch => self.synth.clone(),
        }
    }

    pub fn generators(&self) -> Vec<Generator> {
        let mut g: Vec<Generator> = self.variants.iter().filter_map(|v| v.generator()).collect();
        g.sort();
        g.dedup();
        g
    }

    /// SHA-256 of the canonical TOML with the output directory cleared, so
    /// the same experiment hashes equally wherever it is written.
    pub fn hash(&self) -> String {
        let canonical = Self {
            out: PathBuf::new(),
            ..self.clone()
        };
        format!("{:x}", Sha256::digest(canonical.to_toml().as_bytes()))
    }
}
