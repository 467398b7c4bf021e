//! Pipeline stages. Each stage reads its inputs through the manifest and
//! records what it writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ltcas_core::classify::{
    frechet_distance, stack_pixels, train_classifier, ClassifierModel, ConfusionMatrix,
    EpochRecord, MetricsReport,
};
use ltcas_core::data::{generate_dataset, load_dataset, save_dataset, Dataset, ImageSample, Split};
use ltcas_core::rlcas::EpochLog;
use ltcas_core::synth::{train_synthesizer, Checkpoint, SynthPool};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Generator, Variant};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

pub const DATASET_FILE: &str = "dataset.ltg";
pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

pub fn checkpoint_file(g: Generator) -> String {
    format!("synth-{}.ltck", g.name())
}

pub fn pool_file(g: Generator) -> String {
    format!("pool-{}.ltp", g.name())
}

pub fn pool_stats_file(g: Generator) -> String {
    format!("pool-{}.json", g.name())
}

pub fn model_file(v: Variant) -> String {
    format!("clf-{}.ltcm", v.name())
}

pub fn history_file(v: Variant) -> String {
    format!("history-{}.json", v.name())
}

pub fn metrics_file(v: Variant) -> String {
    format!("metrics-{}.json", v.name())
}

/// An output directory bound to one resolved config.
pub struct Workspace {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub manifest: Manifest,
}

impl Workspace {
    /// Starts a fresh run: the old manifest is replaced.
    pub fn create(config: ExperimentConfig) -> CliResult<Self> {
        config.validate()?;
        let out = config.out.clone();
        fs::create_dir_all(&out)?;
        fs::write(out.join(CONFIG_FILE), config.to_toml())?;
        let manifest = Manifest::new(config.hash());
        manifest.save(&out)?;
        Ok(Self {
            config,
            out,
            manifest,
        })
    }

    /// Continues a run started by `gen-data` with the same config.
    pub fn open(config: ExperimentConfig) -> CliResult<Self> {
        config.validate()?;
        let out = config.out.clone();
        let manifest = Manifest::load(&out)?.ok_or_else(|| CliError::Dependency {
            stage: "gen-data",
            detail: format!("no manifest in {}", out.display()),
        })?;
        if manifest.config_hash != config.hash() {
            return Err(CliError::Dependency {
                stage: "gen-data",
                detail: format!(
                    "{} was produced under a different config; rerun from gen-data",
                    out.display()
                ),
            });
        }
        Ok(Self {
            config,
            out,
            manifest,
        })
    }

    fn record(&mut self, file: &str, stage: &str, started: Instant) -> CliResult<()> {
        self.manifest
            .record(&self.out, file, stage, started.elapsed().as_secs_f64())?;
        self.manifest.save(&self.out)
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    pub fn dataset(&self) -> CliResult<Dataset> {
        Ok(load_dataset(&self.manifest.verify(
            &self.out,
            DATASET_FILE,
            "gen-data",
        )?)?)
    }

    pub fn checkpoint(&self, g: Generator) -> CliResult<Checkpoint> {
        let path = self
            .manifest
            .verify(&self.out, &checkpoint_file(g), "train-synth")?;
        Ok(Checkpoint::load(&path)?)
    }

    pub fn pool(&self, g: Generator) -> CliResult<SynthPool> {
        let path = self
            .manifest
            .verify(&self.out, &pool_file(g), "sample-pool")?;
        Ok(SynthPool::load(&path)?)
    }

    pub fn model(&self, v: Variant) -> CliResult<ClassifierModel> {
        let path = self
            .manifest
            .verify(&self.out, &model_file(v), "train-clf")?;
        Ok(ClassifierModel::from_bytes(&fs::read(path)?)?)
    }

    pub fn metrics(&self, v: Variant) -> CliResult<Option<MetricsRecord>> {
        if !self.manifest.contains(&metrics_file(v)) {
            return Ok(None);
        }
        let path = self.manifest.verify(&self.out, &metrics_file(v), "eval")?;
        Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
    }

    pub fn pool_stats(&self, g: Generator) -> CliResult<Option<PoolStats>> {
        if !self.manifest.contains(&pool_stats_file(g)) {
            return Ok(None);
        }
        let path = self
            .manifest
            .verify(&self.out, &pool_stats_file(g), "sample-pool")?;
        Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn log(stage: &str, msg: impl AsRef<str>) {
    eprintln!("[{stage}] {}", msg.as_ref());
}

pub fn gen_data(ws: &mut Workspace) -> CliResult<()> {
    let t = Instant::now();
    let d = generate_dataset(&ws.config.data.profile(), ws.config.seed)?;
    save_dataset(&d, &ws.path(DATASET_FILE))?;
    log(
        "gen-data",
        format!("{} classes, counts {:?}", d.num_classes, d.class_counts),
    );
    ws.record(DATASET_FILE, "gen-data", t)
}

pub fn train_synth(ws: &mut Workspace, generators: &[Generator]) -> CliResult<()> {
    let d = ws.dataset()?;
    for &g in generators {
        let t = Instant::now();
        let cfg = ws.config.synth_for(g);
        let trained = train_synthesizer(&d, &cfg, ws.config.seed)?;
        log(
            "train-synth",
            format!(
                "{}: λ={} probe loss {:.4} -> {:.4}",
                g.name(),
                cfg.lambda,
                trained.initial_probe_loss(),
                trained.final_probe_loss()
            ),
        );
        let ck = Checkpoint {
            config_hash: cfg.config_hash(),
            model: trained.model,
            schedule: trained.schedule,
        };
        ck.save(&ws.path(&checkpoint_file(g)))?;
        ws.record(&checkpoint_file(g), "train-synth", t)?;
    }
    Ok(())
}

/// Per-class pixel-space Fréchet distance between a pool and the real train split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub generator: Generator,
    pub per_class_frechet: Vec<f64>,
    pub mean_frechet: f64,
}

pub fn pool_stats(d: &Dataset, pool: &SynthPool, generator: Generator) -> CliResult<PoolStats> {
    let mut per_class = Vec::with_capacity(d.num_classes);
    for c in 0..d.num_classes {
        let real: Vec<Vec<f64>> = d
            .split(Split::Train)
            .filter(|s| s.label == c)
            .map(|s| s.pixels.clone())
            .collect();
        per_class.push(frechet_distance(&real, &pool.images[c])?);
    }
    let mean_frechet = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(PoolStats {
        generator,
        per_class_frechet: per_class,
        mean_frechet,
    })
}

pub fn sample_pool(ws: &mut Workspace, generators: &[Generator]) -> CliResult<()> {
    let d = ws.dataset()?;
    for &g in generators {
        let t = Instant::now();
        let ck = ws.checkpoint(g)?;
        let pool = SynthPool::generate(
            &ck.model,
            &ck.schedule,
            ws.config.pool.per_class,
            ws.config.seed,
        )?;
        pool.save(&ws.path(&pool_file(g)))?;
        ws.record(&pool_file(g), "sample-pool", t)?;
        // Statistics are taken on the reloaded (quantized) pool.
        let stats = pool_stats(&d, &ws.pool(g)?, g)?;
        log(
            "sample-pool",
            format!(
                "{}: mean Fréchet distance {:.3}",
                g.name(),
                stats.mean_frechet
            ),
        );
        write_json(&ws.path(&pool_stats_file(g)), &stats)?;
        ws.record(&pool_stats_file(g), "sample-pool", t)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct History<'a> {
    variant: Variant,
    epochs: &'a [EpochRecord],
    rl_cas: &'a [EpochLog],
}

pub fn train_clf(ws: &mut Workspace, variants: &[Variant]) -> CliResult<()> {
    let d = ws.dataset()?;
    for &v in variants {
        let t = Instant::now();
        let pool = v.generator().map(|g| ws.pool(g)).transpose()?;
        let out = train_classifier(
            &d,
            pool.as_ref(),
            v.strategy(),
            &ws.config.classifier,
            ws.config.seed,
        )?;
        fs::write(ws.path(&model_file(v)), out.model.to_bytes())?;
        ws.record(&model_file(v), "train-clf", t)?;
        write_json(
            &ws.path(&history_file(v)),
            &History {
                variant: v,
                epochs: &out.history,
                rl_cas: &out.rl_log,
            },
        )?;
        ws.record(&history_file(v), "train-clf", t)?;
        let last = out.history.last().map_or(0.0, |h| h.val_metric);
        log(
            "train-clf",
            format!("{v}: final validation metric {last:.4}"),
        );
    }
    Ok(())
}

/// Anything that labels samples.
pub trait Predictor {
    fn predict_samples(&self, samples: &[&ImageSample]) -> CliResult<Vec<usize>>;
}

impl Predictor for ClassifierModel {
    fn predict_samples(&self, samples: &[&ImageSample]) -> CliResult<Vec<usize>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(256) {
            out.extend(self.predict(&stack_pixels(chunk)?)?);
        }
        Ok(out)
    }
}

/// Test-split metrics of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub variant: Variant,
    pub label: String,
    pub seed: u64,
    pub config_hash: String,
    pub test: MetricsReport,
}

pub fn evaluate_predictor(
    ws: &Workspace,
    d: &Dataset,
    variant: Variant,
    predictor: &dyn Predictor,
) -> CliResult<MetricsRecord> {
    let test: Vec<&ImageSample> = d.split(Split::Test).collect();
    let pred = predictor.predict_samples(&test)?;
    let truth: Vec<usize> = test.iter().map(|s| s.label).collect();
    let cm = ConfusionMatrix::from_predictions(d.num_classes, &truth, &pred)?;
    let cfg = &ws.config.classifier;
    let report =
        MetricsReport::from_confusion(cm, &d.train_class_counts(), &cfg.thresholds, cfg.all_mode)?;
    Ok(MetricsRecord {
        variant,
        label: variant.label().to_string(),
        seed: ws.config.seed,
        config_hash: ws.manifest.config_hash.clone(),
        test: report,
    })
}

pub fn write_metrics(
    ws: &mut Workspace,
    record: &MetricsRecord,
    started: Instant,
) -> CliResult<()> {
    let file = metrics_file(record.variant);
    write_json(&ws.path(&file), record)?;
    ws.record(&file, "eval", started)
}

pub fn eval(ws: &mut Workspace, variants: &[Variant]) -> CliResult<()> {
    let d = ws.dataset()?;
    for &v in variants {
        let t = Instant::now();
        let model = ws.model(v)?;
        let record = evaluate_predictor(ws, &d, v, &model)?;
        log(
            "eval",
            format!("{v}: F1 {:.2} All {:.2}", record.test.f1, record.test.all),
        );
        write_metrics(ws, &record, t)?;
    }
    Ok(())
}

pub fn report(ws: &mut Workspace) -> CliResult<crate::report::Report> {
    let t = Instant::now();
    let rows = Variant::ALL
        .into_iter()
        .map(|v| ws.metrics(v).map(|m| (v, m)))
        .collect::<CliResult<Vec<_>>>()?;
    let pools = crate::config::Generator::ALL
        .into_iter()
        .map(|g| ws.pool_stats(g).map(|s| (g, s)))
        .collect::<CliResult<Vec<_>>>()?;
    let report =
        crate::report::Report::build(ws.config.seed, &ws.manifest.config_hash, &rows, &pools);
    write_json(&ws.path(REPORT_JSON), &report)?;
    fs::write(ws.path(REPORT_MD), report.to_markdown())?;
    ws.record(REPORT_JSON, "report", t)?;
    ws.record(REPORT_MD, "report", t)?;
    Ok(report)
}

/// Every stage in order for the configured variants.
pub fn pipeline(config: ExperimentConfig) -> CliResult<crate::report::Report> {
    let mut ws = Workspace::create(config)?;
    let generators = ws.config.generators();
    let variants = ws.config.variants.clone();
    gen_data(&mut ws)?;
    train_synth(&mut ws, &generators)?;
    sample_pool(&mut ws, &generators)?;
    train_clf(&mut ws, &variants)?;
    eval(&mut ws, &variants)?;
    report(&mut ws)
}
