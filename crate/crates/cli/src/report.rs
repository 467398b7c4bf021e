//! Ablation table in JSON and Markdown.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::config::{Generator, Variant};
use crate::stages::{MetricsRecord, PoolStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub variant: Variant,
    pub label: String,
    /// Percentages; `None` marks a row that was not run.
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub all: Option<f64>,
    pub many: Option<f64>,
    pub med: Option<f64>,
    pub few: Option<f64>,
    pub present: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRow {
    pub generator: Generator,
    pub mean_frechet: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<Row>,
    pub generators: Vec<GeneratorRow>,
}

impl Report {
    pub fn build(
        seed: u64,
        config_hash: &str,
        metrics: &[(Variant, Option<MetricsRecord>)],
        pools: &[(Generator, Option<PoolStats>)],
    ) -> Self {
        let rows = metrics
            .iter()
            .map(|(v, m)| {
                let t = m.as_ref().map(|m| &m.test);
                Row {
                    variant: *v,
                    label: v.label().to_string(),
                    f1: t.map(|t| t.f1),
                    precision: t.map(|t| t.precision),
                    recall: t.map(|t| t.recall),
                    all: t.map(|t| t.all),
                    many: t.and_then(|t| t.many),
                    med: t.and_then(|t| t.med),
                    few: t.and_then(|t| t.few),
                    present: m.is_some(),
                }
            })
            .collect();
        let generators = pools
            .iter()
            .map(|(g, s)| GeneratorRow {
                generator: *g,
                mean_frechet: s.as_ref().map(|s| s.mean_frechet),
            })
            .collect();
        Self {
            seed,
            config_hash: config_hash.to_string(),
            rows,
            generators,
        }
    }

    pub fn row(&self, v: Variant) -> Option<&Row> {
        self.rows.iter().find(|r| r.variant == v && r.present)
    }

    pub fn to_markdown(&self) -> String {
        let cell = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
        let mut s = String::new();
        let _ = writeln!(s, "# Ablation report\n");
        let _ = writeln!(
            s,
            "seed {}, config {}\n",
            self.seed,
            &self.config_hash[..12.min(self.config_hash.len())]
        );
        let _ = writeln!(s, "| Method | F1 | Pre | Rec | All | Many | Med | Few |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
        for r in &self.rows {
            if r.present {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} | {} | {} |",
                    r.label,
                    cell(r.f1),
                    cell(r.precision),
                    cell(r.recall),
                    cell(r.all),
                    cell(r.many),
                    cell(r.med),
                    cell(r.few)
                );
            } else {
                let _ = writeln!(s, "| {} | absent | | | | | | |", r.label);
            }
        }
        let _ = writeln!(s, "\n| Generator | mean pixel Fréchet distance |");
        let _ = writeln!(s, "|---|---|");
        for g in &self.generators {
            let v = g
                .mean_frechet
                .map_or("absent".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(s, "| {} | {v} |", g.generator.name());
        }
        s
    }
}
