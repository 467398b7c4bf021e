//! Confusion-matrix metrics: macro F1/precision/recall, overall accuracy
//! and Many/Med/Few shot accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_predictions(
        num_classes: usize,
        truth: &[usize],
        predicted: &[usize],
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = Self::new(num_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::Contract(format!(
                    "class index out of range ({t}, {p})"
                )));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    /// `TP / (TP + FP)`, with `0/0 → 0`.
    pub fn precision(&self, c: usize) -> f64 {
        ratio(self.true_positives(c), self.col_sum(c))
    }

    /// `TP / (TP + FN)`, with `0/0 → 0`.
    pub fn recall(&self, c: usize) -> f64 {
        ratio(self.true_positives(c), self.row_sum(c))
    }

    pub fn f1(&self, c: usize) -> f64 {
        let (p, r) = (self.precision(c), self.recall(c));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn macro_f1(&self) -> f64 {
        mean((0..self.num_classes()).map(|c| self.f1(c)))
    }

    pub fn macro_precision(&self) -> f64 {
        mean((0..self.num_classes()).map(|c| self.precision(c)))
    }

    pub fn macro_recall(&self) -> f64 {
        mean((0..self.num_classes()).map(|c| self.recall(c)))
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShotGroup {
    Many,
    Med,
    Few,
}

/// Classes with `count >= many_min` are Many, `count <= few_max` Few, the
/// rest Med.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotThresholds {
    pub many_min: usize,
    pub few_max: usize,
}

impl Default for ShotThresholds {
    fn default() -> Self {
        Self {
            many_min: 100,
            few_max: 20,
        }
    }
}

impl ShotThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.few_max >= self.many_min {
            return Err(Error::Config(format!(
                "few_max {} must be below many_min {}",
                self.few_max, self.many_min
            )));
        }
        Ok(())
    }

    pub fn group(&self, train_count: usize) -> ShotGroup {
        if train_count >= self.many_min {
            ShotGroup::Many
        } else if train_count <= self.few_max {
            ShotGroup::Few
        } else {
            ShotGroup::Med
        }
    }

    pub fn assign(&self, train_counts: &[usize]) -> Vec<ShotGroup> {
        train_counts.iter().map(|&n| self.group(n)).collect()
    }
}

/// How the "All" accuracy is aggregated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllAccuracy {
    /// Correct predictions over all evaluated samples.
    #[default]
    Sample,
    /// Mean of per-class recalls.
    ClassAveraged,
}

/// Evaluation summary. Every percentage lies in `[0, 100]`; shot groups
/// with no member class are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub all: f64,
    pub many: Option<f64>,
    pub med: Option<f64>,
    pub few: Option<f64>,
    pub per_class_recall: Vec<f64>,
    pub groups: Vec<ShotGroup>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(
        confusion: ConfusionMatrix,
        train_counts: &[usize],
        thresholds: &ShotThresholds,
        all_mode: AllAccuracy,
    ) -> Result<Self> {
        let c = confusion.num_classes();
        if train_counts.len() != c {
            return Err(Error::Shape(format!(
                "{} train counts for {c} classes",
                train_counts.len()
            )));
        }
        let groups = thresholds.assign(train_counts);
        let per_class_recall: Vec<f64> = (0..c).map(|k| 100.0 * confusion.recall(k)).collect();
        let group_mean = |g: ShotGroup| {
            let members: Vec<f64> = (0..c)
                .filter(|&k| groups[k] == g)
                .map(|k| per_class_recall[k])
                .collect();
            (!members.is_empty()).then(|| members.iter().sum::<f64>() / members.len() as f64)
        };
        let all = match all_mode {
            AllAccuracy::Sample => 100.0 * confusion.accuracy(),
            AllAccuracy::ClassAveraged => 100.0 * confusion.macro_recall(),
        };
        Ok(Self {
            f1: 100.0 * confusion.macro_f1(),
            precision: 100.0 * confusion.macro_precision(),
            recall: 100.0 * confusion.macro_recall(),
            all,
            many: group_mean(ShotGroup::Many),
            med: group_mean(ShotGroup::Med),
            few: group_mean(ShotGroup::Few),
            per_class_recall,
            groups,
            confusion,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let truth = [0, 1, 2, 2, 1, 0, 2];
        let cm = ConfusionMatrix::from_predictions(3, &truth, &truth).unwrap();
        let r = MetricsReport::from_confusion(
            cm,
            &[120, 50, 10],
            &ShotThresholds::default(),
            AllAccuracy::Sample,
        )
        .unwrap();
        for v in [r.f1, r.precision, r.recall, r.all] {
            assert_eq!(v, 100.0);
        }
        assert_eq!(
            (r.many, r.med, r.few),
            (Some(100.0), Some(100.0), Some(100.0))
        );
    }

    #[test]
    fn all_predicted_as_class_zero() {
        let truth = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let pred = [0; 10];
        let cm = ConfusionMatrix::from_predictions(2, &truth, &pred).unwrap();
        let r = MetricsReport::from_confusion(
            cm,
            &[5, 5],
            &ShotThresholds::default(),
            AllAccuracy::Sample,
        )
        .unwrap();
        assert!((r.precision - 25.0).abs() < 1e-12);
        assert!((r.recall - 50.0).abs() < 1e-12);
        assert!((r.all - 50.0).abs() < 1e-12);
        // F1: class 0 = 2·0.5·1/1.5 = 2/3, class 1 = 0
        assert!((r.f1 - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn shot_grouping_by_threshold() {
        let t = ShotThresholds::default();
        assert_eq!(
            t.assign(&[120, 50, 10]),
            vec![ShotGroup::Many, ShotGroup::Med, ShotGroup::Few]
        );
        assert_eq!(t.group(100), ShotGroup::Many);
        assert_eq!(t.group(20), ShotGroup::Few);
        assert_eq!(t.group(21), ShotGroup::Med);
    }

    #[test]
    fn empty_group_is_none() {
        let cm = ConfusionMatrix::from_predictions(2, &[0, 1], &[0, 1]).unwrap();
        let r = MetricsReport::from_confusion(
            cm,
            &[50, 50],
            &ShotThresholds::default(),
            AllAccuracy::Sample,
        )
        .unwrap();
        assert_eq!((r.many, r.few), (None, None));
        assert_eq!(r.med, Some(100.0));
    }

    #[test]
    fn class_averaged_all_is_macro_recall() {
        let cm = ConfusionMatrix::from_predictions(2, &[0, 0, 0, 1], &[0, 0, 0, 0]).unwrap();
        let r = MetricsReport::from_confusion(
            cm,
            &[3, 1],
            &ShotThresholds::default(),
            AllAccuracy::ClassAveraged,
        )
        .unwrap();
        assert_eq!(r.all, r.recall);
        assert_eq!(r.all, 50.0);
    }
}
