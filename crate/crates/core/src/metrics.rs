//! Predictive-performance and group-fairness metrics.
//!
//! Five performance metrics (accuracy, recall, precision, F1, false
//! alarm) and four fairness metrics (AOD, EOD, SPD, DI) are computed from
//! a [`GroupConfusion`]: confusion counts tallied overall and per
//! privileged/unprivileged subgroup. Any 0/0 yields an explicit undefined
//! marker (`None`) rather than a silent substitute, and undefined cells
//! are excluded from statistical comparisons downstream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw confusion counts; label 1 (favorable) is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.true_pos + self.true_neg + self.false_pos + self.false_neg
    }

    fn add(&mut self, pred: u8, truth: u8) {
        match (pred, truth) {
            (1, 1) => self.true_pos += 1,
            (0, 0) => self.true_neg += 1,
            (1, 0) => self.false_pos += 1,
            (0, 1) => self.false_neg += 1,
            _ => unreachable!("labels are binary"),
        }
    }

    /// TP / (TP + FN); `None` when no actual positives.
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.true_pos, self.true_pos + self.false_neg)
    }

    /// FP / (FP + TN); `None` when no actual negatives.
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.false_pos, self.false_pos + self.true_neg)
    }

    /// (TP + FP) / total: the favorable-prediction rate.
    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.true_pos + self.false_pos, self.total())
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion counts overall and per subgroup.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroupConfusion {
    pub overall: Counts,
    pub privileged: Counts,
    pub unprivileged: Counts,
}

/// Tallies predictions against ground truth, split by privileged flag.
pub fn confusion(pred: &[u8], truth: &[u8], privileged: &[bool]) -> Result<GroupConfusion> {
    if pred.len() != truth.len() || pred.len() != privileged.len() {
        return Err(Error::Contract(
            "confusion: pred, truth, and group vectors must share a length".into(),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Size("confusion needs at least one row".into()));
    }
    let mut c = GroupConfusion::default();
    for ((&p, &t), &g) in pred.iter().zip(truth).zip(privileged) {
        c.overall.add(p, t);
        if g {
            c.privileged.add(p, t);
        } else {
            c.unprivileged.add(p, t);
        }
    }
    Ok(c)
}

/// All nine scores; `None` marks an undefined value (0/0 or an empty
/// subgroup) and serializes as `n/a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub false_alarm: Option<f64>,
    pub aod: Option<f64>,
    pub eod: Option<f64>,
    pub spd: Option<f64>,
    pub di: Option<f64>,
}

impl MetricReport {
    /// Computes every metric from predictions, truth, and group flags.
    pub fn compute(pred: &[u8], truth: &[u8], privileged: &[bool]) -> Result<MetricReport> {
        let c = confusion(pred, truth, privileged)?;
        let perf = performance(&c);
        let fair = fairness(&c);
        Ok(MetricReport {
            accuracy: perf.accuracy,
            recall: perf.recall,
            precision: perf.precision,
            f1: perf.f1,
            false_alarm: perf.false_alarm,
            aod: fair.aod,
            eod: fair.eod,
            spd: fair.spd,
            di: fair.di,
        })
    }

    /// Value of one metric by id.
    pub fn get(&self, id: MetricId) -> Option<f64> {
        match id {
            MetricId::Accuracy => self.accuracy,
            MetricId::Recall => self.recall,
            MetricId::Precision => self.precision,
            MetricId::F1 => self.f1,
            MetricId::FalseAlarm => self.false_alarm,
            MetricId::Aod => self.aod,
            MetricId::Eod => self.eod,
            MetricId::Spd => self.spd,
            MetricId::Di => self.di,
        }
    }

    /// Fixed CSV column order: the five performance metrics then the four
    /// fairness metrics. Undefined values render as `n/a`.
    pub fn csv_cells(&self) -> Vec<String> {
        MetricId::ALL
            .iter()
            .map(|&id| match self.get(id) {
                Some(v) => format!("{v:.6}"),
                None => "n/a".to_string(),
            })
            .collect()
    }
}

/// The five performance scores.
#[derive(Debug, Clone, Copy)]
pub struct PerformanceScores {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub false_alarm: Option<f64>,
}

/// Accuracy, recall, precision, F1, and false alarm from overall counts.
pub fn performance(c: &GroupConfusion) -> PerformanceScores {
    let o = &c.overall;
    let accuracy = ratio(o.true_pos + o.true_neg, o.total());
    let recall = o.tpr();
    let precision = ratio(o.true_pos, o.true_pos + o.false_pos);
    let false_alarm = o.fpr();
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(p), Some(r)) if p == 0.0 && r == 0.0 => Some(0.0),
        _ => None,
    };
    PerformanceScores {
        accuracy,
        recall,
        precision,
        f1,
        false_alarm,
    }
}

/// The four group-fairness scores.
#[derive(Debug, Clone, Copy)]
pub struct FairnessScores {
    pub aod: Option<f64>,
    pub eod: Option<f64>,
    pub spd: Option<f64>,
    pub di: Option<f64>,
}

/// AOD, EOD, SPD, and DI between the unprivileged and privileged
/// subgroups. An empty subgroup leaves all four undefined; a zero
/// privileged favorable rate leaves DI undefined.
pub fn fairness(c: &GroupConfusion) -> FairnessScores {
    if c.privileged.total() == 0 || c.unprivileged.total() == 0 {
        return FairnessScores {
            aod: None,
            eod: None,
            spd: None,
            di: None,
        };
    }
    let eod = match (c.unprivileged.tpr(), c.privileged.tpr()) {
        (Some(u), Some(p)) => Some(u - p),
        _ => None,
    };
    let aod = match (
        c.unprivileged.fpr(),
        c.privileged.fpr(),
        c.unprivileged.tpr(),
        c.privileged.tpr(),
    ) {
        (Some(fu), Some(fp), Some(tu), Some(tp)) => Some(((fu - fp) + (tu - tp)) / 2.0),
        _ => None,
    };
    let pu = c.unprivileged.positive_rate();
    let pp = c.privileged.positive_rate();
    let spd = match (pu, pp) {
        (Some(u), Some(p)) => Some(u - p),
        _ => None,
    };
    let di = match (pu, pp) {
        (Some(u), Some(p)) if p > 0.0 => Some(u / p),
        _ => None,
    };
    FairnessScores { aod, eod, spd, di }
}

/// Metric identifiers in the fixed reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Accuracy,
    Recall,
    Precision,
    F1,
    FalseAlarm,
    Aod,
    Eod,
    Spd,
    Di,
}

impl MetricId {
    pub const ALL: [MetricId; 9] = [
        MetricId::Accuracy,
        MetricId::Recall,
        MetricId::Precision,
        MetricId::F1,
        MetricId::FalseAlarm,
        MetricId::Aod,
        MetricId::Eod,
        MetricId::Spd,
        MetricId::Di,
    ];

    pub const PERFORMANCE: [MetricId; 5] = [
        MetricId::Accuracy,
        MetricId::Recall,
        MetricId::Precision,
        MetricId::F1,
        MetricId::FalseAlarm,
    ];

    pub const FAIRNESS: [MetricId; 4] = [MetricId::Aod, MetricId::Eod, MetricId::Spd, MetricId::Di];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Accuracy => "accuracy",
            MetricId::Recall => "recall",
            MetricId::Precision => "precision",
            MetricId::F1 => "f1",
            MetricId::FalseAlarm => "false_alarm",
            MetricId::Aod => "aod",
            MetricId::Eod => "eod",
            MetricId::Spd => "spd",
            MetricId::Di => "di",
        }
    }

    pub fn is_fairness(self) -> bool {
        matches!(
            self,
            MetricId::Aod | MetricId::Eod | MetricId::Spd | MetricId::Di
        )
    }

    /// Maps a raw score onto the comparison scale.
    ///
    /// Accuracy, recall, precision, and F1 compare as-is (larger better);
    /// false alarm as-is (smaller better); AOD, EOD, and SPD on absolute
    /// value (distance from parity, smaller better); DI on |ln DI|
    /// (distance of the ratio from 1, smaller better, clamped away from 0
    /// so the transform stays finite).
    pub fn comparable(self, value: f64) -> f64 {
        match self {
            MetricId::Accuracy
            | MetricId::Recall
            | MetricId::Precision
            | MetricId::F1
            | MetricId::FalseAlarm => value,
            MetricId::Aod | MetricId::Eod | MetricId::Spd => value.abs(),
            MetricId::Di => value.clamp(1e-6, 1e6).ln().abs(),
        }
    }

    /// Whether larger values win *after* the [`comparable`](Self::comparable)
    /// transform.
    pub fn larger_is_better(self) -> bool {
        matches!(
            self,
            MetricId::Accuracy | MetricId::Recall | MetricId::Precision | MetricId::F1
        )
    }
}
