//! Estimation error and group recovery against a known truth.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{GroupPartition, GroupSet};
use crate::simgen::SimInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `||w_hat - w*||`.
    pub l2_error: f64,
    /// Selected groups that are relevant.
    pub correct_groups: usize,
    /// Selected groups that are not.
    pub incorrect_groups: usize,
    /// `||X (w_hat - w*)||^2 / n` on the instance design.
    pub prediction_loss: f64,
    /// Relevant groups whose true norm is at most `sqrt((q + ln m) / n)`.
    pub weak_signal_count: usize,
}

/// Scores raw-unit coefficients; a group counts as selected when its norm
/// exceeds `threshold` (zero for greedy fits, whose off-support entries are
/// exact zeros).
pub fn evaluate(coefficients: &DVector<f64>, threshold: f64, instance: &SimInstance) -> Result<EvalReport> {
    let partition = &instance.partition;
    if coefficients.len() != partition.p() {
        return Err(Error::Dimension {
            what: "coefficients",
            expected: partition.p(),
            got: coefficients.len(),
        });
    }
    let selected = partition.support(coefficients, threshold);
    let correct = selected.intersection_len(&instance.relevant);
    let diff = coefficients - &instance.truth;
    let n = instance.dataset.n() as f64;
    let q = partition.mean_size();
    let scale = ((q + (partition.m() as f64).ln()) / n).sqrt();
    Ok(EvalReport {
        l2_error: diff.norm(),
        correct_groups: correct,
        incorrect_groups: selected.len() - correct,
        prediction_loss: (instance.dataset.x() * diff).norm_squared() / n,
        weak_signal_count: weak_signal_count(&instance.truth, partition, scale),
    })
}

/// Number of groups with `0 < ||w_g|| <= threshold`.
pub fn weak_signal_count(coefficients: &DVector<f64>, partition: &GroupPartition, threshold: f64) -> usize {
    (0..partition.m())
        .map(|g| partition.group_l2(g, coefficients))
        .filter(|&norm| norm > 0.0 && norm <= threshold)
        .count()
}

/// Selected groups under the same rule as [`evaluate`].
pub fn selected_groups(coefficients: &DVector<f64>, partition: &GroupPartition, threshold: f64) -> GroupSet {
    partition.support(coefficients, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(R)`.
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Result<Self> {
        let r = values.len();
        if r < 2 {
            return Err(Error::Range { index: r, limit: 2 });
        }
        let mean = values.iter().sum::<f64>() / r as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        Ok(Self {
            mean,
            se: (var / r as f64).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replications: usize,
    pub l2_error: MeanSe,
    pub correct_groups: MeanSe,
    pub incorrect_groups: MeanSe,
    pub prediction_loss: MeanSe,
    pub weak_signal_count: MeanSe,
}

pub fn summarize(reports: &[EvalReport]) -> Result<ReplicationSummary> {
    let col = |f: fn(&EvalReport) -> f64| -> Result<MeanSe> {
        MeanSe::of(&reports.iter().map(f).collect::<Vec<_>>())
    };
    Ok(ReplicationSummary {
        replications: reports.len(),
        l2_error: col(|r| r.l2_error)?,
        correct_groups: col(|r| r.correct_groups as f64)?,
        incorrect_groups: col(|r| r.incorrect_groups as f64)?,
        prediction_loss: col(|r| r.prediction_loss)?,
        weak_signal_count: col(|r| r.weak_signal_count as f64)?,
    })
}
