//! K-fold cross-validation over the path iteration `t` and the discount
//! `lambda`.
//!
//! Every fold runs a path on its training rows (standardized with training
//! statistics only). The snapshot after iteration `t` is scored on the
//! validation rows in raw units; `t = 0` is the null model. Fold paths
//! shorter than the longest one are padded with their final loss.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{log1p_exp, Dataset, Family, Objective};
use crate::error::{Error, Result};
use crate::groups::GroupPartition;
use crate::iga::{run_path, state_at_iteration, FittedModel, IgaConfig, SelectionPath, SelectionPolicy};
use crate::simgen::stream_rng;

const STREAM_FOLDS: u64 = 11;

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean squared residual.
    Mse,
    /// Mean logistic negative log-likelihood.
    Nll,
}

impl LossKind {
    pub fn for_family(family: Family) -> Self {
        match family {
            Family::Gaussian => LossKind::Mse,
            Family::Logistic => LossKind::Nll,
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "nll" => Ok(LossKind::Nll),
            other => Err(Error::InvalidArgument(format!("unknown loss `{other}`"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Nll => "nll",
        })
    }
}

/// Seeded shuffle of `0..n` cut into `k` contiguous blocks whose sizes differ
/// by at most one. Each fold is returned sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::Range { index: k, limit: n + 1 });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, STREAM_FOLDS));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Loss of raw-unit coefficients `w` on `data`.
pub fn loss_of(w: &DVector<f64>, data: &Dataset, loss: LossKind) -> Result<f64> {
    if w.len() != data.p() {
        return Err(Error::Dimension {
            what: "coefficients",
            expected: data.p(),
            got: w.len(),
        });
    }
    let eta = data.x() * w;
    let n = data.n() as f64;
    Ok(match loss {
        LossKind::Mse => (data.y() - eta).norm_squared() / n,
        LossKind::Nll => data.y().zip_fold(&eta, 0.0, |acc, y, e| acc + log1p_exp(-y * e)) / n,
    })
}

pub fn cv_loss(model: &FittedModel, validation: &Dataset, loss: LossKind) -> Result<f64> {
    loss_of(&model.coefficients, validation, loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub loss: LossKind,
    /// Rescale training columns to norm `sqrt(n_train)` before fitting.
    pub standardize: bool,
    /// Keep every fold path in the result (for auditing).
    pub keep_fold_paths: bool,
}

impl CvPlan {
    pub fn new(n: usize, k: usize, seed: u64, loss: LossKind) -> Result<Self> {
        Ok(Self {
            folds: kfold_split(n, k, seed)?,
            seed,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            loss,
            standardize: true,
            keep_fold_paths: false,
        })
    }

    pub fn with_lambda_grid(mut self, grid: Vec<f64>) -> Self {
        self.lambda_grid = grid;
        self
    }

    pub fn keep_fold_paths(mut self, keep: bool) -> Self {
        self.keep_fold_paths = keep;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidArgument("lambda grid is empty".into()));
        }
        if let Some(bad) = self.lambda_grid.iter().find(|l| !(**l > 0.0 && **l <= 1.0)) {
            return Err(Error::InvalidArgument(format!("lambda {bad} outside (0, 1]")));
        }
        if self.folds.len() < 2 {
            return Err(Error::InvalidArgument("need at least two folds".into()));
        }
        let mut seen = vec![false; n];
        for fold in &self.folds {
            for &i in fold {
                if i >= n {
                    return Err(Error::Range { index: i, limit: n });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Overlap { index: i });
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Coverage { index: i });
        }
        let lens = self.folds.iter().map(Vec::len);
        let (lo, hi) = lens.fold((usize::MAX, 0), |(lo, hi), l| (lo.min(l), hi.max(l)));
        if hi - lo > 1 || lo == 0 {
            return Err(Error::InvalidArgument("fold sizes must be positive and differ by at most one".into()));
        }
        Ok(())
    }

    /// Training and validation rows of fold `f`.
    pub fn split(&self, data: &Dataset, f: usize) -> (Dataset, Dataset) {
        let train: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        let mut train = train;
        train.sort_unstable();
        (data.rows(&train), data.rows(&self.folds[f]))
    }

    /// The (optionally standardized) training objective of fold `f`.
    pub fn fold_objective(&self, data: &Dataset, family: Family, f: usize) -> Result<(Objective, Dataset)> {
        let (train, valid) = self.split(data, f);
        let train = if self.standardize { train.standardize()? } else { train };
        Ok((Objective::new(family, train)?, valid))
    }
}

/// Mean validation loss at every iteration for one `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub lambda: f64,
    /// Indexed by iteration `t`, starting at the null model.
    pub mean_loss: Vec<f64>,
    /// Number of snapshots of every fold path.
    pub fold_lengths: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FoldPath {
    pub lambda: f64,
    pub fold: usize,
    pub path: SelectionPath,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub curves: Vec<CvCurve>,
    pub lambda: f64,
    pub iteration: usize,
    pub min_loss: f64,
    /// Refit on all rows at the chosen pair, coefficients in raw units.
    pub model: FittedModel,
    pub full_path: SelectionPath,
    pub fold_paths: Vec<FoldPath>,
}

impl CvResult {
    pub fn report(&self) -> CvReport {
        CvReport {
            curves: self.curves.clone(),
            lambda: self.lambda,
            iteration: self.iteration,
            min_loss: self.min_loss,
            active_groups: self.model.active_groups.one_based(),
            coefficients: self.model.coefficients.iter().copied().collect(),
        }
    }
}

/// Serializable summary of a [`CvResult`], group ids one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub curves: Vec<CvCurve>,
    pub lambda: f64,
    pub iteration: usize,
    pub min_loss: f64,
    pub active_groups: Vec<usize>,
    pub coefficients: Vec<f64>,
}

/// Picks `(lambda, t)` minimizing the mean loss; ties go to the smaller `t`,
/// then to the larger `lambda`.
fn argmin_curves(curves: &[CvCurve]) -> (usize, usize, f64) {
    let longest = curves.iter().map(|c| c.mean_loss.len()).max().unwrap_or(0);
    let mut order: Vec<usize> = (0..curves.len()).collect();
    order.sort_by(|&a, &b| curves[b].lambda.total_cmp(&curves[a].lambda));
    let mut best = (order[0], 0, f64::INFINITY);
    for t in 0..longest {
        for &c in &order {
            if let Some(&loss) = curves[c].mean_loss.get(t) {
                if loss < best.2 {
                    best = (c, t, loss);
                }
            }
        }
    }
    best
}

/// Fold validation losses for every iteration of `path`, null model first.
fn path_losses(path: &SelectionPath, train: &Dataset, valid: &Dataset, loss: LossKind) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(path.snapshots.len() + 1);
    out.push(loss_of(&DVector::zeros(train.p()), valid, loss)?);
    for snap in &path.snapshots {
        out.push(loss_of(&train.to_raw_coefficients(&snap.coefficients), valid, loss)?);
    }
    Ok(out)
}

/// Averages fold loss sequences, padding short ones with their last value.
pub fn padded_mean(per_fold: &[Vec<f64>]) -> Vec<f64> {
    let longest = per_fold.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|t| {
            let sum: f64 = per_fold
                .iter()
                .map(|l| l.get(t).or(l.last()).copied().unwrap_or(0.0))
                .sum();
            sum / per_fold.len() as f64
        })
        .collect()
}

/// Cross-validates the path iteration and `lambda`, then reruns the path on
/// all rows at the chosen `lambda` and returns the model after the chosen
/// iteration (or the final model if the full-data path is shorter).
pub fn cv_select(
    data: &Dataset,
    family: Family,
    partition: &GroupPartition,
    cfg: &IgaConfig,
    plan: &CvPlan,
    policy: &SelectionPolicy<'_>,
) -> Result<CvResult> {
    plan.validate(data.n())?;
    if partition.p() != data.p() {
        return Err(Error::Dimension {
            what: "partition",
            expected: data.p(),
            got: partition.p(),
        });
    }
    // the closure-carrying variant is not Sync, so hand the list to workers
    let priority = match policy {
        SelectionPolicy::Greedy => None,
        SelectionPolicy::PriorityList(list) => Some(list.clone()),
        SelectionPolicy::Interactive(_) => {
            return Err(Error::InvalidArgument(
                "cross-validation needs a non-interactive policy".into(),
            ))
        }
    };
    let make_policy = || match &priority {
        Some(list) => SelectionPolicy::PriorityList(list.clone()),
        None => SelectionPolicy::Greedy,
    };
    let tasks: Vec<(usize, usize)> = (0..plan.lambda_grid.len())
        .flat_map(|l| (0..plan.folds.len()).map(move |f| (l, f)))
        .collect();
    let outcomes: Vec<Result<(Vec<f64>, SelectionPath)>> = tasks
        .par_iter()
        .map(|&(l, f)| {
            let (obj, valid) = plan.fold_objective(data, family, f)?;
            let lambda_cfg = IgaConfig {
                lambda: plan.lambda_grid[l],
                ..cfg.clone()
            };
            let mut pol = make_policy();
            let path = run_path(&obj, partition, &lambda_cfg, &mut pol)?;
            let losses = path_losses(&path, obj.data(), &valid, plan.loss)?;
            Ok((losses, path))
        })
        .collect();

    let k = plan.folds.len();
    let mut curves = Vec::with_capacity(plan.lambda_grid.len());
    let mut fold_paths = Vec::new();
    let mut outcomes = outcomes.into_iter();
    for &lambda in &plan.lambda_grid {
        let mut per_fold = Vec::with_capacity(k);
        for fold in 0..k {
            let (losses, path) = outcomes.next().expect("one outcome per task")?;
            per_fold.push(losses);
            if plan.keep_fold_paths {
                fold_paths.push(FoldPath { lambda, fold, path });
            }
        }
        curves.push(CvCurve {
            lambda,
            mean_loss: padded_mean(&per_fold),
            fold_lengths: per_fold.iter().map(|l| l.len() - 1).collect(),
        });
    }

    let (best_curve, iteration, min_loss) = argmin_curves(&curves);
    let lambda = curves[best_curve].lambda;
    let full = if plan.standardize { data.standardize()? } else { data.clone() };
    let obj = Objective::new(family, full)?;
    let full_cfg = IgaConfig { lambda, ..cfg.clone() };
    let mut pol = make_policy();
    let full_path = run_path(&obj, partition, &full_cfg, &mut pol)?;
    let t = iteration.min(full_path.snapshots.len());
    let model = state_at_iteration(&full_path, t, &obj, partition)?;
    Ok(CvResult {
        curves,
        lambda,
        iteration,
        min_loss,
        model,
        full_path,
        fold_paths,
    })
}
