//! Comparison methods: the group lasso, fitted by accelerated proximal
//! gradient along a warm-started regularization path, and FoBa, which is the
//! greedy engine run on singleton groups.
//!
//! The group lasso minimizes `Q(w) + alpha * sum_g ||w_g||`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{sigmoid, Dataset, Family, Objective};
use crate::error::{Error, Result};
use crate::groups::{GroupPartition, GroupSet};
use crate::iga::{run_path, IgaConfig, SelectionPath, SelectionPolicy};
use crate::linalg::{top_gram_eigenvalue, top_psd_eigenvalue};
use crate::modelselect::{cv_select, loss_of, padded_mean, CvPlan, CvResult};

/// Group norms at or below this count as zero in group lasso solutions.
pub const GL_ZERO_THRESHOLD: f64 = 1e-10;

/// Block soft-thresholding: `z_g * max(0, 1 - tau / ||z_g||)` per group.
pub fn prox_group(z: &DVector<f64>, tau: f64, partition: &GroupPartition) -> Result<DVector<f64>> {
    if z.len() != partition.p() {
        return Err(Error::Dimension {
            what: "vector",
            expected: partition.p(),
            got: z.len(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    Ok(prox_unchecked(z, tau, partition))
}

fn prox_unchecked(z: &DVector<f64>, tau: f64, partition: &GroupPartition) -> DVector<f64> {
    let mut out = DVector::zeros(z.len());
    for g in 0..partition.m() {
        let norm = partition.group_l2(g, z);
        if norm > tau {
            let shrink = 1.0 - tau / norm;
            for &j in partition.group(g) {
                out[j] = z[j] * shrink;
            }
        }
    }
    out
}

pub fn penalty(partition: &GroupPartition, w: &DVector<f64>) -> f64 {
    (0..partition.m()).map(|g| partition.group_l2(g, w)).sum()
}

/// Smallest `alpha` whose solution is zero: `max_g ||grad_g Q(0)||`.
pub fn alpha_max(obj: &Objective, partition: &GroupPartition) -> Result<f64> {
    check_partition(obj, partition)?;
    let grad = obj.gradient(&DVector::zeros(obj.p()))?;
    Ok((0..partition.m())
        .map(|g| partition.group_l2(g, &grad))
        .fold(0.0, f64::max))
}

fn check_partition(obj: &Objective, partition: &GroupPartition) -> Result<()> {
    if partition.p() != obj.p() {
        return Err(Error::Dimension {
            what: "partition feature count",
            expected: obj.p(),
            got: partition.p(),
        });
    }
    Ok(())
}

fn kkt_from_gradient(grad: &DVector<f64>, w: &DVector<f64>, partition: &GroupPartition, alpha: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for g in 0..partition.m() {
        let idx = partition.group(g);
        let wn = partition.group_l2(g, w);
        let r = if wn > 0.0 {
            idx.iter()
                .map(|&j| {
                    let v = grad[j] + alpha * w[j] / wn;
                    v * v
                })
                .sum::<f64>()
                .sqrt()
        } else {
            (partition.group_l2(g, grad) - alpha).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

/// Largest violation of the group lasso optimality conditions at `w`.
pub fn kkt_residual(obj: &Objective, partition: &GroupPartition, w: &DVector<f64>, alpha: f64) -> Result<f64> {
    check_partition(obj, partition)?;
    let grad = obj.gradient(w)?;
    Ok(kkt_from_gradient(&grad, w, partition, alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Explicit decreasing grid; when absent, `grid_points` log-spaced values
    /// from `alpha_max` down to `grid_ratio * alpha_max`.
    pub alpha_grid: Option<Vec<f64>>,
    pub grid_points: usize,
    pub grid_ratio: f64,
    /// Stop when the relative objective change falls below this...
    pub fista_tolerance: f64,
    /// ...and the optimality residual is below this.
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// A path stops early once the fraction of `Q(0)` explained reaches
    /// this...
    pub saturation: f64,
    /// ...or grows by less than this fraction of itself between grid points.
    pub min_explained_change: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            alpha_grid: None,
            grid_points: 100,
            grid_ratio: 1e-3,
            fista_tolerance: 1e-7,
            kkt_tolerance: 1e-7,
            max_iterations: 5000,
            saturation: 0.999,
            min_explained_change: 1e-5,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fista_tolerance > 0.0 && self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        match &self.alpha_grid {
            Some(grid) => validate_grid(grid),
            None if self.grid_points == 0 || !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) => Err(
                Error::InvalidArgument("grid needs points > 0 and ratio in (0, 1)".into()),
            ),
            None => Ok(()),
        }
    }

    /// The explicit grid, or the default one anchored at `alpha_max`.
    pub fn grid_for(&self, alpha_max: f64) -> Vec<f64> {
        match &self.alpha_grid {
            Some(grid) => grid.clone(),
            None => default_alpha_grid(alpha_max, self.grid_points, self.grid_ratio),
        }
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidArgument("alpha grid must be nonempty and positive".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("alpha grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// `points` log-spaced values from `alpha_max` to `ratio * alpha_max`.
pub fn default_alpha_grid(alpha_max: f64, points: usize, ratio: f64) -> Vec<f64> {
    if points == 1 {
        return vec![alpha_max];
    }
    let step = ratio.ln() / (points - 1) as f64;
    (0..points).map(|i| alpha_max * (step * i as f64).exp()).collect()
}

/// One group lasso solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLassoFit {
    pub w: DVector<f64>,
    pub alpha: f64,
    /// Penalized objective at `w`.
    pub value: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// Step size inverse actually used.
    pub lipschitz: f64,
}

impl GroupLassoFit {
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
            })
        }
    }
}

/// Smooth part of the objective. The gaussian case works on the Gram matrix
/// so each iteration only touches the columns of nonzero coefficients.
enum Smooth<'a> {
    Gram {
        gram: DMatrix<f64>,
        xty: DVector<f64>,
        half_yy: f64,
    },
    Direct(&'a Objective),
}

impl<'a> Smooth<'a> {
    fn new(obj: &'a Objective) -> Self {
        match obj.family() {
            Family::Gaussian => {
                let x = obj.data().x();
                let n = obj.n() as f64;
                Smooth::Gram {
                    gram: x.tr_mul(x) / n,
                    xty: x.tr_mul(obj.data().y()) / n,
                    half_yy: obj.data().y().norm_squared() / (2.0 * n),
                }
            }
            Family::Logistic => Smooth::Direct(obj),
        }
    }

    fn lipschitz(&self) -> f64 {
        let l = match self {
            Smooth::Gram { gram, .. } => top_psd_eigenvalue(gram),
            Smooth::Direct(obj) => top_gram_eigenvalue(obj.data().x()) / 4.0,
        };
        (1.01 * l).max(f64::MIN_POSITIVE)
    }

    /// A linear image of `w` from which value and gradient follow: `G w` or `X w`.
    fn image(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            Smooth::Gram { gram, .. } => {
                let mut out = DVector::zeros(gram.nrows());
                for (j, &c) in w.iter().enumerate() {
                    if c != 0.0 {
                        out.axpy(c, &gram.column(j), 1.0);
                    }
                }
                out
            }
            Smooth::Direct(obj) => obj.predictor(w),
        }
    }

    fn value(&self, w: &DVector<f64>, image: &DVector<f64>) -> f64 {
        match self {
            Smooth::Gram { xty, half_yy, .. } => 0.5 * w.dot(image) - xty.dot(w) + half_yy,
            Smooth::Direct(obj) => obj.value_at_predictor(image),
        }
    }

    fn gradient(&self, image: &DVector<f64>) -> DVector<f64> {
        match self {
            Smooth::Gram { xty, .. } => image - xty,
            Smooth::Direct(obj) => {
                let y = obj.data().y();
                let h = image.zip_map(y, |e, y| -y * sigmoid(-y * e));
                obj.data().x().tr_mul(&h) / obj.n() as f64
            }
        }
    }
}

fn fista(
    smooth: &Smooth<'_>,
    partition: &GroupPartition,
    alpha: f64,
    warm: Option<&DVector<f64>>,
    cfg: &LassoConfig,
    mut lipschitz: f64,
    alpha_max: f64,
) -> GroupLassoFit {
    let p = partition.p();
    let objective = |w: &DVector<f64>, image: &DVector<f64>| smooth.value(w, image) + alpha * penalty(partition, w);
    if alpha >= alpha_max {
        // zero satisfies the optimality conditions exactly; iterating could
        // only add rounding noise
        let zero = DVector::zeros(p);
        let image = smooth.image(&zero);
        return GroupLassoFit {
            value: objective(&zero, &image),
            kkt_residual: kkt_from_gradient(&smooth.gradient(&image), &zero, partition, alpha),
            w: zero,
            alpha,
            iterations: 0,
            converged: true,
            lipschitz,
        };
    }
    let mut x = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
    let mut ax = smooth.image(&x);
    let mut fx = objective(&x, &ax);
    let (mut y, mut ay) = (x.clone(), ax.clone());
    let mut momentum = false;
    let mut t = 1.0f64;
    let mut kkt = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let grad = smooth.gradient(&ay);
        let z = &y - grad / lipschitz;
        let xn = if alpha > 0.0 {
            prox_unchecked(&z, alpha / lipschitz, partition)
        } else {
            z
        };
        let axn = smooth.image(&xn);
        let fxn = objective(&xn, &axn);
        let slack = 4.0 * f64::EPSILON * fx.abs();
        if fxn > fx + slack {
            if momentum {
                // restart from the last iterate without momentum
                y.copy_from(&x);
                ay.copy_from(&ax);
                t = 1.0;
                momentum = false;
            } else {
                lipschitz *= 2.0;
            }
            continue;
        }
        let rel = (fx - fxn).abs() / fxn.abs().max(f64::MIN_POSITIVE);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / tn;
        y = &xn + (&xn - &x) * beta;
        ay = &axn + (&axn - &ax) * beta;
        momentum = beta != 0.0;
        t = tn;
        x = xn;
        ax = axn;
        fx = fxn.min(fx);
        if rel <= cfg.fista_tolerance {
            kkt = kkt_from_gradient(&smooth.gradient(&ax), &x, partition, alpha);
            if kkt <= cfg.kkt_tolerance {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = kkt_from_gradient(&smooth.gradient(&ax), &x, partition, alpha);
    }
    GroupLassoFit {
        value: objective(&x, &ax),
        w: x,
        alpha,
        iterations,
        kkt_residual: kkt,
        converged,
        lipschitz,
    }
}

/// Solves the group lasso at one `alpha`. A fit that hits the iteration cap
/// is returned with `converged = false`.
pub fn group_lasso_fit(
    obj: &Objective,
    partition: &GroupPartition,
    alpha: f64,
    warm: Option<&DVector<f64>>,
    cfg: &LassoConfig,
) -> Result<GroupLassoFit> {
    check_partition(obj, partition)?;
    cfg.validate()?;
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {alpha}")));
    }
    if let Some(w) = warm {
        if w.len() != obj.p() {
            return Err(Error::Dimension {
                what: "warm start",
                expected: obj.p(),
                got: w.len(),
            });
        }
    }
    let smooth = Smooth::new(obj);
    let l = smooth.lipschitz();
    let amax = alpha_max(obj, partition)?;
    Ok(fista(&smooth, partition, alpha, warm, cfg, l, amax))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoPathResult {
    pub alphas: Vec<f64>,
    pub fits: Vec<GroupLassoFit>,
}

impl LassoPathResult {
    pub fn active_groups(&self, partition: &GroupPartition) -> Vec<GroupSet> {
        self.fits
            .iter()
            .map(|f| partition.support(&f.w, GL_ZERO_THRESHOLD))
            .collect()
    }

    pub fn to_json(&self, partition: &GroupPartition) -> LassoPathJson {
        let records = self
            .fits
            .iter()
            .map(|f| LassoRecordJson {
                alpha: f.alpha,
                active_groups: partition.support(&f.w, GL_ZERO_THRESHOLD).one_based(),
                iterations: f.iterations,
                kkt_residual: f.kkt_residual,
                converged: f.converged,
                objective: f.value,
                coefficients: f.w.iter().copied().collect(),
            })
            .collect();
        LassoPathJson { records }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoRecordJson {
    pub alpha: f64,
    pub active_groups: Vec<usize>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    pub objective: f64,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPathJson {
    pub records: Vec<LassoRecordJson>,
}

/// Fits every grid value in decreasing order, each warm-started from the
/// previous solution.
pub fn group_lasso_path(obj: &Objective, partition: &GroupPartition, cfg: &LassoConfig) -> Result<LassoPathResult> {
    check_partition(obj, partition)?;
    cfg.validate()?;
    let grid = cfg.grid_for(alpha_max(obj, partition)?);
    validate_grid(&grid)?;
    path_on_grid(obj, partition, &grid, cfg)
}

/// Fits the grid in order and stops early once the fit saturates; the
/// returned path may then be shorter than the grid.
fn path_on_grid(
    obj: &Objective,
    partition: &GroupPartition,
    grid: &[f64],
    cfg: &LassoConfig,
) -> Result<LassoPathResult> {
    let smooth = Smooth::new(obj);
    let l = smooth.lipschitz();
    let amax = alpha_max(obj, partition)?;
    let null = obj.value(&DVector::zeros(obj.p()))?;
    let mut fits: Vec<GroupLassoFit> = Vec::with_capacity(grid.len());
    let mut explained_prev = 0.0;
    for &alpha in grid {
        let warm = fits.last().map(|f| &f.w);
        let fit = fista(&smooth, partition, alpha, warm, cfg, l, amax);
        let explained = if null > 0.0 {
            1.0 - (fit.value - alpha * penalty(partition, &fit.w)) / null
        } else {
            0.0
        };
        fits.push(fit);
        if explained >= cfg.saturation || explained - explained_prev < cfg.min_explained_change * explained {
            break;
        }
        explained_prev = explained;
    }
    Ok(LassoPathResult {
        alphas: grid[..fits.len()].to_vec(),
        fits,
    })
}

/// Cross-validated group lasso.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoCvResult {
    pub alphas: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub index: usize,
    pub alpha: f64,
    /// Raw units.
    pub coefficients: DVector<f64>,
    pub active_groups: GroupSet,
    /// Fits of the full-data path up to the chosen alpha.
    pub path: LassoPathResult,
}

/// Chooses `alpha` on a grid anchored at the full-data `alpha_max`; ties go
/// to the larger `alpha`.
pub fn cv_group_lasso(
    data: &Dataset,
    family: Family,
    partition: &GroupPartition,
    cfg: &LassoConfig,
    plan: &CvPlan,
) -> Result<LassoCvResult> {
    cfg.validate()?;
    plan.validate(data.n())?;
    let full = if plan.standardize { data.standardize()? } else { data.clone() };
    let obj = Objective::new(family, full)?;
    let grid = cfg.grid_for(alpha_max(&obj, partition)?);
    validate_grid(&grid)?;
    let per_fold: Vec<Result<Vec<f64>>> = (0..plan.folds.len())
        .into_par_iter()
        .map(|f| {
            let (fold_obj, valid) = plan.fold_objective(data, family, f)?;
            let path = path_on_grid(&fold_obj, partition, &grid, cfg)?;
            path.fits
                .iter()
                .map(|fit| loss_of(&fold_obj.data().to_raw_coefficients(&fit.w), &valid, plan.loss))
                .collect()
        })
        .collect();
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;
    let mut mean_loss = padded_mean(&per_fold);
    // every fold stopped early: the padded curve is shorter than the grid
    mean_loss.truncate(grid.len());
    let index = mean_loss
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &l)| if l < best.1 { (i, l) } else { best })
        .0;
    let path = path_on_grid(&obj, partition, &grid[..=index], cfg)?;
    let w = &path.fits.last().expect("nonempty grid").w;
    Ok(LassoCvResult {
        alpha: path.alphas[path.alphas.len() - 1],
        coefficients: obj.data().to_raw_coefficients(w),
        active_groups: partition.support(w, GL_ZERO_THRESHOLD),
        alphas: grid,
        mean_loss,
        index,
        path,
    })
}

/// FoBa: the greedy engine on singleton groups with `lambda = 1`.
pub fn foba_fit(obj: &Objective, cfg: &IgaConfig) -> Result<SelectionPath> {
    let singletons = GroupPartition::singletons(obj.p())?;
    let cfg = IgaConfig {
        lambda: 1.0,
        ..cfg.clone()
    };
    run_path(obj, &singletons, &cfg, &mut SelectionPolicy::Greedy)
}

/// FoBa with the path iteration chosen by cross-validation.
pub fn cv_foba(data: &Dataset, family: Family, cfg: &IgaConfig, plan: &CvPlan) -> Result<CvResult> {
    let singletons = GroupPartition::singletons(data.p())?;
    let cfg = IgaConfig {
        lambda: 1.0,
        ..cfg.clone()
    };
    let plan = plan.clone().with_lambda_grid(vec![1.0]);
    cv_select(data, family, &singletons, &cfg, &plan, &SelectionPolicy::Greedy)
}
