//! Numerical checks of the regularity quantities and error rates that the
//! greedy estimator's guarantees are stated in terms of.
//!
//! `rho_bounds` and `phi_bounds` are exact only for the quadratic loss, where
//! the second-order remainder does not depend on the expansion point. For the
//! logistic loss only the quantities `U1`, `U2`, `U3` at the truth are
//! exposed.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{sigmoid, Dataset, Family, Objective};
use crate::error::{Error, Result};
use crate::groups::{GroupPartition, GroupSet};
use crate::iga::IgaConfig;
use crate::linalg::{columns, spectral_norm, sym_extreme_eigenvalues};
use crate::metrics::evaluate;
use crate::modelselect::{cv_select, CvPlan, LossKind};
use crate::iga::SelectionPolicy;
use crate::simgen::{child_seed, generate, stream_rng, Case, SimSpec};

/// Subset-enumeration budget of [`phi_bounds`].
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

fn require_gaussian(obj: &Objective) -> Result<()> {
    match obj.family() {
        Family::Gaussian => Ok(()),
        Family::Logistic => Err(Error::Family { expected: "gaussian" }),
    }
}

fn restricted_gram(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let xs = columns(x, idx);
    xs.tr_mul(&xs) / x.nrows() as f64
}

/// Extreme eigenvalues of `X_F' X_F / n` for the features `F` of `set`.
pub fn rho_bounds(obj: &Objective, partition: &GroupPartition, set: &GroupSet) -> Result<(f64, f64)> {
    require_gaussian(obj)?;
    set.validate(partition.m())?;
    if set.is_empty() {
        return Err(Error::InvalidArgument("rho bounds need a nonempty group set".into()));
    }
    Ok(sym_extreme_eigenvalues(&restricted_gram(obj.data().x(), &partition.feature_set(set))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub t: usize,
    pub phi_minus: f64,
    pub phi_plus: f64,
    /// `phi_plus / phi_minus`; infinite when `phi_minus` is zero.
    pub kappa: f64,
    pub argmin_set: GroupSet,
    pub argmax_set: GroupSet,
    pub exact: bool,
}

fn binomial(m: usize, k: usize) -> u128 {
    let k = k.min(m - k.min(m));
    (0..k).fold(1u128, |acc, i| acc * (m - i) as u128 / (i + 1) as u128)
}

/// Advances `c` to the next `k`-subset of `0..m` in lexicographic order.
fn next_combination(c: &mut [usize], m: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < m - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact `phi_-(t)` and `phi_+(t)`: the extreme restricted eigenvalues over
/// every set of at most `t` groups.
pub fn phi_bounds(obj: &Objective, partition: &GroupPartition, t: usize) -> Result<RegularityReport> {
    require_gaussian(obj)?;
    let m = partition.m();
    if t == 0 || t > m {
        return Err(Error::Range { index: t, limit: m + 1 });
    }
    let needed: u128 = (1..=t).map(|s| binomial(m, s)).sum();
    if needed > ENUMERATION_BUDGET {
        return Err(Error::CombinatorialBudget {
            needed,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut subsets: Vec<Vec<usize>> = Vec::with_capacity(needed as usize);
    for s in 1..=t {
        let mut c: Vec<usize> = (0..s).collect();
        loop {
            subsets.push(c.clone());
            if !next_combination(&mut c, m) {
                break;
            }
        }
    }
    let x = obj.data().x();
    let extremes: Vec<(f64, f64)> = subsets
        .par_iter()
        .map(|groups| {
            let set: GroupSet = groups.iter().copied().collect();
            sym_extreme_eigenvalues(&restricted_gram(x, &partition.feature_set(&set)))
        })
        .collect();
    // first attaining subset wins, so the result does not depend on scheduling
    let (mut lo, mut hi) = (0, 0);
    for (i, &(a, b)) in extremes.iter().enumerate() {
        if a < extremes[lo].0 {
            lo = i;
        }
        if b > extremes[hi].1 {
            hi = i;
        }
    }
    let phi_minus = extremes[lo].0;
    let phi_plus = extremes[hi].1;
    Ok(RegularityReport {
        t,
        phi_minus,
        phi_plus,
        kappa: if phi_minus > 0.0 { phi_plus / phi_minus } else { f64::INFINITY },
        argmin_set: subsets[lo].iter().copied().collect(),
        argmax_set: subsets[hi].iter().copied().collect(),
        exact: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegularity {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

/// `U1 = ||X_R' X_R / n||`, `U2 = ||(X_R' W X_R / n)^-1||` and
/// `U3 = max_{g not in R} ||X_g' W X_R / n||` with `R` the features of the
/// relevant groups and `W = diag(p_i (1 - p_i))` at the truth.
pub fn logistic_regularity(
    data: &Dataset,
    partition: &GroupPartition,
    truth: &DVector<f64>,
    relevant: &GroupSet,
) -> Result<LogisticRegularity> {
    relevant.validate(partition.m())?;
    if truth.len() != data.p() || partition.p() != data.p() {
        return Err(Error::Dimension {
            what: "truth",
            expected: data.p(),
            got: truth.len(),
        });
    }
    if relevant.is_empty() {
        return Err(Error::InvalidArgument("no relevant groups".into()));
    }
    let n = data.n() as f64;
    let x = data.x();
    let eta = x * truth;
    let weights = eta.map(|e| {
        let p = sigmoid(e);
        p * (1.0 - p)
    });
    let xr = columns(x, &partition.feature_set(relevant));
    let mut wxr = xr.clone();
    for (i, mut row) in wxr.row_iter_mut().enumerate() {
        row *= weights[i];
    }
    let u1 = spectral_norm(&(xr.tr_mul(&xr) / n));
    let hessian = xr.tr_mul(&wxr) / n;
    let (lo, hi) = sym_extreme_eigenvalues(&hessian);
    if !(lo > 1e-12 * hi.max(f64::MIN_POSITIVE)) {
        return Err(Error::Singular("weighted relevant Gram matrix"));
    }
    let u2 = 1.0 / lo;
    let u3 = (0..partition.m())
        .filter(|&g| !relevant.contains(g))
        .map(|g| spectral_norm(&(columns(x, partition.group(g)).tr_mul(&wxr) / n)))
        .fold(0.0, f64::max);
    Ok(LogisticRegularity { u1, u2, u3 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub trials: usize,
    pub passed: usize,
    /// Trials whose group was rank deficient, so only the lower bound applies.
    pub upper_skipped: usize,
    pub failures: Vec<String>,
}

impl SandwichReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty() && self.passed == self.trials
    }
}

/// Checks `||grad_g||^2 / (2 rho_+(g)) <= gain(g) <= ||grad_g||^2 / (2 rho_-(g))`
/// at random points `w` and groups `g`, with relative slack `1e-9`.
pub fn gain_sandwich_check(obj: &Objective, partition: &GroupPartition, trials: usize, seed: u64) -> Result<SandwichReport> {
    require_gaussian(obj)?;
    let mut rng = stream_rng(seed, 0);
    let m = partition.m();
    let x = obj.data().x();
    let mut report = SandwichReport {
        trials,
        passed: 0,
        upper_skipped: 0,
        failures: Vec::new(),
    };
    for trial in 0..trials {
        let g = rng.random_range(0..m);
        let k = rng.random_range(0..m);
        let mut w = DVector::zeros(partition.p());
        for h in sample(&mut rng, m, k) {
            if h != g {
                for &j in partition.group(h) {
                    w[j] = StandardNormal.sample(&mut rng);
                }
            }
        }
        let eval = obj.evaluate(&w)?;
        let idx = partition.group(g);
        let grad_sq = eval.group_gradient_norm(idx).powi(2);
        let gain = eval.forward_gain(idx);
        let (rho_minus, rho_plus) = sym_extreme_eigenvalues(&restricted_gram(x, idx));
        let slack = 1e-9 * gain.abs().max(grad_sq) + 1e-300;
        let lower = grad_sq / (2.0 * rho_plus);
        let mut ok = true;
        if lower > gain + slack {
            ok = false;
            report.failures.push(format!("trial {trial}: gain {gain} below lower bound {lower}"));
        }
        if rho_minus > 1e-12 * rho_plus {
            let upper = grad_sq / (2.0 * rho_minus);
            if gain > upper + slack {
                ok = false;
                report.failures.push(format!("trial {trial}: gain {gain} above upper bound {upper}"));
            }
        } else {
            report.upper_skipped += 1;
        }
        if ok {
            report.passed += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub case: Case,
    pub kbar: usize,
    pub beta: f64,
    pub m: usize,
    pub q: usize,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub folds: usize,
    /// Path length cap for every fit.
    pub k_max: Option<usize>,
}

impl ScalingConfig {
    /// Strong-signal linear design, paths capped at `4 kbar` groups.
    pub fn new(case: Case, kbar: usize, beta: f64, n_grid: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            case,
            kbar,
            beta,
            m: 200,
            q: 5,
            n_grid,
            replications,
            seed,
            folds: 10,
            k_max: Some(4 * kbar),
        }
    }

    fn family(&self) -> Family {
        if self.case == Case::Case2 {
            Family::Logistic
        } else {
            Family::Gaussian
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub mean_squared_error: f64,
    /// Fraction of replications with exactly the relevant groups selected.
    pub recovery_rate: f64,
    pub squared_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    /// Least-squares slope of `ln(mean squared error)` on `ln n`.
    pub slope: f64,
    /// True when some point rests on a single replication.
    pub high_variance: bool,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mean_squared_error,recovery_rate\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.n, p.mean_squared_error, p.recovery_rate));
        }
        out
    }
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Outcome of one cross-validated IGA fit in the scaling experiment.
#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub n: usize,
    pub replication: usize,
    pub squared_error: f64,
    pub exact_recovery: bool,
    pub cv: crate::modelselect::CvResult,
    pub plan: CvPlan,
    pub instance: crate::simgen::SimInstance,
}

/// One fit of the scaling experiment; exposed so callers can audit paths.
pub fn scaling_fit(cfg: &ScalingConfig, n: usize, rep: usize, keep_paths: bool) -> Result<ScalingFit> {
    let seed = child_seed(child_seed(cfg.seed, n as u64), rep as u64);
    let spec = SimSpec::new(cfg.case, n, cfg.kbar, cfg.beta, seed).with_groups(cfg.m, cfg.q);
    let instance = generate(&spec)?;
    let family = cfg.family();
    let plan = CvPlan::new(n, cfg.folds, seed, LossKind::for_family(family))?
        .with_lambda_grid(vec![1.0])
        .keep_fold_paths(keep_paths);
    let iga_cfg = IgaConfig {
        k_max: cfg.k_max,
        ..IgaConfig::default()
    };
    let cv = cv_select(
        &instance.dataset,
        family,
        &instance.partition,
        &iga_cfg,
        &plan,
        &SelectionPolicy::Greedy,
    )?;
    let report = evaluate(&cv.model.coefficients, 0.0, &instance)?;
    Ok(ScalingFit {
        n,
        replication: rep,
        squared_error: report.l2_error.powi(2),
        exact_recovery: cv.model.active_groups == instance.relevant,
        cv,
        plan,
        instance,
    })
}

/// Error-rate experiment: for every `n`, cross-validated IGA on fresh
/// replications, then the slope of `ln(mean ||w_hat - w*||^2)` on `ln n`.
pub fn scaling_experiment(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.n_grid.len() < 2 || cfg.replications == 0 {
        return Err(Error::InvalidArgument("need at least two sample sizes and one replication".into()));
    }
    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let fits = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| scaling_fit(cfg, n, rep, false).map(|f| (f.squared_error, f.exact_recovery)))
            .collect::<Result<Vec<_>>>()?;
        let squared_errors: Vec<f64> = fits.iter().map(|f| f.0).collect();
        points.push(ScalingPoint {
            n,
            mean_squared_error: squared_errors.iter().sum::<f64>() / fits.len() as f64,
            recovery_rate: fits.iter().filter(|f| f.1).count() as f64 / fits.len() as f64,
            squared_errors,
        });
    }
    Ok(scaling_report(points, cfg.replications))
}

pub fn scaling_report(points: Vec<ScalingPoint>, replications: usize) -> ScalingReport {
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_squared_error.ln()).collect();
    ScalingReport {
        slope: least_squares_slope(&xs, &ys),
        high_variance: replications < 2,
        points,
    }
}

/// Median over replications of `||grad Q(w_bar)||_{G,inf} * sqrt(n / (q + ln m))`
/// where `w_bar` minimizes `Q` on the true support.
pub fn scaled_gradient_bound(case: Case, n: usize, kbar: usize, beta: f64, replications: usize, seed: u64) -> Result<f64> {
    let mut values = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let spec = SimSpec::new(case, n, kbar, beta, child_seed(child_seed(seed, n as u64), rep as u64));
            let inst = generate(&spec)?;
            let family = if case == Case::Case2 { Family::Logistic } else { Family::Gaussian };
            let obj = Objective::new(family, inst.dataset.clone())?;
            let bench = obj.restricted_minimize(&inst.partition.feature_set(&inst.relevant), None)?;
            let grad = obj.gradient(&bench.w)?;
            let norms = inst.partition.norms(&grad)?;
            let q = inst.partition.mean_size();
            let m = inst.partition.m() as f64;
            Ok(norms.l2_inf * (n as f64 / (q + m.ln())).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    Ok(if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    })
}
