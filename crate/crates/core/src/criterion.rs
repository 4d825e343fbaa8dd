//! Smooth convex criteria `Q(w) = (1/n) sum_i f_i(x_i' w)`.
//!
//! Two families are supported: least squares, `Q(w) = ||y - Xw||^2 / (2n)`,
//! and logistic negative log-likelihood with responses in `{-1, +1}`. Both
//! share the gradient form `X' h(w) / n`, where `h` is the per-observation
//! derivative of `f_i` at the linear predictor.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::GroupPartition;
use crate::linalg;

/// Gradient-norm tolerance of the logistic Newton solves.
pub const NEWTON_TOLERANCE: f64 = 1e-8;
/// Iteration cap of the logistic Newton solves.
pub const NEWTON_MAX_ITER: usize = 100;
/// Sup-norm cap on logistic coefficients; separable data would otherwise diverge.
pub const COEFFICIENT_CAP: f64 = 30.0;
const ARMIJO: f64 = 1e-4;
const LOG1P_EXP_BRANCH: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Logistic,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "ls" | "least-squares" => Ok(Family::Gaussian),
            "logistic" | "binomial" => Ok(Family::Logistic),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Logistic => "logistic",
        })
    }
}

/// Design matrix (rows are observations), response, and the column
/// multipliers applied so far (`1` for raw data).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    column_scales: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidArgument(
                "dataset needs at least one row and one column".into(),
            ));
        }
        if y.len() != n {
            return Err(Error::Dimension {
                what: "response",
                expected: n,
                got: y.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self {
            x,
            y,
            column_scales: DVector::from_element(p, 1.0),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn column_scales(&self) -> &DVector<f64> {
        &self.column_scales
    }

    /// Rescales every column to Euclidean norm `sqrt(n)`.
    pub fn standardize(&self) -> Result<Self> {
        let target = (self.n() as f64).sqrt();
        let mut factors = DVector::zeros(self.p());
        for (j, col) in self.x.column_iter().enumerate() {
            let norm = col.norm();
            if norm == 0.0 {
                return Err(Error::ZeroColumn { column: j });
            }
            factors[j] = target / norm;
        }
        Ok(self.scaled_by(&factors))
    }

    /// Multiplies column `j` by `factors[j]`, accumulating into `column_scales`.
    pub fn scaled_by(&self, factors: &DVector<f64>) -> Self {
        let mut x = self.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= factors[j];
        }
        Self {
            x,
            y: self.y.clone(),
            column_scales: self.column_scales.component_mul(factors),
        }
    }

    /// Coefficients fitted on this (scaled) design expressed in raw units.
    pub fn to_raw_coefficients(&self, w: &DVector<f64>) -> DVector<f64> {
        w.component_mul(&self.column_scales)
    }

    /// Subset of rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Self {
        let p = self.p();
        let x = DMatrix::from_fn(idx.len(), p, |i, j| self.x[(idx[i], j)]);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        Self {
            x,
            y,
            column_scales: self.column_scales.clone(),
        }
    }

    /// Reads `X` (n rows of p comma-separated values, optional header) and
    /// `y` (one value per row, optional header).
    pub fn from_csv(x_path: impl AsRef<Path>, y_path: impl AsRef<Path>) -> Result<Self> {
        let x_rows = read_csv_rows(x_path.as_ref())?;
        let y_rows = read_csv_rows(y_path.as_ref())?;
        let n = x_rows.len();
        let p = x_rows.first().map_or(0, Vec::len);
        if let Some(bad) = x_rows.iter().position(|r| r.len() != p) {
            return Err(Error::Parse(format!("X row {bad} has a different column count")));
        }
        if y_rows.iter().any(|r| r.len() != 1) {
            return Err(Error::Parse("y must have exactly one column".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| x_rows[i][j]);
        let y = DVector::from_iterator(y_rows.len(), y_rows.iter().map(|r| r[0]));
        Self::new(x, y)
    }

    pub fn write_csv(&self, x_path: impl AsRef<Path>, y_path: impl AsRef<Path>) -> Result<()> {
        let mut wx = csv::Writer::from_path(x_path)?;
        for row in self.x.row_iter() {
            wx.write_record(row.iter().map(|v| format_float(*v)))?;
        }
        wx.flush()?;
        let mut wy = csv::Writer::from_path(y_path)?;
        for v in self.y.iter() {
            wy.write_record([format_float(*v)])?;
        }
        wy.flush()?;
        Ok(())
    }
}

fn format_float(v: f64) -> String {
    // shortest representation that round-trips exactly
    format!("{v:?}")
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue, // header
            Err(e) => {
                return Err(Error::Parse(format!(
                    "{}: line {}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(rows)
}

/// `log(1 + exp(t))` without overflow.
pub fn log1p_exp(t: f64) -> f64 {
    if t > LOG1P_EXP_BRANCH {
        t
    } else if t < -LOG1P_EXP_BRANCH {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + exp(-t))`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Output of a restricted minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedSolveReport {
    pub w: DVector<f64>,
    pub support: Vec<usize>,
    pub iterations: usize,
    pub gradient_norm_on_support: f64,
    pub ridge_applied: bool,
    /// Logistic only: the coefficient cap was hit (separable data).
    pub capped: bool,
    /// False when the iteration cap was reached; `w` is then the last iterate.
    pub converged: bool,
    pub value: f64,
}

impl RestrictedSolveReport {
    /// Turns a non-converged report into [`Error::NonConvergence`].
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

/// A criterion function bound to a dataset. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Objective {
    family: Family,
    data: Arc<Dataset>,
}

impl Objective {
    pub fn new(family: Family, data: impl Into<Arc<Dataset>>) -> Result<Self> {
        let data = data.into();
        if family == Family::Logistic {
            if let Some(i) = data.y.iter().position(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::InvalidArgument(format!(
                    "logistic response must be -1 or +1 (row {i} is {})",
                    data.y[i]
                )));
            }
        }
        Ok(Self { family, data })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn data_arc(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    fn check_len(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.p() {
            return Err(Error::Dimension {
                what: "coefficient vector",
                expected: self.p(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// Linear predictor `X w`, skipping zero coefficients.
    pub fn predictor(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut eta = DVector::zeros(self.n());
        for (j, &c) in w.iter().enumerate() {
            if c != 0.0 {
                eta.axpy(c, &self.data.x.column(j), 1.0);
            }
        }
        eta
    }

    /// `Q` as a function of the linear predictor.
    pub fn value_at_predictor(&self, eta: &DVector<f64>) -> f64 {
        let n = self.n() as f64;
        let y = &self.data.y;
        match self.family {
            Family::Gaussian => {
                eta.iter()
                    .zip(y.iter())
                    .map(|(e, y)| (y - e) * (y - e))
                    .sum::<f64>()
                    / (2.0 * n)
            }
            Family::Logistic => {
                eta.iter()
                    .zip(y.iter())
                    .map(|(e, y)| log1p_exp(-y * e))
                    .sum::<f64>()
                    / n
            }
        }
    }

    /// Per-observation derivative `h_i` at the linear predictor.
    fn derivative(&self, eta: &DVector<f64>) -> DVector<f64> {
        let y = &self.data.y;
        match self.family {
            Family::Gaussian => eta - y,
            Family::Logistic => eta.zip_map(y, |e, y| -y * sigmoid(-y * e)),
        }
    }

    pub fn value(&self, w: &DVector<f64>) -> Result<f64> {
        self.check_len(w)?;
        Ok(self.value_at_predictor(&self.predictor(w)))
    }

    pub fn gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(w)?;
        let h = self.derivative(&self.predictor(w));
        Ok(self.data.x.tr_mul(&h) / self.n() as f64)
    }

    /// Caches the predictor at `w` for repeated per-group queries.
    pub fn evaluate(&self, w: &DVector<f64>) -> Result<Evaluation<'_>> {
        self.check_len(w)?;
        let eta = self.predictor(w);
        let value = self.value_at_predictor(&eta);
        let h = self.derivative(&eta);
        Ok(Evaluation {
            obj: self,
            w: w.clone(),
            eta,
            h,
            value,
        })
    }

    /// `min Q(w + E_g alpha)` gain for one group; see [`Evaluation::forward_gain`].
    pub fn forward_gain(&self, w: &DVector<f64>, g: usize, partition: &GroupPartition) -> Result<f64> {
        if partition.p() != self.p() {
            return Err(Error::Dimension {
                what: "partition feature count",
                expected: self.p(),
                got: partition.p(),
            });
        }
        Ok(self.evaluate(w)?.forward_gain(partition.group(g)))
    }

    /// Minimizes `Q` over vectors supported on `support`.
    pub fn restricted_minimize(
        &self,
        support: &[usize],
        warm_start: Option<&DVector<f64>>,
    ) -> Result<RestrictedSolveReport> {
        if let Some(&bad) = support.iter().find(|&&j| j >= self.p()) {
            return Err(Error::Range {
                index: bad,
                limit: self.p(),
            });
        }
        if let Some(w0) = warm_start {
            self.check_len(w0)?;
        }
        let p = self.p();
        let n = self.n() as f64;
        let mut support = support.to_vec();
        support.sort_unstable();
        support.dedup();
        if support.is_empty() {
            let w = DVector::zeros(p);
            let value = self.value_at_predictor(&DVector::zeros(self.n()));
            return Ok(RestrictedSolveReport {
                w,
                support,
                iterations: 0,
                gradient_norm_on_support: 0.0,
                ridge_applied: false,
                capped: false,
                converged: true,
                value,
            });
        }
        let xs = linalg::columns(&self.data.x, &support);
        let (beta, iterations, ridge, capped, converged) = match self.family {
            Family::Gaussian => {
                let (beta, ridge) = linalg::least_squares(&xs, &self.data.y);
                (beta, 1, ridge, false, true)
            }
            Family::Logistic => {
                let start = match warm_start {
                    Some(w0) => DVector::from_iterator(
                        support.len(),
                        support.iter().map(|&j| w0[j].clamp(-COEFFICIENT_CAP, COEFFICIENT_CAP)),
                    ),
                    None => DVector::zeros(support.len()),
                };
                let offset = DVector::zeros(self.n());
                let out = logistic_newton(&xs, &offset, &self.data.y, start);
                (out.beta, out.iterations, out.ridge, out.capped, out.converged)
            }
        };
        let mut w = DVector::zeros(p);
        for (&j, &b) in support.iter().zip(beta.iter()) {
            w[j] = b;
        }
        let eta = &xs * &beta;
        let h = self.derivative(&eta);
        let gradient_norm_on_support = (xs.tr_mul(&h) / n).norm();
        Ok(RestrictedSolveReport {
            w,
            support,
            iterations,
            gradient_norm_on_support,
            ridge_applied: ridge,
            capped,
            converged,
            value: self.value_at_predictor(&eta),
        })
    }
}

/// The criterion evaluated at a fixed `w`, with the predictor cached.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    obj: &'a Objective,
    w: DVector<f64>,
    eta: DVector<f64>,
    h: DVector<f64>,
    value: f64,
}

impl Evaluation<'_> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    /// `grad_g Q(w)` for the feature indices `idx`.
    pub fn group_gradient(&self, idx: &[usize]) -> DVector<f64> {
        linalg::tr_mul_columns(&self.obj.data.x, idx, &self.h) / self.obj.n() as f64
    }

    pub fn group_gradient_norm(&self, idx: &[usize]) -> f64 {
        self.group_gradient(idx).norm()
    }

    /// `Q(w) - min_alpha Q(w + E_g alpha)`, clipped at zero.
    ///
    /// Least squares uses the residual projection
    /// `r' X_g (X_g' X_g)^-1 X_g' r / (2n)`; logistic runs Newton in the
    /// group's coordinates with the current predictor as offset.
    pub fn forward_gain(&self, idx: &[usize]) -> f64 {
        let data = &self.obj.data;
        let n = self.obj.n() as f64;
        let gain = match self.obj.family {
            Family::Gaussian => {
                // residual r = y - Xw = -h
                let b = -linalg::tr_mul_columns(&data.x, idx, &self.h);
                let xg = linalg::columns(&data.x, idx);
                let gram = xg.tr_mul(&xg);
                let (a, _) = linalg::solve_spd(&gram, &b);
                b.dot(&a) / (2.0 * n)
            }
            Family::Logistic => {
                let xg = linalg::columns(&data.x, idx);
                let out = logistic_newton(&xg, &self.eta, &data.y, DVector::zeros(idx.len()));
                self.value - out.value
            }
        };
        gain.max(0.0)
    }

    /// `Q(w - E_g w_g) - Q(w)`.
    pub fn removal_cost(&self, idx: &[usize]) -> f64 {
        let coef: Vec<f64> = idx.iter().map(|&j| self.w[j]).collect();
        let eta = &self.eta - linalg::mul_columns(&self.obj.data.x, idx, &coef);
        self.obj.value_at_predictor(&eta) - self.value
    }
}

struct NewtonOutcome {
    beta: DVector<f64>,
    value: f64,
    iterations: usize,
    ridge: bool,
    capped: bool,
    converged: bool,
}

fn logistic_value(xs: &DMatrix<f64>, offset: &DVector<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = offset + xs * beta;
    let n = y.len() as f64;
    eta.iter().zip(y.iter()).map(|(e, y)| log1p_exp(-y * e)).sum::<f64>() / n
}

/// Armijo backtracking along `dir` with every trial projected onto the box.
#[allow(clippy::too_many_arguments)]
fn projected_search(
    xs: &DMatrix<f64>,
    offset: &DVector<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    value: f64,
    grad: &DVector<f64>,
    dir: &DVector<f64>,
    t0: f64,
) -> Option<(DVector<f64>, f64)> {
    let mut t = t0;
    for _ in 0..60 {
        let mut trial = beta + dir * t;
        trial.apply(|b| *b = b.clamp(-COEFFICIENT_CAP, COEFFICIENT_CAP));
        let decrease = grad.dot(&(&trial - beta));
        if decrease < 0.0 {
            let v = logistic_value(xs, offset, y, &trial);
            if v <= value + ARMIJO * decrease {
                return Some((trial, v));
            }
        }
        t *= 0.5;
    }
    None
}

/// Projected damped Newton for
/// `min_beta (1/n) sum log(1 + exp(-y_i (offset_i + xs_i' beta)))` over the
/// box `|beta_k| <= COEFFICIENT_CAP`. Coordinates sitting on the box with the
/// gradient pushing outward are held fixed; the rest take Newton steps,
/// projected onto the box, falling back to a projected gradient step when
/// the Newton direction gives no decrease.
fn logistic_newton(
    xs: &DMatrix<f64>,
    offset: &DVector<f64>,
    y: &DVector<f64>,
    start: DVector<f64>,
) -> NewtonOutcome {
    let n = y.len() as f64;
    let mut beta = start;
    let mut value = logistic_value(xs, offset, y, &beta);
    let mut ridge = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITER {
        let eta = offset + xs * &beta;
        let mut h = DVector::zeros(y.len());
        let mut weights = DVector::zeros(y.len());
        for i in 0..y.len() {
            let s = sigmoid(-y[i] * eta[i]);
            h[i] = -y[i] * s;
            weights[i] = s * (1.0 - s);
        }
        let grad = xs.tr_mul(&h) / n;
        let free: Vec<usize> = (0..beta.len())
            .filter(|&k| {
                let pinned_high = beta[k] >= COEFFICIENT_CAP && grad[k] < 0.0;
                let pinned_low = beta[k] <= -COEFFICIENT_CAP && grad[k] > 0.0;
                !(pinned_high || pinned_low)
            })
            .collect();
        let free_grad = DVector::from_iterator(free.len(), free.iter().map(|&k| grad[k]));
        if free_grad.norm() <= NEWTON_TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let xf = linalg::columns(xs, &free);
        let mut weighted = xf.clone();
        for mut col in weighted.column_iter_mut() {
            col.component_mul_assign(&weights);
        }
        let hess = xf.tr_mul(&weighted) / n;
        let (dir_free, used_ridge) = linalg::solve_spd(&hess, &(-&free_grad));
        ridge |= used_ridge;
        let mut newton = DVector::zeros(beta.len());
        for (&k, &d) in free.iter().zip(dir_free.iter()) {
            newton[k] = d;
        }
        let mut steepest = DVector::zeros(beta.len());
        for &k in &free {
            steepest[k] = -grad[k];
        }
        let curvature = hess.diagonal().max().max(1e-12);
        let accepted = projected_search(xs, offset, y, &beta, value, &grad, &newton, 1.0)
            .or_else(|| projected_search(xs, offset, y, &beta, value, &grad, &steepest, (1.0 / curvature).min(1e6)));
        match accepted {
            Some((trial, v)) => {
                beta = trial;
                value = v;
            }
            None => {
                // no descent possible at working precision
                converged = free_grad.norm() <= 1e3 * NEWTON_TOLERANCE;
                break;
            }
        }
    }
    let capped = beta.iter().any(|b| b.abs() >= COEFFICIENT_CAP);
    NewtonOutcome {
        beta,
        value,
        iterations,
        ridge,
        capped,
        converged,
    }
}
