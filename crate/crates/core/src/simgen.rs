//! Seeded generators for the simulation designs.
//!
//! Randomness comes from ChaCha8 streams. Every consumer derives its own
//! child seed with [`child_seed`]`(seed, stream_id)`, so replications, folds
//! and generator stages are reproducible regardless of execution order.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::criterion::{sigmoid, Dataset};
use crate::error::{Error, Result};
use crate::groups::{GroupPartition, GroupSet};

const STREAM_DESIGN: u64 = 1;
const STREAM_COEFFICIENTS: u64 = 2;
const STREAM_RESPONSE: u64 = 3;

/// SplitMix64 finalizer applied to `seed ^ golden * (stream + 1)`.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, stream))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// Sparse linear model with Gaussian noise.
    Case1,
    /// Sparse logistic model.
    Case2,
    /// Five pairs where group 3 is a noisy copy of groups 1 and 2.
    Heuristic,
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "case1" => Ok(Case::Case1),
            "2" | "case2" => Ok(Case::Case2),
            "heuristic" | "h" => Ok(Case::Heuristic),
            other => Err(Error::InvalidArgument(format!("unknown case `{other}`"))),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
            Case::Heuristic => "heuristic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub case: Case,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub q: usize,
    /// Number of relevant groups; they are the odd one-based ids `1, 3, ..`.
    pub kbar: usize,
    /// Coefficients are drawn from `U(-beta, beta)`.
    pub beta: f64,
    /// AR(1) correlation between neighbouring features.
    pub rho: f64,
    pub noise_variance: f64,
    pub seed: u64,
}

impl SimSpec {
    /// Default design: `p = 1000` features in `m = 200` groups of five,
    /// `rho = 0.5`, noise variance 2.
    pub fn new(case: Case, n: usize, kbar: usize, beta: f64, seed: u64) -> Self {
        match case {
            Case::Heuristic => Self {
                case,
                n,
                p: 10,
                m: 5,
                q: 2,
                kbar: 2,
                beta: 1.0,
                rho: 0.0,
                noise_variance: 1.0,
                seed,
            },
            _ => Self {
                case,
                n,
                p: 1000,
                m: 200,
                q: 5,
                kbar,
                beta,
                rho: 0.5,
                noise_variance: 2.0,
                seed,
            },
        }
    }

    pub fn with_groups(mut self, m: usize, q: usize) -> Self {
        self.m = m;
        self.q = q;
        self.p = m * q;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.case == Case::Heuristic {
            return if self.n >= 10 {
                Ok(())
            } else {
                Err(Error::InvalidArgument("heuristic design needs n >= 10".into()))
            };
        }
        if self.n == 0 || self.m == 0 || self.q == 0 {
            return Err(Error::InvalidArgument("n, m and q must be positive".into()));
        }
        if self.p != self.m * self.q {
            return Err(Error::InvalidArgument(format!(
                "p = {} must equal m * q = {}",
                self.p,
                self.m * self.q
            )));
        }
        if 2 * self.kbar > self.m {
            return Err(Error::InvalidArgument(format!(
                "kbar = {} needs at least {} groups",
                self.kbar,
                2 * self.kbar
            )));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::Range {
                index: 0,
                limit: 1,
            });
        }
        if !(self.beta >= 0.0 && self.noise_variance >= 0.0) {
            return Err(Error::InvalidArgument("beta and noise variance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A generated data set with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    pub dataset: Dataset,
    pub partition: GroupPartition,
    pub truth: DVector<f64>,
    pub relevant: GroupSet,
    pub spec: SimSpec,
}

/// Lower Cholesky factor of `Sigma_ij = rho^|i-j|`.
pub fn ar1_cholesky(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("|rho| must be < 1, got {rho}")));
    }
    let tail = (1.0 - rho * rho).sqrt();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if j > i {
            0.0
        } else if j == 0 {
            rho.powi(i as i32)
        } else {
            rho.powi((i - j) as i32) * tail
        }
    }))
}

/// `n` rows drawn from `N(0, Sigma)` with AR(1) `Sigma`, using the recursion
/// `x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j`, which equals multiplying by
/// [`ar1_cholesky`] without forming it.
pub fn ar1_rows<R: Rng>(rng: &mut R, n: usize, p: usize, rho: f64) -> DMatrix<f64> {
    let tail = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            let v = if j == 0 { z } else { rho * prev + tail * z };
            x[(i, j)] = v;
            prev = v;
        }
    }
    x
}

fn relevant_groups(kbar: usize) -> GroupSet {
    (0..kbar).map(|k| 2 * k).collect()
}

fn draw_truth(spec: &SimSpec, partition: &GroupPartition, relevant: &GroupSet) -> DVector<f64> {
    let mut rng = stream_rng(spec.seed, STREAM_COEFFICIENTS);
    let mut w = DVector::zeros(spec.p);
    if spec.beta == 0.0 {
        return w;
    }
    let coef = Uniform::new(-spec.beta, spec.beta).expect("beta > 0");
    for g in relevant.iter() {
        loop {
            for &j in partition.group(g) {
                w[j] = coef.sample(&mut rng);
            }
            if partition.group_l2(g, &w) > 0.0 {
                break;
            }
        }
    }
    w
}

fn linear_instance(spec: &SimSpec) -> Result<(DMatrix<f64>, GroupPartition, DVector<f64>, GroupSet)> {
    spec.validate()?;
    let partition = GroupPartition::even(spec.m, spec.q)?;
    let relevant = relevant_groups(spec.kbar);
    let truth = draw_truth(spec, &partition, &relevant);
    let mut rng = stream_rng(spec.seed, STREAM_DESIGN);
    let x = ar1_rows(&mut rng, spec.n, spec.p, spec.rho);
    Ok((x, partition, truth, relevant))
}

/// Linear model `y = X w* + eps`, `eps ~ N(0, noise_variance)`.
pub fn gen_case1(spec: &SimSpec) -> Result<SimInstance> {
    let (x, partition, truth, relevant) = linear_instance(spec)?;
    let mut rng = stream_rng(spec.seed, STREAM_RESPONSE);
    let noise = Normal::new(0.0, spec.noise_variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let y = &x * &truth + DVector::from_fn(spec.n, |_, _| noise.sample(&mut rng));
    Ok(SimInstance {
        dataset: Dataset::new(x, y)?,
        partition,
        truth,
        relevant,
        spec: spec.clone(),
    })
}

/// Logistic model with `Pr(y = 1 | x) = 1 / (1 + exp(-x' w*))`, `y` in `{-1, +1}`.
pub fn gen_case2(spec: &SimSpec) -> Result<SimInstance> {
    let (x, partition, truth, relevant) = linear_instance(spec)?;
    let mut rng = stream_rng(spec.seed, STREAM_RESPONSE);
    let eta = &x * &truth;
    let y = eta.map(|e| if rng.random::<f64>() < sigmoid(e) { 1.0 } else { -1.0 });
    Ok(SimInstance {
        dataset: Dataset::new(x, y)?,
        partition,
        truth,
        relevant,
        spec: spec.clone(),
    })
}

/// Five groups of two features. Groups 1, 2, 4, 5 (one-based) are
/// independent standard normals; group 3 holds the noisy sums
/// `x_{3,1} = x_{1,1} + x_{1,2} + N(0, 0.5)` and
/// `x_{3,2} = x_{2,1} + x_{2,2} + N(0, 0.5)`. The response is
/// `y = x_{1,1} + x_{1,2} + x_{2,1} + x_{2,2} + N(0, 1)`.
pub fn gen_heuristic(n: usize, seed: u64) -> Result<SimInstance> {
    let spec = SimSpec::new(Case::Heuristic, n, 2, 1.0, seed);
    spec.validate()?;
    let mut rng = stream_rng(seed, STREAM_DESIGN);
    let copy_noise = Normal::new(0.0, 0.5f64.sqrt()).expect("valid std");
    let mut x = DMatrix::zeros(n, 10);
    for i in 0..n {
        for j in [0, 1, 2, 3, 6, 7, 8, 9] {
            x[(i, j)] = StandardNormal.sample(&mut rng);
        }
        x[(i, 4)] = x[(i, 0)] + x[(i, 1)] + copy_noise.sample(&mut rng);
        x[(i, 5)] = x[(i, 2)] + x[(i, 3)] + copy_noise.sample(&mut rng);
    }
    let truth = DVector::from_vec(vec![1., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    let mut noise_rng = stream_rng(seed, STREAM_RESPONSE);
    let y = &x * &truth
        + DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut noise_rng) });
    Ok(SimInstance {
        dataset: Dataset::new(x, y)?,
        partition: GroupPartition::even(5, 2)?,
        truth,
        relevant: [0, 1].into_iter().collect(),
        spec,
    })
}

pub fn generate(spec: &SimSpec) -> Result<SimInstance> {
    match spec.case {
        Case::Case1 => gen_case1(spec),
        Case::Case2 => gen_case2(spec),
        Case::Heuristic => gen_heuristic(spec.n, spec.seed),
    }
}

/// Expert list holding `floor(3 kbar / 5)` relevant and as many irrelevant
/// groups, sampled uniformly.
pub fn make_priority_list(instance: &SimInstance, seed: u64) -> Result<GroupSet> {
    let kbar = instance.relevant.len();
    let take = 3 * kbar / 5;
    if take == 0 {
        return Err(Error::Range {
            index: kbar,
            limit: 2,
        });
    }
    let relevant = instance.relevant.to_vec();
    let irrelevant: Vec<usize> = (0..instance.partition.m())
        .filter(|&g| !instance.relevant.contains(g))
        .collect();
    if irrelevant.len() < take {
        return Err(Error::InvalidArgument("not enough irrelevant groups".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GroupSet::new();
    for i in sample(&mut rng, relevant.len(), take) {
        out.insert(relevant[i]);
    }
    for i in sample(&mut rng, irrelevant.len(), take) {
        out.insert(irrelevant[i]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_examples() {
        assert_eq!(ar1_cholesky(4, 0.0).unwrap(), DMatrix::identity(4, 4));
        let l = ar1_cholesky(5, 0.5).unwrap();
        let sigma = &l * l.transpose();
        assert_relative_eq!(sigma[(0, 2)], 0.25, epsilon = 1e-12);
        for i in 0..5 {
            for j in 0..5 {
                let d = (i as i32 - j as i32).unsigned_abs() as i32;
                assert_relative_eq!(sigma[(i, j)], 0.5f64.powi(d), epsilon = 1e-12);
            }
        }
        let rho = 0.3;
        let l2 = ar1_cholesky(2, rho).unwrap();
        let hand = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()]);
        assert_relative_eq!(l2, hand, epsilon = 1e-15);
        assert!(ar1_cholesky(3, 1.0).is_err());
    }

    #[test]
    fn recursion_equals_cholesky_product() {
        let (n, p, rho) = (4, 7, 0.5);
        let x = ar1_rows(&mut ChaCha8Rng::seed_from_u64(3), n, p, rho);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = DMatrix::from_fn(p, n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        // the recursion consumes normals row by row, so z is p x n, column per row
        let via_l = (ar1_cholesky(p, rho).unwrap() * z).transpose();
        assert_relative_eq!(x, via_l, epsilon = 1e-12);
    }

    #[test]
    fn case1_relevant_groups_and_support() {
        let inst = gen_case1(&SimSpec::new(Case::Case1, 50, 5, 1.0, 1)).unwrap();
        assert_eq!(inst.relevant.one_based(), vec![1, 3, 5, 7, 9]);
        for g in 0..inst.partition.m() {
            let norm = inst.partition.group_l2(g, &inst.truth);
            assert_eq!(norm > 0.0, inst.relevant.contains(g));
        }
        assert!(inst.truth.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn zero_beta_gives_pure_noise() {
        let inst = gen_case1(&SimSpec::new(Case::Case1, 30, 5, 0.0, 2)).unwrap();
        assert_eq!(inst.truth, DVector::zeros(1000));
        assert!(inst.dataset.y().norm() > 0.0);
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = SimSpec::new(Case::Case2, 40, 3, 1.0, 9).with_groups(20, 3);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SimSpec { seed: 10, ..spec };
        assert_ne!(generate(&other).unwrap().dataset, generate(&SimSpec { seed: 9, ..other.clone() }).unwrap().dataset);
    }

    #[test]
    fn empirical_covariance_matches_ar1() {
        let spec = SimSpec {
            n: 50_000,
            ..SimSpec::new(Case::Case1, 50_000, 1, 1.0, 5).with_groups(2, 3)
        };
        let inst = gen_case1(&spec).unwrap();
        let x = inst.dataset.x();
        let cov = x.tr_mul(x) / spec.n as f64;
        for i in 0..6 {
            for j in 0..6 {
                let d = (i as i32 - j as i32).unsigned_abs() as i32;
                assert!((cov[(i, j)] - 0.5f64.powi(d)).abs() < 0.02, "({i},{j}) {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn case2_labels_and_link() {
        let inst = gen_case2(&SimSpec::new(Case::Case2, 200, 2, 1.0, 4).with_groups(10, 2)).unwrap();
        assert!(inst.dataset.y().iter().all(|&v| v == 1.0 || v == -1.0));

        // fixed predictor of one: fraction of +1 near logistic(1)
        let mut rng = stream_rng(8, STREAM_RESPONSE);
        let draws = 100_000;
        let hits = (0..draws).filter(|_| rng.random::<f64>() < sigmoid(1.0)).count();
        let frac = hits as f64 / draws as f64;
        assert!((frac - 0.7311).abs() < 0.01, "{frac}");
        assert_relative_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(50.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn heuristic_design() {
        let inst = gen_heuristic(400, 3).unwrap();
        assert_eq!(inst.relevant.one_based(), vec![1, 2]);
        assert_eq!(inst.truth.as_slice(), &[1., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
        let x = inst.dataset.x();
        let s = x.column(0) + x.column(1);
        let c = x.column(4);
        let corr = {
            let (ms, mc) = (s.mean(), c.mean());
            let sc = s.add_scalar(-ms);
            let cc = c.add_scalar(-mc);
            sc.dot(&cc) / (sc.norm() * cc.norm())
        };
        assert!(corr >= 0.85, "{corr}");
        assert!(gen_heuristic(5, 1).is_err());
    }

    #[test]
    fn priority_list_sizes() {
        let inst = gen_case1(&SimSpec::new(Case::Case1, 20, 5, 1.0, 1)).unwrap();
        let list = make_priority_list(&inst, 7).unwrap();
        assert_eq!(list.len(), 6);
        assert_eq!(list.intersection_len(&inst.relevant), 3);
        let one = gen_case1(&SimSpec::new(Case::Case1, 20, 1, 1.0, 1)).unwrap();
        assert!(matches!(make_priority_list(&one, 7), Err(Error::Range { .. })));
    }

    #[test]
    fn child_seeds_differ_by_stream() {
        assert_ne!(child_seed(1, 1), child_seed(1, 2));
        assert_ne!(child_seed(1, 1), child_seed(2, 1));
        assert_eq!(child_seed(5, 3), child_seed(5, 3));
    }
}
