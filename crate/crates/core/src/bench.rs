//! Replicated simulation benchmark: generate, cross-validate each method,
//! score against the truth, and summarize.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cv_foba, cv_group_lasso, LassoConfig, GL_ZERO_THRESHOLD};
use crate::criterion::Family;
use crate::error::{Error, Result};
use crate::groups::GroupPartition;
use crate::iga::{audit_path, AuditReport, IgaConfig, SelectionPolicy};
use crate::metrics::{evaluate, summarize, EvalReport, ReplicationSummary};
use crate::modelselect::{cv_select, CvPlan, CvResult, LossKind, DEFAULT_LAMBDA_GRID};
use crate::simgen::{child_seed, generate, make_priority_list, Case, SimInstance, SimSpec};

const STREAM_REPLICATION: u64 = 100;
const STREAM_PRIORITY: u64 = 21;
const STREAM_CV: u64 = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "FoBa")]
    Foba,
    #[serde(rename = "group lasso")]
    GroupLasso,
    #[serde(rename = "IGA")]
    Iga,
    /// IGA with the discount chosen by CV and an expert priority list.
    #[serde(rename = "IGA-lambda")]
    IgaLambda,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Foba, Method::GroupLasso, Method::Iga, Method::IgaLambda];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Foba => "FoBa",
            Method::GroupLasso => "group lasso",
            Method::Iga => "IGA",
            Method::IgaLambda => "IGA-lambda",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "foba" => Ok(Method::Foba),
            "gl" | "group-lasso" | "grouplasso" | "group lasso" => Ok(Method::GroupLasso),
            "iga" => Ok(Method::Iga),
            "iga-lambda" | "iga-λ" => Ok(Method::IgaLambda),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub case: Case,
    pub n: usize,
    pub kbar: usize,
    pub beta: f64,
    pub m: usize,
    pub q: usize,
    pub replications: usize,
    pub seed: u64,
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub methods: Vec<Method>,
    /// Cap on path length for the grouped methods; `None` uses the engine
    /// default.
    pub k_max: Option<usize>,
    /// Cap on path length for FoBa, in features.
    pub foba_k_max: Option<usize>,
    pub lasso: LassoConfig,
    /// Audit every path (fold and full-data) of the greedy methods.
    pub audit: bool,
}

impl BenchConfig {
    /// The standard cell: `p = 1000` in 200 groups of five, ten folds.
    pub fn new(case: Case, n: usize, kbar: usize, beta: f64, replications: usize, seed: u64) -> Self {
        Self {
            case,
            n,
            kbar,
            beta,
            m: 200,
            q: 5,
            replications,
            seed,
            folds: 10,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            methods: Method::ALL.to_vec(),
            k_max: None,
            foba_k_max: None,
            // p > n in every cell, so the grid stops at 1% of alpha_max
            lasso: LassoConfig {
                grid_ratio: 1e-2,
                ..LassoConfig::default()
            },
            audit: false,
        }
    }

    /// Table 2 is the linear case, table 3 the logistic one.
    pub fn for_table(table: u32, n: usize, kbar: usize, beta: f64, replications: usize, seed: u64) -> Result<Self> {
        let case = match table {
            2 => Case::Case1,
            3 => Case::Case2,
            other => return Err(Error::InvalidArgument(format!("no table {other}; expected 2 or 3"))),
        };
        Ok(Self::new(case, n, kbar, beta, replications, seed))
    }

    pub fn family(&self) -> Family {
        match self.case {
            Case::Case2 => Family::Logistic,
            _ => Family::Gaussian,
        }
    }

    pub fn spec(&self, rep: usize) -> SimSpec {
        SimSpec::new(self.case, self.n, self.kbar, self.beta, self.replication_seed(rep)).with_groups(self.m, self.q)
    }

    pub fn replication_seed(&self, rep: usize) -> u64 {
        child_seed(self.seed, STREAM_REPLICATION + rep as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("need at least one replication".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if self.case == Case::Heuristic {
            return Err(Error::InvalidArgument("benchmark cells are case1 or case2".into()));
        }
        self.spec(0).validate()?;
        self.lasso.validate()?;
        if self.folds < 2 || self.folds > self.n {
            return Err(Error::Range {
                index: self.folds,
                limit: self.n + 1,
            });
        }
        Ok(())
    }
}

/// One method's outcome on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub report: EvalReport,
    /// One-based selected groups.
    pub selected_groups: Vec<usize>,
    /// Chosen `lambda` (greedy methods) or `alpha` (group lasso).
    pub tuning: f64,
    /// Chosen path iteration (greedy) or grid index (group lasso).
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub runs: Vec<MethodRun>,
    #[serde(skip)]
    pub audit: Option<AuditReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub summary: ReplicationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub replications: Vec<Replication>,
    /// Empty when fewer than two replications ran.
    pub summaries: Vec<MethodSummary>,
}

impl BenchResult {
    pub fn summary(&self, method: Method) -> Option<&ReplicationSummary> {
        self.summaries.iter().find(|s| s.method == method).map(|s| &s.summary)
    }

    /// Merged audit of every replication that was audited.
    pub fn audit(&self) -> Option<AuditReport> {
        let mut merged: Option<AuditReport> = None;
        for rep in &self.replications {
            if let Some(a) = &rep.audit {
                merged.get_or_insert_with(AuditReport::default).merge(a.clone());
            }
        }
        merged
    }

    /// Plain-text table: one row per method, mean (SE) per metric.
    pub fn render_table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} beta={} kbar={} n={} reps={}",
            c.case, c.beta, c.kbar, c.n, c.replications
        );
        let _ = writeln!(
            out,
            "{:<12} {:>16} {:>16} {:>16} {:>16}",
            "method", "error", "correct", "incorrect", "pred. loss"
        );
        for s in &self.summaries {
            let cell = |m: &crate::metrics::MeanSe| format!("{:.2} ({:.2})", m.mean, m.se);
            let _ = writeln!(
                out,
                "{:<12} {:>16} {:>16} {:>16} {:>16}",
                s.method.to_string(),
                cell(&s.summary.l2_error),
                cell(&s.summary.correct_groups),
                cell(&s.summary.incorrect_groups),
                cell(&s.summary.prediction_loss),
            );
        }
        out
    }
}

fn audit_cv(
    result: &CvResult,
    instance: &SimInstance,
    family: Family,
    partition: &GroupPartition,
    plan: &CvPlan,
) -> Result<AuditReport> {
    let mut report = AuditReport::default();
    for fp in &result.fold_paths {
        let (obj, _) = plan.fold_objective(&instance.dataset, family, fp.fold)?;
        report.merge(audit_path(&fp.path, partition, Some(&obj)));
    }
    let full = if plan.standardize {
        instance.dataset.standardize()?
    } else {
        instance.dataset.clone()
    };
    let obj = crate::criterion::Objective::new(family, full)?;
    report.merge(audit_path(&result.full_path, partition, Some(&obj)));
    Ok(report)
}

fn greedy_run(method: Method, result: &CvResult, instance: &SimInstance) -> Result<MethodRun> {
    let report = evaluate(&result.model.coefficients, 0.0, instance)?;
    Ok(MethodRun {
        method,
        selected_groups: instance.partition.support(&result.model.coefficients, 0.0).one_based(),
        report,
        tuning: result.lambda,
        position: result.iteration,
    })
}

/// Runs every configured method on replication `rep`.
pub fn run_replication(cfg: &BenchConfig, rep: usize) -> Result<Replication> {
    let seed = cfg.replication_seed(rep);
    let instance = generate(&cfg.spec(rep))?;
    let family = cfg.family();
    let plan = CvPlan::new(cfg.n, cfg.folds, child_seed(seed, STREAM_CV), LossKind::for_family(family))?
        .keep_fold_paths(cfg.audit);
    let iga_cfg = IgaConfig {
        k_max: cfg.k_max,
        ..IgaConfig::default()
    };
    let mut runs = Vec::with_capacity(cfg.methods.len());
    let mut audit = cfg.audit.then(AuditReport::default);
    for &method in &cfg.methods {
        match method {
            Method::Iga => {
                let plan = plan.clone().with_lambda_grid(vec![1.0]);
                let res = cv_select(
                    &instance.dataset,
                    family,
                    &instance.partition,
                    &iga_cfg,
                    &plan,
                    &SelectionPolicy::Greedy,
                )?;
                if let Some(a) = audit.as_mut() {
                    a.merge(audit_cv(&res, &instance, family, &instance.partition, &plan)?);
                }
                runs.push(greedy_run(method, &res, &instance)?);
            }
            Method::IgaLambda => {
                let list = make_priority_list(&instance, child_seed(seed, STREAM_PRIORITY))?;
                let plan = plan.clone().with_lambda_grid(cfg.lambda_grid.clone());
                let res = cv_select(
                    &instance.dataset,
                    family,
                    &instance.partition,
                    &iga_cfg,
                    &plan,
                    &SelectionPolicy::PriorityList(list),
                )?;
                if let Some(a) = audit.as_mut() {
                    a.merge(audit_cv(&res, &instance, family, &instance.partition, &plan)?);
                }
                runs.push(greedy_run(method, &res, &instance)?);
            }
            Method::Foba => {
                let foba_cfg = IgaConfig {
                    k_max: cfg.foba_k_max,
                    ..IgaConfig::default()
                };
                let res = cv_foba(&instance.dataset, family, &foba_cfg, &plan)?;
                if let Some(a) = audit.as_mut() {
                    let singletons = GroupPartition::singletons(instance.partition.p())?;
                    a.merge(audit_cv(&res, &instance, family, &singletons, &plan)?);
                }
                runs.push(greedy_run(method, &res, &instance)?);
            }
            Method::GroupLasso => {
                let res = cv_group_lasso(&instance.dataset, family, &instance.partition, &cfg.lasso, &plan)?;
                let report = evaluate(&res.coefficients, GL_ZERO_THRESHOLD, &instance)?;
                runs.push(MethodRun {
                    method,
                    selected_groups: res.active_groups.one_based(),
                    report,
                    tuning: res.alpha,
                    position: res.index,
                });
            }
        }
    }
    Ok(Replication {
        index: rep,
        seed,
        runs,
        audit,
    })
}

/// Runs all replications (concurrently) and summarizes per method.
pub fn bench_table(cfg: &BenchConfig) -> Result<BenchResult> {
    cfg.validate()?;
    let replications = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Result<Vec<_>>>()?;
    let mut summaries = Vec::new();
    if cfg.replications >= 2 {
        let mut methods = cfg.methods.clone();
        methods.sort();
        methods.dedup();
        for method in methods {
            let reports: Vec<EvalReport> = replications
                .iter()
                .flat_map(|r| r.runs.iter().filter(|m| m.method == method).map(|m| m.report.clone()))
                .collect();
            summaries.push(MethodSummary {
                method,
                summary: summarize(&reports)?,
            });
        }
    }
    Ok(BenchResult {
        config: cfg.clone(),
        replications,
        summaries,
    })
}
