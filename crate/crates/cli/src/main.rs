use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use iga::baselines::{cv_foba, cv_group_lasso, LassoConfig, GL_ZERO_THRESHOLD};
use iga::bench::{bench_table, BenchConfig, Method};
use iga::iga::{run_path, IgaConfig, ScoringMode, SelectionPolicy};
use iga::modelselect::{cv_select, CvPlan, CvResult, LossKind, DEFAULT_LAMBDA_GRID};
use iga::simgen::{generate, Case, SimSpec};
use iga::verify::{gain_sandwich_check, phi_bounds, scaled_gradient_bound, scaling_experiment, ScalingConfig};
use iga::{Dataset, Family, GroupPartition, GroupSet, Objective};
use iga_session::SessionStore;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Iga(#[from] iga::Error),
    #[error("{0}")]
    Runtime(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "iga", version, about = "Group-sparse greedy selection: simulate, fit, cross-validate, benchmark")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Design matrix, one observation per row.
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// `{"p": int, "groups": [[feature, ...], ...]}` with zero-based features.
    #[arg(long)]
    groups: PathBuf,
    #[arg(long, default_value = "gaussian")]
    family: Family,
    /// Fit on the raw columns instead of columns rescaled to norm sqrt(n).
    #[arg(long)]
    no_standardize: bool,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset, GroupPartition)> {
        let data = Dataset::from_csv(&self.x, &self.y)?;
        let partition = GroupPartition::from_file(&self.groups)?;
        if partition.p() != data.p() {
            return Err(CliError::Runtime(format!(
                "groups cover {} features but X has {} columns",
                partition.p(),
                data.p()
            )));
        }
        Ok((data, partition))
    }

    fn objective(&self, data: &Dataset) -> Result<Objective> {
        let data = if self.no_standardize { data.clone() } else { data.standardize()? };
        Ok(Objective::new(self.family, data)?)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a simulated data set: X.csv, y.csv, groups.json, truth.json.
    Simulate {
        #[arg(long)]
        case: Case,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        kbar: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        q: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy path at one lambda plus the cross-validated model on it.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One selection path, no cross-validation.
    Path {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// `objective` (IGA) or `gradient` (GIGA).
        #[arg(long, default_value = "objective")]
        scoring: ScoringMode,
        /// Skip backward sweeps.
        #[arg(long)]
        forward_only: bool,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate the path iteration and lambda.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDA_GRID)]
        lambda_grid: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// One-based groups to prefer within A_lambda.
        #[arg(long, value_delimiter = ',')]
        priority: Vec<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated group lasso or FoBa.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: BaselineMethod,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 100)]
        grid_points: usize,
        #[arg(long, default_value_t = 1e-3)]
        grid_ratio: f64,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Numerical checks of regularity constants and error rates.
    Verify {
        #[arg(long)]
        check: Check,
        /// Data for `phi` and `sandwich`.
        #[arg(long)]
        x: Option<PathBuf>,
        #[arg(long)]
        y: Option<PathBuf>,
        #[arg(long)]
        groups: Option<PathBuf>,
        /// Group budget for `phi`.
        #[arg(long, default_value_t = 2)]
        t: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value = "1")]
        case: Case,
        #[arg(long, default_value_t = 5)]
        kbar: usize,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [200usize, 400, 800, 1600])]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated simulation benchmark for one table cell.
    Bench {
        /// 2 (linear) or 3 (logistic).
        #[arg(long)]
        table: u32,
        /// `beta=<f>,kbar=<k>`.
        #[arg(long, default_value = "beta=1,kbar=5")]
        cell: String,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        q: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAMBDA_GRID)]
        lambda_grid: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Audit every greedy path and report violations.
        #[arg(long)]
        audit: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Write finished sessions here as JSON.
        #[arg(long)]
        persist: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineMethod {
    GroupLasso,
    Foba,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Check {
    Phi,
    Sandwich,
    Scaling,
    GradientBound,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_cell(cell: &str) -> Result<(f64, usize)> {
    let (mut beta, mut kbar) = (None, None);
    for part in cell.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("cell entry `{part}` is not key=value")))?;
        match key.trim() {
            "beta" => beta = Some(value.trim().parse().map_err(|_| usage(format!("bad beta `{value}`")))?),
            "kbar" => kbar = Some(value.trim().parse().map_err(|_| usage(format!("bad kbar `{value}`")))?),
            other => return Err(usage(format!("unknown cell key `{other}`"))),
        }
    }
    match (beta, kbar) {
        (Some(b), Some(k)) => Ok((b, k)),
        _ => Err(usage("cell needs both beta and kbar")),
    }
}

fn one_based_set(ids: &[usize], m: usize) -> Result<GroupSet> {
    let mut set = GroupSet::new();
    for &g in ids {
        if g == 0 || g > m {
            return Err(usage(format!("group {g} outside 1..={m}")));
        }
        set.insert(g - 1);
    }
    Ok(set)
}

/// Writes JSON to `out` when given; stdout gets the table or, without
/// `out`, the JSON.
fn emit<T: Serialize>(value: &T, table: impl FnOnce() -> String, out: Option<&Path>, format: Format) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text + "\n")?;
        if format == Format::Table {
            print!("{}", table());
        }
    } else {
        match format {
            Format::Json => println!("{text}"),
            Format::Table => print!("{}", table()),
        }
    }
    Ok(())
}

fn cv_table(res: &CvResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "lambda {}  iteration {}  cv loss {:.6}", res.lambda, res.iteration, res.min_loss);
    let _ = writeln!(s, "selected groups {:?}", res.model.active_groups.one_based());
    s
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let (seed, format) = (cli.seed, cli.format);
    match cli.command {
        Command::Simulate { case, n, kbar, beta, m, q, out } => {
            let spec = SimSpec::new(case, n, kbar, beta, seed).with_groups(m, q);
            if case != Case::Heuristic {
                spec.validate().map_err(|e| usage(e.to_string()))?;
            }
            let inst = generate(&spec)?;
            std::fs::create_dir_all(&out)?;
            inst.dataset.write_csv(out.join("X.csv"), out.join("y.csv"))?;
            let groups = serde_json::to_string_pretty(&inst.partition.to_file()).map_err(|e| CliError::Runtime(e.to_string()))?;
            std::fs::write(out.join("groups.json"), groups + "\n")?;
            let truth = json!({
                "coefficients": inst.truth.iter().copied().collect::<Vec<_>>(),
                "relevant_groups": inst.relevant.one_based(),
                "spec": inst.spec,
            });
            std::fs::write(out.join("truth.json"), serde_json::to_string_pretty(&truth).expect("json value") + "\n")?;
            if format == Format::Table {
                println!(
                    "wrote {} rows, {} features, {} groups to {}",
                    inst.dataset.n(),
                    inst.dataset.p(),
                    inst.partition.m(),
                    out.display()
                );
            }
        }
        Command::Fit { data, lambda, folds, k_max, out } => {
            let (raw, partition) = data.load()?;
            let cfg = IgaConfig {
                k_max,
                ..IgaConfig::with_lambda(lambda)
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let plan = CvPlan::new(raw.n(), folds, seed, LossKind::for_family(data.family))
                .map_err(|e| usage(e.to_string()))?
                .with_lambda_grid(vec![lambda]);
            let plan = CvPlan {
                standardize: !data.no_standardize,
                ..plan
            };
            let res = cv_select(&raw, data.family, &partition, &cfg, &plan, &SelectionPolicy::Greedy)?;
            let value = json!({ "path": res.full_path.to_json(), "cv": res.report() });
            emit(&value, || cv_table(&res), out.as_deref(), format)?;
        }
        Command::Path {
            data,
            lambda,
            scoring,
            forward_only,
            k_max,
            out,
        } => {
            let (raw, partition) = data.load()?;
            let cfg = IgaConfig {
                lambda,
                scoring_mode: scoring,
                k_max,
                backward: !forward_only,
                ..IgaConfig::default()
            };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let obj = data.objective(&raw)?;
            let path = run_path(&obj, &partition, &cfg, &mut SelectionPolicy::Greedy)?;
            let table = || format!("path {:?}\ntermination {:?}\n", path.signed_path(), path.termination);
            emit(&path.to_json(), table, out.as_deref(), format)?;
        }
        Command::Cv {
            data,
            lambda_grid,
            folds,
            priority,
            k_max,
            out,
        } => {
            let (raw, partition) = data.load()?;
            let plan = CvPlan::new(raw.n(), folds, seed, LossKind::for_family(data.family))
                .map_err(|e| usage(e.to_string()))?
                .with_lambda_grid(lambda_grid);
            let plan = CvPlan {
                standardize: !data.no_standardize,
                ..plan
            };
            plan.validate(raw.n()).map_err(|e| usage(e.to_string()))?;
            let policy = if priority.is_empty() {
                SelectionPolicy::Greedy
            } else {
                SelectionPolicy::PriorityList(one_based_set(&priority, partition.m())?)
            };
            let cfg = IgaConfig {
                k_max,
                ..IgaConfig::default()
            };
            let res = cv_select(&raw, data.family, &partition, &cfg, &plan, &policy)?;
            emit(&res.report(), || cv_table(&res), out.as_deref(), format)?;
        }
        Command::Baseline {
            data,
            method,
            folds,
            grid_points,
            grid_ratio,
            k_max,
            out,
        } => {
            let (raw, partition) = data.load()?;
            let plan = CvPlan::new(raw.n(), folds, seed, LossKind::for_family(data.family)).map_err(|e| usage(e.to_string()))?;
            let plan = CvPlan {
                standardize: !data.no_standardize,
                ..plan
            };
            match method {
                BaselineMethod::GroupLasso => {
                    let cfg = LassoConfig {
                        grid_points,
                        grid_ratio,
                        ..LassoConfig::default()
                    };
                    cfg.validate().map_err(|e| usage(e.to_string()))?;
                    let res = cv_group_lasso(&raw, data.family, &partition, &cfg, &plan)?;
                    let value = json!({
                        "alphas": res.alphas,
                        "mean_loss": res.mean_loss,
                        "index": res.index,
                        "alpha": res.alpha,
                        "coefficients": res.coefficients.iter().copied().collect::<Vec<_>>(),
                        "active_groups": partition.support(&res.coefficients, GL_ZERO_THRESHOLD).one_based(),
                        "path": res.path.to_json(&partition),
                    });
                    let table = || {
                        format!(
                            "alpha {} (grid index {})\nselected groups {:?}\n",
                            res.alpha,
                            res.index,
                            res.active_groups.one_based()
                        )
                    };
                    emit(&value, table, out.as_deref(), format)?;
                }
                BaselineMethod::Foba => {
                    let cfg = IgaConfig {
                        k_max,
                        ..IgaConfig::default()
                    };
                    let res = cv_foba(&raw, data.family, &cfg, &plan)?;
                    let mut report = res.report();
                    // report the selection in terms of the given groups
                    report.active_groups = partition.support(&res.model.coefficients, 0.0).one_based();
                    emit(&report, || cv_table(&res), out.as_deref(), format)?;
                }
            }
        }
        Command::Verify {
            check,
            x,
            y,
            groups,
            t,
            trials,
            case,
            kbar,
            beta,
            n_grid,
            reps,
            out,
        } => {
            let load = || -> Result<(Objective, GroupPartition)> {
                let (Some(x), Some(y), Some(groups)) = (&x, &y, &groups) else {
                    return Err(usage("this check needs --x, --y and --groups"));
                };
                let args = DataArgs {
                    x: x.clone(),
                    y: y.clone(),
                    groups: groups.clone(),
                    family: Family::Gaussian,
                    no_standardize: false,
                };
                let (raw, partition) = args.load()?;
                Ok((args.objective(&raw)?, partition))
            };
            match check {
                Check::Phi => {
                    let (obj, partition) = load()?;
                    let rep = phi_bounds(&obj, &partition, t)?;
                    let table = || {
                        format!(
                            "t {}  phi- {:.6}  phi+ {:.6}  kappa {:.4}\n",
                            rep.t, rep.phi_minus, rep.phi_plus, rep.kappa
                        )
                    };
                    emit(&rep, table, out.as_deref(), format)?;
                }
                Check::Sandwich => {
                    let (obj, partition) = load()?;
                    let rep = gain_sandwich_check(&obj, &partition, trials, seed)?;
                    let table = || format!("{}/{} trials passed\n", rep.passed, rep.trials);
                    emit(&rep, table, out.as_deref(), format)?;
                }
                Check::Scaling => {
                    let cfg = ScalingConfig::new(case, kbar, beta, n_grid, reps, seed);
                    let rep = scaling_experiment(&cfg)?;
                    let table = || format!("{}slope {:.4}\n", rep.to_csv(), rep.slope);
                    emit(&rep, table, out.as_deref(), format)?;
                }
                Check::GradientBound => {
                    let mut values = Vec::new();
                    for &n in &n_grid {
                        values.push(json!({
                            "n": n,
                            "median_scaled_gradient": scaled_gradient_bound(case, n, kbar, beta, reps, seed)?,
                        }));
                    }
                    let value = json!(values);
                    let table = || {
                        values
                            .iter()
                            .map(|v| format!("n {}  {:.4}\n", v["n"], v["median_scaled_gradient"].as_f64().unwrap_or(f64::NAN)))
                            .collect()
                    };
                    emit(&value, table, out.as_deref(), format)?;
                }
            }
        }
        Command::Bench {
            table,
            cell,
            n,
            m,
            q,
            reps,
            methods,
            lambda_grid,
            folds,
            audit,
            out,
        } => {
            let (beta, kbar) = parse_cell(&cell)?;
            let mut cfg = BenchConfig::for_table(table, n, kbar, beta, reps, seed).map_err(|e| usage(e.to_string()))?;
            if !methods.is_empty() {
                cfg.methods = methods;
            }
            cfg.m = m;
            cfg.q = q;
            cfg.lambda_grid = lambda_grid;
            cfg.folds = folds;
            cfg.audit = audit;
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let res = bench_table(&cfg)?;
            let audit_report = res.audit();
            let value = json!({
                "result": res,
                "audit": audit_report.as_ref().map(|a| json!({
                    "forward_steps": a.forward_steps,
                    "sweep_exits": a.sweep_exits,
                    "snapshots": a.snapshots,
                    "violations": a.violations,
                })),
            });
            emit(&value, || res.render_table(), out.as_deref(), format)?;
            if audit_report.is_some_and(|a| !a.is_clean()) {
                return Err(CliError::Runtime("path audit found violations".into()));
            }
        }
        Command::Serve { addr, persist } => {
            let store = Arc::new(match persist {
                Some(dir) => SessionStore::with_persistence(dir),
                None => SessionStore::new(),
            });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                iga_session::serve(listener, store).await
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            Cli::command().error(ErrorKind::ValueValidation, msg).exit();
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
