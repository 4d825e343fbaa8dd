//! The interactive forward-backward greedy path engine.
//!
//! One engine covers both scoring rules. In `ObjectiveReduction` mode a
//! candidate group is scored by the drop in `Q` obtained by optimizing only
//! that group's coefficients; in `GradientNorm` mode it is scored by
//! `||grad_g Q(w)||`. Everything after the pick (refit, level gain, backward
//! sweep) is shared.
//!
//! Each forward step builds the discounted candidate set
//! `A_lambda = { g : score(g) >= lambda * max score }` and lets a
//! [`SelectionPolicy`] pick from it. After the refit the level gain
//! `delta_k = Q(w_{k-1}) - Q(w_k)` is pushed on a stack; the backward sweep
//! then removes the cheapest active group while its removal cost
//! `Q(w - E_g w_g) - Q(w)` is below half the gain of the current level,
//! popping the stack on every removal.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::Objective;
use crate::error::{Error, Result};
use crate::groups::{GroupPartition, GroupSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Score by the objective decrease of a single-group fit (IGA).
    ObjectiveReduction,
    /// Score by the group norm of the gradient (GIGA).
    GradientNorm,
}

impl FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "objective" | "objective_reduction" | "objective-reduction" | "iga" => {
                Ok(ScoringMode::ObjectiveReduction)
            }
            "gradient" | "gradient_norm" | "gradient-norm" | "giga" => Ok(ScoringMode::GradientNorm),
            other => Err(Error::InvalidArgument(format!("unknown scoring mode `{other}`"))),
        }
    }
}

/// Path engine settings. `None` fields are resolved against the data when
/// the engine starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IgaConfig {
    /// Discount factor in `(0, 1]`.
    pub lambda: f64,
    pub scoring_mode: ScoringMode,
    /// Maximum number of active groups; default `min(m, n / mean group size)`.
    pub k_max: Option<usize>,
    /// Termination threshold on the best score; default `1e-10 * Q(0)`.
    pub delta_floor: Option<f64>,
    /// Relative slack on the `lambda * best` boundary of `A_lambda`.
    pub tie_tolerance: f64,
    /// Run backward sweeps. Disabling gives plain forward stepwise selection.
    pub backward: bool,
}

impl Default for IgaConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            scoring_mode: ScoringMode::ObjectiveReduction,
            k_max: None,
            delta_floor: None,
            tie_tolerance: 1e-12,
            backward: true,
        }
    }
}

impl IgaConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if self.k_max == Some(0) {
            return Err(Error::InvalidArgument("k_max must be at least 1".into()));
        }
        if let Some(d) = self.delta_floor {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::InvalidArgument("delta_floor must be nonnegative".into()));
            }
        }
        if !(self.tie_tolerance >= 0.0 && self.tie_tolerance < 1.0) {
            return Err(Error::InvalidArgument("tie_tolerance must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Fills in data-dependent defaults.
    pub fn resolve(&self, obj: &Objective, partition: &GroupPartition) -> Result<ResolvedConfig> {
        self.validate()?;
        let m = partition.m();
        let k_max = match self.k_max {
            Some(k) => k.min(m),
            None => {
                let by_rows = (obj.n() as f64 / partition.mean_size()).floor() as usize;
                by_rows.clamp(1, m)
            }
        };
        let delta_floor = match self.delta_floor {
            Some(d) => d,
            None => 1e-10 * obj.value(&DVector::zeros(obj.p()))?,
        };
        Ok(ResolvedConfig {
            lambda: self.lambda,
            scoring_mode: self.scoring_mode,
            k_max,
            delta_floor,
            tie_tolerance: self.tie_tolerance,
            backward: self.backward,
        })
    }
}

/// [`IgaConfig`] with every default filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub lambda: f64,
    pub scoring_mode: ScoringMode,
    pub k_max: usize,
    pub delta_floor: f64,
    pub tie_tolerance: f64,
    pub backward: bool,
}

/// A scored group outside the active set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub group: usize,
    pub score: f64,
    pub in_a_lambda: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Add,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub action: Action,
    pub group: usize,
    pub q_after: f64,
    /// Gain of the level entered (add) or left (remove).
    pub level_gain: f64,
    pub iteration: usize,
}

/// State after a completed forward step and its backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub active: GroupSet,
    pub coefficients: DVector<f64>,
    pub value: f64,
}

/// Scores seen by one forward step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForwardRecord {
    pub iteration: usize,
    pub group: usize,
    pub best_score: f64,
    pub chosen_score: f64,
    pub level_gain: f64,
}

/// Exit condition observed at the end of one backward sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepExit {
    pub iteration: usize,
    pub level: usize,
    pub threshold: f64,
    pub min_removal_cost: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Best score fell below the floor.
    BelowThreshold,
    /// Active set reached `k_max`.
    KMax,
    /// Every group is active.
    NoCandidates,
    /// Hard cap on forward evaluations was reached.
    EvaluationGuard,
    /// A refit failed to lower the objective.
    NoProgress,
    /// Stopped by the caller.
    Stopped,
}

/// The ordered add/remove events of a run plus per-iteration snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPath {
    pub events: Vec<PathEvent>,
    pub snapshots: Vec<Snapshot>,
    pub forward_records: Vec<ForwardRecord>,
    pub sweep_exits: Vec<SweepExit>,
    pub termination: Option<Termination>,
    pub forward_evaluations: usize,
    pub config: ResolvedConfig,
    pub null_value: f64,
}

impl SelectionPath {
    /// One-based group ids, negated for removals: `{3, 2, 1, -3, ...}`.
    pub fn signed_path(&self) -> Vec<i64> {
        self.events
            .iter()
            .map(|e| match e.action {
                Action::Add => e.group as i64 + 1,
                Action::Remove => -(e.group as i64 + 1),
            })
            .collect()
    }

    /// Groups in the order they were added, ignoring removals.
    pub fn additions(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter(|e| e.action == Action::Add)
            .map(|e| e.group)
            .collect()
    }

    pub fn has_removal_of(&self, g: usize) -> bool {
        self.events
            .iter()
            .any(|e| e.action == Action::Remove && e.group == g)
    }

    /// Serializable form with one-based group ids.
    pub fn to_json(&self) -> PathJson {
        PathJson {
            events: self
                .events
                .iter()
                .map(|e| EventJson {
                    action: e.action,
                    group: e.group + 1,
                    q_after: e.q_after,
                    level_gain: e.level_gain,
                    iteration: e.iteration,
                })
                .collect(),
            snapshots: self
                .snapshots
                .iter()
                .map(|s| SnapshotJson {
                    iteration: s.iteration,
                    active_groups: s.active.one_based(),
                    coefficients: s.coefficients.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventJson {
    pub action: Action,
    pub group: usize,
    #[serde(rename = "Q_after")]
    pub q_after: f64,
    pub level_gain: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotJson {
    pub iteration: usize,
    pub active_groups: Vec<usize>,
    pub coefficients: Vec<f64>,
}

/// `{"events": [...], "snapshots": [...]}` with one-based group ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathJson {
    pub events: Vec<EventJson>,
    pub snapshots: Vec<SnapshotJson>,
}

/// External pick function used by [`SelectionPolicy::Interactive`].
pub type Chooser<'a> = Box<dyn FnMut(&[Candidate]) -> usize + Send + 'a>;

/// How the next group is chosen from `A_lambda`.
pub enum SelectionPolicy<'a> {
    /// Highest score, ties to the smallest group id.
    Greedy,
    /// Highest-scoring member of `A_lambda` that is also in the list;
    /// greedy when the intersection is empty.
    PriorityList(GroupSet),
    /// External chooser. Returning a group outside `A_lambda` fails the step
    /// without changing state.
    Interactive(Chooser<'a>),
}

impl fmt::Debug for SelectionPolicy<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionPolicy::Greedy => f.write_str("Greedy"),
            SelectionPolicy::PriorityList(s) => f.debug_tuple("PriorityList").field(s).finish(),
            SelectionPolicy::Interactive(_) => f.write_str("Interactive(..)"),
        }
    }
}

impl SelectionPolicy<'_> {
    /// Independent copy for non-interactive policies; `None` for
    /// `Interactive`, whose chooser cannot be duplicated.
    pub fn replicate(&self) -> Option<SelectionPolicy<'static>> {
        match self {
            SelectionPolicy::Greedy => Some(SelectionPolicy::Greedy),
            SelectionPolicy::PriorityList(list) => Some(SelectionPolicy::PriorityList(list.clone())),
            SelectionPolicy::Interactive(_) => None,
        }
    }

    /// Picks a group from candidates sorted by descending score.
    pub fn choose(&mut self, candidates: &[Candidate]) -> usize {
        match self {
            SelectionPolicy::Greedy => candidates[0].group,
            SelectionPolicy::PriorityList(list) => candidates
                .iter()
                .find(|c| c.in_a_lambda && list.contains(c.group))
                .unwrap_or(&candidates[0])
                .group,
            SelectionPolicy::Interactive(chooser) => chooser(candidates),
        }
    }
}

/// Coefficients, support, and objective value of one model on a path.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    /// In the units of the raw (unscaled) design.
    pub coefficients: DVector<f64>,
    pub active_groups: GroupSet,
    pub objective_value: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForwardOutcome {
    Added(PathEvent),
    Terminated(Termination),
}

/// Candidate scores for every group outside `active`, sorted by descending
/// score with ties to the smaller group id.
pub fn candidate_set(
    obj: &Objective,
    w: &DVector<f64>,
    active: &GroupSet,
    cfg: &ResolvedConfig,
    partition: &GroupPartition,
) -> Result<Vec<Candidate>> {
    let eval = obj.evaluate(w)?;
    let pool: Vec<usize> = (0..partition.m()).filter(|&g| !active.contains(g)).collect();
    if pool.is_empty() {
        return Err(Error::NoCandidates);
    }
    let scores: Vec<f64> = pool
        .par_iter()
        .map(|&g| {
            let idx = partition.group(g);
            match cfg.scoring_mode {
                ScoringMode::ObjectiveReduction => eval.forward_gain(idx),
                ScoringMode::GradientNorm => eval.group_gradient_norm(idx),
            }
        })
        .collect();
    Ok(rank_candidates(&pool, &scores, cfg.lambda, cfg.tie_tolerance))
}

/// Sorts scored groups and flags `A_lambda` membership.
pub fn rank_candidates(groups: &[usize], scores: &[f64], lambda: f64, tie_tolerance: f64) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = groups
        .iter()
        .zip(scores)
        .map(|(&group, &score)| Candidate {
            group,
            score,
            in_a_lambda: false,
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.group.cmp(&b.group)));
    let cut = lambda * out.first().map_or(0.0, |c| c.score) * (1.0 - tie_tolerance);
    for c in &mut out {
        c.in_a_lambda = c.score >= cut;
    }
    out
}

/// Step-by-step driver of a single selection path.
#[derive(Debug, Clone)]
pub struct PathEngine {
    obj: Objective,
    partition: Arc<GroupPartition>,
    cfg: ResolvedConfig,
    active: GroupSet,
    w: DVector<f64>,
    value: f64,
    level_gains: Vec<f64>,
    iteration: usize,
    path: SelectionPath,
}

impl PathEngine {
    pub fn new(obj: Objective, partition: Arc<GroupPartition>, cfg: &IgaConfig) -> Result<Self> {
        if partition.p() != obj.p() {
            return Err(Error::Dimension {
                what: "partition feature count",
                expected: obj.p(),
                got: partition.p(),
            });
        }
        let resolved = cfg.resolve(&obj, &partition)?;
        let w = DVector::zeros(obj.p());
        let value = obj.value(&w)?;
        Ok(Self {
            path: SelectionPath {
                events: Vec::new(),
                snapshots: Vec::new(),
                forward_records: Vec::new(),
                sweep_exits: Vec::new(),
                termination: None,
                forward_evaluations: 0,
                config: resolved,
                null_value: value,
            },
            obj,
            partition,
            cfg: resolved,
            active: GroupSet::new(),
            w,
            value,
            level_gains: Vec::new(),
            iteration: 0,
        })
    }

    pub fn objective(&self) -> &Objective {
        &self.obj
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn config(&self) -> &ResolvedConfig {
        &self.cfg
    }

    pub fn active(&self) -> &GroupSet {
        &self.active
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn level_gains(&self) -> &[f64] {
        &self.level_gains
    }

    pub fn path(&self) -> &SelectionPath {
        &self.path
    }

    pub fn termination(&self) -> Option<Termination> {
        self.path.termination
    }

    pub fn into_path(self) -> SelectionPath {
        self.path
    }

    fn guard_limit(&self) -> usize {
        2 * self.cfg.k_max * self.partition.m()
    }

    fn finish(&mut self, why: Termination) -> Termination {
        self.path.termination = Some(why);
        why
    }

    /// Stops the path; later steps report `Stopped`.
    pub fn stop(&mut self) {
        if self.path.termination.is_none() {
            self.path.termination = Some(Termination::Stopped);
        }
    }

    /// Scores the candidates for the next forward step, or reports why the
    /// path has ended.
    pub fn prepare(&mut self) -> Result<std::result::Result<Vec<Candidate>, Termination>> {
        if let Some(t) = self.path.termination {
            return Ok(Err(t));
        }
        if self.active.len() >= self.cfg.k_max {
            return Ok(Err(self.finish(Termination::KMax)));
        }
        let remaining = self.partition.m() - self.active.len();
        if remaining == 0 {
            return Ok(Err(self.finish(Termination::NoCandidates)));
        }
        if self.path.forward_evaluations + remaining > self.guard_limit() {
            return Ok(Err(self.finish(Termination::EvaluationGuard)));
        }
        let cands = candidate_set(&self.obj, &self.w, &self.active, &self.cfg, &self.partition)?;
        self.path.forward_evaluations += cands.len();
        let best = cands[0].score;
        if !(best > 0.0) || best < self.cfg.delta_floor {
            return Ok(Err(self.finish(Termination::BelowThreshold)));
        }
        Ok(Ok(cands))
    }

    fn refit(&self, active: &GroupSet) -> Result<(DVector<f64>, f64)> {
        let support = self.partition.feature_set(active);
        let rep = self.obj.restricted_minimize(&support, Some(&self.w))?;
        Ok((rep.w, rep.value))
    }

    /// Adds `group`, which must be flagged in `candidates` as a member of
    /// `A_lambda`. Leaves the state untouched on error.
    pub fn apply_pick(&mut self, candidates: &[Candidate], group: usize) -> Result<ForwardOutcome> {
        if let Some(t) = self.path.termination {
            return Ok(ForwardOutcome::Terminated(t));
        }
        let chosen = candidates
            .iter()
            .find(|c| c.group == group && c.in_a_lambda)
            .ok_or(Error::PickOutsideCandidates { group })?;
        let mut next = self.active.clone();
        next.insert(group);
        let (w, value) = self.refit(&next)?;
        let gain = self.value - value;
        if !(gain > 0.0) {
            return Ok(ForwardOutcome::Terminated(self.finish(Termination::NoProgress)));
        }
        self.iteration += 1;
        self.active = next;
        self.w = w;
        self.value = value;
        self.level_gains.push(gain);
        self.path.forward_records.push(ForwardRecord {
            iteration: self.iteration,
            group,
            best_score: candidates[0].score,
            chosen_score: chosen.score,
            level_gain: gain,
        });
        let event = PathEvent {
            action: Action::Add,
            group,
            q_after: value,
            level_gain: gain,
            iteration: self.iteration,
        };
        self.path.events.push(event.clone());
        if !self.cfg.backward {
            self.push_snapshot();
        }
        Ok(ForwardOutcome::Added(event))
    }

    /// Scores candidates, lets `policy` pick, and refits.
    pub fn forward_step(&mut self, policy: &mut SelectionPolicy<'_>) -> Result<ForwardOutcome> {
        match self.prepare()? {
            Err(t) => Ok(ForwardOutcome::Terminated(t)),
            Ok(cands) => {
                let g = policy.choose(&cands);
                self.apply_pick(&cands, g)
            }
        }
    }

    /// Removes groups while the cheapest removal costs less than half the
    /// current level's gain, then records a snapshot.
    pub fn backward_sweep(&mut self) -> Result<Vec<PathEvent>> {
        let mut removed = Vec::new();
        if self.cfg.backward {
            while let Some(&level_gain) = self.level_gains.last() {
                let eval = self.obj.evaluate(&self.w)?;
                let (g, cost) = self
                    .active
                    .iter()
                    .map(|g| (g, eval.removal_cost(self.partition.group(g))))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                    .expect("level stack and active set have equal length");
                let threshold = level_gain / 2.0;
                if cost >= threshold {
                    self.path.sweep_exits.push(SweepExit {
                        iteration: self.iteration,
                        level: self.active.len(),
                        threshold,
                        min_removal_cost: cost,
                        value: self.value,
                    });
                    break;
                }
                let mut next = self.active.clone();
                next.remove(g);
                let (w, value) = self.refit(&next)?;
                self.active = next;
                self.w = w;
                self.value = value;
                self.level_gains.pop();
                let event = PathEvent {
                    action: Action::Remove,
                    group: g,
                    q_after: value,
                    level_gain,
                    iteration: self.iteration,
                };
                self.path.events.push(event.clone());
                removed.push(event);
            }
            self.push_snapshot();
        }
        Ok(removed)
    }

    fn push_snapshot(&mut self) {
        self.path.snapshots.push(Snapshot {
            iteration: self.iteration,
            active: self.active.clone(),
            coefficients: self.w.clone(),
            value: self.value,
        });
    }

    /// Alternates forward steps and backward sweeps until termination.
    pub fn run(mut self, policy: &mut SelectionPolicy<'_>) -> Result<SelectionPath> {
        loop {
            match self.forward_step(policy)? {
                ForwardOutcome::Added(_) => {
                    self.backward_sweep()?;
                }
                ForwardOutcome::Terminated(_) => return Ok(self.path),
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn force_state(&mut self, active: GroupSet, level_gains: Vec<f64>) -> Result<()> {
        assert_eq!(active.len(), level_gains.len());
        self.active = active;
        let (w, value) = self.refit(&self.active.clone())?;
        self.w = w;
        self.value = value;
        self.level_gains = level_gains;
        Ok(())
    }
}

/// Runs a full path.
pub fn run_path(
    obj: &Objective,
    partition: &GroupPartition,
    cfg: &IgaConfig,
    policy: &mut SelectionPolicy<'_>,
) -> Result<SelectionPath> {
    PathEngine::new(obj.clone(), Arc::new(partition.clone()), cfg)?.run(policy)
}

/// Refits the active set recorded after iteration `t` (`t = 0` is the null
/// model).
pub fn state_at_iteration(
    path: &SelectionPath,
    t: usize,
    obj: &Objective,
    partition: &GroupPartition,
) -> Result<FittedModel> {
    if t > path.snapshots.len() {
        return Err(Error::Range {
            index: t,
            limit: path.snapshots.len() + 1,
        });
    }
    let active = if t == 0 {
        GroupSet::new()
    } else {
        path.snapshots[t - 1].active.clone()
    };
    let rep = obj.restricted_minimize(&partition.feature_set(&active), None)?;
    Ok(FittedModel {
        coefficients: obj.data().to_raw_coefficients(&rep.w),
        active_groups: active,
        objective_value: rep.value,
        iteration: t,
    })
}

/// Result of [`audit_path`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub forward_steps: usize,
    pub sweep_exits: usize,
    pub snapshots: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: AuditReport) {
        self.forward_steps += other.forward_steps;
        self.sweep_exits += other.sweep_exits;
        self.snapshots += other.snapshots;
        self.violations.extend(other.violations);
    }
}

/// Checks the per-step guarantees of a recorded path: the forward gain
/// bound, the backward exit condition, bit-zero coefficients off the active
/// groups, `k_max`, and that replaying the events yields each snapshot's
/// active set. With `obj`, removal costs at each snapshot are recomputed
/// rather than read from the recorded sweep exits.
pub fn audit_path(path: &SelectionPath, partition: &GroupPartition, obj: Option<&Objective>) -> AuditReport {
    let cfg = &path.config;
    let mut report = AuditReport::default();
    let slack = |q: f64| 1e-12 * q.abs().max(1e-300);

    for rec in &path.forward_records {
        report.forward_steps += 1;
        if cfg.scoring_mode == ScoringMode::ObjectiveReduction {
            if rec.level_gain < cfg.lambda * cfg.delta_floor {
                report.violations.push(format!(
                    "iteration {}: gain {} below lambda * floor {}",
                    rec.iteration,
                    rec.level_gain,
                    cfg.lambda * cfg.delta_floor
                ));
            }
            let bound = cfg.lambda * rec.best_score * (1.0 - cfg.tie_tolerance);
            if rec.level_gain < bound - 1e-9 * path.null_value.abs() {
                report.violations.push(format!(
                    "iteration {}: gain {} below lambda * best {}",
                    rec.iteration, rec.level_gain, bound
                ));
            }
        }
        if !(rec.level_gain > 0.0) {
            report
                .violations
                .push(format!("iteration {}: nonpositive gain", rec.iteration));
        }
    }

    if cfg.backward {
        for exit in &path.sweep_exits {
            report.sweep_exits += 1;
            if exit.min_removal_cost < exit.threshold - slack(exit.value) {
                report.violations.push(format!(
                    "iteration {}: sweep exited with removal cost {} < threshold {}",
                    exit.iteration, exit.min_removal_cost, exit.threshold
                ));
            }
        }
    }

    // replay events against snapshots
    let mut active = GroupSet::new();
    let mut stack: Vec<f64> = Vec::new();
    let mut events = path.events.iter().peekable();
    for snap in &path.snapshots {
        report.snapshots += 1;
        while let Some(e) = events.peek() {
            if e.iteration > snap.iteration {
                break;
            }
            match e.action {
                Action::Add => {
                    active.insert(e.group);
                    stack.push(e.level_gain);
                }
                Action::Remove => {
                    active.remove(e.group);
                    stack.pop();
                }
            }
            events.next();
        }
        if active != snap.active {
            report.violations.push(format!(
                "iteration {}: replayed set {:?} differs from snapshot {:?}",
                snap.iteration,
                active.one_based(),
                snap.active.one_based()
            ));
        }
        if snap.active.len() > cfg.k_max {
            report
                .violations
                .push(format!("iteration {}: active set exceeds k_max", snap.iteration));
        }
        for g in (0..partition.m()).filter(|&g| !snap.active.contains(g)) {
            if partition
                .group(g)
                .iter()
                .any(|&j| snap.coefficients[j].to_bits() != 0)
            {
                report.violations.push(format!(
                    "iteration {}: inactive group {} has nonzero coefficients",
                    snap.iteration,
                    g + 1
                ));
            }
        }
        if let (Some(obj), true, Some(&top)) = (obj, cfg.backward, stack.last()) {
            match obj.evaluate(&snap.coefficients) {
                Ok(eval) => {
                    let min_cost = snap
                        .active
                        .iter()
                        .map(|g| eval.removal_cost(partition.group(g)))
                        .fold(f64::INFINITY, f64::min);
                    if min_cost < top / 2.0 - slack(eval.value()) {
                        report.violations.push(format!(
                            "iteration {}: recomputed removal cost {} < threshold {}",
                            snap.iteration,
                            min_cost,
                            top / 2.0
                        ));
                    }
                }
                Err(e) => report.violations.push(e.to_string()),
            }
        }
    }
    report
}
