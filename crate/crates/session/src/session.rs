//! A single operator-driven selection path and the store holding many.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, TryLockError};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use iga::groups::GroupsFile;
use iga::iga::{Candidate, EventJson, ForwardOutcome, IgaConfig, PathEngine, PathJson, Termination};
use iga::{Dataset, Family, GroupPartition, Objective};

use crate::error::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingPick,
    /// A mutation is in flight.
    Running,
    Finished,
}

/// `POST /sessions` body. Data comes either inline (`x`, `y`, `groups`) or
/// from a bundle directory holding `X.csv`, `y.csv` and `groups.json`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub bundle: Option<PathBuf>,
    /// Rows of the design matrix.
    pub x: Option<Vec<Vec<f64>>>,
    pub y: Option<Vec<f64>>,
    pub groups: Option<GroupsFile>,
    #[serde(default = "default_family")]
    pub family: Family,
    #[serde(default)]
    pub config: IgaConfig,
    /// Rescale columns to norm `sqrt(n)` before fitting.
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_family() -> Family {
    Family::Gaussian
}

fn default_true() -> bool {
    true
}

impl CreateRequest {
    /// Loads and validates the data, returning the objective the path runs on.
    pub fn load(&self) -> Result<(Objective, GroupPartition), SessionError> {
        let (data, partition) = match (&self.bundle, &self.x, &self.y, &self.groups) {
            (Some(dir), None, None, None) => load_bundle(dir)?,
            (None, Some(x), Some(y), Some(groups)) => {
                let n = x.len();
                let p = x.first().map_or(0, Vec::len);
                if x.iter().any(|r| r.len() != p) {
                    return Err(SessionError::BadRequest("rows of x differ in length".into()));
                }
                let x = DMatrix::from_fn(n, p, |i, j| x[i][j]);
                let data = Dataset::new(x, DVector::from_vec(y.clone()))?;
                (data, GroupPartition::new(groups.groups.clone(), groups.p)?)
            }
            _ => {
                return Err(SessionError::BadRequest(
                    "give either `bundle` or all of `x`, `y`, `groups`".into(),
                ))
            }
        };
        if partition.p() != data.p() {
            return Err(SessionError::BadRequest(format!(
                "groups cover {} features but x has {}",
                partition.p(),
                data.p()
            )));
        }
        let data = if self.standardize { data.standardize()? } else { data };
        Ok((Objective::new(self.family, data)?, partition))
    }
}

fn load_bundle(dir: &Path) -> Result<(Dataset, GroupPartition), SessionError> {
    let data = Dataset::from_csv(dir.join("X.csv"), dir.join("y.csv"))?;
    let partition = GroupPartition::from_file(dir.join("groups.json"))?;
    Ok((data, partition))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub group: usize,
    pub score: f64,
    #[serde(rename = "in_A_lambda")]
    pub in_a_lambda: bool,
}

/// Wire form of a session, group ids one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub id: String,
    pub phase: Phase,
    pub iteration: usize,
    pub lambda: f64,
    pub active_groups: Vec<usize>,
    /// Empty unless the phase is `awaiting_pick`.
    pub candidates: Vec<CandidateView>,
    pub events: Vec<EventJson>,
    pub objective_value: f64,
    pub termination: Option<Termination>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelView {
    /// In the units of the uploaded design.
    pub coefficients: Vec<f64>,
    pub active_groups: Vec<usize>,
    pub objective_value: f64,
    pub iteration: usize,
}

/// Frozen outcome returned by `finish`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishReport {
    pub state: StateView,
    pub model: ModelView,
    pub path: PathJson,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug)]
pub struct Session {
    id: String,
    engine: PathEngine,
    phase: Phase,
    candidates: Vec<Candidate>,
    report: Option<FinishReport>,
    created_at_ms: u64,
    updated_at_ms: u64,
}

impl Session {
    /// Starts a path and scores the first candidate set.
    pub fn new(id: String, obj: Objective, partition: GroupPartition, cfg: &IgaConfig) -> Result<Self, SessionError> {
        let engine = PathEngine::new(obj, Arc::new(partition), cfg)?;
        let now = now_ms();
        let mut s = Self {
            id,
            engine,
            phase: Phase::AwaitingPick,
            candidates: Vec::new(),
            report: None,
            created_at_ms: now,
            updated_at_ms: now,
        };
        s.advance()?;
        Ok(s)
    }

    /// Rebuilds a session by applying `picks` (zero-based) in order.
    pub fn replay(
        id: String,
        obj: Objective,
        partition: GroupPartition,
        cfg: &IgaConfig,
        picks: &[usize],
    ) -> Result<Self, SessionError> {
        let mut s = Self::new(id, obj, partition, cfg)?;
        for &g in picks {
            s.pick(g)?;
        }
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn engine(&self) -> &PathEngine {
        &self.engine
    }

    /// Zero-based groups added so far, in order.
    pub fn picks(&self) -> Vec<usize> {
        self.engine.path().additions()
    }

    fn advance(&mut self) -> Result<(), SessionError> {
        match self.engine.prepare()? {
            Ok(cands) => {
                self.candidates = cands;
                self.phase = Phase::AwaitingPick;
            }
            Err(_) => {
                self.candidates.clear();
                self.phase = Phase::Finished;
            }
        }
        Ok(())
    }

    fn require_awaiting(&self) -> Result<(), SessionError> {
        if self.phase == Phase::AwaitingPick && self.report.is_none() {
            Ok(())
        } else {
            Err(SessionError::WrongPhase(self.phase))
        }
    }

    /// Adds zero-based `group` if it is in `A_lambda`, then runs the backward
    /// sweep and scores the next candidates. On error nothing changes.
    pub fn pick(&mut self, group: usize) -> Result<(), SessionError> {
        self.require_awaiting()?;
        match self.engine.apply_pick(&self.candidates, group) {
            Ok(ForwardOutcome::Added(_)) => {
                self.engine.backward_sweep()?;
                self.advance()?;
            }
            Ok(ForwardOutcome::Terminated(_)) => {
                self.candidates.clear();
                self.phase = Phase::Finished;
            }
            Err(iga::Error::PickOutsideCandidates { group }) => return Err(SessionError::PickOutside { group: group + 1 }),
            Err(e) => return Err(e.into()),
        }
        self.updated_at_ms = now_ms();
        Ok(())
    }

    /// Applies up to `steps` greedy picks; stops early when the path ends.
    pub fn auto(&mut self, steps: usize) -> Result<(), SessionError> {
        self.require_awaiting()?;
        for _ in 0..steps {
            if self.phase != Phase::AwaitingPick {
                break;
            }
            let top = self.candidates[0].group;
            self.pick(top)?;
        }
        Ok(())
    }

    /// Freezes the session. Later calls return the same report.
    pub fn finish(&mut self) -> FinishReport {
        if let Some(r) = &self.report {
            return r.clone();
        }
        self.engine.stop();
        self.candidates.clear();
        self.phase = Phase::Finished;
        self.updated_at_ms = now_ms();
        let data = self.engine.objective().data();
        let report = FinishReport {
            state: self.view(),
            model: ModelView {
                coefficients: data.to_raw_coefficients(self.engine.coefficients()).iter().copied().collect(),
                active_groups: self.engine.active().one_based(),
                objective_value: self.engine.value(),
                iteration: self.engine.iteration(),
            },
            path: self.engine.path().to_json(),
        };
        self.report = Some(report.clone());
        report
    }

    pub fn view(&self) -> StateView {
        StateView {
            id: self.id.clone(),
            phase: self.phase,
            iteration: self.engine.iteration(),
            lambda: self.engine.config().lambda,
            active_groups: self.engine.active().one_based(),
            candidates: self
                .candidates
                .iter()
                .map(|c| CandidateView {
                    group: c.group + 1,
                    score: c.score,
                    in_a_lambda: c.in_a_lambda,
                })
                .collect(),
            events: self.engine.path().to_json().events,
            objective_value: self.engine.value(),
            termination: self.engine.termination(),
            created_at_ms: self.created_at_ms,
            updated_at_ms: self.updated_at_ms,
        }
    }
}

struct Entry {
    session: Mutex<Session>,
    /// Last published state; readers never wait on a mutation.
    view: RwLock<Arc<StateView>>,
}

/// In-memory sessions, with optional snapshots written on finish.
#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
    persist_dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Finished sessions are written to `dir/<id>.json`.
    pub fn with_persistence(dir: impl Into<PathBuf>) -> Self {
        Self {
            sessions: RwLock::default(),
            persist_dir: Some(dir.into()),
        }
    }

    pub fn create(&self, req: &CreateRequest) -> Result<StateView, SessionError> {
        let (obj, partition) = req.load()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(id.clone(), obj, partition, &req.config)?;
        let view = session.view();
        let entry = Arc::new(Entry {
            session: Mutex::new(session),
            view: RwLock::new(Arc::new(view.clone())),
        });
        self.sessions.write().expect("store lock").insert(id, entry);
        Ok(view)
    }

    fn entry(&self, id: &str) -> Result<Arc<Entry>, SessionError> {
        self.sessions
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<StateView, SessionError> {
        let entry = self.entry(id)?;
        let view = entry.view.read().expect("view lock");
        Ok((**view).clone())
    }

    /// Runs `f` with exclusive access; a concurrent caller gets `Busy`.
    fn mutate<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, SessionError>) -> Result<T, SessionError> {
        let entry = self.entry(id)?;
        let mut session = match entry.session.try_lock() {
            Ok(s) => s,
            Err(TryLockError::WouldBlock) => return Err(SessionError::Busy),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        {
            let mut view = entry.view.write().expect("view lock");
            let mut running = (**view).clone();
            running.phase = Phase::Running;
            *view = Arc::new(running);
        }
        let out = f(&mut session);
        *entry.view.write().expect("view lock") = Arc::new(session.view());
        out
    }

    pub fn pick(&self, id: &str, group: usize) -> Result<StateView, SessionError> {
        self.mutate(id, |s| {
            s.pick(group)?;
            Ok(s.view())
        })
    }

    pub fn auto(&self, id: &str, steps: usize) -> Result<StateView, SessionError> {
        self.mutate(id, |s| {
            s.auto(steps)?;
            Ok(s.view())
        })
    }

    pub fn finish(&self, id: &str) -> Result<FinishReport, SessionError> {
        let report = self.mutate(id, |s| Ok(s.finish()))?;
        if let Some(dir) = &self.persist_dir {
            std::fs::create_dir_all(dir).map_err(|e| SessionError::Io(e.to_string()))?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| SessionError::Io(e.to_string()))?;
            std::fs::write(dir.join(format!("{id}.json")), text).map_err(|e| SessionError::Io(e.to_string()))?;
        }
        Ok(report)
    }
}
