//! Platforms, mixed-criticality tasks, jobs and scenarios.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

/// Integer time; one simulator tick is one unit.
pub type Time = u64;

/// Criticality level, 1-based.
pub type Level = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `m` identical processors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Platform {
    pub processors: u32,
}

impl Platform {
    pub fn new(processors: u32) -> Result<Self, ValidationError> {
        if processors == 0 {
            return Err(ValidationError::NoProcessors);
        }
        Ok(Self { processors })
    }
}

/// A sporadic mixed-criticality task.
///
/// `wcet[ℓ - 1]` is the budget at level ℓ. After [`validate_taskset`] the
/// vector has exactly Λ entries and is constant from the task's own
/// criticality upwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McTask {
    pub id: TaskId,
    pub period: Time,
    pub deadline: Time,
    pub criticality: Level,
    pub wcet: Vec<Time>,
}

impl McTask {
    pub fn new(id: u32, period: Time, deadline: Time, criticality: Level, wcet: &[Time]) -> Self {
        Self {
            id: TaskId(id),
            period,
            deadline,
            criticality,
            wcet: wcet.to_vec(),
        }
    }

    /// Budget at `level`, saturating at the task's own criticality.
    ///
    /// Infallible shorthand for validated tasks; `level` 0 is read as 1.
    pub fn budget(&self, level: Level) -> Time {
        let own = self.criticality.max(1) as usize;
        let idx = (level.max(1) as usize).min(own).min(self.wcet.len());
        self.wcet[idx - 1]
    }

    /// Largest budget the task may ever use, `C(L)`.
    pub fn max_budget(&self) -> Time {
        self.budget(self.criticality)
    }

    pub fn belongs_to(&self, level: Level) -> bool {
        level <= self.criticality
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    /// Λ, the highest criticality level of the system.
    pub levels: Level,
    pub tasks: Vec<McTask>,
}

impl TaskSet {
    pub fn new(levels: Level, tasks: Vec<McTask>) -> Self {
        Self { levels, tasks }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: TaskId) -> Option<&McTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn index_of(&self, id: TaskId) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn max_period(&self) -> Time {
        self.tasks.iter().map(|t| t.period).max().unwrap_or(0)
    }

    /// Σ C_i(ℓ)/T_i at `level`.
    pub fn utilization(&self, level: Level) -> f64 {
        self.tasks
            .iter()
            .map(|t| t.budget(level) as f64 / t.period as f64)
            .sum()
    }
}

/// A released job. `exec` is the exact execution time, which the scheduler
/// only learns when the job completes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub task: TaskId,
    /// 1-based release index.
    pub k: u32,
    pub release: Time,
    pub deadline: Time,
    pub exec: Time,
    pub executed: Time,
    pub finish: Option<Time>,
}

impl Job {
    pub fn new(task: &McTask, k: u32, release: Time, exec: Time) -> Self {
        Self {
            task: task.id,
            k,
            release,
            deadline: release + task.deadline,
            exec,
            executed: 0,
            finish: None,
        }
    }

    pub fn remaining(&self) -> Time {
        self.exec - self.executed
    }

    pub fn is_complete(&self) -> bool {
        self.executed >= self.exec
    }
}

/// Arrival times and exact execution times of one task.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskArrivals {
    pub arrivals: Vec<Time>,
    pub exec_times: Vec<Time>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmcrRequest {
    pub time: Time,
    pub target: Level,
}

/// A concrete run: who arrives when, for how long each job executes, and
/// when decreasing mode changes are requested.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub horizon: Time,
    pub tasks: BTreeMap<TaskId, TaskArrivals>,
    pub dmcr_requests: Vec<DmcrRequest>,
}

impl Scenario {
    pub fn empty(horizon: Time) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    pub fn job_count(&self) -> usize {
        self.tasks.values().map(|a| a.arrivals.len()).sum()
    }

    /// Whether every execution time equals some per-level budget of its task.
    pub fn is_basic(&self, ts: &TaskSet) -> bool {
        self.tasks.iter().all(|(id, arr)| match ts.get(*id) {
            Some(task) => arr
                .exec_times
                .iter()
                .all(|&c| (1..=task.criticality).any(|l| task.budget(l) == c)),
            None => false,
        })
    }
}

/// Per task, per job index, the level whose budget the job consumes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BasicLevelAssignment {
    pub levels: BTreeMap<TaskId, Vec<Level>>,
}

impl BasicLevelAssignment {
    /// Execution times `c_{i,k} = C_i(ℓ_k)` induced by the assignment.
    pub fn exec_times(&self, ts: &TaskSet) -> Result<BTreeMap<TaskId, Vec<Time>>, ValidationError> {
        let mut out = BTreeMap::new();
        for (id, levels) in &self.levels {
            let task = ts.get(*id).ok_or(ValidationError::UnknownTask(*id))?;
            let mut times = Vec::with_capacity(levels.len());
            for &l in levels {
                if l == 0 || l > task.criticality {
                    return Err(ValidationError::LevelOutOfRange {
                        level: l,
                        max: task.criticality,
                    });
                }
                times.push(task.budget(l));
            }
            out.insert(*id, times);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("platform needs at least one processor")]
    NoProcessors,
    #[error("task set needs at least one criticality level")]
    NoLevels,
    #[error("duplicate task id {0}")]
    DuplicateId(TaskId),
    #[error("task {0}: period must be at least 1")]
    ZeroPeriod(TaskId),
    #[error("task {0}: deadline must be at least 1")]
    ZeroDeadline(TaskId),
    #[error("task {task}: deadline {deadline} exceeds period {period}")]
    DeadlineExceedsPeriod {
        task: TaskId,
        deadline: Time,
        period: Time,
    },
    #[error("task {task}: criticality {criticality} outside [1, {levels}]")]
    CriticalityAboveLambda {
        task: TaskId,
        criticality: Level,
        levels: Level,
    },
    #[error("task {task}: expected {own} or {levels} WCET entries, got {got}")]
    WcetLength {
        task: TaskId,
        own: Level,
        levels: Level,
        got: usize,
    },
    #[error("task {task}: WCET at level {level} must be at least 1")]
    ZeroWcet { task: TaskId, level: Level },
    #[error("task {task}: WCET decreases or varies above its criticality at level {level}")]
    NonMonotoneWcet { task: TaskId, level: Level },
    #[error("task {task}: WCET {wcet} at its own criticality exceeds deadline {deadline}")]
    WcetExceedsDeadline {
        task: TaskId,
        wcet: Time,
        deadline: Time,
    },
    #[error("level {level} outside [1, {max}]")]
    LevelOutOfRange { level: Level, max: Level },
    #[error("scenario references unknown task {0}")]
    UnknownTask(TaskId),
    #[error("task {task}: {arrivals} arrivals but {exec_times} execution times")]
    ArrivalLengthMismatch {
        task: TaskId,
        arrivals: usize,
        exec_times: usize,
    },
    #[error("task {task}: arrivals {prev} and {next} closer than the period")]
    MinInterArrivalViolated { task: TaskId, prev: Time, next: Time },
    #[error("task {task}: execution time {exec} of job {k} outside [1, C(L)]")]
    ExecTimeOutOfRange { task: TaskId, k: u32, exec: Time },
    #[error("decreasing mode change target {target} must lie in [1, {levels})")]
    InvalidDmcrTarget { target: Level, levels: Level },
}

/// A deterministic, non-empty list of validation failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationErrors {}

impl ValidationErrors {
    pub fn contains(&self, pred: impl Fn(&ValidationError) -> bool) -> bool {
        self.0.iter().any(pred)
    }
}

/// Checks every task invariant and normalizes WCET vectors to length Λ.
///
/// WCET vectors may be given with `L_i` entries (padded with `C(L_i)`) or
/// with Λ entries (then required to be constant above `L_i`). Errors are
/// reported in task order.
pub fn validate_taskset(mut ts: TaskSet, platform: &Platform) -> Result<TaskSet, ValidationErrors> {
    let mut errors = Vec::new();
    if platform.processors == 0 {
        errors.push(ValidationError::NoProcessors);
    }
    if ts.levels == 0 {
        errors.push(ValidationError::NoLevels);
    }
    let mut seen = BTreeSet::new();
    for task in &mut ts.tasks {
        if !seen.insert(task.id) {
            errors.push(ValidationError::DuplicateId(task.id));
        }
        validate_task(task, ts.levels, &mut errors);
    }
    if errors.is_empty() {
        Ok(ts)
    } else {
        Err(ValidationErrors(errors))
    }
}

fn validate_task(task: &mut McTask, levels: Level, errors: &mut Vec<ValidationError>) {
    let id = task.id;
    if task.period == 0 {
        errors.push(ValidationError::ZeroPeriod(id));
    }
    if task.deadline == 0 {
        errors.push(ValidationError::ZeroDeadline(id));
    }
    if task.deadline > task.period {
        errors.push(ValidationError::DeadlineExceedsPeriod {
            task: id,
            deadline: task.deadline,
            period: task.period,
        });
    }
    if task.criticality == 0 || task.criticality > levels {
        errors.push(ValidationError::CriticalityAboveLambda {
            task: id,
            criticality: task.criticality,
            levels,
        });
        return;
    }
    let own = task.criticality as usize;
    let got = task.wcet.len();
    if got != own && got != levels as usize {
        errors.push(ValidationError::WcetLength {
            task: id,
            own: task.criticality,
            levels,
            got,
        });
        return;
    }
    let before = errors.len();
    for (i, &c) in task.wcet.iter().enumerate() {
        if c == 0 {
            errors.push(ValidationError::ZeroWcet {
                task: id,
                level: i as Level + 1,
            });
        }
    }
    for i in 1..got {
        let ok = if i < own {
            task.wcet[i - 1] <= task.wcet[i]
        } else {
            task.wcet[i] == task.wcet[own - 1]
        };
        if !ok {
            errors.push(ValidationError::NonMonotoneWcet {
                task: id,
                level: i as Level + 1,
            });
        }
    }
    let top = task.wcet[own - 1];
    if task.deadline > 0 && top > task.deadline {
        errors.push(ValidationError::WcetExceedsDeadline {
            task: id,
            wcet: top,
            deadline: task.deadline,
        });
    }
    if errors.len() == before {
        task.wcet.resize(levels as usize, top);
    }
}

/// `C_i(ℓ)` with the padding rule `C_i(ℓ) = C_i(L_i)` for ℓ ≥ L_i.
pub fn effective_wcet(task: &McTask, level: Level, levels: Level) -> Result<Time, ValidationError> {
    check_level(level, levels)?;
    Ok(task.budget(level))
}

/// Whether the task belongs to operating mode `M_ℓ`, i.e. ℓ ≤ L_i.
pub fn mode_membership(task: &McTask, level: Level, levels: Level) -> Result<bool, ValidationError> {
    check_level(level, levels)?;
    Ok(task.belongs_to(level))
}

fn check_level(level: Level, levels: Level) -> Result<(), ValidationError> {
    if level == 0 || level > levels {
        Err(ValidationError::LevelOutOfRange { level, max: levels })
    } else {
        Ok(())
    }
}

/// Checks a scenario against a validated task set.
pub fn validate_scenario(sc: &Scenario, ts: &TaskSet) -> Result<(), ValidationErrors> {
    let mut errors = Vec::new();
    for (id, arr) in &sc.tasks {
        let Some(task) = ts.get(*id) else {
            errors.push(ValidationError::UnknownTask(*id));
            continue;
        };
        if arr.arrivals.len() != arr.exec_times.len() {
            errors.push(ValidationError::ArrivalLengthMismatch {
                task: *id,
                arrivals: arr.arrivals.len(),
                exec_times: arr.exec_times.len(),
            });
        }
        for w in arr.arrivals.windows(2) {
            if w[1] < w[0] + task.period {
                errors.push(ValidationError::MinInterArrivalViolated {
                    task: *id,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        for (k, &c) in arr.exec_times.iter().enumerate() {
            if c == 0 || c > task.max_budget() {
                errors.push(ValidationError::ExecTimeOutOfRange {
                    task: *id,
                    k: k as u32 + 1,
                    exec: c,
                });
            }
        }
    }
    for req in &sc.dmcr_requests {
        if req.target == 0 || req.target >= ts.levels {
            errors.push(ValidationError::InvalidDmcrTarget {
                target: req.target,
                levels: ts.levels,
            });
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ValidationErrors(errors))
    }
}
