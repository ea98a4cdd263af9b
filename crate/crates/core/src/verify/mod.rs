//! Trace checkers for the validity properties of the mode-change
//! protocols, brute-force oracles for the analysis bounds, and metrics.
//!
//! Every checker is a pure function of an immutable trace. Violations are
//! findings in a [`Report`], not errors; errors are reserved for traces that
//! cannot be interpreted at all.

mod checks;
mod intervals;
mod metrics;
mod oracle;
mod replay;

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::model::{Level, TaskId, Time};

pub use checks::{
    check_all, check_dispatch, check_feasibility, check_ghosts, check_periodicity,
    check_response_bounds,
};
pub use intervals::{compute_l_intervals, LInterval, LIntervalSet};
pub use metrics::{metrics, SuspensionEpisode, TaskResponse, TraceMetrics};
pub use oracle::{
    brute_force_workload, enumerate_basic_scenarios, BasicScenarios, MAX_ENUMERATED_JOBS,
    MAX_ORACLE_DELTA, MAX_ORACLE_PERIOD,
};
pub use replay::{GhostRecord, JobRecord, Replay, Span};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("malformed trace at t={time}: {what}")]
    MalformedTrace { time: Time, what: &'static str },
    #[error("parameters too large for exhaustive search: {0}")]
    ParameterTooLarge(&'static str),
}

impl VerifyError {
    pub(crate) fn malformed(time: Time, what: &'static str) -> Self {
        VerifyError::MalformedTrace { time, what }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FindingKind {
    /// Completed after its deadline while required to meet it.
    Late { deadline: Time, finish: Time, level: Level },
    /// Reached its deadline unfinished while required to meet it.
    MissedDeadline { deadline: Time, level: Level },
    /// Received less than its execution time inside `[r, d]`.
    ShortExecution { received: Time, exec: Time },
    MissingRelease { expected: Time },
    ReleaseAtWrongTime { expected: Time, actual: Time },
    SpuriousRelease,
    ResponseBound { response: Time, bound: Time, level: Level },
    /// Job plus its reclaiming ghost consumed more than `C_i(ℓ')`.
    ReclaimOverrun { used: Time, exec: Time, ceiling: Time },
    /// A ghost lent its slot past its expiry or budget.
    GhostOverstay { limit: Time },
    Overcommitted { busy: usize, processors: u32 },
    /// A dispatchable entity waited while a strictly lower-priority one ran
    /// or a processor idled.
    PriorityInversion { waiting_rank: u32, running_rank: Option<u32> },
    /// A job ran at its own priority while its task was not enabled.
    SuspendedJobRan,
    /// A rem-job ran in the background although `m` enabled jobs were
    /// available.
    BackgroundWhileBusy { available: usize },
    /// A rem-job ran although rem-jobs are dropped.
    DroppedJobRan,
    /// A rem-job waited while a processor idled.
    RemJobStarved,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FindingKind::Late { deadline, finish, level } => {
                write!(f, "finished at {finish} after deadline {deadline} in a level-{level} interval")
            }
            FindingKind::MissedDeadline { deadline, level } => {
                write!(f, "missed deadline {deadline} in a level-{level} interval")
            }
            FindingKind::ShortExecution { received, exec } => {
                write!(f, "received {received} of {exec} units inside its window")
            }
            FindingKind::MissingRelease { expected } => write!(f, "no release for arrival at {expected}"),
            FindingKind::ReleaseAtWrongTime { expected, actual } => {
                write!(f, "released at {actual}, arrival was {expected}")
            }
            FindingKind::SpuriousRelease => write!(f, "release without a matching arrival"),
            FindingKind::ResponseBound { response, bound, level } => {
                write!(f, "response {response} exceeds R({level}) = {bound}")
            }
            FindingKind::ReclaimOverrun { used, exec, ceiling } => {
                write!(f, "job {exec} + ghost {used} exceeds budget {ceiling}")
            }
            FindingKind::GhostOverstay { limit } => write!(f, "ghost lent its slot past {limit}"),
            FindingKind::Overcommitted { busy, processors } => {
                write!(f, "{busy} entities dispatched on {processors} processors")
            }
            FindingKind::PriorityInversion { waiting_rank, running_rank } => match running_rank {
                Some(r) => write!(f, "rank {waiting_rank} waits while rank {r} runs"),
                None => write!(f, "rank {waiting_rank} waits while a processor is idle or runs a rem-job"),
            },
            FindingKind::SuspendedJobRan => write!(f, "job of a suspended task ran at its own priority"),
            FindingKind::BackgroundWhileBusy { available } => {
                write!(f, "rem-job ran in the background with {available} enabled jobs available")
            }
            FindingKind::DroppedJobRan => write!(f, "rem-job ran under the dropping protocol"),
            FindingKind::RemJobStarved => write!(f, "rem-job waited while a processor idled"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub time: Time,
    pub task: Option<TaskId>,
    pub k: Option<u32>,
    pub kind: FindingKind,
}

impl Finding {
    pub(crate) fn job(time: Time, task: TaskId, k: u32, kind: FindingKind) -> Self {
        Self {
            time,
            task: Some(task),
            k: Some(k),
            kind,
        }
    }

    pub(crate) fn at(time: Time, kind: FindingKind) -> Self {
        Self {
            time,
            task: None,
            k: None,
            kind,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}", self.time)?;
        if let (Some(task), Some(k)) = (self.task, self.k) {
            write!(f, " job {task}.{k}")?;
        }
        write!(f, ": {}", self.kind)
    }
}

/// Outcome of one checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub check: &'static str,
    /// Items the property was evaluated on.
    pub checked: usize,
    /// Items outside the property's scope (e.g. jobs spanning a mode
    /// change for response bounds).
    pub excluded: usize,
    pub findings: Vec<Finding>,
}

impl Report {
    pub(crate) fn new(check: &'static str) -> Self {
        Self {
            check,
            checked: 0,
            excluded: 0,
            findings: Vec::new(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}
