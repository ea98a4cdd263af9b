//! Integer-time simulation of the global preemptive work-conserving
//! static-priority scheduler with execution monitoring and task suspension.
//!
//! At every instant the `m` highest-priority dispatchable entities run. An
//! entity is an available job of an enabled task, a ghost standing in for a
//! completed job, or a rem-job (an available job of a task suspended by an
//! increasing mode change). Within one instant the engine handles, in order:
//! completions, deadline misses, budget overruns, decreasing mode change
//! requests, re-enablement chain progress, releases and finally the
//! dispatch decision.

mod engine;
mod trace;

use alloc::vec::Vec;

use thiserror::Error;

use crate::analysis::{PriorityAssignment, WcrtTable};
use crate::model::{Level, Platform, Scenario, TaskId, TaskSet, Time, ValidationErrors};

pub use engine::Simulator;
pub use trace::{DropReason, EventKind, GhostEnd, GhostKind, Slot, Trace, TraceEvent};

/// What happens to the rem-jobs of tasks suspended by an increasing mode
/// change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImcrProtocol {
    /// Discard them at the mode change.
    Drop,
    /// Run them below every enabled task.
    Naive,
    /// As `Naive`, plus lend them the unused budget `C_i(ℓ) - c_{i,k}` of
    /// early-completing jobs at those jobs' priority.
    WcetReclaim,
    /// As `Naive`, plus lend them the slot of early-completing jobs until
    /// `r_{i,k} + R_i(ℓ)`.
    WcrtSimulate,
}

impl ImcrProtocol {
    pub const ALL: [ImcrProtocol; 4] = [
        ImcrProtocol::Drop,
        ImcrProtocol::Naive,
        ImcrProtocol::WcetReclaim,
        ImcrProtocol::WcrtSimulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImcrProtocol::Drop => "drop",
            ImcrProtocol::Naive => "naive",
            ImcrProtocol::WcetReclaim => "wcet-reclaim",
            ImcrProtocol::WcrtSimulate => "wcrt-simulate",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    fn ghost_kind(self) -> Option<GhostKind> {
        match self {
            ImcrProtocol::WcetReclaim => Some(GhostKind::WcetReclaim),
            ImcrProtocol::WcrtSimulate => Some(GhostKind::WcrtSimulate),
            _ => None,
        }
    }
}

/// Order in which rem-jobs receive processor time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RemOrder {
    /// Higher criticality first, then earlier deadline, then task id.
    #[default]
    CritThenEdf,
    /// Earlier deadline, then task id.
    Edf,
    /// Least remaining WCET `C_i(L_i) - executed`, then earlier deadline.
    Srpt,
}

impl RemOrder {
    pub const ALL: [RemOrder; 3] = [RemOrder::CritThenEdf, RemOrder::Edf, RemOrder::Srpt];

    pub fn name(self) -> &'static str {
        match self {
            RemOrder::CritThenEdf => "crit-edf",
            RemOrder::Edf => "edf",
            RemOrder::Srpt => "srpt",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProtocolConfig {
    pub imcr_protocol: ImcrProtocol,
    pub rem_order: RemOrder,
    /// Mirrors the analysis cap; recorded for reproducibility.
    pub cap_enabled: bool,
}

impl ProtocolConfig {
    pub fn new(imcr_protocol: ImcrProtocol) -> Self {
        Self {
            imcr_protocol,
            ..Self::default()
        }
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            imcr_protocol: ImcrProtocol::WcrtSimulate,
            rem_order: RemOrder::default(),
            cap_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Steady,
    ImcrTransition,
    DmcrChain,
}

/// Simulated availability lent to rem-jobs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GhostJob {
    pub origin: (TaskId, u32),
    pub rank: u32,
    pub kind: GhostKind,
    /// Remaining lendable time (WCET reclaiming).
    pub budget: Time,
    /// Expiry instant (WCRT simulation).
    pub until: Time,
}

/// Snapshot of the mode-change state machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeState {
    pub level: Level,
    pub enabled: Vec<TaskId>,
    pub rem_jobs: Vec<(TaskId, u32)>,
    pub ghosts: Vec<GhostJob>,
    pub phase: Phase,
    pub chain_cursor: Option<usize>,
    pub pending_dmcr: Option<Level>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(InputProblem),
    #[error("invalid scenario: {0}")]
    InvalidScenario(ValidationErrors),
    #[error("job {k} of task {task} reached C(L) = {budget} without completing")]
    ModelViolation { task: TaskId, k: u32, budget: Time },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputProblem {
    #[error("priority assignment does not rank every task exactly once")]
    PriorityCoverage,
    #[error("no response time for task {task} at level {level}")]
    MissingWcrt { task: TaskId, level: Level },
}

/// Runs one scenario to its horizon and returns the event trace.
pub fn simulate(
    ts: &TaskSet,
    platform: &Platform,
    priorities: &PriorityAssignment,
    wcrt: &WcrtTable,
    scenario: &Scenario,
    cfg: &ProtocolConfig,
) -> Result<Trace, SimError> {
    let mut sim = Simulator::new(ts, platform, priorities, wcrt, scenario, *cfg)?;
    sim.run()?;
    Ok(sim.into_trace())
}
