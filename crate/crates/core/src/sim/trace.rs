use alloc::vec::Vec;

use crate::model::{Level, TaskId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GhostKind {
    WcetReclaim,
    WcrtSimulate,
}

/// Where a dispatched job runs on behalf of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    /// Its own priority (enabled tasks).
    Own,
    /// A rem-job lent the slot of the ghost of job `(task, k)`.
    Ghost { task: TaskId, k: u32 },
    /// A rem-job on a processor no prioritized entity wants.
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// Arrival of a suspended task.
    Suspended,
    /// Available job of a task suspended by an increasing mode change,
    /// discarded by the dropping protocol.
    RemDropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostEnd {
    Exhausted,
    Expired,
    /// The rem-job pool emptied or no rem-job was left for the slot.
    NoRemJobs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Release {
        task: TaskId,
        k: u32,
        deadline: Time,
    },
    Dispatch {
        task: TaskId,
        k: u32,
        proc: u32,
        slot: Slot,
    },
    Preempt {
        task: TaskId,
        k: u32,
        proc: u32,
    },
    Complete {
        task: TaskId,
        k: u32,
        release: Time,
        deadline: Time,
        exec: Time,
        rem: bool,
        /// Processor the job ran on at its last tick.
        proc: Option<u32>,
    },
    /// Job `(task, k)` used up its level-`from` budget; the system moves to
    /// level `to = from + 1`.
    BudgetExceeded {
        task: TaskId,
        k: u32,
        from: Level,
        to: Level,
    },
    JobDropped {
        task: TaskId,
        k: u32,
        reason: DropReason,
    },
    GhostCreated {
        task: TaskId,
        k: u32,
        kind: GhostKind,
        /// Execution budget (WCET reclaiming) or 0.
        budget: Time,
        /// Expiry instant (WCRT simulation) or 0.
        until: Time,
        /// Level whose WCET/WCRT the ghost was derived from.
        level: Level,
    },
    GhostRemoved {
        task: TaskId,
        k: u32,
        reason: GhostEnd,
    },
    DmcrRequested {
        target: Level,
        deferred: bool,
    },
    DmcrRejected {
        target: Level,
    },
    ChainStarted {
        target: Level,
        chain: Vec<TaskId>,
    },
    ChainAdvance {
        task: TaskId,
        k: u32,
        cursor: u32,
    },
    ChainAborted {
        target: Level,
        cursor: u32,
    },
    ChainStalled {
        target: Level,
        cursor: u32,
    },
    ReEnabled {
        target: Level,
        tasks: Vec<TaskId>,
    },
    DeadlineMiss {
        task: TaskId,
        k: u32,
        criticality: Level,
        rem: bool,
    },
    /// Processor `proc` was idle over `[from, t)`.
    Idle {
        proc: u32,
        from: Time,
    },
    /// Last event of every trace, at the horizon.
    End,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Release { .. } => "Release",
            EventKind::Dispatch { .. } => "Dispatch",
            EventKind::Preempt { .. } => "Preempt",
            EventKind::Complete { .. } => "Complete",
            EventKind::BudgetExceeded { .. } => "BudgetExceeded",
            EventKind::JobDropped { .. } => "JobDropped",
            EventKind::GhostCreated { .. } => "GhostCreated",
            EventKind::GhostRemoved { .. } => "GhostRemoved",
            EventKind::DmcrRequested { .. } => "DmcrRequested",
            EventKind::DmcrRejected { .. } => "DmcrRejected",
            EventKind::ChainStarted { .. } => "ChainStarted",
            EventKind::ChainAdvance { .. } => "ChainAdvance",
            EventKind::ChainAborted { .. } => "ChainAborted",
            EventKind::ChainStalled { .. } => "ChainStalled",
            EventKind::ReEnabled { .. } => "ReEnabled",
            EventKind::DeadlineMiss { .. } => "DeadlineMiss",
            EventKind::Idle { .. } => "Idle",
            EventKind::End => "End",
        }
    }
}

/// One timestamped record; `mode` is the criticality level in force when
/// the event was emitted (after the event, for mode changes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Time,
    pub mode: Level,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Time, mode: Level, kind: EventKind) {
        self.events.push(TraceEvent { time, mode, kind });
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, TraceEvent> {
        self.events.iter()
    }

    /// Time of the closing `End` event, if any.
    pub fn horizon(&self) -> Option<Time> {
        match self.events.last() {
            Some(TraceEvent {
                time,
                kind: EventKind::End,
                ..
            }) => Some(*time),
            _ => None,
        }
    }

    pub fn count(&self, pred: impl Fn(&EventKind) -> bool) -> usize {
        self.events.iter().filter(|e| pred(&e.kind)).count()
    }
}
