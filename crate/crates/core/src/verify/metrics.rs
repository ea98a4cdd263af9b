use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::replay::Replay;
use super::VerifyError;
use crate::model::{Level, TaskId, TaskSet, Time};
use crate::sim::{DropReason, EventKind, Trace};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskResponse {
    pub completed: usize,
    pub max: Time,
    pub mean: f64,
}

/// A task's stay outside the enabled set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuspensionEpisode {
    pub task: TaskId,
    pub from: Time,
    /// Re-enablement instant; `None` if still suspended at the horizon.
    pub to: Option<Time>,
}

impl SuspensionEpisode {
    pub fn delay(&self) -> Option<Time> {
        self.to.map(|t| t - self.from)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceMetrics {
    pub horizon: Time,
    /// Jobs that completed without turning into rem-jobs.
    pub responses: BTreeMap<TaskId, TaskResponse>,
    /// `f - r` of every completed rem-job.
    pub rem_completion: Vec<Time>,
    /// `max(0, f - d)` of every completed rem-job.
    pub rem_tardiness: Vec<Time>,
    pub rem_completed: usize,
    pub rem_dropped: usize,
    pub suspended_arrivals: usize,
    pub suspensions: Vec<SuspensionEpisode>,
    /// Per processor.
    pub idle: Vec<Time>,
    /// Time each completed non-rem job spent available but not running.
    pub interference: Vec<Time>,
    pub misses_by_criticality: BTreeMap<Level, usize>,
    /// Misses of jobs that were not rem-jobs.
    pub misses_enabled: usize,
    pub imcr_count: usize,
    pub reenable_count: usize,
    pub chain_aborts: usize,
    pub chain_stalls: usize,
}

impl TraceMetrics {
    pub fn misses_at_or_above(&self, level: Level) -> usize {
        self.misses_by_criticality.range(level..).map(|(_, n)| n).sum()
    }

    pub fn mean_rem_completion(&self) -> Option<f64> {
        mean(&self.rem_completion)
    }

    pub fn mean_tardiness(&self) -> Option<f64> {
        mean(&self.rem_tardiness)
    }

    pub fn max_tardiness(&self) -> Option<Time> {
        self.rem_tardiness.iter().copied().max()
    }

    pub fn suspension_delays(&self) -> Vec<Time> {
        self.suspensions.iter().filter_map(SuspensionEpisode::delay).collect()
    }

    pub fn mean_suspension_delay(&self) -> Option<f64> {
        mean(&self.suspension_delays())
    }
}

fn mean(xs: &[Time]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<Time>() as f64 / xs.len() as f64)
    }
}

pub fn metrics(trace: &Trace, ts: &TaskSet) -> Result<TraceMetrics, VerifyError> {
    let replay = Replay::build(trace, ts)?;
    let mut out = TraceMetrics {
        horizon: replay.horizon,
        ..TraceMetrics::default()
    };
    let mut sums: BTreeMap<TaskId, Time> = BTreeMap::new();
    for job in replay.jobs.values() {
        let Some(f) = job.finish else { continue };
        let response = f - job.release;
        if job.rem_since.is_some() {
            out.rem_completed += 1;
            out.rem_completion.push(response);
            out.rem_tardiness.push(f.saturating_sub(job.deadline));
            continue;
        }
        let r = out.responses.entry(job.task).or_default();
        r.completed += 1;
        r.max = r.max.max(response);
        *sums.entry(job.task).or_default() += response;
        out.interference.push(response.saturating_sub(job.executed()));
    }
    for (id, r) in out.responses.iter_mut() {
        r.mean = sums[id] as f64 / r.completed as f64;
    }

    let mut open: BTreeMap<TaskId, Time> = BTreeMap::new();
    for e in trace.iter() {
        match &e.kind {
            EventKind::Idle { proc, from } => {
                let p = *proc as usize;
                if out.idle.len() <= p {
                    out.idle.resize(p + 1, 0);
                }
                out.idle[p] += e.time - from;
            }
            EventKind::Dispatch { proc, .. } => {
                let p = *proc as usize;
                if out.idle.len() <= p {
                    out.idle.resize(p + 1, 0);
                }
            }
            EventKind::JobDropped { reason, .. } => match reason {
                DropReason::RemDropped => out.rem_dropped += 1,
                DropReason::Suspended => out.suspended_arrivals += 1,
            },
            EventKind::DeadlineMiss { criticality, rem, .. } => {
                *out.misses_by_criticality.entry(*criticality).or_default() += 1;
                if !rem {
                    out.misses_enabled += 1;
                }
            }
            EventKind::BudgetExceeded { from, .. } => {
                out.imcr_count += 1;
                for t in ts.tasks.iter().filter(|t| t.criticality == *from) {
                    open.insert(t.id, e.time);
                }
            }
            EventKind::ReEnabled { tasks, .. } => {
                out.reenable_count += 1;
                for id in tasks {
                    if let Some(from) = open.remove(id) {
                        out.suspensions.push(SuspensionEpisode {
                            task: *id,
                            from,
                            to: Some(e.time),
                        });
                    }
                }
            }
            EventKind::ChainAborted { .. } => out.chain_aborts += 1,
            EventKind::ChainStalled { .. } => out.chain_stalls += 1,
            _ => {}
        }
    }
    for (task, from) in open {
        out.suspensions.push(SuspensionEpisode { task, from, to: None });
    }
    Ok(out)
}
