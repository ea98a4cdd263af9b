use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::VerifyError;
use crate::model::{Level, TaskId, TaskSet, Time};
use crate::sim::{DropReason, EventKind, GhostKind, Slot, Trace};

/// Contiguous stretch of a job on one processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub proc: u32,
    pub start: Time,
    pub end: Time,
    pub slot: Slot,
}

impl Span {
    pub fn len(&self) -> Time {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn overlap(&self, from: Time, to: Time) -> Time {
        self.end.min(to).saturating_sub(self.start.max(from))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobRecord {
    pub task: TaskId,
    pub k: u32,
    pub release: Time,
    pub deadline: Time,
    pub finish: Option<Time>,
    pub exec: Option<Time>,
    /// When the job turned into a rem-job.
    pub rem_since: Option<Time>,
    pub dropped: Option<Time>,
    pub missed: Option<Time>,
    pub spans: Vec<Span>,
}

impl JobRecord {
    pub fn executed(&self) -> Time {
        self.spans.iter().map(Span::len).sum()
    }

    pub fn executed_within(&self, from: Time, to: Time) -> Time {
        self.spans.iter().map(|s| s.overlap(from, to)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GhostRecord {
    pub task: TaskId,
    pub k: u32,
    pub kind: GhostKind,
    pub created: Time,
    pub removed: Option<Time>,
    pub budget: Time,
    pub until: Time,
    pub level: Level,
    /// Slot time lent to rem-jobs.
    pub lent: Time,
    /// Latest instant the slot was in use.
    pub last_used: Option<Time>,
}

/// Per-job and per-ghost history reconstructed from a trace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Replay {
    pub horizon: Time,
    pub jobs: BTreeMap<(TaskId, u32), JobRecord>,
    pub ghosts: BTreeMap<(TaskId, u32), GhostRecord>,
}

impl Replay {
    pub fn build(trace: &Trace, ts: &TaskSet) -> Result<Self, VerifyError> {
        let horizon = trace
            .horizon()
            .ok_or(VerifyError::malformed(0, "trace does not end with End"))?;
        let mut out = Replay {
            horizon,
            ..Self::default()
        };
        let mut open: Vec<Option<(TaskId, u32, Slot, Time)>> = Vec::new();
        let mut last = 0;
        for e in trace.iter() {
            let t = e.time;
            if t < last {
                return Err(VerifyError::malformed(t, "event times decrease"));
            }
            last = t;
            match &e.kind {
                EventKind::Release { task, k, deadline } => {
                    let rec = JobRecord {
                        task: *task,
                        k: *k,
                        release: t,
                        deadline: *deadline,
                        finish: None,
                        exec: None,
                        rem_since: None,
                        dropped: None,
                        missed: None,
                        spans: Vec::new(),
                    };
                    if out.jobs.insert((*task, *k), rec).is_some() {
                        return Err(VerifyError::malformed(t, "job released twice"));
                    }
                }
                EventKind::Dispatch { task, k, proc, slot } => {
                    if !out.jobs.contains_key(&(*task, *k)) {
                        return Err(VerifyError::malformed(t, "dispatch of unknown job"));
                    }
                    let p = *proc as usize;
                    if open.len() <= p {
                        open.resize(p + 1, None);
                    }
                    if open[p].is_some() {
                        return Err(VerifyError::malformed(t, "dispatch on a busy processor"));
                    }
                    if open.iter().flatten().any(|o| o.0 == *task && o.1 == *k) {
                        return Err(VerifyError::malformed(t, "job on two processors"));
                    }
                    open[p] = Some((*task, *k, *slot, t));
                }
                EventKind::Preempt { task, k, proc } => {
                    out.close(&mut open, *task, *k, *proc, t)?;
                }
                EventKind::Complete {
                    task,
                    k,
                    exec,
                    proc,
                    ..
                } => {
                    if let Some(p) = proc {
                        out.close(&mut open, *task, *k, *p, t)?;
                    }
                    let rec = out
                        .jobs
                        .get_mut(&(*task, *k))
                        .ok_or(VerifyError::malformed(t, "completion of unknown job"))?;
                    rec.finish = Some(t);
                    rec.exec = Some(*exec);
                }
                EventKind::JobDropped {
                    task,
                    k,
                    reason: DropReason::RemDropped,
                } => {
                    let rec = out
                        .jobs
                        .get_mut(&(*task, *k))
                        .ok_or(VerifyError::malformed(t, "drop of unknown job"))?;
                    rec.dropped = Some(t);
                }
                EventKind::BudgetExceeded { to, .. } => {
                    for rec in out.jobs.values_mut() {
                        let alive = rec.finish.is_none() && rec.dropped.is_none();
                        let crit = ts.get(rec.task).map_or(0, |x| x.criticality);
                        if alive && rec.rem_since.is_none() && crit < *to {
                            rec.rem_since = Some(t);
                        }
                    }
                }
                EventKind::DeadlineMiss { task, k, .. } => {
                    if let Some(rec) = out.jobs.get_mut(&(*task, *k)) {
                        rec.missed.get_or_insert(t);
                    }
                }
                EventKind::GhostCreated {
                    task,
                    k,
                    kind,
                    budget,
                    until,
                    level,
                } => {
                    out.ghosts.insert(
                        (*task, *k),
                        GhostRecord {
                            task: *task,
                            k: *k,
                            kind: *kind,
                            created: t,
                            removed: None,
                            budget: *budget,
                            until: *until,
                            level: *level,
                            lent: 0,
                            last_used: None,
                        },
                    );
                }
                EventKind::GhostRemoved { task, k, .. } => {
                    if let Some(g) = out.ghosts.get_mut(&(*task, *k)) {
                        g.removed = Some(t);
                    }
                }
                EventKind::End => {
                    for p in 0..open.len() {
                        if let Some((task, k, _, _)) = open[p] {
                            out.close(&mut open, task, k, p as u32, t)?;
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }

    fn close(
        &mut self,
        open: &mut [Option<(TaskId, u32, Slot, Time)>],
        task: TaskId,
        k: u32,
        proc: u32,
        t: Time,
    ) -> Result<(), VerifyError> {
        let p = proc as usize;
        let Some(Some((ot, ok, slot, start))) = open.get(p).copied() else {
            return Err(VerifyError::malformed(t, "processor was not running a job"));
        };
        if ot != task || ok != k {
            return Err(VerifyError::malformed(t, "processor ran a different job"));
        }
        open[p] = None;
        let span = Span {
            proc,
            start,
            end: t,
            slot,
        };
        if let Slot::Ghost { task, k } = slot {
            if let Some(g) = self.ghosts.get_mut(&(task, k)) {
                g.lent += span.len();
                if !span.is_empty() {
                    g.last_used = Some(g.last_used.map_or(t, |u| u.max(t)));
                }
            }
        }
        if let Some(rec) = self.jobs.get_mut(&(task, k)) {
            rec.spans.push(span);
        }
        Ok(())
    }
}
