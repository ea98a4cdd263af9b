use alloc::vec;
use alloc::vec::Vec;

use super::{
    DropReason, EventKind, GhostEnd, GhostJob, GhostKind, ImcrProtocol, InputProblem, ModeState,
    Phase, ProtocolConfig, RemOrder, SimError, Slot, Trace,
};
use crate::analysis::{PriorityAssignment, WcrtTable};
use crate::model::{validate_scenario, Level, Platform, Scenario, TaskId, TaskSet, Time};

#[derive(Debug, Clone)]
struct LiveJob {
    task: usize,
    k: u32,
    release: Time,
    deadline: Time,
    exec: Time,
    executed: Time,
    rem: bool,
    missed: bool,
}

#[derive(Debug, Clone)]
struct Ghost {
    task: usize,
    k: u32,
    release: Time,
    kind: GhostKind,
    budget: Time,
    until: Time,
}

#[derive(Debug, Clone)]
struct Chain {
    target: Level,
    order: Vec<usize>,
    cursor: usize,
}

/// A job on a processor, and on whose behalf it runs there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Occupant {
    task: usize,
    k: u32,
    slot: Slot,
}

#[derive(Debug, Clone, Copy)]
struct Completion {
    task: usize,
    k: u32,
    release: Time,
    exec: Time,
}

/// Stepwise simulator; [`super::simulate`] drives it to the horizon.
pub struct Simulator<'a> {
    ts: &'a TaskSet,
    wcrt: &'a WcrtTable,
    cfg: ProtocolConfig,
    m: usize,
    horizon: Time,
    rank: Vec<u32>,
    arrivals: Vec<(&'a [Time], &'a [Time])>,
    next_arrival: Vec<usize>,
    dmcr: Vec<(Time, Level)>,
    next_dmcr: usize,

    level: Level,
    jobs: Vec<LiveJob>,
    ghosts: Vec<Ghost>,
    chain: Option<Chain>,
    pending: Option<Level>,

    procs: Vec<Option<Occupant>>,
    idle_since: Vec<Option<Time>>,
    now: Time,
    trace: Trace,
}

const NO_ARRIVALS: (&[Time], &[Time]) = (&[], &[]);

impl<'a> Simulator<'a> {
    pub fn new(
        ts: &'a TaskSet,
        platform: &Platform,
        priorities: &PriorityAssignment,
        wcrt: &'a WcrtTable,
        scenario: &'a Scenario,
        cfg: ProtocolConfig,
    ) -> Result<Self, SimError> {
        if !priorities.covers(ts) {
            return Err(SimError::InconsistentInputs(InputProblem::PriorityCoverage));
        }
        for t in &ts.tasks {
            for l in 1..=t.criticality {
                if wcrt.get(t.id, l).is_none() {
                    return Err(SimError::InconsistentInputs(InputProblem::MissingWcrt {
                        task: t.id,
                        level: l,
                    }));
                }
            }
        }
        validate_scenario(scenario, ts).map_err(SimError::InvalidScenario)?;

        let rank = ts
            .tasks
            .iter()
            .map(|t| priorities.rank(t.id).unwrap_or(u32::MAX))
            .collect();
        let arrivals = ts
            .tasks
            .iter()
            .map(|t| match scenario.tasks.get(&t.id) {
                Some(a) => (a.arrivals.as_slice(), a.exec_times.as_slice()),
                None => NO_ARRIVALS,
            })
            .collect();
        let mut dmcr: Vec<(Time, Level)> = scenario
            .dmcr_requests
            .iter()
            .map(|r| (r.time, r.target))
            .collect();
        dmcr.sort_by_key(|r| r.0);
        let m = platform.processors.max(1) as usize;

        Ok(Self {
            ts,
            wcrt,
            cfg,
            m,
            horizon: scenario.horizon,
            rank,
            arrivals,
            next_arrival: vec![0; ts.len()],
            dmcr,
            next_dmcr: 0,
            level: 1,
            jobs: Vec::new(),
            ghosts: Vec::new(),
            chain: None,
            pending: None,
            procs: vec![None; m],
            idle_since: vec![Some(0); m],
            now: 0,
            trace: Trace::new(),
        })
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        loop {
            let t = self.now;
            self.instant(t)?;
            if t >= self.horizon {
                break;
            }
            self.dispatch(t);
            let dt = self.next_step(t);
            self.advance(dt);
            self.now = t + dt;
        }
        self.finish();
        Ok(())
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn mode_state(&self) -> ModeState {
        ModeState {
            level: self.level,
            enabled: self
                .ts
                .tasks
                .iter()
                .filter(|t| t.criticality >= self.level)
                .map(|t| t.id)
                .collect(),
            rem_jobs: self
                .jobs
                .iter()
                .filter(|j| j.rem)
                .map(|j| (self.ts.tasks[j.task].id, j.k))
                .collect(),
            ghosts: self
                .ghosts
                .iter()
                .map(|g| GhostJob {
                    origin: (self.ts.tasks[g.task].id, g.k),
                    rank: self.rank[g.task],
                    kind: g.kind,
                    budget: g.budget,
                    until: g.until,
                })
                .collect(),
            phase: self.phase(),
            chain_cursor: self.chain.as_ref().map(|c| c.cursor),
            pending_dmcr: self.pending,
        }
    }

    fn phase(&self) -> Phase {
        if self.has_rem_jobs() {
            Phase::ImcrTransition
        } else if self.chain.is_some() {
            Phase::DmcrChain
        } else {
            Phase::Steady
        }
    }

    fn has_rem_jobs(&self) -> bool {
        self.jobs.iter().any(|j| j.rem)
    }

    fn id(&self, task: usize) -> TaskId {
        self.ts.tasks[task].id
    }

    fn emit(&mut self, t: Time, kind: EventKind) {
        self.trace.push(t, self.level, kind);
    }

    fn enabled(&self, task: usize) -> bool {
        self.ts.tasks[task].criticality >= self.level
    }

    fn instant(&mut self, t: Time) -> Result<(), SimError> {
        let completions = self.complete_jobs(t);
        self.expire_ghosts(t);
        self.detect_deadline_misses(t);
        let mut first = true;
        loop {
            self.detect_overruns(t)?;
            if t < self.horizon {
                self.intake_dmcr(t, first);
            }
            first = false;
            if !self.advance_chain(t, &completions) {
                break;
            }
        }
        if t < self.horizon {
            self.release_jobs(t);
        }
        Ok(())
    }

    fn free_proc_of(&mut self, task: usize, k: u32) -> Option<u32> {
        let p = self
            .procs
            .iter()
            .position(|o| matches!(o, Some(o) if o.task == task && o.k == k))?;
        self.procs[p] = None;
        Some(p as u32)
    }

    fn complete_jobs(&mut self, t: Time) -> Vec<Completion> {
        let mut done: Vec<usize> = (0..self.jobs.len())
            .filter(|&i| self.jobs[i].executed >= self.jobs[i].exec)
            .collect();
        // rem-jobs first: an emptied pool means no ghosts for this instant
        done.sort_by_key(|&i| {
            let j = &self.jobs[i];
            (!j.rem, self.rank[j.task], j.release, j.k)
        });
        let mut completions = Vec::new();
        for &i in &done {
            let j = self.jobs[i].clone();
            let proc = self.free_proc_of(j.task, j.k);
            let kind = EventKind::Complete {
                task: self.id(j.task),
                k: j.k,
                release: j.release,
                deadline: j.deadline,
                exec: j.exec,
                rem: j.rem,
                proc,
            };
            self.emit(t, kind);
            if !j.rem {
                completions.push(Completion {
                    task: j.task,
                    k: j.k,
                    release: j.release,
                    exec: j.exec,
                });
            }
        }
        let mut idx = 0;
        self.jobs.retain(|_| {
            let keep = !done.contains(&idx);
            idx += 1;
            keep
        });
        if self.has_rem_jobs() {
            for c in &completions {
                self.spawn_ghost(t, c);
            }
        } else {
            self.clear_ghosts(t);
        }
        completions
    }

    fn spawn_ghost(&mut self, t: Time, c: &Completion) {
        let Some(kind) = self.cfg.imcr_protocol.ghost_kind() else {
            return;
        };
        let task = &self.ts.tasks[c.task];
        let level = self.level;
        let (budget, until) = match kind {
            GhostKind::WcetReclaim => {
                let ur = task.budget(level).saturating_sub(c.exec);
                if ur == 0 {
                    return;
                }
                (ur, 0)
            }
            GhostKind::WcrtSimulate => {
                let r = self.wcrt.get(task.id, level).unwrap_or(0);
                let until = c.release + r;
                if t >= until {
                    return;
                }
                (0, until)
            }
        };
        self.ghosts.push(Ghost {
            task: c.task,
            k: c.k,
            release: c.release,
            kind,
            budget,
            until,
        });
        self.emit(
            t,
            EventKind::GhostCreated {
                task: task.id,
                k: c.k,
                kind,
                budget,
                until,
                level,
            },
        );
    }

    fn remove_ghost(&mut self, t: Time, pos: usize, reason: GhostEnd) {
        let g = self.ghosts.remove(pos);
        self.emit(
            t,
            EventKind::GhostRemoved {
                task: self.id(g.task),
                k: g.k,
                reason,
            },
        );
    }

    fn clear_ghosts(&mut self, t: Time) {
        while !self.ghosts.is_empty() {
            self.remove_ghost(t, 0, GhostEnd::NoRemJobs);
        }
    }

    fn expire_ghosts(&mut self, t: Time) {
        let mut i = 0;
        while i < self.ghosts.len() {
            let g = &self.ghosts[i];
            let end = match g.kind {
                GhostKind::WcetReclaim if g.budget == 0 => Some(GhostEnd::Exhausted),
                GhostKind::WcrtSimulate if g.until <= t => Some(GhostEnd::Expired),
                _ => None,
            };
            match end {
                Some(reason) => self.remove_ghost(t, i, reason),
                None => i += 1,
            }
        }
    }

    fn detect_deadline_misses(&mut self, t: Time) {
        let mut missed = Vec::new();
        for j in self.jobs.iter_mut() {
            if !j.missed && j.deadline <= t {
                j.missed = true;
                missed.push((j.task, j.k, j.rem));
            }
        }
        for (task, k, rem) in missed {
            let criticality = self.ts.tasks[task].criticality;
            self.emit(
                t,
                EventKind::DeadlineMiss {
                    task: self.id(task),
                    k,
                    criticality,
                    rem,
                },
            );
        }
    }

    /// Raises the level while some monitored job has used up its budget.
    fn detect_overruns(&mut self, t: Time) -> Result<(), SimError> {
        loop {
            let level = self.level;
            let over = self
                .jobs
                .iter()
                .filter(|j| !j.rem && j.executed < j.exec)
                .filter(|j| {
                    let task = &self.ts.tasks[j.task];
                    task.criticality > level && j.executed >= task.budget(level)
                })
                .min_by_key(|j| (self.rank[j.task], j.release, j.k))
                .map(|j| (j.task, j.k, j.executed));
            let Some((task, k, executed)) = over else {
                return Ok(());
            };
            let spec = &self.ts.tasks[task];
            if executed >= spec.max_budget() {
                return Err(SimError::ModelViolation {
                    task: spec.id,
                    k,
                    budget: spec.max_budget(),
                });
            }
            self.increase_mode(t, task, k);
        }
    }

    fn increase_mode(&mut self, t: Time, task: usize, k: u32) {
        let from = self.level;
        self.level = from + 1;
        self.emit(
            t,
            EventKind::BudgetExceeded {
                task: self.id(task),
                k,
                from,
                to: self.level,
            },
        );
        if let Some(chain) = self.chain.take() {
            self.emit(
                t,
                EventKind::ChainAborted {
                    target: chain.target,
                    cursor: chain.cursor as u32,
                },
            );
        }
        // tasks with L = from are no longer enabled
        let mut suspended: Vec<usize> = (0..self.jobs.len())
            .filter(|&i| !self.jobs[i].rem && self.ts.tasks[self.jobs[i].task].criticality == from)
            .collect();
        suspended.sort_by_key(|&i| (self.rank[self.jobs[i].task], self.jobs[i].release, self.jobs[i].k));
        if self.cfg.imcr_protocol == ImcrProtocol::Drop {
            for &i in &suspended {
                let (jt, jk) = (self.jobs[i].task, self.jobs[i].k);
                if let Some(p) = self.free_proc_of(jt, jk) {
                    self.emit(
                        t,
                        EventKind::Preempt {
                            task: self.id(jt),
                            k: jk,
                            proc: p,
                        },
                    );
                    self.idle_since[p as usize] = Some(t);
                }
                self.emit(
                    t,
                    EventKind::JobDropped {
                        task: self.id(jt),
                        k: jk,
                        reason: DropReason::RemDropped,
                    },
                );
            }
            let mut idx = 0;
            self.jobs.retain(|_| {
                let keep = !suspended.contains(&idx);
                idx += 1;
                keep
            });
        } else {
            for &i in &suspended {
                self.jobs[i].rem = true;
            }
        }
    }

    fn intake_dmcr(&mut self, t: Time, first_pass: bool) {
        if first_pass {
            while self.next_dmcr < self.dmcr.len() && self.dmcr[self.next_dmcr].0 <= t {
                let target = self.dmcr[self.next_dmcr].1;
                self.next_dmcr += 1;
                if self.phase() == Phase::Steady {
                    self.emit(t, EventKind::DmcrRequested { target, deferred: false });
                    self.start_chain(t, target);
                } else {
                    self.emit(t, EventKind::DmcrRequested { target, deferred: true });
                    self.pending = Some(target);
                }
            }
        }
        if self.phase() == Phase::Steady {
            if let Some(target) = self.pending.take() {
                self.start_chain(t, target);
            }
        }
    }

    fn start_chain(&mut self, t: Time, target: Level) {
        if target == 0 || target >= self.level {
            self.emit(t, EventKind::DmcrRejected { target });
            return;
        }
        let level = self.level;
        let mut order: Vec<usize> = (0..self.ts.len())
            .filter(|&i| self.ts.tasks[i].criticality >= level)
            .collect();
        order.sort_by_key(|&i| self.rank[i]);
        let chain = order.iter().map(|&i| self.id(i)).collect();
        self.emit(t, EventKind::ChainStarted { target, chain });
        self.chain = Some(Chain {
            target,
            order,
            cursor: 0,
        });
    }

    /// Advances the chain on this instant's completions; true if the
    /// suspended tasks were re-enabled.
    fn advance_chain(&mut self, t: Time, completions: &[Completion]) -> bool {
        loop {
            let Some(chain) = self.chain.as_ref() else {
                return false;
            };
            let target = chain.target;
            let task = chain.order[chain.cursor];
            let bound = self.wcrt.get(self.id(task), target).unwrap_or(0);
            let hit = completions
                .iter()
                .find(|c| c.task == task && t <= c.release + bound)
                .copied();
            let Some(hit) = hit else {
                return false;
            };
            let chain = self.chain.as_mut().unwrap();
            chain.cursor += 1;
            let cursor = chain.cursor as u32;
            let finished = chain.cursor == chain.order.len();
            self.emit(
                t,
                EventKind::ChainAdvance {
                    task: self.id(hit.task),
                    k: hit.k,
                    cursor,
                },
            );
            if finished {
                self.chain = None;
                let old = self.level;
                self.level = target;
                let tasks = self
                    .ts
                    .tasks
                    .iter()
                    .filter(|x| x.criticality >= target && x.criticality < old)
                    .map(|x| x.id)
                    .collect();
                self.emit(t, EventKind::ReEnabled { target, tasks });
                return true;
            }
        }
    }

    fn release_jobs(&mut self, t: Time) {
        let mut order: Vec<usize> = (0..self.ts.len()).collect();
        order.sort_by_key(|&i| self.ts.tasks[i].id);
        for i in order {
            let (arr, exec) = self.arrivals[i];
            let n = self.next_arrival[i];
            if n >= arr.len() || arr[n] > t {
                continue;
            }
            self.next_arrival[i] = n + 1;
            let k = n as u32 + 1;
            let task = &self.ts.tasks[i];
            if self.enabled(i) {
                let deadline = t + task.deadline;
                self.jobs.push(LiveJob {
                    task: i,
                    k,
                    release: t,
                    deadline,
                    exec: exec[n],
                    executed: 0,
                    rem: false,
                    missed: false,
                });
                self.emit(t, EventKind::Release { task: task.id, k, deadline });
            } else {
                self.emit(
                    t,
                    EventKind::JobDropped {
                        task: task.id,
                        k,
                        reason: DropReason::Suspended,
                    },
                );
            }
        }
    }

    fn rem_key(&self, j: &LiveJob) -> (u64, u64, u64, TaskId, u32) {
        let task = &self.ts.tasks[j.task];
        let left = task.max_budget().saturating_sub(j.executed);
        match self.cfg.rem_order {
            RemOrder::CritThenEdf => (
                u64::from(u32::MAX - task.criticality),
                j.deadline,
                0,
                task.id,
                j.k,
            ),
            RemOrder::Edf => (j.deadline, 0, 0, task.id, j.k),
            RemOrder::Srpt => (left, j.deadline, 0, task.id, j.k),
        }
    }

    fn dispatch(&mut self, t: Time) {
        // prioritized entities: jobs of enabled tasks and ghosts
        let mut prio: Vec<(u32, Time, u32, bool, usize)> = Vec::new();
        for (i, j) in self.jobs.iter().enumerate() {
            if !j.rem {
                prio.push((self.rank[j.task], j.release, j.k, false, i));
            }
        }
        for (i, g) in self.ghosts.iter().enumerate() {
            prio.push((self.rank[g.task], g.release, g.k, true, i));
        }
        prio.sort();

        let mut rem: Vec<usize> = (0..self.jobs.len()).filter(|&i| self.jobs[i].rem).collect();
        rem.sort_by_key(|&i| self.rem_key(&self.jobs[i]));
        let mut next_rem = 0;

        let mut chosen: Vec<Occupant> = Vec::with_capacity(self.m);
        let mut starved: Vec<usize> = Vec::new();
        for &(_, _, _, is_ghost, i) in &prio {
            if chosen.len() == self.m {
                break;
            }
            if !is_ghost {
                let j = &self.jobs[i];
                chosen.push(Occupant {
                    task: j.task,
                    k: j.k,
                    slot: Slot::Own,
                });
            } else if next_rem < rem.len() {
                let j = &self.jobs[rem[next_rem]];
                next_rem += 1;
                let g = &self.ghosts[i];
                chosen.push(Occupant {
                    task: j.task,
                    k: j.k,
                    slot: Slot::Ghost {
                        task: self.id(g.task),
                        k: g.k,
                    },
                });
            } else {
                starved.push(i);
            }
        }
        // ghosts that reached a processor with no rem-job left for them are
        // gone; the entities behind them take the freed slots
        if !starved.is_empty() {
            starved.sort_unstable_by(|a, b| b.cmp(a));
            for i in starved {
                self.remove_ghost(t, i, GhostEnd::NoRemJobs);
            }
            return self.dispatch(t);
        }
        while chosen.len() < self.m && next_rem < rem.len() {
            let j = &self.jobs[rem[next_rem]];
            next_rem += 1;
            chosen.push(Occupant {
                task: j.task,
                k: j.k,
                slot: Slot::Background,
            });
        }
        self.place(t, &chosen);
    }

    fn place(&mut self, t: Time, chosen: &[Occupant]) {
        for p in 0..self.m {
            if let Some(o) = self.procs[p] {
                if !chosen.contains(&o) {
                    self.procs[p] = None;
                    let id = self.id(o.task);
                    self.emit(
                        t,
                        EventKind::Preempt {
                            task: id,
                            k: o.k,
                            proc: p as u32,
                        },
                    );
                }
            }
        }
        let mut fresh: Vec<Occupant> = chosen
            .iter()
            .filter(|o| !self.procs.contains(&Some(**o)))
            .copied()
            .collect();
        fresh.reverse();
        for p in 0..self.m {
            if self.procs[p].is_some() {
                continue;
            }
            match fresh.pop() {
                Some(o) => {
                    if let Some(from) = self.idle_since[p].take() {
                        if from < t {
                            self.emit(t, EventKind::Idle { proc: p as u32, from });
                        }
                    }
                    self.procs[p] = Some(o);
                    let id = self.id(o.task);
                    self.emit(
                        t,
                        EventKind::Dispatch {
                            task: id,
                            k: o.k,
                            proc: p as u32,
                            slot: o.slot,
                        },
                    );
                }
                None => {
                    if self.idle_since[p].is_none() {
                        self.idle_since[p] = Some(t);
                    }
                }
            }
        }
    }

    fn job_of(&self, o: &Occupant) -> usize {
        self.jobs
            .iter()
            .position(|j| j.task == o.task && j.k == o.k)
            .expect("occupant refers to a live job")
    }

    fn ghost_of(&self, task: TaskId, k: u32) -> Option<usize> {
        self.ghosts
            .iter()
            .position(|g| self.ts.tasks[g.task].id == task && g.k == k)
    }

    /// Length of the next stretch over which nothing but execution happens.
    fn next_step(&self, t: Time) -> Time {
        let mut next = self.horizon;
        for (i, &(arr, _)) in self.arrivals.iter().enumerate() {
            if let Some(&a) = arr.get(self.next_arrival[i]) {
                next = next.min(a);
            }
        }
        if let Some(&(at, _)) = self.dmcr.get(self.next_dmcr) {
            next = next.min(at.max(t + 1));
        }
        for j in &self.jobs {
            if !j.missed {
                next = next.min(j.deadline);
            }
        }
        for g in &self.ghosts {
            if g.kind == GhostKind::WcrtSimulate {
                next = next.min(g.until);
            }
        }
        for o in self.procs.iter().flatten() {
            let j = &self.jobs[self.job_of(o)];
            next = next.min(t + (j.exec - j.executed));
            let task = &self.ts.tasks[j.task];
            if !j.rem && task.criticality > self.level {
                let budget = task.budget(self.level);
                if j.executed < budget {
                    next = next.min(t + (budget - j.executed));
                }
            }
            if let Slot::Ghost { task, k } = o.slot {
                if let Some(g) = self.ghost_of(task, k) {
                    if self.ghosts[g].kind == GhostKind::WcetReclaim {
                        next = next.min(t + self.ghosts[g].budget);
                    }
                }
            }
        }
        next.max(t + 1) - t
    }

    fn advance(&mut self, dt: Time) {
        for p in 0..self.m {
            let Some(o) = self.procs[p] else { continue };
            let j = self.job_of(&o);
            self.jobs[j].executed += dt;
            if let Slot::Ghost { task, k } = o.slot {
                if let Some(g) = self.ghost_of(task, k) {
                    let g = &mut self.ghosts[g];
                    if g.kind == GhostKind::WcetReclaim {
                        g.budget -= dt;
                    }
                }
            }
        }
    }

    fn finish(&mut self) {
        let t = self.horizon;
        for p in 0..self.m {
            if let Some(from) = self.idle_since[p] {
                if from < t && self.procs[p].is_none() {
                    self.emit(t, EventKind::Idle { proc: p as u32, from });
                }
            }
        }
        if let Some(chain) = self.chain.as_ref() {
            let kind = EventKind::ChainStalled {
                target: chain.target,
                cursor: chain.cursor as u32,
            };
            self.emit(t, kind);
        }
        self.emit(t, EventKind::End);
    }
}
