use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use super::replay::Replay;
use super::{compute_l_intervals, Finding, FindingKind, Report, VerifyError};
use crate::analysis::{PriorityAssignment, WcrtTable};
use crate::model::{Level, Platform, Scenario, TaskId, TaskSet, Time};
use crate::sim::{DropReason, EventKind, GhostKind, ImcrProtocol, Slot, Trace};

fn criticality(ts: &TaskSet, id: TaskId) -> Level {
    ts.get(id).map_or(0, |t| t.criticality)
}

/// Every job of a task enabled at the current level completes by its
/// deadline and receives its whole execution time inside `[r, d]`.
pub fn check_feasibility(trace: &Trace, ts: &TaskSet) -> Result<Report, VerifyError> {
    let replay = Replay::build(trace, ts)?;
    let mut report = Report::new("feasibility");
    let mut flagged = BTreeSet::new();
    for e in trace.iter() {
        match &e.kind {
            EventKind::DeadlineMiss {
                task, k, rem: false, ..
            } if criticality(ts, *task) >= e.mode => {
                report.checked += 1;
                flagged.insert((*task, *k));
                let deadline = replay.jobs.get(&(*task, *k)).map_or(e.time, |j| j.deadline);
                report.findings.push(Finding::job(
                    e.time,
                    *task,
                    *k,
                    FindingKind::MissedDeadline {
                        deadline,
                        level: e.mode,
                    },
                ));
            }
            EventKind::Complete {
                task,
                k,
                release,
                deadline,
                exec,
                rem: false,
                ..
            } if criticality(ts, *task) >= e.mode => {
                if flagged.contains(&(*task, *k)) {
                    continue;
                }
                report.checked += 1;
                if e.time > *deadline {
                    report.findings.push(Finding::job(
                        e.time,
                        *task,
                        *k,
                        FindingKind::Late {
                            deadline: *deadline,
                            finish: e.time,
                            level: e.mode,
                        },
                    ));
                    continue;
                }
                let received = replay
                    .jobs
                    .get(&(*task, *k))
                    .map_or(0, |j| j.executed_within(*release, *deadline));
                if received < *exec {
                    report.findings.push(Finding::job(
                        e.time,
                        *task,
                        *k,
                        FindingKind::ShortExecution {
                            received,
                            exec: *exec,
                        },
                    ));
                }
            }
            _ => {}
        }
    }
    Ok(report)
}

/// Every arrival of a task enabled at the arrival instant is released at
/// that instant, and nothing else is released.
pub fn check_periodicity(
    trace: &Trace,
    ts: &TaskSet,
    scenario: &Scenario,
) -> Result<Report, VerifyError> {
    let intervals = compute_l_intervals(trace)?;
    let horizon = intervals.horizon();
    let mut released: BTreeMap<(TaskId, u32), Time> = BTreeMap::new();
    for e in trace.iter() {
        if let EventKind::Release { task, k, .. } = e.kind {
            released.insert((task, k), e.time);
        }
    }
    let mut report = Report::new("periodicity");
    let mut expected = BTreeSet::new();
    for (id, arr) in &scenario.tasks {
        let crit = criticality(ts, *id);
        for (n, &a) in arr.arrivals.iter().enumerate() {
            if a >= horizon {
                break;
            }
            let k = n as u32 + 1;
            expected.insert((*id, k));
            if crit < intervals.level_at(a) {
                report.excluded += 1;
                continue;
            }
            report.checked += 1;
            match released.get(&(*id, k)) {
                None => report.findings.push(Finding::job(
                    a,
                    *id,
                    k,
                    FindingKind::MissingRelease { expected: a },
                )),
                Some(&r) if r != a => report.findings.push(Finding::job(
                    r,
                    *id,
                    k,
                    FindingKind::ReleaseAtWrongTime {
                        expected: a,
                        actual: r,
                    },
                )),
                Some(_) => {}
            }
        }
    }
    for (&(task, k), &r) in &released {
        if !expected.contains(&(task, k)) {
            report
                .findings
                .push(Finding::job(r, task, k, FindingKind::SpuriousRelease));
        }
    }
    Ok(report)
}

/// Jobs whose whole lifetime lies inside one ℓ-interval with `L_i >= ℓ`
/// respond within `R_i(ℓ)`. Jobs spanning a level change are counted as
/// excluded.
pub fn check_response_bounds(
    trace: &Trace,
    ts: &TaskSet,
    wcrt: &WcrtTable,
) -> Result<Report, VerifyError> {
    let intervals = compute_l_intervals(trace)?;
    let replay = Replay::build(trace, ts)?;
    let mut report = Report::new("response-bounds");
    for job in replay.jobs.values() {
        let (Some(f), None) = (job.finish, job.rem_since) else {
            continue;
        };
        let iv = intervals.at(job.release);
        if f > iv.end || criticality(ts, job.task) < iv.level {
            report.excluded += 1;
            continue;
        }
        let Some(bound) = wcrt.get(job.task, iv.level) else {
            report.excluded += 1;
            continue;
        };
        report.checked += 1;
        let response = f - job.release;
        if response > bound {
            report.findings.push(Finding::job(
                f,
                job.task,
                job.k,
                FindingKind::ResponseBound {
                    response,
                    bound,
                    level: iv.level,
                },
            ));
        }
    }
    Ok(report)
}

/// Ghosts lend no more than they own: a reclaiming ghost plus its job stay
/// within `C_i(ℓ')`, a simulating ghost lends nothing past `r + R_i(ℓ')`.
pub fn check_ghosts(trace: &Trace, ts: &TaskSet, wcrt: &WcrtTable) -> Result<Report, VerifyError> {
    let replay = Replay::build(trace, ts)?;
    let mut report = Report::new("ghosts");
    for g in replay.ghosts.values() {
        report.checked += 1;
        let job = replay.jobs.get(&(g.task, g.k));
        match g.kind {
            GhostKind::WcetReclaim => {
                let ceiling = ts.get(g.task).map_or(0, |t| t.budget(g.level));
                let exec = job.and_then(|j| j.exec).unwrap_or(0);
                if exec + g.lent > ceiling || g.lent > g.budget {
                    report.findings.push(Finding::job(
                        g.created,
                        g.task,
                        g.k,
                        FindingKind::ReclaimOverrun {
                            used: g.lent,
                            exec,
                            ceiling,
                        },
                    ));
                }
            }
            GhostKind::WcrtSimulate => {
                let release = job.map_or(0, |j| j.release);
                let limit = wcrt
                    .get(g.task, g.level)
                    .map_or(g.until, |r| (release + r).min(g.until));
                if g.last_used.is_some_and(|u| u > limit) || g.removed.is_some_and(|u| u > limit) {
                    report.findings.push(Finding::job(
                        g.created,
                        g.task,
                        g.k,
                        FindingKind::GhostOverstay { limit },
                    ));
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Occ {
    task: TaskId,
    k: u32,
    slot: Slot,
}

/// Dispatching follows the scheduling rules at every instant: at most `m`
/// entities run, jobs of suspended tasks never run at their own priority,
/// no dispatchable entity waits behind a strictly lower-priority one or an
/// idle processor, rem-jobs only take leftover processors (or none, when
/// dropped) and never wait while a processor idles.
pub fn check_dispatch(
    trace: &Trace,
    ts: &TaskSet,
    platform: &Platform,
    priorities: &PriorityAssignment,
    protocol: ImcrProtocol,
) -> Result<Report, VerifyError> {
    let horizon = trace
        .horizon()
        .ok_or(VerifyError::malformed(0, "trace does not end with End"))?;
    let m = platform.processors as usize;
    let rank = |id: TaskId| priorities.rank(id).unwrap_or(u32::MAX);
    let mut report = Report::new("dispatch");

    let mut level: Level = 1;
    // alive jobs -> rem flag
    let mut jobs: BTreeMap<(TaskId, u32), bool> = BTreeMap::new();
    let mut ghosts: BTreeSet<(TaskId, u32)> = BTreeSet::new();
    let mut procs: Vec<Option<Occ>> = vec![None; m];

    let events = &trace.events;
    let mut i = 0;
    while i < events.len() {
        let t = events[i].time;
        while i < events.len() && events[i].time == t {
            match &events[i].kind {
                EventKind::Release { task, k, .. } => {
                    jobs.insert((*task, *k), false);
                }
                EventKind::Complete { task, k, proc, .. } => {
                    jobs.remove(&(*task, *k));
                    if let Some(p) = proc {
                        if let Some(slot) = procs.get_mut(*p as usize) {
                            *slot = None;
                        }
                    }
                }
                EventKind::JobDropped {
                    task,
                    k,
                    reason: DropReason::RemDropped,
                } => {
                    jobs.remove(&(*task, *k));
                }
                EventKind::BudgetExceeded { to, .. } => {
                    level = *to;
                    for (key, rem) in jobs.iter_mut() {
                        if criticality(ts, key.0) < level {
                            *rem = true;
                        }
                    }
                }
                EventKind::ReEnabled { target, .. } => level = *target,
                EventKind::GhostCreated { task, k, .. } => {
                    ghosts.insert((*task, *k));
                }
                EventKind::GhostRemoved { task, k, .. } => {
                    ghosts.remove(&(*task, *k));
                }
                EventKind::Dispatch { task, k, proc, slot } => {
                    let p = *proc as usize;
                    if p >= m {
                        report.findings.push(Finding::at(
                            t,
                            FindingKind::Overcommitted {
                                busy: p + 1,
                                processors: platform.processors,
                            },
                        ));
                        return Ok(report);
                    }
                    procs[p] = Some(Occ {
                        task: *task,
                        k: *k,
                        slot: *slot,
                    });
                }
                EventKind::Preempt { proc, .. } => {
                    if let Some(slot) = procs.get_mut(*proc as usize) {
                        *slot = None;
                    }
                }
                _ => {}
            }
            i += 1;
        }
        if t >= horizon {
            break;
        }
        report.checked += 1;
        let running: Vec<Occ> = procs.iter().flatten().copied().collect();
        let is_running = |task: TaskId, k: u32| running.iter().any(|o| o.task == task && o.k == k);
        let lending = |g: (TaskId, u32)| {
            running
                .iter()
                .any(|o| o.slot == Slot::Ghost { task: g.0, k: g.1 })
        };

        for o in &running {
            let rem = jobs.get(&(o.task, o.k)).copied();
            match o.slot {
                Slot::Own => {
                    if rem != Some(false) || criticality(ts, o.task) < level {
                        report.findings.push(Finding::job(t, o.task, o.k, FindingKind::SuspendedJobRan));
                    }
                }
                Slot::Ghost { .. } | Slot::Background => {
                    if protocol == ImcrProtocol::Drop {
                        report.findings.push(Finding::job(t, o.task, o.k, FindingKind::DroppedJobRan));
                    }
                }
            }
        }

        let rem_waiting = jobs
            .iter()
            .any(|(&(task, k), &rem)| rem && !is_running(task, k));
        let rem_in_background = running.iter().any(|o| o.slot == Slot::Background);
        let mut waiting: Vec<(u32, TaskId, u32)> = jobs
            .iter()
            .filter(|(&(task, k), &rem)| !rem && !is_running(task, k))
            .map(|(&(task, k), _)| (rank(task), task, k))
            .collect();
        if rem_waiting || rem_in_background {
            waiting.extend(
                ghosts
                    .iter()
                    .filter(|&&g| !lending(g))
                    .map(|&(task, k)| (rank(task), task, k)),
            );
        }
        let available = jobs.values().filter(|rem| !**rem).count();
        for &(w, task, k) in &waiting {
            let kind = if running.len() < m {
                Some(FindingKind::PriorityInversion {
                    waiting_rank: w,
                    running_rank: None,
                })
            } else if rem_in_background {
                Some(FindingKind::BackgroundWhileBusy { available })
            } else {
                running
                    .iter()
                    .map(|o| match o.slot {
                        Slot::Ghost { task, .. } => rank(task),
                        _ => rank(o.task),
                    })
                    .filter(|&r| r > w)
                    .max()
                    .map(|r| FindingKind::PriorityInversion {
                        waiting_rank: w,
                        running_rank: Some(r),
                    })
            };
            if let Some(kind) = kind {
                report.findings.push(Finding::job(t, task, k, kind));
            }
        }
        if rem_waiting && running.len() < m && protocol != ImcrProtocol::Drop {
            report.findings.push(Finding::at(t, FindingKind::RemJobStarved));
        }
    }
    Ok(report)
}

/// Runs every checker that applies; periodicity needs the scenario.
pub fn check_all(
    trace: &Trace,
    ts: &TaskSet,
    platform: &Platform,
    priorities: &PriorityAssignment,
    wcrt: &WcrtTable,
    scenario: Option<&Scenario>,
    protocol: ImcrProtocol,
) -> Result<Vec<Report>, VerifyError> {
    let mut out = vec![
        check_feasibility(trace, ts)?,
        check_response_bounds(trace, ts, wcrt)?,
        check_ghosts(trace, ts, wcrt)?,
        check_dispatch(trace, ts, platform, priorities, protocol)?,
    ];
    if let Some(sc) = scenario {
        out.insert(1, check_periodicity(trace, ts, sc)?);
    }
    Ok(out)
}
