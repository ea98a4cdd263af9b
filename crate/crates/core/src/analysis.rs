//! Response-time analysis for global static-priority scheduling of
//! mixed-criticality sporadic tasks, and Audsley's priority assignment.
//!
//! For a job of τ_i analysed in a window of length Δ starting at its
//! release, every higher-priority τ_j contributes either a non carry-in or a
//! carry-in interfering workload. At most `m - 1` tasks may carry in, so the
//! total interfering workload is
//!
//! ```text
//! Ī_i(Δ, ℓ) = Σ_{j ∈ hp} nc_j + Σ_{j ∈ top(m-1, diff)} (ci_j - nc_j)
//! ```
//!
//! and `R_i(ℓ)` is the least fixed point of `R = C_i(ℓ) + ⌊Ī_i(R, ℓ) / m⌋`.
//!
//! Every task present in `hp` contributes with its level-ℓ budget, whatever
//! its own criticality.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{Level, McTask, TaskId, TaskSet, Time};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("level {level} outside [1, {max}]")]
    LevelOutOfRange { level: Level, max: Level },
    #[error("task {0} cannot interfere with itself")]
    SameTask(TaskId),
    #[error("task {task} at level {level}: response time exceeds deadline (reached {reached})")]
    Divergent {
        task: TaskId,
        level: Level,
        reached: Time,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisConfig {
    /// Cap each interfering workload at `Δ - C_i(ℓ) + 1`.
    pub cap: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { cap: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterferenceBound {
    pub nc: Time,
    pub ci: Time,
    pub diff: Time,
}

fn level_budget(task: &McTask, level: Level) -> Result<Time, AnalysisError> {
    let max = task.wcet.len() as Level;
    if level == 0 || level > max {
        return Err(AnalysisError::LevelOutOfRange { level, max });
    }
    Ok(task.budget(level))
}

fn densest(c: Time, period: Time, delta: Time) -> Time {
    (delta / period) * c + c.min(delta % period)
}

/// Workload of τ_j in a window of length `delta` when no job carries in:
/// `⌊Δ/T⌋·C + min(C, Δ mod T)`.
pub fn workload_nc(task: &McTask, delta: Time, level: Level) -> Result<Time, AnalysisError> {
    let c = level_budget(task, level)?;
    Ok(densest(c, task.period, delta))
}

/// Workload of τ_j in a window of length `delta` when one job carries in.
///
/// The carry-in job executes a full budget at the head of the window and the
/// following jobs are released as densely as possible after it.
pub fn workload_ci(task: &McTask, delta: Time, level: Level) -> Result<Time, AnalysisError> {
    let c = level_budget(task, level)?;
    let rest = delta.saturating_sub(c);
    Ok(delta.min(c + densest(c, task.period, rest)))
}

/// Non carry-in and carry-in interfering workload of `tj` on `ti`.
pub fn interfering_bounds(
    tj: &McTask,
    ti: &McTask,
    delta: Time,
    level: Level,
    cfg: AnalysisConfig,
) -> Result<InterferenceBound, AnalysisError> {
    if tj.id == ti.id {
        return Err(AnalysisError::SameTask(ti.id));
    }
    let own = level_budget(ti, level)?;
    let mut nc = workload_nc(tj, delta, level)?;
    let mut ci = workload_ci(tj, delta, level)?;
    if cfg.cap {
        let cap = (delta + 1).saturating_sub(own);
        nc = nc.min(cap);
        ci = ci.min(cap);
    }
    // ci ≥ nc holds for the closed forms; keep diff well defined regardless.
    let ci = ci.max(nc);
    Ok(InterferenceBound {
        nc,
        ci,
        diff: ci - nc,
    })
}

/// Total interfering workload Ī_i(Δ, ℓ) suffered by `ti` from `hp`.
///
/// Carry-in tasks are the `min(m-1, |hp|)` tasks with the largest diff,
/// smaller id first among equal diffs.
pub fn total_interfering(
    ti: &McTask,
    hp: &[&McTask],
    delta: Time,
    level: Level,
    processors: u32,
    cfg: AnalysisConfig,
) -> Result<Time, AnalysisError> {
    level_budget(ti, level)?;
    let mut nc_sum = 0;
    let mut diffs: Vec<(Time, TaskId)> = Vec::with_capacity(hp.len());
    for tj in hp {
        let b = interfering_bounds(tj, ti, delta, level, cfg)?;
        nc_sum += b.nc;
        diffs.push((b.diff, tj.id));
    }
    diffs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let carry = (processors.saturating_sub(1) as usize).min(diffs.len());
    let diff_sum: Time = diffs[..carry].iter().map(|d| d.0).sum();
    Ok(nc_sum + diff_sum)
}

/// Least fixed point of `R = C_i(ℓ) + ⌊Ī_i(R, ℓ)/m⌋`, iterated upwards from
/// `C_i(ℓ)`; `Divergent` as soon as an iterate exceeds `D_i`.
pub fn wcrt(
    ti: &McTask,
    hp: &[&McTask],
    level: Level,
    processors: u32,
    cfg: AnalysisConfig,
) -> Result<Time, AnalysisError> {
    let own = level_budget(ti, level)?;
    let m = Time::from(processors.max(1));
    let mut r = own;
    loop {
        if r > ti.deadline {
            return Err(AnalysisError::Divergent {
                task: ti.id,
                level,
                reached: r,
            });
        }
        let next = own + total_interfering(ti, hp, r, level, processors, cfg)? / m;
        if next == r {
            return Ok(r);
        }
        debug_assert!(next > r, "response-time iteration must be monotone");
        r = next;
    }
}

/// Static priorities: rank 1 is the highest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriorityAssignment {
    ranks: BTreeMap<TaskId, u32>,
}

impl PriorityAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an assignment from ids listed highest priority first.
    pub fn from_order(order: &[TaskId]) -> Self {
        let ranks = order
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i as u32 + 1))
            .collect();
        Self { ranks }
    }

    pub fn assign(&mut self, task: TaskId, rank: u32) {
        self.ranks.insert(task, rank);
    }

    pub fn rank(&self, task: TaskId) -> Option<u32> {
        self.ranks.get(&task).copied()
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Task ids ordered from highest to lowest priority.
    pub fn order(&self) -> Vec<TaskId> {
        let mut v: Vec<(u32, TaskId)> = self.ranks.iter().map(|(id, r)| (*r, *id)).collect();
        v.sort();
        v.into_iter().map(|(_, id)| id).collect()
    }

    /// Whether the ranks are exactly 1..n over the tasks of `ts`.
    pub fn covers(&self, ts: &TaskSet) -> bool {
        if self.ranks.len() != ts.len() || ts.tasks.iter().any(|t| !self.ranks.contains_key(&t.id)) {
            return false;
        }
        let mut r: Vec<u32> = self.ranks.values().copied().collect();
        r.sort_unstable();
        r.iter().enumerate().all(|(i, &x)| x == i as u32 + 1)
    }

    /// Tasks of higher priority than `task`.
    pub fn higher_than(&self, task: TaskId) -> Vec<TaskId> {
        match self.rank(task) {
            Some(r) => self
                .ranks
                .iter()
                .filter(|(_, &q)| q < r)
                .map(|(id, _)| *id)
                .collect(),
            None => Vec::new(),
        }
    }
}

/// `R(i, ℓ)` for every analysed task and every ℓ ≤ L_i.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WcrtTable {
    entries: BTreeMap<(TaskId, Level), Time>,
}

impl WcrtTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, task: TaskId, level: Level, r: Time) {
        self.entries.insert((task, level), r);
    }

    pub fn get(&self, task: TaskId, level: Level) -> Option<Time> {
        self.entries.get(&(task, level)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaskId, Level, Time)> + '_ {
        self.entries.iter().map(|(&(t, l), &r)| (t, l, r))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether an entry exists for every task and every level up to its
    /// criticality.
    pub fn covers(&self, ts: &TaskSet) -> bool {
        ts.tasks
            .iter()
            .all(|t| (1..=t.criticality).all(|l| self.entries.contains_key(&(t.id, l))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Schedulable,
    /// No remaining task passes at the lowest free rank.
    Unschedulable {
        residual: Vec<TaskId>,
        /// For each residual task, the first level whose response time
        /// diverged.
        failures: Vec<(TaskId, Level)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisResult {
    pub verdict: Verdict,
    pub priorities: PriorityAssignment,
    pub wcrt: WcrtTable,
}

impl AnalysisResult {
    pub fn is_schedulable(&self) -> bool {
        matches!(self.verdict, Verdict::Schedulable)
    }
}

/// Audsley's optimal priority assignment, examining candidates by
/// ascending task id.
pub fn opa_assign(ts: &TaskSet, processors: u32, cfg: AnalysisConfig) -> AnalysisResult {
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by_key(|&i| ts.tasks[i].id);
    opa_assign_with_order(ts, processors, cfg, &order)
}

/// OPA examining candidates in the given order of task indices.
pub fn opa_assign_with_order(
    ts: &TaskSet,
    processors: u32,
    cfg: AnalysisConfig,
    candidates: &[usize],
) -> AnalysisResult {
    let mut remaining: Vec<usize> = candidates.to_vec();
    let mut priorities = PriorityAssignment::new();
    let mut table = WcrtTable::new();
    let mut rank = ts.len() as u32;

    while !remaining.is_empty() {
        let mut failures = Vec::new();
        let mut chosen = None;
        for (pos, &cand) in remaining.iter().enumerate() {
            let ti = &ts.tasks[cand];
            let hp: Vec<&McTask> = remaining
                .iter()
                .filter(|&&j| j != cand)
                .map(|&j| &ts.tasks[j])
                .collect();
            match level_responses(ti, &hp, processors, cfg) {
                Ok(rs) => {
                    chosen = Some((pos, rs));
                    break;
                }
                Err(level) => failures.push((ti.id, level)),
            }
        }
        match chosen {
            Some((pos, rs)) => {
                let idx = remaining.remove(pos);
                let id = ts.tasks[idx].id;
                for (l, r) in rs.into_iter().enumerate() {
                    table.insert(id, l as Level + 1, r);
                }
                priorities.assign(id, rank);
                rank -= 1;
            }
            None => {
                let mut residual: Vec<TaskId> = remaining.iter().map(|&i| ts.tasks[i].id).collect();
                residual.sort();
                failures.sort();
                return AnalysisResult {
                    verdict: Verdict::Unschedulable { residual, failures },
                    priorities,
                    wcrt: table,
                };
            }
        }
    }
    AnalysisResult {
        verdict: Verdict::Schedulable,
        priorities,
        wcrt: table,
    }
}

/// Completes a failed assignment so an unschedulable set can still be
/// simulated: residual tasks take the top ranks in deadline-monotonic order
/// and any response time that diverges is replaced by the deadline.
pub fn forced_assignment(
    ts: &TaskSet,
    result: &AnalysisResult,
    processors: u32,
    cfg: AnalysisConfig,
) -> (PriorityAssignment, WcrtTable) {
    let Verdict::Unschedulable { residual, .. } = &result.verdict else {
        return (result.priorities.clone(), result.wcrt.clone());
    };
    let mut top: Vec<&McTask> = residual.iter().filter_map(|id| ts.get(*id)).collect();
    top.sort_by_key(|t| (t.deadline, t.id));
    let mut priorities = result.priorities.clone();
    let mut table = result.wcrt.clone();
    for (i, ti) in top.iter().enumerate() {
        priorities.assign(ti.id, i as u32 + 1);
        for l in 1..=ti.criticality {
            let r = wcrt(ti, &top[..i], l, processors, cfg).unwrap_or(ti.deadline);
            table.insert(ti.id, l, r);
        }
    }
    (priorities, table)
}

/// Response times at every level 1..=L_i, or the first failing level. All
/// levels are tested: `R_i(ℓ) ≤ R_i(ℓ+1)` is not assumed.
fn level_responses(
    ti: &McTask,
    hp: &[&McTask],
    processors: u32,
    cfg: AnalysisConfig,
) -> Result<Vec<Time>, Level> {
    (1..=ti.criticality)
        .map(|l| wcrt(ti, hp, l, processors, cfg).map_err(|_| l))
        .collect()
}

/// Runs the response-time analysis for a fixed priority order.
pub fn wcrt_for_priorities(
    ts: &TaskSet,
    priorities: &PriorityAssignment,
    processors: u32,
    cfg: AnalysisConfig,
) -> Result<WcrtTable, AnalysisError> {
    let mut table = WcrtTable::new();
    for ti in &ts.tasks {
        let hp: Vec<&McTask> = priorities
            .higher_than(ti.id)
            .into_iter()
            .filter_map(|id| ts.get(id))
            .collect();
        for l in 1..=ti.criticality {
            table.insert(ti.id, l, wcrt(ti, &hp, l, processors, cfg)?);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn task(id: u32, t: Time, c: Time) -> McTask {
        McTask::new(id, t, t, 1, &[c])
    }

    #[test]
    fn workload_examples() {
        let tj = task(1, 10, 3);
        assert_eq!(workload_nc(&tj, 25, 1), Ok(9));
        assert_eq!(workload_nc(&tj, 0, 1), Ok(0));
        assert_eq!(workload_nc(&tj, 2, 1), Ok(2));
        assert_eq!(workload_ci(&tj, 12, 1), Ok(6));
        assert_eq!(workload_ci(&tj, 0, 1), Ok(0));
        assert_eq!(workload_ci(&tj, 2, 1), Ok(2));
        assert!(matches!(
            workload_nc(&tj, 5, 2),
            Err(AnalysisError::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn interfering_bound_examples() {
        let tj = task(1, 10, 3);
        let ti = task(2, 10, 4);
        let cfg = AnalysisConfig::default();
        let b = interfering_bounds(&tj, &ti, 8, 1, cfg).unwrap();
        assert_eq!((b.nc, b.ci, b.diff), (3, 5, 2));
        let b = interfering_bounds(&tj, &ti, 0, 1, cfg).unwrap();
        assert_eq!((b.nc, b.ci, b.diff), (0, 0, 0));
        let b = interfering_bounds(&tj, &ti, 4, 1, cfg).unwrap();
        assert_eq!((b.nc, b.ci, b.diff), (1, 1, 0));
        assert_eq!(
            interfering_bounds(&tj, &tj, 4, 1, cfg),
            Err(AnalysisError::SameTask(TaskId(1)))
        );
        // without the cap the raw workloads come through
        let b = interfering_bounds(&tj, &ti, 8, 1, AnalysisConfig { cap: false }).unwrap();
        assert_eq!((b.nc, b.ci, b.diff), (3, 6, 3));
    }

    #[test]
    fn total_interfering_examples() {
        let cfg = AnalysisConfig::default();
        let ti = task(3, 10, 4);
        assert_eq!(total_interfering(&ti, &[], 8, 1, 2, cfg), Ok(0));
        let (a, b) = (task(1, 10, 4), task(2, 10, 4));
        assert_eq!(total_interfering(&ti, &[&a, &b], 8, 1, 2, cfg), Ok(9));
        // m = 1 keeps only the non carry-in terms
        assert_eq!(total_interfering(&ti, &[&a, &b], 8, 1, 1, cfg), Ok(8));
    }

    #[test]
    fn wcrt_examples() {
        let cfg = AnalysisConfig::default();
        let t1 = task(1, 10, 2);
        let t2 = task(2, 10, 3);
        assert_eq!(wcrt(&t1, &[], 1, 1, cfg), Ok(2));
        assert_eq!(wcrt(&t2, &[&t1], 1, 1, cfg), Ok(5));
        let (a, b, c) = (task(1, 10, 4), task(2, 10, 4), task(3, 10, 4));
        assert_eq!(wcrt(&c, &[&a, &b], 1, 2, cfg), Ok(8));
    }

    #[test]
    fn wcrt_divergence_stops_past_deadline() {
        let cfg = AnalysisConfig::default();
        let (a, b) = (task(1, 10, 6), task(2, 10, 6));
        assert_eq!(
            wcrt(&b, &[&a], 1, 1, cfg),
            Err(AnalysisError::Divergent {
                task: TaskId(2),
                level: 1,
                reached: 11
            })
        );
    }

    #[test]
    fn opa_examples() {
        let cfg = AnalysisConfig::default();
        let empty = TaskSet::new(1, vec![]);
        let r = opa_assign(&empty, 1, cfg);
        assert!(r.is_schedulable() && r.priorities.is_empty());

        let one = TaskSet::new(2, vec![McTask::new(7, 10, 10, 2, &[2, 4])]);
        let r = opa_assign(&one, 1, cfg);
        assert!(r.is_schedulable());
        assert_eq!(r.priorities.rank(TaskId(7)), Some(1));
        assert_eq!(r.wcrt.get(TaskId(7), 1), Some(2));
        assert_eq!(r.wcrt.get(TaskId(7), 2), Some(4));

        let heavy = TaskSet::new(1, vec![task(1, 10, 6), task(2, 10, 6)]);
        let r = opa_assign(&heavy, 1, cfg);
        match r.verdict {
            Verdict::Unschedulable { residual, failures } => {
                assert_eq!(residual, vec![TaskId(1), TaskId(2)]);
                assert_eq!(failures, vec![(TaskId(1), 1), (TaskId(2), 1)]);
            }
            Verdict::Schedulable => panic!("6 + 6 > 10 on one processor"),
        }
    }

    #[test]
    fn opa_puts_long_deadline_task_lowest() {
        let cfg = AnalysisConfig::default();
        let ts = TaskSet::new(
            1,
            vec![McTask::new(1, 20, 20, 1, &[5]), McTask::new(2, 10, 4, 1, &[3])],
        );
        let r = opa_assign(&ts, 1, cfg);
        assert!(r.is_schedulable());
        assert_eq!(r.priorities.order(), vec![TaskId(2), TaskId(1)]);
        assert_eq!(r.wcrt.get(TaskId(1), 1), Some(8));
        assert!(r.priorities.covers(&ts) && r.wcrt.covers(&ts));
        assert_eq!(wcrt_for_priorities(&ts, &r.priorities, 1, cfg).unwrap(), r.wcrt);
    }

    #[test]
    fn forced_assignment_covers_every_task() {
        let cfg = AnalysisConfig::default();
        let ts = TaskSet::new(1, vec![task(1, 10, 6), task(2, 10, 6), task(3, 40, 1)]);
        let r = opa_assign(&ts, 1, cfg);
        assert!(!r.is_schedulable());
        let (pa, wt) = forced_assignment(&ts, &r, 1, cfg);
        assert!(pa.covers(&ts) && wt.covers(&ts));
        assert_eq!(pa.order(), vec![TaskId(1), TaskId(2), TaskId(3)]);
        assert_eq!(wt.get(TaskId(1), 1), Some(6));
        // diverges behind task 1: falls back to the deadline
        assert_eq!(wt.get(TaskId(2), 1), Some(10));
    }
}
