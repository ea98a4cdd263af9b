use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::VerifyError;
use crate::model::{DmcrRequest, Level, McTask, Scenario, TaskArrivals, TaskId, TaskSet, Time};

pub const MAX_ORACLE_PERIOD: Time = 64;
pub const MAX_ORACLE_DELTA: Time = 256;
pub const MAX_ENUMERATED_JOBS: usize = 12;

/// Largest amount of level-`level` work `task` can execute inside `[0, Δ)`,
/// found by searching every sporadic release pattern.
///
/// With `carry_in` the first job is released in `[-T, 0)`, otherwise at or
/// after 0. Each job executes `C(level)` units anywhere inside its window
/// `[r, r + D]`, so it contributes at most the overlap of that window with
/// `[0, Δ)`.
pub fn brute_force_workload(
    task: &McTask,
    delta: Time,
    level: Level,
    carry_in: bool,
) -> Result<Time, VerifyError> {
    if task.period > MAX_ORACLE_PERIOD {
        return Err(VerifyError::ParameterTooLarge("period"));
    }
    if delta > MAX_ORACLE_DELTA {
        return Err(VerifyError::ParameterTooLarge("window"));
    }
    let c = task.budget(level) as i64;
    let t = task.period as i64;
    let d = task.deadline as i64;
    let delta = delta as i64;
    let contrib = |r: i64| -> i64 {
        let lo = r.max(0);
        let hi = (r + d).min(delta);
        (hi - lo).max(0).min(c)
    };
    // best[e]: most work from jobs released at or after e (0 <= e <= Δ)
    let n = delta as usize + 1;
    let mut best = vec![0i64; n + t as usize + 1];
    for e in (0..n).rev() {
        let skip = best[e + 1];
        let take = contrib(e as i64) + best[e + t as usize];
        best[e] = skip.max(take);
    }
    let lookup = |e: i64| -> i64 {
        if e >= delta {
            0
        } else {
            best[e as usize]
        }
    };
    let w = if carry_in {
        (-t..0)
            .map(|r0| contrib(r0) + lookup(r0 + t))
            .max()
            .unwrap_or(0)
    } else {
        lookup(0)
    };
    Ok(w as Time)
}

/// Every basic scenario over fixed arrivals: each job's execution time is
/// `C_i(ℓ)` for some `ℓ in 1..=L_i`. Yields `Π L_i^{n_i}` scenarios.
pub fn enumerate_basic_scenarios(
    ts: &TaskSet,
    horizon: Time,
    arrivals: &BTreeMap<TaskId, Vec<Time>>,
) -> Result<BasicScenarios, VerifyError> {
    let mut slots = Vec::new();
    for (id, times) in arrivals {
        let task = ts.get(*id).ok_or(VerifyError::ParameterTooLarge("unknown task"))?;
        for _ in times {
            slots.push((*id, task.criticality));
        }
    }
    if slots.len() > MAX_ENUMERATED_JOBS {
        return Err(VerifyError::ParameterTooLarge("too many jobs"));
    }
    let budgets = arrivals
        .keys()
        .map(|id| {
            let task = ts.get(*id).expect("checked above");
            (*id, (1..=task.criticality).map(|l| task.budget(l)).collect())
        })
        .collect();
    Ok(BasicScenarios {
        horizon,
        arrivals: arrivals.clone(),
        budgets,
        digits: vec![1; slots.len()],
        slots,
        dmcr: Vec::new(),
        done: false,
    })
}

/// Odometer over per-job levels; see [`enumerate_basic_scenarios`].
#[derive(Debug, Clone)]
pub struct BasicScenarios {
    horizon: Time,
    arrivals: BTreeMap<TaskId, Vec<Time>>,
    budgets: BTreeMap<TaskId, Vec<Time>>,
    slots: Vec<(TaskId, Level)>,
    digits: Vec<Level>,
    dmcr: Vec<DmcrRequest>,
    done: bool,
}

impl BasicScenarios {
    /// Attaches the same decreasing mode change requests to every scenario.
    pub fn with_dmcr(mut self, requests: Vec<DmcrRequest>) -> Self {
        self.dmcr = requests;
        self
    }

    pub fn total(&self) -> u64 {
        self.slots.iter().map(|s| u64::from(s.1)).product()
    }

    fn current(&self) -> Scenario {
        let mut tasks = BTreeMap::new();
        let mut pos = 0;
        for (id, times) in &self.arrivals {
            let budgets = &self.budgets[id];
            let exec_times = (0..times.len())
                .map(|n| budgets[self.digits[pos + n] as usize - 1])
                .collect();
            pos += times.len();
            tasks.insert(
                *id,
                TaskArrivals {
                    arrivals: times.clone(),
                    exec_times,
                },
            );
        }
        Scenario {
            horizon: self.horizon,
            tasks,
            dmcr_requests: self.dmcr.clone(),
        }
    }
}

impl Iterator for BasicScenarios {
    type Item = Scenario;

    fn next(&mut self) -> Option<Scenario> {
        if self.done {
            return None;
        }
        let out = self.current();
        let mut i = 0;
        loop {
            if i == self.digits.len() {
                self.done = true;
                break;
            }
            if self.digits[i] < self.slots[i].1 {
                self.digits[i] += 1;
                break;
            }
            self.digits[i] = 1;
            i += 1;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{workload_ci, workload_nc};

    #[test]
    fn matches_small_closed_form_examples() {
        let t = McTask::new(1, 10, 10, 1, &[3]);
        assert_eq!(brute_force_workload(&t, 25, 1, false).unwrap(), 9);
        assert_eq!(brute_force_workload(&t, 2, 1, false).unwrap(), 2);
        assert_eq!(brute_force_workload(&t, 12, 1, true).unwrap(), 6);
        assert_eq!(brute_force_workload(&t, 2, 1, true).unwrap(), 2);
    }

    #[test]
    fn exhaustive_agrees_with_closed_forms_for_implicit_deadlines() {
        for period in 1..=8 {
            for c in 1..=period {
                let t = McTask::new(1, period, period, 1, &[c]);
                for delta in 0..=30 {
                    assert_eq!(
                        brute_force_workload(&t, delta, 1, false).unwrap(),
                        workload_nc(&t, delta, 1).unwrap()
                    );
                    assert_eq!(
                        brute_force_workload(&t, delta, 1, true).unwrap(),
                        workload_ci(&t, delta, 1).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn guards() {
        let t = McTask::new(1, 100, 100, 1, &[3]);
        assert!(brute_force_workload(&t, 10, 1, false).is_err());
        let t = McTask::new(1, 10, 10, 1, &[3]);
        assert!(brute_force_workload(&t, 1000, 1, false).is_err());
    }

    #[test]
    fn enumerates_product_of_levels() {
        let ts = TaskSet::new(
            3,
            vec![McTask::new(1, 10, 10, 3, &[1, 2, 3]), McTask::new(2, 10, 10, 2, &[1, 2])],
        );
        let mut arr = BTreeMap::new();
        arr.insert(TaskId(1), vec![0, 10]);
        arr.insert(TaskId(2), vec![0]);
        let it = enumerate_basic_scenarios(&ts, 30, &arr).unwrap();
        assert_eq!(it.total(), 18);
        let all: Vec<Scenario> = it.collect();
        assert_eq!(all.len(), 18);
        assert!(all.iter().all(|s| s.is_basic(&ts)));
        let mut distinct: Vec<_> = all
            .iter()
            .map(|s| {
                s.tasks
                    .values()
                    .flat_map(|a| a.exec_times.clone())
                    .collect::<Vec<_>>()
            })
            .collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 18);
    }

    #[test]
    fn enumeration_guard() {
        let ts = TaskSet::new(2, vec![McTask::new(1, 1, 1, 2, &[1, 1])]);
        let mut arr = BTreeMap::new();
        arr.insert(TaskId(1), (0..13).collect());
        assert!(enumerate_basic_scenarios(&ts, 20, &arr).is_err());
    }
}
