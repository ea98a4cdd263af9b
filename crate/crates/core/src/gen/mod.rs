//! Seeded task set and scenario generation.
//!
//! All randomness comes from `XorShiftRng` (Marsaglia's 128-bit xorshift
//! with shifts 11, 8, 19) seeded through `SeedableRng::seed_from_u64`, so a
//! seed reproduces the same output on every platform. Parallel callers derive
//! independent streams with [`child_seed`].

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_xorshift::XorShiftRng;
use thiserror::Error;

use crate::model::{
    validate_taskset, DmcrRequest, Level, McTask, Platform, Scenario, TaskArrivals, TaskSet, Time,
};

/// Attempts before [`gen_taskset`] gives up.
pub const MAX_ATTEMPTS: u32 = 1000;
/// Allowed gap between the level-1 utilization and its target.
pub const UTILIZATION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(&'static str),
    #[error("no task set met the utilization target after {attempts} attempts")]
    Infeasible { attempts: u32 },
}

/// Stream derived from `(seed, index)` with the SplitMix64 finalizer.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> XorShiftRng {
    XorShiftRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CritDistribution {
    /// Every level in `1..=Λ` equally likely.
    Uniform,
    /// Relative weight of each level, lowest first.
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub tasks: usize,
    pub processors: u32,
    pub levels: Level,
    /// Target for `Σ C_i(1)/T_i`.
    pub utilization: f64,
    pub period_min: Time,
    pub period_max: Time,
    /// `D_i = ⌈ratio · T_i⌉` with `ratio` uniform in this range.
    pub deadline_ratio: (f64, f64),
    /// `C(ℓ+1) = ⌈factor · C(ℓ)⌉`, clamped to the deadline.
    pub wcet_factor: f64,
    pub criticality: CritDistribution,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            tasks: 6,
            processors: 2,
            levels: 2,
            utilization: 1.0,
            period_min: 10,
            period_max: 100,
            deadline_ratio: (1.0, 1.0),
            wcet_factor: 1.5,
            criticality: CritDistribution::Uniform,
            seed: 0,
        }
    }
}

impl GenParams {
    fn check(&self) -> Result<(), GenError> {
        if self.tasks == 0 {
            return Err(GenError::InvalidParams("no tasks"));
        }
        if self.processors == 0 {
            return Err(GenError::InvalidParams("no processors"));
        }
        if self.levels == 0 {
            return Err(GenError::InvalidParams("no criticality levels"));
        }
        if self.period_min == 0 || self.period_min > self.period_max {
            return Err(GenError::InvalidParams("period range"));
        }
        let (lo, hi) = self.deadline_ratio;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(GenError::InvalidParams("deadline ratio must lie in (0, 1]"));
        }
        if !(self.utilization > 0.0 && self.utilization <= self.tasks as f64) {
            return Err(GenError::InvalidParams("utilization must lie in (0, n]"));
        }
        if self.wcet_factor < 1.0 {
            return Err(GenError::InvalidParams("wcet factor below 1"));
        }
        if let CritDistribution::Weighted(w) = &self.criticality {
            if w.len() != self.levels as usize || w.iter().any(|x| *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(GenError::InvalidParams("criticality weights"));
            }
        }
        Ok(())
    }
}

/// UUniFast split of `total` into `n` shares.
fn uunifast(rng: &mut XorShiftRng, n: usize, total: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut sum = total;
    for i in 1..n {
        let r: f64 = rng.random();
        let next = sum * libm::pow(r, 1.0 / (n - i) as f64);
        out.push(sum - next);
        sum = next;
    }
    out.push(sum);
    out
}

fn pick_level(rng: &mut XorShiftRng, dist: &CritDistribution, levels: Level) -> Level {
    match dist {
        CritDistribution::Uniform => rng.random_range(1..=levels),
        CritDistribution::Weighted(w) => {
            let total: f64 = w.iter().sum();
            let mut x = rng.random::<f64>() * total;
            for (i, wi) in w.iter().enumerate() {
                if x < *wi {
                    return i as Level + 1;
                }
                x -= wi;
            }
            levels
        }
    }
}

/// Nudges level-1 budgets by one unit at a time towards the target.
fn fit_utilization(c: &mut [Time], periods: &[Time], deadlines: &[Time], target: f64) -> bool {
    let util = |c: &[Time]| -> f64 { c.iter().zip(periods).map(|(c, t)| *c as f64 / *t as f64).sum() };
    for _ in 0..(16 * c.len()) {
        let err = util(c) - target;
        if libm::fabs(err) <= UTILIZATION_TOLERANCE {
            return true;
        }
        let mut best: Option<(f64, usize)> = None;
        for i in 0..c.len() {
            let step = 1.0 / periods[i] as f64;
            let movable = if err > 0.0 { c[i] > 1 } else { c[i] < deadlines[i] };
            if !movable {
                continue;
            }
            let after = libm::fabs(if err > 0.0 { err - step } else { err + step });
            if after < libm::fabs(err) && best.is_none_or(|b| after < b.0) {
                best = Some((after, i));
            }
        }
        match best {
            Some((_, i)) if err > 0.0 => c[i] -= 1,
            Some((_, i)) => c[i] += 1,
            None => return false,
        }
    }
    false
}

/// Draws a validated task set whose level-1 utilization is within
/// [`UTILIZATION_TOLERANCE`] of the target.
pub fn gen_taskset(gp: &GenParams) -> Result<TaskSet, GenError> {
    gp.check()?;
    let platform = Platform::new(gp.processors).map_err(|_| GenError::InvalidParams("no processors"))?;
    let mut rng = rng(gp.seed);
    let n = gp.tasks;
    for _ in 0..MAX_ATTEMPTS {
        let shares = uunifast(&mut rng, n, gp.utilization);
        if shares.iter().any(|u| *u > 1.0) {
            continue;
        }
        let periods: Vec<Time> = (0..n)
            .map(|_| rng.random_range(gp.period_min..=gp.period_max))
            .collect();
        let deadlines: Vec<Time> = periods
            .iter()
            .map(|&t| {
                let ratio = if gp.deadline_ratio.0 < gp.deadline_ratio.1 {
                    rng.random_range(gp.deadline_ratio.0..=gp.deadline_ratio.1)
                } else {
                    gp.deadline_ratio.0
                };
                (libm::ceil(ratio * t as f64) as Time).clamp(1, t)
            })
            .collect();
        let mut c1: Vec<Time> = (0..n)
            .map(|i| {
                let c = libm::round(shares[i] * periods[i] as f64) as Time;
                c.clamp(1, deadlines[i])
            })
            .collect();
        if !fit_utilization(&mut c1, &periods, &deadlines, gp.utilization) {
            continue;
        }
        let tasks = (0..n)
            .map(|i| {
                let crit = pick_level(&mut rng, &gp.criticality, gp.levels);
                let mut wcet = Vec::with_capacity(crit as usize);
                wcet.push(c1[i]);
                for _ in 1..crit {
                    let prev = *wcet.last().unwrap() as f64;
                    wcet.push((libm::ceil(gp.wcet_factor * prev) as Time).min(deadlines[i]));
                }
                McTask::new(i as u32 + 1, periods[i], deadlines[i], crit, &wcet)
            })
            .collect();
        if let Ok(ts) = validate_taskset(TaskSet::new(gp.levels, tasks), &platform) {
            return Ok(ts);
        }
    }
    Err(GenError::Infeasible {
        attempts: MAX_ATTEMPTS,
    })
}

/// How exact execution times are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecModel {
    /// Uniform in `1..=C_i(L_i)`.
    Uniform,
    /// `C_i(ℓ)` for a level `ℓ` drawn uniformly from `1..=L_i`.
    BasicRandom,
    /// Every job stays within `C_i(min(level, L_i))`, except one early job
    /// of a task with `L_i > level`, which needs more than `C_i(level)` and
    /// so overruns the level-`level` budget once the system gets there.
    OverrunInjecting { level: Level },
}

/// Decreasing mode change requests attached to a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DmcrPlan {
    None,
    /// `count` requests at uniform instants in `[0, horizon)`, each targeting
    /// a level drawn from `1..Λ`.
    Random { count: usize },
    Fixed(Vec<DmcrRequest>),
}

/// Draws arrivals and execution times up to `horizon`.
///
/// Half of the tasks release their first job at 0, the rest at a uniform
/// offset below `T_i`. Each gap is `T_i`, or with probability 1/2 `T_i`
/// plus a uniform extra of at most `T_i / 2`.
pub fn gen_scenario(
    ts: &TaskSet,
    horizon: Time,
    seed: u64,
    exec_model: ExecModel,
    dmcr_plan: &DmcrPlan,
) -> Result<Scenario, GenError> {
    if let ExecModel::OverrunInjecting { level } = exec_model {
        if level == 0 || level >= ts.levels {
            return Err(GenError::InvalidParams("overrun level must lie in 1..Λ"));
        }
    }
    let mut rng = rng(seed);
    let mut tasks = BTreeMap::new();
    if horizon == 0 {
        return Ok(Scenario::empty(0));
    }
    for task in &ts.tasks {
        let mut arrivals = Vec::new();
        let mut t = if rng.random::<bool>() {
            0
        } else {
            rng.random_range(0..task.period)
        };
        while t < horizon {
            arrivals.push(t);
            let extra = if rng.random::<bool>() && task.period >= 2 {
                rng.random_range(1..=task.period / 2)
            } else {
                0
            };
            t += task.period + extra;
        }
        let exec_times = arrivals
            .iter()
            .map(|_| match exec_model {
                ExecModel::Uniform => rng.random_range(1..=task.max_budget()),
                ExecModel::BasicRandom => task.budget(rng.random_range(1..=task.criticality)),
                ExecModel::OverrunInjecting { level } => {
                    rng.random_range(1..=task.budget(level.min(task.criticality)))
                }
            })
            .collect();
        tasks.insert(task.id, TaskArrivals { arrivals, exec_times });
    }
    if let ExecModel::OverrunInjecting { level } = exec_model {
        // jobs released in the first half of the horizon that can overrun
        let candidates: Vec<(crate::model::TaskId, usize)> = ts
            .tasks
            .iter()
            .filter(|t| t.criticality > level && t.budget(level + 1) > t.budget(level))
            .flat_map(|t| {
                let arr = &tasks[&t.id];
                arr.arrivals
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| **a < horizon / 2 + 1)
                    .map(move |(n, _)| (t.id, n))
            })
            .collect();
        if !candidates.is_empty() {
            let (id, n) = candidates[rng.random_range(0..candidates.len())];
            let task = ts.get(id).expect("candidate task exists");
            let c = rng.random_range(task.budget(level) + 1..=task.budget(level + 1));
            tasks.get_mut(&id).expect("candidate arrivals").exec_times[n] = c;
        }
    }
    let dmcr_requests = match dmcr_plan {
        DmcrPlan::None => Vec::new(),
        DmcrPlan::Fixed(v) => v.clone(),
        DmcrPlan::Random { count } if ts.levels > 1 => {
            let mut v: Vec<DmcrRequest> = (0..*count)
                .map(|_| DmcrRequest {
                    time: rng.random_range(0..horizon),
                    target: rng.random_range(1..ts.levels),
                })
                .collect();
            v.sort_by_key(|r| r.time);
            v
        }
        DmcrPlan::Random { .. } => Vec::new(),
    };
    Ok(Scenario {
        horizon,
        tasks,
        dmcr_requests,
    })
}
