//! Batch runs: many scenarios under several protocols, simulated and checked,
//! summarized one CSV row per (scenario, protocol).

use std::path::{Path, PathBuf};

use mcsched_core::analysis::{opa_assign, AnalysisConfig, PriorityAssignment, WcrtTable};
use mcsched_core::gen::{
    child_seed, gen_scenario, gen_taskset, CritDistribution, DmcrPlan, ExecModel, GenError,
    GenParams,
};
use mcsched_core::model::{Level, Platform, Scenario, TaskSet, Time};
use mcsched_core::sim::{simulate, ImcrProtocol, ProtocolConfig, RemOrder, SimError, Trace};
use mcsched_core::verify::{check_all, metrics, VerifyError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{parse_taskset, serialize_trace, FormatError};

pub const CSV_HEADER: [&str; 11] = [
    "protocol",
    "seed",
    "scenario_id",
    "misses_hi",
    "misses_enabled",
    "rem_completed",
    "rem_dropped",
    "mean_tardiness",
    "max_tardiness",
    "mean_susp_delay",
    "chain_aborts",
];

/// Tries per requested task set before generation gives up.
const GEN_TRIES_PER_SET: usize = 200;

const TASKSET_STREAM: u64 = 0;
const SCENARIO_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("generation failed: {0}")]
    Gen(#[from] GenError),
    #[error("scenario {scenario}, {protocol}: {source}")]
    Sim {
        scenario: u64,
        protocol: &'static str,
        source: SimError,
    },
    #[error("scenario {scenario}, {protocol}: {source}")]
    Verify {
        scenario: u64,
        protocol: &'static str,
        source: VerifyError,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSpec {
    pub tasks: usize,
    pub processors: u32,
    pub levels: Level,
    pub utilization: f64,
    pub period_min: Time,
    pub period_max: Time,
    pub deadline_ratio: (f64, f64),
    pub wcet_factor: f64,
    /// Relative weight of each criticality level; uniform when absent.
    pub criticality_weights: Option<Vec<f64>>,
}

impl Default for GenSpec {
    fn default() -> Self {
        let gp = GenParams::default();
        Self {
            tasks: gp.tasks,
            processors: gp.processors,
            levels: gp.levels,
            utilization: gp.utilization,
            period_min: gp.period_min,
            period_max: gp.period_max,
            deadline_ratio: gp.deadline_ratio,
            wcet_factor: gp.wcet_factor,
            criticality_weights: None,
        }
    }
}

impl GenSpec {
    pub fn params(&self, seed: u64) -> GenParams {
        GenParams {
            tasks: self.tasks,
            processors: self.processors,
            levels: self.levels,
            utilization: self.utilization,
            period_min: self.period_min,
            period_max: self.period_max,
            deadline_ratio: self.deadline_ratio,
            wcet_factor: self.wcet_factor,
            criticality: match &self.criticality_weights {
                Some(w) => CritDistribution::Weighted(w.clone()),
                None => CritDistribution::Uniform,
            },
            seed,
        }
    }
}

/// The experiment file. Exactly one of `taskset` and `gen` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub taskset: Option<PathBuf>,
    #[serde(default)]
    pub gen: Option<GenSpec>,
    /// Number of schedulable sets to generate with `gen`.
    #[serde(default = "one")]
    pub tasksets: usize,
    /// Scenarios per task set.
    pub scenarios: usize,
    #[serde(default = "all_protocols")]
    pub protocols: Vec<String>,
    /// Defaults to 20 times the largest period of each set.
    #[serde(default)]
    pub horizon: Option<Time>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// `uniform`, `basic`, `overrun` or `mixed`.
    #[serde(default = "mixed")]
    pub exec_model: String,
    #[serde(default)]
    pub dmcr_count: usize,
    #[serde(default = "crit_edf")]
    pub rem_order: String,
    #[serde(default = "yes")]
    pub cap: bool,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn mixed() -> String {
    "mixed".into()
}
fn crit_edf() -> String {
    RemOrder::CritThenEdf.name().into()
}
fn all_protocols() -> Vec<String> {
    ImcrProtocol::ALL.iter().map(|p| p.name().to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecChoice {
    Uniform,
    Basic,
    Overrun,
    /// Cycles uniform, basic and overrun-injecting by scenario index.
    Mixed,
}

impl ExecChoice {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Self::Uniform),
            "basic" => Some(Self::Basic),
            "overrun" => Some(Self::Overrun),
            "mixed" => Some(Self::Mixed),
            _ => None,
        }
    }

    /// Overrun injection targets level `1 + (j mod (Λ-1))`; with a single
    /// level it falls back to uniform draws.
    pub fn model(self, scenario: u64, levels: Level) -> ExecModel {
        let overrun = |j: u64| {
            if levels > 1 {
                ExecModel::OverrunInjecting {
                    level: 1 + (j % u64::from(levels - 1)) as Level,
                }
            } else {
                ExecModel::Uniform
            }
        };
        match self {
            Self::Uniform => ExecModel::Uniform,
            Self::Basic => ExecModel::BasicRandom,
            Self::Overrun => overrun(scenario),
            Self::Mixed => match scenario % 3 {
                0 => ExecModel::Uniform,
                1 => ExecModel::BasicRandom,
                _ => overrun(scenario / 3),
            },
        }
    }
}

/// A task set together with the analysis output the simulator needs.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub ts: TaskSet,
    pub platform: Platform,
    pub priorities: PriorityAssignment,
    pub wcrt: WcrtTable,
}

impl PreparedSet {
    /// `None` if the set is not schedulable.
    pub fn analyze(ts: TaskSet, platform: Platform, cap: bool) -> Option<Self> {
        let res = opa_assign(&ts, platform.processors, AnalysisConfig { cap });
        if !res.is_schedulable() {
            return None;
        }
        Some(Self {
            ts,
            platform,
            priorities: res.priorities,
            wcrt: res.wcrt,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenarios: usize,
    pub protocols: Vec<ImcrProtocol>,
    pub horizon: Option<Time>,
    pub seed: u64,
    pub exec: ExecChoice,
    pub dmcr_count: usize,
    pub rem_order: RemOrder,
    pub cap: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenarios: 1,
            protocols: ImcrProtocol::ALL.to_vec(),
            horizon: None,
            seed: 0,
            exec: ExecChoice::Mixed,
            dmcr_count: 0,
            rem_order: RemOrder::default(),
            cap: true,
        }
    }
}

/// Outcome of one (scenario, protocol) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub protocol: ImcrProtocol,
    pub seed: u64,
    pub scenario_id: u64,
    pub set: usize,
    pub misses_hi: usize,
    pub misses_enabled: usize,
    pub rem_completed: usize,
    pub rem_dropped: usize,
    /// Sum of `f - r` over completed rem-jobs.
    pub rem_completion_total: Time,
    pub mean_tardiness: Option<f64>,
    pub max_tardiness: Option<Time>,
    pub mean_susp_delay: Option<f64>,
    pub chain_aborts: usize,
    pub checks: Vec<CheckSummary>,
}

/// One checker's result for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckSummary {
    pub check: &'static str,
    pub checked: usize,
    pub excluded: usize,
    pub findings: Vec<String>,
}

impl Row {
    pub fn is_clean(&self) -> bool {
        self.checks.iter().all(|c| c.findings.is_empty())
    }

    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.check == name)
    }

    /// Every finding, as `check: finding`.
    pub fn findings(&self) -> impl Iterator<Item = String> + '_ {
        self.checks
            .iter()
            .flat_map(|c| c.findings.iter().map(move |f| format!("{}: {f}", c.check)))
    }

    fn csv_record(&self) -> [String; 11] {
        let f = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.4}"));
        [
            self.protocol.name().to_string(),
            self.seed.to_string(),
            self.scenario_id.to_string(),
            self.misses_hi.to_string(),
            self.misses_enabled.to_string(),
            self.rem_completed.to_string(),
            self.rem_dropped.to_string(),
            f(self.mean_tardiness),
            self.max_tardiness.map_or(String::new(), |v| v.to_string()),
            f(self.mean_susp_delay),
            self.chain_aborts.to_string(),
        ]
    }
}

pub fn scenario_seed(seed: u64, scenario_id: u64) -> u64 {
    child_seed(child_seed(seed, SCENARIO_STREAM), scenario_id)
}

pub fn horizon_for(ts: &TaskSet, fixed: Option<Time>) -> Time {
    fixed.unwrap_or(20 * ts.max_period())
}

pub fn scenario_for(
    set: &PreparedSet,
    cfg: &RunConfig,
    scenario_id: u64,
) -> Result<Scenario, GenError> {
    gen_scenario(
        &set.ts,
        horizon_for(&set.ts, cfg.horizon),
        scenario_seed(cfg.seed, scenario_id),
        cfg.exec.model(scenario_id, set.ts.levels),
        &DmcrPlan::Random {
            count: cfg.dmcr_count,
        },
    )
}

/// Simulates and checks one scenario under one protocol.
pub fn run_one(
    set: &PreparedSet,
    scenario: &Scenario,
    protocol: ImcrProtocol,
    cfg: &RunConfig,
) -> Result<(Trace, Vec<CheckSummary>), ExperimentError> {
    let pc = ProtocolConfig {
        imcr_protocol: protocol,
        rem_order: cfg.rem_order,
        cap_enabled: cfg.cap,
    };
    let trace = simulate(&set.ts, &set.platform, &set.priorities, &set.wcrt, scenario, &pc)
        .map_err(|source| ExperimentError::Sim {
            scenario: 0,
            protocol: protocol.name(),
            source,
        })?;
    let reports = check_all(
        &trace,
        &set.ts,
        &set.platform,
        &set.priorities,
        &set.wcrt,
        Some(scenario),
        protocol,
    )
    .map_err(|source| ExperimentError::Verify {
        scenario: 0,
        protocol: protocol.name(),
        source,
    })?;
    let checks = reports
        .into_iter()
        .map(|r| CheckSummary {
            check: r.check,
            checked: r.checked,
            excluded: r.excluded,
            findings: r.findings.iter().map(ToString::to_string).collect(),
        })
        .collect();
    Ok((trace, checks))
}

fn with_scenario(e: ExperimentError, id: u64) -> ExperimentError {
    match e {
        ExperimentError::Sim { protocol, source, .. } => ExperimentError::Sim {
            scenario: id,
            protocol,
            source,
        },
        ExperimentError::Verify { protocol, source, .. } => ExperimentError::Verify {
            scenario: id,
            protocol,
            source,
        },
        other => other,
    }
}

/// Runs every (scenario, protocol) pair. Scenario ids are global:
/// set `s` owns ids `s·n .. (s+1)·n`. Rows come back ordered by scenario id,
/// then by protocol as listed in `cfg`. Traces of runs with findings are
/// passed to `on_violation`.
pub fn run(
    sets: &[PreparedSet],
    cfg: &RunConfig,
    on_violation: &(dyn Fn(&Row, &Trace) + Sync),
) -> Result<Vec<Row>, ExperimentError> {
    let n = cfg.scenarios as u64;
    let ids: Vec<(usize, u64)> = (0..sets.len())
        .flat_map(|s| (0..n).map(move |j| (s, s as u64 * n + j)))
        .collect();
    let chunks: Result<Vec<Vec<Row>>, ExperimentError> = ids
        .par_iter()
        .map(|&(s, id)| {
            let set = &sets[s];
            let sc = scenario_for(set, cfg, id)?;
            let mut rows = Vec::with_capacity(cfg.protocols.len());
            for &p in &cfg.protocols {
                let (trace, checks) = run_one(set, &sc, p, cfg).map_err(|e| with_scenario(e, id))?;
                let m = metrics(&trace, &set.ts).map_err(|source| ExperimentError::Verify {
                    scenario: id,
                    protocol: p.name(),
                    source,
                })?;
                let row = Row {
                    protocol: p,
                    seed: scenario_seed(cfg.seed, id),
                    scenario_id: id,
                    set: s,
                    misses_hi: m.misses_at_or_above(set.ts.levels),
                    misses_enabled: m.misses_enabled,
                    rem_completed: m.rem_completed,
                    rem_dropped: m.rem_dropped,
                    rem_completion_total: m.rem_completion.iter().sum(),
                    mean_tardiness: m.mean_tardiness(),
                    max_tardiness: m.max_tardiness(),
                    mean_susp_delay: m.mean_suspension_delay(),
                    chain_aborts: m.chain_aborts,
                    checks,
                };
                if !row.is_clean() {
                    on_violation(&row, &trace);
                }
                rows.push(row);
            }
            Ok(rows)
        })
        .collect();
    // par_iter().collect() keeps input order, which is already the row order
    Ok(chunks?.into_iter().flatten().collect())
}

pub fn write_csv<W: std::io::Write>(rows: &[Row], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// Generates `count` schedulable sets, skipping unschedulable draws.
pub fn generate_sets(
    gen: &GenSpec,
    count: usize,
    seed: u64,
    cap: bool,
) -> Result<Vec<PreparedSet>, ExperimentError> {
    let platform = Platform::new(gen.processors)
        .map_err(|e| ExperimentError::Spec(e.to_string()))?;
    let base = child_seed(seed, TASKSET_STREAM);
    let mut out = Vec::with_capacity(count);
    let limit = count.saturating_mul(GEN_TRIES_PER_SET) as u64;
    let mut i = 0u64;
    while out.len() < count {
        if i >= limit {
            return Err(ExperimentError::Spec(format!(
                "only {} of {count} generated task sets were schedulable after {limit} draws",
                out.len()
            )));
        }
        let ts = gen_taskset(&gen.params(child_seed(base, i)))?;
        if let Some(p) = PreparedSet::analyze(ts, platform, cap) {
            out.push(p);
        }
        i += 1;
    }
    Ok(out)
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn run_config(&self) -> Result<RunConfig, ExperimentError> {
        if self.scenarios == 0 {
            return Err(ExperimentError::Spec("scenario count must be at least 1".into()));
        }
        if self.protocols.is_empty() {
            return Err(ExperimentError::Spec("at least one protocol is required".into()));
        }
        let protocols = self
            .protocols
            .iter()
            .map(|p| {
                ImcrProtocol::from_name(p)
                    .ok_or_else(|| ExperimentError::Spec(format!("unknown protocol `{p}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RunConfig {
            scenarios: self.scenarios,
            protocols,
            horizon: self.horizon,
            seed: self.seed,
            exec: ExecChoice::from_name(&self.exec_model).ok_or_else(|| {
                ExperimentError::Spec(format!("unknown exec model `{}`", self.exec_model))
            })?,
            dmcr_count: self.dmcr_count,
            rem_order: RemOrder::from_name(&self.rem_order).ok_or_else(|| {
                ExperimentError::Spec(format!("unknown rem order `{}`", self.rem_order))
            })?,
            cap: self.cap,
        })
    }

    /// Loads or generates the task sets; relative paths resolve against
    /// `base`. A given set that is unschedulable is an error.
    pub fn task_sets(&self, base: &Path) -> Result<Vec<PreparedSet>, ExperimentError> {
        match (&self.taskset, &self.gen) {
            (Some(path), None) => {
                let path = base.join(path);
                let text = std::fs::read_to_string(&path).map_err(|source| ExperimentError::Io {
                    path: path.clone(),
                    source,
                })?;
                let (ts, platform) =
                    parse_taskset(&text).map_err(|source| ExperimentError::Format {
                        path: path.clone(),
                        source,
                    })?;
                let set = PreparedSet::analyze(ts, platform, self.cap).ok_or_else(|| {
                    ExperimentError::Spec(format!("{} is not schedulable", path.display()))
                })?;
                Ok(vec![set])
            }
            (None, Some(gen)) => {
                if self.tasksets == 0 {
                    return Err(ExperimentError::Spec("task set count must be at least 1".into()));
                }
                generate_sets(gen, self.tasksets, self.seed, self.cap)
            }
            _ => Err(ExperimentError::Spec(
                "give exactly one of `taskset` and `gen`".into(),
            )),
        }
    }
}

pub fn trace_file_name(row: &Row) -> String {
    format!("trace-{}-{}.jsonl", row.scenario_id, row.protocol.name())
}

pub fn write_violation_trace(dir: &Path, row: &Row, trace: &Trace) -> std::io::Result<()> {
    std::fs::write(dir.join(trace_file_name(row)), serialize_trace(trace))
}
