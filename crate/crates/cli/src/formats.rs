//! JSON task-set and scenario files, and the line-delimited trace format.

use std::collections::BTreeMap;

use mcsched_core::model::{
    validate_scenario, validate_taskset, DmcrRequest, Level, McTask, Platform, Scenario,
    TaskArrivals, TaskId, TaskSet, Time, ValidationError, ValidationErrors,
};
use mcsched_core::sim::{
    DropReason, EventKind, GhostEnd, GhostKind, Slot, Trace, TraceEvent,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(ValidationErrors),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        FormatError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    id: u32,
    #[serde(rename = "T")]
    period: Time,
    #[serde(rename = "D")]
    deadline: Time,
    #[serde(rename = "L")]
    criticality: Level,
    #[serde(rename = "C")]
    wcet: Vec<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSetFile {
    criticality_levels: Level,
    processors: u32,
    tasks: Vec<TaskEntry>,
}

/// Parses and validates a task-set document.
pub fn parse_taskset(text: &str) -> Result<(TaskSet, Platform), FormatError> {
    let file: TaskSetFile = serde_json::from_str(text)?;
    let tasks = file
        .tasks
        .into_iter()
        .map(|t| McTask::new(t.id, t.period, t.deadline, t.criticality, &t.wcet))
        .collect();
    let platform = Platform::new(file.processors)
        .map_err(|e| FormatError::Invalid(ValidationErrors(vec![e])))?;
    let ts = validate_taskset(TaskSet::new(file.criticality_levels, tasks), &platform)
        .map_err(FormatError::Invalid)?;
    Ok((ts, platform))
}

/// Writes `C` up to the task's own criticality; the parser pads it again.
pub fn serialize_taskset(ts: &TaskSet, platform: &Platform) -> String {
    let file = TaskSetFile {
        criticality_levels: ts.levels,
        processors: platform.processors,
        tasks: ts
            .tasks
            .iter()
            .map(|t| TaskEntry {
                id: t.id.0,
                period: t.period,
                deadline: t.deadline,
                criticality: t.criticality,
                wcet: (1..=t.criticality).map(|l| t.budget(l)).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("task set serializes") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrivalsEntry {
    arrivals: Vec<Time>,
    exec_times: Vec<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DmcrEntry {
    time: Time,
    target_level: Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    horizon: Time,
    tasks: BTreeMap<u32, ArrivalsEntry>,
    #[serde(default)]
    dmcr_requests: Vec<DmcrEntry>,
}

/// Parses a scenario without checking it against a task set.
pub fn parse_scenario_unchecked(text: &str) -> Result<Scenario, FormatError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    Ok(Scenario {
        horizon: file.horizon,
        tasks: file
            .tasks
            .into_iter()
            .map(|(id, a)| {
                (
                    TaskId(id),
                    TaskArrivals {
                        arrivals: a.arrivals,
                        exec_times: a.exec_times,
                    },
                )
            })
            .collect(),
        dmcr_requests: file
            .dmcr_requests
            .into_iter()
            .map(|r| DmcrRequest {
                time: r.time,
                target: r.target_level,
            })
            .collect(),
    })
}

pub fn parse_scenario(text: &str, ts: &TaskSet) -> Result<Scenario, FormatError> {
    let sc = parse_scenario_unchecked(text)?;
    validate_scenario(&sc, ts).map_err(FormatError::Invalid)?;
    Ok(sc)
}

pub fn serialize_scenario(sc: &Scenario) -> String {
    let file = ScenarioFile {
        horizon: sc.horizon,
        tasks: sc
            .tasks
            .iter()
            .map(|(id, a)| {
                (
                    id.0,
                    ArrivalsEntry {
                        arrivals: a.arrivals.clone(),
                        exec_times: a.exec_times.clone(),
                    },
                )
            })
            .collect(),
        dmcr_requests: sc
            .dmcr_requests
            .iter()
            .map(|r| DmcrEntry {
                time: r.time,
                target_level: r.target,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("scenario serializes") + "\n"
}

/// One trace line. Field order is the serialization order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t: Time,
    kind: String,
    task: Option<u32>,
    k: Option<u32>,
    proc: Option<u32>,
    mode: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    release: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deadline: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    exec: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rem: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slot_task: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slot_k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    to: Option<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ghost: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    budget: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    until: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deferred: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cursor: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tasks: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    criticality: Option<Level>,
}

fn ghost_name(kind: GhostKind) -> &'static str {
    match kind {
        GhostKind::WcetReclaim => "wcet-reclaim",
        GhostKind::WcrtSimulate => "wcrt-simulate",
    }
}

fn to_record(e: &TraceEvent) -> Record {
    let mut r = Record {
        t: e.time,
        kind: e.kind.name().to_string(),
        mode: e.mode,
        ..Record::default()
    };
    match &e.kind {
        EventKind::Release { task, k, deadline } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.deadline = Some(*deadline);
        }
        EventKind::Dispatch { task, k, proc, slot } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.proc = Some(*proc);
            match slot {
                Slot::Own => r.slot = Some("own".into()),
                Slot::Background => r.slot = Some("background".into()),
                Slot::Ghost { task, k } => {
                    r.slot = Some("ghost".into());
                    r.slot_task = Some(task.0);
                    r.slot_k = Some(*k);
                }
            }
        }
        EventKind::Preempt { task, k, proc } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.proc = Some(*proc);
        }
        EventKind::Complete {
            task,
            k,
            release,
            deadline,
            exec,
            rem,
            proc,
        } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.proc = *proc;
            r.release = Some(*release);
            r.deadline = Some(*deadline);
            r.exec = Some(*exec);
            r.rem = Some(*rem);
        }
        EventKind::BudgetExceeded { task, k, from, to } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.from = Some(Time::from(*from));
            r.to = Some(*to);
        }
        EventKind::JobDropped { task, k, reason } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.reason = Some(
                match reason {
                    DropReason::Suspended => "suspended",
                    DropReason::RemDropped => "rem-dropped",
                }
                .into(),
            );
        }
        EventKind::GhostCreated {
            task,
            k,
            kind,
            budget,
            until,
            level,
        } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.ghost = Some(ghost_name(*kind).into());
            r.budget = Some(*budget);
            r.until = Some(*until);
            r.level = Some(*level);
        }
        EventKind::GhostRemoved { task, k, reason } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.reason = Some(
                match reason {
                    GhostEnd::Exhausted => "exhausted",
                    GhostEnd::Expired => "expired",
                    GhostEnd::NoRemJobs => "no-rem-jobs",
                }
                .into(),
            );
        }
        EventKind::DmcrRequested { target, deferred } => {
            r.target = Some(*target);
            r.deferred = Some(*deferred);
        }
        EventKind::DmcrRejected { target } => r.target = Some(*target),
        EventKind::ChainStarted { target, chain } => {
            r.target = Some(*target);
            r.tasks = Some(chain.iter().map(|t| t.0).collect());
        }
        EventKind::ChainAdvance { task, k, cursor } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.cursor = Some(*cursor);
        }
        EventKind::ChainAborted { target, cursor } | EventKind::ChainStalled { target, cursor } => {
            r.target = Some(*target);
            r.cursor = Some(*cursor);
        }
        EventKind::ReEnabled { target, tasks } => {
            r.target = Some(*target);
            r.tasks = Some(tasks.iter().map(|t| t.0).collect());
        }
        EventKind::DeadlineMiss {
            task,
            k,
            criticality,
            rem,
        } => {
            r.task = Some(task.0);
            r.k = Some(*k);
            r.criticality = Some(*criticality);
            r.rem = Some(*rem);
        }
        EventKind::Idle { proc, from } => {
            r.proc = Some(*proc);
            r.from = Some(*from);
        }
        EventKind::End => {}
    }
    r
}

fn need<T>(v: Option<T>, field: &str) -> Result<T, String> {
    v.ok_or_else(|| format!("missing field `{field}`"))
}

fn from_record(r: Record) -> Result<TraceEvent, String> {
    let task = || need(r.task, "task").map(TaskId);
    let k = || need(r.k, "k");
    let kind = match r.kind.as_str() {
        "Release" => EventKind::Release {
            task: task()?,
            k: k()?,
            deadline: need(r.deadline, "deadline")?,
        },
        "Dispatch" => EventKind::Dispatch {
            task: task()?,
            k: k()?,
            proc: need(r.proc, "proc")?,
            slot: match need(r.slot.as_deref(), "slot")? {
                "own" => Slot::Own,
                "background" => Slot::Background,
                "ghost" => Slot::Ghost {
                    task: TaskId(need(r.slot_task, "slot_task")?),
                    k: need(r.slot_k, "slot_k")?,
                },
                other => return Err(format!("unknown slot `{other}`")),
            },
        },
        "Preempt" => EventKind::Preempt {
            task: task()?,
            k: k()?,
            proc: need(r.proc, "proc")?,
        },
        "Complete" => EventKind::Complete {
            task: task()?,
            k: k()?,
            release: need(r.release, "release")?,
            deadline: need(r.deadline, "deadline")?,
            exec: need(r.exec, "exec")?,
            rem: need(r.rem, "rem")?,
            proc: r.proc,
        },
        "BudgetExceeded" => EventKind::BudgetExceeded {
            task: task()?,
            k: k()?,
            from: Level::try_from(need(r.from, "from")?).map_err(|e| e.to_string())?,
            to: need(r.to, "to")?,
        },
        "JobDropped" => EventKind::JobDropped {
            task: task()?,
            k: k()?,
            reason: match need(r.reason.as_deref(), "reason")? {
                "suspended" => DropReason::Suspended,
                "rem-dropped" => DropReason::RemDropped,
                other => return Err(format!("unknown drop reason `{other}`")),
            },
        },
        "GhostCreated" => EventKind::GhostCreated {
            task: task()?,
            k: k()?,
            kind: match need(r.ghost.as_deref(), "ghost")? {
                "wcet-reclaim" => GhostKind::WcetReclaim,
                "wcrt-simulate" => GhostKind::WcrtSimulate,
                other => return Err(format!("unknown ghost kind `{other}`")),
            },
            budget: need(r.budget, "budget")?,
            until: need(r.until, "until")?,
            level: need(r.level, "level")?,
        },
        "GhostRemoved" => EventKind::GhostRemoved {
            task: task()?,
            k: k()?,
            reason: match need(r.reason.as_deref(), "reason")? {
                "exhausted" => GhostEnd::Exhausted,
                "expired" => GhostEnd::Expired,
                "no-rem-jobs" => GhostEnd::NoRemJobs,
                other => return Err(format!("unknown ghost end `{other}`")),
            },
        },
        "DmcrRequested" => EventKind::DmcrRequested {
            target: need(r.target, "target")?,
            deferred: need(r.deferred, "deferred")?,
        },
        "DmcrRejected" => EventKind::DmcrRejected {
            target: need(r.target, "target")?,
        },
        "ChainStarted" => EventKind::ChainStarted {
            target: need(r.target, "target")?,
            chain: need(r.tasks.clone(), "tasks")?.into_iter().map(TaskId).collect(),
        },
        "ChainAdvance" => EventKind::ChainAdvance {
            task: task()?,
            k: k()?,
            cursor: need(r.cursor, "cursor")?,
        },
        "ChainAborted" => EventKind::ChainAborted {
            target: need(r.target, "target")?,
            cursor: need(r.cursor, "cursor")?,
        },
        "ChainStalled" => EventKind::ChainStalled {
            target: need(r.target, "target")?,
            cursor: need(r.cursor, "cursor")?,
        },
        "ReEnabled" => EventKind::ReEnabled {
            target: need(r.target, "target")?,
            tasks: need(r.tasks.clone(), "tasks")?.into_iter().map(TaskId).collect(),
        },
        "DeadlineMiss" => EventKind::DeadlineMiss {
            task: task()?,
            k: k()?,
            criticality: need(r.criticality, "criticality")?,
            rem: need(r.rem, "rem")?,
        },
        "Idle" => EventKind::Idle {
            proc: need(r.proc, "proc")?,
            from: need(r.from, "from")?,
        },
        "End" => EventKind::End,
        other => return Err(format!("unknown event kind `{other}`")),
    };
    Ok(TraceEvent {
        time: r.t,
        mode: r.mode,
        kind,
    })
}

pub fn serialize_event(e: &TraceEvent) -> String {
    serde_json::to_string(&to_record(e)).expect("trace record serializes")
}

/// One JSON object per line, in event order.
pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    for e in trace.iter() {
        out.push_str(&serialize_event(e));
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Trace, FormatError> {
    let mut trace = Trace::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| FormatError::Syntax {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let event = from_record(record).map_err(|message| FormatError::Record {
            line: i + 1,
            message,
        })?;
        trace.events.push(event);
    }
    Ok(trace)
}

/// Whether a format error is a validation failure of the given kind.
pub fn is_validation(err: &FormatError, pred: impl Fn(&ValidationError) -> bool) -> bool {
    matches!(err, FormatError::Invalid(errs) if errs.contains(pred))
}
