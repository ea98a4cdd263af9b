//! Human-readable and JSON renderings of analysis and checker results.

use std::fmt::Write as _;

use mcsched_core::analysis::{AnalysisResult, Verdict};
use mcsched_core::model::TaskSet;
use mcsched_core::verify::{Report, TraceMetrics};
use serde_json::{json, Value};

pub fn analysis_text(ts: &TaskSet, processors: u32, res: &AnalysisResult) -> String {
    let mut out = String::new();
    match &res.verdict {
        Verdict::Schedulable => {
            let _ = writeln!(out, "verdict: schedulable on {processors} processor(s)");
        }
        Verdict::Unschedulable { residual, failures } => {
            let _ = writeln!(out, "verdict: unschedulable on {processors} processor(s)");
            let ids: Vec<String> = residual.iter().map(|t| t.to_string()).collect();
            let _ = writeln!(out, "no task of {{{}}} fits the next free rank", ids.join(", "));
            for (task, level) in failures {
                let _ = writeln!(out, "  task {task}: response time exceeds D at level {level}");
            }
        }
    }
    let _ = writeln!(out, "rank  task  L  R(1..L)");
    let mut ranked: Vec<_> = ts
        .tasks
        .iter()
        .filter_map(|t| res.priorities.rank(t.id).map(|r| (r, t)))
        .collect();
    ranked.sort_by_key(|(r, _)| *r);
    for (rank, t) in ranked {
        let rs: Vec<String> = (1..=t.criticality)
            .map(|l| res.wcrt.get(t.id, l).map_or("-".into(), |r| r.to_string()))
            .collect();
        let _ = writeln!(out, "{rank:>4}  {:>4}  {}  {}", t.id, t.criticality, rs.join(" "));
    }
    out
}

pub fn analysis_json(ts: &TaskSet, processors: u32, res: &AnalysisResult) -> Value {
    let tasks: Vec<Value> = ts
        .tasks
        .iter()
        .map(|t| {
            let wcrt: Vec<Value> = (1..=t.criticality)
                .map(|l| res.wcrt.get(t.id, l).map_or(Value::Null, Value::from))
                .collect();
            json!({"id": t.id.0, "rank": res.priorities.rank(t.id), "wcrt": wcrt})
        })
        .collect();
    let (verdict, residual, failures) = match &res.verdict {
        Verdict::Schedulable => ("schedulable", vec![], vec![]),
        Verdict::Unschedulable { residual, failures } => (
            "unschedulable",
            residual.iter().map(|t| t.0).collect(),
            failures.iter().map(|(t, l)| json!({"task": t.0, "level": l})).collect(),
        ),
    };
    json!({
        "verdict": verdict,
        "processors": processors,
        "tasks": tasks,
        "residual": residual,
        "failures": failures,
    })
}

pub fn check_text(reports: &[Report]) -> String {
    let mut out = String::new();
    for r in reports {
        let status = if r.is_clean() { "ok" } else { "VIOLATED" };
        let _ = writeln!(
            out,
            "{:<16} {status:<8} checked {} excluded {} findings {}",
            r.check,
            r.checked,
            r.excluded,
            r.findings.len()
        );
        for f in &r.findings {
            let _ = writeln!(out, "  {f}");
        }
    }
    out
}

pub fn check_json(reports: &[Report]) -> Value {
    Value::Array(
        reports
            .iter()
            .map(|r| {
                json!({
                    "check": r.check,
                    "checked": r.checked,
                    "excluded": r.excluded,
                    "findings": r.findings.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
                })
            })
            .collect(),
    )
}

pub fn metrics_text(m: &TraceMetrics) -> String {
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
    let mut out = String::new();
    let _ = writeln!(out, "horizon {}", m.horizon);
    for (id, r) in &m.responses {
        let _ = writeln!(
            out,
            "task {id}: {} completed, max response {}, mean {:.2}",
            r.completed, r.max, r.mean
        );
    }
    let misses: Vec<String> = m
        .misses_by_criticality
        .iter()
        .map(|(l, n)| format!("L{l}:{n}"))
        .collect();
    let _ = writeln!(
        out,
        "deadline misses {} (enabled {})",
        if misses.is_empty() { "0".into() } else { misses.join(" ") },
        m.misses_enabled
    );
    let _ = writeln!(
        out,
        "mode increases {}, re-enables {}, chain aborts {}",
        m.imcr_count, m.reenable_count, m.chain_aborts
    );
    let _ = writeln!(
        out,
        "rem-jobs completed {}, dropped {}, mean completion {}, mean tardiness {}",
        m.rem_completed,
        m.rem_dropped,
        opt(m.mean_rem_completion()),
        opt(m.mean_tardiness())
    );
    let _ = writeln!(out, "mean suspension delay {}", opt(m.mean_suspension_delay()));
    out
}
