//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines always appear in `cargo test` output.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use mcsched::experiment::{self, csv_string, ExecChoice, PreparedSet, Row, RunConfig};
use mcsched::formats::serialize_trace;
use mcsched_core::analysis::{
    opa_assign, opa_assign_with_order, workload_ci, workload_nc, wcrt_for_priorities,
    AnalysisConfig, PriorityAssignment,
};
use mcsched_core::gen::{child_seed, gen_scenario, gen_taskset, rng, DmcrPlan, ExecModel, GenParams};
use mcsched_core::model::{
    validate_taskset, DmcrRequest, Level, McTask, Platform, Scenario, TaskId, TaskSet, Time,
};
use mcsched_core::sim::{simulate, EventKind, ImcrProtocol, ProtocolConfig, Trace};
use mcsched_core::verify::{brute_force_workload, check_all, enumerate_basic_scenarios};
use rand::Rng;
use rayon::prelude::*;

const SEED: u64 = 0x5EED_2024;

type Outcome = Result<String, String>;

/// Levels, tasks in priority order, and an expected `(task, level, R)`.
type UniCase = (Level, Vec<McTask>, Option<(u32, Level, Time)>);

fn gen_params(tasks: usize, processors: u32, levels: Level, utilization: f64, period: (Time, Time), seed: u64) -> GenParams {
    GenParams {
        tasks,
        processors,
        levels,
        utilization,
        period_min: period.0,
        period_max: period.1,
        seed,
        ..GenParams::default()
    }
}

fn random_task(r: &mut impl Rng, id: u32) -> McTask {
    let levels: Level = r.random_range(1..=3);
    let period = r.random_range(1..=12);
    let deadline = r.random_range(1..=period);
    let crit = r.random_range(1..=levels);
    let mut wcet = vec![r.random_range(1..=deadline)];
    for _ in 1..crit {
        let prev = *wcet.last().unwrap();
        wcet.push(r.random_range(prev..=deadline));
    }
    let top = *wcet.last().unwrap();
    wcet.resize(levels as usize, top);
    McTask::new(id, period, deadline, crit, &wcet)
}

fn dominance() -> Outcome {
    let mut r = rng(child_seed(SEED, 1));
    let mut checked = 0usize;
    let mut tight = 0usize;
    for id in 0..200 {
        let t = random_task(&mut r, id);
        for level in 1..=t.wcet.len() as Level {
            for delta in 0..=40 {
                let nc = workload_nc(&t, delta, level).map_err(|e| e.to_string())?;
                let ci = workload_ci(&t, delta, level).map_err(|e| e.to_string())?;
                let bnc = brute_force_workload(&t, delta, level, false).map_err(|e| e.to_string())?;
                let bci = brute_force_workload(&t, delta, level, true).map_err(|e| e.to_string())?;
                if nc < bnc || ci < bci {
                    return Err(format!(
                        "task {t:?} level {level} window {delta}: NC {nc} vs {bnc}, CI {ci} vs {bci}"
                    ));
                }
                tight += usize::from(nc == bnc) + usize::from(ci == bci);
                checked += 2;
            }
        }
    }
    Ok(format!("{checked} bounds checked against exhaustive search, {tight} exact"))
}

/// Classical uniprocessor response time: least fixed point of
/// `R = C_i + Σ_hp ⌈R / T_j⌉ C_j`.
fn classical_rta(c: Time, hp: &[(Time, Time)], deadline: Time) -> Option<Time> {
    let mut r = c;
    loop {
        let next = c + hp.iter().map(|&(t, cj)| r.div_ceil(t) * cj).sum::<Time>();
        if next > deadline {
            return None;
        }
        if next == r {
            return Some(r);
        }
        r = next;
    }
}

fn uniprocessor() -> Outcome {
    let cases: Vec<UniCase> = vec![
        (
            1,
            vec![McTask::new(1, 10, 10, 1, &[2]), McTask::new(2, 10, 10, 1, &[3])],
            Some((2, 1, 5)),
        ),
        (
            1,
            vec![
                McTask::new(1, 5, 5, 1, &[1]),
                McTask::new(2, 8, 8, 1, &[2]),
                McTask::new(3, 20, 20, 1, &[5]),
            ],
            Some((3, 1, 12)),
        ),
        (
            2,
            vec![
                McTask::new(1, 10, 10, 2, &[1, 3]),
                McTask::new(2, 15, 15, 2, &[2, 4]),
                McTask::new(3, 30, 30, 1, &[6]),
            ],
            None,
        ),
    ];
    let platform = Platform::new(1).unwrap();
    let mut compared = 0;
    for (levels, tasks, expect) in cases {
        let ts = validate_taskset(TaskSet::new(levels, tasks), &platform).map_err(|e| e.to_string())?;
        let order: Vec<TaskId> = ts.tasks.iter().map(|t| t.id).collect();
        let prio = PriorityAssignment::from_order(&order);
        let table = wcrt_for_priorities(&ts, &prio, 1, AnalysisConfig::default())
            .map_err(|e| e.to_string())?;
        for (i, t) in ts.tasks.iter().enumerate() {
            for l in 1..=t.criticality {
                let hp: Vec<(Time, Time)> =
                    ts.tasks[..i].iter().map(|h| (h.period, h.budget(l))).collect();
                let oracle = classical_rta(t.budget(l), &hp, t.deadline);
                let got = table.get(t.id, l);
                if got != oracle {
                    return Err(format!("task {} level {l}: analysis {got:?}, classical {oracle:?}", t.id));
                }
                compared += 1;
            }
        }
        if let Some((task, level, r)) = expect {
            let got = table.get(TaskId(task), level);
            if got != Some(r) {
                return Err(format!("R_{task}({level}) = {got:?}, expected {r}"));
            }
        }
    }
    Ok(format!("{compared} response times equal the classical recurrence"))
}

/// Schedulable sets over the criterion ranges: n ≤ 8, m ∈ {2, 3}, Λ ≤ 4.
fn sweep_sets(count: usize) -> Vec<PreparedSet> {
    let base = child_seed(SEED, 3);
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let n = 2 + (i % 7) as usize;
        let m = 2 + ((i / 7) % 2) as u32;
        let levels = 1 + ((i / 14) % 4) as Level;
        let frac = 0.25 + 0.5 * ((i as f64 * 0.618_033_988_7).fract());
        let u = (frac * m as f64).min(0.9 * n as f64);
        let gp = gen_params(n, m, levels, u, (5, 40), child_seed(base, i));
        i += 1;
        let Ok(ts) = gen_taskset(&gp) else { continue };
        if let Some(p) = PreparedSet::analyze(ts, Platform::new(m).unwrap(), true) {
            out.push(p);
        }
    }
    out
}

struct Sweep {
    sets: usize,
    rows: Vec<Row>,
}

fn findings_in(rows: &[Row], check: &str, protocol: Option<ImcrProtocol>) -> (usize, usize, Vec<String>) {
    let mut checked = 0;
    let mut found = Vec::new();
    for r in rows.iter().filter(|r| protocol.is_none_or(|p| r.protocol == p)) {
        if let Some(c) = r.check(check) {
            checked += c.checked;
            for f in &c.findings {
                found.push(format!("scenario {} {}: {f}", r.scenario_id, r.protocol.name()));
            }
        }
    }
    (checked, found.len(), found)
}

fn first(found: &[String]) -> String {
    found.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
}

fn soundness(s: &Sweep) -> Outcome {
    let (fc, fn_, ff) = findings_in(&s.rows, "feasibility", None);
    let (pc, pn, pf) = findings_in(&s.rows, "periodicity", None);
    let overruns: usize = s.rows.iter().filter(|r| r.rem_completed + r.rem_dropped > 0).count();
    if fn_ + pn > 0 {
        return Err(format!(
            "{fn_} feasibility and {pn} periodicity violations: {}",
            first(&ff.into_iter().chain(pf).collect::<Vec<_>>())
        ));
    }
    Ok(format!(
        "{} sets, {} runs, {fc} jobs and {pc} releases checked, {overruns} runs with rem-jobs",
        s.sets,
        s.rows.len()
    ))
}

fn response_bounds(s: &Sweep) -> Outcome {
    let (checked, n, found) = findings_in(&s.rows, "response-bounds", Some(ImcrProtocol::WcrtSimulate));
    if n > 0 {
        return Err(format!("{n} violations: {}", first(&found)));
    }
    if checked == 0 {
        return Err("no jobs were checked".into());
    }
    Ok(format!("{checked} within-interval jobs under wcrt-simulate"))
}

fn reclaim_accounting(s: &Sweep) -> Outcome {
    let (checked, n, found) = findings_in(&s.rows, "ghosts", Some(ImcrProtocol::WcetReclaim));
    if n > 0 {
        return Err(format!("{n} violations: {}", first(&found)));
    }
    if checked == 0 {
        return Err("no ghosts were created".into());
    }
    Ok(format!("{checked} reclaiming ghosts within budget"))
}

fn protocol_benefit(s: &Sweep) -> Outcome {
    let mut agg: BTreeMap<&str, (Time, usize)> = BTreeMap::new();
    for r in &s.rows {
        let e = agg.entry(r.protocol.name()).or_default();
        e.0 += r.rem_completion_total;
        e.1 += r.rem_completed;
    }
    let mean = |p: ImcrProtocol| {
        let (t, n) = agg.get(p.name()).copied().unwrap_or_default();
        (n > 0).then(|| t as f64 / n as f64)
    };
    let (Some(naive), Some(reclaim), Some(wcrt)) = (
        mean(ImcrProtocol::Naive),
        mean(ImcrProtocol::WcetReclaim),
        mean(ImcrProtocol::WcrtSimulate),
    ) else {
        return Err("no rem-job completed under some protocol".into());
    };
    let text = format!("mean rem-job completion naive {naive:.3}, wcet-reclaim {reclaim:.3}, wcrt-simulate {wcrt:.3}");
    if reclaim <= naive && wcrt <= naive {
        Ok(text)
    } else {
        Err(format!("ordering inverted: {text}"))
    }
}

fn run_basic(set: &PreparedSet, sc: &Scenario) -> Result<(), String> {
    for p in ImcrProtocol::ALL {
        let trace = simulate(
            &set.ts,
            &set.platform,
            &set.priorities,
            &set.wcrt,
            sc,
            &ProtocolConfig::new(p),
        )
        .map_err(|e| e.to_string())?;
        let reports = check_all(&trace, &set.ts, &set.platform, &set.priorities, &set.wcrt, Some(sc), p)
            .map_err(|e| e.to_string())?;
        if let Some(f) = reports.iter().flat_map(|r| r.findings.iter().map(move |f| (r.check, f))).next() {
            return Err(format!("{}: {}: {} (scenario {sc:?})", p.name(), f.0, f.1));
        }
    }
    Ok(())
}

const MAX_BASIC_PER_SET: u64 = 4096;

fn exhaustive_basic() -> Outcome {
    let base = child_seed(SEED, 4);
    let mut sets = Vec::new();
    let mut i = 0u64;
    while sets.len() < 60 {
        let n = 2 + (i % 2) as usize;
        let m = 1 + ((i / 2) % 2) as u32;
        let levels = 2 + ((i / 4) % 2) as Level;
        let u = 0.4 * m as f64 + 0.1 * ((i / 8) % 3) as f64;
        let gp = gen_params(n, m, levels, u.min(0.9 * n as f64), (3, 8), child_seed(base, i));
        let seed = child_seed(base ^ 0xA5A5, i);
        i += 1;
        let Ok(ts) = gen_taskset(&gp) else { continue };
        if let Some(p) = PreparedSet::analyze(ts, Platform::new(m).unwrap(), true) {
            sets.push((p, seed, sets.len()));
        }
    }
    let totals: Result<Vec<u64>, String> = sets
        .par_iter()
        .map(|(set, seed, idx)| {
            let ts = &set.ts;
            let draft = gen_scenario(ts, 6 * ts.max_period(), *seed, ExecModel::Uniform, &DmcrPlan::None)
                .map_err(|e| e.to_string())?;
            // keep the earliest arrivals while the enumeration stays small
            let mut all: Vec<(Time, TaskId)> = draft
                .tasks
                .iter()
                .flat_map(|(id, a)| a.arrivals.iter().map(move |t| (*t, *id)))
                .collect();
            all.sort();
            let mut arrivals: BTreeMap<TaskId, Vec<Time>> = BTreeMap::new();
            let mut product = 1u64;
            for (t, id) in all {
                let l = u64::from(ts.get(id).unwrap().criticality);
                if product * l > MAX_BASIC_PER_SET || arrivals.values().map(Vec::len).sum::<usize>() == 12 {
                    break;
                }
                product *= l;
                arrivals.entry(id).or_default().push(t);
            }
            let horizon = arrivals
                .iter()
                .map(|(id, a)| a.last().unwrap() + ts.get(*id).unwrap().deadline + 1)
                .max()
                .unwrap_or(1);
            let mut it = enumerate_basic_scenarios(ts, horizon, &arrivals).map_err(|e| e.to_string())?;
            if idx % 2 == 1 && ts.levels > 1 {
                it = it.with_dmcr(vec![DmcrRequest { time: horizon / 2, target: 1 }]);
            }
            let total = it.total();
            for sc in it {
                run_basic(set, &sc)?;
            }
            Ok(total)
        })
        .collect();
    let totals = totals?;
    Ok(format!(
        "{} sets, {} basic scenarios, each under 4 protocols",
        totals.len(),
        totals.iter().sum::<u64>()
    ))
}

#[derive(Default)]
struct DmcrTally {
    scenarios: usize,
    chains: usize,
    reenabled: usize,
    aborted: usize,
}

/// Examines one trace for the re-enablement properties.
fn dmcr_properties(trace: &Trace, ts: &TaskSet, tally: &mut DmcrTally) -> Result<(), String> {
    let events = &trace.events;
    let mut active: Option<(Level, bool)> = None; // (level before the decrease, crossed)
    for (i, e) in events.iter().enumerate() {
        match &e.kind {
            EventKind::ChainStarted { .. } => {
                let before = events[..i].last().map_or(e.mode, |p| p.mode);
                active = Some((before, false));
                tally.chains += 1;
            }
            EventKind::BudgetExceeded { .. } => {
                if let Some((_, crossed)) = active.as_mut() {
                    *crossed = true;
                }
            }
            EventKind::ChainAborted { .. } => {
                active = None;
                tally.aborted += 1;
            }
            EventKind::ChainStalled { .. } => active = None,
            EventKind::ReEnabled { tasks, .. } => {
                let Some((high, crossed)) = active.take() else {
                    return Err(format!("ReEnabled at {} without a chain", e.time));
                };
                if crossed {
                    return Err(format!("chain crossed by a mode increase re-enabled at {}", e.time));
                }
                tally.reenabled += 1;
                let later_increase = events[i..]
                    .iter()
                    .any(|x| matches!(x.kind, EventKind::BudgetExceeded { .. }));
                if later_increase {
                    continue;
                }
                for x in &events[i..] {
                    if let EventKind::DeadlineMiss { task, k, criticality, rem: false } = &x.kind {
                        if tasks.contains(task) || *criticality >= high {
                            return Err(format!(
                                "job {k} of task {task} missed at {} after re-enablement at {}",
                                x.time, e.time
                            ));
                        }
                    }
                }
            }
            EventKind::End => {
                if let Some((_, true)) = active {
                    return Err("chain crossed by a mode increase was never aborted".into());
                }
            }
            _ => {}
        }
    }
    for e in events {
        if let EventKind::DeadlineMiss { task, criticality, rem: false, .. } = &e.kind {
            if *criticality == ts.levels {
                return Err(format!("top-criticality task {task} missed at {}", e.time));
            }
        }
    }
    Ok(())
}

fn dmcr_validity() -> Outcome {
    let base = child_seed(SEED, 7);
    let mut sets = Vec::new();
    let mut i = 0u64;
    while sets.len() < 60 {
        let n = 3 + (i % 5) as usize;
        let m = 2 + ((i / 5) % 2) as u32;
        let levels = 2 + ((i / 10) % 2) as Level;
        let gp = gen_params(n, m, levels, 0.5 * m as f64, (5, 30), child_seed(base, i));
        i += 1;
        let Ok(ts) = gen_taskset(&gp) else { continue };
        if let Some(p) = PreparedSet::analyze(ts, Platform::new(m).unwrap(), true) {
            sets.push(p);
        }
    }
    let mut tally = DmcrTally::default();
    for (s, set) in sets.iter().enumerate() {
        let ts = &set.ts;
        let horizon = 20 * ts.max_period();
        for j in 0..4u64 {
            let id = s as u64 * 4 + j;
            let dmcr = DmcrPlan::Fixed(vec![DmcrRequest { time: horizon / 2, target: 1 }]);
            let mut sc = gen_scenario(
                ts,
                horizon,
                child_seed(base ^ 0xD1, id),
                ExecModel::OverrunInjecting { level: 1 },
                &dmcr,
            )
            .map_err(|e| e.to_string())?;
            if j % 2 == 1 {
                // a job released at or after the request that exceeds the
                // budget of the level the chain runs at
                let pick = ts
                    .tasks
                    .iter()
                    .filter(|t| t.criticality >= 3 && t.budget(3) > t.budget(2))
                    .filter_map(|t| {
                        let a = &sc.tasks[&t.id];
                        let n = a.arrivals.iter().position(|r| *r >= horizon / 2)?;
                        Some((a.arrivals[n], t.id, n, t.budget(3)))
                    })
                    .min();
                if let Some((_, tid, n, c)) = pick {
                    sc.tasks.get_mut(&tid).unwrap().exec_times[n] = c;
                }
            }
            tally.scenarios += 1;
            for p in ImcrProtocol::ALL {
                let trace = simulate(ts, &set.platform, &set.priorities, &set.wcrt, &sc, &ProtocolConfig::new(p))
                    .map_err(|e| e.to_string())?;
                let reports = check_all(&trace, ts, &set.platform, &set.priorities, &set.wcrt, Some(&sc), p)
                    .map_err(|e| e.to_string())?;
                if let Some(r) = reports.iter().find(|r| !r.is_clean()) {
                    return Err(format!("set {s} scenario {j} {}: {}: {}", p.name(), r.check, r.findings[0]));
                }
                dmcr_properties(&trace, ts, &mut tally)
                    .map_err(|e| format!("set {s} scenario {j} {}: {e}", p.name()))?;
            }
        }
    }
    if tally.reenabled == 0 || tally.aborted == 0 {
        return Err(format!(
            "vacuous: {} chains, {} re-enabled, {} aborted",
            tally.chains, tally.reenabled, tally.aborted
        ));
    }
    Ok(format!(
        "{} scenarios x 4 protocols, {} chains, {} re-enabled, {} aborted",
        tally.scenarios, tally.chains, tally.reenabled, tally.aborted
    ))
}

fn opa_order_independence() -> Outcome {
    let base = child_seed(SEED, 8);
    let mut verdicts = [0usize; 2];
    for i in 0..100u64 {
        let n = 3 + (i % 6) as usize;
        let m = 1 + ((i / 6) % 3) as u32;
        let levels = 1 + ((i / 18) % 3) as Level;
        let u = (0.4 + 0.5 * ((i as f64 * 0.618_033_988_7).fract())) * m as f64;
        let gp = gen_params(n, m, levels, u.min(0.9 * n as f64), (5, 50), child_seed(base, i));
        let ts = gen_taskset(&gp).map_err(|e| e.to_string())?;
        let reference = opa_assign(&ts, m, AnalysisConfig::default()).is_schedulable();
        verdicts[usize::from(reference)] += 1;
        let mut r = rng(child_seed(base ^ 0x0DE5, i));
        for _ in 0..20 {
            let mut order: Vec<usize> = (0..ts.len()).collect();
            for k in (1..order.len()).rev() {
                order.swap(k, r.random_range(0..=k));
            }
            let v = opa_assign_with_order(&ts, m, AnalysisConfig::default(), &order).is_schedulable();
            if v != reference {
                return Err(format!("set {i}: order {order:?} gives {v}, ascending ids give {reference}"));
            }
        }
    }
    if verdicts[0] == 0 || verdicts[1] == 0 {
        return Err(format!("vacuous: verdict split {verdicts:?}"));
    }
    Ok(format!(
        "100 sets x 20 orders, {} schedulable and {} not",
        verdicts[1], verdicts[0]
    ))
}

fn determinism(sets: &[PreparedSet]) -> Outcome {
    let sets = &sets[..sets.len().min(20)];
    let cfg = RunConfig {
        scenarios: 10,
        seed: 77,
        dmcr_count: 1,
        exec: ExecChoice::Mixed,
        ..RunConfig::default()
    };
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?
        .install(|| experiment::run(sets, &cfg, &|_, _| {}))
        .map_err(|e| e.to_string())?;
    let parallel = experiment::run(sets, &cfg, &|_, _| {}).map_err(|e| e.to_string())?;
    if csv_string(&serial) != csv_string(&parallel) {
        return Err("CSV differs between serial and parallel runs".into());
    }
    let mut traces = 0;
    for (s, set) in sets.iter().enumerate() {
        let sc = experiment::scenario_for(set, &cfg, s as u64).map_err(|e| e.to_string())?;
        for p in ImcrProtocol::ALL {
            let run = || {
                simulate(&set.ts, &set.platform, &set.priorities, &set.wcrt, &sc, &ProtocolConfig::new(p))
                    .map(|t| serialize_trace(&t))
            };
            if run().map_err(|e| e.to_string())? != run().map_err(|e| e.to_string())? {
                return Err(format!("trace of set {s} under {} differs between runs", p.name()));
            }
            traces += 1;
        }
    }
    Ok(format!("{} CSV rows and {traces} traces reproduced byte for byte", serial.len()))
}

fn report(n: u32, name: &str, started: Instant, outcome: Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS criterion {n:>2} {name}: {detail} ({secs:.1}s)");
            true
        }
        Err(detail) => {
            println!("FAIL criterion {n:>2} {name}: {detail} ({secs:.1}s)");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut ok = true;

    let t = Instant::now();
    ok &= report(1, "workload dominance", t, dominance());
    let t = Instant::now();
    ok &= report(2, "uniprocessor degeneration", t, uniprocessor());

    let t = Instant::now();
    let sets = sweep_sets(500);
    let cfg = RunConfig {
        scenarios: 100,
        seed: child_seed(SEED, 30),
        dmcr_count: 1,
        exec: ExecChoice::Mixed,
        ..RunConfig::default()
    };
    let sweep = match experiment::run(&sets, &cfg, &|_, _| {}) {
        Ok(rows) => Ok(Sweep { sets: sets.len(), rows }),
        Err(e) => Err(e.to_string()),
    };
    match &sweep {
        Ok(s) => {
            ok &= report(3, "soundness sweep", t, soundness(s));
            ok &= report(4, "exhaustive basic scenarios", Instant::now(), exhaustive_basic());
            let t = Instant::now();
            ok &= report(5, "response bounds under wcrt-simulate", t, response_bounds(s));
            let t = Instant::now();
            ok &= report(6, "wcet-reclaim accounting", t, reclaim_accounting(s));
        }
        Err(e) => {
            for (n, name) in [(3, "soundness sweep"), (5, "response bounds under wcrt-simulate"), (6, "wcet-reclaim accounting")] {
                ok &= report(n, name, t, Err(e.clone()));
            }
            ok &= report(4, "exhaustive basic scenarios", Instant::now(), exhaustive_basic());
        }
    }
    let t = Instant::now();
    ok &= report(7, "decreasing mode change validity", t, dmcr_validity());
    let t = Instant::now();
    ok &= report(8, "priority assignment order independence", t, opa_order_independence());
    let t = Instant::now();
    ok &= report(9, "determinism", t, determinism(&sets));
    let t = Instant::now();
    ok &= report(
        10,
        "rem-job completion benefit",
        t,
        sweep.as_ref().map_err(Clone::clone).and_then(protocol_benefit),
    );

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
