use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mcsched::experiment::{
    self, csv_string, ExperimentSpec, GenSpec, PreparedSet,
};
use mcsched::formats::{
    parse_scenario, parse_taskset, parse_trace, serialize_scenario, serialize_taskset,
    serialize_trace,
};
use mcsched::{infer_protocol, report};
use mcsched_core::analysis::{forced_assignment, opa_assign, AnalysisConfig};
use mcsched_core::gen::{gen_scenario, gen_taskset, DmcrPlan, ExecModel};
use mcsched_core::model::{Platform, TaskSet, Time};
use mcsched_core::sim::{simulate, ImcrProtocol, ProtocolConfig, RemOrder};
use mcsched_core::verify::{check_all, metrics};

const CLEAN: u8 = 0;
const VIOLATION: u8 = 1;
const INPUT_ERROR: u8 = 2;
const REFUSED: u8 = 3;

#[derive(Parser)]
#[command(name = "mcsched", version, about = "Mixed-criticality global fixed-priority scheduling toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assign priorities and bound response times; exit 0 iff schedulable.
    Analyze {
        taskset: PathBuf,
        #[arg(long)]
        no_cap: bool,
        #[arg(long)]
        json: bool,
    },
    /// Simulate one scenario and write its trace.
    Simulate(SimulateArgs),
    /// Run every checker on a trace; exit 0 iff clean.
    Check {
        trace: PathBuf,
        taskset: PathBuf,
        /// Enables the periodicity check.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Inferred from the trace when absent.
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<ImcrProtocol>,
        #[arg(long)]
        no_cap: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run a batch described by a JSON spec and write a CSV summary.
    Experiment {
        spec: PathBuf,
        /// CSV destination; defaults to `results.csv` in the spec's
        /// output directory, or stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate inputs.
    #[command(subcommand)]
    Gen(GenCmd),
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to 20 times the largest period.
    #[arg(long)]
    horizon: Option<Time>,
    /// uniform, basic or overrun.
    #[arg(long, default_value = "uniform")]
    exec_model: String,
    /// Level whose budget the injected overrun exceeds.
    #[arg(long, default_value_t = 1)]
    overrun_level: u32,
    #[arg(long, default_value_t = 0)]
    dmcr_count: usize,
}

#[derive(Args)]
struct SimulateArgs {
    taskset: PathBuf,
    /// Scenario file; generated from --seed and --horizon when absent.
    scenario: Option<PathBuf>,
    #[command(flatten)]
    gen: ScenarioArgs,
    #[arg(long, default_value = "wcrt-simulate", value_parser = parse_protocol)]
    protocol: ImcrProtocol,
    #[arg(long, default_value = "crit-edf", value_parser = parse_rem_order)]
    rem_order: RemOrder,
    #[arg(long)]
    no_cap: bool,
    /// Simulate an unschedulable set with deadline-monotonic residual ranks.
    #[arg(long)]
    force: bool,
    /// Trace destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the simulated scenario here.
    #[arg(long)]
    save_scenario: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenCmd {
    Taskset {
        #[arg(long, default_value_t = 6)]
        tasks: usize,
        #[arg(long, default_value_t = 2)]
        processors: u32,
        #[arg(long, default_value_t = 2)]
        levels: u32,
        #[arg(long, default_value_t = 1.0)]
        utilization: f64,
        #[arg(long, default_value_t = 10)]
        period_min: Time,
        #[arg(long, default_value_t = 100)]
        period_max: Time,
        #[arg(long, default_value_t = 1.5)]
        wcet_factor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Redraw until the set is schedulable.
        #[arg(long)]
        schedulable: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Scenario {
        taskset: PathBuf,
        #[command(flatten)]
        gen: ScenarioArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_protocol(s: &str) -> Result<ImcrProtocol, String> {
    ImcrProtocol::from_name(s).ok_or_else(|| {
        format!("expected one of drop, naive, wcet-reclaim, wcrt-simulate; got `{s}`")
    })
}

fn parse_rem_order(s: &str) -> Result<RemOrder, String> {
    RemOrder::from_name(s).ok_or_else(|| format!("expected one of crit-edf, edf, srpt; got `{s}`"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_taskset(path: &Path) -> Result<(TaskSet, Platform)> {
    parse_taskset(&read(path)?).with_context(|| path.display().to_string())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn scenario_from_args(ts: &TaskSet, a: &ScenarioArgs) -> Result<mcsched_core::model::Scenario> {
    let model = match a.exec_model.as_str() {
        "uniform" => ExecModel::Uniform,
        "basic" => ExecModel::BasicRandom,
        "overrun" => ExecModel::OverrunInjecting { level: a.overrun_level },
        other => bail!("unknown exec model `{other}` (uniform, basic, overrun)"),
    };
    let horizon = experiment::horizon_for(ts, a.horizon);
    Ok(gen_scenario(ts, horizon, a.seed, model, &DmcrPlan::Random { count: a.dmcr_count })?)
}

fn analyze(path: &Path, no_cap: bool, json: bool) -> Result<u8> {
    let (ts, platform) = load_taskset(path)?;
    let res = opa_assign(&ts, platform.processors, AnalysisConfig { cap: !no_cap });
    if json {
        println!("{}", report::analysis_json(&ts, platform.processors, &res));
    } else {
        print!("{}", report::analysis_text(&ts, platform.processors, &res));
    }
    Ok(if res.is_schedulable() { CLEAN } else { VIOLATION })
}

fn run_simulate(a: &SimulateArgs) -> Result<u8> {
    let (ts, platform) = load_taskset(&a.taskset)?;
    let cfg = AnalysisConfig { cap: !a.no_cap };
    let res = opa_assign(&ts, platform.processors, cfg);
    if !res.is_schedulable() && !a.force {
        eprintln!("task set is not schedulable; pass --force to simulate it anyway");
        return Ok(REFUSED);
    }
    let (priorities, wcrt) = forced_assignment(&ts, &res, platform.processors, cfg);
    let scenario = match &a.scenario {
        Some(p) => parse_scenario(&read(p)?, &ts).with_context(|| p.display().to_string())?,
        None => scenario_from_args(&ts, &a.gen)?,
    };
    if let Some(p) = &a.save_scenario {
        emit(Some(p), &serialize_scenario(&scenario))?;
    }
    let pc = ProtocolConfig {
        imcr_protocol: a.protocol,
        rem_order: a.rem_order,
        cap_enabled: !a.no_cap,
    };
    let trace = simulate(&ts, &platform, &priorities, &wcrt, &scenario, &pc)?;
    emit(a.out.as_deref(), &serialize_trace(&trace))?;
    let summary = report::metrics_text(&metrics(&trace, &ts)?);
    if a.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(CLEAN)
}

fn check(
    trace_path: &Path,
    ts_path: &Path,
    scenario: Option<&Path>,
    protocol: Option<ImcrProtocol>,
    no_cap: bool,
    json: bool,
) -> Result<u8> {
    let (ts, platform) = load_taskset(ts_path)?;
    let trace = parse_trace(&read(trace_path)?).with_context(|| trace_path.display().to_string())?;
    let scenario = match scenario {
        Some(p) => Some(parse_scenario(&read(p)?, &ts).with_context(|| p.display().to_string())?),
        None => None,
    };
    let cfg = AnalysisConfig { cap: !no_cap };
    let res = opa_assign(&ts, platform.processors, cfg);
    let (priorities, wcrt) = forced_assignment(&ts, &res, platform.processors, cfg);
    let protocol = protocol.unwrap_or_else(|| infer_protocol(&trace));
    let reports = check_all(&trace, &ts, &platform, &priorities, &wcrt, scenario.as_ref(), protocol)?;
    if json {
        println!("{}", report::check_json(&reports));
    } else {
        println!("protocol {}", protocol.name());
        print!("{}", report::check_text(&reports));
    }
    Ok(if reports.iter().all(|r| r.is_clean()) { CLEAN } else { VIOLATION })
}

fn run_experiment(spec_path: &Path, out: Option<&Path>) -> Result<u8> {
    let spec = ExperimentSpec::parse(&read(spec_path)?)
        .with_context(|| spec_path.display().to_string())?;
    let cfg = spec.run_config()?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let sets: Vec<PreparedSet> = spec.task_sets(base)?;
    let dir = spec.output_dir.as_ref().map(|d| base.join(d));
    if let Some(d) = &dir {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    let save = |row: &experiment::Row, trace: &mcsched_core::sim::Trace| {
        if let Some(d) = &dir {
            if let Err(e) = experiment::write_violation_trace(d, row, trace) {
                eprintln!("cannot save trace: {e}");
            }
        }
    };
    let rows = experiment::run(&sets, &cfg, &save)?;
    let csv = csv_string(&rows);
    let target = out.map(Path::to_path_buf).or_else(|| dir.as_ref().map(|d| d.join("results.csv")));
    emit(target.as_deref(), &csv)?;
    let bad: Vec<_> = rows.iter().filter(|r| !r.is_clean()).collect();
    for r in &bad {
        for f in r.findings() {
            eprintln!("scenario {} {}: {f}", r.scenario_id, r.protocol.name());
        }
    }
    eprintln!(
        "{} task set(s), {} run(s), {} with violations",
        sets.len(),
        rows.len(),
        bad.len()
    );
    Ok(if bad.is_empty() { CLEAN } else { VIOLATION })
}

fn gen(cmd: &GenCmd) -> Result<u8> {
    match cmd {
        GenCmd::Taskset {
            tasks,
            processors,
            levels,
            utilization,
            period_min,
            period_max,
            wcet_factor,
            seed,
            schedulable,
            out,
        } => {
            let spec = GenSpec {
                tasks: *tasks,
                processors: *processors,
                levels: *levels,
                utilization: *utilization,
                period_min: *period_min,
                period_max: *period_max,
                wcet_factor: *wcet_factor,
                ..GenSpec::default()
            };
            let (ts, platform) = if *schedulable {
                let set = experiment::generate_sets(&spec, 1, *seed, true)?.remove(0);
                (set.ts, set.platform)
            } else {
                let platform = Platform::new(*processors)?;
                (gen_taskset(&spec.params(*seed))?, platform)
            };
            emit(out.as_deref(), &serialize_taskset(&ts, &platform))?;
        }
        GenCmd::Scenario { taskset, gen, out } => {
            let (ts, _) = load_taskset(taskset)?;
            let sc = scenario_from_args(&ts, gen)?;
            emit(out.as_deref(), &serialize_scenario(&sc))?;
        }
    }
    Ok(CLEAN)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { INPUT_ERROR } else { CLEAN });
        }
    };
    let res = match &cli.cmd {
        Cmd::Analyze { taskset, no_cap, json } => analyze(taskset, *no_cap, *json),
        Cmd::Simulate(a) => run_simulate(a),
        Cmd::Check {
            trace,
            taskset,
            scenario,
            protocol,
            no_cap,
            json,
        } => check(trace, taskset, scenario.as_deref(), *protocol, *no_cap, *json),
        Cmd::Experiment { spec, out } => run_experiment(spec, out.as_deref()),
        Cmd::Gen(g) => gen(g),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(INPUT_ERROR)
        }
    }
}
