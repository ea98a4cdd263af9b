use mcsched_core::analysis::{
    opa_assign, opa_assign_with_order, wcrt, workload_ci, workload_nc, AnalysisConfig,
};
use mcsched_core::gen::{gen_scenario, gen_taskset, DmcrPlan, ExecModel, GenParams};
use mcsched_core::model::{McTask, Platform, Time};
use mcsched_core::sim::{simulate, ImcrProtocol, ProtocolConfig};
use mcsched_core::verify::{brute_force_workload, check_all};
use proptest::prelude::*;

fn task() -> impl Strategy<Value = McTask> {
    (1u64..=12, 1u32..=3)
        .prop_flat_map(|(period, levels)| (Just(period), 1..=period, Just(levels)))
        .prop_flat_map(|(period, deadline, levels)| {
            (
                Just(period),
                Just(deadline),
                Just(levels),
                proptest::collection::vec(1..=deadline, levels as usize),
            )
        })
        .prop_map(|(period, deadline, levels, mut wcet)| {
            wcet.sort();
            McTask::new(1, period, deadline, levels, &wcet)
        })
}

/// Response time on one processor from `R = C + Σ ⌈R/T_j⌉ C_j`.
fn classical(c: Time, hp: &[(Time, Time)], deadline: Time) -> Option<Time> {
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

proptest! {
    #[test]
    fn closed_forms_dominate_exhaustive_search(t in task(), delta in 0u64..=40) {
        for level in 1..=t.criticality {
            let nc = workload_nc(&t, delta, level).unwrap();
            let ci = workload_ci(&t, delta, level).unwrap();
            prop_assert!(nc >= brute_force_workload(&t, delta, level, false).unwrap());
            prop_assert!(ci >= brute_force_workload(&t, delta, level, true).unwrap());
        }
    }

    #[test]
    fn workloads_grow_with_window_and_carry_in(t in task(), delta in 0u64..=60) {
        for level in 1..=t.criticality {
            let nc = workload_nc(&t, delta, level).unwrap();
            let ci = workload_ci(&t, delta, level).unwrap();
            prop_assert!(ci >= nc);
            prop_assert!(ci <= delta);
            prop_assert!(workload_nc(&t, delta + 1, level).unwrap() >= nc);
            prop_assert!(workload_ci(&t, delta + 1, level).unwrap() >= ci);
        }
    }

    #[test]
    fn single_processor_matches_classical_recurrence(
        hp in proptest::collection::vec((2u64..=20, 1u64..=4), 0..4),
        c in 1u64..=6,
        deadline in 6u64..=60,
    ) {
        let hp_tasks: Vec<McTask> = hp
            .iter()
            .enumerate()
            .map(|(i, &(t, cj))| McTask::new(i as u32 + 2, t, t, 1, &[cj.min(t)]))
            .collect();
        let ti = McTask::new(1, deadline, deadline, 1, &[c]);
        let refs: Vec<&McTask> = hp_tasks.iter().collect();
        let pairs: Vec<(Time, Time)> = hp_tasks.iter().map(|t| (t.period, t.budget(1))).collect();
        let got = wcrt(&ti, &refs, 1, 1, AnalysisConfig::default()).ok();
        prop_assert_eq!(got, classical(c, &pairs, deadline));
    }

    #[test]
    fn response_time_grows_with_level(seed in 0u64..500) {
        let gp = GenParams { tasks: 4, processors: 2, levels: 3, utilization: 1.0, period_min: 5, period_max: 40, seed, ..GenParams::default() };
        let ts = gen_taskset(&gp).unwrap();
        let res = opa_assign(&ts, 2, AnalysisConfig::default());
        for t in &ts.tasks {
            for l in 1..t.criticality {
                if let (Some(a), Some(b)) = (res.wcrt.get(t.id, l), res.wcrt.get(t.id, l + 1)) {
                    prop_assert!(a <= b, "task {} R({l}) = {a} > R({}) = {b}", t.id, l + 1);
                }
            }
        }
    }

    #[test]
    fn priority_assignment_verdict_ignores_candidate_order(
        seed in 0u64..1000,
        perm in proptest::collection::vec(any::<u32>(), 6),
    ) {
        let gp = GenParams { tasks: 6, processors: 2, levels: 2, utilization: 1.3, period_min: 5, period_max: 50, seed, ..GenParams::default() };
        let ts = gen_taskset(&gp).unwrap();
        let mut order: Vec<usize> = (0..ts.len()).collect();
        order.sort_by_key(|&i| perm[i]);
        prop_assert_eq!(
            opa_assign(&ts, 2, AnalysisConfig::default()).is_schedulable(),
            opa_assign_with_order(&ts, 2, AnalysisConfig::default(), &order).is_schedulable()
        );
    }

    #[test]
    fn checkers_are_clean_on_schedulable_sets(
        seed in 0u64..10_000,
        levels in 1u32..=3,
        overrun in any::<bool>(),
        dmcr in 0usize..=2,
    ) {
        let gp = GenParams { tasks: 5, processors: 2, levels, utilization: 0.9, period_min: 4, period_max: 25, seed, ..GenParams::default() };
        let ts = gen_taskset(&gp).unwrap();
        let platform = Platform::new(2).unwrap();
        let res = opa_assign(&ts, 2, AnalysisConfig::default());
        prop_assume!(res.is_schedulable());
        let model = if overrun && levels > 1 {
            ExecModel::OverrunInjecting { level: 1 }
        } else {
            ExecModel::Uniform
        };
        let sc = gen_scenario(&ts, 20 * ts.max_period(), seed, model, &DmcrPlan::Random { count: dmcr }).unwrap();
        for p in ImcrProtocol::ALL {
            let trace = simulate(&ts, &platform, &res.priorities, &res.wcrt, &sc, &ProtocolConfig::new(p)).unwrap();
            let reports = check_all(&trace, &ts, &platform, &res.priorities, &res.wcrt, Some(&sc), p).unwrap();
            for r in reports {
                prop_assert!(r.is_clean(), "{} under {}: {:?}", r.check, p.name(), r.findings);
            }
        }
    }
}
