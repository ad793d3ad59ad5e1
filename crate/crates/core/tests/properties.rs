mod common;

use std::time::Duration;

use mapf_rrr::analysis::{oracle_optimal, validate};
use mapf_rrr::budget::StopSignal;
use mapf_rrr::campaign::build_solver;
use mapf_rrr::grid::DirectedEdge;
use mapf_rrr::instance::{Highway, MapfInstance};
use mapf_rrr::randomize::RandomizationPolicy;
use mapf_rrr::restart::{read_telemetry, write_telemetry, TelemetryRow, TrialSolver};
use mapf_rrr::solution::{Solution, SolveStatus};
use proptest::prelude::*;

const BUDGET: Duration = Duration::from_secs(20);

fn instance(seed: u64) -> MapfInstance {
    common::small_suite(1, seed).pop().unwrap()
}

fn telemetry_row() -> impl Strategy<Value = TelemetryRow> {
    (
        "[ -~]{0,12}",
        prop::sample::select(vec!["cbs", "ecbs", "cbs_hwy", "iecbs", "mstar"]),
        prop::sample::select(vec![SolveStatus::Solved, SolveStatus::Timeout, SolveStatus::Cancelled]),
        (1.0f64..3.0, 1usize..20, 0usize..20, any::<u64>()),
        (0u32..10_000_000, proptest::option::of(0u64..10_000), any::<u64>(), any::<u64>()),
    )
        .prop_map(|(id, solver, status, (w, k, trial_index, seed), (micros, cost, hi, lo))| TelemetryRow {
            instance_id: id,
            solver: solver.into(),
            mode: "rrr".into(),
            w,
            k,
            trial_index,
            seed,
            status: status.as_str().into(),
            runtime_ms: micros as f64 / 1e3,
            cost,
            expansions_high: hi,
            expansions_low: lo,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_round_trip(seed in any::<u64>()) {
        let inst = instance(seed);
        let back = MapfInstance::load_scenario(&inst.save_scenario(), inst.map.clone()).unwrap();
        prop_assert_eq!(back.agents, inst.agents);
    }

    #[test]
    fn highway_round_trip(seed in any::<u64>(), mask in any::<u64>()) {
        let inst = instance(seed);
        let edges: Vec<DirectedEdge> = inst
            .map
            .vertices()
            .flat_map(|v| inst.map.adjacent(v).iter().map(move |&u| DirectedEdge::new(v, u)))
            .enumerate()
            .filter(|(i, _)| mask >> (i % 64) & 1 == 1)
            .map(|(_, e)| e)
            .collect();
        let hwy = Highway::new(&inst.map, edges).unwrap();
        let back = Highway::parse(&hwy.serialize(&inst.map), &inst.map).unwrap();
        prop_assert_eq!(back, hwy);
    }

    #[test]
    fn telemetry_round_trip(rows in prop::collection::vec(telemetry_row(), 0..8)) {
        let mut buf = Vec::new();
        write_telemetry(&rows, &mut buf).unwrap();
        prop_assert_eq!(read_telemetry(buf.as_slice()).unwrap(), rows);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bounded_solutions_are_valid_and_within_bound(seed in any::<u64>(), w in 1.0f64..2.0, trial in any::<u64>()) {
        let inst = instance(seed);
        let Some(opt) = oracle_optimal(&inst, common::horizon(&inst)).unwrap() else {
            return Ok(());
        };
        let policy = RandomizationPolicy::preset("full", 0.5).unwrap();
        for name in ["ecbs", "iecbs", "mstar"] {
            let hwy = (name == "iecbs").then(Highway::empty);
            let solver = build_solver(name, w, 1.0, policy, hwy).unwrap();
            let out = solver.solve(&inst, &StopSignal::after(BUDGET), trial).unwrap();
            prop_assert_eq!(out.status, SolveStatus::Solved, "{}", name);
            let sol = out.solution.as_ref().unwrap();
            let report = validate(&inst, &sol.paths).unwrap();
            prop_assert!(report.is_solution(), "{}: {:?}", name, report);
            prop_assert!(report.cost >= opt);
            prop_assert!(report.cost as f64 <= w * opt as f64 + 1e-9, "{} cost {} opt {} w {}", name, report.cost, opt, w);

            let back = Solution::from_csv(&sol.to_csv(&inst.map), &inst.map, inst.num_agents()).unwrap();
            prop_assert_eq!(back.paths, sol.paths.clone());
        }
    }

    #[test]
    fn trials_are_deterministic(seed in any::<u64>(), trial in any::<u64>()) {
        let inst = instance(seed);
        let policy = RandomizationPolicy::preset("full", 0.5).unwrap();
        let solver = build_solver("ecbs", 1.5, 1.0, policy, None).unwrap();
        let a = solver.solve(&inst, &StopSignal::after(BUDGET), trial).unwrap();
        let b = solver.solve(&inst, &StopSignal::after(BUDGET), trial).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.solution, b.solution);
    }
}
