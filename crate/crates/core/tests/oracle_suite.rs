mod common;

use std::time::Duration;

use mapf_rrr::analysis::{oracle_optimal, validate};
use mapf_rrr::budget::StopSignal;
use mapf_rrr::cbs::{solve_cbs, CbsConfig, CbsMode};
use mapf_rrr::mstar::{solve_mstar, MstarConfig};
use mapf_rrr::solution::SolveStatus;

const BUDGET: Duration = Duration::from_secs(20);

#[test]
fn optimal_solvers_match_oracle() {
    let suite = common::small_suite(120, 2024);
    let mut infeasible = 0;
    for (n, inst) in suite.iter().enumerate() {
        let oracle = oracle_optimal(inst, common::horizon(inst)).unwrap();
        let cbs = solve_cbs(inst, &CbsConfig::new(CbsMode::Cbs, 1.0), &StopSignal::after(BUDGET), 0).unwrap();
        let mstar = solve_mstar(inst, &MstarConfig::default(), &StopSignal::after(BUDGET), 0).unwrap();
        for (name, out) in [("cbs", &cbs), ("mstar", &mstar)] {
            match oracle {
                Some(c) => {
                    assert_eq!(out.status, SolveStatus::Solved, "{name} on #{n}");
                    assert_eq!(out.cost(), Some(c), "{name} on #{n}");
                    let report = validate(inst, &out.solution.as_ref().unwrap().paths).unwrap();
                    assert!(report.is_solution(), "{name} on #{n}: {report:?}");
                    assert_eq!(report.cost, c);
                }
                None => assert_eq!(out.status, SolveStatus::Infeasible, "{name} on #{n}"),
            }
        }
        infeasible += oracle.is_none() as usize;
    }
    println!("{infeasible} infeasible instances in the suite");
}
