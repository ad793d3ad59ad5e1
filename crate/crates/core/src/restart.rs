//! Independent seeded trials and rapid randomized restarts (RRR): a total
//! budget divided evenly among `k` trials, first success wins.

use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::budget::StopSignal;
use crate::cbs::{solve_cbs, CbsConfig};
use crate::error::{MapfError, Result};
use crate::instance::MapfInstance;
use crate::mstar::{solve_mstar, MstarConfig};
pub use crate::randomize::{derive_seeds, RandomizationPolicy};
use crate::solution::{SolveOutcome, SolveStatus};

/// Telemetry of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub status: SolveStatus,
    pub runtime: Duration,
    /// Present exactly when `status` is `Solved`.
    pub cost: Option<u64>,
    pub expansions_high: u64,
    pub expansions_low: u64,
}

impl TrialOutcome {
    pub fn from_solve(seed: u64, outcome: &SolveOutcome) -> Self {
        TrialOutcome {
            seed,
            status: outcome.status,
            runtime: outcome.runtime,
            cost: outcome.cost(),
            expansions_high: outcome.expansions_high,
            expansions_low: outcome.expansions_low,
        }
    }
}

/// Anything the restart engine can run as a trial.
pub trait TrialSolver: Sync {
    /// Rejects configurations that cannot run on `inst`.
    fn validate(&self, inst: &MapfInstance) -> Result<()>;
    fn solve(&self, inst: &MapfInstance, stop: &StopSignal, seed: u64) -> Result<SolveOutcome>;
}

/// The two solver families behind one type.
#[derive(Debug, Clone)]
pub enum SolverSpec {
    Cbs(CbsConfig),
    Mstar(MstarConfig),
}

impl SolverSpec {
    /// `cbs`, `ecbs`, `cbs_hwy`, `iecbs` or `mstar`.
    pub fn name(&self) -> &'static str {
        match self {
            SolverSpec::Cbs(c) => c.mode.as_str(),
            SolverSpec::Mstar(_) => "mstar",
        }
    }

    /// The suboptimality factor reported in telemetry.
    pub fn w(&self) -> f64 {
        match self {
            SolverSpec::Cbs(c) => c.effective_w(),
            SolverSpec::Mstar(m) => m.inflation * m.highway_w,
        }
    }
}

impl TrialSolver for SolverSpec {
    fn validate(&self, inst: &MapfInstance) -> Result<()> {
        match self {
            SolverSpec::Cbs(c) => c.validate(inst),
            SolverSpec::Mstar(m) => m.validate(inst),
        }
    }

    fn solve(&self, inst: &MapfInstance, stop: &StopSignal, seed: u64) -> Result<SolveOutcome> {
        match self {
            SolverSpec::Cbs(c) => solve_cbs(inst, c, stop, seed),
            SolverSpec::Mstar(m) => solve_mstar(inst, m, stop, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Up to this many trials at once.
    Parallel(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestartSchedule {
    pub total_budget: Duration,
    pub num_trials: usize,
    pub parallelism: Parallelism,
}

impl RestartSchedule {
    pub fn new(total_budget: Duration, num_trials: usize) -> Result<Self> {
        let s = RestartSchedule {
            total_budget,
            num_trials,
            parallelism: Parallelism::Sequential,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn parallel(mut self, workers: usize) -> Self {
        self.parallelism = Parallelism::Parallel(workers);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trials == 0 {
            return Err(MapfError::usage("at least one trial is required"));
        }
        if self.parallelism == Parallelism::Parallel(0) {
            return Err(MapfError::usage("parallel mode needs at least one worker"));
        }
        Ok(())
    }

    /// Total budget over `k`, floored to whole milliseconds.
    pub fn per_trial_budget(&self) -> Duration {
        Duration::from_millis((self.total_budget.as_millis() / self.num_trials as u128) as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrrResult {
    pub status: SolveStatus,
    /// In trial-index order; trials that never started are absent.
    pub outcomes: Vec<TrialOutcome>,
    /// The winning trial's solution, if any.
    pub solution: Option<crate::solution::Solution>,
}

fn is_final(status: SolveStatus) -> bool {
    matches!(status, SolveStatus::Solved | SolveStatus::Infeasible)
}

fn overall(outcomes: &[TrialOutcome]) -> SolveStatus {
    let any = |s| outcomes.iter().any(|o| o.status == s);
    if any(SolveStatus::Solved) {
        SolveStatus::Solved
    } else if any(SolveStatus::Infeasible) {
        SolveStatus::Infeasible
    } else if !outcomes.is_empty() && outcomes.iter().all(|o| o.status == SolveStatus::MemoryExhausted) {
        SolveStatus::MemoryExhausted
    } else {
        SolveStatus::Timeout
    }
}

/// Runs up to `schedule.num_trials` trials with seeds from `master_seed`,
/// each limited to the per-trial budget, and stops at the first trial that
/// solves the instance or proves it infeasible. In parallel mode the other
/// running trials are cancelled and report `Cancelled`.
pub fn run_rrr<S: TrialSolver + ?Sized>(
    inst: &MapfInstance,
    solver: &S,
    schedule: &RestartSchedule,
    master_seed: u64,
) -> Result<RrrResult> {
    schedule.validate()?;
    solver.validate(inst)?;
    let seeds = derive_seeds(master_seed, schedule.num_trials);
    let budget = schedule.per_trial_budget();
    match schedule.parallelism {
        Parallelism::Sequential => {
            let mut outcomes = Vec::new();
            let mut solution = None;
            for &seed in &seeds {
                let out = solver.solve(inst, &StopSignal::after(budget), seed)?;
                outcomes.push(TrialOutcome::from_solve(seed, &out));
                if is_final(out.status) {
                    solution = out.solution;
                    break;
                }
            }
            Ok(RrrResult {
                status: overall(&outcomes),
                outcomes,
                solution,
            })
        }
        Parallelism::Parallel(workers) => {
            let cancel = Arc::new(AtomicBool::new(false));
            let next = AtomicUsize::new(0);
            let slots: Mutex<Vec<Option<SolveOutcome>>> = Mutex::new(vec![None; seeds.len()]);
            let first_error: Mutex<Option<MapfError>> = Mutex::new(None);
            std::thread::scope(|scope| {
                for _ in 0..workers.min(seeds.len()) {
                    scope.spawn(|| loop {
                        if cancel.load(Ordering::Relaxed) {
                            break;
                        }
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= seeds.len() {
                            break;
                        }
                        let stop = StopSignal::after(budget).with_cancel(cancel.clone());
                        match solver.solve(inst, &stop, seeds[i]) {
                            Ok(out) => {
                                if is_final(out.status) {
                                    cancel.store(true, Ordering::Relaxed);
                                }
                                slots.lock().expect("slot lock")[i] = Some(out);
                            }
                            Err(e) => {
                                cancel.store(true, Ordering::Relaxed);
                                first_error.lock().expect("error lock").get_or_insert(e);
                            }
                        }
                    });
                }
            });
            if let Some(e) = first_error.into_inner().expect("error lock") {
                return Err(e);
            }
            let slots = slots.into_inner().expect("slot lock");
            let mut outcomes = Vec::new();
            let mut solution = None;
            for (i, slot) in slots.into_iter().enumerate() {
                if let Some(out) = slot {
                    outcomes.push(TrialOutcome::from_solve(seeds[i], &out));
                    if solution.is_none() && out.status == SolveStatus::Solved {
                        solution = out.solution;
                    }
                }
            }
            Ok(RrrResult {
                status: overall(&outcomes),
                outcomes,
                solution,
            })
        }
    }
}

/// Runs all `k` trials, each with the full `per_trial_budget`, whatever
/// their results.
pub fn run_trials<S: TrialSolver + ?Sized>(
    inst: &MapfInstance,
    solver: &S,
    k: usize,
    per_trial_budget: Duration,
    master_seed: u64,
) -> Result<Vec<TrialOutcome>> {
    if k == 0 {
        return Err(MapfError::usage("at least one trial is required"));
    }
    solver.validate(inst)?;
    derive_seeds(master_seed, k)
        .into_iter()
        .map(|seed| {
            let out = solver.solve(inst, &StopSignal::after(per_trial_budget), seed)?;
            Ok(TrialOutcome::from_solve(seed, &out))
        })
        .collect()
}

/// One row of the per-trial telemetry CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub instance_id: String,
    pub solver: String,
    pub mode: String,
    pub w: f64,
    pub k: usize,
    pub trial_index: usize,
    pub seed: u64,
    pub status: String,
    pub runtime_ms: f64,
    pub cost: Option<u64>,
    pub expansions_high: u64,
    pub expansions_low: u64,
}

impl TelemetryRow {
    pub fn new(instance_id: &str, solver: &str, mode: &str, w: f64, k: usize, trial_index: usize, o: &TrialOutcome) -> Self {
        TelemetryRow {
            instance_id: instance_id.to_string(),
            solver: solver.to_string(),
            mode: mode.to_string(),
            w,
            k,
            trial_index,
            seed: o.seed,
            status: o.status.as_str().to_string(),
            runtime_ms: (o.runtime.as_secs_f64() * 1e6).round() / 1e3,
            cost: o.cost,
            expansions_high: o.expansions_high,
            expansions_low: o.expansions_low,
        }
    }
}

pub const TELEMETRY_HEADER: [&str; 12] = [
    "instance_id",
    "solver",
    "mode",
    "w",
    "k",
    "trial_index",
    "seed",
    "status",
    "runtime_ms",
    "cost",
    "expansions_high",
    "expansions_low",
];

pub fn write_telemetry<W: Write>(rows: &[TelemetryRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TELEMETRY_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_telemetry<R: std::io::Read>(input: R) -> Result<Vec<TelemetryRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(TELEMETRY_HEADER) {
        return Err(MapfError::parse(1, "unexpected telemetry header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<TelemetryRow>().enumerate() {
        let row = rec.map_err(|e| MapfError::parse(i + 2, e.to_string()))?;
        if SolveStatus::parse(&row.status).is_none() {
            return Err(MapfError::validation(i + 2, format!("unknown status {}", row.status)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbs::CbsMode;
    use crate::grid::{Cell, GridMap};
    use crate::instance::AgentSpec;

    fn inst(w: u32, h: u32, agents: &[((u32, u32), (u32, u32))]) -> MapfInstance {
        let map = Arc::new(GridMap::new(w, h, []).unwrap());
        let agents = agents
            .iter()
            .enumerate()
            .map(|(id, &(s, g))| AgentSpec {
                id,
                start: map.vertex_at(Cell::new(s.0, s.1)).unwrap(),
                goal: map.vertex_at(Cell::new(g.0, g.1)).unwrap(),
            })
            .collect();
        MapfInstance::new(map, agents, None).unwrap()
    }

    #[test]
    fn per_trial_budget_floors() {
        let s = RestartSchedule::new(Duration::from_secs(60), 4).unwrap();
        assert_eq!(s.per_trial_budget(), Duration::from_secs(15));
        let s = RestartSchedule::new(Duration::from_millis(1000), 3).unwrap();
        assert_eq!(s.per_trial_budget(), Duration::from_millis(333));
        assert!(RestartSchedule::new(Duration::from_secs(1), 0).is_err());
    }

    #[test]
    fn trials_on_easy_and_infeasible_instances() {
        let easy = inst(3, 3, &[((0, 0), (2, 2))]);
        let cbs = SolverSpec::Cbs(CbsConfig::new(CbsMode::Cbs, 1.0));
        let out = run_trials(&easy, &cbs, 3, Duration::from_secs(5), 1).unwrap();
        assert!(out.iter().all(|o| o.status == SolveStatus::Solved && o.cost == Some(4)));
        let corridor = inst(3, 1, &[((0, 0), (0, 2)), ((0, 2), (0, 0))]);
        let out = run_trials(&corridor, &cbs, 3, Duration::from_secs(5), 1).unwrap();
        assert!(out.iter().all(|o| o.status == SolveStatus::Infeasible));
    }

    #[test]
    fn infeasible_stops_rrr() {
        let corridor = inst(3, 1, &[((0, 0), (0, 2)), ((0, 2), (0, 0))]);
        let m = SolverSpec::Mstar(MstarConfig::default());
        let r = run_rrr(&corridor, &m, &RestartSchedule::new(Duration::from_secs(4), 4).unwrap(), 0).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert_eq!(r.outcomes.len(), 1);
    }

    #[test]
    fn invalid_config_fails_before_trials() {
        let i = inst(3, 3, &[((0, 0), (2, 2))]);
        let hwy = SolverSpec::Cbs(CbsConfig::new(CbsMode::Iecbs, 1.5));
        let err = run_rrr(&i, &hwy, &RestartSchedule::new(Duration::from_secs(1), 2).unwrap(), 0).unwrap_err();
        assert!(matches!(err, MapfError::Usage(_)));
    }

    #[test]
    fn parallel_mode_solves_and_keeps_order() {
        let i = inst(3, 3, &[((1, 0), (1, 2)), ((1, 2), (1, 0))]);
        let m = SolverSpec::Mstar(MstarConfig::default());
        let sched = RestartSchedule::new(Duration::from_secs(8), 4).unwrap().parallel(2);
        let r = run_rrr(&i, &m, &sched, 5).unwrap();
        assert_eq!(r.status, SolveStatus::Solved);
        let seeds = derive_seeds(5, 4);
        let mut last = 0;
        for o in &r.outcomes {
            let idx = seeds.iter().position(|&s| s == o.seed).unwrap();
            assert!(idx >= last);
            last = idx;
        }
    }

    #[test]
    fn telemetry_round_trip() {
        let o = TrialOutcome {
            seed: u64::MAX,
            status: SolveStatus::Solved,
            runtime: Duration::from_micros(1_234_567),
            cost: Some(17),
            expansions_high: 3,
            expansions_low: 99,
        };
        let t = TrialOutcome {
            status: SolveStatus::Timeout,
            cost: None,
            ..o.clone()
        };
        let rows = vec![
            TelemetryRow::new("kiva-10-0", "iecbs", "rrr", 1.5, 4, 0, &t),
            TelemetryRow::new("kiva-10-0", "iecbs", "rrr", 1.5, 4, 1, &o),
        ];
        let mut buf = Vec::new();
        write_telemetry(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&TELEMETRY_HEADER.join(",")));
        let back = read_telemetry(text.as_bytes()).unwrap();
        assert_eq!(back, rows);
        let mut again = Vec::new();
        write_telemetry(&back, &mut again).unwrap();
        assert_eq!(again, buf);
    }
}
