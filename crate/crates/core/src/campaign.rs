//! Batch experiments: sweep agent counts, generate instances, run every
//! (highway, solver, restart count) cell through the restart engine and
//! aggregate telemetry, success rates and runtime tails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analysis::{success_table, tail_stats, write_survival_csv, CellConfig, RuntimeSample, SuccessCurve, TailStats};
use crate::cbs::{CbsConfig, CbsMode};
use crate::error::{MapfError, Result};
use crate::grid::GridMap;
use crate::instance::{
    generate_kiva_instance, generate_random_instance, make_highway, Highway, HighwayPolarity, KivaTemplate,
    MapfInstance,
};
use crate::mstar::MstarConfig;
use crate::plot::{plot_success, plot_survival, PlotFormat};
use crate::randomize::{derive_seeds, RandomizationPolicy};
use crate::restart::{run_rrr, run_trials, write_telemetry, Parallelism, RestartSchedule, SolverSpec, TelemetryRow, TrialOutcome};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MAPF_RRR_THREADS";

/// Core count, capped by `MAPF_RRR_THREADS` when set.
pub fn default_workers() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cores.min(cap),
        _ => cores,
    }
}

/// Builds a solver from its command-line name.
///
/// `w` is the suboptimality factor of the CBS variants and the highway weight
/// of M*; `inflation` is M*'s heuristic weight. `highway` is attached to the
/// configuration when given. M* with `w > 1` and no highway inflates every
/// move by `w`, so highway and no-highway runs share a cost bound.
pub fn build_solver(
    name: &str,
    w: f64,
    inflation: f64,
    randomization: RandomizationPolicy,
    highway: Option<Highway>,
) -> Result<SolverSpec> {
    let mode = match name {
        "cbs" => CbsMode::Cbs,
        "ecbs" => CbsMode::Ecbs,
        "cbs_hwy" => CbsMode::CbsHwy,
        "iecbs" => CbsMode::Iecbs,
        "mstar" => {
            return Ok(SolverSpec::Mstar(MstarConfig {
                inflation,
                randomization,
                highway_w: w,
                highway: highway.or_else(|| (w > 1.0).then(Highway::empty)),
                ..MstarConfig::default()
            }))
        }
        other => return Err(MapfError::Usage(format!("unknown solver {other}"))),
    };
    let mut cfg = CbsConfig::new(mode, w).with_randomization(randomization);
    cfg.highway = highway;
    Ok(SolverSpec::Cbs(cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    Kiva { template: KivaTemplate },
    /// Uniformly random starts and goals on a map file.
    Map { map: PathBuf, hwy: Option<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverEntry {
    pub solver: String,
    pub w: f64,
    pub inflation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSweep {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl AgentSweep {
    /// Parses `a:b:step` (inclusive) or a single count.
    pub fn parse(s: &str) -> Result<Self> {
        let nums: Vec<usize> = s
            .split(':')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| MapfError::Usage(format!("bad agent sweep {s:?}, expected a:b:step")))?;
        let sweep = match nums[..] {
            [n] => AgentSweep { start: n, stop: n, step: 1 },
            [a, b] => AgentSweep { start: a, stop: b, step: 1 },
            [a, b, step] => AgentSweep { start: a, stop: b, step },
            _ => return Err(MapfError::Usage(format!("bad agent sweep {s:?}, expected a:b:step"))),
        };
        if sweep.step == 0 {
            return Err(MapfError::usage("agent sweep step must be positive"));
        }
        Ok(sweep)
    }

    pub fn counts(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step.max(1)).collect()
    }
}

/// Everything needed to replay a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub source: InstanceSource,
    pub agents: AgentSweep,
    pub per_count: usize,
    pub solvers: Vec<SolverEntry>,
    /// `none`, `positive`, `negative` for Kiva sources; `none` or `file` for
    /// map sources.
    pub highways: Vec<String>,
    pub restarts: Vec<usize>,
    pub budget_ms: u64,
    /// Divide the budget among the trials (RRR) or give each trial all of it.
    pub divide_budget: bool,
    pub randomization: String,
    pub bias_p: f64,
    pub rrr_parallel: bool,
    pub master_seed: u64,
}

impl CampaignSpec {
    fn mode(&self) -> &'static str {
        if self.divide_budget {
            "rrr"
        } else {
            "trials"
        }
    }
}

/// Results of a campaign, in job order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignResult {
    pub telemetry: Vec<TelemetryRow>,
    pub success: SuccessCurve,
    /// Runtime tails per `solver/highway/k`.
    pub tails: Vec<(String, TailStats)>,
}

struct Job {
    agents: usize,
    instance: usize,
    highway: usize,
    solver: usize,
    k: usize,
}

struct Prepared {
    /// Instances per agent count, in sweep order.
    instances: Vec<(usize, Vec<(u64, MapfInstance)>)>,
    highways: Vec<Option<Highway>>,
    solvers: Vec<Vec<SolverSpec>>,
}

fn prepare(spec: &CampaignSpec) -> Result<Prepared> {
    if spec.restarts.contains(&0) {
        return Err(MapfError::usage("restart counts must be positive"));
    }
    if spec.highways.is_empty() && !spec.solvers.is_empty() {
        return Err(MapfError::usage("at least one highway setting is required"));
    }
    let randomization = RandomizationPolicy::preset(&spec.randomization, spec.bias_p)?;
    let counts = spec.agents.counts();
    let seeds = derive_seeds(spec.master_seed, counts.len() * spec.per_count);

    let (map, file_hwy, template) = match &spec.source {
        InstanceSource::Kiva { template } => {
            template.validate()?;
            (Arc::new(template.build_map()?), None, Some(*template))
        }
        InstanceSource::Map { map, hwy } => {
            let grid = Arc::new(GridMap::parse(&std::fs::read_to_string(map)?)?);
            let hwy = match hwy {
                Some(p) => Some(Highway::parse(&std::fs::read_to_string(p)?, &grid)?),
                None => None,
            };
            (grid, hwy, None)
        }
    };
    let highways = spec
        .highways
        .iter()
        .map(|h| match (h.as_str(), template) {
            ("none", _) => Ok(None),
            ("positive", Some(t)) => make_highway(&t, HighwayPolarity::Positive).map(Some),
            ("negative", Some(t)) => make_highway(&t, HighwayPolarity::Negative).map(Some),
            ("file", None) => file_hwy
                .clone()
                .map(Some)
                .ok_or_else(|| MapfError::usage("highway `file` needs a highway file")),
            (other, _) => Err(MapfError::Usage(format!("highway setting {other} does not fit the instance source"))),
        })
        .collect::<Result<Vec<_>>>()?;

    let solvers = highways
        .iter()
        .map(|hwy| {
            spec.solvers
                .iter()
                .map(|e| {
                    // highway solvers compare against an empty highway, where
                    // every move is inflated alike
                    let needs = matches!(e.solver.as_str(), "cbs_hwy" | "iecbs");
                    let h = match hwy {
                        Some(h) => Some(h.clone()),
                        None if needs => Some(Highway::empty()),
                        None => None,
                    };
                    build_solver(&e.solver, e.w, e.inflation, randomization, h)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut instances = Vec::with_capacity(counts.len());
    for (ci, &count) in counts.iter().enumerate() {
        let mut batch = Vec::with_capacity(spec.per_count);
        for j in 0..spec.per_count {
            let seed = seeds[ci * spec.per_count + j];
            let inst = match template {
                Some(t) => generate_kiva_instance(&t, count, seed)?,
                None => generate_random_instance(map.clone(), count, seed)?,
            };
            batch.push((seed, inst));
        }
        instances.push((count, batch));
    }
    for (_, batch) in &instances {
        for (_, inst) in batch {
            for per_hwy in &solvers {
                for s in per_hwy {
                    crate::restart::TrialSolver::validate(s, inst)?;
                }
            }
        }
    }
    Ok(Prepared {
        instances,
        highways,
        solvers,
    })
}

/// Runs a campaign on up to `workers` threads. Every input is generated and
/// validated before the first solve. Per-trial results depend only on the
/// spec, except where a time budget interrupts a run.
pub fn run_campaign(spec: &CampaignSpec, workers: usize) -> Result<CampaignResult> {
    let prepared = prepare(spec)?;
    let mut jobs = Vec::new();
    for (ai, (_, batch)) in prepared.instances.iter().enumerate() {
        for j in 0..batch.len() {
            for h in 0..prepared.highways.len() {
                for s in 0..spec.solvers.len() {
                    for &k in &spec.restarts {
                        jobs.push(Job {
                            agents: ai,
                            instance: j,
                            highway: h,
                            solver: s,
                            k,
                        });
                    }
                }
            }
        }
    }
    let budget = Duration::from_millis(spec.budget_ms);
    let run_job = |job: &Job| -> Result<Vec<TrialOutcome>> {
        let (seed, inst) = &prepared.instances[job.agents].1[job.instance];
        let solver = &prepared.solvers[job.highway][job.solver];
        let trial_master = derive_seeds(*seed, 1)[0];
        if spec.divide_budget {
            let mut schedule = RestartSchedule::new(budget, job.k)?;
            if spec.rrr_parallel {
                schedule.parallelism = Parallelism::Parallel(default_workers().max(1));
            }
            Ok(run_rrr(inst, solver, &schedule, trial_master)?.outcomes)
        } else {
            run_trials(inst, solver, job.k, budget, trial_master)
        }
    };

    let slots: Mutex<Vec<Option<Result<Vec<TrialOutcome>>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = run_job(&jobs[i]);
                slots.lock().expect("slot lock")[i] = Some(r);
            });
        }
    });

    let mode = spec.mode();
    let mut telemetry = Vec::new();
    let mut attempts = Vec::new();
    let mut samples: BTreeMap<String, RuntimeSample> = BTreeMap::new();
    for (job, slot) in jobs.iter().zip(slots.into_inner().expect("slot lock")) {
        let count = prepared.instances[job.agents].0;
        let entry = &spec.solvers[job.solver];
        let hwy = &spec.highways[job.highway];
        let w = prepared.solvers[job.highway][job.solver].w();
        let cell = CellConfig {
            solver: entry.solver.clone(),
            mode: mode.to_string(),
            w,
            highway: hwy.clone(),
            k: job.k,
        };
        let outcomes = match slot.expect("every job ran") {
            Ok(o) => o,
            Err(e) => {
                // a failing cell is recorded as an attempt without success
                log::warn!("cell failed: {e}");
                Vec::new()
            }
        };
        let instance_id = format!("{count}-{}", job.instance);
        for (t, o) in outcomes.iter().enumerate() {
            telemetry.push(TelemetryRow::new(&instance_id, &entry.solver, mode, w, job.k, t, o));
        }
        samples
            .entry(format!("{}_{}_k{}", entry.solver, hwy, job.k))
            .or_default()
            .runs
            .extend(RuntimeSample::from_outcomes(&outcomes).runs);
        let trials = if outcomes.is_empty() && count > 0 {
            vec![failed_attempt()]
        } else {
            outcomes
        };
        attempts.push((count, cell, trials));
    }
    Ok(CampaignResult {
        telemetry,
        success: success_table(&attempts),
        tails: samples.into_iter().map(|(label, s)| (label, tail_stats(&s))).collect(),
    })
}

fn failed_attempt() -> TrialOutcome {
    TrialOutcome {
        seed: 0,
        status: crate::solution::SolveStatus::Timeout,
        runtime: Duration::ZERO,
        cost: None,
        expansions_high: 0,
        expansions_low: 0,
    }
}

/// Writes `manifest.json`, `telemetry.csv`, `success.csv`, one
/// `survival_<cell>.csv` per solver cell, and plots in `format`.
pub fn write_outputs(spec: &CampaignSpec, result: &CampaignResult, dir: &Path, format: PlotFormat) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = serde_json::to_string_pretty(spec).map_err(|e| MapfError::Usage(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), manifest + "\n")?;
    write_telemetry(&result.telemetry, std::fs::File::create(dir.join("telemetry.csv"))?)?;
    result.success.write_csv(std::fs::File::create(dir.join("success.csv"))?)?;
    for (label, stats) in &result.tails {
        write_survival_csv(stats, std::fs::File::create(dir.join(format!("survival_{label}.csv")))?)?;
    }
    plot_success(&result.success, dir, "success", format)?;
    plot_survival(&result.tails, dir, "survival", format)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<CampaignSpec> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| MapfError::parse(e.line(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> CampaignSpec {
        CampaignSpec {
            source: InstanceSource::Kiva {
                template: KivaTemplate::default(),
            },
            agents: AgentSweep::parse("2:4:2").unwrap(),
            per_count: 2,
            solvers: vec![SolverEntry {
                solver: "ecbs".into(),
                w: 1.5,
                inflation: 1.0,
            }],
            highways: vec!["none".into()],
            restarts: vec![1, 2],
            budget_ms: 20_000,
            divide_budget: true,
            randomization: "permute".into(),
            bias_p: 0.5,
            rrr_parallel: false,
            master_seed: 3,
        }
    }

    #[test]
    fn sweep_parsing() {
        assert_eq!(AgentSweep::parse("10:60:10").unwrap().counts(), vec![10, 20, 30, 40, 50, 60]);
        assert_eq!(AgentSweep::parse("7").unwrap().counts(), vec![7]);
        assert!(AgentSweep::parse("5:2:1").unwrap().counts().is_empty());
        assert!(AgentSweep::parse("1:2:0").is_err());
        assert!(AgentSweep::parse("a:b").is_err());
    }

    #[test]
    fn small_campaign_shape() {
        let r = run_campaign(&spec(), 1).unwrap();
        assert_eq!(r.success.rows.len(), 4);
        assert!(r.success.rows.iter().all(|row| row.attempted == 2 && row.rate == 1.0));
    }

    #[test]
    fn empty_sweep_is_empty() {
        let mut s = spec();
        s.agents = AgentSweep { start: 5, stop: 1, step: 1 };
        let r = run_campaign(&s, 1).unwrap();
        assert!(r.telemetry.is_empty() && r.success.rows.is_empty());
    }

    #[test]
    fn bad_highway_fails_fast() {
        let mut s = spec();
        s.highways = vec!["file".into()];
        assert!(matches!(run_campaign(&s, 1), Err(MapfError::Usage(_))));
    }
}
