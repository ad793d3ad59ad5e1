//! Solution validation, an exhaustive optimal oracle for tiny instances,
//! runtime-distribution statistics and success-rate aggregation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{MapfError, Result};
use crate::grid::VertexId;
use crate::instance::MapfInstance;
use crate::restart::TrialOutcome;
use crate::solution::{find_conflicts, Conflict, Path, SolveStatus};

/// Why one agent's path is not feasible on its own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathDefect {
    Empty,
    WrongStart,
    WrongGoal,
    /// The move from step `t` to `t + 1` is neither a wait nor an edge.
    IllegalStep { t: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub feasible: Vec<bool>,
    pub defects: Vec<(usize, PathDefect)>,
    pub conflicts: Vec<Conflict>,
    pub cost: u64,
}

impl ValidationReport {
    /// Every path feasible and no two paths collide.
    pub fn is_solution(&self) -> bool {
        self.defects.is_empty() && self.conflicts.is_empty()
    }
}

/// Checks endpoints, step legality and pairwise collisions (agents keep
/// occupying their goal after arrival). Trailing waits at the goal are free.
pub fn validate(inst: &MapfInstance, paths: &[Path]) -> Result<ValidationReport> {
    if paths.len() != inst.num_agents() {
        return Err(MapfError::usage(format!(
            "{} paths for {} agents",
            paths.len(),
            inst.num_agents()
        )));
    }
    let mut defects = Vec::new();
    for (j, (path, agent)) in paths.iter().zip(&inst.agents).enumerate() {
        let steps = path.steps();
        if steps.is_empty() {
            defects.push((j, PathDefect::Empty));
            continue;
        }
        if steps[0] != agent.start {
            defects.push((j, PathDefect::WrongStart));
        }
        if steps[steps.len() - 1] != agent.goal {
            defects.push((j, PathDefect::WrongGoal));
        }
        for (t, pair) in steps.windows(2).enumerate() {
            let off_map = !inst.map.contains(pair[0]) || !inst.map.contains(pair[1]);
            if off_map || (pair[0] != pair[1] && !inst.map.is_edge(pair[0], pair[1])) {
                defects.push((j, PathDefect::IllegalStep { t }));
            }
        }
    }
    let mut feasible = vec![true; paths.len()];
    for (j, _) in &defects {
        feasible[*j] = false;
    }
    let conflicts = if paths.iter().any(Path::is_empty) {
        Vec::new()
    } else {
        find_conflicts(paths)
    };
    let cost = paths.iter().map(|p| Path::new(p.steps().to_vec()).cost()).sum();
    Ok(ValidationReport {
        feasible,
        defects,
        conflicts,
        cost,
    })
}

pub const ORACLE_MAX_AGENTS: usize = 4;
pub const ORACLE_MAX_VERTICES: usize = 36;

/// Exact minimum sum of travel times by uniform-cost search over joint
/// states `(positions, finished flags)`, or `None` when no solution exists.
///
/// An agent on its goal may finish, after which it stays and costs nothing;
/// every unfinished agent costs 1 per step. Refuses instances beyond
/// [`ORACLE_MAX_AGENTS`] agents or [`ORACLE_MAX_VERTICES`] vertices, and
/// requires `horizon >= |V| * K`.
pub fn oracle_optimal(inst: &MapfInstance, horizon: u64) -> Result<Option<u64>> {
    let k = inst.num_agents();
    let n = inst.map.num_vertices();
    if k > ORACLE_MAX_AGENTS || n > ORACLE_MAX_VERTICES {
        return Err(MapfError::Refused(format!(
            "oracle handles at most {ORACLE_MAX_AGENTS} agents on {ORACLE_MAX_VERTICES} vertices, got {k} on {n}"
        )));
    }
    if horizon < (n * k) as u64 {
        return Err(MapfError::usage(format!("horizon {horizon} is below |V|*K = {}", n * k)));
    }
    // 6 bits of vertex and 1 finished bit per agent
    let pack = |pos: &[usize], fin: &[bool]| -> u32 {
        pos.iter()
            .zip(fin)
            .enumerate()
            .map(|(i, (&p, &f))| ((p as u32) | ((f as u32) << 6)) << (7 * i))
            .sum()
    };
    let unpack = |code: u32| -> (Vec<usize>, Vec<bool>) {
        (0..k)
            .map(|i| {
                let x = (code >> (7 * i)) & 0x7f;
                ((x & 0x3f) as usize, x & 0x40 != 0)
            })
            .unzip()
    };
    let goals: Vec<usize> = inst.agents.iter().map(|a| a.goal.index()).collect();
    let starts: Vec<usize> = inst.agents.iter().map(|a| a.start.index()).collect();
    let start = pack(&starts, &vec![false; k]);

    let mut best: HashMap<u32, u64> = HashMap::from([(start, 0)]);
    let mut heap = BinaryHeap::from([Reverse((0u64, start))]);
    while let Some(Reverse((cost, code))) = heap.pop() {
        if best[&code] < cost {
            continue;
        }
        let (pos, fin) = unpack(code);
        if pos == goals {
            return Ok(Some(cost));
        }
        let step_cost = fin.iter().filter(|f| !**f).count() as u64;
        // per-agent action lists: (new vertex, finished after the step)
        let actions: Vec<Vec<(usize, bool)>> = (0..k)
            .map(|i| {
                if fin[i] {
                    return vec![(pos[i], true)];
                }
                let mut acts = vec![(pos[i], false)];
                acts.extend(inst.map.adjacent(VertexId(pos[i] as u32)).iter().map(|u| (u.index(), false)));
                if pos[i] == goals[i] {
                    acts.push((pos[i], true));
                }
                acts
            })
            .collect();
        let mut choice = vec![0usize; k];
        'product: loop {
            let next: Vec<(usize, bool)> = (0..k).map(|i| actions[i][choice[i]]).collect();
            let legal = (0..k).all(|a| {
                (a + 1..k).all(|b| {
                    let vertex = next[a].0 == next[b].0;
                    let swap = next[a].0 == pos[b] && next[b].0 == pos[a] && pos[a] != pos[b];
                    !vertex && !swap
                })
            });
            if legal {
                let np: Vec<usize> = next.iter().map(|x| x.0).collect();
                let nf: Vec<bool> = next.iter().map(|x| x.1).collect();
                // finishing happens in place, so it is charged like the wait
                // that precedes it only when the agent was not already done
                let c = cost + step_cost - nf.iter().zip(&fin).filter(|(n, f)| **n && !**f).count() as u64;
                let nc = pack(&np, &nf);
                if best.get(&nc).is_none_or(|&b| c < b) {
                    best.insert(nc, c);
                    heap.push(Reverse((c, nc)));
                }
            }
            for i in 0..k {
                choice[i] += 1;
                if choice[i] < actions[i].len() {
                    continue 'product;
                }
                choice[i] = 0;
            }
            break;
        }
    }
    Ok(None)
}

/// Runtimes in milliseconds; censored entries are timeouts whose true
/// runtime exceeds the recorded value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuntimeSample {
    pub runs: Vec<(f64, bool)>,
}

impl RuntimeSample {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a TrialOutcome>) -> Self {
        RuntimeSample {
            runs: outcomes
                .into_iter()
                .map(|o| (o.runtime.as_secs_f64() * 1000.0, o.status != SolveStatus::Solved))
                .collect(),
        }
    }

    fn uncensored(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.runs.iter().filter(|r| !r.1).map(|r| r.0).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TailStats {
    pub median: Option<f64>,
    pub mad: Option<f64>,
    /// `(t, S(t))` at log-spaced `t`.
    pub survival: Vec<(f64, f64)>,
    /// Slope of `log S` against `log t` over the top decile of the sample.
    pub tail_slope: Option<f64>,
    pub tail_r2: Option<f64>,
    /// Largest recorded runtime, censored runs included at their bound, over
    /// the uncensored median; a lower bound when the largest run timed out.
    pub max_over_median: Option<f64>,
}

pub const MIN_RUNS_FOR_SLOPE: usize = 10;
const SURVIVAL_POINTS: usize = 40;

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Least-squares line through `(x, y)`, returned as `(slope, r2)`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// Median/MAD over uncensored runs, the survival curve and max/median over
/// all runs, and a log-log fit of the upper tail.
///
/// Censored runs count as still running at every `t` below their recorded
/// bound. The tail fit uses the uncensored order statistics of the top decile
/// with `S = (number of runs strictly above) / n`.
pub fn tail_stats(sample: &RuntimeSample) -> TailStats {
    let done = sample.uncensored();
    let n = sample.runs.len();
    let mut stats = TailStats::default();
    if !done.is_empty() {
        let med = median_sorted(&done);
        let mut dev: Vec<f64> = done.iter().map(|x| (x - med).abs()).collect();
        dev.sort_by(f64::total_cmp);
        stats.median = Some(med);
        stats.mad = Some(median_sorted(&dev));
        let max = sample.runs.iter().map(|r| r.0).fold(f64::MIN, f64::max);
        if med > 0.0 {
            stats.max_over_median = Some(max / med);
        }
    }
    let positive: Vec<f64> = sample.runs.iter().map(|r| r.0).filter(|&x| x > 0.0).collect();
    if let (Some(lo), Some(hi)) = (
        positive.iter().copied().reduce(f64::min),
        positive.iter().copied().reduce(f64::max),
    ) {
        let steps = if hi > lo { SURVIVAL_POINTS } else { 1 };
        for i in 0..steps {
            let frac = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
            let t = lo * (hi / lo).powf(frac);
            let above = sample
                .runs
                .iter()
                .filter(|(x, censored)| *x > t || (*censored && *x >= t))
                .count();
            stats.survival.push((t, above as f64 / n as f64));
        }
    }
    if done.len() >= MIN_RUNS_FOR_SLOPE {
        let mut all: Vec<(f64, bool)> = sample.runs.clone();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let first = n - n.div_ceil(10);
        let points: Vec<(f64, f64)> = (first..n)
            .filter(|&i| !all[i].1 && all[i].0 > 0.0)
            .filter_map(|i| {
                let above = all.iter().filter(|r| r.0 > all[i].0 || (r.1 && r.0 >= all[i].0)).count();
                (above > 0).then(|| (all[i].0.ln(), (above as f64 / n as f64).ln()))
            })
            .collect();
        if points.len() >= 3 {
            if let Some((slope, r2)) = linear_fit(&points) {
                stats.tail_slope = Some(slope);
                stats.tail_r2 = Some(r2);
            }
        }
    }
    stats
}

pub fn write_survival_csv<W: Write>(stats: &TailStats, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_ms", "survival_fraction"])?;
    for (t, s) in &stats.survival {
        w.write_record([format!("{t:.3}"), format!("{s:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

/// One configuration of a success-rate sweep.
#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CellConfig {
    pub solver: String,
    /// `rrr` when the budget is divided among the trials, `trials` when each
    /// trial gets the full budget.
    pub mode: String,
    pub w: f64,
    pub highway: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRow {
    pub agents: usize,
    pub solver: String,
    pub mode: String,
    pub w: f64,
    pub highway: String,
    pub k: usize,
    pub solved: usize,
    pub attempted: usize,
    pub rate: f64,
}

/// Success counts per `(configuration, agent count)`, in sorted order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuccessCurve {
    pub rows: Vec<SuccessRow>,
}

impl SuccessCurve {
    pub fn rate(&self, cfg: &CellConfig, agents: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.agents == agents
                    && r.solver == cfg.solver
                    && r.mode == cfg.mode
                    && r.w == cfg.w
                    && r.highway == cfg.highway
                    && r.k == cfg.k
            })
            .map(|r| r.rate)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(["agents", "solver", "mode", "w", "highway", "k", "solved", "attempted", "rate"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r.deserialize().collect::<std::result::Result<Vec<SuccessRow>, _>>()?;
        Ok(SuccessCurve { rows })
    }
}

/// Solver, mode, w bits, highway, k and agent count.
type GroupKey = (String, String, u64, String, usize, usize);

/// Aggregates instance attempts into success rates. An attempt succeeds when
/// any of its trials solved the instance; attempts with zero agents always
/// count as solved. Groups without attempts are dropped with a warning.
pub fn success_table(outcomes: &[(usize, CellConfig, Vec<TrialOutcome>)]) -> SuccessCurve {
    let mut groups: BTreeMap<GroupKey, (usize, usize)> = BTreeMap::new();
    for (agents, cfg, trials) in outcomes {
        let key = (
            cfg.solver.clone(),
            cfg.mode.clone(),
            cfg.w.to_bits(),
            cfg.highway.clone(),
            cfg.k,
            *agents,
        );
        let entry = groups.entry(key).or_default();
        if trials.is_empty() && *agents > 0 {
            log::warn!("attempt with no trials for {} agents, {:?}", agents, cfg);
            continue;
        }
        entry.1 += 1;
        if *agents == 0 || trials.iter().any(|t| t.status == SolveStatus::Solved) {
            entry.0 += 1;
        }
    }
    let rows = groups
        .into_iter()
        .filter_map(|((solver, mode, w, highway, k, agents), (solved, attempted))| {
            if attempted == 0 {
                log::warn!("empty group: {agents} agents, {solver}/{mode}, k={k}");
                return None;
            }
            Some(SuccessRow {
                agents,
                solver,
                mode,
                w: f64::from_bits(w),
                highway,
                k,
                solved,
                attempted,
                rate: solved as f64 / attempted as f64,
            })
        })
        .collect();
    SuccessCurve { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, GridMap};
    use crate::instance::AgentSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;
    use std::time::Duration;

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

    fn path(i: &MapfInstance, cells: &[(u32, u32)]) -> Path {
        Path::new(cells.iter().map(|&(r, c)| i.map.vertex_at(Cell::new(r, c)).unwrap()).collect())
    }

    #[test]
    fn swap_reports_one_edge_conflict() {
        let i = inst(2, 1, &[((0, 0), (0, 1)), ((0, 1), (0, 0))]);
        let r = validate(&i, &[path(&i, &[(0, 0), (0, 1)]), path(&i, &[(0, 1), (0, 0)])]).unwrap();
        assert!(r.defects.is_empty());
        assert_eq!(r.conflicts.len(), 1);
        let c = r.conflicts[0];
        assert_eq!((c.j, c.k, c.t), (0, 1, 0));
        assert_eq!(c.v1, i.map.vertex_at(Cell::new(0, 0)).unwrap());
        assert_eq!(c.v2, i.map.vertex_at(Cell::new(0, 1)));
    }

    #[test]
    fn wrong_last_vertex_is_a_defect() {
        let i = inst(3, 1, &[((0, 0), (0, 2))]);
        let r = validate(&i, &[path(&i, &[(0, 0), (0, 1)])]).unwrap();
        assert_eq!(r.defects, vec![(0, PathDefect::WrongGoal)]);
        assert!(!r.feasible[0]);
    }

    #[test]
    fn teleport_is_a_defect() {
        let i = inst(3, 1, &[((0, 0), (0, 2))]);
        let r = validate(&i, &[path(&i, &[(0, 0), (0, 2)])]).unwrap();
        assert_eq!(r.defects, vec![(0, PathDefect::IllegalStep { t: 0 })]);
    }

    #[test]
    fn count_mismatch_is_usage_error() {
        let i = inst(3, 1, &[((0, 0), (0, 2))]);
        assert!(matches!(validate(&i, &[]), Err(MapfError::Usage(_))));
    }

    #[test]
    fn oracle_examples() {
        let single = inst(3, 3, &[((0, 0), (2, 2))]);
        assert_eq!(oracle_optimal(&single, 9).unwrap(), Some(4));
        let corridor = inst(3, 1, &[((0, 0), (0, 2)), ((0, 2), (0, 0))]);
        assert_eq!(oracle_optimal(&corridor, 6).unwrap(), None);
        // frozen after cross-checking with the solvers
        let crossing = inst(3, 3, &[((1, 0), (1, 2)), ((1, 2), (1, 0))]);
        assert_eq!(oracle_optimal(&crossing, 18).unwrap(), Some(6));
    }

    #[test]
    fn oracle_charges_leaving_the_goal() {
        // agent 1 sits on its goal in the middle of a 1x3 corridor plus a bay
        let map = Arc::new(GridMap::new(3, 2, [Cell::new(1, 0), Cell::new(1, 2)]).unwrap());
        let v = |r, c| map.vertex_at(Cell::new(r, c)).unwrap();
        let agents = vec![
            AgentSpec { id: 0, start: v(0, 0), goal: v(0, 2) },
            AgentSpec { id: 1, start: v(0, 1), goal: v(0, 1) },
        ];
        let i = MapfInstance::new(map.clone(), agents, None).unwrap();
        assert_eq!(oracle_optimal(&i, 8).unwrap(), Some(4));
    }

    #[test]
    fn oracle_guards() {
        let big = inst(7, 6, &[((0, 0), (1, 1))]);
        assert!(matches!(oracle_optimal(&big, 100), Err(MapfError::Refused(_))));
        let small = inst(3, 3, &[((0, 0), (1, 1))]);
        assert!(matches!(oracle_optimal(&small, 8), Err(MapfError::Usage(_))));
    }

    #[test]
    fn constant_sample() {
        let s = RuntimeSample {
            runs: vec![(5.0, false); 12],
        };
        let t = tail_stats(&s);
        assert_eq!(t.median, Some(5.0));
        assert_eq!(t.mad, Some(0.0));
    }

    #[test]
    fn all_censored_sample() {
        let s = RuntimeSample {
            runs: vec![(1000.0, true); 20],
        };
        let t = tail_stats(&s);
        assert_eq!(t.median, None);
        assert_eq!(t.mad, None);
        assert_eq!(t.tail_slope, None);
        assert_eq!(t.survival, vec![(1000.0, 1.0)]);
    }

    #[test]
    fn timeouts_bound_the_maximum() {
        let mut runs: Vec<(f64, bool)> = (1..=9).map(|x| (x as f64, false)).collect();
        runs.push((100.0, true));
        let t = tail_stats(&RuntimeSample { runs });
        assert_eq!(t.median, Some(5.0));
        assert_eq!(t.max_over_median, Some(20.0));
    }

    #[test]
    fn too_few_runs_have_no_slope() {
        let s = RuntimeSample {
            runs: (1..=9).map(|x| (x as f64, false)).collect(),
        };
        let t = tail_stats(&s);
        assert_eq!(t.median, Some(5.0));
        assert_eq!(t.tail_slope, None);
    }

    #[test]
    fn pareto_and_exponential_tails() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pareto = RuntimeSample {
                runs: (0..10_000).map(|_| (1.0 / (1.0 - rng.random::<f64>()), false)).collect(),
            };
            let expo = RuntimeSample {
                runs: (0..10_000).map(|_| (-(1.0 - rng.random::<f64>()).ln(), false)).collect(),
            };
            let p = tail_stats(&pareto).tail_slope.unwrap();
            let e = tail_stats(&expo).tail_slope.unwrap();
            assert!((p + 1.0).abs() <= 0.2, "seed {seed}: pareto slope {p}");
            assert!(e < -2.0, "seed {seed}: exponential slope {e}");
        }
    }

    fn outcome(status: SolveStatus) -> TrialOutcome {
        TrialOutcome {
            seed: 0,
            status,
            runtime: Duration::from_millis(1),
            cost: (status == SolveStatus::Solved).then_some(1),
            expansions_high: 0,
            expansions_low: 0,
        }
    }

    fn cell(k: usize) -> CellConfig {
        CellConfig {
            solver: "mstar".into(),
            mode: "rrr".into(),
            w: 1.0,
            highway: "none".into(),
            k,
        }
    }

    #[test]
    fn success_rates() {
        let mut data = Vec::new();
        for i in 0..100 {
            let s = if i < 37 { SolveStatus::Solved } else { SolveStatus::Timeout };
            data.push((10, cell(1), vec![outcome(s)]));
        }
        data.push((0, cell(1), vec![]));
        let curve = success_table(&data);
        assert_eq!(curve.rate(&cell(1), 10), Some(0.37));
        assert_eq!(curve.rate(&cell(1), 0), Some(1.0));
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("agents,solver,mode,w,highway,k,solved,attempted,rate\n"));
        assert_eq!(SuccessCurve::read_csv(text.as_bytes()).unwrap(), curve);
    }
}
