//! Conflict-based search and its bounded-suboptimal variants.
//!
//! | mode      | low level                              | high level                       |
//! |-----------|----------------------------------------|----------------------------------|
//! | `Cbs`     | A*, exact heuristic                    | best-first on cost               |
//! | `Ecbs`    | focal(w), conflict count               | focal(w) over `cost <= w * LB`   |
//! | `CbsHwy`  | A* with highway-inflated heuristic     | best-first on cost               |
//! | `Iecbs`   | focal(w), conflicts then highway value | as ECBS, ties by highway score   |
//!
//! All modes share one high-level loop. The high level keeps a FOCAL list of
//! the open nodes whose cost is within `w` (1 for the best-first modes) of the
//! smallest lower bound among open nodes, ordered by conflict count.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::rc::Rc;
use std::time::Instant;

use ordered_float::OrderedFloat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::budget::StopSignal;
use crate::error::{MapfError, Result};
use crate::grid::VertexId;
use crate::instance::{Highway, MapfInstance};
use crate::low_level::{
    build_heuristic, highway_path_cost, Constraint, ConstraintTable, FocalParams, HeuristicTable,
    LowLevelQuery, ReservationTable, SearchFailure, SearchStats,
};
use crate::randomize::{pick_rank, RandomizationPolicy, RankPolicy};
use crate::solution::{count_conflicts, find_conflicts, Conflict, ConflictKind, Path, Solution, SolveOutcome, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CbsMode {
    Cbs,
    Ecbs,
    CbsHwy,
    Iecbs,
}

impl CbsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CbsMode::Cbs => "cbs",
            CbsMode::Ecbs => "ecbs",
            CbsMode::CbsHwy => "cbs_hwy",
            CbsMode::Iecbs => "iecbs",
        }
    }

    pub fn needs_highway(&self) -> bool {
        matches!(self, CbsMode::CbsHwy | CbsMode::Iecbs)
    }

    fn uses_focal_low_level(&self) -> bool {
        matches!(self, CbsMode::Ecbs | CbsMode::Iecbs)
    }
}

#[derive(Debug, Clone)]
pub struct CbsConfig {
    pub mode: CbsMode,
    /// Suboptimality factor; ignored (treated as 1) in `Cbs` mode.
    pub w: f64,
    /// Falls back to the instance's highway when `None`.
    pub highway: Option<Highway>,
    pub randomization: RandomizationPolicy,
    /// Root planning order. `None` means `0..K`, or a seeded permutation when
    /// `randomization.permute_agents` is set.
    pub agent_order: Option<Vec<usize>>,
    /// Joint-state budget of the infeasibility certificate run before the
    /// search. Conflict trees are unbounded on unsolvable instances, so
    /// without it those instances can only time out.
    pub reachability_limit: u64,
}

impl CbsConfig {
    pub fn new(mode: CbsMode, w: f64) -> Self {
        CbsConfig {
            mode,
            w,
            highway: None,
            randomization: RandomizationPolicy::none(),
            agent_order: None,
            reachability_limit: 1_000_000,
        }
    }

    pub fn with_highway(mut self, highway: Highway) -> Self {
        self.highway = Some(highway);
        self
    }

    pub fn with_randomization(mut self, policy: RandomizationPolicy) -> Self {
        self.randomization = policy;
        self
    }

    pub fn effective_w(&self) -> f64 {
        if self.mode == CbsMode::Cbs {
            1.0
        } else {
            self.w
        }
    }

    /// Checks the configuration against an instance without running anything.
    pub fn validate(&self, inst: &MapfInstance) -> Result<()> {
        if self.w.is_nan() || self.w < 1.0 {
            return Err(MapfError::usage(format!("w must be at least 1, got {}", self.w)));
        }
        self.randomization.validate()?;
        if self.mode.needs_highway() && self.highway.is_none() && inst.highway.is_none() {
            return Err(MapfError::usage(format!("{} requires a highway", self.mode.as_str())));
        }
        if let Some(order) = &self.agent_order {
            let mut seen = vec![false; inst.num_agents()];
            for &a in order {
                if a >= seen.len() || std::mem::replace(&mut seen[a], true) {
                    return Err(MapfError::usage("agent_order is not a permutation of 0..K"));
                }
            }
            if order.len() != inst.num_agents() {
                return Err(MapfError::usage("agent_order is not a permutation of 0..K"));
            }
        }
        Ok(())
    }
}

/// Picks one node from a FOCAL list sorted best-first.
pub fn pick_high_level_node<'a, T, R: Rng + ?Sized>(focal: &'a [T], policy: RankPolicy, rng: &mut R) -> Result<&'a T> {
    if focal.is_empty() {
        return Err(MapfError::usage("empty FOCAL list"));
    }
    Ok(&focal[pick_rank(focal.len(), policy, rng)])
}

/// Picks the conflict to split on from a list sorted by `(t, j, k, kind)`.
pub fn pick_conflict<R: Rng + ?Sized>(conflicts: &[Conflict], policy: RankPolicy, rng: &mut R) -> Result<Conflict> {
    if conflicts.is_empty() {
        return Err(MapfError::usage("no conflict to choose from"));
    }
    Ok(conflicts[pick_rank(conflicts.len(), policy, rng)])
}

/// The two constraints that split a conflict, for agent `j` and agent `k`.
pub fn split_conflict(c: &Conflict) -> [Constraint; 2] {
    match c.kind {
        ConflictKind::Vertex => [Constraint::vertex(c.j, c.v1, c.t), Constraint::vertex(c.k, c.v1, c.t)],
        ConflictKind::Edge => {
            let v2 = c.v2.expect("edge conflicts carry v2");
            [Constraint::edge(c.j, c.v1, v2, c.t), Constraint::edge(c.k, v2, c.v1, c.t)]
        }
    }
}

/// Outcome of the bounded joint-space reachability check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reachability {
    GoalReachable,
    GoalUnreachable,
    Unknown,
}

/// Breadth-first search over joint positions (no costs) to certify that the
/// goal configuration cannot be reached. Gives up with `Unknown` when the
/// joint space may exceed `limit` states.
pub fn joint_reachability(inst: &MapfInstance, limit: u64, stop: &StopSignal) -> Reachability {
    let k = inst.num_agents() as u32;
    let n = inst.map.num_vertices() as u64;
    if k == 0 {
        return Reachability::GoalReachable;
    }
    if n.checked_pow(k).is_none_or(|states| states > limit) {
        return Reachability::Unknown;
    }
    let map = &inst.map;
    let start: Vec<VertexId> = inst.agents.iter().map(|a| a.start).collect();
    let goal: Vec<VertexId> = inst.agents.iter().map(|a| a.goal).collect();
    let mut seen: HashSet<Vec<VertexId>> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    let mut next = Vec::with_capacity(k as usize);
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            return Reachability::GoalReachable;
        }
        if stop.should_stop() {
            return Reachability::Unknown;
        }
        next.clear();
        let mut enumerate = |next: &mut Vec<VertexId>, seen: &mut HashSet<Vec<VertexId>>| {
            fn rec(
                i: usize,
                cur: &[VertexId],
                next: &mut Vec<VertexId>,
                map: &crate::grid::GridMap,
                out: &mut dyn FnMut(&[VertexId]),
            ) {
                if i == cur.len() {
                    out(next);
                    return;
                }
                let here = cur[i];
                for to in std::iter::once(here).chain(map.adjacent(here).iter().copied()) {
                    let clash = (0..i).any(|j| next[j] == to || (next[j] == here && cur[j] == to));
                    if clash {
                        continue;
                    }
                    next.push(to);
                    rec(i + 1, cur, next, map, out);
                    next.pop();
                }
            }
            rec(0, &cur, next, map, &mut |s| {
                if !seen.contains(s) {
                    seen.insert(s.to_vec());
                    queue.push_back(s.to_vec());
                }
            });
        };
        enumerate(&mut next, &mut seen);
    }
    Reachability::GoalUnreachable
}

/// High-level search node. Constraints are stored as a chain through parents.
#[derive(Debug, Clone)]
pub(crate) struct HighLevelNode {
    pub parent: Option<usize>,
    pub constraint: Option<Constraint>,
    pub paths: Vec<Rc<Path>>,
    pub lbs: Vec<f64>,
    pub cost: u64,
    pub lb: f64,
    pub conflict_count: usize,
    pub hwy_score: f64,
}

impl HighLevelNode {
    fn focal_key(&self, id: usize) -> FocalKey {
        (self.conflict_count, OrderedFloat(self.hwy_score), self.cost, id)
    }
}

type FocalKey = (usize, OrderedFloat<f64>, u64, usize);

const EPS: f64 = 1e-9;

/// OPEN/FOCAL bookkeeping of the high level.
#[derive(Default)]
struct HighLevelOpen {
    by_lb: BTreeSet<(OrderedFloat<f64>, usize)>,
    pending: BTreeSet<(u64, usize)>,
    focal: BTreeSet<FocalKey>,
    anchor: f64,
}

impl HighLevelOpen {
    fn bound(&self, w: f64) -> f64 {
        w * self.anchor + EPS
    }

    fn insert(&mut self, nodes: &[HighLevelNode], id: usize, w: f64) {
        let n = &nodes[id];
        if self.by_lb.is_empty() {
            self.anchor = n.lb;
        } else if n.lb < self.anchor {
            // the anchor can drop when a weighted low level returns a cheaper
            // path than its parent's; shrink FOCAL accordingly
            self.anchor = n.lb;
            let bound = self.bound(w);
            let evicted: Vec<FocalKey> = self.focal.iter().filter(|k| k.2 as f64 > bound).copied().collect();
            for k in evicted {
                self.focal.remove(&k);
                self.pending.insert((k.2, k.3));
            }
        }
        self.by_lb.insert((OrderedFloat(n.lb), id));
        if n.cost as f64 <= self.bound(w) {
            self.focal.insert(n.focal_key(id));
        } else {
            self.pending.insert((n.cost, id));
        }
    }

    fn remove_focal(&mut self, nodes: &[HighLevelNode], key: FocalKey, w: f64) {
        let id = key.3;
        self.focal.remove(&key);
        self.by_lb.remove(&(OrderedFloat(nodes[id].lb), id));
        if let Some(&(OrderedFloat(lb), _)) = self.by_lb.first() {
            if lb > self.anchor {
                self.anchor = lb;
                let bound = self.bound(w);
                while let Some(&(cost, pid)) = self.pending.first() {
                    if cost as f64 > bound {
                        break;
                    }
                    self.pending.pop_first();
                    self.focal.insert(nodes[pid].focal_key(pid));
                }
            }
        }
    }
}

struct CbsSolver<'a> {
    inst: &'a MapfInstance,
    cfg: &'a CbsConfig,
    stop: &'a StopSignal,
    rng: ChaCha8Rng,
    w: f64,
    highway: Option<&'a Highway>,
    exact: Vec<HeuristicTable>,
    inflated: Vec<HeuristicTable>,
    nodes: Vec<HighLevelNode>,
    stats: SearchStats,
    expansions_high: u64,
}

enum Replan {
    Found { path: Path, lb: f64 },
    Failed,
    Interrupted,
}

impl<'a> CbsSolver<'a> {
    fn constraints_for(&self, mut node: Option<usize>, agent: usize) -> ConstraintTable {
        let goal = self.inst.agents[agent].goal;
        let mut table = ConstraintTable::default();
        while let Some(id) = node {
            let n = &self.nodes[id];
            if let Some(c) = n.constraint.filter(|c| c.agent == agent) {
                table.add(goal, &c);
            }
            node = n.parent;
        }
        table
    }

    fn plan(&mut self, agent: usize, constraints: &ConstraintTable, others: &[&Path]) -> Replan {
        let spec = &self.inst.agents[agent];
        let heuristic = if self.cfg.mode == CbsMode::CbsHwy {
            &self.inflated[agent]
        } else {
            &self.exact[agent]
        };
        let query = LowLevelQuery {
            map: &self.inst.map,
            agent: spec,
            constraints,
            heuristic,
            stop: self.stop,
        };
        let result = if self.cfg.mode.uses_focal_low_level() {
            let reserved = ReservationTable::new(others.iter().copied());
            let tie = (self.cfg.mode == CbsMode::Iecbs).then(|| &self.inflated[agent]);
            query
                .focal(
                    FocalParams {
                        w: self.w,
                        others: &reserved,
                        tie_heuristic: tie,
                        policy: RandomizationPolicy::rank(self.cfg.randomization.ll_focal),
                        rng: &mut self.rng,
                        trace: None,
                    },
                    &mut self.stats,
                )
                .map(|fp| (fp.path, fp.lower_bound))
        } else {
            query.astar(&mut self.stats).map(|p| {
                let c = p.cost() as f64;
                (p, c)
            })
        };
        match result {
            Ok((path, lb)) => Replan::Found { path, lb },
            Err(SearchFailure::Infeasible) => Replan::Failed,
            Err(SearchFailure::Interrupted) => Replan::Interrupted,
        }
    }

    fn hwy_score(&self, paths: &[Rc<Path>]) -> f64 {
        match (self.cfg.mode, self.highway) {
            (CbsMode::Iecbs, Some(h)) => paths.iter().map(|p| highway_path_cost(p, h, self.w)).sum(),
            _ => 0.0,
        }
    }

    fn agent_order(&mut self) -> Vec<usize> {
        if let Some(order) = &self.cfg.agent_order {
            return order.clone();
        }
        let mut order: Vec<usize> = (0..self.inst.num_agents()).collect();
        if self.cfg.randomization.permute_agents {
            order.shuffle(&mut self.rng);
        }
        order
    }

    fn root(&mut self) -> std::result::Result<Option<HighLevelNode>, ()> {
        let k = self.inst.num_agents();
        let order = self.agent_order();
        let mut paths: Vec<Option<Rc<Path>>> = vec![None; k];
        let mut lbs = vec![0.0; k];
        let empty = ConstraintTable::default();
        for &agent in &order {
            let planned: Vec<Rc<Path>> = paths.iter().flatten().cloned().collect();
            let others: Vec<&Path> = planned.iter().map(|p| p.as_ref()).collect();
            match self.plan(agent, &empty, &others) {
                Replan::Found { path, lb } => {
                    paths[agent] = Some(Rc::new(path));
                    lbs[agent] = lb;
                }
                Replan::Failed => return Ok(None),
                Replan::Interrupted => return Err(()),
            }
        }
        let paths: Vec<Rc<Path>> = paths.into_iter().map(|p| p.expect("every agent planned")).collect();
        let plain: Vec<Path> = paths.iter().map(|p| (**p).clone()).collect();
        Ok(Some(HighLevelNode {
            parent: None,
            constraint: None,
            cost: paths.iter().map(|p| p.cost()).sum(),
            lb: lbs.iter().sum(),
            conflict_count: find_conflicts(&plain).len(),
            hwy_score: self.hwy_score(&paths),
            paths,
            lbs,
        }))
    }

    /// Child of `parent` with one extra constraint, replanning only the
    /// constrained agent. `Ok(None)` when that agent has no path left.
    fn child(&mut self, parent: usize, constraint: Constraint) -> std::result::Result<Option<HighLevelNode>, ()> {
        let agent = constraint.agent;
        let mut table = self.constraints_for(Some(parent), agent);
        table.add(self.inst.agents[agent].goal, &constraint);
        let parent_paths = self.nodes[parent].paths.clone();
        let others: Vec<&Path> = parent_paths
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != agent)
            .map(|(_, p)| p.as_ref())
            .collect();
        let (path, lb) = match self.plan(agent, &table, &others) {
            Replan::Found { path, lb } => (path, lb),
            Replan::Failed => return Ok(None),
            Replan::Interrupted => return Err(()),
        };
        let others_owned: Vec<Path> = others.iter().map(|p| (*p).clone()).collect();
        let p = &self.nodes[parent];
        let old = count_conflicts(&p.paths[agent], &others_owned);
        let new = count_conflicts(&path, &others_owned);
        let mut lbs = p.lbs.clone();
        lbs[agent] = lbs[agent].max(lb);
        let mut paths = p.paths.clone();
        let cost = p.cost - paths[agent].cost() + path.cost();
        paths[agent] = Rc::new(path);
        Ok(Some(HighLevelNode {
            parent: Some(parent),
            constraint: Some(constraint),
            cost,
            lb: lbs.iter().sum(),
            conflict_count: p.conflict_count - old + new,
            hwy_score: self.hwy_score(&paths),
            paths,
            lbs,
        }))
    }

    fn outcome(&self, status: SolveStatus, solution: Option<Solution>, started: Instant) -> SolveOutcome {
        SolveOutcome {
            status,
            solution,
            expansions_high: self.expansions_high,
            expansions_low: self.stats.expansions,
            runtime: started.elapsed(),
        }
    }

    fn interrupted(&self, started: Instant) -> SolveOutcome {
        let status = if self.stop.is_cancelled() {
            SolveStatus::Cancelled
        } else {
            SolveStatus::Timeout
        };
        self.outcome(status, None, started)
    }

    fn run(mut self, started: Instant) -> SolveOutcome {
        match joint_reachability(self.inst, self.cfg.reachability_limit, self.stop) {
            Reachability::GoalUnreachable => return self.outcome(SolveStatus::Infeasible, None, started),
            Reachability::Unknown if self.stop.should_stop() => return self.interrupted(started),
            _ => {}
        }
        let root = match self.root() {
            Ok(Some(root)) => root,
            Ok(None) => return self.outcome(SolveStatus::Infeasible, None, started),
            Err(()) => return self.interrupted(started),
        };
        self.nodes.push(root);
        let hl_w = match self.cfg.mode {
            CbsMode::Ecbs | CbsMode::Iecbs => self.w,
            CbsMode::Cbs | CbsMode::CbsHwy => 1.0,
        };
        let hl_policy = RandomizationPolicy::rank(self.cfg.randomization.hl_focal);
        let conflict_policy = RandomizationPolicy::rank(self.cfg.randomization.conflict);
        let mut open = HighLevelOpen::default();
        open.insert(&self.nodes, 0, hl_w);

        loop {
            if open.focal.is_empty() {
                return self.outcome(SolveStatus::Infeasible, None, started);
            }
            if self.stop.should_stop() {
                return self.interrupted(started);
            }
            let rank = pick_rank(open.focal.len(), hl_policy, &mut self.rng);
            let key = *open.focal.iter().nth(rank).expect("rank within FOCAL");
            open.remove_focal(&self.nodes, key, hl_w);
            let id = key.3;
            self.expansions_high += 1;

            let plain: Vec<Path> = self.nodes[id].paths.iter().map(|p| (**p).clone()).collect();
            let conflicts = find_conflicts(&plain);
            debug_assert_eq!(conflicts.len(), self.nodes[id].conflict_count);
            if conflicts.is_empty() {
                return self.outcome(SolveStatus::Solved, Some(Solution { paths: plain }), started);
            }
            let chosen = pick_conflict(&conflicts, conflict_policy, &mut self.rng).expect("non-empty");
            for constraint in split_conflict(&chosen) {
                match self.child(id, constraint) {
                    Ok(Some(child)) => {
                        self.nodes.push(child);
                        open.insert(&self.nodes, self.nodes.len() - 1, hl_w);
                    }
                    Ok(None) => {}
                    Err(()) => return self.interrupted(started),
                }
            }
        }
    }
}

/// Runs the configured CBS variant until a collision-free node is selected,
/// the tree is exhausted (or the instance is certified unsolvable), or `stop`
/// fires. Identical `(inst, cfg, seed)` give identical results unless the
/// budget interrupts the run.
pub fn solve_cbs(inst: &MapfInstance, cfg: &CbsConfig, stop: &StopSignal, seed: u64) -> Result<SolveOutcome> {
    cfg.validate(inst)?;
    let started = Instant::now();
    let w = cfg.effective_w();
    let highway = cfg.highway.as_ref().or(inst.highway.as_ref());
    let map = &inst.map;
    let exact: Vec<HeuristicTable> = inst.agents.iter().map(|a| build_heuristic(map, a.goal, None, 1.0)).collect();
    let inflated: Vec<HeuristicTable> = if cfg.mode.needs_highway() {
        inst.agents.iter().map(|a| build_heuristic(map, a.goal, highway, w)).collect()
    } else {
        Vec::new()
    };
    let solver = CbsSolver {
        inst,
        cfg,
        stop,
        rng: ChaCha8Rng::seed_from_u64(seed),
        w,
        highway,
        exact,
        inflated,
        nodes: Vec::new(),
        stats: SearchStats::default(),
        expansions_high: 0,
    };
    Ok(solver.run(started))
}
