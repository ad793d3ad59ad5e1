//! M* over the joint configuration space, with subdimensional expansion.
//!
//! A joint state holds every agent's vertex plus a per-agent `done` flag. An
//! agent standing on its goal may *finish*: from then on it stays put and
//! costs nothing per step. Without the flag, a sum-of-costs search cannot
//! tell "arrived for good" from "waiting at the goal before leaving again".
//! Agents outside the collision set follow their individual policy, and
//! "finish" is the policy action at the goal.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use fixedbitset::FixedBitSet;
use ordered_float::OrderedFloat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::budget::StopSignal;
use crate::error::{MapfError, Result};
use crate::grid::{GridMap, VertexId};
use crate::instance::{Highway, MapfInstance};
use crate::low_level::build_heuristic;
use crate::randomize::RandomizationPolicy;
use crate::solution::{Path, Solution, SolveOutcome, SolveStatus};

const DONE: u32 = 1 << 31;

/// Optimal next step toward one agent's goal, ignoring every other agent.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualPolicy {
    goal: VertexId,
    cost_to_go: Vec<f64>,
    next: Vec<Option<VertexId>>,
}

impl IndividualPolicy {
    /// Policy for `goal`. With a highway and `w > 1`, costs follow the
    /// inflated model (highway moves 1, other moves `w`).
    pub fn new(map: &GridMap, goal: VertexId, highway: Option<&Highway>, w: f64) -> Self {
        let table = build_heuristic(map, goal, highway, w);
        let cost_to_go = table.values().to_vec();
        let step = |a: VertexId, b: VertexId| match highway {
            Some(h) if w > 1.0 && !h.contains(a, b) => w,
            _ => 1.0,
        };
        let next = map
            .vertices()
            .map(|v| {
                if v == goal {
                    return Some(v);
                }
                let here = cost_to_go[v.index()];
                if here.is_infinite() {
                    return None;
                }
                // adjacency is stored N,E,S,W, so the first match wins ties
                map.adjacent(v)
                    .iter()
                    .copied()
                    .find(|&u| (cost_to_go[u.index()] + step(v, u) - here).abs() < 1e-9)
            })
            .collect();
        IndividualPolicy { goal, cost_to_go, next }
    }

    pub fn goal(&self) -> VertexId {
        self.goal
    }

    pub fn cost_to_go(&self, v: VertexId) -> f64 {
        self.cost_to_go[v.index()]
    }

    /// `Some(v)` itself at the goal, `None` where the goal is unreachable.
    pub fn next(&self, v: VertexId) -> Option<VertexId> {
        self.next[v.index()]
    }
}

/// One policy per agent under unit edge costs.
pub fn build_policies(inst: &MapfInstance) -> Vec<IndividualPolicy> {
    inst.agents
        .iter()
        .map(|a| IndividualPolicy::new(&inst.map, a.goal, None, 1.0))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MstarConfig {
    /// Heuristic weight; 1 gives optimal M*.
    pub inflation: f64,
    /// Order in which agents enter the neighbour product. `None` means
    /// `0..K`, or a seeded permutation when `randomization.mstar_order` is set.
    pub agent_order: Option<Vec<usize>>,
    pub memory_limit: u64,
    pub randomization: RandomizationPolicy,
    /// Experimental: plan individual policies over highway-inflated costs with
    /// this factor. Uses `highway`, or the instance's highway when `None`.
    /// The cost bound becomes `inflation * highway_w`.
    pub highway_w: f64,
    pub highway: Option<Highway>,
}

impl Default for MstarConfig {
    fn default() -> Self {
        MstarConfig {
            inflation: 1.0,
            agent_order: None,
            memory_limit: 2 << 30,
            randomization: RandomizationPolicy::none(),
            highway_w: 1.0,
            highway: None,
        }
    }
}

impl MstarConfig {
    pub fn inflated(inflation: f64) -> Self {
        MstarConfig {
            inflation,
            ..Self::default()
        }
    }

    pub fn validate(&self, inst: &MapfInstance) -> Result<()> {
        if self.inflation.is_nan() || self.inflation < 1.0 {
            return Err(MapfError::usage(format!("inflation must be at least 1, got {}", self.inflation)));
        }
        if self.highway_w.is_nan() || self.highway_w < 1.0 {
            return Err(MapfError::usage(format!("highway weight must be at least 1, got {}", self.highway_w)));
        }
        self.randomization.validate()?;
        if let Some(order) = &self.agent_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (0..inst.num_agents()).collect::<Vec<_>>() {
                return Err(MapfError::usage("agent_order is not a permutation of 0..K"));
            }
        }
        Ok(())
    }
}

/// Positions plus finish flags of all agents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointState {
    pub positions: Vec<VertexId>,
    pub done: Vec<bool>,
}

impl JointState {
    fn encode(&self) -> Box<[u32]> {
        self.positions
            .iter()
            .zip(&self.done)
            .map(|(v, &d)| v.0 | if d { DONE } else { 0 })
            .collect()
    }

    fn decode(codes: &[u32]) -> Self {
        JointState {
            positions: codes.iter().map(|&c| VertexId(c & !DONE)).collect(),
            done: codes.iter().map(|&c| c & DONE != 0).collect(),
        }
    }
}

struct NeighborGen<'a> {
    map: &'a GridMap,
    policies: &'a [IndividualPolicy],
    order: &'a [usize],
}

/// Per-agent action lists for one expansion.
struct Plan {
    /// Next code of every agent with a single action.
    next: Vec<u32>,
    base_cost: u64,
    /// Agents with several actions, in product order, with their actions.
    branching: Vec<(usize, Vec<(u32, u64)>)>,
}

#[inline]
fn clash(old_a: u32, new_a: u32, old_b: u32, new_b: u32) -> bool {
    let p = |c: u32| c & !DONE;
    let (oa, na, ob, nb) = (p(old_a), p(new_a), p(old_b), p(new_b));
    na == nb || (na != oa && na == ob && nb == oa)
}

impl NeighborGen<'_> {
    /// Per-agent actions as `(code, cost)`, the policy action first.
    fn options(&self, agent: usize, code: u32, branching: bool) -> Vec<(u32, u64)> {
        if code & DONE != 0 {
            return vec![(code, 0)];
        }
        let v = VertexId(code);
        let policy = &self.policies[agent];
        if v == policy.goal {
            let mut opts = vec![(code | DONE, 0)];
            if branching {
                opts.extend(self.map.adjacent(v).iter().map(|u| (u.0, 1)));
                opts.push((code, 1));
            }
            return opts;
        }
        let next = policy.next(v);
        let mut opts = Vec::new();
        if let Some(n) = next {
            opts.push((n.0, 1));
        }
        if branching {
            opts.extend(self.map.adjacent(v).iter().filter(|u| Some(**u) != next).map(|u| (u.0, 1)));
            opts.push((code, 1));
        } else if next.is_none() {
            opts.push((code, 1));
        }
        opts
    }

    fn plan(&self, state: &[u32], cset: &FixedBitSet) -> Plan {
        let mut plan = Plan {
            next: state.to_vec(),
            base_cost: 0,
            branching: Vec::new(),
        };
        for &a in self.order {
            let o = self.options(a, state[a], cset.contains(a));
            if o.len() == 1 {
                plan.next[a] = o[0].0;
                plan.base_cost += o[0].1;
            } else {
                plan.branching.push((a, o));
            }
        }
        plan
    }

    /// Agents that collide in at least one joint move out of `state`.
    ///
    /// Two agents' actions can always be completed to a full joint move, so
    /// this pairwise test gives the union of the collision sets of all
    /// colliding joint moves without enumerating them.
    fn colliding_agents(&self, state: &[u32], plan: &Plan) -> FixedBitSet {
        let k = state.len();
        let mut actions: Vec<Vec<u32>> = plan.next.iter().map(|&c| vec![c]).collect();
        for (a, opts) in &plan.branching {
            actions[*a] = opts.iter().map(|o| o.0).collect();
        }
        let mut out = FixedBitSet::with_capacity(k);
        for a in 0..k {
            for b in a + 1..k {
                let hit = actions[a]
                    .iter()
                    .any(|&na| actions[b].iter().any(|&nb| clash(state[a], na, state[b], nb)));
                if hit {
                    out.insert(a);
                    out.insert(b);
                }
            }
        }
        out
    }

    /// Calls `visit(next_state, cost)` for every collision-free joint move,
    /// in product order. Returns `false` if `visit` asked to stop.
    fn for_each_free(&self, state: &[u32], plan: &Plan, mut visit: impl FnMut(&[u32], u64) -> bool) -> bool {
        let k = state.len();
        let fixed: Vec<usize> = {
            let mut is_branching = vec![false; k];
            for (a, _) in &plan.branching {
                is_branching[*a] = true;
            }
            (0..k).filter(|&a| !is_branching[a]).collect()
        };
        let mut by_next: HashMap<u32, usize> = HashMap::with_capacity(fixed.len());
        for &a in &fixed {
            if by_next.insert(plan.next[a] & !DONE, a).is_some() {
                return true;
            }
        }
        for &a in &fixed {
            let (from, to) = (state[a] & !DONE, plan.next[a] & !DONE);
            if from != to {
                if let Some(&b) = by_next.get(&from) {
                    if state[b] & !DONE == to {
                        return true;
                    }
                }
            }
        }
        // drop actions that hit a fixed agent; they fail in every product
        let branching: Vec<(usize, Vec<(u32, u64)>)> = plan
            .branching
            .iter()
            .map(|(a, opts)| {
                let ok = opts
                    .iter()
                    .copied()
                    .filter(|&(code, _)| {
                        let (old, new) = (state[*a] & !DONE, code & !DONE);
                        if by_next.contains_key(&new) {
                            return false;
                        }
                        match by_next.get(&old) {
                            Some(&b) if old != new => state[b] & !DONE != new,
                            _ => true,
                        }
                    })
                    .collect();
                (*a, ok)
            })
            .collect();
        if branching.iter().any(|(_, o)| o.is_empty()) {
            return true;
        }

        struct Walk<'w, F> {
            state: &'w [u32],
            branching: &'w [(usize, Vec<(u32, u64)>)],
            next: Vec<u32>,
            visit: F,
        }

        fn rec<F: FnMut(&[u32], u64) -> bool>(w: &mut Walk<'_, F>, depth: usize, cost: u64) -> bool {
            if depth == w.branching.len() {
                return (w.visit)(&w.next, cost);
            }
            let a = w.branching[depth].0;
            for &(code, c) in &w.branching[depth].1 {
                let free = w.branching[..depth]
                    .iter()
                    .all(|&(b, _)| !clash(w.state[a], code, w.state[b], w.next[b]));
                if free {
                    w.next[a] = code;
                    if !rec(w, depth + 1, cost + c) {
                        return false;
                    }
                }
            }
            true
        }

        let mut walk = Walk {
            state,
            branching: &branching,
            next: plan.next.clone(),
            visit: &mut visit,
        };
        rec(&mut walk, 0, plan.base_cost)
    }
}

/// Collision-free limited neighbours of `state`: agents in `collision_set`
/// branch over every action, the others follow `policies`. The product is
/// built in `agent_order`, which fixes the order of the output.
pub fn limited_neighbors(
    map: &GridMap,
    state: &JointState,
    collision_set: &[usize],
    policies: &[IndividualPolicy],
    agent_order: &[usize],
) -> Vec<JointState> {
    let gen = NeighborGen {
        map,
        policies,
        order: agent_order,
    };
    let mut cset = FixedBitSet::with_capacity(state.positions.len());
    for &a in collision_set {
        cset.insert(a);
    }
    let codes = state.encode();
    let plan = gen.plan(&codes, &cset);
    let mut out = Vec::new();
    gen.for_each_free(&codes, &plan, |next, _| {
        out.push(JointState::decode(next));
        true
    });
    out
}

/// Number of limited neighbours before collision filtering.
pub fn candidate_count(
    map: &GridMap,
    state: &JointState,
    collision_set: &[usize],
    policies: &[IndividualPolicy],
) -> usize {
    let order: Vec<usize> = (0..state.positions.len()).collect();
    let gen = NeighborGen {
        map,
        policies,
        order: &order,
    };
    let codes = state.encode();
    (0..codes.len())
        .map(|a| gen.options(a, codes[a], collision_set.contains(&a)).len())
        .product()
}

/// Counters of a finished M* run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MstarStats {
    /// Collision set of the start state when the search ended.
    pub root_collision_set: Vec<usize>,
    pub max_collision_set: usize,
    pub joint_vertices: usize,
    pub estimated_bytes: u64,
}

struct JointNode {
    codes: Box<[u32]>,
    g: u64,
    h: f64,
    cset: FixedBitSet,
    back_ptr: Option<usize>,
    back_set: Vec<usize>,
    queued: bool,
}

type OpenEntry = (Reverse<OrderedFloat<f64>>, u64, Reverse<u64>, usize);

const OPEN_ENTRY_BYTES: u64 = std::mem::size_of::<OpenEntry>() as u64;

struct Search<'a> {
    inst: &'a MapfInstance,
    policies: &'a [IndividualPolicy],
    inflation: f64,
    check_consistency: bool,
    nodes: Vec<JointNode>,
    index: HashMap<Box<[u32]>, usize>,
    open: BinaryHeap<OpenEntry>,
    counter: u64,
    bytes: u64,
    node_bytes: u64,
}

impl Search<'_> {
    fn h(&self, codes: &[u32]) -> f64 {
        codes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c & DONE == 0)
            .map(|(a, &c)| self.policies[a].cost_to_go(VertexId(c)))
            .sum()
    }

    fn push(&mut self, id: usize) {
        let n = &mut self.nodes[id];
        n.queued = true;
        let f = n.g as f64 + self.inflation * n.h;
        self.counter += 1;
        self.bytes += OPEN_ENTRY_BYTES;
        self.open.push((Reverse(OrderedFloat(f)), n.g, Reverse(self.counter), id));
    }

    fn node(&mut self, codes: &[u32]) -> usize {
        if let Some(&id) = self.index.get(codes) {
            return id;
        }
        let h = self.h(codes);
        self.insert(codes.into(), h)
    }

    fn insert(&mut self, codes: Box<[u32]>, h: f64) -> usize {
        match self.index.entry(codes) {
            Entry::Occupied(e) => *e.get(),
            Entry::Vacant(e) => {
                let codes = e.key().clone();
                let id = self.nodes.len();
                e.insert(id);
                self.nodes.push(JointNode {
                    cset: FixedBitSet::with_capacity(codes.len()),
                    codes,
                    g: u64::MAX,
                    h,
                    back_ptr: None,
                    back_set: Vec::new(),
                    queued: false,
                });
                self.bytes += self.node_bytes;
                id
            }
        }
    }

    fn add_back_edge(&mut self, to: usize, from: usize) {
        if !self.nodes[to].back_set.contains(&from) {
            self.nodes[to].back_set.push(from);
            self.bytes += 8;
        }
    }

    /// Adds `set` to the collision set of `start` and pushes the growth back
    /// through every recorded predecessor. A grown vertex re-enters OPEN.
    fn backprop(&mut self, start: usize, set: FixedBitSet) {
        let mut work = vec![(start, set)];
        while let Some((id, set)) = work.pop() {
            if set.is_subset(&self.nodes[id].cset) {
                continue;
            }
            self.nodes[id].cset.union_with(&set);
            if !self.nodes[id].queued {
                self.push(id);
            }
            let grown = self.nodes[id].cset.clone();
            for &p in &self.nodes[id].back_set {
                work.push((p, grown.clone()));
            }
        }
    }

    fn is_goal(&self, codes: &[u32]) -> bool {
        codes
            .iter()
            .zip(&self.inst.agents)
            .all(|(&c, a)| c & !DONE == a.goal.0)
    }

    fn solution(&self, mut id: usize) -> Solution {
        let mut states = vec![];
        loop {
            states.push(&self.nodes[id].codes);
            match self.nodes[id].back_ptr {
                Some(p) => id = p,
                None => break,
            }
        }
        states.reverse();
        let paths = (0..self.inst.num_agents())
            .map(|a| Path::new(states.iter().map(|s| VertexId(s[a] & !DONE)).collect()))
            .collect();
        Solution { paths }
    }
}

/// Runs M* until the goal configuration is expanded, OPEN empties, the
/// memory estimate passes `cfg.memory_limit`, or `stop` fires.
pub fn solve_mstar(inst: &MapfInstance, cfg: &MstarConfig, stop: &StopSignal, seed: u64) -> Result<SolveOutcome> {
    solve_mstar_with_stats(inst, cfg, stop, seed).map(|(outcome, _)| outcome)
}

pub fn solve_mstar_with_stats(
    inst: &MapfInstance,
    cfg: &MstarConfig,
    stop: &StopSignal,
    seed: u64,
) -> Result<(SolveOutcome, MstarStats)> {
    cfg.validate(inst)?;
    if inst.map.num_vertices() as u64 >= DONE as u64 {
        return Err(MapfError::Capacity("map too large for joint-state encoding".into()));
    }
    let started = Instant::now();
    let k = inst.num_agents();
    let highway = cfg.highway.as_ref().or(inst.highway.as_ref());
    let policies: Vec<IndividualPolicy> = if cfg.highway_w > 1.0 && highway.is_some() {
        inst.agents
            .iter()
            .map(|a| IndividualPolicy::new(&inst.map, a.goal, highway, cfg.highway_w))
            .collect()
    } else {
        build_policies(inst)
    };
    let order = match &cfg.agent_order {
        Some(o) => o.clone(),
        None => {
            let mut o: Vec<usize> = (0..k).collect();
            if cfg.randomization.mstar_order {
                o.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            }
            o
        }
    };
    let gen = NeighborGen {
        map: &inst.map,
        policies: &policies,
        order: &order,
    };
    let mut s = Search {
        inst,
        policies: &policies,
        inflation: cfg.inflation,
        check_consistency: cfg!(debug_assertions) && cfg.inflation == 1.0 && policies_unit(cfg, highway),
        nodes: Vec::new(),
        index: HashMap::new(),
        open: BinaryHeap::new(),
        counter: 0,
        bytes: 0,
        // the key twice (node and index), node record, bitset and map slot
        node_bytes: 2 * (4 * k as u64 + 16)
            + std::mem::size_of::<JointNode>() as u64
            + 8 * (k as u64).div_ceil(32)
            + 32,
    };

    let mut expansions = 0u64;
    let mut generated = 0u64;
    let finish = |s: &Search, status: SolveStatus, solution: Option<Solution>, expansions, generated| {
        let root = s.nodes.first();
        let stats = MstarStats {
            root_collision_set: root.map(|r| r.cset.ones().collect()).unwrap_or_default(),
            max_collision_set: s.nodes.iter().map(|n| n.cset.count_ones(..)).max().unwrap_or(0),
            joint_vertices: s.nodes.len(),
            estimated_bytes: s.bytes,
        };
        let outcome = SolveOutcome {
            status,
            solution,
            expansions_high: expansions,
            expansions_low: generated,
            runtime: started.elapsed(),
        };
        (outcome, stats)
    };
    let stopped = || {
        if stop.is_cancelled() {
            SolveStatus::Cancelled
        } else {
            SolveStatus::Timeout
        }
    };

    let start = JointState {
        positions: inst.agents.iter().map(|a| a.start).collect(),
        done: vec![false; k],
    };
    let root = s.node(&start.encode());
    if s.nodes[root].h.is_infinite() {
        return Ok(finish(&s, SolveStatus::Infeasible, None, 0, 0));
    }
    s.nodes[root].g = 0;
    s.push(root);

    while let Some((_, g, _, id)) = s.open.pop() {
        if s.nodes[id].g != g {
            continue;
        }
        s.nodes[id].queued = false;
        if stop.should_stop() {
            return Ok(finish(&s, stopped(), None, expansions, generated));
        }
        if s.is_goal(&s.nodes[id].codes) {
            let sol = s.solution(id);
            return Ok(finish(&s, SolveStatus::Solved, Some(sol), expansions, generated));
        }
        expansions += 1;
        let (codes, cset) = (s.nodes[id].codes.clone(), s.nodes[id].cset.clone());
        let plan = gen.plan(&codes, &cset);
        let colliding = gen.colliding_agents(&codes, &plan);
        if !colliding.is_clear() {
            s.backprop(id, colliding);
        }
        let mut halt = None;
        gen.for_each_free(&codes, &plan, |next, cost| {
            generated += 1;
            if generated.is_multiple_of(1024) && stop.should_stop() {
                halt = Some(stopped());
                return false;
            }
            let u = match s.index.get(next) {
                Some(&u) => u,
                None => {
                    let h = s.h(next);
                    if h.is_infinite() {
                        return true;
                    }
                    s.insert(next.into(), h)
                }
            };
            if s.nodes[u].h.is_infinite() {
                return true;
            }
            if s.check_consistency {
                let h_old = s.nodes[id].h;
                assert!(h_old <= cost as f64 + s.nodes[u].h + 1e-9, "inconsistent heuristic");
            }
            s.add_back_edge(u, id);
            if !s.nodes[u].cset.is_clear() {
                let c = s.nodes[u].cset.clone();
                s.backprop(id, c);
            }
            let g_new = s.nodes[id].g + cost;
            if g_new < s.nodes[u].g {
                s.nodes[u].g = g_new;
                s.nodes[u].back_ptr = Some(id);
                s.push(u);
            }
            if s.bytes > cfg.memory_limit {
                halt = Some(SolveStatus::MemoryExhausted);
                return false;
            }
            true
        });
        if let Some(status) = halt {
            return Ok(finish(&s, status, None, expansions, generated));
        }
    }
    Ok(finish(&s, SolveStatus::Infeasible, None, expansions, generated))
}

fn policies_unit(cfg: &MstarConfig, highway: Option<&Highway>) -> bool {
    !(cfg.highway_w > 1.0 && highway.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::instance::AgentSpec;
    use std::sync::Arc;

    fn inst(w: u32, h: u32, blocked: &[(u32, u32)], agents: &[((u32, u32), (u32, u32))]) -> MapfInstance {
        let map = Arc::new(GridMap::new(w, h, blocked.iter().map(|&(r, c)| Cell::new(r, c))).unwrap());
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

    fn v(i: &MapfInstance, r: u32, c: u32) -> VertexId {
        i.map.vertex_at(Cell::new(r, c)).unwrap()
    }

    #[test]
    fn policy_examples() {
        let i = inst(3, 3, &[], &[((2, 2), (0, 2)), ((1, 1), (1, 1))]);
        let p = build_policies(&i);
        assert_eq!(p[0].cost_to_go(v(&i, 0, 0)), 2.0);
        assert_eq!(p[1].cost_to_go(v(&i, 1, 1)), 0.0);
        assert_eq!(p[1].next(v(&i, 1, 1)), Some(v(&i, 1, 1)));
        // from the centre toward (0,2): north and east are both optimal, N wins
        assert_eq!(p[0].next(v(&i, 1, 1)), Some(v(&i, 0, 1)));
    }

    #[test]
    fn walled_off_goal_is_unreachable() {
        let i = inst(3, 3, &[(0, 1), (1, 0), (1, 1)], &[((2, 2), (0, 0))]);
        let i = MapfInstance {
            agents: vec![AgentSpec {
                id: 0,
                start: v(&i, 0, 0),
                goal: v(&i, 0, 0),
            }],
            ..i
        };
        let p = build_policies(&i);
        assert_eq!(p[0].cost_to_go(v(&i, 0, 0)), 0.0);
        assert!(p[0].cost_to_go(v(&i, 2, 2)).is_infinite());
        assert_eq!(p[0].next(v(&i, 2, 2)), None);
    }

    #[test]
    fn empty_collision_set_gives_one_neighbor() {
        let i = inst(3, 3, &[], &[((0, 0), (2, 2)), ((2, 0), (0, 2))]);
        let p = build_policies(&i);
        let s = JointState {
            positions: vec![v(&i, 0, 0), v(&i, 2, 0)],
            done: vec![false; 2],
        };
        assert_eq!(limited_neighbors(&i.map, &s, &[], &p, &[0, 1]).len(), 1);
    }

    #[test]
    fn full_product_matches_enumeration() {
        let i = inst(3, 3, &[], &[((0, 0), (2, 2)), ((2, 2), (0, 0))]);
        let p = build_policies(&i);
        let s = JointState {
            positions: vec![v(&i, 1, 0), v(&i, 1, 2)],
            done: vec![false; 2],
        };
        let got = limited_neighbors(&i.map, &s, &[0, 1], &p, &[0, 1]);
        let mut expect = 0;
        let moves = |x: VertexId| {
            let mut m = vec![x];
            m.extend_from_slice(i.map.adjacent(x));
            m
        };
        for a in moves(s.positions[0]) {
            for b in moves(s.positions[1]) {
                let swap = a == s.positions[1] && b == s.positions[0];
                if a != b && !swap {
                    expect += 1;
                }
            }
        }
        // both agents have 3 neighbours plus wait: 16 candidates, one shared cell
        assert_eq!(expect, 15);
        assert_eq!(got.len(), expect);
    }

    #[test]
    fn candidate_counts() {
        let i = inst(5, 5, &[], &[((1, 1), (4, 4)), ((2, 3), (2, 3))]);
        let p = build_policies(&i);
        let s = JointState {
            positions: vec![v(&i, 1, 1), v(&i, 2, 3)],
            done: vec![false; 2],
        };
        assert_eq!(candidate_count(&i.map, &s, &[], &p), 1);
        assert_eq!(candidate_count(&i.map, &s, &[0], &p), 5);
        // finish, four moves and wait on the goal
        assert_eq!(candidate_count(&i.map, &s, &[0, 1], &p), 30);
        let finished = JointState {
            done: vec![false, true],
            ..s
        };
        assert_eq!(candidate_count(&i.map, &finished, &[0, 1], &p), 5);
    }

    #[test]
    fn swap_is_filtered() {
        let i = inst(3, 1, &[], &[((0, 0), (0, 2)), ((0, 1), (0, 0))]);
        let p = build_policies(&i);
        let s = JointState {
            positions: vec![v(&i, 0, 0), v(&i, 0, 1)],
            done: vec![false; 2],
        };
        let got = limited_neighbors(&i.map, &s, &[0, 1], &p, &[0, 1]);
        assert!(got
            .iter()
            .all(|n| !(n.positions[0] == v(&i, 0, 1) && n.positions[1] == v(&i, 0, 0))));
    }

    #[test]
    fn single_agent_keeps_empty_collision_set() {
        let i = inst(4, 4, &[(1, 1), (2, 1)], &[((0, 0), (3, 3))]);
        let (out, stats) = solve_mstar_with_stats(&i, &MstarConfig::default(), &StopSignal::unlimited(), 0).unwrap();
        assert_eq!(out.cost(), Some(6));
        assert!(stats.root_collision_set.is_empty());
        assert_eq!(stats.max_collision_set, 0);
    }

    #[test]
    fn crossing_pair_grows_root_collision_set() {
        let i = inst(3, 3, &[], &[((1, 0), (1, 2)), ((1, 2), (1, 0))]);
        let (out, stats) = solve_mstar_with_stats(&i, &MstarConfig::default(), &StopSignal::unlimited(), 0).unwrap();
        assert_eq!(out.cost(), Some(6));
        assert_eq!(stats.root_collision_set, vec![0, 1]);
    }

    #[test]
    fn corridor_head_on_is_infeasible() {
        let i = inst(3, 1, &[], &[((0, 0), (0, 2)), ((0, 2), (0, 0))]);
        let out = solve_mstar(&i, &MstarConfig::default(), &StopSignal::unlimited(), 0).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn tiny_memory_limit_reports_exhaustion() {
        let i = inst(3, 3, &[], &[((1, 0), (1, 2)), ((1, 2), (1, 0))]);
        let cfg = MstarConfig {
            memory_limit: 200,
            ..MstarConfig::default()
        };
        let out = solve_mstar(&i, &cfg, &StopSignal::unlimited(), 0).unwrap();
        assert_eq!(out.status, SolveStatus::MemoryExhausted);
    }

    #[test]
    fn leaving_the_goal_is_charged() {
        // agent 1 starts on its goal in the only passing bay and must step
        // aside, so its cost is 2 rather than 0
        let i = inst(3, 2, &[(1, 0), (1, 2)], &[((0, 0), (0, 2)), ((0, 1), (0, 1))]);
        let out = solve_mstar(&i, &MstarConfig::default(), &StopSignal::unlimited(), 0).unwrap();
        let sol = out.solution.unwrap();
        assert_eq!(sol.paths[0].cost(), 2);
        assert_eq!(sol.paths[1].cost(), 2);
    }
}
