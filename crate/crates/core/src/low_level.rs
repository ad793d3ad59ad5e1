//! Single-agent searches used under the conflict tree: space-time A*, focal
//! search with a conflict-count secondary heuristic, and the heuristic tables
//! (exact distances, optionally under highway-inflated edge costs).

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use ordered_float::OrderedFloat;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::budget::StopSignal;
use crate::grid::{GridMap, VertexId};
use crate::instance::{AgentSpec, Highway};
use crate::randomize::{pick_rank, RankPolicy};
use crate::solution::Path;

/// Tolerance for the `f <= w * f_min` comparison. Heuristic values under
/// highway inflation are sums of non-integral step costs.
const FOCAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    /// The agent may not occupy the vertex at `t`.
    Vertex(VertexId),
    /// The agent may not move `from -> to` between `t` and `t + 1`.
    Edge(VertexId, VertexId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub agent: usize,
    pub kind: ConstraintKind,
    pub t: u32,
}

impl Constraint {
    pub fn vertex(agent: usize, v: VertexId, t: u32) -> Self {
        Constraint {
            agent,
            kind: ConstraintKind::Vertex(v),
            t,
        }
    }

    /// Waits are never edge-constrained, so `from != to`.
    pub fn edge(agent: usize, from: VertexId, to: VertexId, t: u32) -> Self {
        debug_assert_ne!(from, to);
        Constraint {
            agent,
            kind: ConstraintKind::Edge(from, to),
            t,
        }
    }

    pub fn is_valid_for(&self, map: &GridMap) -> bool {
        match self.kind {
            ConstraintKind::Vertex(v) => map.contains(v),
            ConstraintKind::Edge(a, b) => a != b && map.is_edge(a, b),
        }
    }
}

/// Constraints of a single agent, indexed for the search inner loop.
#[derive(Debug, Clone, Default)]
pub struct ConstraintTable {
    vertex: HashSet<(VertexId, u32)>,
    edge: HashSet<(VertexId, VertexId, u32)>,
    /// States at `t >= settle_time` see no further constraints.
    settle_time: u32,
    /// Earliest arrival time at the goal after which no vertex constraint on
    /// the goal remains.
    goal_free_from: u32,
}

impl ConstraintTable {
    pub fn new(agent: &AgentSpec, constraints: &[Constraint]) -> Self {
        let mut table = ConstraintTable::default();
        for c in constraints.iter().filter(|c| c.agent == agent.id) {
            table.add(agent.goal, c);
        }
        table
    }

    pub fn add(&mut self, goal: VertexId, c: &Constraint) {
        match c.kind {
            ConstraintKind::Vertex(v) => {
                self.vertex.insert((v, c.t));
                self.settle_time = self.settle_time.max(c.t);
                if v == goal {
                    self.goal_free_from = self.goal_free_from.max(c.t + 1);
                }
            }
            ConstraintKind::Edge(a, b) => {
                self.edge.insert((a, b, c.t));
                self.settle_time = self.settle_time.max(c.t + 1);
            }
        }
    }

    #[inline]
    fn allows(&self, from: VertexId, to: VertexId, t: u32) -> bool {
        !self.vertex.contains(&(to, t + 1)) && (from == to || !self.edge.contains(&(from, to, t)))
    }

    pub fn len(&self) -> usize {
        self.vertex.len() + self.edge.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exact cost-to-goal of every vertex under a given edge-cost model.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicTable {
    goal: VertexId,
    values: Vec<f64>,
}

impl HeuristicTable {
    #[inline]
    pub fn get(&self, v: VertexId) -> f64 {
        self.values[v.index()]
    }

    pub fn goal(&self) -> VertexId {
        self.goal
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Backward uniform-cost sweep from `goal`. With a highway and `w > 1` each
/// highway edge costs 1 and every other move costs `w`; otherwise every move
/// costs 1. Unreachable vertices get `f64::INFINITY`.
pub fn build_heuristic(map: &GridMap, goal: VertexId, highway: Option<&Highway>, w: f64) -> HeuristicTable {
    assert!(w >= 1.0, "inflation must be at least 1");
    let n = map.num_vertices();
    let mut values = vec![f64::INFINITY; n];
    values[goal.index()] = 0.0;
    match highway {
        Some(hwy) if w > 1.0 => {
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((OrderedFloat(0.0), goal)));
            while let Some(Reverse((OrderedFloat(d), x))) = heap.pop() {
                if d > values[x.index()] {
                    continue;
                }
                // predecessors of x are its grid neighbours (edges come in pairs)
                for &u in map.adjacent(x) {
                    let step = if hwy.contains(u, x) { 1.0 } else { w };
                    let nd = d + step;
                    if nd < values[u.index()] {
                        values[u.index()] = nd;
                        heap.push(Reverse((OrderedFloat(nd), u)));
                    }
                }
            }
        }
        _ => {
            let mut queue = VecDeque::from([goal]);
            while let Some(x) = queue.pop_front() {
                let d = values[x.index()];
                for &u in map.adjacent(x) {
                    if values[u.index()].is_infinite() {
                        values[u.index()] = d + 1.0;
                        queue.push_back(u);
                    }
                }
            }
        }
    }
    HeuristicTable { goal, values }
}

/// Cost of a path under the highway model: waits and highway moves cost 1,
/// other moves cost `w`.
pub fn highway_path_cost(path: &Path, highway: &Highway, w: f64) -> f64 {
    path.steps()
        .windows(2)
        .map(|s| {
            if s[0] == s[1] || highway.contains(s[0], s[1]) {
                1.0
            } else {
                w
            }
        })
        .sum()
}

/// Other agents' paths indexed for per-move collision counting.
#[derive(Debug, Clone, Default)]
pub struct ReservationTable {
    occupied: HashMap<(VertexId, u32), u16>,
    moves: HashMap<(VertexId, VertexId, u32), u16>,
    /// Vertex -> time from which some agent rests there.
    resting: HashMap<VertexId, u32>,
    horizon: u32,
}

impl ReservationTable {
    pub fn new<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Self {
        let mut table = ReservationTable::default();
        for p in paths {
            let steps = p.steps();
            let last = steps.len() - 1;
            for (t, &v) in steps.iter().enumerate().take(last) {
                *table.occupied.entry((v, t as u32)).or_default() += 1;
                let next = steps[t + 1];
                if next != v {
                    *table.moves.entry((v, next, t as u32)).or_default() += 1;
                }
            }
            let arrive = last as u32;
            table
                .resting
                .entry(steps[last])
                .and_modify(|t| *t = (*t).min(arrive))
                .or_insert(arrive);
            table.horizon = table.horizon.max(arrive);
        }
        table
    }

    /// Last time step at which any reserved path still moves.
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    #[inline]
    fn vertex_count(&self, v: VertexId, t: u32) -> u32 {
        let mut n = self.occupied.get(&(v, t)).copied().unwrap_or(0) as u32;
        if matches!(self.resting.get(&v), Some(&from) if t >= from) {
            n += 1;
        }
        n
    }

    /// Collisions created by moving `from -> to` between `t` and `t + 1`.
    #[inline]
    pub fn move_conflicts(&self, from: VertexId, to: VertexId, t: u32) -> u32 {
        let mut n = self.vertex_count(to, t + 1);
        if from != to {
            n += self.moves.get(&(to, from, t)).copied().unwrap_or(0) as u32;
        }
        n
    }

    pub fn start_conflicts(&self, v: VertexId) -> u32 {
        self.vertex_count(v, 0)
    }

    pub fn is_empty(&self) -> bool {
        self.resting.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchFailure {
    /// The search space was exhausted without reaching the goal.
    Infeasible,
    /// The stop signal fired.
    Interrupted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub expansions: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalPath {
    pub path: Path,
    /// Smallest f in OPEN when the goal was selected; a lower bound on the
    /// optimal constrained cost.
    pub lower_bound: f64,
    /// Collisions of the returned path with the reserved paths.
    pub conflicts: u32,
}

/// One FOCAL-list observation, recorded when tracing is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalSnapshot {
    pub f_min: f64,
    pub w: f64,
    pub focal_f: Vec<f64>,
    pub open_only_f: Vec<f64>,
}

#[inline]
pub fn in_focal(f: f64, f_min: f64, w: f64) -> bool {
    f <= w * f_min + FOCAL_EPS
}

const NO_PARENT: u32 = u32::MAX;
const STOP_POLL: u64 = 256;

#[derive(Debug, Clone)]
struct Node {
    v: VertexId,
    t: u32,
    f: f64,
    h2: u32,
    tie: f64,
    parent: u32,
    closed: bool,
    in_focal: bool,
}

impl Node {
    #[inline]
    fn g(&self) -> u32 {
        self.t
    }
}

type OpenKey = (OrderedFloat<f64>, Reverse<u32>, u32);
type FocalKey = (u32, OrderedFloat<f64>, OrderedFloat<f64>, u32);

fn open_key(n: &Node, id: u32) -> OpenKey {
    (OrderedFloat(n.f), Reverse(n.g()), id)
}

fn focal_key(n: &Node, id: u32) -> FocalKey {
    (n.h2, OrderedFloat(n.tie), OrderedFloat(n.f), id)
}

fn reconstruct(nodes: &[Node], mut id: u32) -> Path {
    let mut steps = Vec::with_capacity(nodes[id as usize].t as usize + 1);
    while id != NO_PARENT {
        steps.push(nodes[id as usize].v);
        id = nodes[id as usize].parent;
    }
    steps.reverse();
    Path::new(steps)
}

/// Inputs shared by both low-level searches.
#[derive(Clone, Copy)]
pub struct LowLevelQuery<'a> {
    pub map: &'a GridMap,
    pub agent: &'a AgentSpec,
    pub constraints: &'a ConstraintTable,
    pub heuristic: &'a HeuristicTable,
    pub stop: &'a StopSignal,
}

/// Focal-search knobs.
pub struct FocalParams<'a, R: Rng + ?Sized> {
    pub w: f64,
    pub others: &'a ReservationTable,
    /// Breaks secondary-heuristic ties by `g + tie_heuristic(v)`; iECBS puts
    /// the highway heuristic here.
    pub tie_heuristic: Option<&'a HeuristicTable>,
    pub policy: RankPolicy,
    pub rng: &'a mut R,
    pub trace: Option<&'a mut Vec<FocalSnapshot>>,
}

impl<'a> LowLevelQuery<'a> {
    fn state_key(&self, v: VertexId, t: u32, settle: u32) -> (VertexId, u32) {
        (v, t.min(settle))
    }

    fn accepts_goal(&self, v: VertexId, t: u32) -> bool {
        v == self.agent.goal && t >= self.constraints.goal_free_from
    }

    /// Space-time A* with f-ties broken by larger g, then insertion order.
    /// Returns a minimum travel-time path respecting the agent's constraints
    /// when `heuristic` is admissible.
    pub fn astar(&self, stats: &mut SearchStats) -> Result<Path, SearchFailure> {
        let h0 = self.heuristic.get(self.agent.start);
        if h0.is_infinite() {
            return Err(SearchFailure::Infeasible);
        }
        let settle = self.constraints.settle_time + 1;
        let mut nodes: Vec<Node> = Vec::new();
        let mut best: HashMap<(VertexId, u32), u32> = HashMap::new();
        let mut open: BinaryHeap<Reverse<OpenKey>> = BinaryHeap::new();

        nodes.push(Node {
            v: self.agent.start,
            t: 0,
            f: h0,
            h2: 0,
            tie: 0.0,
            parent: NO_PARENT,
            closed: false,
            in_focal: false,
        });
        best.insert(self.state_key(self.agent.start, 0, settle), 0);
        open.push(Reverse(open_key(&nodes[0], 0)));

        while let Some(Reverse((_, _, id))) = open.pop() {
            let node = &nodes[id as usize];
            if node.closed {
                continue;
            }
            stats.expansions += 1;
            if stats.expansions.is_multiple_of(STOP_POLL) && self.stop.should_stop() {
                return Err(SearchFailure::Interrupted);
            }
            if self.accepts_goal(node.v, node.t) {
                return Ok(reconstruct(&nodes, id));
            }
            nodes[id as usize].closed = true;
            let (v, t) = (nodes[id as usize].v, nodes[id as usize].t);
            for to in std::iter::once(v).chain(self.map.adjacent(v).iter().copied()) {
                if !self.constraints.allows(v, to, t) {
                    continue;
                }
                let h = self.heuristic.get(to);
                if h.is_infinite() {
                    continue;
                }
                let key = self.state_key(to, t + 1, settle);
                if let Some(&prev) = best.get(&key) {
                    let p = &nodes[prev as usize];
                    if p.g() <= t + 1 {
                        continue;
                    }
                    nodes[prev as usize].closed = true;
                }
                let child = Node {
                    v: to,
                    t: t + 1,
                    f: (t + 1) as f64 + h,
                    h2: 0,
                    tie: 0.0,
                    parent: id,
                    closed: false,
                    in_focal: false,
                };
                let cid = nodes.len() as u32;
                open.push(Reverse(open_key(&child, cid)));
                nodes.push(child);
                best.insert(key, cid);
            }
        }
        Err(SearchFailure::Infeasible)
    }

    /// Focal search: expands from the nodes of OPEN with `f <= w * f_min`,
    /// ordered by the number of collisions of the partial path with the
    /// reserved paths. The returned path costs at most `w` times the optimal
    /// constrained cost when `heuristic` is admissible.
    pub fn focal<R: Rng + ?Sized>(
        &self,
        params: FocalParams<'_, R>,
        stats: &mut SearchStats,
    ) -> Result<FocalPath, SearchFailure> {
        let FocalParams {
            w,
            others,
            tie_heuristic,
            policy,
            rng,
            mut trace,
        } = params;
        assert!(w >= 1.0, "suboptimality factor must be at least 1");
        let h0 = self.heuristic.get(self.agent.start);
        if h0.is_infinite() {
            return Err(SearchFailure::Infeasible);
        }
        let settle = self.constraints.settle_time.max(others.horizon()) + 1;
        let tie_of = |v: VertexId, g: u32| tie_heuristic.map_or(0.0, |h| g as f64 + h.get(v));

        let mut nodes: Vec<Node> = Vec::new();
        let mut best: HashMap<(VertexId, u32), u32> = HashMap::new();
        let mut open: BTreeSet<OpenKey> = BTreeSet::new();
        let mut focal: BTreeSet<FocalKey> = BTreeSet::new();

        nodes.push(Node {
            v: self.agent.start,
            t: 0,
            f: h0,
            h2: others.start_conflicts(self.agent.start),
            tie: tie_of(self.agent.start, 0),
            parent: NO_PARENT,
            closed: false,
            in_focal: true,
        });
        best.insert(self.state_key(self.agent.start, 0, settle), 0);
        open.insert(open_key(&nodes[0], 0));
        focal.insert(focal_key(&nodes[0], 0));
        let mut f_min = h0;

        loop {
            let Some(&(OrderedFloat(cur_min), _, _)) = open.first() else {
                return Err(SearchFailure::Infeasible);
            };
            if cur_min > f_min {
                // admit nodes with f in (w * old, w * new]
                let lo = w * f_min + FOCAL_EPS;
                let hi = w * cur_min + FOCAL_EPS;
                for &(OrderedFloat(f), _, id) in open.range((OrderedFloat(lo), Reverse(u32::MAX), 0)..) {
                    if f > hi {
                        break;
                    }
                    let n = &mut nodes[id as usize];
                    if !n.in_focal {
                        n.in_focal = true;
                        focal.insert(focal_key(n, id));
                    }
                }
                f_min = cur_min;
            }
            if let Some(trace) = trace.as_deref_mut() {
                trace.push(FocalSnapshot {
                    f_min,
                    w,
                    focal_f: focal.iter().map(|k| k.2 .0).collect(),
                    open_only_f: open
                        .iter()
                        .filter(|k| !nodes[k.2 as usize].in_focal)
                        .map(|k| k.0 .0)
                        .collect(),
                });
            }

            let rank = pick_rank(focal.len(), policy, rng);
            let chosen = *focal.iter().nth(rank).expect("FOCAL is never empty while OPEN is not");
            let id = chosen.3;
            focal.remove(&chosen);
            let node = nodes[id as usize].clone();
            open.remove(&open_key(&node, id));
            nodes[id as usize].closed = true;
            nodes[id as usize].in_focal = false;

            stats.expansions += 1;
            if stats.expansions.is_multiple_of(STOP_POLL) && self.stop.should_stop() {
                return Err(SearchFailure::Interrupted);
            }
            if self.accepts_goal(node.v, node.t) {
                return Ok(FocalPath {
                    path: reconstruct(&nodes, id),
                    lower_bound: f_min,
                    conflicts: node.h2,
                });
            }

            let (v, t) = (node.v, node.t);
            for to in std::iter::once(v).chain(self.map.adjacent(v).iter().copied()) {
                if !self.constraints.allows(v, to, t) {
                    continue;
                }
                let h = self.heuristic.get(to);
                if h.is_infinite() {
                    continue;
                }
                let g = t + 1;
                let h2 = node.h2 + others.move_conflicts(v, to, t);
                let key = self.state_key(to, g, settle);
                if let Some(&prev) = best.get(&key) {
                    let p = nodes[prev as usize].clone();
                    let better_g = g < p.g();
                    let better_h2 = g == p.g() && !p.closed && h2 < p.h2;
                    if !better_g && !better_h2 {
                        continue;
                    }
                    if !p.closed {
                        open.remove(&open_key(&p, prev));
                        if p.in_focal {
                            focal.remove(&focal_key(&p, prev));
                        }
                    }
                    nodes[prev as usize].closed = true;
                    nodes[prev as usize].in_focal = false;
                }
                let mut child = Node {
                    v: to,
                    t: g,
                    f: g as f64 + h,
                    h2,
                    tie: tie_of(to, g),
                    parent: id,
                    closed: false,
                    in_focal: false,
                };
                let cid = nodes.len() as u32;
                open.insert(open_key(&child, cid));
                if in_focal(child.f, f_min, w) {
                    child.in_focal = true;
                    focal.insert(focal_key(&child, cid));
                }
                nodes.push(child);
                best.insert(key, cid);
            }
        }
    }
}

/// Convenience wrapper: unbounded A* for one agent under `constraints`.
pub fn astar(
    map: &GridMap,
    agent: &AgentSpec,
    constraints: &[Constraint],
    heuristic: &HeuristicTable,
) -> Result<Path, SearchFailure> {
    let table = ConstraintTable::new(agent, constraints);
    let stop = StopSignal::unlimited();
    let query = LowLevelQuery {
        map,
        agent,
        constraints: &table,
        heuristic,
        stop: &stop,
    };
    query.astar(&mut SearchStats::default())
}

/// Chooses among FOCAL members: deterministic, or rank-biased with its own
/// seeded RNG.
pub struct FocalChooser {
    pub policy: RankPolicy,
    pub rng: ChaCha8Rng,
}

impl FocalChooser {
    pub fn deterministic() -> Self {
        FocalChooser {
            policy: RankPolicy::Deterministic,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn seeded(policy: RankPolicy, seed: u64) -> Self {
        FocalChooser {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Convenience wrapper: unbounded focal search avoiding `other_paths`.
pub fn focal_search(
    map: &GridMap,
    agent: &AgentSpec,
    constraints: &[Constraint],
    heuristic: &HeuristicTable,
    w: f64,
    other_paths: &[Path],
    chooser: &mut FocalChooser,
) -> Result<FocalPath, SearchFailure> {
    let table = ConstraintTable::new(agent, constraints);
    let others = ReservationTable::new(other_paths);
    let stop = StopSignal::unlimited();
    let query = LowLevelQuery {
        map,
        agent,
        constraints: &table,
        heuristic,
        stop: &stop,
    };
    query.focal(
        FocalParams {
            w,
            others: &others,
            tie_heuristic: None,
            policy: chooser.policy,
            rng: &mut chooser.rng,
            trace: None,
        },
        &mut SearchStats::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::solution::count_conflicts;

    fn open(w: u32, h: u32) -> GridMap {
        GridMap::new(w, h, []).unwrap()
    }

    fn v(m: &GridMap, r: u32, c: u32) -> VertexId {
        m.vertex_at(Cell::new(r, c)).unwrap()
    }

    fn agent(m: &GridMap, s: (u32, u32), g: (u32, u32)) -> AgentSpec {
        AgentSpec {
            id: 0,
            start: v(m, s.0, s.1),
            goal: v(m, g.0, g.1),
        }
    }

    #[test]
    fn heuristic_examples() {
        let m = open(3, 3);
        let h = build_heuristic(&m, v(&m, 0, 2), None, 1.0);
        assert_eq!(h.get(v(&m, 0, 0)), 2.0);

        let c = open(3, 1);
        let fwd = Highway::new(&c, [
            crate::grid::DirectedEdge::new(v(&c, 0, 0), v(&c, 0, 1)),
            crate::grid::DirectedEdge::new(v(&c, 0, 1), v(&c, 0, 2)),
        ])
        .unwrap();
        let h = build_heuristic(&c, v(&c, 0, 2), Some(&fwd), 2.0);
        assert_eq!(h.get(v(&c, 0, 0)), 2.0);

        let back = Highway::new(&c, [
            crate::grid::DirectedEdge::new(v(&c, 0, 2), v(&c, 0, 1)),
            crate::grid::DirectedEdge::new(v(&c, 0, 1), v(&c, 0, 0)),
        ])
        .unwrap();
        let h = build_heuristic(&c, v(&c, 0, 2), Some(&back), 2.0);
        assert_eq!(h.get(v(&c, 0, 0)), 4.0);
    }

    #[test]
    fn walled_off_goal_is_unreachable() {
        let m = GridMap::new(3, 1, [Cell::new(0, 1)]).unwrap();
        let h = build_heuristic(&m, v(&m, 0, 2), None, 1.0);
        assert!(h.get(v(&m, 0, 0)).is_infinite());
        let a = agent(&m, (0, 0), (0, 2));
        assert_eq!(astar(&m, &a, &[], &h), Err(SearchFailure::Infeasible));
    }

    #[test]
    fn astar_examples() {
        let m = open(3, 3);
        let a = agent(&m, (0, 0), (0, 2));
        let h = build_heuristic(&m, a.goal, None, 1.0);
        assert_eq!(astar(&m, &a, &[], &h).unwrap().cost(), 2);

        let blocked = [Constraint::vertex(0, v(&m, 0, 1), 1)];
        let p = astar(&m, &a, &blocked, &h).unwrap();
        assert_eq!(p.cost(), 3);
        assert_ne!(p.at(1), v(&m, 0, 1));

        let same = agent(&m, (1, 1), (1, 1));
        let h = build_heuristic(&m, same.goal, None, 1.0);
        let p = astar(&m, &same, &[], &h).unwrap();
        assert_eq!((p.cost(), p.steps().len()), (0, 1));
    }

    #[test]
    fn goal_constraint_after_arrival_forces_later_arrival() {
        let m = open(3, 1);
        let a = agent(&m, (0, 0), (0, 2));
        let h = build_heuristic(&m, a.goal, None, 1.0);
        let p = astar(&m, &a, &[Constraint::vertex(0, a.goal, 4)], &h).unwrap();
        assert_eq!(p.cost(), 5);
        assert_ne!(p.at(4), a.goal);
    }

    #[test]
    fn edge_constraint_blocks_a_move() {
        let m = open(3, 1);
        let a = agent(&m, (0, 0), (0, 2));
        let h = build_heuristic(&m, a.goal, None, 1.0);
        let p = astar(&m, &a, &[Constraint::edge(0, v(&m, 0, 0), v(&m, 0, 1), 0)], &h).unwrap();
        assert_eq!(p.cost(), 3);
    }

    #[test]
    fn focal_set_definition() {
        let open_f = [10.0, 12.0, 15.0];
        let members: Vec<f64> = open_f.iter().copied().filter(|&f| in_focal(f, 10.0, 1.2)).collect();
        assert_eq!(members, vec![10.0, 12.0]);
    }

    #[test]
    fn focal_avoids_a_pinned_agent() {
        let m = open(3, 3);
        let a = agent(&m, (0, 0), (0, 2));
        let h = build_heuristic(&m, a.goal, None, 1.0);
        // another agent sits on (0,1) at t=1 and leaves downwards
        let other = Path::new(vec![v(&m, 1, 1), v(&m, 0, 1), v(&m, 1, 1), v(&m, 2, 1)]);
        let mut chooser = FocalChooser::deterministic();
        let got = focal_search(&m, &a, &[], &h, 1.5, std::slice::from_ref(&other), &mut chooser).unwrap();
        assert!(got.path.cost() <= 3);
        assert_eq!(got.conflicts, 0);
        assert_eq!(count_conflicts(&got.path, &[other]), 0);
        assert!(got.lower_bound <= 2.0);
    }

    #[test]
    fn focal_infeasible_when_goal_cut_off() {
        let m = GridMap::new(3, 1, [Cell::new(0, 1)]).unwrap();
        let a = agent(&m, (0, 0), (0, 2));
        let h = build_heuristic(&m, a.goal, None, 1.0);
        let mut chooser = FocalChooser::deterministic();
        assert_eq!(
            focal_search(&m, &a, &[], &h, 2.0, &[], &mut chooser),
            Err(SearchFailure::Infeasible)
        );
    }

    #[test]
    fn constrained_search_terminates_when_trapped() {
        // start (0,0) is a dead end whose only exit is forbidden forever-ish:
        // with a vertex constraint on the only neighbour at every t up to 5
        // and on the start at t=6, the agent has nowhere to be at t=6.
        let m = open(2, 1);
        let a = agent(&m, (0, 0), (0, 1));
        let h = build_heuristic(&m, a.goal, None, 1.0);
        let mut cs: Vec<Constraint> = (1..=5).map(|t| Constraint::vertex(0, a.goal, t)).collect();
        cs.push(Constraint::vertex(0, a.start, 6));
        cs.push(Constraint::vertex(0, a.goal, 6));
        assert_eq!(astar(&m, &a, &cs, &h), Err(SearchFailure::Infeasible));
    }

    #[test]
    fn interrupted_search_reports_interruption() {
        let m = open(40, 40);
        let a = agent(&m, (0, 0), (39, 39));
        let h = build_heuristic(&m, a.goal, None, 1.0);
        let table = ConstraintTable::new(&a, &[Constraint::vertex(0, a.goal, 500)]);
        let stop = StopSignal::after(std::time::Duration::ZERO);
        let q = LowLevelQuery {
            map: &m,
            agent: &a,
            constraints: &table,
            heuristic: &h,
            stop: &stop,
        };
        assert_eq!(q.astar(&mut SearchStats::default()), Err(SearchFailure::Interrupted));
    }
}
