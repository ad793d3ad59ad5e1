//! MAPF instances, highways, scenario files and the Kiva-like benchmark
//! generator.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MapfError, Result};
use crate::grid::{Cell, DirectedEdge, GridMap, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentSpec {
    pub id: usize,
    pub start: VertexId,
    pub goal: VertexId,
}

/// A set of directed map edges that the highway heuristic prefers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Highway {
    edges: BTreeSet<DirectedEdge>,
}

impl Highway {
    pub fn new(map: &GridMap, edges: impl IntoIterator<Item = DirectedEdge>) -> Result<Self> {
        let edges: BTreeSet<DirectedEdge> = edges.into_iter().collect();
        for e in &edges {
            if !map.is_edge(e.from, e.to) {
                return Err(MapfError::usage(format!(
                    "highway edge {}->{} is not a map edge",
                    e.from, e.to
                )));
            }
        }
        Ok(Highway { edges })
    }

    pub fn empty() -> Self {
        Highway::default()
    }

    #[inline]
    pub fn contains(&self, from: VertexId, to: VertexId) -> bool {
        self.edges.contains(&DirectedEdge::new(from, to))
    }

    pub fn edges(&self) -> impl Iterator<Item = DirectedEdge> + '_ {
        self.edges.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `from_row,from_col,to_row,to_col` per line.
    pub fn parse(text: &str, map: &GridMap) -> Result<Self> {
        let mut edges = Vec::new();
        for (row, rec) in read_rows::<4>(text)? {
            let from = vertex_for(map, row, rec[0], rec[1])?;
            let to = vertex_for(map, row, rec[2], rec[3])?;
            if !map.is_edge(from, to) {
                return Err(MapfError::validation(row, "highway edge is not a map edge"));
            }
            edges.push(DirectedEdge::new(from, to));
        }
        Highway::new(map, edges)
    }

    pub fn serialize(&self, map: &GridMap) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let (a, b) = (map.cell(e.from), map.cell(e.to));
            out.push_str(&format!("{},{},{},{}\n", a.row, a.col, b.row, b.col));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MapfInstance {
    pub map: Arc<GridMap>,
    pub agents: Vec<AgentSpec>,
    pub highway: Option<Highway>,
}

impl MapfInstance {
    /// Checks the instance invariants: ids are `0..K` in order, every start
    /// and goal is a map vertex, starts are pairwise distinct and so are goals.
    pub fn new(map: Arc<GridMap>, agents: Vec<AgentSpec>, highway: Option<Highway>) -> Result<Self> {
        let mut starts = HashSet::new();
        let mut goals = HashSet::new();
        for (i, a) in agents.iter().enumerate() {
            if a.id != i {
                return Err(MapfError::usage(format!("agent at position {i} has id {}", a.id)));
            }
            if !map.contains(a.start) || !map.contains(a.goal) {
                return Err(MapfError::usage(format!("agent {i} references a non-vertex")));
            }
            if !starts.insert(a.start) {
                return Err(MapfError::usage(format!("agent {i} shares its start")));
            }
            if !goals.insert(a.goal) {
                return Err(MapfError::usage(format!("agent {i} shares its goal")));
            }
        }
        if let Some(hwy) = &highway {
            for e in hwy.edges() {
                if !map.is_edge(e.from, e.to) {
                    return Err(MapfError::usage("highway edge is not a map edge"));
                }
            }
        }
        Ok(MapfInstance { map, agents, highway })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn with_highway(&self, highway: Option<Highway>) -> Self {
        MapfInstance {
            map: Arc::clone(&self.map),
            agents: self.agents.clone(),
            highway,
        }
    }

    /// The first `k` agents (ids are preserved because they are a prefix).
    pub fn prefix(&self, k: usize) -> Self {
        MapfInstance {
            map: Arc::clone(&self.map),
            agents: self.agents[..k.min(self.agents.len())].to_vec(),
            highway: self.highway.clone(),
        }
    }

    /// Scenario CSV: `agent_id,start_row,start_col,goal_row,goal_col` per line.
    pub fn load_scenario(text: &str, map: Arc<GridMap>) -> Result<Self> {
        let mut rows: Vec<(usize, AgentSpec)> = Vec::new();
        let mut starts = HashSet::new();
        let mut goals = HashSet::new();
        for (row, rec) in read_rows::<5>(text)? {
            let id = rec[0] as usize;
            let start = vertex_for(&map, row, rec[1], rec[2])?;
            let goal = vertex_for(&map, row, rec[3], rec[4])?;
            if !starts.insert(start) {
                return Err(MapfError::validation(row, "duplicate start"));
            }
            if !goals.insert(goal) {
                return Err(MapfError::validation(row, "duplicate goal"));
            }
            rows.push((row, AgentSpec { id, start, goal }));
        }
        rows.sort_by_key(|(_, a)| a.id);
        for (i, (row, a)) in rows.iter().enumerate() {
            if a.id != i {
                return Err(MapfError::validation(
                    *row,
                    format!("agent ids must be 0..{} without gaps", rows.len()),
                ));
            }
        }
        Ok(MapfInstance {
            map,
            agents: rows.into_iter().map(|(_, a)| a).collect(),
            highway: None,
        })
    }

    pub fn save_scenario(&self) -> String {
        let mut out = String::new();
        for a in &self.agents {
            let (s, g) = (self.map.cell(a.start), self.map.cell(a.goal));
            out.push_str(&format!("{},{},{},{},{}\n", a.id, s.row, s.col, g.row, g.col));
        }
        out
    }
}

fn vertex_for(map: &GridMap, row: usize, r: u64, c: u64) -> Result<VertexId> {
    if r >= map.height() as u64 || c >= map.width() as u64 {
        return Err(MapfError::validation(row, format!("cell ({r},{c}) is out of bounds")));
    }
    map.vertex_at(Cell::new(r as u32, c as u32))
        .ok_or_else(|| MapfError::validation(row, format!("cell ({r},{c}) is blocked")))
}

/// Reads headerless CSV rows of `N` unsigned integers, returning the 1-based
/// line number with each record.
fn read_rows<const N: usize>(text: &str) -> Result<Vec<(usize, [u64; N])>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            MapfError::parse(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != N {
            return Err(MapfError::parse(line, format!("expected {N} fields, found {}", rec.len())));
        }
        let mut vals = [0u64; N];
        for (slot, field) in vals.iter_mut().zip(rec.iter()) {
            *slot = field
                .parse()
                .map_err(|_| MapfError::parse(line, format!("not an unsigned integer: {field:?}")))?;
        }
        out.push((line, vals));
    }
    Ok(out)
}

/// Parameters of the Kiva-like warehouse map.
///
/// The map is a central block of pod rows (each pod 1x3 cells, pods separated
/// by single free columns) with horizontal corridors of `corridor_width`
/// rows between consecutive pod rows, flanked by `open_margin` columns of
/// open floor on the left and right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct KivaTemplate {
    pub pod_rows: u32,
    pub pod_cols: u32,
    pub corridor_width: u32,
    pub open_margin: u32,
}

impl Default for KivaTemplate {
    fn default() -> Self {
        KivaTemplate {
            pod_rows: 4,
            pod_cols: 6,
            corridor_width: 1,
            open_margin: 4,
        }
    }
}

pub const POD_LENGTH: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighwayPolarity {
    Positive,
    Negative,
}

impl KivaTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.pod_rows == 0 || self.pod_cols == 0 || self.corridor_width == 0 || self.open_margin == 0 {
            return Err(MapfError::usage("Kiva template fields must be positive"));
        }
        Ok(())
    }

    pub fn num_corridors(&self) -> u32 {
        self.pod_rows - 1
    }

    pub fn height(&self) -> u32 {
        self.pod_rows + self.num_corridors() * self.corridor_width
    }

    fn block_width(&self) -> u32 {
        self.pod_cols * POD_LENGTH + (self.pod_cols - 1)
    }

    pub fn width(&self) -> u32 {
        2 * self.open_margin + self.block_width()
    }

    /// Column range `[start, end)` of the pod block.
    pub fn block_cols(&self) -> (u32, u32) {
        (self.open_margin, self.open_margin + self.block_width())
    }

    fn pod_row(&self, i: u32) -> u32 {
        i * (1 + self.corridor_width)
    }

    /// Rows belonging to corridor `i` (counted from the top).
    pub fn corridor_rows(&self, i: u32) -> std::ops::Range<u32> {
        let first = self.pod_row(i) + 1;
        first..first + self.corridor_width
    }

    pub fn build_map(&self) -> Result<GridMap> {
        self.validate()?;
        let mut blocked = Vec::new();
        for i in 0..self.pod_rows {
            let row = self.pod_row(i);
            for j in 0..self.pod_cols {
                let c0 = self.open_margin + j * (POD_LENGTH + 1);
                blocked.extend((c0..c0 + POD_LENGTH).map(|c| Cell::new(row, c)));
            }
        }
        GridMap::new(self.width(), self.height(), blocked)
    }

    pub fn left_region(&self) -> Vec<Cell> {
        self.region(0)
    }

    pub fn right_region(&self) -> Vec<Cell> {
        self.region(self.open_margin + self.block_width())
    }

    fn region(&self, first_col: u32) -> Vec<Cell> {
        let mut cells = Vec::new();
        for row in 0..self.height() {
            for col in first_col..first_col + self.open_margin {
                cells.push(Cell::new(row, col));
            }
        }
        cells
    }
}

/// Draws a Kiva-like instance: the first `ceil(k/2)` agents start in the left
/// open region and finish in the right one, the remaining agents travel the
/// other way. Cells are sampled without replacement, so starts are pairwise
/// distinct and goals are pairwise distinct. The result depends only on
/// `(template, k, seed)`.
pub fn generate_kiva_instance(template: &KivaTemplate, k: usize, seed: u64) -> Result<MapfInstance> {
    let map = Arc::new(template.build_map()?);
    let left = template.left_region();
    let right = template.right_region();
    let eastbound = k.div_ceil(2);
    let westbound = k - eastbound;
    let capacity = left.len().min(right.len());
    if eastbound > capacity {
        return Err(MapfError::Capacity(format!(
            "{k} agents need {eastbound} distinct cells per open region, only {capacity} available"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |region: &[Cell], n: usize| -> Vec<VertexId> {
        sample(&mut rng, region.len(), n)
            .into_iter()
            .map(|i| map.vertex_at(region[i]).expect("open regions are unblocked"))
            .collect()
    };
    let east_starts = draw(&left, eastbound);
    let east_goals = draw(&right, eastbound);
    let west_starts = draw(&right, westbound);
    let west_goals = draw(&left, westbound);

    let agents = east_starts
        .into_iter()
        .zip(east_goals)
        .chain(west_starts.into_iter().zip(west_goals))
        .enumerate()
        .map(|(id, (start, goal))| AgentSpec { id, start, goal })
        .collect();
    MapfInstance::new(map, agents, None)
}

/// Uniform random instance over all free cells of an arbitrary map.
pub fn generate_random_instance(map: Arc<GridMap>, k: usize, seed: u64) -> Result<MapfInstance> {
    let n = map.num_vertices();
    if k > n {
        return Err(MapfError::Capacity(format!("{k} agents on a map with {n} free cells")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = sample(&mut rng, n, k);
    let goals = sample(&mut rng, n, k);
    let agents = starts
        .into_iter()
        .zip(goals)
        .enumerate()
        .map(|(id, (s, g))| AgentSpec {
            id,
            start: VertexId(s as u32),
            goal: VertexId(g as u32),
        })
        .collect();
    MapfInstance::new(map, agents, None)
}

/// Corridor highway for a Kiva template.
///
/// Positive: corridor `i` points east when `i` is even and west when odd, so
/// neighbouring corridors carry opposing one-way flows. Negative: every
/// corridor points east, which pushes westbound traffic head-on into it.
pub fn make_highway(template: &KivaTemplate, polarity: HighwayPolarity) -> Result<Highway> {
    let map = template.build_map()?;
    let (c0, c1) = template.block_cols();
    let mut edges = Vec::new();
    for i in 0..template.num_corridors() {
        let eastward = match polarity {
            HighwayPolarity::Positive => i % 2 == 0,
            HighwayPolarity::Negative => true,
        };
        for row in template.corridor_rows(i) {
            for col in c0..c1 - 1 {
                let a = map.vertex_at(Cell::new(row, col)).expect("corridors are free");
                let b = map.vertex_at(Cell::new(row, col + 1)).expect("corridors are free");
                edges.push(if eastward {
                    DirectedEdge::new(a, b)
                } else {
                    DirectedEdge::new(b, a)
                });
            }
        }
    }
    Highway::new(&map, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn open3() -> Arc<GridMap> {
        Arc::new(GridMap::new(3, 3, []).unwrap())
    }

    #[test]
    fn default_template_shape() {
        let t = KivaTemplate::default();
        let m = t.build_map().unwrap();
        assert_eq!((m.width(), m.height()), (31, 7));
        assert_eq!(m.blocked_cells().count(), 4 * 6 * 3);
        assert_eq!(t.left_region().len(), 28);
        assert!(m.is_connected());
        for i in 0..t.num_corridors() {
            let (c0, c1) = t.block_cols();
            for row in t.corridor_rows(i) {
                for col in c0..c1 {
                    assert!(!m.is_blocked(Cell::new(row, col)));
                }
            }
        }
    }

    #[test]
    fn kiva_two_agents_is_deterministic() {
        let t = KivaTemplate {
            pod_rows: 2,
            pod_cols: 1,
            corridor_width: 1,
            open_margin: 5,
        };
        assert_eq!(t.left_region().len(), 15);
        let a = generate_kiva_instance(&t, 2, 7).unwrap();
        let b = generate_kiva_instance(&t, 2, 7).unwrap();
        assert_eq!(a.agents, b.agents);
        let (c0, c1) = t.block_cols();
        let m = &a.map;
        assert!(m.cell(a.agents[0].start).col < c0);
        assert!(m.cell(a.agents[0].goal).col >= c1);
        assert!(m.cell(a.agents[1].start).col >= c1);
        assert!(m.cell(a.agents[1].goal).col < c0);
    }

    #[test]
    fn kiva_zero_agents() {
        let inst = generate_kiva_instance(&KivaTemplate::default(), 0, 1).unwrap();
        assert!(inst.agents.is_empty());
    }

    #[test]
    fn kiva_capacity_error() {
        let t = KivaTemplate::default();
        let err = generate_kiva_instance(&t, 2 * 28 + 2, 1).unwrap_err();
        assert!(matches!(err, MapfError::Capacity(_)));
        assert!(generate_kiva_instance(&t, 56, 1).is_ok());
    }

    /// Direction oracle: walk each corridor cell by cell and compare against
    /// the rule stated for each polarity.
    fn corridor_directions(t: &KivaTemplate, h: &Highway) -> Vec<Option<bool>> {
        let m = t.build_map().unwrap();
        let (c0, c1) = t.block_cols();
        (0..t.num_corridors())
            .map(|i| {
                let mut dir = None;
                for row in t.corridor_rows(i) {
                    for col in c0..c1 - 1 {
                        let a = m.vertex_at(Cell::new(row, col)).unwrap();
                        let b = m.vertex_at(Cell::new(row, col + 1)).unwrap();
                        let east = h.contains(a, b);
                        let west = h.contains(b, a);
                        assert!(east ^ west, "exactly one direction per corridor edge");
                        assert!(dir.is_none() || dir == Some(east));
                        dir = Some(east);
                    }
                }
                dir
            })
            .collect()
    }

    #[test]
    fn highway_polarities_on_two_corridors() {
        let t = KivaTemplate {
            pod_rows: 3,
            pod_cols: 2,
            corridor_width: 1,
            open_margin: 2,
        };
        let pos = make_highway(&t, HighwayPolarity::Positive).unwrap();
        assert_eq!(corridor_directions(&t, &pos), vec![Some(true), Some(false)]);
        let neg = make_highway(&t, HighwayPolarity::Negative).unwrap();
        assert_eq!(corridor_directions(&t, &neg), vec![Some(true), Some(true)]);
        // 7 block columns -> 6 edges per corridor row
        assert_eq!(pos.len(), 12);
        assert_eq!(pos.edges().count(), corridor_directions(&t, &pos).len() * 6);
    }

    #[test]
    fn highway_on_zero_corridor_template_is_empty() {
        let t = KivaTemplate {
            pod_rows: 1,
            pod_cols: 3,
            corridor_width: 1,
            open_margin: 2,
        };
        assert!(make_highway(&t, HighwayPolarity::Positive).unwrap().is_empty());
    }

    #[test]
    fn scenario_single_row() {
        let inst = MapfInstance::load_scenario("0,0,0,0,2\n", open3()).unwrap();
        assert_eq!(inst.agents.len(), 1);
        assert_eq!(inst.map.cell(inst.agents[0].start), Cell::new(0, 0));
        assert_eq!(inst.map.cell(inst.agents[0].goal), Cell::new(0, 2));
    }

    #[test]
    fn scenario_duplicate_start_is_rejected() {
        let err = MapfInstance::load_scenario("0,0,0,0,2\n1,0,0,2,2\n", open3()).unwrap_err();
        assert!(matches!(err, MapfError::Validation { row: 2, .. }), "{err}");
        let err = MapfInstance::load_scenario("0,0,0,0,2\n1,1,1,0,2\n", open3()).unwrap_err();
        assert!(matches!(err, MapfError::Validation { row: 2, .. }), "{err}");
    }

    #[test]
    fn scenario_out_of_bounds_and_blocked() {
        let err = MapfInstance::load_scenario("0,0,3,0,2\n", open3()).unwrap_err();
        assert!(matches!(err, MapfError::Validation { row: 1, .. }), "{err}");
        let m = Arc::new(GridMap::new(3, 3, [Cell::new(1, 1)]).unwrap());
        let err = MapfInstance::load_scenario("0,0,0,0,2\n1,1,1,2,2\n", m).unwrap_err();
        assert!(matches!(err, MapfError::Validation { row: 2, .. }), "{err}");
    }

    #[test]
    fn scenario_is_sorted_by_id() {
        let inst = MapfInstance::load_scenario("1,2,2,0,0\n0,0,0,2,2\n", open3()).unwrap();
        assert_eq!(inst.save_scenario(), "0,0,0,2,2\n1,2,2,0,0\n");
        let err = MapfInstance::load_scenario("0,0,0,2,2\n2,2,2,0,0\n", open3()).unwrap_err();
        assert!(matches!(err, MapfError::Validation { .. }));
    }

    #[test]
    fn scenario_round_trip_ten_agents() {
        let map = Arc::new(GridMap::new(5, 5, []).unwrap());
        let inst = generate_random_instance(map.clone(), 10, 3).unwrap();
        let text = inst.save_scenario();
        let back = MapfInstance::load_scenario(&text, map).unwrap();
        assert_eq!(back.agents, inst.agents);
        assert_eq!(back.save_scenario(), text);
    }

    #[test]
    fn highway_file_rejects_non_edges() {
        let m = open3();
        assert!(Highway::parse("0,0,0,1\n", &m).is_ok());
        let err = Highway::parse("0,0,1,1\n", &m).unwrap_err();
        assert!(matches!(err, MapfError::Validation { row: 1, .. }));
    }

    proptest! {
        #[test]
        fn kiva_generation_invariants(k in 0usize..40, seed in any::<u64>()) {
            let t = KivaTemplate::default();
            let inst = generate_kiva_instance(&t, k, seed).unwrap();
            let again = generate_kiva_instance(&t, k, seed).unwrap();
            prop_assert_eq!(&inst.agents, &again.agents);
            let starts: HashSet<_> = inst.agents.iter().map(|a| a.start).collect();
            let goals: HashSet<_> = inst.agents.iter().map(|a| a.goal).collect();
            prop_assert_eq!(starts.len(), k);
            prop_assert_eq!(goals.len(), k);
        }

        #[test]
        fn highway_edges_are_graph_edges(rows in 1u32..5, cols in 1u32..4, cw in 1u32..3, margin in 1u32..3, pos in any::<bool>()) {
            let t = KivaTemplate { pod_rows: rows, pod_cols: cols, corridor_width: cw, open_margin: margin };
            let m = t.build_map().unwrap();
            let pol = if pos { HighwayPolarity::Positive } else { HighwayPolarity::Negative };
            let h = make_highway(&t, pol).unwrap();
            for e in h.edges() {
                prop_assert!(m.is_edge(e.from, e.to));
            }
            let text = h.serialize(&m);
            prop_assert_eq!(Highway::parse(&text, &m).unwrap().serialize(&m), text);
        }
    }
}
