//! Timed paths, solutions and pairwise collision detection.

use std::cmp::Ordering;
use std::fmt;

use crate::grid::{GridMap, VertexId};

/// Vertex sequence indexed by time step. After its last entry the agent rests
/// at the final vertex forever, so trailing repeats of the final vertex carry
/// no information and are removed on construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    steps: Vec<VertexId>,
}

impl Path {
    pub fn new(mut steps: Vec<VertexId>) -> Self {
        while steps.len() >= 2 && steps[steps.len() - 1] == steps[steps.len() - 2] {
            steps.pop();
        }
        Path { steps }
    }

    /// Builds a path keeping every entry, including trailing repeats. Used by
    /// the validator fuzzers, which need raw sequences.
    pub fn raw(steps: Vec<VertexId>) -> Self {
        Path { steps }
    }

    pub fn steps(&self) -> &[VertexId] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Travel time T: the time step of the final arrival.
    pub fn cost(&self) -> u64 {
        self.steps.len().saturating_sub(1) as u64
    }

    /// Position at time `t`, resting at the last vertex once the path ends.
    #[inline]
    pub fn at(&self, t: usize) -> VertexId {
        self.steps[t.min(self.steps.len() - 1)]
    }

    pub fn first(&self) -> Option<VertexId> {
        self.steps.first().copied()
    }

    pub fn last(&self) -> Option<VertexId> {
        self.steps.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub paths: Vec<Path>,
}

impl Solution {
    pub fn cost(&self) -> u64 {
        self.paths.iter().map(Path::cost).sum()
    }

    pub fn makespan(&self) -> u64 {
        self.paths.iter().map(Path::cost).max().unwrap_or(0)
    }

    /// `agent_id,t,row,col` rows covering `t = 0..=makespan`.
    pub fn to_csv(&self, map: &GridMap) -> String {
        let horizon = self.makespan() as usize;
        let mut out = String::new();
        for (j, path) in self.paths.iter().enumerate() {
            for t in 0..=horizon {
                let c = map.cell(path.at(t));
                out.push_str(&format!("{j},{t},{},{}\n", c.row, c.col));
            }
        }
        out
    }

    /// Inverse of [`Solution::to_csv`]. Rows may appear in any order but every
    /// agent must cover `t = 0..` without gaps.
    pub fn from_csv(text: &str, map: &GridMap, num_agents: usize) -> crate::Result<Self> {
        use crate::error::MapfError;
        let mut steps: Vec<Vec<(u64, VertexId)>> = vec![Vec::new(); num_agents];
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(MapfError::parse(line_no, "expected agent_id,t,row,col"));
            }
            let nums: Vec<u64> = fields
                .iter()
                .map(|f| f.parse::<u64>())
                .collect::<Result<_, _>>()
                .map_err(|_| MapfError::parse(line_no, "non-numeric field"))?;
            let agent = nums[0] as usize;
            if agent >= num_agents {
                return Err(MapfError::validation(line_no, format!("unknown agent {agent}")));
            }
            let v = map
                .vertex_at(crate::grid::Cell::new(nums[2] as u32, nums[3] as u32))
                .ok_or_else(|| MapfError::validation(line_no, "cell is blocked or out of bounds"))?;
            steps[agent].push((nums[1], v));
        }
        let mut paths = Vec::with_capacity(num_agents);
        for (agent, mut s) in steps.into_iter().enumerate() {
            s.sort_by_key(|(t, _)| *t);
            if s.iter().enumerate().any(|(i, (t, _))| *t != i as u64) {
                return Err(MapfError::validation(0, format!("agent {agent} has missing or repeated time steps")));
            }
            paths.push(Path::new(s.into_iter().map(|(_, v)| v).collect()));
        }
        Ok(Solution { paths })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolveStatus {
    Solved,
    Timeout,
    Infeasible,
    MemoryExhausted,
    /// Stopped by another trial's success.
    Cancelled,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Solved => "solved",
            SolveStatus::Timeout => "timeout",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MemoryExhausted => "memory_exhausted",
            SolveStatus::Cancelled => "cancelled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "solved" => SolveStatus::Solved,
            "timeout" => SolveStatus::Timeout,
            "infeasible" => SolveStatus::Infeasible,
            "memory_exhausted" => SolveStatus::MemoryExhausted,
            "cancelled" => SolveStatus::Cancelled,
            _ => return None,
        })
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Result of one solver run with its telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub solution: Option<Solution>,
    pub expansions_high: u64,
    pub expansions_low: u64,
    pub runtime: std::time::Duration,
}

impl SolveOutcome {
    pub fn cost(&self) -> Option<u64> {
        self.solution.as_ref().map(Solution::cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConflictKind {
    Vertex,
    Edge,
}

/// A collision between agents `j < k`.
///
/// Vertex: both at `v1` at time `t`. Edge: `j` moves `v1 -> v2` while `k`
/// moves `v2 -> v1` between `t` and `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub j: usize,
    pub k: usize,
    pub v1: VertexId,
    pub v2: Option<VertexId>,
    pub t: u32,
}

impl Conflict {
    fn sort_key(&self) -> (u32, usize, usize, ConflictKind, VertexId, Option<VertexId>) {
        (self.t, self.j, self.k, self.kind, self.v1, self.v2)
    }
}

impl Ord for Conflict {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Conflict {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Conflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ConflictKind::Vertex => write!(f, "vertex({},{},{},{})", self.j, self.k, self.v1, self.t),
            ConflictKind::Edge => write!(
                f,
                "edge({},{},{},{},{})",
                self.j,
                self.k,
                self.v1,
                self.v2.expect("edge conflicts carry v2"),
                self.t
            ),
        }
    }
}

/// Appends every collision between paths `a` and `b` (agent ids `ja < jb`).
fn pair_conflicts(ja: usize, a: &Path, jb: usize, b: &Path, out: &mut Vec<Conflict>) {
    let (j, pj, k, pk) = if ja < jb { (ja, a, jb, b) } else { (jb, b, ja, a) };
    let horizon = pj.steps.len().max(pk.steps.len());
    for t in 0..horizon {
        let (sj, sk) = (pj.at(t), pk.at(t));
        if sj == sk {
            out.push(Conflict {
                kind: ConflictKind::Vertex,
                j,
                k,
                v1: sj,
                v2: None,
                t: t as u32,
            });
        }
        if t + 1 < horizon {
            let (nj, nk) = (pj.at(t + 1), pk.at(t + 1));
            if sj != nj && sj == nk && nj == sk {
                out.push(Conflict {
                    kind: ConflictKind::Edge,
                    j,
                    k,
                    v1: sj,
                    v2: Some(nj),
                    t: t as u32,
                });
            }
        }
    }
}

/// All pairwise collisions, sorted by `(t, j, k, kind)`. Agents that have
/// arrived keep occupying their final vertex.
pub fn find_conflicts(paths: &[Path]) -> Vec<Conflict> {
    let mut out = Vec::new();
    for j in 0..paths.len() {
        for k in j + 1..paths.len() {
            pair_conflicts(j, &paths[j], k, &paths[k], &mut out);
        }
    }
    out.sort();
    out
}

/// Number of (other agent, time) collisions between `path` and `others`.
pub fn count_conflicts(path: &Path, others: &[Path]) -> usize {
    let mut buf = Vec::new();
    for other in others {
        pair_conflicts(0, path, 1, other, &mut buf);
    }
    buf.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(ids: &[u32]) -> Path {
        Path::new(ids.iter().map(|&i| VertexId(i)).collect())
    }

    #[test]
    fn trailing_rest_is_trimmed() {
        assert_eq!(p(&[1, 2, 2, 2]).cost(), 1);
        assert_eq!(p(&[3]).cost(), 0);
        assert_eq!(p(&[2, 2, 3, 3]).steps(), &[VertexId(2), VertexId(2), VertexId(3)]);
    }

    #[test]
    fn identical_single_vertex_paths_collide_once() {
        assert_eq!(count_conflicts(&p(&[4]), &[p(&[4])]), 1);
    }

    #[test]
    fn swap_is_one_edge_conflict() {
        let c = find_conflicts(&[p(&[0, 1]), p(&[1, 0])]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].kind, ConflictKind::Edge);
        assert_eq!((c[0].v1, c[0].v2, c[0].t), (VertexId(0), Some(VertexId(1)), 0));
        assert_eq!(count_conflicts(&p(&[0, 1]), &[p(&[1, 0])]), 1);
    }

    #[test]
    fn disjoint_paths_do_not_collide() {
        assert_eq!(count_conflicts(&p(&[0, 1, 2]), &[p(&[7, 8, 9])]), 0);
    }

    #[test]
    fn resting_agent_is_hit_later() {
        // agent 1 rests at 5 from t=0; agent 0 passes through 5 at t=2
        let c = find_conflicts(&[p(&[3, 4, 5, 6]), p(&[5])]);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].kind, c[0].t, c[0].v1), (ConflictKind::Vertex, 2, VertexId(5)));
    }

    #[test]
    fn following_is_not_a_conflict() {
        assert!(find_conflicts(&[p(&[1, 2, 3]), p(&[0, 1, 2])]).is_empty());
    }

    #[test]
    fn conflicts_sorted_by_time_then_agents() {
        let paths = [p(&[0, 1, 2, 3]), p(&[9, 8, 2, 3, 4]), p(&[5, 1, 6])];
        let c = find_conflicts(&paths);
        let keys: Vec<_> = c.iter().map(|c| (c.t, c.j, c.k)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(keys[0], (1, 0, 2));
    }
}
