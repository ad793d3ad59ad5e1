//! 4-connected grid environments viewed as directed graphs.
//!
//! Every unblocked cell is a vertex. Each pair of orthogonally adjacent
//! unblocked cells contributes two directed edges, one per direction, so that
//! direction-specific data (highways) can attach to either of them.

use std::fmt;

use crate::error::{MapfError, Result};

/// Dense index of an unblocked cell, assigned row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl Cell {
    pub const fn new(row: u32, col: u32) -> Self {
        Cell { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DirectedEdge {
    pub from: VertexId,
    pub to: VertexId,
}

impl DirectedEdge {
    pub const fn new(from: VertexId, to: VertexId) -> Self {
        DirectedEdge { from, to }
    }

    pub fn reversed(self) -> Self {
        DirectedEdge {
            from: self.to,
            to: self.from,
        }
    }
}

const NO_VERTEX: u32 = u32::MAX;

/// Immutable grid map. Neighbor lists are precomputed in North, East, South,
/// West order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: u32,
    height: u32,
    blocked: Vec<bool>,
    cell_to_vertex: Vec<u32>,
    vertex_to_cell: Vec<Cell>,
    adj_start: Vec<u32>,
    adj: Vec<VertexId>,
}

impl GridMap {
    /// Builds a map from its dimensions and obstacle cells.
    pub fn new(width: u32, height: u32, blocked_cells: impl IntoIterator<Item = Cell>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(MapfError::usage("map dimensions must be positive"));
        }
        let mut blocked = vec![false; width as usize * height as usize];
        for cell in blocked_cells {
            if cell.row >= height || cell.col >= width {
                return Err(MapfError::usage(format!(
                    "blocked cell {cell} outside {width}x{height} map"
                )));
            }
            blocked[(cell.row * width + cell.col) as usize] = true;
        }
        Self::from_mask(width, height, blocked)
    }

    fn from_mask(width: u32, height: u32, blocked: Vec<bool>) -> Result<Self> {
        let mut cell_to_vertex = vec![NO_VERTEX; blocked.len()];
        let mut vertex_to_cell = Vec::new();
        for row in 0..height {
            for col in 0..width {
                let idx = (row * width + col) as usize;
                if !blocked[idx] {
                    cell_to_vertex[idx] = vertex_to_cell.len() as u32;
                    vertex_to_cell.push(Cell { row, col });
                }
            }
        }
        if vertex_to_cell.is_empty() {
            return Err(MapfError::usage("no unblocked cell"));
        }

        let mut map = GridMap {
            width,
            height,
            blocked,
            cell_to_vertex,
            vertex_to_cell,
            adj_start: Vec::new(),
            adj: Vec::new(),
        };

        let mut adj_start = Vec::with_capacity(map.vertex_to_cell.len() + 1);
        let mut adj = Vec::with_capacity(map.vertex_to_cell.len() * 4);
        for cell in &map.vertex_to_cell {
            adj_start.push(adj.len() as u32);
            let (r, c) = (cell.row as i64, cell.col as i64);
            // N, E, S, W
            for (dr, dc) in [(-1, 0), (0, 1), (1, 0), (0, -1)] {
                if let Some(v) = map.vertex_at_signed(r + dr, c + dc) {
                    adj.push(v);
                }
            }
        }
        adj_start.push(adj.len() as u32);
        map.adj_start = adj_start;
        map.adj = adj;
        Ok(map)
    }

    fn vertex_at_signed(&self, row: i64, col: i64) -> Option<VertexId> {
        if row < 0 || col < 0 || row >= self.height as i64 || col >= self.width as i64 {
            return None;
        }
        self.vertex_at(Cell::new(row as u32, col as u32))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_to_cell.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_to_cell.len() as u32).map(VertexId)
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        cell.row >= self.height
            || cell.col >= self.width
            || self.blocked[(cell.row * self.width + cell.col) as usize]
    }

    pub fn blocked_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let width = self.width;
        self.blocked
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| Cell::new(i as u32 / width, i as u32 % width))
    }

    pub fn vertex_at(&self, cell: Cell) -> Option<VertexId> {
        if cell.row >= self.height || cell.col >= self.width {
            return None;
        }
        match self.cell_to_vertex[(cell.row * self.width + cell.col) as usize] {
            NO_VERTEX => None,
            v => Some(VertexId(v)),
        }
    }

    /// Panics if `v` is not a vertex of this map.
    pub fn cell(&self, v: VertexId) -> Cell {
        self.vertex_to_cell[v.index()]
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.index() < self.vertex_to_cell.len()
    }

    /// Move targets of `v` in N, E, S, W order. Wait actions are not included.
    pub fn neighbors(&self, v: VertexId) -> Result<&[VertexId]> {
        if !self.contains(v) {
            return Err(MapfError::usage(format!(
                "vertex {} is not part of a map with {} vertices",
                v.0,
                self.num_vertices()
            )));
        }
        Ok(self.adjacent(v))
    }

    /// Unchecked variant of [`GridMap::neighbors`] for the search inner loops.
    #[inline]
    pub fn adjacent(&self, v: VertexId) -> &[VertexId] {
        let lo = self.adj_start[v.index()] as usize;
        let hi = self.adj_start[v.index() + 1] as usize;
        &self.adj[lo..hi]
    }

    pub fn is_edge(&self, from: VertexId, to: VertexId) -> bool {
        self.contains(from) && self.contains(to) && self.adjacent(from).contains(&to)
    }

    pub fn num_edges(&self) -> usize {
        self.adj.len()
    }

    pub fn manhattan(&self, a: VertexId, b: VertexId) -> u32 {
        let (ca, cb) = (self.cell(a), self.cell(b));
        ca.row.abs_diff(cb.row) + ca.col.abs_diff(cb.col)
    }

    /// Parses the plain-text map format: a `WIDTH HEIGHT` header followed by
    /// `HEIGHT` rows of `WIDTH` characters (`.` free, `@` blocked).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or("");
        let mut dims = header.split(' ');
        let (width, height) = match (dims.next(), dims.next(), dims.next()) {
            (Some(w), Some(h), None) => {
                let w: u32 = w
                    .parse()
                    .map_err(|_| MapfError::parse(1, format!("bad width {w:?}")))?;
                let h: u32 = h
                    .parse()
                    .map_err(|_| MapfError::parse(1, format!("bad height {h:?}")))?;
                (w, h)
            }
            _ => return Err(MapfError::parse(1, "expected header \"WIDTH HEIGHT\"")),
        };
        if width == 0 || height == 0 {
            return Err(MapfError::parse(1, "map dimensions must be positive"));
        }

        let mut blocked = Vec::with_capacity(width as usize * height as usize);
        for row in 0..height as usize {
            let line_no = row + 2;
            let line = lines
                .next()
                .ok_or_else(|| MapfError::parse(line_no, "missing map row"))?;
            if line.len() != width as usize {
                return Err(MapfError::parse(
                    line_no,
                    format!("row has {} characters, expected {width}", line.len()),
                ));
            }
            for ch in line.chars() {
                match ch {
                    '.' => blocked.push(false),
                    '@' => blocked.push(true),
                    other => {
                        return Err(MapfError::parse(
                            line_no,
                            format!("unknown map character {other:?}"),
                        ))
                    }
                }
            }
        }
        // Only a single trailing newline may follow the last row.
        let rest: Vec<&str> = lines.collect();
        if !(rest.is_empty() || rest == [""]) {
            return Err(MapfError::parse(
                height as usize + 2,
                "unexpected content after the last map row",
            ));
        }
        Self::from_mask(width, height, blocked).map_err(|_| MapfError::parse(1, "no unblocked cell"))
    }

    pub fn serialize(&self) -> String {
        let mut out = String::with_capacity((self.width as usize + 1) * (self.height as usize + 1));
        out.push_str(&format!("{} {}\n", self.width, self.height));
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(if self.blocked[(row * self.width + col) as usize] {
                    '@'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    /// Unblocked vertices reachable from `v` (breadth-first).
    pub fn component_of(&self, v: VertexId) -> Vec<VertexId> {
        let mut seen = vec![false; self.num_vertices()];
        let mut queue = std::collections::VecDeque::from([v]);
        seen[v.index()] = true;
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for &n in self.adjacent(u) {
                if !seen[n.index()] {
                    seen[n.index()] = true;
                    queue.push_back(n);
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.component_of(VertexId(0)).len() == self.num_vertices()
    }
}

pub fn parse_map(text: &str) -> Result<GridMap> {
    GridMap::parse(text)
}

pub fn serialize_map(map: &GridMap) -> String {
    map.serialize()
}
