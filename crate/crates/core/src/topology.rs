//! Device connectivity graphs and hop-count distances.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use thiserror::Error;

const IBMQX20_EDGES: &str = include_str!("../data/ibmqx20.edges");
const SYCAMORE_EDGES: &str = include_str!("../data/sycamore.edges");

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("unknown topology `{0}`")]
    UnknownName(String),
    #[error("invalid topology parameters: {0}")]
    InvalidParameters(String),
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({a}, {b}) references a node outside 0..{node_count}")]
    NodeOutOfRange { a: usize, b: usize, node_count: usize },
    #[error("topology is disconnected")]
    Disconnected,
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// All-pairs hop counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    node_count: usize,
    dist: Vec<u32>,
}

impl DistanceTable {
    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.dist[a * self.node_count + b]
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn diameter(&self) -> u32 {
        self.dist.iter().copied().max().unwrap_or(0)
    }

    fn bfs(node_count: usize, adjacency: &[Vec<usize>]) -> Self {
        let mut dist = vec![u32::MAX; node_count * node_count];
        let mut queue = VecDeque::new();
        for source in 0..node_count {
            let row = &mut dist[source * node_count..(source + 1) * node_count];
            row[source] = 0;
            queue.push_back(source);
            while let Some(u) = queue.pop_front() {
                for &v in &adjacency[u] {
                    if row[v] == u32::MAX {
                        row[v] = row[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        Self { node_count, dist }
    }
}

/// Undirected, connected device graph.
#[derive(Debug, Clone)]
pub struct Topology {
    name: String,
    node_count: usize,
    /// Sorted `(low, high)` pairs; position is the edge index.
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    /// `edge_lookup[a * n + b]` is the index of edge `{a, b}`.
    edge_lookup: Vec<Option<usize>>,
    distances: DistanceTable,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count && self.edges == other.edges
    }
}

impl Topology {
    pub fn from_edge_list(node_count: usize, pairs: &[(usize, usize)]) -> Result<Self, TopologyError> {
        Self::named("custom", node_count, pairs)
    }

    pub fn named(name: &str, node_count: usize, pairs: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if node_count == 0 {
            return Err(TopologyError::InvalidParameters("topology needs at least one node".into()));
        }
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a >= node_count || b >= node_count {
                return Err(TopologyError::NodeOutOfRange { a, b, node_count });
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a, b));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut adjacency = vec![Vec::new(); node_count];
        let mut edge_lookup = vec![None; node_count * node_count];
        for (i, &(a, b)) in edges.iter().enumerate() {
            adjacency[a].push(b);
            adjacency[b].push(a);
            edge_lookup[a * node_count + b] = Some(i);
            edge_lookup[b * node_count + a] = Some(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let distances = DistanceTable::bfs(node_count, &adjacency);
        if distances.dist.contains(&u32::MAX) {
            return Err(TopologyError::Disconnected);
        }
        Ok(Self { name: name.to_string(), node_count, edges, adjacency, edge_lookup, distances })
    }

    pub fn grid(rows: usize, cols: usize) -> Result<Self, TopologyError> {
        if rows == 0 || cols == 0 || rows * cols < 2 {
            return Err(TopologyError::InvalidParameters(format!("grid {rows}x{cols} needs at least two nodes")));
        }
        let mut pairs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let n = r * cols + c;
                if c + 1 < cols {
                    pairs.push((n, n + 1));
                }
                if r + 1 < rows {
                    pairs.push((n, n + cols));
                }
            }
        }
        Self::named(&format!("grid:{rows}x{cols}"), rows * cols, &pairs)
    }

    pub fn line(n: usize) -> Result<Self, TopologyError> {
        if n < 2 {
            return Err(TopologyError::InvalidParameters(format!("line({n}) needs at least two nodes")));
        }
        let pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Self::named(&format!("line:{n}"), n, &pairs)
    }

    pub fn ring(n: usize) -> Result<Self, TopologyError> {
        if n < 3 {
            return Err(TopologyError::InvalidParameters(format!("ring({n}) needs at least three nodes")));
        }
        let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::named(&format!("ring:{n}"), n, &pairs)
    }

    pub fn ibmqx20() -> Self {
        Self::parse_edge_file(IBMQX20_EDGES, "ibmqx20").expect("bundled ibmqx20 data is valid")
    }

    pub fn sycamore() -> Self {
        Self::parse_edge_file(SYCAMORE_EDGES, "sycamore").expect("bundled sycamore data is valid")
    }

    /// Parses `grid:MxN`, `line:N`, `ring:N`, `ibmqx20`, `sycamore` or `file:PATH`.
    pub fn from_spec(spec: &str) -> Result<Self, TopologyError> {
        let spec = spec.trim();
        let (kind, arg) = match spec.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (spec, None),
        };
        let count = |a: Option<&str>| -> Result<usize, TopologyError> {
            a.and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| TopologyError::InvalidParameters(format!("bad size in `{spec}`")))
        };
        match (kind, arg) {
            ("ibmqx20", None) => Ok(Self::ibmqx20()),
            ("sycamore", None) => Ok(Self::sycamore()),
            ("line", a) => Self::line(count(a)?),
            ("ring", a) => Self::ring(count(a)?),
            ("grid", Some(a)) => {
                let (m, n) = a
                    .split_once(['x', 'X'])
                    .ok_or_else(|| TopologyError::InvalidParameters(format!("expected grid:MxN, got `{spec}`")))?;
                Self::grid(count(Some(m))?, count(Some(n))?)
            }
            ("file", Some(path)) => Self::load(path),
            _ => Err(TopologyError::UnknownName(spec.to_string())),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| TopologyError::Io { path: path.display().to_string(), source })?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("file");
        Self::parse_edge_file(&text, name)
    }

    /// Edge-list text: `nodes N` followed by `edge A B` lines; `#` starts a comment.
    pub fn parse_edge_file(text: &str, name: &str) -> Result<Self, TopologyError> {
        let mut node_count = None;
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let parts: Vec<&str> = content.split_whitespace().collect();
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| TopologyError::Parse { line, msg: format!("expected a node index, got `{s}`") })
            };
            match parts.as_slice() {
                ["nodes", n] if node_count.is_none() => node_count = Some(num(n)?),
                ["edge", a, b] if node_count.is_some() => pairs.push((num(a)?, num(b)?)),
                ["edge", ..] if node_count.is_none() => {
                    return Err(TopologyError::Parse { line, msg: "`nodes N` must come first".into() })
                }
                _ => return Err(TopologyError::Parse { line, msg: format!("unrecognized line `{content}`") }),
            }
        }
        let node_count =
            node_count.ok_or(TopologyError::Parse { line: 0, msg: "missing `nodes N` header".into() })?;
        Self::named(name, node_count, &pairs)
    }

    pub fn to_edge_file(&self) -> String {
        let mut out = format!("nodes {}\n", self.node_count);
        for &(a, b) in &self.edges {
            out.push_str(&format!("edge {a} {b}\n"));
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        if a >= self.node_count || b >= self.node_count {
            return None;
        }
        self.edge_lookup[a * self.node_count + b]
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.edge_index(a, b).is_some()
    }

    pub fn distance(&self, a: usize, b: usize) -> u32 {
        self.distances.get(a, b)
    }

    pub fn distances(&self) -> &DistanceTable {
        &self.distances
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} nodes, {} edges)", self.name, self.node_count, self.edges.len())
    }
}

/// BFS all-pairs distances of `t`.
pub fn distances(t: &Topology) -> DistanceTable {
    t.distances.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_table_invariants(t: &Topology) {
        let d = t.distances();
        let n = t.node_count();
        for i in 0..n {
            assert_eq!(d.get(i, i), 0);
            for j in 0..n {
                assert_eq!(d.get(i, j), d.get(j, i));
                assert_eq!(d.get(i, j) == 1, t.are_adjacent(i, j), "{i}-{j} on {}", t.name());
                for k in 0..n {
                    assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k));
                }
            }
        }
    }

    #[test]
    fn builtins_satisfy_distance_invariants() {
        for t in [
            Topology::grid(3, 3).unwrap(),
            Topology::line(6).unwrap(),
            Topology::ring(7).unwrap(),
            Topology::ibmqx20(),
            Topology::sycamore(),
        ] {
            assert_table_invariants(&t);
        }
    }

    #[test]
    fn grid_closed_forms() {
        for m in 1..=10 {
            for n in 1..=10 {
                if m * n < 2 {
                    assert!(Topology::grid(m, n).is_err());
                    continue;
                }
                let t = Topology::grid(m, n).unwrap();
                assert_eq!(t.node_count(), m * n);
                assert_eq!(t.edge_count(), 2 * m * n - m - n);
            }
        }
        let g = Topology::grid(3, 3).unwrap();
        assert_eq!(g.edge_count(), 12);
        assert_eq!(g.distance(0, 8), 4);
    }

    #[test]
    fn line_and_ring() {
        let l = Topology::line(4).unwrap();
        assert_eq!(l.edges(), &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(l.distance(0, 3), 3);
        let r = Topology::ring(6).unwrap();
        assert_eq!(r.distance(0, 3), 3);
        assert_eq!(r.distance(0, 5), 1);
        assert!(Topology::line(1).is_err());
        assert!(Topology::ring(2).is_err());
    }

    #[test]
    fn bundled_devices() {
        let ibm = Topology::ibmqx20();
        assert_eq!(ibm.node_count(), 20);
        let syc = Topology::sycamore();
        assert_eq!(syc.node_count(), 53);
        assert!(syc.distances().diameter() > 0);
    }

    #[test]
    fn edge_list_validation() {
        let t = Topology::from_edge_list(3, &[(1, 0), (1, 2)]).unwrap();
        assert_eq!(t, Topology::line(3).unwrap());
        assert!(matches!(Topology::from_edge_list(4, &[(0, 1), (2, 3)]), Err(TopologyError::Disconnected)));
        assert!(matches!(Topology::from_edge_list(2, &[(0, 0)]), Err(TopologyError::SelfLoop(0, 0))));
        assert!(matches!(
            Topology::from_edge_list(2, &[(0, 2)]),
            Err(TopologyError::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn spec_strings() {
        assert_eq!(Topology::from_spec("grid:3x3").unwrap().node_count(), 9);
        assert_eq!(Topology::from_spec("line:6").unwrap().edge_count(), 5);
        assert_eq!(Topology::from_spec("ring:5").unwrap().edge_count(), 5);
        assert_eq!(Topology::from_spec("ibmqx20").unwrap().node_count(), 20);
        assert!(matches!(Topology::from_spec("hexagon"), Err(TopologyError::UnknownName(_))));
        assert!(Topology::from_spec("grid:3").is_err());
    }

    #[test]
    fn edge_file_round_trip() {
        let t = Topology::ibmqx20();
        let back = Topology::parse_edge_file(&t.to_edge_file(), "x").unwrap();
        assert_eq!(t, back);
        assert!(Topology::parse_edge_file("edge 0 1\n", "x").is_err());
    }
}
