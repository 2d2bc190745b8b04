//! Undirected topologies and static combination matrices.
//!
//! Hypercube nodes are indexed so that the binary expansion of an index gives
//! its coordinates: the dimension-`j` neighbour of node `k` is `k ^ (1 << j)`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg;

/// Tolerance used when none is given explicitly.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node count must be at least {min} for a {kind} graph (got {got})")]
    TooFewNodes { kind: TopologyKind, min: usize, got: usize },
    #[error("K must be a power of two for a hypercube (got {0})")]
    NotPowerOfTwo(usize),
    #[error("edge ({0}, {1}) has an endpoint outside [0, {2})")]
    EndpointOutOfRange(usize, usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("edge list parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("combination matrix is not symmetric (defect {0:e})")]
    NotSymmetric(f64),
    #[error("combination matrix rows do not sum to one (defect {0:e})")]
    RowSums(f64),
    #[error("combination matrix must be square (got {0}x{1})")]
    NotSquare(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    Path,
    Ring,
    Hypercube,
    Complete,
    Custom,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TopologyKind::Path => "path",
            TopologyKind::Ring => "ring",
            TopologyKind::Hypercube => "hypercube",
            TopologyKind::Complete => "complete",
            TopologyKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "path" => Ok(TopologyKind::Path),
            "ring" => Ok(TopologyKind::Ring),
            "hypercube" => Ok(TopologyKind::Hypercube),
            "complete" => Ok(TopologyKind::Complete),
            "custom" => Ok(TopologyKind::Custom),
            other => Err(format!("unknown topology '{other}'")),
        }
    }
}

/// A connected undirected simple graph on nodes `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    kind: TopologyKind,
}

impl Graph {
    /// Builds one of the named topologies.
    pub fn build(kind: TopologyKind, k: usize) -> Result<Self, GraphError> {
        let edges: Vec<(usize, usize)> = match kind {
            TopologyKind::Path => {
                require_nodes(kind, k, 1)?;
                (1..k).map(|v| (v - 1, v)).collect()
            }
            TopologyKind::Ring => {
                require_nodes(kind, k, 3)?;
                let mut e: Vec<_> = (1..k).map(|v| (v - 1, v)).collect();
                e.push((0, k - 1));
                e
            }
            TopologyKind::Hypercube => {
                if k < 2 || !k.is_power_of_two() {
                    return Err(GraphError::NotPowerOfTwo(k));
                }
                let dims = k.trailing_zeros();
                let mut e = Vec::with_capacity(k * dims as usize / 2);
                for u in 0..k {
                    for j in 0..dims {
                        let v = u ^ (1 << j);
                        if u < v {
                            e.push((u, v));
                        }
                    }
                }
                e
            }
            TopologyKind::Complete => {
                require_nodes(kind, k, 1)?;
                let mut e = Vec::with_capacity(k * (k - 1) / 2);
                for u in 0..k {
                    for v in (u + 1)..k {
                        e.push((u, v));
                    }
                }
                e
            }
            TopologyKind::Custom => {
                return Err(GraphError::Parse {
                    line: 0,
                    msg: "custom graphs are built from an edge list".into(),
                })
            }
        };
        Self::assemble(k, edges, kind)
    }

    /// Builds a graph from an explicit edge list; the result must be connected.
    pub fn custom(k: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        require_nodes(TopologyKind::Custom, k, 1)?;
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= k || v >= k {
                return Err(GraphError::EndpointOutOfRange(u, v, k));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            let e = (u.min(v), u.max(v));
            if !seen.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
            normalized.push(e);
        }
        Self::assemble(k, normalized, TopologyKind::Custom)
    }

    fn assemble(k: usize, mut edges: Vec<(usize, usize)>, kind: TopologyKind) -> Result<Self, GraphError> {
        edges.sort_unstable();
        let mut neighbors = vec![Vec::new(); k];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        let g = Graph { node_count: k, edges, neighbors, kind };
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count && self.neighbors[u].binary_search(&v).is_ok()
    }

    fn bfs_depths(&self, source: usize) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.node_count];
        let mut queue = VecDeque::new();
        depth[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = depth[u].unwrap_or(0);
            for &v in &self.neighbors[u] {
                if depth[v].is_none() {
                    depth[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        depth
    }

    pub fn is_connected(&self) -> bool {
        self.node_count > 0 && self.bfs_depths(0).iter().all(Option::is_some)
    }

    /// Longest shortest-path length.
    pub fn diameter(&self) -> usize {
        (0..self.node_count)
            .filter_map(|s| self.bfs_depths(s).into_iter().flatten().max())
            .max()
            .unwrap_or(0)
    }

    /// `L = D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let k = self.node_count;
        let mut l = DMatrix::zeros(k, k);
        for &(u, v) in &self.edges {
            l[(u, v)] -= 1.0;
            l[(v, u)] -= 1.0;
            l[(u, u)] += 1.0;
            l[(v, v)] += 1.0;
        }
        l
    }

    /// Plain-text edge list: first line `K`, then one `u v` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.node_count);
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    /// Parses the edge-list format; the result is tagged `Custom`.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (first, header) = lines.next().ok_or(GraphError::Parse { line: 1, msg: "empty input".into() })?;
        let k: usize = header.parse().map_err(|_| GraphError::Parse {
            line: first,
            msg: format!("expected node count, found '{header}'"),
        })?;
        let mut edges = Vec::new();
        for (line, content) in lines {
            let fields: Vec<&str> = content.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| GraphError::Parse { line, msg: format!("bad node index '{s}'") })
            };
            match fields.as_slice() {
                [u, v] => edges.push((parse(u)?, parse(v)?)),
                _ => return Err(GraphError::Parse { line, msg: "expected 'u v'".into() }),
            }
        }
        Self::custom(k, &edges)
    }
}

fn require_nodes(kind: TopologyKind, got: usize, min: usize) -> Result<(), GraphError> {
    if got < min {
        Err(GraphError::TooFewNodes { kind, min, got })
    } else {
        Ok(())
    }
}

/// A validated `K×K` real mixing matrix: symmetric with unit row sums.
///
/// Nonnegativity and a unit spectral radius are not enforced here; perturbed
/// and factorized sequences may violate both and are flagged by the sequence
/// validator instead.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    entries: DMatrix<f64>,
    tolerance: f64,
}

impl CombinationMatrix {
    pub fn new(entries: DMatrix<f64>, tolerance: f64) -> Result<Self, GraphError> {
        if entries.nrows() != entries.ncols() {
            return Err(GraphError::NotSquare(entries.nrows(), entries.ncols()));
        }
        let sym = linalg::symmetry_defect(&entries);
        if sym > tolerance {
            return Err(GraphError::NotSymmetric(sym));
        }
        let rows = linalg::row_sum_defect(&entries);
        if rows > tolerance {
            return Err(GraphError::RowSums(rows));
        }
        Ok(Self { entries, tolerance })
    }

    pub fn with_default_tolerance(entries: DMatrix<f64>) -> Result<Self, GraphError> {
        Self::new(entries, DEFAULT_TOLERANCE)
    }

    pub fn identity(k: usize) -> Self {
        Self { entries: DMatrix::identity(k, k), tolerance: DEFAULT_TOLERANCE }
    }

    pub fn averaging(k: usize) -> Self {
        Self { entries: linalg::averaging_matrix(k), tolerance: DEFAULT_TOLERANCE }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// True when every nonzero off-diagonal entry sits on an edge of `g`.
    pub fn respects(&self, g: &Graph) -> bool {
        let k = self.size();
        if k != g.node_count() {
            return false;
        }
        for u in 0..k {
            for v in 0..k {
                if u != v && self.entries[(u, v)] != 0.0 && !g.has_edge(u, v) {
                    return false;
                }
            }
        }
        true
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::symmetric_spectral_radius(&self.entries)
    }
}

/// Metropolis–Hastings weights: `1 / (1 + max(d_k, d_l))` on edges, the
/// diagonal absorbing the remainder of each row.
pub fn metropolis_weights(g: &Graph) -> Result<CombinationMatrix, GraphError> {
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    let k = g.node_count();
    let mut a = DMatrix::zeros(k, k);
    for &(u, v) in g.edges() {
        let w = 1.0 / (1.0 + g.degree(u).max(g.degree(v)) as f64);
        a[(u, v)] = w;
        a[(v, u)] = w;
    }
    for u in 0..k {
        let off: f64 = g.neighbors(u).iter().map(|&v| a[(u, v)]).sum();
        a[(u, u)] = 1.0 - off;
    }
    CombinationMatrix::new(a, DEFAULT_TOLERANCE)
}

/// Largest eigenvalue modulus once the consensus eigenvalue is removed.
///
/// Computed as the spectral radius of `A - (1/K) 1 1ᵀ`, which drops exactly one
/// copy of the eigenvalue attached to the all-ones vector.
pub fn second_largest_eigenvalue(m: &DMatrix<f64>) -> Result<f64, GraphError> {
    if m.nrows() != m.ncols() {
        return Err(GraphError::NotSquare(m.nrows(), m.ncols()));
    }
    let sym = linalg::symmetry_defect(m);
    if sym > DEFAULT_TOLERANCE {
        return Err(GraphError::NotSymmetric(sym));
    }
    let deflated = m - linalg::averaging_matrix(m.nrows());
    Ok(linalg::symmetric_spectral_radius(&deflated))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_structure() {
        let g = Graph::build(TopologyKind::Path, 8).unwrap();
        let expected: Vec<_> = (0..7).map(|u| (u, u + 1)).collect();
        assert_eq!(g.edges(), expected.as_slice());
        assert_eq!(g.diameter(), 7);
    }

    #[test]
    fn hypercube_structure() {
        let g = Graph::build(TopologyKind::Hypercube, 8).unwrap();
        assert_eq!(g.edges().len(), 12);
        assert!((0..8).all(|k| g.degree(k) == 3));
        assert!(g.has_edge(5, 5 ^ 2));
    }

    #[test]
    fn hypercube_rejects_non_power_of_two() {
        let err = Graph::build(TopologyKind::Hypercube, 6).unwrap_err();
        assert_eq!(err, GraphError::NotPowerOfTwo(6));
        assert!(err.to_string().contains("K must be a power of two"));
    }

    #[test]
    fn edge_counts_per_kind() {
        for k in [3usize, 4, 8, 16] {
            assert_eq!(Graph::build(TopologyKind::Path, k).unwrap().edges().len(), k - 1);
            assert_eq!(Graph::build(TopologyKind::Ring, k).unwrap().edges().len(), k);
            assert_eq!(Graph::build(TopologyKind::Complete, k).unwrap().edges().len(), k * (k - 1) / 2);
        }
        for d in 1..=6u32 {
            let k = 1usize << d;
            let g = Graph::build(TopologyKind::Hypercube, k).unwrap();
            assert_eq!(g.edges().len(), d as usize * (k / 2));
        }
    }

    #[test]
    fn ring_needs_three_nodes() {
        assert!(matches!(Graph::build(TopologyKind::Ring, 2), Err(GraphError::TooFewNodes { .. })));
        assert!(matches!(Graph::build(TopologyKind::Path, 0), Err(GraphError::TooFewNodes { .. })));
    }

    #[test]
    fn custom_graph_validation() {
        assert_eq!(Graph::custom(3, &[(0, 3)]).unwrap_err(), GraphError::EndpointOutOfRange(0, 3, 3));
        assert_eq!(Graph::custom(3, &[(1, 1)]).unwrap_err(), GraphError::SelfLoop(1));
        assert_eq!(Graph::custom(3, &[(0, 1), (1, 0)]).unwrap_err(), GraphError::DuplicateEdge(0, 1));
        assert_eq!(Graph::custom(4, &[(0, 1), (2, 3)]).unwrap_err(), GraphError::Disconnected);
        assert!(Graph::custom(3, &[(2, 1), (0, 1)]).is_ok());
    }

    #[test]
    fn laplacian_small_cases() {
        let g = Graph::build(TopologyKind::Path, 2).unwrap();
        assert_eq!(g.laplacian(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let h = Graph::build(TopologyKind::Hypercube, 8).unwrap().laplacian();
        for k in 0..8 {
            assert_eq!(h[(k, k)], 3.0);
            assert_eq!(h.row(k).sum(), 0.0);
        }
    }

    #[test]
    fn metropolis_small_cases() {
        let g = Graph::build(TopologyKind::Complete, 4).unwrap();
        let m = metropolis_weights(&g).unwrap();
        assert!(m.entries().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = metropolis_weights(&Graph::build(TopologyKind::Path, 2).unwrap()).unwrap();
        assert!(p.entries().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn second_eigenvalue_edge_cases() {
        assert!(second_largest_eigenvalue(&linalg::averaging_matrix(6)).unwrap() < 1e-12);
        assert!((second_largest_eigenvalue(&DMatrix::identity(4, 4)).unwrap() - 1.0).abs() < 1e-12);
        let skew = DMatrix::from_row_slice(2, 2, &[0.5, 0.6, 0.4, 0.5]);
        assert!(matches!(second_largest_eigenvalue(&skew), Err(GraphError::NotSymmetric(_))));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::build(TopologyKind::Ring, 5).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("5\n0 1\n"));
        let back = Graph::from_edge_list(&text).unwrap();
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.kind(), TopologyKind::Custom);
        let err = Graph::from_edge_list("3\n0 x\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }));
    }

    #[test]
    fn combination_matrix_rejects_bad_input() {
        let not_sym = DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.5, 0.5]);
        assert!(matches!(CombinationMatrix::with_default_tolerance(not_sym), Err(GraphError::NotSymmetric(_))));
        let bad_rows = DMatrix::from_row_slice(2, 2, &[0.4, 0.5, 0.5, 0.4]);
        assert!(matches!(CombinationMatrix::with_default_tolerance(bad_rows), Err(GraphError::RowSums(_))));
    }

    #[test]
    fn sparsity_check() {
        let g = Graph::build(TopologyKind::Path, 3).unwrap();
        assert!(metropolis_weights(&g).unwrap().respects(&g));
        assert!(!CombinationMatrix::averaging(3).respects(&g));
    }
}
