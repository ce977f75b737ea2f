//! Directed graphs with an undirected skeleton.
//!
//! Vertex and edge ids are strings at the file boundary and dense 0-based
//! indices everywhere else. Distances are unweighted BFS distances on the
//! undirected skeleton.

mod generate;
mod io;

pub use generate::{generate, GraphKind};
pub use io::{EdgeRecord, GraphFile};

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub tail: usize,
    pub head: usize,
}

impl Edge {
    /// The endpoint that is not `v`.
    pub fn other(&self, v: usize) -> usize {
        if self.tail == v {
            self.head
        } else {
            self.tail
        }
    }
}

/// A simple, connected directed graph.
///
/// At most one edge joins any unordered vertex pair, so the undirected
/// skeleton is a simple graph too.
#[derive(Debug, Clone)]
pub struct DirectedGraph {
    vertex_ids: Vec<String>,
    vertex_lookup: HashMap<String, usize>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<String, usize>,
    /// `(neighbor, edge index)` pairs, sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl DirectedGraph {
    /// Builds a graph from string ids, validating every structural invariant.
    pub fn new<S: Into<String>>(
        vertex_ids: impl IntoIterator<Item = S>,
        edges: impl IntoIterator<Item = (S, S, S)>,
    ) -> Result<Self> {
        let vertex_ids: Vec<String> = vertex_ids.into_iter().map(Into::into).collect();
        let mut vertex_lookup = HashMap::with_capacity(vertex_ids.len());
        for (i, id) in vertex_ids.iter().enumerate() {
            if vertex_lookup.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate vertex id `{id}`")));
            }
        }
        let mut built = Vec::new();
        for (id, tail, head) in edges {
            let (id, tail, head): (String, String, String) = (id.into(), tail.into(), head.into());
            let t = *vertex_lookup
                .get(&tail)
                .ok_or_else(|| Error::UnknownVertex(tail.clone()))?;
            let h = *vertex_lookup
                .get(&head)
                .ok_or_else(|| Error::UnknownVertex(head.clone()))?;
            built.push(Edge { id, tail: t, head: h });
        }
        Self::assemble(vertex_ids, vertex_lookup, built)
    }

    /// Builds a graph on vertices `v0..v{n-1}` with edges `e0, e1, ...`.
    pub fn from_index_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let vertex_ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let vertex_lookup = vertex_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let mut edges = Vec::with_capacity(pairs.len());
        for (j, &(t, h)) in pairs.iter().enumerate() {
            if t >= n || h >= n {
                return Err(Error::UnknownVertex(format!("v{}", t.max(h))));
            }
            edges.push(Edge {
                id: format!("e{j}"),
                tail: t,
                head: h,
            });
        }
        Self::assemble(vertex_ids, vertex_lookup, edges)
    }

    fn assemble(
        vertex_ids: Vec<String>,
        vertex_lookup: HashMap<String, usize>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let n = vertex_ids.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        let mut edge_lookup = HashMap::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for (j, e) in edges.iter().enumerate() {
            if edge_lookup.insert(e.id.clone(), j).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate edge id `{}`", e.id)));
            }
            if e.tail == e.head {
                return Err(Error::InvalidGraph(format!("self-loop on edge `{}`", e.id)));
            }
            adjacency[e.tail].push((e.head, j));
            adjacency[e.head].push((e.tail, j));
        }
        for (v, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidGraph(format!(
                    "multiple edges between `{}` and `{}` (edges `{}`, `{}`)",
                    vertex_ids[v], vertex_ids[w[0].0], edges[w[0].1].id, edges[w[1].1].id
                )));
            }
        }
        let g = Self {
            vertex_ids,
            vertex_lookup,
            edges,
            edge_lookup,
            adjacency,
        };
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    fn is_connected(&self) -> bool {
        self.bfs(&[0]).iter().all(|&d| d != usize::MAX)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, j: usize) -> &Edge {
        &self.edges[j]
    }

    pub fn vertex_ids(&self) -> &[String] {
        &self.vertex_ids
    }

    pub fn vertex_id(&self, v: usize) -> &str {
        &self.vertex_ids[v]
    }

    pub fn vertex_index(&self, id: &str) -> Result<usize> {
        self.vertex_lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    }

    pub fn edge_index(&self, id: &str) -> Result<usize> {
        self.edge_lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownEdge(id.to_string()))
    }

    /// `(neighbor, edge index)` pairs of `v` in the undirected skeleton.
    pub fn incident(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().map(|&(w, _)| w)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// `(k_min, k_max)` over all vertices.
    pub fn degree_range(&self) -> (usize, usize) {
        let degs = (0..self.n_vertices()).map(|v| self.degree(v));
        let min = degs.clone().min().unwrap_or(0);
        let max = degs.max().unwrap_or(0);
        (min, max)
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.adjacency[u]
            .binary_search_by_key(&v, |&(w, _)| w)
            .ok()
            .map(|i| self.adjacency[u][i].1)
    }

    /// Vertex-edge incidence matrix: `+1` where an edge leaves, `-1` where it enters.
    pub fn incidence(&self) -> IncidenceMatrix {
        let mut a = DMatrix::zeros(self.n_vertices(), self.n_edges());
        for (j, e) in self.edges.iter().enumerate() {
            a[(e.tail, j)] = 1.0;
            a[(e.head, j)] = -1.0;
        }
        IncidenceMatrix(a)
    }

    /// Unweighted vertex-vertex adjacency matrix of the undirected skeleton.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.n_vertices();
        let mut b = DMatrix::zeros(n, n);
        for e in &self.edges {
            b[(e.tail, e.head)] = 1.0;
            b[(e.head, e.tail)] = 1.0;
        }
        b
    }

    /// Multi-source BFS distances; `usize::MAX` marks unreachable vertices.
    pub fn bfs(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n_vertices()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// `min { d(u, z) : u in U, z in Z }` in the undirected skeleton.
    pub fn geodesic_distance(&self, from: &[usize], to: &[usize]) -> Result<usize> {
        if from.is_empty() || to.is_empty() {
            return Err(Error::EmptySet);
        }
        let dist = self.bfs(from);
        Ok(to.iter().map(|&z| dist[z]).min().unwrap_or(usize::MAX))
    }

    /// Sorted set of endpoints of the given edges.
    pub fn induced_vertex_set(&self, edge_set: &[usize]) -> Vec<usize> {
        let mut vs: Vec<usize> = edge_set
            .iter()
            .flat_map(|&j| [self.edges[j].tail, self.edges[j].head])
            .collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }

    pub fn eccentricity(&self, v: usize) -> usize {
        self.bfs(&[v]).into_iter().max().unwrap_or(0)
    }

    pub fn diameter(&self) -> usize {
        (0..self.n_vertices())
            .map(|v| self.eccentricity(v))
            .max()
            .unwrap_or(0)
    }

    /// Ball of radius `r` around `center` with its induced edges.
    pub fn ball_subgraph(&self, center: usize, r: usize) -> SubgraphSpec {
        let dist = self.bfs(&[center]);
        let vertices: Vec<usize> = (0..self.n_vertices()).filter(|&v| dist[v] <= r).collect();
        SubgraphSpec::induced(self, &vertices)
            .expect("a ball is connected by construction")
    }
}

impl DirectedGraph {
    /// The subgraph `(V', E')` as a standalone graph that keeps the
    /// original ids. Vertices and edges appear in increasing index order.
    pub fn extract(&self, sub: &SubgraphSpec) -> Result<DirectedGraph> {
        let mut local = vec![usize::MAX; self.n_vertices()];
        for (i, &v) in sub.vertices().iter().enumerate() {
            local[v] = i;
        }
        let vertex_ids: Vec<String> = sub.vertices().iter().map(|&v| self.vertex_ids[v].clone()).collect();
        let vertex_lookup = vertex_ids.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let edges = sub
            .edges()
            .iter()
            .map(|&j| {
                let e = &self.edges[j];
                Edge {
                    id: e.id.clone(),
                    tail: local[e.tail],
                    head: local[e.head],
                }
            })
            .collect();
        Self::assemble(vertex_ids, vertex_lookup, edges)
    }
}

/// Dense vertex-by-edge incidence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix(DMatrix<f64>);

impl IncidenceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.0.column_iter().map(|c| c.sum()).collect()
    }
}

/// A connected subgraph `(V', E')` together with its inner boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphSpec {
    vertices: Vec<usize>,
    edges: Vec<usize>,
    vertex_mask: Vec<bool>,
    edge_mask: Vec<bool>,
    boundary: Vec<usize>,
}

impl SubgraphSpec {
    /// Subgraph with an explicit edge set. Every edge must have both
    /// endpoints in `vertices`, and `(V', E')` must be connected.
    pub fn new(g: &DirectedGraph, vertices: &[usize], edges: &[usize]) -> Result<Self> {
        let n = g.n_vertices();
        let mut vertex_mask = vec![false; n];
        for &v in vertices {
            if v >= n {
                return Err(Error::InvalidParameter(format!("vertex index {v} out of range")));
            }
            vertex_mask[v] = true;
        }
        let mut edge_mask = vec![false; g.n_edges()];
        for &j in edges {
            if j >= g.n_edges() {
                return Err(Error::InvalidParameter(format!("edge index {j} out of range")));
            }
            let e = g.edge(j);
            if !vertex_mask[e.tail] || !vertex_mask[e.head] {
                return Err(Error::InvalidGraph(format!(
                    "subgraph edge `{}` has an endpoint outside the vertex set",
                    e.id
                )));
            }
            edge_mask[j] = true;
        }
        let vertices: Vec<usize> = (0..n).filter(|&v| vertex_mask[v]).collect();
        let edges: Vec<usize> = (0..g.n_edges()).filter(|&j| edge_mask[j]).collect();
        if vertices.is_empty() {
            return Err(Error::EmptySet);
        }

        // connectivity of (V', E')
        let mut seen = vec![false; n];
        let mut stack = vec![vertices[0]];
        seen[vertices[0]] = true;
        while let Some(v) = stack.pop() {
            for &(w, j) in g.incident(v) {
                if edge_mask[j] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if vertices.iter().any(|&v| !seen[v]) {
            return Err(Error::InvalidGraph("subgraph is not connected".into()));
        }

        let boundary = vertices
            .iter()
            .copied()
            .filter(|&v| g.neighbors(v).any(|w| !vertex_mask[w]))
            .collect();
        Ok(Self {
            vertices,
            edges,
            vertex_mask,
            edge_mask,
            boundary,
        })
    }

    /// Subgraph induced by a vertex set.
    pub fn induced(g: &DirectedGraph, vertices: &[usize]) -> Result<Self> {
        let mut mask = vec![false; g.n_vertices()];
        for &v in vertices {
            if v < mask.len() {
                mask[v] = true;
            }
        }
        let edges: Vec<usize> = g
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| mask[e.tail] && mask[e.head])
            .map(|(j, _)| j)
            .collect();
        Self::new(g, vertices, &edges)
    }

    pub fn whole(g: &DirectedGraph) -> Self {
        let vertices: Vec<usize> = (0..g.n_vertices()).collect();
        Self::induced(g, &vertices).expect("graph is connected")
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// Inner boundary: vertices of `V'` with a neighbor outside `V'`.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn contains_vertex(&self, v: usize) -> bool {
        self.vertex_mask[v]
    }

    pub fn contains_edge(&self, j: usize) -> bool {
        self.edge_mask[j]
    }

    pub fn complement_vertices(&self) -> Vec<usize> {
        (0..self.vertex_mask.len())
            .filter(|&v| !self.vertex_mask[v])
            .collect()
    }

    pub fn complement_edges(&self) -> Vec<usize> {
        (0..self.edge_mask.len())
            .filter(|&j| !self.edge_mask[j])
            .collect()
    }

    /// True when the subgraph is all of `G`.
    pub fn is_whole(&self) -> bool {
        self.vertex_mask.iter().all(|&b| b) && self.edge_mask.iter().all(|&b| b)
    }
}
