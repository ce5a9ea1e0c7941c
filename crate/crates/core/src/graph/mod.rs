//! Undirected simple graphs and the operators the models and bounds use.

mod dataset;
mod io;
mod sbm;

pub use dataset::{Dataset, FeatureMatrix, FeatureScaling, Split};
pub use io::{load_dataset, save_dataset, DatasetPaths};
pub use sbm::{generate_sbm, FeatureModel, SbmConfig};

use crate::error::{Error, Result};

/// Simple undirected graph in compressed neighbor-list form.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted; neighbor lists are
/// sorted ascending and symmetric. Self-loops are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    /// Builds a graph from undirected pairs. Duplicates and reversed copies
    /// are merged; self-loops and out-of-range indices are rejected.
    pub fn from_edges(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = Vec::new();
        for (u, v) in pairs {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::IndexOutOfRange {
                        index: x,
                        n,
                        context: format!("edge ({u}, {v})"),
                    });
                }
            }
            if u == v {
                return Err(Error::Validation(format!("self-loop on node {u}")));
            }
            edges.push((u.min(v), u.max(v)));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_sorted_unique(n, edges))
    }

    fn from_sorted_unique(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; offsets[n]];
        for &(u, v) in &edges {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for u in 0..n {
            neighbors[offsets[u]..offsets[u + 1]].sort_unstable();
        }
        Self {
            n,
            edges,
            offsets,
            neighbors,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_sorted_unique(n, Vec::new())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Undirected edges as `(u, v)` with `u < v`, ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Largest node degree; 0 for edgeless graphs.
    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|u| self.degree(u)).max().unwrap_or(0)
    }

    /// Returns a copy with each listed pair toggled: present edges are
    /// removed, absent ones added.
    pub fn with_flipped(&self, flips: &[(usize, usize)]) -> Result<Self> {
        let mut set: std::collections::BTreeSet<(usize, usize)> = self.edges.iter().copied().collect();
        for &(u, v) in flips {
            if u == v || u >= self.n || v >= self.n {
                return Err(Error::Validation(format!("cannot flip pair ({u}, {v})")));
            }
            let key = (u.min(v), u.max(v));
            if !set.remove(&key) {
                set.insert(key);
            }
        }
        Ok(Self::from_sorted_unique(self.n, set.into_iter().collect()))
    }
}

/// `Ã = (D+I)^{-1/2} (A+I) (D+I)^{-1/2}` in CSR form.
///
/// Row `u` holds `N(u) ∪ {u}` in ascending column order with weight
/// `1/√((1+d_u)(1+d_v))`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(g: &Graph) -> Self {
        let n = g.num_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut cols = Vec::with_capacity(2 * g.num_edges() + n);
        let mut vals = Vec::with_capacity(2 * g.num_edges() + n);
        for u in 0..n {
            let du = (1 + g.degree(u)) as f64;
            let mut self_done = false;
            for &v in g.neighbors(u) {
                if !self_done && v > u {
                    cols.push(u);
                    vals.push(1.0 / du);
                    self_done = true;
                }
                let dv = (1 + g.degree(v)) as f64;
                cols.push(v);
                vals.push(1.0 / (du * dv).sqrt());
            }
            if !self_done {
                cols.push(u);
                vals.push(1.0 / du);
            }
            offsets.push(cols.len());
        }
        Self {
            n,
            offsets,
            cols,
            vals,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Column indices and weights of row `u`.
    pub fn row(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// Entry `(u, v)`, zero when absent.
    pub fn get(&self, u: usize, v: usize) -> f64 {
        let r = self.offsets[u]..self.offsets[u + 1];
        match self.cols[r.clone()].binary_search(&v) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|u| self.row(u).map(|(v, a)| a * x[v]).sum())
            .collect()
    }

    /// `Ã · h` for a dense `n × c` matrix.
    pub fn apply(&self, h: &crate::nn::DenseMatrix) -> Result<crate::nn::DenseMatrix> {
        if h.rows() != self.n {
            return Err(Error::dim(format!(
                "adjacency has {} nodes, features have {} rows",
                self.n,
                h.rows()
            )));
        }
        let c = h.cols();
        let mut out = crate::nn::DenseMatrix::zeros(self.n, c);
        for u in 0..self.n {
            let out_row = out.row_mut(u);
            for (v, a) in self.row(u) {
                for (o, &x) in out_row.iter_mut().zip(h.row(v)) {
                    *o += a * x;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> crate::nn::DenseMatrix {
        let mut m = crate::nn::DenseMatrix::zeros(self.n, self.n);
        for u in 0..self.n {
            for (v, a) in self.row(u) {
                m.set(u, v, a);
            }
        }
        m
    }
}

/// Row sums of `Ã^m`: the total weight of length-`m` walks leaving each node.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkSums {
    pub values: Vec<f64>,
    pub length: usize,
}

impl WalkSums {
    /// `ŵ_G`, the largest per-node walk sum.
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Computes `Ã^m 1` with `m` sparse matrix-vector products.
pub fn walk_sums(adj: &NormalizedAdjacency, m: usize) -> WalkSums {
    let mut w = vec![1.0; adj.num_nodes()];
    for _ in 0..m {
        w = adj.mat_vec(&w);
    }
    WalkSums {
        values: w,
        length: m,
    }
}

/// A graph together with its normalized adjacency, built once and shared by
/// forward passes, attacks and bounds.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub graph: Graph,
    pub adjacency: NormalizedAdjacency,
}

impl PreparedGraph {
    pub fn new(graph: Graph) -> Self {
        let adjacency = NormalizedAdjacency::from_graph(&graph);
        Self { graph, adjacency }
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }
}

impl From<Graph> for PreparedGraph {
    fn from(g: Graph) -> Self {
        Self::new(g)
    }
}
