//! Generative graphs, undirected edge sets, kinship queries and the
//! relative-error metric.
//!
//! Nodes are 0-based in the API. Every text format (edge lists, reports,
//! CSV headers) is 1-based.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Set of unordered node pairs, stored as `(min, max)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EdgeSet {
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from pairs; order within a pair is irrelevant.
    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Result<Self> {
        let mut set = Self::new();
        for (i, j) in pairs {
            set.try_insert(i, j)?;
        }
        Ok(set)
    }

    /// Inserts `{i, j}`. Returns whether the pair was new.
    pub fn try_insert(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j {
            return Err(Error::Invalid(format!("self-loop on node {}", i + 1)));
        }
        Ok(self.edges.insert((i.min(j), i.max(j))))
    }

    /// Inserts `{i, j}`; panics on a self-loop.
    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        assert_ne!(i, j, "self-loop");
        self.edges.insert((i.min(j), i.max(j)))
    }

    pub fn remove(&mut self, i: usize, j: usize) -> bool {
        self.edges.remove(&(i.min(j), i.max(j)))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Pairs in lexicographic order, each with `i < j`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet {
            edges: self.edges.union(&other.edges).copied().collect(),
        }
    }

    pub fn intersection(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet {
            edges: self.edges.intersection(&other.edges).copied().collect(),
        }
    }

    pub fn difference(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet {
            edges: self.edges.difference(&other.edges).copied().collect(),
        }
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.is_subset(&other.edges)
    }

    /// Edge-list text: one `i j` line per edge, 1-based, `i < j`, sorted.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, j) in self.iter() {
            writeln!(out, "{} {}", i + 1, j + 1).unwrap();
        }
        out
    }

    /// Parses the edge-list format. Blank lines and `#` comments are
    /// skipped; pairs may appear in either order.
    pub fn parse_edge_list(text: &str) -> Result<EdgeSet> {
        let mut set = EdgeSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: k + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(parse_err(format!("expected two node ids, found `{line}`")));
            }
            let mut ids = [0usize; 2];
            for (slot, f) in ids.iter_mut().zip(&fields) {
                let v: usize = f
                    .parse()
                    .map_err(|_| parse_err(format!("bad node id `{f}`")))?;
                if v == 0 {
                    return Err(parse_err("node ids are 1-based".into()));
                }
                *slot = v - 1;
            }
            if !set
                .try_insert(ids[0], ids[1])
                .map_err(|e| parse_err(e.to_string()))?
            {
                return Err(parse_err(format!("duplicate edge `{line}`")));
            }
        }
        Ok(set)
    }
}

impl FromIterator<(usize, usize)> for EdgeSet {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        let mut set = EdgeSet::new();
        for (i, j) in iter {
            set.insert(i, j);
        }
        set
    }
}

/// Directed weighted graph of coupled linear node dynamics.
///
/// `b[(i, j)]` is the gain of the directed edge `j -> i` (node `j` drives
/// node `i`). `node_dynamics[i][m]` is the coefficient of the `m`-th
/// derivative of `x_i`, starting at `m = 0`; the zeroth-order term is a
/// self-restoring gain towards the reference level.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeGraph {
    b: DMatrix<f64>,
    node_dynamics: Vec<Vec<f64>>,
}

impl GenerativeGraph {
    pub fn new(b: DMatrix<f64>, node_dynamics: Vec<Vec<f64>>) -> Result<Self> {
        let n = b.nrows();
        if b.ncols() != n {
            return Err(Error::Invalid("coupling matrix must be square".into()));
        }
        if node_dynamics.len() != n {
            return Err(Error::Invalid(format!(
                "expected {n} node dynamics, got {}",
                node_dynamics.len()
            )));
        }
        for i in 0..n {
            if b[(i, i)] != 0.0 {
                return Err(Error::Invalid(format!("nonzero self-coupling at node {}", i + 1)));
            }
            for j in 0..n {
                let v = b[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Invalid(format!(
                        "coupling b[{}][{}] = {v} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if node_dynamics[i].iter().any(|a| !a.is_finite()) {
                return Err(Error::Invalid(format!("non-finite dynamics at node {}", i + 1)));
            }
        }
        Ok(Self { b, node_dynamics })
    }

    /// Graph with only the couplings; node dynamics default to `dx/dt`.
    pub fn from_couplings(b: DMatrix<f64>) -> Result<Self> {
        let n = b.nrows();
        Self::new(b, vec![vec![0.0, 1.0]; n])
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.b[(i, j)]
    }

    pub fn node_dynamics(&self, i: usize) -> &[f64] {
        &self.node_dynamics[i]
    }

    pub fn is_bidirected(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| (self.b[(i, j)] > 0.0) == (self.b[(j, i)] > 0.0)))
    }

    fn check_node(&self, j: usize) -> Result<()> {
        if j >= self.n() {
            return Err(Error::NodeOutOfRange { node: j, n: self.n() });
        }
        Ok(())
    }

    /// `C_j = {i : b_ij > 0}`: nodes driven by `j`.
    pub fn children(&self, j: usize) -> Result<BTreeSet<usize>> {
        self.check_node(j)?;
        Ok((0..self.n()).filter(|&i| self.b[(i, j)] > 0.0).collect())
    }

    /// `P_j = {i : b_ji > 0}`: nodes driving `j`.
    pub fn parents(&self, j: usize) -> Result<BTreeSet<usize>> {
        self.check_node(j)?;
        Ok((0..self.n()).filter(|&i| self.b[(j, i)] > 0.0).collect())
    }

    /// `K_j`: nodes other than `j` that share a child with `j`.
    pub fn spouses(&self, j: usize) -> Result<BTreeSet<usize>> {
        let cj = self.children(j)?;
        Ok((0..self.n())
            .filter(|&i| i != j && cj.iter().any(|&k| self.b[(k, i)] > 0.0))
            .collect())
    }

    /// Nodes at undirected shortest distance exactly `m` from `j`.
    pub fn hop_neighbors(&self, j: usize, m: usize) -> Result<BTreeSet<usize>> {
        let dist = self.distances_from(j)?;
        Ok((0..self.n()).filter(|&i| m > 0 && dist[i] == Some(m)).collect())
    }

    pub fn kin_sets(&self, j: usize) -> Result<KinSets> {
        let dist = self.distances_from(j)?;
        let max = dist.iter().flatten().copied().max().unwrap_or(0);
        let hops = (1..=max)
            .map(|m| (0..self.n()).filter(|&i| dist[i] == Some(m)).collect())
            .collect();
        Ok(KinSets {
            children: self.children(j)?,
            parents: self.parents(j)?,
            spouses: self.spouses(j)?,
            hops,
        })
    }

    fn distances_from(&self, j: usize) -> Result<Vec<Option<usize>>> {
        self.check_node(j)?;
        let topo = topology_of(self);
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in topo.iter() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut dist = vec![None; n];
        dist[j] = Some(0);
        let mut queue = VecDeque::from([j]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }
}

/// Kinship of one node. `hops[m - 1]` holds the `m`-hop neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KinSets {
    pub children: BTreeSet<usize>,
    pub parents: BTreeSet<usize>,
    pub spouses: BTreeSet<usize>,
    pub hops: Vec<BTreeSet<usize>>,
}

impl KinSets {
    pub fn hop(&self, m: usize) -> BTreeSet<usize> {
        if m == 0 {
            return BTreeSet::new();
        }
        self.hops.get(m - 1).cloned().unwrap_or_default()
    }

    pub fn neighbors(&self) -> BTreeSet<usize> {
        self.hop(1)
    }
}

pub fn topology_of(g: &GenerativeGraph) -> EdgeSet {
    let n = g.n();
    let mut set = EdgeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && g.gain(i, j) > 0.0 {
                set.insert(i, j);
            }
        }
    }
    set
}

pub fn moral_graph_of(g: &GenerativeGraph) -> EdgeSet {
    let n = g.n();
    let mut set = topology_of(g);
    for k in 0..n {
        let parents: Vec<usize> = (0..n).filter(|&i| g.gain(k, i) > 0.0).collect();
        for (a, &i) in parents.iter().enumerate() {
            for &j in &parents[a + 1..] {
                set.insert(i, j);
            }
        }
    }
    set
}

/// Pairs at undirected shortest distance exactly two in `topology`.
pub fn strict_two_hop_pairs(n: usize, topology: &EdgeSet) -> EdgeSet {
    let mut adj = vec![BTreeSet::new(); n];
    for (a, b) in topology.iter() {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    let mut set = EdgeSet::new();
    for k in 0..n {
        let nb: Vec<usize> = adj[k].iter().copied().collect();
        for (a, &i) in nb.iter().enumerate() {
            for &j in &nb[a + 1..] {
                if !adj[i].contains(&j) {
                    set.insert(i, j);
                }
            }
        }
    }
    set
}

/// `100 * (false positives + false negatives) / |truth|`.
pub fn relative_error(estimated: &EdgeSet, truth: &EdgeSet) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let fp = estimated.difference(truth).len();
    let fn_ = truth.difference(estimated).len();
    Ok(100.0 * (fp + fn_) as f64 / truth.len() as f64)
}

/// Symmetric coupling matrix from weighted undirected edges.
pub fn symmetric_coupling(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    for &(i, j, w) in edges {
        b[(i, j)] = w;
        b[(j, i)] = w;
    }
    b
}
