//! Weighted undirected graphs, their Laplacians, spectra and Schur complements.
//!
//! Everything is dense: the toolkit targets desk-scale networks (n up to a
//! few dozen), where exact spectral checks matter more than sparsity.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Spectral zero threshold: eigenvalues below this count as zero when
/// deciding connectivity (`lambda_2 > ZERO_EIG_TOL` iff connected).
pub const ZERO_EIG_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("self-loop at node {0} (1-based)")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1}) (1-based)")]
    DuplicateEdge(usize, usize),
    #[error("non-positive weight {w} on edge ({i}, {j}) (1-based)")]
    NonPositiveWeight { i: usize, j: usize, w: f64 },
    #[error("node index {idx} out of range for n = {n} (1-based)")]
    IndexOutOfRange { idx: usize, n: usize },
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("partition keeps no nodes")]
    EmptyPartition,
    #[error("partition keeps all nodes")]
    FullPartition,
    #[error("graph is disconnected")]
    DisconnectedGraph,
}

/// An undirected edge between 0-based endpoints with a positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Weighted undirected graph without self-loops or duplicate edges.
///
/// Node indices are 0-based everywhere in the library; the 1-based
/// convention of the JSON formats is translated at the config boundary.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// Build a validated graph from 1-based endpoint pairs.
///
/// Rejects self-loops, duplicate unordered pairs, non-positive weights and
/// out-of-range indices.
pub fn build_graph(n: usize, edges: &[(usize, usize, f64)]) -> Result<Graph, GraphError> {
    if n == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(edges.len());
    let mut adjacency = vec![Vec::new(); n];
    for &(i, j, w) in edges {
        if i == 0 || i > n {
            return Err(GraphError::IndexOutOfRange { idx: i, n });
        }
        if j == 0 || j > n {
            return Err(GraphError::IndexOutOfRange { idx: j, n });
        }
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        if !(w > 0.0) {
            return Err(GraphError::NonPositiveWeight { i, j, w });
        }
        let key = (i.min(j), i.max(j));
        if !seen.insert(key) {
            return Err(GraphError::DuplicateEdge(key.0, key.1));
        }
        let (a, b) = (i - 1, j - 1);
        out.push(Edge {
            i: a,
            j: b,
            weight: w,
        });
        adjacency[a].push((b, w));
        adjacency[b].push((a, w));
    }
    Ok(Graph {
        n,
        edges: out,
        adjacency,
    })
}

impl Graph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of 0-based node `i` as `(neighbor, weight)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }

    /// Connectivity by breadth-first search. Independent of the spectral
    /// test `lambda_2 > 0`, so the two can be cross-checked.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut visited = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }
}

/// Dense graph Laplacian `L = D - A` with its eigenvalues cached at
/// construction (sorted ascending, so `eigenvalues[1]` is lambda_2).
#[derive(Debug, Clone)]
pub struct LaplacianMatrix {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

/// Assemble the Laplacian of `g` and cache its spectrum.
pub fn laplacian(g: &Graph) -> LaplacianMatrix {
    let n = g.n();
    let mut m = DMatrix::zeros(n, n);
    for e in g.edges() {
        m[(e.i, e.j)] = -e.weight;
        m[(e.j, e.i)] = -e.weight;
    }
    for i in 0..n {
        // Same summation order as the off-diagonal fill, so row sums are
        // exactly zero in floating point.
        m[(i, i)] = g.degree(i);
    }
    let mut eigenvalues: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    LaplacianMatrix {
        matrix: m,
        eigenvalues,
    }
}

impl LaplacianMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalues sorted ascending; `[0]` is always (numerically) zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn is_connected_spectrally(&self) -> bool {
        self.n() >= 1 && (self.n() == 1 || self.eigenvalues[1] > ZERO_EIG_TOL)
    }

    /// Row-block product `(L (x) I_k)_i x`: the i-th k-dimensional block of
    /// `L_bar x`, equal to minus the neighbor sum of agent `i`.
    pub fn row_block(&self, x: &DVector<f64>, i: usize, k: usize) -> DVector<f64> {
        let n = self.n();
        assert_eq!(x.len(), n * k, "state length must be n*k");
        let mut out = DVector::zeros(k);
        for j in 0..n {
            let lij = self.matrix[(i, j)];
            if lij != 0.0 {
                for l in 0..k {
                    out[l] += lij * x[j * k + l];
                }
            }
        }
        out
    }

    /// Quadratic form `x^T (L (x) I_k) x`.
    pub fn quadratic_form(&self, x: &DVector<f64>, k: usize) -> f64 {
        let n = self.n();
        assert_eq!(x.len(), n * k, "state length must be n*k");
        let mut acc = 0.0;
        for i in 0..n {
            let bi = self.row_block(x, i, k);
            for l in 0..k {
                acc += x[i * k + l] * bi[l];
            }
        }
        acc
    }
}

/// Second-smallest Laplacian eigenvalue (algebraic connectivity).
///
/// Positive exactly when the graph is connected; errors otherwise.
pub fn algebraic_connectivity(lap: &LaplacianMatrix) -> Result<f64, GraphError> {
    if !lap.is_connected_spectrally() {
        return Err(GraphError::DisconnectedGraph);
    }
    Ok(lap.eigenvalues[1])
}

/// Schur complement of the Laplacian onto the 0-based node subset `keep`.
///
/// Returns `L_cc - L_cd L_dd^{-1} L_dc`, which is itself a graph Laplacian
/// over the kept nodes when the underlying graph is connected.
pub fn schur_complement(lap: &LaplacianMatrix, keep: &[usize]) -> Result<DMatrix<f64>, GraphError> {
    let n = lap.n();
    let mut kept = vec![false; n];
    for &i in keep {
        if i >= n {
            return Err(GraphError::IndexOutOfRange { idx: i + 1, n });
        }
        kept[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| kept[i]).collect();
    let drop: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();
    if keep.is_empty() {
        return Err(GraphError::EmptyPartition);
    }
    if drop.is_empty() {
        return Err(GraphError::FullPartition);
    }
    if !lap.is_connected_spectrally() {
        return Err(GraphError::DisconnectedGraph);
    }
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
            lap.matrix[(rows[r], cols[c])]
        })
    };
    let l_cc = sub(&keep, &keep);
    let l_cd = sub(&keep, &drop);
    let l_dd = sub(&drop, &drop);
    let l_dc = sub(&drop, &keep);
    // L_dd is strictly diagonally dominant on a connected graph proper
    // partition, hence invertible.
    let solved = l_dd
        .lu()
        .solve(&l_dc)
        .ok_or(GraphError::DisconnectedGraph)?;
    Ok(l_cc - l_cd * solved)
}

/// Solve `L_dd X = -L_dc X_c` for the dropped blocks: the enslaved states of
/// the necessity construction. `x_c` has one row per kept node and `k`
/// columns; returns one row per dropped node.
pub fn schur_lift(
    lap: &LaplacianMatrix,
    keep: &[usize],
    x_c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GraphError> {
    let n = lap.n();
    let mut kept = vec![false; n];
    for &i in keep {
        if i >= n {
            return Err(GraphError::IndexOutOfRange { idx: i + 1, n });
        }
        kept[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| kept[i]).collect();
    let drop: Vec<usize> = (0..n).filter(|&i| !kept[i]).collect();
    if keep.is_empty() {
        return Err(GraphError::EmptyPartition);
    }
    if drop.is_empty() {
        return Err(GraphError::FullPartition);
    }
    if !lap.is_connected_spectrally() {
        return Err(GraphError::DisconnectedGraph);
    }
    assert_eq!(x_c.nrows(), keep.len());
    let l_dd = DMatrix::from_fn(drop.len(), drop.len(), |r, c| {
        lap.matrix[(drop[r], drop[c])]
    });
    let l_dc = DMatrix::from_fn(drop.len(), keep.len(), |r, c| {
        lap.matrix[(drop[r], keep[c])]
    });
    let rhs = -(l_dc * x_c);
    l_dd.lu().solve(&rhs).ok_or(GraphError::DisconnectedGraph)
}

/// Random connected graph on `n` nodes: a random spanning tree plus each
/// remaining pair independently with probability `extra_p`. Weights are
/// drawn uniformly from `[0.5, 2.0]`. Test and benchmark utility.
pub fn random_connected<R: rand::Rng>(n: usize, extra_p: f64, rng: &mut R) -> Graph {
    assert!(n >= 1);
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut order: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for idx in 1..n {
        let prev = order[rng.gen_range(0..idx)];
        let cur = order[idx];
        let w = rng.gen_range(0.5..2.0);
        edges.push((prev.min(cur), prev.max(cur), w));
    }
    let tree: std::collections::HashSet<(usize, usize)> =
        edges.iter().map(|&(i, j, _)| (i, j)).collect();
    for i in 1..=n {
        for j in (i + 1)..=n {
            if !tree.contains(&(i, j)) && rng.gen_bool(extra_p) {
                edges.push((i, j, rng.gen_range(0.5..2.0)));
            }
        }
    }
    build_graph(n, &edges).expect("generator produces valid graphs")
}
