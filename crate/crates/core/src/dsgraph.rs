//! Graphs, Laplacians and the synthetic path/cycle graphs the spectral
//! results are stated for.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::dynamics::StateSample;
use crate::error::GraphError;

/// Symmetric graph with real kernel weights and a binary adjacency.
///
/// The Laplacian only ever sees the binary adjacency.
#[derive(Clone, Debug)]
pub struct WeightedGraph {
    weights: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
    node_payloads: Option<Vec<StateSample>>,
    path_index: Option<Vec<(usize, usize)>>,
    warnings: Vec<String>,
}

impl WeightedGraph {
    /// `neighbors[i]` must be sorted, symmetric and free of `i`.
    pub(crate) fn from_parts(weights: DMatrix<f64>, neighbors: Vec<Vec<usize>>) -> Self {
        Self {
            weights,
            neighbors,
            node_payloads: None,
            path_index: None,
            warnings: Vec::new(),
        }
    }

    /// Unweighted graph from an undirected edge list; duplicate edges and
    /// self loops are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            if a != b {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let mut weights = DMatrix::identity(n, n);
        for (i, list) in neighbors.iter().enumerate() {
            for &j in list {
                weights[(i, j)] = 1.0;
            }
        }
        Self::from_parts(weights, neighbors)
    }

    pub(crate) fn set_payloads(&mut self, nodes: Vec<StateSample>, path_index: Vec<(usize, usize)>) {
        self.node_payloads = Some(nodes);
        self.path_index = Some(path_index);
    }

    pub(crate) fn push_warning(&mut self, w: String) {
        self.warnings.push(w);
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn node_payloads(&self) -> Option<&[StateSample]> {
        self.node_payloads.as_deref()
    }

    /// `(trajectory id, position in trajectory)` per node, for data graphs.
    pub fn path_index(&self) -> Option<&[(usize, usize)]> {
        self.path_index.as_deref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for (i, list) in self.neighbors.iter().enumerate() {
            for &j in list {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    /// Relabels nodes so that new node `perm[i]` is old node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.len();
        assert_eq!(perm.len(), n);
        let mut neighbors = vec![Vec::new(); n];
        for (i, list) in self.neighbors.iter().enumerate() {
            neighbors[perm[i]] = list.iter().map(|&j| perm[j]).collect();
            neighbors[perm[i]].sort_unstable();
        }
        let mut inv = vec![usize::MAX; n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let weights = DMatrix::from_fn(n, n, |a, b| self.weights[(inv[a], inv[b])]);
        let mut out = Self::from_parts(weights, neighbors);
        if let (Some(nodes), Some(index)) = (&self.node_payloads, &self.path_index) {
            out.set_payloads(
                inv.iter().map(|&i| nodes[i].clone()).collect(),
                inv.iter().map(|&i| index[i]).collect(),
            );
        }
        out
    }
}

/// `L = D - A` on the binary adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianMatrix {
    pub entries: DMatrix<f64>,
    pub degree: Vec<usize>,
}

impl LaplacianMatrix {
    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    /// Principal submatrix on `nodes` (a union of components keeps row sums 0).
    pub fn restricted(&self, nodes: &[usize]) -> LaplacianMatrix {
        let n = nodes.len();
        LaplacianMatrix {
            entries: DMatrix::from_fn(n, n, |a, b| self.entries[(nodes[a], nodes[b])]),
            degree: nodes.iter().map(|&i| self.degree[i]).collect(),
        }
    }
}

pub fn laplacian(g: &WeightedGraph) -> LaplacianMatrix {
    let n = g.len();
    let mut entries = DMatrix::zeros(n, n);
    let degree: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    for i in 0..n {
        entries[(i, i)] = degree[i] as f64;
        for &j in g.neighbors(i) {
            entries[(i, j)] = -1.0;
        }
    }
    LaplacianMatrix { entries, degree }
}

/// Reachability classes, each sorted, ordered by their smallest node.
pub fn connected_components(g: &WeightedGraph) -> Vec<Vec<usize>> {
    let n = g.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in g.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    comp.push(j);
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Per-node component id consistent with [`connected_components`].
pub fn component_labels(components: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut labels = vec![usize::MAX; n];
    for (q, comp) in components.iter().enumerate() {
        for &i in comp {
            labels[i] = q;
        }
    }
    labels
}

/// Walks every path that starts at a degree-1 node through degree-2 nodes
/// and stops at the first node of degree >= 3 (included). Paths are
/// returned head first, ordered by head index.
pub fn trace_paths(g: &WeightedGraph) -> Vec<Vec<usize>> {
    let mut paths = Vec::new();
    for head in (0..g.len()).filter(|&i| g.degree(i) == 1) {
        let mut path = vec![head];
        let mut prev = head;
        let mut cur = g.neighbors(head)[0];
        loop {
            path.push(cur);
            if g.degree(cur) != 2 {
                break;
            }
            let next = g.neighbors(cur).iter().copied().find(|&j| j != prev).unwrap();
            prev = cur;
            cur = next;
        }
        // Two heads joined by a plain path are traced twice; keep one.
        let tail = *path.last().unwrap();
        if g.degree(tail) == 1 && tail < head {
            continue;
        }
        paths.push(path);
    }
    paths
}

/// `k` paths of `n` nodes each (path `k` is nodes `k*n .. (k+1)*n`), with the
/// last node of every path joined in a cycle. Two paths share one edge; a
/// single path has no cycle.
pub fn build_theory_graph(k: usize, n: usize) -> Result<WeightedGraph, GraphError> {
    if k < 1 {
        return Err(GraphError::TooFewPaths { min: 1, got: k });
    }
    if n < 3 {
        return Err(GraphError::PathTooShort(n));
    }
    Ok(WeightedGraph::from_edges(k * n, &theory_edges(k, n, 0)))
}

fn theory_edges(k: usize, n: usize, offset: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for p in 0..k {
        for i in 0..n - 1 {
            edges.push((offset + p * n + i, offset + p * n + i + 1));
        }
    }
    let terminal = |p: usize| offset + p * n + n - 1;
    match k {
        1 => {}
        2 => edges.push((terminal(0), terminal(1))),
        _ => {
            for p in 0..k {
                edges.push((terminal(p), terminal((p + 1) % k)));
            }
        }
    }
    edges
}

/// Disjoint union of `q` theory graphs; sub-graph `j` occupies nodes
/// `j*k*n .. (j+1)*k*n`.
pub fn build_multi_theory_graph(q: usize, k: usize, n: usize) -> Result<WeightedGraph, GraphError> {
    if q < 1 {
        return Err(GraphError::NoComponents);
    }
    build_theory_graph(k, n)?;
    let edges: Vec<_> = (0..q).flat_map(|j| theory_edges(k, n, j * k * n)).collect();
    Ok(WeightedGraph::from_edges(q * k * n, &edges))
}

/// Block-circulant factors of a theory graph Laplacian, `L = 2I - J`.
#[derive(Clone, Debug)]
pub struct CirculantBlocks {
    pub j: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    /// `H_j = B0 + 2 cos(2 pi j / K) B1` for `j = 0..K`.
    pub h: Vec<DMatrix<f64>>,
}

pub fn circulant_blocks(k: usize, n: usize) -> Result<CirculantBlocks, GraphError> {
    if k < 3 {
        return Err(GraphError::TooFewPaths { min: 3, got: k });
    }
    if n < 2 {
        return Err(GraphError::PathTooShort(n));
    }
    let mut b0 = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        b0[(i, i + 1)] = 1.0;
        b0[(i + 1, i)] = 1.0;
    }
    b0[(0, 0)] = 1.0;
    b0[(n - 1, n - 1)] = -1.0;
    let mut b1 = DMatrix::zeros(n, n);
    b1[(n - 1, n - 1)] = 1.0;

    let mut j = DMatrix::zeros(k * n, k * n);
    for p in 0..k {
        j.view_mut((p * n, p * n), (n, n)).copy_from(&b0);
        for q in [(p + 1) % k, (p + k - 1) % k] {
            j.view_mut((p * n, q * n), (n, n)).copy_from(&b1);
        }
    }
    let h = (0..k)
        .map(|m| {
            let c = 2.0 * (2.0 * std::f64::consts::PI * m as f64 / k as f64).cos();
            &b0 + &b1 * c
        })
        .collect();
    Ok(CirculantBlocks { j, b0, b1, h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_of_small_graphs() {
        let single = laplacian(&WeightedGraph::from_edges(1, &[]));
        assert_eq!(single.entries, DMatrix::from_element(1, 1, 0.0));
        let path = laplacian(&WeightedGraph::from_edges(3, &[(0, 1), (1, 2)]));
        let expect = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(path.entries, expect);
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let g = build_multi_theory_graph(2, 4, 6).unwrap();
        let l = laplacian(&g);
        for i in 0..l.len() {
            assert_eq!(l.entries.row(i).sum(), 0.0);
        }
    }

    #[test]
    fn components() {
        let g = WeightedGraph::from_edges(4, &[(0, 1), (2, 3)]);
        assert_eq!(connected_components(&g), vec![vec![0, 1], vec![2, 3]]);
        let edges: Vec<_> = (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))).collect();
        assert_eq!(connected_components(&WeightedGraph::from_edges(5, &edges)).len(), 1);
    }

    #[test]
    fn theory_graph_structure() {
        let g = build_theory_graph(3, 5).unwrap();
        assert_eq!(g.len(), 15);
        // 1-based nodes {5, 10, 15} form the cycle.
        assert!(g.has_edge(4, 9) && g.has_edge(9, 14) && g.has_edge(14, 4));
        for p in 0..3 {
            assert_eq!(g.degree(p * 5), 1);
            for i in 1..4 {
                assert_eq!(g.degree(p * 5 + i), 2);
            }
            assert_eq!(g.degree(p * 5 + 4), 3);
        }
        let g5 = build_theory_graph(5, 5).unwrap();
        for p in 0..5 {
            assert!(g5.has_edge(p * 5 + 4, ((p + 1) % 5) * 5 + 4));
        }
        let single = build_theory_graph(1, 3).unwrap();
        assert_eq!(single.edge_count(), 2);
        assert_eq!(build_theory_graph(3, 2).unwrap_err(), GraphError::PathTooShort(2));
    }

    #[test]
    fn multi_theory_graph() {
        let g = build_multi_theory_graph(2, 3, 5).unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!(connected_components(&g).len(), 2);
        let one = build_multi_theory_graph(1, 3, 5).unwrap();
        assert_eq!(
            laplacian(&one).entries,
            laplacian(&build_theory_graph(3, 5).unwrap()).entries
        );
    }

    #[test]
    fn traced_paths_match_numbering() {
        let g = build_theory_graph(4, 6).unwrap();
        let paths = trace_paths(&g);
        assert_eq!(paths.len(), 4);
        for (p, path) in paths.iter().enumerate() {
            assert_eq!(path, &(p * 6..(p + 1) * 6).collect::<Vec<_>>());
        }
        let plain = build_theory_graph(1, 4).unwrap();
        assert_eq!(trace_paths(&plain), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn laplacian_is_two_minus_j() {
        for k in 3..=6 {
            for n in 2..=6 {
                let blocks = circulant_blocks(k, n).unwrap();
                let g = if n >= 3 {
                    build_theory_graph(k, n).unwrap()
                } else {
                    WeightedGraph::from_edges(k * n, &theory_edges(k, n, 0))
                };
                let l = laplacian(&g).entries;
                let two = DMatrix::<f64>::identity(k * n, k * n) * 2.0;
                assert_eq!(l, two - &blocks.j, "K={k} N={n}");
            }
        }
    }

    #[test]
    fn h_zero_uses_full_coupling() {
        let b = circulant_blocks(4, 5).unwrap();
        assert_eq!(b.h[0], &b.b0 + &b.b1 * 2.0);
    }
}
