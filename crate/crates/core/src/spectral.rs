//! Laplacian spectrum: sub-dynamics count, zero-eigenvector labeling,
//! selection of the relevant components and per-cluster embeddings.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dsgraph::LaplacianMatrix;
use crate::eigen::symmetric_eigen;
use crate::error::SpectralError;

/// Relative tolerance under which two eigenvalues count as equal.
pub const MULTIPLICITY_TOL: f64 = 1e-6;
/// Relative tolerance under which an eigenvalue counts as zero.
pub const ZERO_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `tau_zero = 1e-8 * max(lambda_max, 1)`.
    pub fn zero_threshold(&self) -> f64 {
        ZERO_TOL * self.lambda_max().max(1.0)
    }

    /// Absolute tolerance for eigenvalue equality.
    pub fn multiplicity_threshold(&self) -> f64 {
        MULTIPLICITY_TOL * self.lambda_max().max(1.0)
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// Max over columns of `|L u - lambda u|`.
    pub fn max_residual(&self, l: &LaplacianMatrix) -> f64 {
        (0..self.len())
            .map(|i| {
                let u = self.eigenvectors.column(i);
                (&l.entries * u - u * self.eigenvalues[i]).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Full decomposition of the Laplacian.
pub fn eigendecompose(l: &LaplacianMatrix) -> Result<SpectralDecomposition, SpectralError> {
    let (eigenvalues, eigenvectors) = symmetric_eigen(&l.entries)?;
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Same spectrum as [`eigendecompose`], computed block by block over a
/// partition of the nodes into unions of connected components.
///
/// Every eigenvector is supported on a single block, so each zero
/// eigenvector is already the (normalized) indicator of its component.
/// Columns are ordered by eigenvalue, ties broken by block order.
pub fn eigendecompose_by_components(
    l: &LaplacianMatrix,
    components: &[Vec<usize>],
) -> Result<SpectralDecomposition, SpectralError> {
    let m = l.len();
    let covered: usize = components.iter().map(Vec::len).sum();
    if covered != m {
        return Err(SpectralError::Inconsistent(format!(
            "components cover {covered} of {m} nodes"
        )));
    }
    let mut entries: Vec<(f64, usize, DVector<f64>)> = Vec::with_capacity(m);
    for (b, nodes) in components.iter().enumerate() {
        let (vals, vecs) = symmetric_eigen(&l.restricted(nodes).entries)?;
        for (c, lambda) in vals.into_iter().enumerate() {
            let mut full = DVector::zeros(m);
            for (r, &node) in nodes.iter().enumerate() {
                full[node] = vecs[(r, c)];
            }
            entries.push((lambda, b, full));
        }
    }
    // Within a block eigenvalues are already ascending, so a stable sort on
    // the value keeps block-local order.
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let eigenvalues = entries.iter().map(|e| e.0).collect();
    let cols: Vec<DVector<f64>> = entries.into_iter().map(|e| e.2).collect();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors: DMatrix::from_columns(&cols),
    })
}

/// Multiplicity of the zero eigenvalue.
pub fn count_subdynamics(dec: &SpectralDecomposition) -> usize {
    let tau = dec.zero_threshold();
    dec.eigenvalues.iter().filter(|&&l| l <= tau).count().max(1)
}

/// Rotates the `q`-dimensional zero eigenspace so that each basis vector is
/// supported on one group of points, and labels every point by the vector it
/// loads on most. Labels are numbered by smallest member index.
///
/// Within the zero eigenspace, the rows of points in the same component are
/// parallel and rows of different components are orthogonal, so rows are
/// grouped by direction and the group directions form the rotation.
pub fn label_points(dec: &SpectralDecomposition, q: usize) -> Result<Vec<usize>, SpectralError> {
    let m = dec.len();
    if q == 0 || q > m {
        return Err(SpectralError::Inconsistent(format!("q = {q} for {m} points")));
    }
    if q == 1 {
        return Ok(vec![0; m]);
    }
    let zero_block = dec.eigenvectors.columns(0, q).into_owned();
    let mut reps: Vec<DVector<f64>> = Vec::with_capacity(q);
    for i in 0..m {
        let row = zero_block.row(i).transpose();
        let nrm = row.norm();
        if nrm < 1e-12 {
            return Err(SpectralError::Unsupported(i));
        }
        let dir = row / nrm;
        let best = reps
            .iter()
            .map(|r| r.dot(&dir))
            .fold(f64::NEG_INFINITY, f64::max);
        if best < 0.5 && reps.len() < q {
            reps.push(dir);
        }
    }
    let rotation = DMatrix::from_columns(&reps);
    let rotated = &zero_block * rotation;
    let labels = (0..m)
        .map(|i| {
            let row = rotated.row(i);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c].abs() > row[best].abs() {
                    best = c;
                }
            }
            best
        })
        .collect::<Vec<_>>();
    Ok(renumber(&labels))
}

/// Relabels so that label ids appear in order of first occurrence.
pub fn renumber(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(from, _)| *from == l) {
            Some(&(_, to)) => to,
            None => {
                let to = map.len();
                map.push((l, to));
                to
            }
        })
        .collect()
}

/// Indices of the non-zero eigenvalues below the largest relative gap of the
/// low spectrum.
///
/// The gap is searched among the first `q * k_max` non-zero eigenvalues
/// (plus one, so the jump after the last candidate is visible), where
/// `k_max` bounds the number of trajectories per sub-dynamics. Flat spectra
/// fall back to the `2q` smallest non-zero eigenvalues.
pub fn relevant_components(dec: &SpectralDecomposition, q: usize, k_max: usize) -> Vec<usize> {
    let tau = dec.zero_threshold();
    let first = dec
        .eigenvalues
        .iter()
        .position(|&l| l > tau)
        .unwrap_or(dec.len());
    if first >= dec.len() {
        return Vec::new();
    }
    let fallback = || (first..(first + 2 * q).min(dec.len())).collect::<Vec<_>>();
    let end = (first + q * k_max.max(1) + 1).min(dec.len());
    let window = &dec.eigenvalues[first..end];
    if window.len() < 2 {
        return fallback();
    }
    let (mut cut, mut best) = (0usize, 1.0f64);
    for (i, w) in window.windows(2).enumerate() {
        let ratio = w[1] / w[0];
        if ratio > best * (1.0 + 1e-9) {
            best = ratio;
            cut = i;
        }
    }
    if best < 1.0 + 1e-6 {
        return fallback();
    }
    (first..=first + cut).collect()
}

/// Per-cluster view of the relevant eigenvectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdynamicsPartition {
    pub labels: Vec<usize>,
    pub q: usize,
    /// Eigenvector indices assigned to each cluster, ascending eigenvalue.
    pub assigned_eigvecs: Vec<Vec<usize>>,
    /// Eigenvalue of each embedding axis, per cluster.
    pub axis_eigenvalues: Vec<Vec<f64>>,
    /// Per cluster, an `M x dim` matrix of embedding coordinates (rows of
    /// points outside the cluster are numerically zero).
    #[serde(skip)]
    pub embeddings: Vec<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

impl SubdynamicsPartition {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == cluster)
            .collect()
    }

    pub fn dim(&self, cluster: usize) -> usize {
        self.embeddings[cluster].ncols()
    }

    /// Embedding coordinates of point `i` in its cluster's space.
    pub fn coords(&self, cluster: usize, i: usize) -> DVector<f64> {
        self.embeddings[cluster].row(i).transpose()
    }
}

fn cluster_mass(v: &DVector<f64>, labels: &[usize], q: usize) -> Vec<f64> {
    let mut mass = vec![0.0; q];
    for (i, &l) in labels.iter().enumerate() {
        mass[l] += v[i] * v[i];
    }
    mass
}

/// Splits a set of eigenvectors sharing one eigenvalue into vectors
/// supported on single clusters, when the eigenspace allows it.
fn localize_group(
    vectors: &[DVector<f64>],
    labels: &[usize],
    q: usize,
) -> Option<Vec<(usize, DVector<f64>)>> {
    let basis = DMatrix::from_columns(vectors);
    let mut out = Vec::new();
    for cluster in 0..q {
        let mut restricted = basis.clone();
        for (i, &l) in labels.iter().enumerate() {
            if l != cluster {
                restricted.row_mut(i).fill(0.0);
            }
        }
        let gram = restricted.transpose() * &restricted;
        let (vals, vecs) = symmetric_eigen(&gram).ok()?;
        for (c, &val) in vals.iter().enumerate() {
            if val > 0.5 {
                let w = vecs.column(c);
                let mut v = &basis * w;
                v /= v.norm();
                out.push((cluster, v));
            }
        }
    }
    (out.len() == vectors.len()).then_some(out)
}

/// Assigns each relevant eigenvector to the cluster carrying most of its
/// squared mass and gathers per-cluster embeddings.
///
/// Eigenvectors of equal eigenvalue whose mass is split across clusters
/// (a degenerate eigenspace shared by isomorphic components) are first
/// rotated into cluster-supported vectors.
pub fn assign_and_embed(
    dec: &SpectralDecomposition,
    labels: &[usize],
    relevant: &[usize],
) -> Result<SubdynamicsPartition, SpectralError> {
    let m = dec.len();
    if labels.len() != m {
        return Err(SpectralError::Inconsistent(format!(
            "{} labels for {m} points",
            labels.len()
        )));
    }
    if let Some(&bad) = relevant.iter().find(|&&i| i >= m) {
        return Err(SpectralError::Inconsistent(format!("eigenvector index {bad} out of range")));
    }
    let q = labels.iter().copied().max().map_or(0, |x| x + 1);
    let tol = dec.multiplicity_threshold();

    let mut sorted: Vec<usize> = relevant.to_vec();
    sorted.sort_by(|&a, &b| dec.eigenvalues[a].total_cmp(&dec.eigenvalues[b]).then(a.cmp(&b)));
    sorted.dedup();

    let mut axes: Vec<Vec<(usize, f64, DVector<f64>)>> = vec![Vec::new(); q];
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len()
            && dec.eigenvalues[sorted[end]] - dec.eigenvalues[sorted[start]] <= tol
        {
            end += 1;
        }
        let group = &sorted[start..end];
        let vectors: Vec<DVector<f64>> = group.iter().map(|&i| dec.vector(i)).collect();
        let split = vectors.iter().any(|v| {
            let mass = cluster_mass(v, labels, q);
            mass.iter().cloned().fold(0.0, f64::max) < 1.0 - 1e-8
        });
        let localized = if split && group.len() > 1 {
            localize_group(&vectors, labels, q)
        } else {
            None
        };
        match localized {
            Some(parts) => {
                for ((cluster, v), &idx) in parts.into_iter().zip(group) {
                    axes[cluster].push((idx, dec.eigenvalues[idx], v));
                }
            }
            None => {
                for (v, &idx) in vectors.into_iter().zip(group) {
                    let mass = cluster_mass(&v, labels, q);
                    let mut best = 0;
                    for c in 1..q {
                        if mass[c] > mass[best] {
                            best = c;
                        }
                    }
                    axes[best].push((idx, dec.eigenvalues[idx], v));
                }
            }
        }
        start = end;
    }

    let mut warnings = Vec::new();
    let mut assigned_eigvecs = Vec::with_capacity(q);
    let mut axis_eigenvalues = Vec::with_capacity(q);
    let mut embeddings = Vec::with_capacity(q);
    for (cluster, list) in axes.into_iter().enumerate() {
        if list.len() < 2 {
            warnings.push(format!(
                "cluster {cluster} has {} assigned eigenvector(s); embedding is degenerate",
                list.len()
            ));
        }
        assigned_eigvecs.push(list.iter().map(|a| a.0).collect());
        axis_eigenvalues.push(list.iter().map(|a| a.1).collect());
        let cols: Vec<DVector<f64>> = list.into_iter().map(|a| a.2).collect();
        embeddings.push(if cols.is_empty() {
            DMatrix::zeros(m, 0)
        } else {
            DMatrix::from_columns(&cols)
        });
    }
    Ok(SubdynamicsPartition {
        labels: labels.to_vec(),
        q,
        assigned_eigvecs,
        axis_eigenvalues,
        embeddings,
        warnings,
    })
}
