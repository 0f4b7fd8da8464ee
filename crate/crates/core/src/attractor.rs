//! Attractor search in a cluster's embedding: one line per trajectory, the
//! attractor at the mean of the pairwise line intersections.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsgraph::{trace_paths, WeightedGraph};
use crate::dynamics::TrajectorySet;
use crate::eigen::symmetric_eigen;
use crate::error::AttractorError;
use crate::spectral::SubdynamicsPartition;

/// Pairs with `|cos|` above this are treated as parallel.
pub const PARALLEL_TOL: f64 = 1e-10;
/// Spread below which a trajectory's embedding points count as coincident.
pub const COINCIDENT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingLine {
    pub anchor: Vec<f64>,
    /// Unit norm.
    pub direction: Vec<f64>,
    /// Node indices, in time order.
    pub member_points: Vec<usize>,
}

impl EmbeddingLine {
    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Distance from `p` to the line.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        let a = DVector::from_column_slice(&self.anchor);
        let m = DVector::from_column_slice(&self.direction);
        let d = DVector::from_column_slice(p) - a;
        let along = d.dot(&m);
        (d - m * along).norm()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractorEstimate {
    pub embedding_point: Vec<f64>,
    /// Empty when no state-space data was supplied.
    pub original_point: Vec<f64>,
    pub cluster: usize,
    pub intersection_spread: f64,
    /// Number of line pairs that contributed.
    pub pairs_used: usize,
}

/// How each line's direction is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum DirectionMode {
    /// Principal axis of all the trajectory's embedding points.
    #[default]
    PrincipalAxis,
    /// Difference between a random member and its successor along the
    /// trajectory.
    RandomNeighbor { seed: u64 },
}

/// Lines of a cluster plus the trajectories that had to be dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSet {
    pub lines: Vec<EmbeddingLine>,
    pub warnings: Vec<String>,
}

/// Trajectory membership of the cluster's nodes, each list in time order.
fn cluster_paths(partition: &SubdynamicsPartition, cluster: usize, graph: &WeightedGraph) -> Vec<Vec<usize>> {
    let in_cluster = |i: usize| partition.labels[i] == cluster;
    match graph.path_index() {
        Some(index) => {
            let mut by_traj: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
            for (node, &(traj, pos)) in index.iter().enumerate() {
                if !in_cluster(node) {
                    continue;
                }
                match by_traj.iter_mut().find(|(t, _)| *t == traj) {
                    Some((_, list)) => list.push((pos, node)),
                    None => by_traj.push((traj, vec![(pos, node)])),
                }
            }
            by_traj.sort_by_key(|(t, _)| *t);
            by_traj
                .into_iter()
                .map(|(_, mut list)| {
                    list.sort_unstable();
                    list.into_iter().map(|(_, n)| n).collect()
                })
                .collect()
        }
        None => trace_paths(graph)
            .into_iter()
            .map(|p| p.into_iter().filter(|&i| in_cluster(i)).collect::<Vec<_>>())
            .filter(|p| !p.is_empty())
            .collect(),
    }
}

/// One embedding line per trajectory of `cluster`.
pub fn extract_lines(
    partition: &SubdynamicsPartition,
    cluster: usize,
    graph: &WeightedGraph,
    mode: DirectionMode,
) -> Result<LineSet, AttractorError> {
    if cluster >= partition.q {
        return Err(AttractorError::TooFewLines(0));
    }
    let dim = partition.dim(cluster);
    if dim < 2 {
        return Err(AttractorError::LowDimension(cluster, dim));
    }
    let emb = &partition.embeddings[cluster];
    let mut rng = match mode {
        DirectionMode::RandomNeighbor { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        DirectionMode::PrincipalAxis => None,
    };
    let mut out = LineSet {
        lines: Vec::new(),
        warnings: Vec::new(),
    };
    for (t, path) in cluster_paths(partition, cluster, graph).into_iter().enumerate() {
        let pts: Vec<DVector<f64>> = path.iter().map(|&i| emb.row(i).transpose()).collect();
        let centroid = pts.iter().fold(DVector::zeros(dim), |acc, p| acc + p) / pts.len() as f64;
        let extent = pts.iter().map(|p| (p - &centroid).norm()).fold(0.0, f64::max);
        if pts.len() < 2 || extent <= COINCIDENT_TOL {
            out.warnings.push(format!(
                "trajectory {t} of cluster {cluster} collapses to a point in the embedding; skipped"
            ));
            continue;
        }
        let mut direction = match rng.as_mut() {
            None => principal_axis(&pts, &centroid),
            Some(rng) => {
                let a = rng.random_range(0..pts.len() - 1);
                let d = &pts[a + 1] - &pts[a];
                if d.norm() <= COINCIDENT_TOL {
                    principal_axis(&pts, &centroid)
                } else {
                    d.normalize()
                }
            }
        };
        if direction.dot(&(&pts[pts.len() - 1] - &pts[0])) < 0.0 {
            direction.neg_mut();
        }
        out.lines.push(EmbeddingLine {
            anchor: centroid.as_slice().to_vec(),
            direction: direction.as_slice().to_vec(),
            member_points: path,
        });
    }
    Ok(out)
}

fn principal_axis(pts: &[DVector<f64>], centroid: &DVector<f64>) -> DVector<f64> {
    let dim = centroid.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for p in pts {
        let d = p - centroid;
        cov += &d * d.transpose();
    }
    let (_, vecs) = symmetric_eigen(&cov).expect("covariance is symmetric");
    vecs.column(dim - 1).into_owned()
}

/// Midpoint of the closest points of two lines (their crossing when they
/// meet).
pub fn intersect_pair(r: &EmbeddingLine, s: &EmbeddingLine) -> Result<Vec<f64>, AttractorError> {
    if r.dim() != s.dim() {
        return Err(AttractorError::DimensionMismatch(r.dim(), s.dim()));
    }
    let ar = DVector::from_column_slice(&r.anchor);
    let as_ = DVector::from_column_slice(&s.anchor);
    let mr = DVector::from_column_slice(&r.direction);
    let ms = DVector::from_column_slice(&s.direction);
    let c = mr.dot(&ms);
    if c.abs() > 1.0 - PARALLEL_TOL {
        return Err(AttractorError::Parallel(c.abs()));
    }
    let b = &as_ - &ar;
    let rb = mr.dot(&b);
    let sb = ms.dot(&b);
    let det = 1.0 - c * c;
    let alpha = (rb - c * sb) / det;
    let beta = (c * rb - sb) / det;
    let pr = ar + mr * alpha;
    let ps = as_ + ms * beta;
    Ok(((pr + ps) * 0.5).as_slice().to_vec())
}

/// Attractor of one cluster from its embedding lines, mapped back to state
/// space when `data` is given. The embedding point is the mean of the
/// pairwise crossings weighted by `1 - cos^2` of each pair's angle.
pub fn find_attractor(
    lines: &[EmbeddingLine],
    partition: &SubdynamicsPartition,
    cluster: usize,
    data: Option<&TrajectorySet>,
) -> Result<AttractorEstimate, AttractorError> {
    if lines.len() < 2 {
        return Err(AttractorError::TooFewLines(lines.len()));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut last_cos = 1.0;
    for a in 0..lines.len() {
        for b in a + 1..lines.len() {
            match intersect_pair(&lines[a], &lines[b]) {
                Ok(p) => {
                    let c: f64 = lines[a].direction.iter().zip(&lines[b].direction).map(|(x, y)| x * y).sum();
                    points.push(DVector::from_vec(p));
                    weights.push(1.0 - c * c);
                }
                Err(AttractorError::Parallel(c)) => last_cos = c,
                Err(e) => return Err(e),
            }
        }
    }
    if points.is_empty() {
        return Err(AttractorError::Parallel(last_cos));
    }
    let dim = lines[0].dim();
    // Crossings weighted by sin^2 of the angle between their lines.
    let total: f64 = weights.iter().sum();
    let u_star = points
        .iter()
        .zip(&weights)
        .fold(DVector::zeros(dim), |acc, (p, w)| acc + p * *w)
        / total;
    let mut spread = 0.0f64;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            spread = spread.max((&points[a] - &points[b]).norm());
        }
    }
    let original_point = match data {
        Some(d) => back_map(&u_star, partition, cluster, d, lines.len())?,
        None => Vec::new(),
    };
    Ok(AttractorEstimate {
        embedding_point: u_star.as_slice().to_vec(),
        original_point,
        cluster,
        intersection_spread: spread,
        pairs_used: points.len(),
    })
}

/// Inverse-distance weighted mean of the state positions of the `k` cluster
/// points nearest to `u` in the embedding.
pub fn back_map(
    u: &DVector<f64>,
    partition: &SubdynamicsPartition,
    cluster: usize,
    data: &TrajectorySet,
    k: usize,
) -> Result<Vec<f64>, AttractorError> {
    let positions: Vec<&[f64]> = data.samples().map(|s| s.position.as_slice()).collect();
    if positions.len() != partition.labels.len() {
        return Err(AttractorError::DimensionMismatch(positions.len(), partition.labels.len()));
    }
    let emb = &partition.embeddings[cluster];
    if emb.ncols() != u.len() {
        return Err(AttractorError::DimensionMismatch(emb.ncols(), u.len()));
    }
    let mut ranked: Vec<(f64, usize)> = partition
        .members(cluster)
        .into_iter()
        .map(|i| ((emb.row(i).transpose() - u).norm(), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(k.max(1));
    if ranked.is_empty() {
        return Err(AttractorError::TooFewLines(0));
    }
    let d = data.dim();
    let mut acc = vec![0.0; d];
    let mut total = 0.0;
    for &(dist, i) in &ranked {
        let w = 1.0 / (dist + 1e-9);
        total += w;
        for (a, x) in acc.iter_mut().zip(positions[i]) {
            *a += w * x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

/// Attractor estimate for a cluster whose embedding is too thin for line
/// intersections: the mean of the trajectories' last samples.
pub fn terminal_fallback(
    partition: &SubdynamicsPartition,
    cluster: usize,
    graph: &WeightedGraph,
    data: &TrajectorySet,
) -> Result<AttractorEstimate, AttractorError> {
    let positions: Vec<&[f64]> = data.samples().map(|s| s.position.as_slice()).collect();
    let ends: Vec<usize> = cluster_paths(partition, cluster, graph)
        .iter()
        .filter_map(|p| p.last().copied())
        .collect();
    if ends.is_empty() {
        return Err(AttractorError::TooFewLines(0));
    }
    let d = data.dim();
    let mut x = vec![0.0; d];
    for &i in &ends {
        for (a, v) in x.iter_mut().zip(positions[i]) {
            *a += v / ends.len() as f64;
        }
    }
    let dim = partition.dim(cluster);
    let embedding_point = if dim == 0 {
        Vec::new()
    } else {
        let emb = &partition.embeddings[cluster];
        (0..dim)
            .map(|c| ends.iter().map(|&i| emb[(i, c)]).sum::<f64>() / ends.len() as f64)
            .collect()
    };
    Ok(AttractorEstimate {
        embedding_point,
        original_point: x,
        cluster,
        intersection_spread: 0.0,
        pairs_used: 0,
    })
}

/// `sqrt(sum_i ((truth_i - est_i) / std_i)^2)` with per-dimension position
/// standard deviations of the whole dataset.
pub fn attractor_error(
    estimate: &AttractorEstimate,
    truth: &[f64],
    data: &TrajectorySet,
) -> Result<f64, AttractorError> {
    normalized_error(&estimate.original_point, truth, &data.position_std())
}

/// Same as [`attractor_error`] with explicit standard deviations.
pub fn normalized_error(estimate: &[f64], truth: &[f64], std: &[f64]) -> Result<f64, AttractorError> {
    if estimate.len() != truth.len() || truth.len() != std.len() {
        return Err(AttractorError::DimensionMismatch(estimate.len(), truth.len()));
    }
    if let Some(i) = std.iter().position(|&s| !(s > 0.0)) {
        return Err(AttractorError::ZeroSpread(i));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .zip(std)
        .map(|((e, t), s)| ((t - e) / s).powi(2))
        .sum::<f64>()
        .sqrt())
}
