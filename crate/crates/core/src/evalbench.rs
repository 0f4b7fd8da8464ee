//! Baseline clusterers, the low-speed attractor heuristic and evaluation
//! metrics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, BenchmarkSystem, Trajectory, TrajectorySet};
use crate::eigen::symmetric_eigen;
use crate::error::EvalError;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    /// Best-permutation accuracy; set by [`ClusteringResult::scored`].
    pub accuracy: Option<f64>,
    pub method: String,
    pub iterations: usize,
}

impl ClusteringResult {
    fn new(labels: Vec<usize>, method: &str, iterations: usize) -> Self {
        Self {
            labels,
            accuracy: None,
            method: method.to_string(),
            iterations,
        }
    }

    pub fn scored(mut self, truth: &[usize]) -> Result<Self, EvalError> {
        self.accuracy = Some(best_permutation_accuracy(&self.labels, truth)?);
        Ok(self)
    }
}

/// Fraction of points whose label matches the truth under the best
/// one-to-one relabeling of the predicted clusters.
pub fn best_permutation_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::InvalidArgument(format!(
            "{} predictions for {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let k = kp.max(kt);
    if k > 9 {
        return Err(EvalError::InvalidArgument(format!("{k} clusters is too many to permute")));
    }
    let mut table = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        let hits: usize = (0..k).map(|i| table[i][p[i]]).sum();
        best = best.max(hits);
    });
    Ok(best as f64 / pred.len() as f64)
}

fn permute(p: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

/// Concatenated `(position, velocity)` rows.
pub fn features(data: &TrajectorySet) -> Vec<Vec<f64>> {
    data.samples()
        .map(|s| s.position.iter().chain(&s.velocity).copied().collect())
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Kernel k-means with an RBF kernel of bandwidth `sigma`. Also returns the
/// objective after every assignment step.
pub fn kernel_kmeans_traced(
    data: &TrajectorySet,
    q: usize,
    sigma: f64,
    seed: u64,
) -> Result<(ClusteringResult, Vec<f64>), EvalError> {
    if q == 0 {
        return Err(EvalError::InvalidArgument("q must be at least 1".into()));
    }
    if !(sigma > 0.0) {
        return Err(EvalError::InvalidArgument("sigma must be positive".into()));
    }
    let f = features(data);
    let m = f.len();
    if m < q {
        return Err(EvalError::InvalidArgument(format!("{m} points for {q} clusters")));
    }
    let gram = DMatrix::from_fn(m, m, |i, j| (-sq_dist(&f[i], &f[j]) / (2.0 * sigma * sigma)).exp());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds: Vec<usize> = Vec::with_capacity(q);
    while seeds.len() < q {
        let c = rng.random_range(0..m);
        if !seeds.contains(&c) {
            seeds.push(c);
        }
    }
    // Initial assignment to the nearest seed point in feature space.
    let mut labels: Vec<usize> = (0..m)
        .map(|i| {
            let d = |c: usize| gram[(i, i)] - 2.0 * gram[(i, seeds[c])] + gram[(seeds[c], seeds[c])];
            (0..q).min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap()
        })
        .collect();
    let mut objective = Vec::new();
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let dist = kernel_distances(&gram, &labels, q);
        let mut next: Vec<usize> = (0..m)
            .map(|i| (0..q).min_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)])).unwrap())
            .collect();
        // Ties keep the current label.
        for i in 0..m {
            if dist[(i, labels[i])] <= dist[(i, next[i])] {
                next[i] = labels[i];
            }
        }
        reseed_empty(&mut next, q, |i| dist[(i, labels[i])]);
        objective.push(kernel_objective(&gram, &next, q));
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok((ClusteringResult::new(labels, "kernel_kmeans", iterations), objective))
}

pub fn kernel_kmeans(data: &TrajectorySet, q: usize, sigma: f64, seed: u64) -> Result<ClusteringResult, EvalError> {
    kernel_kmeans_traced(data, q, sigma, seed).map(|r| r.0)
}

/// Squared feature-space distance from every point to every cluster mean.
fn kernel_distances(gram: &DMatrix<f64>, labels: &[usize], q: usize) -> DMatrix<f64> {
    let m = labels.len();
    let mut size = vec![0usize; q];
    for &l in labels {
        size[l] += 1;
    }
    // s[i][c] = sum_{j in c} K_ij
    let mut s = DMatrix::<f64>::zeros(m, q);
    for i in 0..m {
        for j in 0..m {
            s[(i, labels[j])] += gram[(i, j)];
        }
    }
    let mut within = vec![0.0; q];
    for j in 0..m {
        within[labels[j]] += s[(j, labels[j])];
    }
    DMatrix::from_fn(m, q, |i, c| {
        if size[c] == 0 {
            f64::INFINITY
        } else {
            let n = size[c] as f64;
            gram[(i, i)] - 2.0 * s[(i, c)] / n + within[c] / (n * n)
        }
    })
}

fn kernel_objective(gram: &DMatrix<f64>, labels: &[usize], q: usize) -> f64 {
    let d = kernel_distances(gram, labels, q);
    (0..labels.len()).map(|i| d[(i, labels[i])]).sum()
}

/// Gives each empty cluster the point farthest from its current cluster.
fn reseed_empty(labels: &mut [usize], q: usize, cost: impl Fn(usize) -> f64) {
    for c in 0..q {
        if labels.iter().any(|&l| l == c) {
            continue;
        }
        let mut counts = vec![0usize; q];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| cost(a).total_cmp(&cost(b)));
        if let Some(i) = far {
            labels[i] = c;
        }
    }
}

/// k-means++ seed indices.
fn kmeanspp(points: &[Vec<f64>], q: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = points.len();
    let mut centers = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[centers[0]])).collect();
    while centers.len() < q {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = m - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        centers.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    centers
}

/// Lloyd's k-means from k-means++ seeds; returns labels and inertia.
pub fn lloyd(points: &[Vec<f64>], q: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64, usize) {
    let m = points.len();
    let dim = points[0].len();
    let mut centers: Vec<Vec<f64>> = kmeanspp(points, q, rng).into_iter().map(|i| points[i].clone()).collect();
    let mut labels = vec![usize::MAX; m];
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        let mut next: Vec<usize> = points
            .iter()
            .map(|p| {
                (0..q)
                    .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                    .unwrap()
            })
            .collect();
        let own: Vec<f64> = (0..m).map(|i| sq_dist(&points[i], &centers[next[i]])).collect();
        reseed_empty(&mut next, q, |i| own[i]);
        if next == labels {
            break;
        }
        labels = next;
        let mut sums = vec![vec![0.0; dim]; q];
        let mut counts = vec![0usize; q];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..q {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = (0..m).map(|i| sq_dist(&points[i], &centers[labels[i]])).sum();
    (labels, inertia, iterations)
}

/// Full-covariance Gaussian mixture fitted by EM. Also returns the
/// log-likelihood after every iteration.
pub fn gmm_em_traced(data: &TrajectorySet, q: usize, seed: u64) -> Result<(ClusteringResult, Vec<f64>), EvalError> {
    let f = features(data);
    let m = f.len();
    if q == 0 {
        return Err(EvalError::InvalidArgument("q must be at least 1".into()));
    }
    let dim = f.first().map_or(0, Vec::len);
    if m <= q * dim {
        return Err(EvalError::InvalidArgument(format!("{m} points too few for {q} components")));
    }
    let x: Vec<DVector<f64>> = f.iter().map(|r| DVector::from_column_slice(r)).collect();
    let global_mean = x.iter().fold(DVector::zeros(dim), |a, v| a + v) / m as f64;
    let mut global_cov = DMatrix::zeros(dim, dim);
    for v in &x {
        let d = v - &global_mean;
        global_cov += &d * d.transpose();
    }
    global_cov /= m as f64;
    let reg = |c: &DMatrix<f64>| {
        let eps = 1e-6 * c.trace().max(1e-300) / dim as f64;
        c + DMatrix::identity(dim, dim) * eps
    };
    let global_cov = reg(&global_cov);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<DVector<f64>> = kmeanspp(&f, q, &mut rng).into_iter().map(|i| x[i].clone()).collect();
    let mut covs = vec![global_cov.clone(); q];
    let mut weights = vec![1.0 / q as f64; q];
    let mut resp = DMatrix::zeros(m, q);
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..MAX_ITERATIONS {
        iterations += 1;
        // E step.
        let mut logp = DMatrix::zeros(m, q);
        for c in 0..q {
            let chol = match covs[c].clone().cholesky() {
                Some(ch) => ch,
                None => {
                    means[c] = x[rng.random_range(0..m)].clone();
                    covs[c] = global_cov.clone();
                    covs[c].clone().cholesky().expect("regularized covariance")
                }
            };
            let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let norm = -0.5 * (dim as f64 * std::f64::consts::TAU.ln() + logdet) + weights[c].max(1e-300).ln();
            for i in 0..m {
                let d = &x[i] - &means[c];
                let sol = chol.solve(&d);
                logp[(i, c)] = norm - 0.5 * d.dot(&sol);
            }
        }
        let mut ll = 0.0;
        for i in 0..m {
            let mx = logp.row(i).max();
            let lse = mx + logp.row(i).iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            ll += lse;
            for c in 0..q {
                resp[(i, c)] = (logp[(i, c)] - lse).exp();
            }
        }
        let converged = history
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() <= 1e-10 * ll.abs().max(1.0));
        history.push(ll);
        if converged {
            break;
        }
        // M step.
        for c in 0..q {
            let nk: f64 = resp.column(c).sum();
            if nk < 1e-8 {
                means[c] = x[rng.random_range(0..m)].clone();
                covs[c] = global_cov.clone();
                weights[c] = 1.0 / m as f64;
                continue;
            }
            let mean = (0..m).fold(DVector::zeros(dim), |a, i| a + &x[i] * resp[(i, c)]) / nk;
            let mut cov = DMatrix::zeros(dim, dim);
            for i in 0..m {
                let d = &x[i] - &mean;
                cov += (&d * d.transpose()) * resp[(i, c)];
            }
            means[c] = mean;
            covs[c] = reg(&(cov / nk));
            weights[c] = nk / m as f64;
        }
    }
    let labels = (0..m)
        .map(|i| (0..q).max_by(|&a, &b| resp[(i, a)].total_cmp(&resp[(i, b)])).unwrap())
        .collect();
    Ok((ClusteringResult::new(labels, "gmm", iterations), history))
}

pub fn gmm_em(data: &TrajectorySet, q: usize, seed: u64) -> Result<ClusteringResult, EvalError> {
    gmm_em_traced(data, q, seed).map(|r| r.0)
}

/// Normalized spectral clustering on a mutual k-nearest-neighbor graph.
pub fn spectral_baseline(data: &TrajectorySet, q: usize, k_neighbors: usize, seed: u64) -> Result<ClusteringResult, EvalError> {
    if k_neighbors < 2 {
        return Err(EvalError::InvalidArgument("k_neighbors must be at least 2".into()));
    }
    if q == 0 {
        return Err(EvalError::InvalidArgument("q must be at least 1".into()));
    }
    let f = features(data);
    let m = f.len();
    if m <= k_neighbors || m < q {
        return Err(EvalError::InvalidArgument(format!("{m} points too few")));
    }
    let knn: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..m).filter(|&j| j != i).map(|j| (sq_dist(&f[i], &f[j]), j)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut nn: Vec<usize> = d[..k_neighbors].iter().map(|x| x.1).collect();
            nn.sort_unstable();
            nn
        })
        .collect();
    let mut adj = DMatrix::zeros(m, m);
    for i in 0..m {
        for &j in &knn[i] {
            if knn[j].binary_search(&i).is_ok() {
                adj[(i, j)] = 1.0;
            }
        }
    }
    let deg: Vec<f64> = (0..m).map(|i| adj.row(i).sum()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let lsym = DMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * adj[(i, j)] * inv_sqrt[j]
    });
    let (_, vecs) = symmetric_eigen(&lsym).map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let r: Vec<f64> = (0..q).map(|c| vecs[(i, c)]).collect();
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                r.iter().map(|v| v / n).collect()
            } else {
                r
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64, usize)> = None;
    for _ in 0..10 {
        let run = lloyd(&rows, q, &mut rng);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (labels, _, iterations) = best.expect("at least one restart");
    Ok(ClusteringResult::new(labels, "spectral", iterations))
}

/// Centroids of low-speed positions (`speed < fraction * mean speed`),
/// merged by single linkage within `radius`.
pub fn zero_velocity_candidates(data: &TrajectorySet, fraction: f64, radius: f64) -> Result<Vec<Vec<f64>>, EvalError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::InvalidArgument("fraction must lie in (0, 1)".into()));
    }
    let m = data.total_samples() as f64;
    let mean_speed = data.samples().map(|s| s.speed()).sum::<f64>() / m;
    let slow: Vec<&[f64]> = data
        .samples()
        .filter(|s| s.speed() < fraction * mean_speed)
        .map(|s| s.position.as_slice())
        .collect();
    let n = slow.len();
    let mut group: Vec<usize> = (0..n).collect();
    fn root(g: &mut [usize], mut i: usize) -> usize {
        while g[i] != i {
            g[i] = g[g[i]];
            i = g[i];
        }
        i
    }
    let r2 = radius * radius;
    for i in 0..n {
        for j in i + 1..n {
            if sq_dist(slow[i], slow[j]) <= r2 {
                let (a, b) = (root(&mut group, i), root(&mut group, j));
                if a != b {
                    group[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut members: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let r = root(&mut group, i);
        match members.iter_mut().find(|(k, _)| *k == r) {
            Some((_, v)) => v.push(i),
            None => members.push((r, vec![i])),
        }
    }
    Ok(members
        .into_iter()
        .map(|(_, idx)| {
            let d = slow[idx[0]].len();
            (0..d).map(|k| idx.iter().map(|&i| slow[i][k]).sum::<f64>() / idx.len() as f64).collect()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub cosine_err: f64,
    pub dtwd: f64,
}

/// Unconstrained dynamic time warping with Euclidean point cost.
pub fn dtw_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return if n == m { 0.0 } else { f64::INFINITY };
    }
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = sq_dist(&a[i - 1], &b[j - 1]).sqrt();
            cur[j] = cost + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// RK4 roll-out of `field` from `x0`, recorded every `dt` for `len` samples.
pub fn rollout<F>(field: &F, x0: &[f64], dt: f64, len: usize) -> Result<Vec<Vec<f64>>, EvalError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let sub = (dt / 1e-2).ceil().max(1.0) as usize;
    let h = dt / sub as f64;
    let axpy = |x: &[f64], k: &[f64], s: f64| x.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    let mut x = x0.to_vec();
    let mut out = vec![x.clone()];
    for _ in 1..len {
        for _ in 0..sub {
            let k1 = field(&x);
            let k2 = field(&axpy(&x, &k1, h / 2.0));
            let k3 = field(&axpy(&x, &k2, h / 2.0));
            let k4 = field(&axpy(&x, &k3, h));
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::InvalidArgument("roll-out diverged".into()));
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Velocity error, direction error and reproduction distance of `field`
/// against reference trajectories.
pub fn metrics<F>(reference: &[Trajectory], field: F) -> Result<Metrics, EvalError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if reference.is_empty() || reference.iter().any(|t| t.is_empty()) {
        return Err(EvalError::EmptyReference);
    }
    let mut err_sum = 0.0;
    let mut count = 0usize;
    let mut cos_sum = 0.0;
    let mut cos_count = 0usize;
    let mut dtw_sum = 0.0;
    for t in reference {
        for s in t.samples() {
            let f = field(&s.position);
            if f.len() != s.velocity.len() || f.iter().any(|v| !v.is_finite()) {
                return Err(EvalError::InvalidArgument("field returned an invalid velocity".into()));
            }
            err_sum += sq_dist(&f, &s.velocity).sqrt();
            count += 1;
            let nf = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nr = s.speed();
            if nf >= 1e-12 && nr >= 1e-12 {
                let dot: f64 = f.iter().zip(&s.velocity).map(|(a, b)| a * b).sum();
                cos_sum += (1.0 - dot / (nf * nr)).abs();
                cos_count += 1;
            }
        }
        let path: Vec<Vec<f64>> = t.samples().iter().map(|s| s.position.clone()).collect();
        let repro = rollout(&field, &path[0], t.dt(), path.len())?;
        dtw_sum += dtw_distance(&path, &repro);
    }
    Ok(Metrics {
        rmse: err_sum / count as f64,
        cosine_err: if cos_count > 0 { cos_sum / cos_count as f64 } else { 0.0 },
        dtwd: dtw_sum / reference.len() as f64,
    })
}

/// Ground-truth basin of every sample: the attractor nearest to the state
/// reached from the trajectory's first sample after `horizon` seconds.
pub fn basin_labels(system: &BenchmarkSystem, data: &TrajectorySet, horizon: f64) -> Result<Vec<usize>, EvalError> {
    let attractors = system.attractors();
    let mut labels = Vec::with_capacity(data.total_samples());
    for t in data.trajectories() {
        let end = integrate(system, &t.first().position, horizon, 10.0)
            .map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
        let x = &end.last().position;
        let basin = (0..attractors.len())
            .min_by(|&a, &b| sq_dist(x, &attractors[a]).total_cmp(&sq_dist(x, &attractors[b])))
            .unwrap();
        labels.extend(std::iter::repeat_n(basin, t.len()));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::StateSample;

    fn blob_set(centers: &[[f64; 2]], per: usize) -> (TrajectorySet, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut trajs = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            let samples = (0..per)
                .map(|_| {
                    let p = vec![center[0] + rng.random_range(-0.3..0.3), center[1] + rng.random_range(-0.3..0.3)];
                    StateSample::new(p, vec![rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)]).unwrap()
                })
                .collect();
            trajs.push(Trajectory::new(samples, 0.1).unwrap());
            truth.extend(std::iter::repeat_n(c, per));
        }
        (TrajectorySet::new(trajs, 10.0).unwrap(), truth)
    }

    #[test]
    fn accuracy_is_permutation_invariant() {
        let truth = [0, 0, 1, 1, 2];
        assert_eq!(best_permutation_accuracy(&[2, 2, 0, 0, 1], &truth).unwrap(), 1.0);
        assert_eq!(best_permutation_accuracy(&[0, 0, 0, 0, 0], &truth).unwrap(), 0.4);
        assert_eq!(best_permutation_accuracy(&[0, 1], &[0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn baselines_separate_blobs() {
        let (data, truth) = blob_set(&[[0.0, 0.0], [10.0, 10.0]], 30);
        let kk = kernel_kmeans(&data, 2, 3.0, 1).unwrap().scored(&truth).unwrap();
        assert_eq!(kk.accuracy, Some(1.0));
        let gm = gmm_em(&data, 2, 1).unwrap().scored(&truth).unwrap();
        assert_eq!(gm.accuracy, Some(1.0));
        let sp = spectral_baseline(&data, 2, 5, 1).unwrap().scored(&truth).unwrap();
        assert_eq!(sp.accuracy, Some(1.0));
        let one = kernel_kmeans(&data, 1, 3.0, 1).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn em_and_kernel_kmeans_are_monotone() {
        let (data, _) = blob_set(&[[0.0, 0.0], [1.0, 0.5], [3.0, 0.0]], 25);
        let (_, ll) = gmm_em_traced(&data, 3, 4).unwrap();
        assert!(ll.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)), "{ll:?}");
        let (_, obj) = kernel_kmeans_traced(&data, 3, 0.8, 4).unwrap();
        assert!(obj.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{obj:?}");
    }

    fn sink_set() -> TrajectorySet {
        // x' = -x toward the origin.
        let trajs = [[2.0, 0.0], [0.0, 2.0], [-2.0, -1.0]]
            .iter()
            .map(|x0| {
                let samples = (0..200)
                    .map(|n| {
                        let e = (-(n as f64) * 0.05).exp();
                        let p = vec![x0[0] * e, x0[1] * e];
                        let v = vec![-p[0], -p[1]];
                        StateSample::new(p, v).unwrap()
                    })
                    .collect();
                Trajectory::new(samples, 0.05).unwrap()
            })
            .collect();
        TrajectorySet::new(trajs, 20.0).unwrap()
    }

    #[test]
    fn low_speed_points_sit_at_the_sink() {
        let data = sink_set();
        let c = zero_velocity_candidates(&data, 0.1, 0.2).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].iter().all(|v| v.abs() < 0.2));
        let all: usize = zero_velocity_candidates(&data, 0.999, 1e-9).unwrap().len();
        assert!(all > 400);
    }

    #[test]
    fn slow_corner_gives_spurious_candidate() {
        // A path that slows almost to rest at a corner before moving on.
        let mut samples = Vec::new();
        for n in 0..100 {
            let t = n as f64 / 99.0;
            let speed = 0.02 + (t - 0.5).abs() * 2.0;
            let (p, v) = if t < 0.5 {
                (vec![t * 2.0, 0.0], vec![speed, 0.0])
            } else {
                (vec![1.0, (t - 0.5) * 2.0], vec![0.0, speed])
            };
            samples.push(StateSample::new(p, v).unwrap());
        }
        let data = TrajectorySet::new(vec![Trajectory::new(samples, 0.01).unwrap()], 100.0).unwrap();
        let c = zero_velocity_candidates(&data, 0.1, 0.05).unwrap();
        assert!(c.iter().any(|p| (p[0] - 1.0).abs() < 0.1 && p[1].abs() < 0.1));
    }

    #[test]
    fn metric_examples() {
        let data = sink_set();
        let exact = metrics(data.trajectories(), |x| vec![-x[0], -x[1]]).unwrap();
        assert!(exact.rmse < 1e-15 && exact.cosine_err < 1e-15);
        assert!(exact.dtwd < 1e-6, "{}", exact.dtwd);
        let double = metrics(data.trajectories(), |x| vec![-2.0 * x[0], -2.0 * x[1]]).unwrap();
        assert!(double.cosine_err < 1e-12);
        let mean_speed = data.samples().map(|s| s.speed()).sum::<f64>() / data.total_samples() as f64;
        assert!((double.rmse - mean_speed).abs() < 1e-12);
        let p: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 1.0]).collect();
        assert_eq!(dtw_distance(&p, &p), 0.0);
        let q: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64 * 0.5, 0.0]).collect();
        assert_eq!(dtw_distance(&p, &q), dtw_distance(&q, &p));
    }
}
