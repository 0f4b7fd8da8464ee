//! Velocity-augmented kernel and the epsilon-thresholded adjacency built on it.
//!
//! Two samples are similar when they are close *and* the displacement between
//! them runs along both of their velocities. The directional part penalizes
//! each endpoint through the affine map `gamma`, which sends an alignment of
//! 1 to no penalty and an alignment of `cos(theta_r)` to `3 sigma`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsgraph::WeightedGraph;
use crate::dynamics::{norm, StateSample, TrajectorySet};
use crate::error::KernelError;

/// Default reference angle, about 20 degrees.
pub const DEFAULT_THETA_R: f64 = 0.35;
pub const DEFAULT_EPSILON: f64 = 0.5;
/// Filter bandwidth as a fraction of the mean speed.
pub const DEFAULT_SIGMA_F_RATIO: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Locality bandwidth, in state units.
    pub sigma: f64,
    /// Reference angle in radians, `0 < theta_r < pi/2`.
    pub theta_r: f64,
    /// Bandwidth of the low-speed filter; 0 disables it.
    pub sigma_f: f64,
    /// Adjacency threshold in `(0, 1)`.
    pub epsilon: f64,
}

impl KernelParams {
    pub fn new(sigma: f64, theta_r: f64, sigma_f: f64, epsilon: f64) -> Result<Self, KernelError> {
        let p = Self {
            sigma,
            theta_r,
            sigma_f,
            epsilon,
        };
        p.validate()?;
        Ok(p)
    }

    /// Data-driven defaults: `sigma = d_max`, `sigma_f` from the mean speed.
    pub fn defaults_for(data: &TrajectorySet) -> Result<Self, KernelError> {
        let sigma = default_sigma(data)?;
        let m = data.total_samples() as f64;
        let mean_speed = data.samples().map(StateSample::speed).sum::<f64>() / m;
        Self::new(
            sigma,
            DEFAULT_THETA_R,
            DEFAULT_SIGMA_F_RATIO * mean_speed,
            DEFAULT_EPSILON,
        )
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |s: String| Err(KernelError::InvalidParams(s));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.theta_r > 0.0 && self.theta_r < std::f64::consts::FRAC_PI_2) {
            return bad(format!("theta_r must lie in (0, pi/2), got {}", self.theta_r));
        }
        if !(self.sigma_f >= 0.0 && self.sigma_f.is_finite()) {
            return bad(format!("sigma_f must be nonnegative, got {}", self.sigma_f));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        Ok(())
    }
}

fn low_speed_filter(speed_product: f64, sigma_f: f64) -> f64 {
    if sigma_f == 0.0 {
        return if speed_product == 0.0 { 1.0 } else { 0.0 };
    }
    (-(speed_product * speed_product) / (2.0 * sigma_f * sigma_f)).exp()
}

/// Alignment of the displacement `xj - xi` with the velocity at `xi`.
///
/// Returns `sign(c) * min(1, filter + |c|)` where `c` is the cosine between
/// the displacement and the velocity of `xi`. An undefined cosine (zero
/// velocity or coincident positions) counts as 0.
pub fn cosine_alignment(xi: &StateSample, xj: &StateSample, sigma_f: f64) -> f64 {
    let si = xi.speed();
    let filter = low_speed_filter(si * xj.speed(), sigma_f);
    let diff: Vec<f64> = xj
        .position
        .iter()
        .zip(&xi.position)
        .map(|(a, b)| a - b)
        .collect();
    let dn = norm(&diff);
    let cos = if dn > 0.0 && si > 0.0 {
        let dot: f64 = diff.iter().zip(&xi.velocity).map(|(a, b)| a * b).sum();
        (dot / (dn * si)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let sign = if cos < 0.0 { -1.0 } else { 1.0 };
    sign * (filter + cos.abs()).min(1.0)
}

/// Affine penalty: `gamma(1) = 0`, `gamma(cos theta_r) = 3 sigma`, clamped to
/// `[0, 3 sigma]`.
pub fn gamma_map(g: f64, params: &KernelParams) -> f64 {
    let g = g.min(1.0);
    let full = 3.0 * params.sigma;
    (full * (1.0 - g) / (1.0 - params.theta_r.cos())).clamp(0.0, full)
}

/// Velocity-augmented similarity in `[0, 1]`; symmetric in its arguments.
pub fn kernel(xi: &StateSample, xj: &StateSample, params: &KernelParams) -> f64 {
    let d2: f64 = xi
        .position
        .iter()
        .zip(&xj.position)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if d2 == 0.0 {
        return 1.0;
    }
    let gij = gamma_map(cosine_alignment(xi, xj, params.sigma_f).abs(), params);
    let gji = gamma_map(cosine_alignment(xj, xi, params.sigma_f).abs(), params);
    // Fixed (min, max) summation order.
    let (lo, hi) = if gij * gij <= gji * gji {
        (gij * gij, gji * gji)
    } else {
        (gji * gji, gij * gij)
    };
    (-(d2 + (lo + hi)) / (2.0 * params.sigma * params.sigma)).exp()
}

/// Dense kernel matrix plus the binary adjacency `W_ij >= epsilon`.
pub fn build_adjacency(
    data: &TrajectorySet,
    params: &KernelParams,
) -> Result<WeightedGraph, KernelError> {
    params.validate()?;
    let m = data.total_samples();
    if m < 2 {
        return Err(KernelError::TooFewSamples(m));
    }
    let nodes: Vec<StateSample> = data.samples().cloned().collect();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| if i == j { 1.0 } else { kernel(&nodes[i], &nodes[j], params) })
                .collect()
        })
        .collect();
    let weights = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
    let neighbors: Vec<Vec<usize>> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, &w)| j != i && w >= params.epsilon)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut graph = WeightedGraph::from_parts(weights, neighbors);
    let isolated: Vec<usize> = (0..m).filter(|&i| graph.degree(i) == 0).collect();
    if !isolated.is_empty() {
        graph.push_warning(format!(
            "{} isolated node(s), first at index {}; each forms its own component",
            isolated.len(),
            isolated[0]
        ));
    }
    graph.set_payloads(nodes, data.path_index());
    Ok(graph)
}

/// Largest distance between consecutive samples: `max |v| / f_sampling`.
pub fn default_sigma(data: &TrajectorySet) -> Result<f64, KernelError> {
    let vmax = data.samples().map(StateSample::speed).fold(0.0, f64::max);
    if !(vmax > 0.0) {
        return Err(KernelError::ZeroVelocities);
    }
    Ok(vmax / data.sampling_frequency())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsgraph::connected_components;
    use crate::dynamics::Trajectory;

    fn sample(p: [f64; 2], v: [f64; 2]) -> StateSample {
        StateSample::new(p.to_vec(), v.to_vec()).unwrap()
    }

    fn params(sigma: f64) -> KernelParams {
        KernelParams::new(sigma, DEFAULT_THETA_R, 1e-6, DEFAULT_EPSILON).unwrap()
    }

    #[test]
    fn alignment_examples() {
        let a = sample([0.0, 0.0], [1.0, 0.0]);
        assert_eq!(cosine_alignment(&a, &sample([2.0, 0.0], [1.0, 0.0]), 1e-6), 1.0);
        assert!(cosine_alignment(&a, &sample([0.0, 3.0], [1.0, 0.0]), 1e-6).abs() < 1e-12);
        let z1 = sample([0.0, 0.0], [0.0, 0.0]);
        let z2 = sample([0.1, 0.0], [0.0, 0.0]);
        assert_eq!(cosine_alignment(&z1, &z2, 1e-3), 1.0);
    }

    #[test]
    fn gamma_endpoints() {
        let p = params(0.2);
        assert_eq!(gamma_map(1.0, &p), 0.0);
        assert!((gamma_map(p.theta_r.cos(), &p) - 0.6).abs() < 1e-12);
        assert!((gamma_map((1.0 + p.theta_r.cos()) / 2.0, &p) - 0.3).abs() < 1e-12);
        assert!((gamma_map(-1.0, &p) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn kernel_examples() {
        let p = params(0.5);
        let a = sample([0.0, 0.0], [1.0, 0.0]);
        assert_eq!(kernel(&a, &a, &p), 1.0);
        let b = sample([0.5, 0.0], [1.0, 0.0]);
        assert!((kernel(&a, &b, &p) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn two_sided_penalty_is_exp_minus_nine() {
        // Both alignments at cos(theta_r) with vanishing separation; the
        // locality term is negligible at this distance.
        let p = params(1.0);
        let th = p.theta_r;
        let eps = 1e-9;
        let a = sample([0.0, 0.0], [th.cos(), th.sin()]);
        let b = sample([eps, 0.0], [th.cos(), -th.sin()]);
        let k = kernel(&a, &b, &p);
        assert!((k - (-9.0f64).exp()).abs() < 1e-9, "{k}");
        assert!(k <= 0.011);
    }

    #[test]
    fn path_adjacency_for_collinear_samples() {
        let sigma = 1.0;
        let samples = (0..5).map(|i| sample([i as f64, 0.0], [1.0, 0.0])).collect();
        let set = TrajectorySet::new(vec![Trajectory::new(samples, 1.0).unwrap()], 1.0).unwrap();
        let g = build_adjacency(&set, &params(sigma)).unwrap();
        for i in 0..5usize {
            let expect: Vec<usize> = [i.checked_sub(1), Some(i + 1)]
                .into_iter()
                .flatten()
                .filter(|&j| j < 5)
                .collect();
            assert_eq!(g.neighbors(i), expect.as_slice());
        }
    }

    #[test]
    fn distant_copies_form_two_components() {
        let make = |y: f64| {
            let s = (0..6).map(|i| sample([0.1 * i as f64, y], [1.0, 0.0])).collect();
            Trajectory::new(s, 0.1).unwrap()
        };
        let set = TrajectorySet::new(vec![make(0.0), make(50.0)], 10.0).unwrap();
        let p = KernelParams::defaults_for(&set).unwrap();
        let g = build_adjacency(&set, &p).unwrap();
        assert_eq!(connected_components(&g).len(), 2);
    }

    #[test]
    fn sigma_from_max_speed() {
        let s = vec![
            sample([0.0, 0.0], [1.0, 0.0]),
            sample([1.0, 0.0], [0.0, 2.0]),
            sample([2.0, 0.0], [4.0, 0.0]),
        ];
        let set = TrajectorySet::new(vec![Trajectory::new(s, 0.5).unwrap()], 2.0).unwrap();
        assert_eq!(default_sigma(&set).unwrap(), 2.0);
        let still = vec![sample([0.0, 0.0], [0.0, 0.0]), sample([0.0, 0.0], [0.0, 0.0])];
        let set = TrajectorySet::new(vec![Trajectory::new(still, 1.0).unwrap()], 1.0).unwrap();
        assert_eq!(default_sigma(&set), Err(KernelError::ZeroVelocities));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(KernelParams::new(0.0, 0.3, 0.0, 0.5).is_err());
        assert!(KernelParams::new(1.0, 1.6, 0.0, 0.5).is_err());
        assert!(KernelParams::new(1.0, 0.3, -1.0, 0.5).is_err());
        assert!(KernelParams::new(1.0, 0.3, 0.0, 1.0).is_err());
    }
}
