//! Benchmark vector fields, fixed-step RK4 integration and the trajectory
//! data model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::DynamicsError;

/// Largest absolute state entry tolerated during integration.
pub const OVERFLOW_GUARD: f64 = 1e9;

/// Largest internal RK4 step in seconds.
pub const MAX_STEP: f64 = 1e-3;

/// One node payload: a position and the velocity observed there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSample {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl StateSample {
    pub fn new(position: Vec<f64>, velocity: Vec<f64>) -> Result<Self, DynamicsError> {
        if position.is_empty() || position.len() != velocity.len() {
            return Err(DynamicsError::InvalidData(format!(
                "position has dimension {}, velocity has dimension {}",
                position.len(),
                velocity.len()
            )));
        }
        if position.iter().chain(&velocity).any(|v| !v.is_finite()) {
            return Err(DynamicsError::InvalidData("non-finite sample entry".into()));
        }
        Ok(Self { position, velocity })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    pub fn speed(&self) -> f64 {
        norm(&self.velocity)
    }
}

/// One sampled path, consecutive samples `dt` seconds apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<StateSample>,
    dt: f64,
}

impl Trajectory {
    pub fn new(samples: Vec<StateSample>, dt: f64) -> Result<Self, DynamicsError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(DynamicsError::NonPositive("dt"));
        }
        if samples.len() < 2 {
            return Err(DynamicsError::InvalidData(format!(
                "trajectory needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let d = samples[0].dim();
        if samples.iter().any(|s| s.dim() != d) {
            return Err(DynamicsError::InvalidData(
                "samples of one trajectory differ in dimension".into(),
            ));
        }
        Ok(Self { samples, dt })
    }

    pub fn samples(&self) -> &[StateSample] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn first(&self) -> &StateSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &StateSample {
        &self.samples[self.samples.len() - 1]
    }

    /// Keeps every `stride`-th sample, starting with the first.
    pub fn subsample(&self, stride: usize) -> Result<Self, DynamicsError> {
        let stride = stride.max(1);
        let samples: Vec<_> = self.samples.iter().step_by(stride).cloned().collect();
        Trajectory::new(samples, self.dt * stride as f64)
    }
}

/// The unsupervised input: trajectories sharing one sampling frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    trajectories: Vec<Trajectory>,
    sampling_frequency: f64,
}

impl TrajectorySet {
    pub fn new(
        trajectories: Vec<Trajectory>,
        sampling_frequency: f64,
    ) -> Result<Self, DynamicsError> {
        if trajectories.is_empty() {
            return Err(DynamicsError::InvalidData("empty trajectory set".into()));
        }
        if !(sampling_frequency > 0.0) || !sampling_frequency.is_finite() {
            return Err(DynamicsError::NonPositive("sampling frequency"));
        }
        let d = trajectories[0].dim();
        if trajectories.iter().any(|t| t.dim() != d) {
            return Err(DynamicsError::InvalidData(
                "trajectories differ in dimension".into(),
            ));
        }
        Ok(Self {
            trajectories,
            sampling_frequency,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn sampling_frequency(&self) -> f64 {
        self.sampling_frequency
    }

    pub fn dim(&self) -> usize {
        self.trajectories[0].dim()
    }

    /// Total sample count M.
    pub fn total_samples(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// All samples in node order: trajectory order, then time order.
    pub fn samples(&self) -> impl Iterator<Item = &StateSample> {
        self.trajectories.iter().flat_map(|t| t.samples().iter())
    }

    /// `(trajectory id, position in trajectory)` for every node.
    pub fn path_index(&self) -> Vec<(usize, usize)> {
        self.trajectories
            .iter()
            .enumerate()
            .flat_map(|(k, t)| (0..t.len()).map(move |n| (k, n)))
            .collect()
    }

    /// Keeps every `stride`-th sample of every trajectory.
    pub fn subsample(&self, stride: usize) -> Result<Self, DynamicsError> {
        let stride = stride.max(1);
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| t.subsample(stride))
            .collect::<Result<Vec<_>, _>>()?;
        TrajectorySet::new(trajectories, self.sampling_frequency / stride as f64)
    }

    /// Per-dimension population standard deviation of all positions.
    pub fn position_std(&self) -> Vec<f64> {
        let d = self.dim();
        let m = self.total_samples() as f64;
        let mut mean = vec![0.0; d];
        for s in self.samples() {
            for (acc, v) in mean.iter_mut().zip(&s.position) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; d];
        for s in self.samples() {
            for i in 0..d {
                var[i] += (s.position[i] - mean[i]).powi(2);
            }
        }
        var.into_iter().map(|v| (v / m).sqrt()).collect()
    }
}

/// Two-dimensional multi-attractor benchmark fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum BenchmarkSystem {
    /// x1' = 2 x1 - x1 x2, x2' = 2 x1^2 - x2; sinks at (-1, 2) and (1, 2).
    Heart,
    /// x1' = x2, x2' = -(l/g) sin x1 - k l x2; sinks at 2 pi n.
    Pendulum { l: f64, g: f64, k: f64 },
    /// x1' = x2, x2' = -delta x2 - alpha x1 - beta x1^3.
    Duffing { delta: f64, alpha: f64, beta: f64 },
}

impl BenchmarkSystem {
    pub fn pendulum() -> Self {
        BenchmarkSystem::Pendulum {
            l: 1.0,
            g: 9.81,
            k: 0.5,
        }
    }

    pub fn duffing() -> Self {
        BenchmarkSystem::Duffing {
            delta: 0.3,
            alpha: -1.2,
            beta: 0.3,
        }
    }

    /// Looks a benchmark up by name with its default parameters.
    pub fn from_name(name: &str) -> Result<Self, DynamicsError> {
        match name.trim().to_ascii_lowercase().as_str() {
            "heart" => Ok(BenchmarkSystem::Heart),
            "pendulum" => Ok(Self::pendulum()),
            "duffing" => Ok(Self::duffing()),
            other => Err(DynamicsError::UnknownSystem(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkSystem::Heart => "heart",
            BenchmarkSystem::Pendulum { .. } => "pendulum",
            BenchmarkSystem::Duffing { .. } => "duffing",
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |reason: &str| {
            Err(DynamicsError::InvalidParameters {
                system: self.name(),
                reason: reason.to_string(),
            })
        };
        match *self {
            BenchmarkSystem::Heart => Ok(()),
            BenchmarkSystem::Pendulum { l, g, k } => {
                if !(l > 0.0 && g > 0.0 && k > 0.0) {
                    return bad("l, g and k must be positive");
                }
                Ok(())
            }
            BenchmarkSystem::Duffing { delta, alpha, beta } => {
                if !(alpha < 0.0 && beta > 0.0) {
                    return bad("two attractors need alpha < 0 and beta > 0");
                }
                if !(delta > 0.0) {
                    return bad("damping delta must be positive");
                }
                Ok(())
            }
        }
    }

    /// The stable equilibria relevant to the benchmark domain.
    pub fn attractors(&self) -> Vec<[f64; 2]> {
        match *self {
            BenchmarkSystem::Heart => vec![[-1.0, 2.0], [1.0, 2.0]],
            BenchmarkSystem::Pendulum { .. } => vec![[0.0, 0.0], [2.0 * PI, 0.0]],
            BenchmarkSystem::Duffing { alpha, beta, .. } => {
                let r = (-alpha / beta).sqrt();
                vec![[-r, 0.0], [r, 0.0]]
            }
        }
    }

    fn rhs(&self, x: [f64; 2]) -> [f64; 2] {
        let [x1, x2] = x;
        match *self {
            BenchmarkSystem::Heart => [2.0 * x1 - x1 * x2, 2.0 * x1 * x1 - x2],
            BenchmarkSystem::Pendulum { l, g, k } => [x2, -(l / g) * x1.sin() - k * l * x2],
            BenchmarkSystem::Duffing { delta, alpha, beta } => {
                [x2, -delta * x2 - alpha * x1 - beta * x1 * x1 * x1]
            }
        }
    }
}

fn as_state(x: &[f64]) -> Result<[f64; 2], DynamicsError> {
    if x.len() != 2 || x.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::BadState {
            expected: 2,
            got: x.to_vec(),
        });
    }
    Ok([x[0], x[1]])
}

/// Velocity of `system` at `x`.
pub fn eval_field(system: &BenchmarkSystem, x: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    system.validate()?;
    Ok(system.rhs(as_state(x)?).to_vec())
}

fn rk4_step(system: &BenchmarkSystem, x: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
    let k1 = system.rhs(x);
    let k2 = system.rhs(add(x, k1, h / 2.0));
    let k3 = system.rhs(add(x, k2, h / 2.0));
    let k4 = system.rhs(add(x, k3, h));
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrates with an explicit internal step `h <= dt`, returning the state
/// at every multiple of `dt` up to `n_records - 1`.
pub(crate) fn integrate_with_step(
    system: &BenchmarkSystem,
    x0: [f64; 2],
    dt: f64,
    substeps: usize,
    n_records: usize,
) -> Result<Vec<[f64; 2]>, DynamicsError> {
    let h = dt / substeps as f64;
    let mut states = Vec::with_capacity(n_records);
    let mut x = x0;
    states.push(x);
    for record in 1..n_records {
        for sub in 0..substeps {
            x = rk4_step(system, x, h);
            if x.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_GUARD) {
                return Err(DynamicsError::Divergent {
                    step: (record - 1) * substeps + sub + 1,
                });
            }
        }
        states.push(x);
    }
    Ok(states)
}

/// Fixed-step RK4 integration recorded every `1 / frequency` seconds.
///
/// The internal step is `min(1 / frequency, MAX_STEP)`. A duration that is
/// not a whole number of sampling periods is truncated. Stored velocities are
/// the field evaluated at the stored positions.
pub fn integrate(
    system: &BenchmarkSystem,
    x0: &[f64],
    duration: f64,
    frequency: f64,
) -> Result<Trajectory, DynamicsError> {
    system.validate()?;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(DynamicsError::NonPositive("duration"));
    }
    if !(frequency > 0.0) || !frequency.is_finite() {
        return Err(DynamicsError::NonPositive("frequency"));
    }
    let x0 = as_state(x0)?;
    let dt = 1.0 / frequency;
    let periods = (duration * frequency + 1e-9).floor() as usize;
    let substeps = (dt / MAX_STEP - 1e-9).ceil().max(1.0) as usize;
    let states = integrate_with_step(system, x0, dt, substeps, periods + 1)?;
    let samples = states
        .into_iter()
        .map(|x| StateSample {
            position: x.to_vec(),
            velocity: system.rhs(x).to_vec(),
        })
        .collect();
    Trajectory::new(samples, dt)
}

/// One trajectory per initial condition, all at the same frequency.
pub fn make_dataset(
    system: &BenchmarkSystem,
    initial_conditions: &[Vec<f64>],
    duration: f64,
    frequency: f64,
) -> Result<TrajectorySet, DynamicsError> {
    if initial_conditions.is_empty() {
        return Err(DynamicsError::NoInitialConditions);
    }
    let trajectories = initial_conditions
        .iter()
        .map(|x0| integrate(system, x0, duration, frequency))
        .collect::<Result<Vec<_>, _>>()?;
    TrajectorySet::new(trajectories, frequency)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heart_equilibria() {
        for x in [[1.0, 2.0], [-1.0, 2.0]] {
            assert_eq!(eval_field(&BenchmarkSystem::Heart, &x).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn duffing_equilibrium_at_two() {
        let v = eval_field(&BenchmarkSystem::duffing(), &[2.0, 0.0]).unwrap();
        assert!(norm(&v) < 1e-12, "{v:?}");
    }

    #[test]
    fn pendulum_rest() {
        let v = eval_field(&BenchmarkSystem::pendulum(), &[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn documented_attractors_are_equilibria() {
        for sys in [
            BenchmarkSystem::Heart,
            BenchmarkSystem::pendulum(),
            BenchmarkSystem::duffing(),
        ] {
            for a in sys.attractors() {
                assert!(norm(&eval_field(&sys, &a).unwrap()) < 1e-12, "{sys:?} {a:?}");
            }
        }
    }

    #[test]
    fn field_rejects_bad_input() {
        assert!(matches!(
            BenchmarkSystem::from_name("lorenz"),
            Err(DynamicsError::UnknownSystem(_))
        ));
        assert!(eval_field(&BenchmarkSystem::Heart, &[f64::NAN, 0.0]).is_err());
        assert!(eval_field(&BenchmarkSystem::Heart, &[1.0]).is_err());
        let bad = BenchmarkSystem::Duffing {
            delta: 0.3,
            alpha: 1.2,
            beta: 0.3,
        };
        assert!(eval_field(&bad, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn heart_converges_to_right_basin() {
        let t = integrate(&BenchmarkSystem::Heart, &[0.5, 0.5], 10.0, 100.0).unwrap();
        let end = &t.last().position;
        assert!((end[0] - 1.0).abs() < 3e-2 && (end[1] - 2.0).abs() < 3e-2, "{end:?}");
        assert_eq!(t.len(), 1001);
    }

    #[test]
    fn pendulum_settles_at_rest() {
        let t = integrate(&BenchmarkSystem::pendulum(), &[0.3, 0.0], 60.0, 10.0).unwrap();
        assert!(norm(&t.last().position) < 1e-2);
    }

    #[test]
    fn single_period_gives_two_samples() {
        let t = integrate(&BenchmarkSystem::Heart, &[0.5, 0.5], 0.01, 100.0).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn partial_period_is_truncated() {
        let t = integrate(&BenchmarkSystem::Heart, &[0.5, 0.5], 0.025, 100.0).unwrap();
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn stored_velocity_is_field_value() {
        let sys = BenchmarkSystem::duffing();
        let t = integrate(&sys, &[1.0, 0.5], 2.0, 50.0).unwrap();
        for s in t.samples() {
            assert_eq!(s.velocity, eval_field(&sys, &s.position).unwrap());
        }
    }

    #[test]
    fn divergence_reports_step() {
        // Negative damping with no cubic restoring force escapes quickly.
        let sys = BenchmarkSystem::Duffing {
            delta: 0.3,
            alpha: -1.2,
            beta: 1e-30,
        };
        let err = integrate(&sys, &[1.0, 0.0], 100.0, 10.0).unwrap_err();
        assert!(matches!(err, DynamicsError::Divergent { step } if step > 0));
    }

    #[test]
    fn rk4_fourth_order() {
        let sys = BenchmarkSystem::Heart;
        let x0 = [0.5, 0.5];
        let t_end = 1.0;
        let reference = integrate_with_step(&sys, x0, t_end, 100_000, 2).unwrap()[1];
        let err = |steps: usize| {
            let x = integrate_with_step(&sys, x0, t_end, steps, 2).unwrap()[1];
            ((x[0] - reference[0]).powi(2) + (x[1] - reference[1]).powi(2)).sqrt()
        };
        let coarse = err(50);
        let fine = err(100);
        assert!(coarse / fine >= 12.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn dataset_counts() {
        let ics: Vec<Vec<f64>> = vec![
            vec![-2.5, 0.5],
            vec![-2.5, 3.5],
            vec![-0.5, 4.5],
            vec![2.5, 0.5],
            vec![2.5, 3.5],
            vec![0.5, 4.5],
        ];
        let set = make_dataset(&BenchmarkSystem::Heart, &ics, 1.0, 100.0).unwrap();
        assert_eq!(set.trajectories().len(), 6);
        assert!(matches!(
            make_dataset(&BenchmarkSystem::Heart, &[], 1.0, 100.0),
            Err(DynamicsError::NoInitialConditions)
        ));
        let duff = make_dataset(&BenchmarkSystem::duffing(), &ics, 5.0, 200.0).unwrap();
        assert!(duff.trajectories().iter().all(|t| t.len() == 1001));
    }
}
