//! Fixtures shared by the benchmarks in `benches/`.

use attractorscope::dynamics::make_dataset;
use attractorscope::{BenchmarkSystem, TrajectorySet};

/// Six heart trajectories, 10 s at 100 Hz, every `stride`-th sample kept.
pub fn heart_data(stride: usize) -> TrajectorySet {
    let ics: Vec<Vec<f64>> = [[0.3, 0.2], [2.0, 0.5], [1.5, 4.0], [-0.3, 0.2], [-2.0, 0.5], [-1.5, 4.0]]
        .iter()
        .map(|x| x.to_vec())
        .collect();
    make_dataset(&BenchmarkSystem::Heart, &ics, 10.0, 100.0)
        .and_then(|d| d.subsample(stride))
        .expect("heart dataset")
}
