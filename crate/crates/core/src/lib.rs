//! Clustering and attractor search for multi-attractor dynamical systems.
//!
//! Unlabeled position/velocity samples are embedded in a graph through a
//! velocity-augmented kernel. The multiplicity of the zero eigenvalue of the
//! graph Laplacian gives the number of sub-dynamics, the zero eigenvectors
//! label the samples, and a well-chosen set of low eigenvectors gives, for
//! each sub-dynamics, an embedding in which every trajectory is a straight
//! line. The attractor sits where those lines cross. A learned diffeomorphism
//! from state space to that embedding then yields a globally stable vector
//! field per sub-dynamics.
//!
//! Pipeline, module by module:
//!
//! ```text
//! dynamics   -> TrajectorySet (benchmarks, RK4)
//! vkernel    -> WeightedGraph (kernel + epsilon threshold)
//! dsgraph    -> LaplacianMatrix, components, theory graphs
//! spectral   -> SpectralDecomposition, SubdynamicsPartition
//! attractor  -> AttractorEstimate
//! diffeo     -> CouplingStack (learned map + reconstructed field)
//! evalbench  -> baselines and metrics
//! theory     -> numeric checks of the path/cycle graph spectral results
//! ```

pub mod attractor;
pub mod diffeo;
pub mod dsgraph;
pub mod dynamics;
pub mod eigen;
mod error;
pub mod evalbench;
pub mod spectral;
pub mod theory;
pub mod vkernel;

pub use attractor::{AttractorEstimate, EmbeddingLine};
pub use diffeo::{CouplingLayer, CouplingStack, FourierFeatureNet, TrainConfig};
pub use dsgraph::{LaplacianMatrix, WeightedGraph};
pub use dynamics::{BenchmarkSystem, StateSample, Trajectory, TrajectorySet};
pub use error::{
    AttractorError, DiffeoError, DynamicsError, Error, EvalError, GraphError, KernelError,
    Result, SpectralError, TheoryError,
};
pub use evalbench::ClusteringResult;
pub use spectral::{SpectralDecomposition, SubdynamicsPartition};
pub use vkernel::KernelParams;
