//! End-to-end run: kernel, graph, spectrum, clusters, attractors and the
//! optional diffeomorphism and baseline stages.

use nalgebra::DVector;
use serde::Serialize;

use attractorscope::attractor::{
    extract_lines, find_attractor, normalized_error, terminal_fallback, DirectionMode,
};
use attractorscope::diffeo::{
    integrate_field, lyapunov_potential, reconstruct_field, train, StackConfig, TargetNormalization,
};
use attractorscope::dsgraph::{component_labels, connected_components, laplacian};
use attractorscope::dynamics::make_dataset;
use attractorscope::evalbench::{
    basin_labels, best_permutation_accuracy, gmm_em, kernel_kmeans, metrics, spectral_baseline,
    Metrics,
};
use attractorscope::spectral::{
    assign_and_embed, count_subdynamics, eigendecompose_by_components, label_points,
    relevant_components,
};
use attractorscope::vkernel::build_adjacency;
use attractorscope::{
    BenchmarkSystem, ClusteringResult, CouplingStack, KernelParams, SubdynamicsPartition,
    TrainConfig, Trajectory, TrajectorySet,
};

use crate::config::{PipelineConfig, Source};
use crate::{io, CliError};

/// Neighbourhood size of the spectral clustering baseline.
pub const SPECTRAL_NEIGHBORS: usize = 10;
/// Step and length of the reconstructed-field roll-outs.
pub const FIELD_DT: f64 = 0.01;
pub const FIELD_STEPS: usize = 1500;

/// Generation settings of a benchmark dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkPlan {
    pub system: BenchmarkSystem,
    pub initial_conditions: Vec<Vec<f64>>,
    pub duration: f64,
    pub frequency: f64,
    pub stride: usize,
}

/// Three initial conditions per basin, subsampled to about 1200 samples.
pub fn benchmark_plan(name: &str) -> Result<BenchmarkPlan, CliError> {
    let system = BenchmarkSystem::from_name(name).map_err(CliError::core)?;
    let ics = |v: &[[f64; 2]]| v.iter().map(|x| x.to_vec()).collect::<Vec<_>>();
    let plan = match system {
        BenchmarkSystem::Heart => BenchmarkPlan {
            system,
            initial_conditions: ics(&[[0.3, 0.2], [2.0, 0.5], [1.5, 4.0], [-0.3, 0.2], [-2.0, 0.5], [-1.5, 4.0]]),
            duration: 10.0,
            frequency: 100.0,
            stride: 5,
        },
        BenchmarkSystem::Pendulum { .. } => BenchmarkPlan {
            system,
            initial_conditions: ics(&[[-2.0, 0.0], [1.5, 0.5], [0.5, -1.0], [4.5, 0.0], [7.8, 0.5], [6.8, -1.0]]),
            duration: 60.0,
            frequency: 10.0,
            stride: 3,
        },
        BenchmarkSystem::Duffing { .. } => BenchmarkPlan {
            system,
            initial_conditions: ics(&[[3.0, 0.0], [1.0, 1.5], [2.5, -1.5], [-3.0, 0.0], [-1.0, -1.5], [-2.5, 1.5]]),
            duration: 5.0,
            frequency: 200.0,
            stride: 5,
        },
    };
    Ok(plan)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttractorReport {
    pub cluster: usize,
    /// `intersection` or `terminal`.
    pub method: String,
    pub embedding_point: Vec<f64>,
    pub original_point: Vec<f64>,
    pub intersection_spread: f64,
    pub pairs_used: usize,
    /// Normalized error to the nearest ground-truth attractor.
    pub error: Option<f64>,
    pub nearest_truth: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub final_distance: f64,
    pub lyapunov_non_increasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffeoReport {
    pub cluster: usize,
    pub target: Vec<f64>,
    pub loss_history: Vec<f64>,
    pub loss_ratio: f64,
    pub convergence: Vec<ConvergenceReport>,
    pub metrics: Option<Metrics>,
    #[serde(skip)]
    pub stack: CouplingStack,
}

/// Everything the run established; fields stay empty for stages never
/// reached.
#[derive(Clone, Debug, Default, Serialize)]
pub struct PipelineReport {
    pub source: String,
    pub sampling_frequency: f64,
    pub trajectories: usize,
    pub total_samples: usize,
    pub dim: usize,
    pub kernel: Option<KernelParams>,
    pub components: usize,
    pub q: usize,
    pub spectrum: Vec<f64>,
    pub labels: Vec<usize>,
    pub relevant: Vec<usize>,
    pub assigned_eigvecs: Vec<Vec<usize>>,
    /// Per cluster, `(point index, coordinates)` of its members.
    #[serde(skip)]
    pub embeddings: Vec<Vec<(usize, Vec<f64>)>>,
    pub attractors: Vec<AttractorReport>,
    pub accuracy: Option<f64>,
    /// Per ground-truth attractor, the smallest normalized error of any
    /// estimate.
    pub truth_errors: Option<Vec<f64>>,
    pub baselines: Vec<ClusteringResult>,
    pub diffeo: Vec<DiffeoReport>,
    pub warnings: Vec<String>,
    pub stages: Vec<String>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub error: Option<CliError>,
}

impl PipelineOutcome {
    pub fn is_partial(&self) -> bool {
        self.error.is_some()
    }
}

struct Truth {
    labels: Option<Vec<usize>>,
    attractors: Option<Vec<Vec<f64>>>,
}

fn load_data(config: &PipelineConfig, report: &mut PipelineReport) -> Result<(TrajectorySet, Truth), CliError> {
    let (data, truth) = match &config.source {
        Source::Benchmark(name) => {
            let plan = benchmark_plan(name)?;
            let freq = config.sampling_frequency.unwrap_or(plan.frequency);
            let duration = config.duration.unwrap_or(plan.duration);
            let stride = config.stride.unwrap_or(plan.stride);
            let full = make_dataset(&plan.system, &plan.initial_conditions, duration, freq)
                .map_err(CliError::core)?;
            let data = full.subsample(stride).map_err(CliError::core)?;
            let labels = basin_labels(&plan.system, &data, 200.0).map_err(CliError::core)?;
            let attractors = plan.system.attractors().iter().map(|a| a.to_vec()).collect();
            report.source = format!("benchmark:{name}");
            (data, Truth { labels: Some(labels), attractors: Some(attractors) })
        }
        Source::Csv(path) => {
            let freq = config
                .sampling_frequency
                .ok_or_else(|| CliError::Config("CSV input requires freq".into()))?;
            let full = io::ingest_csv(path, freq)?;
            let data = full.subsample(config.stride.unwrap_or(1)).map_err(CliError::core)?;
            report.source = format!("csv:{}", path.display());
            (data, Truth { labels: None, attractors: None })
        }
    };
    let mut truth = truth;
    if let Some(p) = &config.truth_labels {
        let labels = io::read_labels(p)?;
        if labels.len() != data.total_samples() {
            return Err(CliError::Config(format!(
                "truth labels cover {} points, data has {}",
                labels.len(),
                data.total_samples()
            )));
        }
        truth.labels = Some(labels);
    }
    if let Some(p) = &config.truth_attractors {
        let rows = io::read_attractors(p)?;
        if rows.iter().any(|r| r.len() != data.dim()) {
            return Err(CliError::Config("truth attractor dimension differs from data".into()));
        }
        truth.attractors = Some(rows);
    }
    report.sampling_frequency = data.sampling_frequency();
    report.trajectories = data.trajectories().len();
    report.total_samples = data.total_samples();
    report.dim = data.dim();
    Ok((data, truth))
}

fn kernel_params(config: &PipelineConfig, data: &TrajectorySet) -> Result<KernelParams, CliError> {
    let mut p = KernelParams::defaults_for(data).map_err(CliError::core)?;
    if let Some(s) = config.sigma {
        p.sigma = s;
    }
    if let Some(t) = config.theta_r {
        p.theta_r = t;
    }
    if let Some(s) = config.sigma_f {
        p.sigma_f = s;
    }
    if let Some(e) = config.epsilon {
        p.epsilon = e;
    }
    p.validate().map_err(CliError::core)?;
    Ok(p)
}

/// Majority cluster of each trajectory.
fn trajectory_clusters(data: &TrajectorySet, labels: &[usize], q: usize) -> Vec<usize> {
    let mut offset = 0;
    data.trajectories()
        .iter()
        .map(|t| {
            let mut counts = vec![0usize; q];
            for &l in &labels[offset..offset + t.len()] {
                counts[l] += 1;
            }
            offset += t.len();
            (0..q).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0)
        })
        .collect()
}

fn cap_dimension(part: &mut SubdynamicsPartition, cap: usize) {
    for c in 0..part.q {
        if part.embeddings[c].ncols() > cap {
            part.embeddings[c] = part.embeddings[c].columns(0, cap).into_owned();
            part.assigned_eigvecs[c].truncate(cap);
            part.axis_eigenvalues[c].truncate(cap);
        }
    }
}

fn score_attractors(report: &mut PipelineReport, truth: &[Vec<f64>], std: &[f64]) -> Result<(), CliError> {
    let mut best = vec![f64::INFINITY; truth.len()];
    for a in &mut report.attractors {
        let mut nearest: Option<(f64, usize)> = None;
        for (t, x) in truth.iter().enumerate() {
            let e = normalized_error(&a.original_point, x, std).map_err(CliError::core)?;
            best[t] = best[t].min(e);
            if nearest.is_none_or(|(b, _)| e < b) {
                nearest = Some((e, t));
            }
        }
        if let Some((e, t)) = nearest {
            a.error = Some(e);
            a.nearest_truth = Some(truth[t].clone());
        }
    }
    report.truth_errors = Some(best);
    Ok(())
}

fn run_diffeo(
    config: &PipelineConfig,
    data: &TrajectorySet,
    part: &SubdynamicsPartition,
    report: &PipelineReport,
    cluster: usize,
) -> Result<Option<DiffeoReport>, CliError> {
    let d = data.dim();
    if part.dim(cluster) < d || d < 2 {
        return Ok(None);
    }
    let positions: Vec<DVector<f64>> = data.samples().map(|s| DVector::from_column_slice(&s.position)).collect();
    let members = part.members(cluster);
    let xs: Vec<DVector<f64>> = members.iter().map(|&i| positions[i].clone()).collect();
    let us: Vec<DVector<f64>> = members
        .iter()
        .map(|&i| DVector::from_fn(d, |k, _| part.embeddings[cluster][(i, k)]))
        .collect();
    let norm = TargetNormalization::fit(&us, &xs).map_err(CliError::core)?;
    let pairs: Vec<(DVector<f64>, DVector<f64>)> =
        xs.iter().cloned().zip(us.iter().map(|u| norm.apply(u))).collect();

    let diameter = {
        let mut best = 0.0f64;
        for a in &xs {
            for b in &xs {
                best = best.max((a - b).norm());
            }
        }
        best
    };
    let mut stack_cfg = StackConfig::for_diameter(diameter, config.seed.wrapping_add(cluster as u64));
    stack_cfg.layers = config.layers;
    stack_cfg.features = config.features;
    let mut stack = CouplingStack::new(d, &stack_cfg).map_err(CliError::core)?;
    let train_cfg = TrainConfig {
        learning_rate: config.learning_rate,
        epochs: config.epochs,
        ..TrainConfig::default()
    };
    let history = train(&mut stack, &pairs, &train_cfg).map_err(CliError::core)?;
    let first = history[0];
    let last = *history.last().unwrap_or(&first);

    let target = DVector::from_column_slice(&report.attractors[cluster].original_point);
    let owner = trajectory_clusters(data, &part.labels, part.q);
    let refs: Vec<Trajectory> = data
        .trajectories()
        .iter()
        .zip(&owner)
        .filter(|(_, &c)| c == cluster)
        .map(|(t, _)| t.clone())
        .collect();
    let mut convergence = Vec::new();
    for t in &refs {
        let x0 = DVector::from_column_slice(&t.first().position);
        let path = integrate_field(&stack, &x0, &target, FIELD_DT, FIELD_STEPS).map_err(CliError::core)?;
        let mut monotone = true;
        let mut prev = f64::INFINITY;
        for x in &path {
            let v = lyapunov_potential(&stack, x, &target).map_err(CliError::core)?;
            if v > prev * (1.0 + 1e-12) + 1e-15 {
                monotone = false;
            }
            prev = v;
        }
        let end = path.last().unwrap_or(&x0);
        convergence.push(ConvergenceReport {
            start: x0.as_slice().to_vec(),
            end: end.as_slice().to_vec(),
            final_distance: (end - &target).norm(),
            lyapunov_non_increasing: monotone,
        });
    }
    let field = |x: &[f64]| {
        reconstruct_field(&stack, &DVector::from_column_slice(x), &target)
            .map(|v| v.as_slice().to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    };
    let metrics = if refs.is_empty() { None } else { metrics(&refs, field).ok() };
    Ok(Some(DiffeoReport {
        cluster,
        target: target.as_slice().to_vec(),
        loss_ratio: if first > 0.0 { last / first } else { 0.0 },
        loss_history: history,
        convergence,
        metrics,
        stack,
    }))
}

fn stages(config: &PipelineConfig, report: &mut PipelineReport) -> Result<(), CliError> {
    config.validate()?;
    let (data, truth) = load_data(config, report)?;
    report.stages.push("dynamics".into());

    let params = kernel_params(config, &data)?;
    report.kernel = Some(params);
    let graph = build_adjacency(&data, &params).map_err(CliError::core)?;
    report.warnings.extend(graph.warnings().iter().cloned());
    report.stages.push("vkernel".into());

    let components = connected_components(&graph);
    report.components = components.len();
    let lap = laplacian(&graph);
    report.stages.push("dsgraph".into());

    let dec = eigendecompose_by_components(&lap, &components).map_err(CliError::core)?;
    report.spectrum = dec.eigenvalues.clone();
    let q = count_subdynamics(&dec);
    report.q = q;
    let labels = label_points(&dec, q).map_err(CliError::core)?;
    let graph_labels = component_labels(&components, graph.len());
    if best_permutation_accuracy(&labels, &graph_labels).map_or(true, |a| a < 1.0) {
        report
            .warnings
            .push("eigenvector labels disagree with connected components".into());
    }
    report.labels = labels.clone();
    if let Some(t) = &truth.labels {
        report.accuracy = best_permutation_accuracy(&labels, t).ok();
    }
    let owner = trajectory_clusters(&data, &labels, q);
    let k_max = (0..q).map(|c| owner.iter().filter(|&&o| o == c).count()).max().unwrap_or(1);
    let relevant = relevant_components(&dec, q, k_max);
    report.relevant = relevant.clone();
    let mut part = assign_and_embed(&dec, &labels, &relevant).map_err(CliError::core)?;
    if let Some(cap) = config.embed_dim {
        cap_dimension(&mut part, cap);
    }
    report.assigned_eigvecs = part.assigned_eigvecs.clone();
    report.warnings.extend(part.warnings.iter().cloned());
    report.embeddings = (0..q)
        .map(|c| {
            part.members(c)
                .into_iter()
                .map(|i| (i, part.embeddings[c].row(i).iter().copied().collect()))
                .collect()
        })
        .collect();
    report.stages.push("spectral".into());

    for c in 0..q {
        let lines = extract_lines(&part, c, &graph, DirectionMode::PrincipalAxis);
        let est = match lines {
            Ok(set) => {
                report.warnings.extend(set.warnings.iter().cloned());
                find_attractor(&set.lines, &part, c, Some(&data)).map(|e| (e, "intersection"))
            }
            Err(e) => Err(e),
        };
        let (est, method) = match est {
            Ok(v) => v,
            Err(e) => {
                report
                    .warnings
                    .push(format!("cluster {c}: {e}; using trajectory end points"));
                (terminal_fallback(&part, c, &graph, &data).map_err(CliError::core)?, "terminal")
            }
        };
        report.attractors.push(AttractorReport {
            cluster: c,
            method: method.into(),
            embedding_point: est.embedding_point,
            original_point: est.original_point,
            intersection_spread: est.intersection_spread,
            pairs_used: est.pairs_used,
            error: None,
            nearest_truth: None,
        });
    }
    if let Some(t) = &truth.attractors {
        score_attractors(report, t, &data.position_std())?;
    }
    report.stages.push("attractor".into());

    if config.baselines {
        let mut results = vec![
            kernel_kmeans(&data, q, params.sigma, config.seed).map_err(CliError::core)?,
            gmm_em(&data, q, config.seed).map_err(CliError::core)?,
            spectral_baseline(&data, q, SPECTRAL_NEIGHBORS, config.seed).map_err(CliError::core)?,
        ];
        if let Some(t) = &truth.labels {
            results = results
                .into_iter()
                .map(|r| r.scored(t))
                .collect::<Result<_, _>>()
                .map_err(CliError::core)?;
        }
        report.baselines = results;
        report.stages.push("evalbench".into());
    }

    if config.diffeo {
        for c in (0..q).filter(|&c| config.diffeo_cluster.is_none_or(|k| k == c)) {
            match run_diffeo(config, &data, &part, report, c)? {
                Some(r) => report.diffeo.push(r),
                None => report.warnings.push(format!(
                    "cluster {c}: embedding has fewer axes than the state; no diffeomorphism"
                )),
            }
        }
        report.stages.push("diffeo".into());
    }
    Ok(())
}

/// Runs every configured stage. On failure the report holds whatever the
/// completed stages produced.
pub fn run_pipeline(config: &PipelineConfig) -> PipelineOutcome {
    let mut report = PipelineReport::default();
    let error = stages(config, &mut report).err();
    PipelineOutcome { report, error }
}
