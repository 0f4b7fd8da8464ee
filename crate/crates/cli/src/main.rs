use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use attractorscope_cli::config::{apply_config_file, PipelineConfig, Source};
use attractorscope_cli::export::export_results;
use attractorscope_cli::run_pipeline;

/// Cluster sampled trajectories into sub-dynamics and locate their attractors.
#[derive(Debug, Parser)]
#[command(name = "attractorscope", version)]
struct Args {
    /// Benchmark to generate: heart, pendulum or duffing.
    #[arg(long, conflicts_with = "input")]
    benchmark: Option<String>,
    /// Trajectory CSV (`traj_id,x0..,v0..`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sampling frequency in Hz.
    #[arg(long)]
    freq: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train a diffeomorphism per cluster.
    #[arg(long)]
    diffeo: bool,
    /// Run kernel k-means, GMM and spectral clustering for comparison.
    #[arg(long)]
    baselines: bool,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    theta_r: Option<f64>,
    #[arg(long)]
    sigma_f: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Train only this cluster's diffeomorphism.
    #[arg(long)]
    diffeo_cluster: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Ground-truth labels (`point_index,label`).
    #[arg(long)]
    truth_labels: Option<PathBuf>,
    /// Ground-truth attractors, one per row (`x0..`).
    #[arg(long)]
    truth_attractors: Option<PathBuf>,
}

fn build_config(args: &Args) -> anyhow::Result<PipelineConfig> {
    let mut config = PipelineConfig::benchmark("heart", "attractorscope-out");
    if let Some(path) = &args.config {
        apply_config_file(&mut config, path)?;
    }
    if let Some(name) = &args.benchmark {
        config.source = Source::Benchmark(name.clone());
    }
    if let Some(path) = &args.input {
        config.source = Source::Csv(path.clone());
    }
    let settings: [(&str, Option<String>); 17] = [
        ("diffeo_cluster", args.diffeo_cluster.map(|v| v.to_string())),
        ("freq", args.freq.map(|v| v.to_string())),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("duration", args.duration.map(|v| v.to_string())),
        ("stride", args.stride.map(|v| v.to_string())),
        ("sigma", args.sigma.map(|v| v.to_string())),
        ("theta_r", args.theta_r.map(|v| v.to_string())),
        ("sigma_f", args.sigma_f.map(|v| v.to_string())),
        ("epsilon", args.epsilon.map(|v| v.to_string())),
        ("embed_dim", args.embed_dim.map(|v| v.to_string())),
        ("layers", args.layers.map(|v| v.to_string())),
        ("features", args.features.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("learning_rate", args.learning_rate.map(|v| v.to_string())),
        ("truth_labels", args.truth_labels.as_ref().map(|p| p.display().to_string())),
        ("truth_attractors", args.truth_attractors.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in settings {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    config.diffeo |= args.diffeo;
    config.baselines |= args.baselines;
    Ok(config)
}

fn init_threads() -> anyhow::Result<()> {
    let threads = match std::env::var("ATTRACTORSCOPE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .with_context(|| format!("ATTRACTORSCOPE_THREADS must be an integer, got `{v}`"))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("thread pool")?;
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match init_threads().and_then(|_| build_config(&args)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error [cli]: {e:#}");
            return ExitCode::from(2);
        }
    };
    let outcome = run_pipeline(&config);
    let manifest = match export_results(&outcome, &config.out) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error [cli]: {e}");
            return ExitCode::FAILURE;
        }
    };
    let r = &outcome.report;
    if let Some(e) = &outcome.error {
        eprintln!("error [{}]: {e}", e.module());
        eprintln!("partial results written to {}", config.out.display());
        return ExitCode::FAILURE;
    }
    println!("{}: Q = {}, M = {}", r.source, r.q, r.total_samples);
    for a in &r.attractors {
        match a.error {
            Some(e) => println!("  cluster {}: x* = {:?} ({}), error {e:.4}", a.cluster, a.original_point, a.method),
            None => println!("  cluster {}: x* = {:?} ({})", a.cluster, a.original_point, a.method),
        }
    }
    if let Some(acc) = r.accuracy {
        println!("  accuracy {acc:.4}");
    }
    for b in &r.baselines {
        println!("  baseline {}: accuracy {:?}", b.method, b.accuracy);
    }
    for d in &r.diffeo {
        println!("  diffeo cluster {}: loss ratio {:.4}", d.cluster, d.loss_ratio);
    }
    for w in &r.warnings {
        println!("  warning: {w}");
    }
    println!("{} files written to {}", manifest.files.len() + 1, config.out.display());
    ExitCode::SUCCESS
}
