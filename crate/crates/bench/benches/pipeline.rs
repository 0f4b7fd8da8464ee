use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

use attractorscope::diffeo::{CouplingStack, StackConfig};
use attractorscope::dsgraph::{build_theory_graph, connected_components, laplacian};
use attractorscope::spectral::{count_subdynamics, eigendecompose, eigendecompose_by_components, label_points};
use attractorscope::vkernel::build_adjacency;
use attractorscope::KernelParams;
use attractorscope_bench::heart_data;

fn adjacency(c: &mut Criterion) {
    let mut group = c.benchmark_group("adjacency");
    group.sample_size(10);
    for stride in [20, 10, 5] {
        let data = heart_data(stride);
        let params = KernelParams::defaults_for(&data).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(data.total_samples()), &data, |b, data| {
            b.iter(|| build_adjacency(black_box(data), &params).unwrap())
        });
    }
    group.finish();
}

fn eigensolver(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigensolver");
    group.sample_size(10);
    for k in [4, 8, 16] {
        let l = laplacian(&build_theory_graph(k, 10).unwrap());
        group.bench_with_input(BenchmarkId::new("theory", l.len()), &l, |b, l| {
            b.iter(|| eigendecompose(black_box(l)).unwrap())
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let data = heart_data(5);
    let params = KernelParams::defaults_for(&data).unwrap();
    let mut group = c.benchmark_group("clustering");
    group.sample_size(10);
    group.bench_function("heart", |b| {
        b.iter(|| {
            let g = build_adjacency(&data, &params).unwrap();
            let comps = connected_components(&g);
            let dec = eigendecompose_by_components(&laplacian(&g), &comps).unwrap();
            let q = count_subdynamics(&dec);
            label_points(&dec, q).unwrap()
        })
    });
    group.finish();
}

fn diffeo_gradient(c: &mut Criterion) {
    let stack = CouplingStack::new(2, &StackConfig::for_diameter(4.0, 0)).unwrap();
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = (0..100)
        .map(|i| {
            let a = i as f64 * 0.1;
            (DVector::from_vec(vec![a.cos(), a.sin()]), DVector::from_vec(vec![a, -a]))
        })
        .collect();
    let mut group = c.benchmark_group("diffeo");
    group.sample_size(10);
    group.bench_function("loss_gradient_100", |b| b.iter(|| stack.loss_gradient(black_box(&pairs))));
    group.finish();
}

criterion_group!(benches, adjacency, eigensolver, clustering, diffeo_gradient);
criterion_main!(benches);
