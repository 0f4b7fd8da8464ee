use nalgebra::DVector;
use proptest::prelude::*;

use attractorscope::diffeo::{CouplingStack, StackConfig};
use attractorscope::dsgraph::{
    build_multi_theory_graph, component_labels, connected_components, laplacian, WeightedGraph,
};
use attractorscope::evalbench::best_permutation_accuracy;
use attractorscope::spectral::{count_subdynamics, eigendecompose, eigendecompose_by_components, label_points};
use attractorscope::vkernel::kernel;
use attractorscope::{KernelParams, StateSample};

fn sample() -> impl Strategy<Value = StateSample> {
    (prop::array::uniform2(-5.0f64..5.0), prop::array::uniform2(-3.0f64..3.0))
        .prop_map(|(x, v)| StateSample::new(x.to_vec(), v.to_vec()).unwrap())
}

fn random_graph() -> impl Strategy<Value = WeightedGraph> {
    (2usize..25).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..2 * n).prop_map(move |edges| {
            let edges: Vec<(usize, usize)> = edges.into_iter().filter(|(a, b)| a != b).collect();
            WeightedGraph::from_edges(n, &edges)
        })
    })
}

proptest! {
    #[test]
    fn kernel_symmetric_and_bounded(a in sample(), b in sample(), sigma in 0.05f64..2.0) {
        let params = KernelParams::new(sigma, 0.35, 1e-3, 0.5).unwrap();
        let kab = kernel(&a, &b, &params);
        prop_assert_eq!(kab, kernel(&b, &a, &params));
        prop_assert!((0.0..=1.0).contains(&kab));
    }

    #[test]
    fn laplacian_rows_sum_to_zero(g in random_graph()) {
        let l = laplacian(&g);
        for i in 0..l.len() {
            prop_assert_eq!(l.entries.row(i).sum(), 0.0);
        }
        let dec = eigendecompose(&l).unwrap();
        prop_assert!(dec.eigenvalues.iter().all(|&v| v > -1e-9));
        prop_assert!(dec.max_residual(&l) < 1e-9);
    }

    #[test]
    fn zero_multiplicity_counts_components(g in random_graph()) {
        let comps = connected_components(&g);
        let l = laplacian(&g);
        let dec = eigendecompose_by_components(&l, &comps).unwrap();
        prop_assert_eq!(count_subdynamics(&dec), comps.len());
        let global = eigendecompose(&l).unwrap();
        for (a, b) in dec.eigenvalues.iter().zip(&global.eigenvalues) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn eigenvector_labels_match_components(q in 1usize..4, k in 3usize..6, n in 3usize..7) {
        let g = build_multi_theory_graph(q, k, n).unwrap();
        let comps = connected_components(&g);
        let dec = eigendecompose_by_components(&laplacian(&g), &comps).unwrap();
        let labels = label_points(&dec, q).unwrap();
        let truth = component_labels(&comps, g.len());
        prop_assert_eq!(best_permutation_accuracy(&labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_ignores_label_names(labels in prop::collection::vec(0usize..3, 1..40), shift in 1usize..3) {
        let renamed: Vec<usize> = labels.iter().map(|l| (l + shift) % 3).collect();
        prop_assert_eq!(best_permutation_accuracy(&renamed, &labels).unwrap(), 1.0);
    }

    #[test]
    fn stack_inverts_forward(seed in 0u64..50, x in prop::array::uniform3(-3.0f64..3.0), w in -0.2f64..0.2) {
        let mut stack = CouplingStack::new(3, &StackConfig { layers: 4, features: 16, bandwidth: 1.0, seed }).unwrap();
        for (i, v) in stack.weights_mut().into_iter().enumerate() {
            *v = w * ((i % 7) as f64 - 3.0) / 3.0;
        }
        let x = DVector::from_row_slice(&x);
        let back = stack.inverse(&stack.forward(&x).unwrap()).unwrap();
        prop_assert!((back - &x).norm() < 1e-10);
        prop_assert!(stack.jacobian(&x).unwrap().determinant() > 0.0);
    }
}
