use std::sync::OnceLock;

use nalgebra::DMatrix;
use proptest::prelude::*;
use topolearn::fixtures::make_fixture;
use topolearn::glasso::{
    empirical_covariance, glasso_sign_pruned_topology, glasso_topology, graphical_lasso, kkt_residual, GlassoOptions,
};
use topolearn::panel::detrend;
use topolearn::sweep::correlation_matrix;

const ACCEPTANCE: [&str; 5] = ["consensus-5", "consensus-5-ar1", "rc-5zone", "swing-mesh-10", "swing-mesh-10-white"];

/// Correlation matrices of short simulated panels of every acceptance fixture.
fn correlations() -> &'static Vec<(&'static str, DMatrix<f64>)> {
    static S: OnceLock<Vec<(&'static str, DMatrix<f64>)>> = OnceLock::new();
    S.get_or_init(|| {
        ACCEPTANCE
            .iter()
            .map(|&name| {
                let p = make_fixture(name).unwrap().simulate(20_000, 9).unwrap();
                (name, correlation_matrix(&empirical_covariance(&detrend(&p).unwrap()).unwrap()).unwrap())
            })
            .collect()
    })
}

/// Vertex partition of the graph with an edge wherever `linked(i, j)`.
fn components(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut moved = false;
        for i in 0..n {
            for j in 0..n {
                if i != j && linked(i, j) && label[j] < label[i] {
                    label[i] = label[j];
                    moved = true;
                }
            }
        }
        if !moved {
            return label;
        }
    }
}

// Zero counts alone are not monotone along the path: consensus-5 has six
// zero entries at rho 0.01 and two at 0.03. The connected components of the
// estimated graph are, and they match those of the thresholded covariance.
#[test]
fn components_match_thresholded_covariance_and_merge_as_rho_falls() {
    for (name, s) in correlations() {
        let n = s.nrows();
        let mut off: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| s[(i, j)].abs()).collect();
        off.sort_by(f64::total_cmp);
        let mut last: Option<Vec<usize>> = None;
        for w in off.windows(2).rev().step_by(2) {
            let rho = 0.5 * (w[0] + w[1]);
            let est = graphical_lasso(s, rho, &GlassoOptions::default()).unwrap();
            let fitted = components(n, |i, j| est.theta[(i, j)] != 0.0);
            assert_eq!(fitted, components(n, |i, j| s[(i, j)].abs() > rho), "{name} rho {rho}");
            if let Some(coarse) = &last {
                for i in 0..n {
                    for j in 0..n {
                        assert!(coarse[i] != coarse[j] || fitted[i] == fitted[j], "{name} rho {rho}");
                    }
                }
            }
            last = Some(fitted);
        }
        let est = graphical_lasso(s, off[off.len() - 1] * 1.001, &GlassoOptions::default()).unwrap();
        assert_eq!(components(n, |i, j| est.theta[(i, j)] != 0.0), (0..n).collect::<Vec<_>>(), "{name}");
    }
}

#[test]
fn dual_objective_never_decreases_and_kkt_holds() {
    for (name, s) in correlations() {
        for rho in [1e-3, 0.05, 0.3] {
            let est = graphical_lasso(s, rho, &GlassoOptions::default()).unwrap();
            assert!(est.converged);
            for w in est.dual_objective.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0), "{name} rho {rho}: {} -> {}", w[0], w[1]);
            }
            assert!(kkt_residual(s, &est.theta, rho, false).unwrap() <= 1e-4, "{name} rho {rho}");
        }
    }
}

#[test]
fn zero_penalty_inverts_fixture_correlations() {
    for (name, s) in correlations() {
        let est = graphical_lasso(s, 0.0, &GlassoOptions::default()).unwrap();
        let gap = (&est.theta * s - DMatrix::identity(s.nrows(), s.nrows())).abs().max();
        assert!(gap <= 1e-5, "{name}: {gap}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sign_pruned_edges_are_glasso_edges(idx in 0usize..5, rho in 0.0f64..0.5, eps in 1e-6f64..0.5) {
        let (_, s) = &correlations()[idx];
        let est = graphical_lasso(s, rho, &GlassoOptions::default()).unwrap();
        prop_assert!(glasso_sign_pruned_topology(&est, eps).is_subset(&glasso_topology(&est, eps)));
    }

    #[test]
    fn identity_covariance_is_a_fixed_point(n in 1usize..8, rho in 0.0f64..2.0) {
        let est = graphical_lasso(&DMatrix::identity(n, n), rho, &GlassoOptions::default()).unwrap();
        prop_assert!((est.theta - DMatrix::identity(n, n)).abs().max() <= 1e-12);
    }

    #[test]
    fn two_by_two_is_diagonal_past_the_off_diagonal(s12 in -0.9f64..0.9, extra in 0.0f64..1.0) {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, s12, s12, 1.0]);
        let est = graphical_lasso(&s, s12.abs() + extra, &GlassoOptions::default()).unwrap();
        prop_assert_eq!(est.theta[(0, 1)], 0.0);
        prop_assert!((est.theta[(0, 0)] - 1.0).abs() <= 1e-9);
    }
}
