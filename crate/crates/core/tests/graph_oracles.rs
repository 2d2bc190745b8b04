use std::f64::consts::PI;

use ftc_core::graph::{metropolis_weights, second_largest_eigenvalue, CombinationMatrix, Graph, TopologyKind};
use ftc_core::linalg::symmetric_eigenvalues;

/// Eigenvalues of the path Laplacian: 2 − 2cos(πj/K).
fn path_laplacian_spectrum(k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|j| 2.0 - 2.0 * (PI * j as f64 / k as f64).cos()).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn path_laplacian_spectrum_matches_closed_form() {
    for k in [2, 5, 8, 16] {
        let g = Graph::build(TopologyKind::Path, k).unwrap();
        let got = symmetric_eigenvalues(&g.laplacian());
        for (a, b) in got.iter().zip(path_laplacian_spectrum(k)) {
            assert!((a - b).abs() <= 1e-12, "K={k}");
        }
    }
}

#[test]
fn laplacian_rows_sum_to_zero() {
    for kind in [TopologyKind::Path, TopologyKind::Ring, TopologyKind::Complete, TopologyKind::Hypercube] {
        let g = Graph::build(kind, 16).unwrap();
        let l = g.laplacian();
        for r in 0..16 {
            assert!(l.row(r).sum().abs() <= 1e-15);
        }
    }
}

#[test]
fn metropolis_path_mixing_rate_matches_closed_form() {
    // every path edge gets weight 1/3, so A = I − L/3
    for k in [4, 8, 16, 32] {
        let g = Graph::build(TopologyKind::Path, k).unwrap();
        let a = metropolis_weights(&g).unwrap();
        let expected = 1.0 - (2.0 - 2.0 * (PI / k as f64).cos()) / 3.0;
        let got = second_largest_eigenvalue(a.entries()).unwrap();
        assert!((got - expected).abs() <= 1e-12, "K={k}: {got}");
    }
    let eight = second_largest_eigenvalue(metropolis_weights(&Graph::build(TopologyKind::Path, 8).unwrap()).unwrap().entries());
    assert!((eight.unwrap() - 0.95).abs() <= 0.01);
}

#[test]
fn metropolis_weights_are_valid_for_all_builtin_topologies() {
    for k in 1..=64usize {
        let mut kinds = vec![TopologyKind::Path, TopologyKind::Complete];
        if k >= 3 {
            kinds.push(TopologyKind::Ring);
        }
        if k >= 2 && k.is_power_of_two() {
            kinds.push(TopologyKind::Hypercube);
        }
        for kind in kinds {
            let g = Graph::build(kind, k).unwrap();
            let a = metropolis_weights(&g).unwrap();
            let m = a.entries();
            assert!(a.respects(&g));
            for r in 0..k {
                assert!((m.row(r).sum() - 1.0).abs() <= 1e-12, "{kind:?} K={k}");
                for c in 0..k {
                    assert!((m[(r, c)] - m[(c, r)]).abs() <= 1e-12);
                }
            }
            assert!(a.spectral_radius() <= 1.0 + 1e-12);
            let l2 = second_largest_eigenvalue(m).unwrap();
            assert!((0.0..=1.0 + 1e-10).contains(&l2), "{kind:?} K={k}: {l2}");
        }
    }
}

#[test]
fn averaging_and_identity_extremes() {
    for k in [2, 7, 16] {
        assert!(second_largest_eigenvalue(CombinationMatrix::averaging(k).entries()).unwrap() <= 1e-12);
        assert!((second_largest_eigenvalue(CombinationMatrix::identity(k).entries()).unwrap() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn edge_list_round_trip_preserves_structure() {
    let g = Graph::build(TopologyKind::Hypercube, 16).unwrap();
    let back = Graph::from_edge_list(&g.to_edge_list()).unwrap();
    assert_eq!(back.laplacian(), g.laplacian());
    assert_eq!(back.diameter(), 4);
}
