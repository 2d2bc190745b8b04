use ftc_core::ftc::{
    self, dyadic_path_sequence, hypercube_sequence, laplacian_factorization, laplacian_factorization_with,
    perturb_to_target, truncate, validate_mixing, FactorOrdering, MatrixSequence, Multiplicity,
};
use ftc_core::graph::{metropolis_weights, Graph, TopologyKind};
use nalgebra::DMatrix;
use proptest::prelude::*;

type Dense = Vec<Vec<f64>>;

fn dense(m: &DMatrix<f64>) -> Dense {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

fn naive_mul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// A_τ ⋯ A_1 by explicit triple loops.
fn naive_product(seq: &[Dense]) -> Dense {
    let mut p = seq[0].clone();
    for a in &seq[1..] {
        p = naive_mul(a, &p);
    }
    p
}

fn minus_average(p: &Dense) -> Dense {
    let k = p.len() as f64;
    p.iter().map(|row| row.iter().map(|v| v - 1.0 / k).collect()).collect()
}

fn frobenius(m: &Dense) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on BᵀB.
fn power_norm(b: &Dense) -> f64 {
    let n = b.len();
    let bt: Dense = (0..n).map(|i| (0..n).map(|j| b[j][i]).collect()).collect();
    let btb = naive_mul(&bt, b);
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let y: Vec<f64> = (0..n).map(|i| (0..n).map(|j| btb[i][j] * x[j]).sum()).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        x = y.into_iter().map(|v| v / norm).collect();
    }
    lambda.sqrt()
}

fn matrices(seq: &MatrixSequence) -> Vec<Dense> {
    seq.matrices().iter().map(|m| dense(m.entries())).collect()
}

fn path(k: usize) -> Graph {
    Graph::build(TopologyKind::Path, k).unwrap()
}

#[test]
fn hypercube_eight_is_exact_in_every_order() {
    let g = Graph::build(TopologyKind::Hypercube, 8).unwrap();
    let s = hypercube_sequence(&g).unwrap();
    assert_eq!(s.len(), 3);
    assert!(s.epsilon() <= 1e-12);
    let m = matrices(&s);
    for order in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
        let picked: Vec<Dense> = order.iter().map(|&i| m[i].clone()).collect();
        assert!(frobenius(&minus_average(&naive_product(&picked))) <= 1e-12);
        assert!(s.reordered(&order).unwrap().epsilon() <= 1e-12);
    }
    for a in &m {
        assert!(a.iter().flatten().all(|&v| v == 0.0 || v == 0.5));
    }
}

#[test]
fn laplacian_path_eight_product_matches_naive_oracle() {
    let s = laplacian_factorization(&path(8), FactorOrdering::Descending).unwrap();
    assert_eq!(s.len(), 7);
    assert!(s.epsilon() <= 1e-10);
    let naive = naive_product(&matrices(&s));
    let lib = dense(&s.product());
    for (a, b) in naive.iter().flatten().zip(lib.iter().flatten()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn laplacian_factor_radii_follow_eigenvalue_ratios() {
    // path Laplacian eigenvalues are 2 - 2cos(πj/K)
    let k = 8;
    let lambdas: Vec<f64> = (1..k).map(|j| 2.0 - 2.0 * (std::f64::consts::PI * j as f64 / k as f64).cos()).collect();
    let s = laplacian_factorization(&path(k), FactorOrdering::Descending).unwrap();
    let reports = validate_mixing(&s, 1e-10);
    let mut expected: Vec<f64> = lambdas
        .iter()
        .map(|lj| std::iter::once(0.0).chain(lambdas.iter().copied()).map(|lm| (1.0 - lm / lj).abs()).fold(0.0, f64::max))
        .collect();
    expected.sort_by(|a, b| b.total_cmp(a));
    let mut got: Vec<f64> = reports.iter().map(|r| r.spectral_radius).collect();
    got.sort_by(|a, b| b.total_cmp(a));
    for (e, g) in expected.iter().zip(&got) {
        assert!((e - g).abs() <= 1e-9 * e.max(1.0));
    }
    assert!(reports.iter().any(|r| !r.pass));
}

#[test]
fn ring_four_uses_repeated_eigenvalue_twice() {
    let g = Graph::build(TopologyKind::Ring, 4).unwrap();
    let s = laplacian_factorization_with(&g, FactorOrdering::Descending, Multiplicity::PerInstance).unwrap();
    assert_eq!(s.len(), 3);
    assert!(frobenius(&minus_average(&naive_product(&matrices(&s)))) <= 1e-10);
}

#[test]
fn orderings_all_exact() {
    for ordering in [FactorOrdering::Ascending, FactorOrdering::Descending, FactorOrdering::Leja] {
        let s = laplacian_factorization(&path(6), ordering).unwrap();
        assert!(s.epsilon() <= 1e-10, "{ordering:?}");
    }
}

#[test]
fn disconnected_graph_is_rejected() {
    let g = Graph::custom(4, &[(0, 1), (2, 3)]);
    assert!(g.is_err() || laplacian_factorization(&g.unwrap(), FactorOrdering::Descending).is_err());
}

#[test]
fn perturbation_reaches_targets_on_path_eight() {
    for base in [
        laplacian_factorization(&path(8), FactorOrdering::Descending).unwrap(),
        dyadic_path_sequence(&path(8)).unwrap(),
    ] {
        for target in [0.3, 0.6] {
            let p = perturb_to_target(&base, target, 1, 0.01).unwrap();
            assert!((p.epsilon() - target).abs() <= 0.01);
            let oracle = power_norm(&minus_average(&naive_product(&matrices(&p))));
            assert!((oracle - p.epsilon()).abs() <= 1e-9);
            for (a, b) in p.matrices().iter().zip(base.matrices()) {
                let (a, b) = (a.entries(), b.entries());
                for r in 0..8 {
                    let row: f64 = (0..8).map(|c| a[(r, c)]).sum();
                    assert!((row - 1.0).abs() <= 1e-12);
                    for c in 0..8 {
                        assert_eq!(a[(r, c)], a[(c, r)]);
                        if r != c {
                            assert_eq!(a[(r, c)] == 0.0, b[(r, c)] == 0.0);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn truncated_prefix_matches_brute_force() {
    let s = dyadic_path_sequence(&path(8)).unwrap();
    for t in 1..=7 {
        let tr = truncate(&s, t).unwrap();
        let oracle = power_norm(&minus_average(&naive_product(&matrices(&s)[..t])));
        assert!((tr.epsilon() - oracle).abs() <= 1e-9, "tau'={t}");
    }
    assert!(truncate(&s, 7).unwrap().epsilon() <= 1e-10);
}

#[test]
fn prefix_search_never_worse_than_plain_prefix() {
    let s = laplacian_factorization(&path(8), FactorOrdering::Descending).unwrap();
    let best = ftc::minimize_prefix_epsilon(&s, 3).unwrap();
    assert_eq!(best.len(), 7);
    assert!(best.epsilon() <= 1e-10);
    assert!(truncate(&best, 3).unwrap().epsilon() <= truncate(&s, 3).unwrap().epsilon() + 1e-15);
}

#[test]
fn repeated_periods_stay_within_growth_bound() {
    let base = dyadic_path_sequence(&path(8)).unwrap();
    let s = perturb_to_target(&base, 0.3, 2, 0.01).unwrap();
    let p = naive_product(&matrices(&s));
    let eps = s.epsilon();
    let mut pm = p.clone();
    for m in 2..=3 {
        pm = naive_mul(&p, &pm);
        let dev = power_norm(&minus_average(&pm));
        assert!(dev <= m as f64 * eps * (1.0 + eps).powi(m - 1) + 1e-12);
    }
}

#[test]
fn metropolis_single_matrix_passes_checks() {
    let g = path(8);
    let s = MatrixSequence::new(vec![metropolis_weights(&g).unwrap()]).unwrap();
    assert!(validate_mixing(&s, 1e-12).iter().all(|r| r.pass));
}

#[test]
fn hypercube_matrices_pass_checks() {
    let s = hypercube_sequence(&Graph::build(TopologyKind::Hypercube, 8).unwrap()).unwrap();
    assert!(validate_mixing(&s, 1e-12).iter().all(|r| r.pass));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn perturbation_invariants(seed in 0u64..1000, target in 0.1f64..0.7) {
        let base = dyadic_path_sequence(&path(4)).unwrap();
        let p = perturb_to_target(&base, target, seed, 0.005).unwrap();
        prop_assert!((p.epsilon() - target).abs() <= 0.005);
        for r in validate_mixing(&p, 1e-12) {
            prop_assert!(r.symmetry_defect <= 1e-12);
            prop_assert!(r.row_sum_defect <= 1e-12);
        }
        let back = MatrixSequence::from_text(&p.to_text()).unwrap();
        prop_assert_eq!(back.matrices(), p.matrices());
    }
}
