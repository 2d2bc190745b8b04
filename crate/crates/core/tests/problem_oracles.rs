use ftc_core::linalg::symmetric_eigenvalues;
use ftc_core::problem::{LeastSquaresProblem, PROBE_COUNT};
use ftc_core::rng::{seeded, GaussianStream};
use nalgebra::DVector;

fn random_point(g: &mut GaussianStream, m: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(m, |_, _| scale * g.next_standard())
}

#[test]
fn full_gradient_matches_central_differences() {
    let p = LeastSquaresProblem::generate(4, 20, 30, 0.1, 17).unwrap();
    let mut g = GaussianStream::new(99);
    let h = 1e-5;
    for trial in 0..50 {
        let k = trial % 4;
        let w = random_point(&mut g, 20, 1.0);
        let grad = p.full_gradient(k, &w).unwrap();
        let fd = DVector::from_fn(20, |j, _| {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[j] += h;
            dn[j] -= h;
            (p.objective(k, &up).unwrap() - p.objective(k, &dn).unwrap()) / (2.0 * h)
        });
        let rel = (&grad - &fd).norm() / grad.norm().max(1e-12);
        assert!(rel <= 1e-6, "trial {trial}: relative error {rel:e}");
    }
}

#[test]
fn sample_gradients_average_to_full_gradient_exactly() {
    let p = LeastSquaresProblem::generate(3, 5, 30, 0.1, 4).unwrap();
    let mut g = GaussianStream::new(5);
    for k in 0..3 {
        let w = random_point(&mut g, 5, 2.0);
        let mut mean = DVector::zeros(5);
        for n in 0..30 {
            mean += p.sample_gradient(k, n, &w).unwrap();
        }
        mean /= 30.0;
        let full = p.full_gradient(k, &w).unwrap();
        assert!((mean - &full).amax() <= 1e-13 * full.amax().max(1.0));
    }
}

#[test]
fn monte_carlo_mean_within_three_standard_errors() {
    let p = LeastSquaresProblem::generate(2, 4, 30, 0.1, 8).unwrap();
    let w = DVector::from_vec(vec![0.5, -1.0, 0.25, 2.0]);
    let full = p.full_gradient(1, &w).unwrap();
    let mut rng = seeded(123);
    let draws = 100_000;
    let mut sum = DVector::zeros(4);
    let mut sq = DVector::zeros(4);
    for _ in 0..draws {
        let s = p.stochastic_gradient(1, &w, &mut rng).unwrap();
        sq += s.component_mul(&s);
        sum += s;
    }
    let n = draws as f64;
    let mean = &sum / n;
    for j in 0..4 {
        let var = sq[j] / n - mean[j] * mean[j];
        let se = (var / n).sqrt();
        assert!((mean[j] - full[j]).abs() <= 3.0 * se, "coordinate {j}");
    }
}

#[test]
fn noise_variance_at_local_optimum_matches_enumeration() {
    let p = LeastSquaresProblem::generate(3, 6, 30, 0.1, 21).unwrap();
    let o = p.optima_and_constants().unwrap();
    for k in 0..3 {
        let w = &o.local[k];
        let full = p.full_gradient(k, w).unwrap();
        let mut second = 0.0;
        for n in 0..30 {
            second += p.sample_gradient(k, n, w).unwrap().norm_squared();
        }
        let expected = second / 30.0 - full.norm_squared();
        assert!((o.sigma_sq_local[k] - expected).abs() <= 1e-12 * expected.max(1.0));
        // empirical variance of the sampled gradient converges to the same value
        let mut rng = seeded(k as u64);
        let draws = 200_000;
        let emp: f64 = (0..draws)
            .map(|_| (p.stochastic_gradient(k, w, &mut rng).unwrap() - &full).norm_squared())
            .sum::<f64>()
            / draws as f64;
        assert!((emp - expected).abs() <= 0.05 * expected);
    }
}

#[test]
fn noise_bound_holds_at_every_probe() {
    let p = LeastSquaresProblem::generate(4, 20, 30, 0.1, 2).unwrap();
    let o = p.optima_and_constants().unwrap();
    for k in 0..4 {
        let probes = p.probe_points(k, &o.local[k]);
        assert_eq!(probes.len(), PROBE_COUNT);
        for w in probes {
            let lhs = p.noise_second_moment(k, &w).unwrap();
            let rhs = o.beta_sq_local[k] * (&o.local[k] - &w).norm_squared() + o.sigma_sq_local[k];
            assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
        }
    }
}

#[test]
fn noiseless_data_recovers_generator() {
    let p = LeastSquaresProblem::generate(4, 5, 30, 0.0, 3).unwrap();
    let o = p.optima_and_constants().unwrap();
    assert!((&o.global - p.w_true()).amax() <= 1e-8);
    assert!(o.constants.zeta_sq <= 1e-12);
}

#[test]
fn generated_problem_optimum_has_zero_gradient() {
    let p = LeastSquaresProblem::generate(16, 20, 30, 0.1, 1).unwrap();
    let o = p.optima_and_constants().unwrap();
    let mut total = DVector::zeros(20);
    for k in 0..16 {
        total += p.full_gradient(k, &o.global).unwrap();
        assert!(p.full_gradient(k, &o.local[k]).unwrap().norm() <= 1e-10);
    }
    assert!(total.norm() / 16.0 <= 1e-10);
    let c = &o.constants;
    assert!(c.nu > 0.0 && c.nu <= c.delta);
    assert!(c.sigma_sq >= 0.0 && c.beta_sq >= 0.0 && c.zeta_sq >= 0.0);
    let eig = symmetric_eigenvalues(&p.aggregate_hessian());
    assert!(eig[0] >= c.nu - 1e-12 && eig[19] <= c.delta + 1e-12);
}

#[test]
fn generation_is_deterministic() {
    let a = LeastSquaresProblem::generate(8, 20, 30, 0.1, 77).unwrap();
    let b = LeastSquaresProblem::generate(8, 20, 30, 0.1, 77).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_ne!(a, LeastSquaresProblem::generate(8, 20, 30, 0.1, 78).unwrap());
}

#[test]
fn labels_follow_linear_model() {
    let p = LeastSquaresProblem::generate(2, 3, 4, 0.1, 6).unwrap();
    for k in 0..2 {
        for n in 0..4 {
            let dot: f64 = p.feature(k, n).iter().zip(p.w_true().iter()).map(|(a, b)| a * b).sum();
            assert!((p.label(k, n) - dot - p.label_noise(k, n)).abs() <= 1e-15);
        }
    }
}

#[test]
fn underdetermined_agent_uses_minimum_norm_solution() {
    // N < M makes every local Hessian singular while the aggregate stays definite
    let p = LeastSquaresProblem::generate(8, 6, 3, 0.1, 12).unwrap();
    let o = p.optima_and_constants().unwrap();
    assert!(o.local_singular.iter().all(|&s| s));
    for k in 0..8 {
        assert!(p.full_gradient(k, &o.local[k]).unwrap().norm() <= 1e-9);
    }
}

#[test]
fn singular_aggregate_is_an_error() {
    let p = LeastSquaresProblem::generate(1, 4, 2, 0.1, 1).unwrap();
    assert!(p.optima_and_constants().is_err());
}
