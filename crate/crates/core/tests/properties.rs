use std::f64::consts::PI;

use csqpe::bench::median;
use csqpe::estimator::{planned_ledger, EstimatorConfig, SampleSet};
use csqpe::fourier::{dirichlet, grid_decompose, ShiftedFourierOp};
use csqpe::hamiltonians::{alpha_weights, normalize_and_shift, DenseHamiltonian};
use csqpe::seed::Seed;
use csqpe::signal::{exact_signal_at, RuntimeLedger, TimeSeries};
use csqpe::solver::{solve_bpdn, BpdnProblem, SolveStatus, SolverOptions};
use csqpe::{Complex64, Spectrum};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn complex_vec(len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = Seed::new(seed).rng();
    (0..len).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn rows_for(n: usize, keep: f64, seed: u64) -> Vec<usize> {
    let mut rng = Seed::new(seed).rng();
    let rows: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < keep).collect();
    if rows.is_empty() {
        vec![0]
    } else {
        rows
    }
}

fn random_hermitian(dim: usize, seed: u64) -> DMatrix<Complex64> {
    let mut rng = Seed::new(seed).rng();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = Complex64::new(rng.random_range(-3.0..3.0), 0.0);
        for j in 0..i {
            let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(n in 2usize..300, nu in -0.5f64..0.5, seed in any::<u64>()) {
        let v = complex_vec(n, seed);
        let fv = ShiftedFourierOp::new(n, nu).unwrap().apply_complex(&v).unwrap();
        let expected = n as f64 * norm_sqr(&v);
        prop_assert!((norm_sqr(&fv) - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn adjoint_consistency(n in 2usize..200, nu in -0.5f64..0.5, keep in 0.02f64..1.0, seed in any::<u64>()) {
        let op = ShiftedFourierOp::with_rows(n, nu, rows_for(n, keep, seed)).unwrap();
        let v = complex_vec(n, seed ^ 1);
        let w = complex_vec(op.n_rows(), seed ^ 2);
        let lhs = dot(&op.apply_complex(&v).unwrap(), &w);
        let rhs = dot(&v, &op.adjoint(&w).unwrap());
        let scale = (norm_sqr(&v) * norm_sqr(&w)).sqrt() * (n as f64).sqrt();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn grid_decomposition_reconstructs(n in 2usize..200, nu in -0.5f64..0.5, seed in any::<u64>()) {
        let y = complex_vec(n, seed);
        let back = grid_decompose(&y, nu).unwrap().reconstruct().unwrap();
        for (a, b) in back.iter().zip(&y) {
            prop_assert!((a - b).norm() <= 1e-10);
        }
    }

    #[test]
    fn dirichlet_proof_bound(n in 2usize..400, nu in -0.5f64..0.5) {
        let d = dirichlet(n, nu);
        prop_assert!(d.abs() <= 1.0 + 1e-12);
        prop_assert!(1.0 - d * d <= PI * PI * nu * nu / 3.0 + 1e-12);
    }

    #[test]
    fn alpha_weights_are_a_distribution(alpha in 0.001f64..0.999, levels in 1usize..40) {
        let w = alpha_weights(alpha, levels).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn merging_degenerate_levels_keeps_the_signal(
        e in 0.8f64..2.3, p in 0.1f64..0.9, split in 0.0f64..1.0, time in 0.0f64..500.0
    ) {
        let full = Spectrum::new(vec![e, e, e + 0.2], vec![p * split, p * (1.0 - split), 1.0 - p]).unwrap();
        let merged = full.merged(1e-12);
        prop_assert!((exact_signal_at(&full, time) - exact_signal_at(&merged, time)).norm() <= 1e-12);
    }

    #[test]
    fn ledger_is_additive(a in 1usize..40, b in 1usize..40, shots in 1u64..200, tau in 0.1f64..2.0) {
        let n = a + b + 1;
        let mut first = TimeSeries::new(n, tau, shots);
        let mut second = TimeSeries::new(n, tau, shots);
        for t in 0..a {
            first.insert(t, Complex64::new(0.0, 0.0)).unwrap();
        }
        for t in a..a + b {
            second.insert(t, Complex64::new(0.0, 0.0)).unwrap();
        }
        let both = RuntimeLedger::combine(&[&first, &second]);
        let parts = RuntimeLedger::combine(&[&first]).t_total + RuntimeLedger::combine(&[&second]).t_total;
        prop_assert!((both.t_total - parts).abs() <= 1e-9 * parts.max(1.0));
        prop_assert_eq!(both.n_distinct_times, a + b);
    }

    #[test]
    fn sample_sets_are_sorted_and_in_range(n in 1usize..500, r in 0.01f64..1.0, seed in any::<u64>()) {
        let set = SampleSet::draw(n, r, Seed::new(seed)).unwrap();
        prop_assert!(!set.is_empty());
        prop_assert!(set.indices().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*set.indices().last().unwrap() < n);
    }

    #[test]
    fn planned_ledger_respects_horizon(n in 4usize..400, r in 0.02f64..1.0, tau in 0.1f64..2.0, seed in any::<u64>()) {
        let cfg = EstimatorConfig { n, r, tau, m_h_override: Some(10), ..EstimatorConfig::default() };
        let ledger = planned_ledger(&cfg, Seed::new(seed)).unwrap();
        prop_assert!(ledger.t_max <= (n - 1) as f64 * tau + 1e-12);
        prop_assert!(ledger.n_distinct_times <= n);
    }

    #[test]
    fn median_lies_between_extremes(values in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        let m = median(&values);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= m && m <= hi);
    }

    #[test]
    fn seed_children_are_stable(master in any::<u64>(), tag in any::<u64>()) {
        prop_assert_eq!(Seed::new(master).child(tag), Seed::new(master).child(tag));
        prop_assert_ne!(Seed::new(master).child(tag), Seed::new(master).child(tag.wrapping_add(1)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn eigenpairs_and_normalization(modes in 1u32..5, seed in any::<u64>()) {
        let dim = 1usize << modes;
        let h = DenseHamiltonian::from_matrix(random_hermitian(dim, seed)).unwrap();
        let eig = h.eigen();
        let norm = h.spectral_norm();
        for (k, &e) in eig.values.iter().enumerate() {
            let v = eig.vectors.column(k);
            let residual = (h.matrix() * v - v * Complex64::new(e, 0.0)).norm();
            prop_assert!(residual <= 1e-9 * norm.max(1.0));
        }
        let shifted = normalize_and_shift(&h).unwrap();
        let values = shifted.eigenvalues();
        prop_assert!(values.iter().all(|&e| (PI / 4.0 - 1e-10..=3.0 * PI / 4.0 + 1e-10).contains(&e)));
        let map = shifted.energy_map();
        for (a, b) in values.iter().zip(&eig.values) {
            prop_assert!((map.inverse(*a) - b).abs() <= 1e-9 * norm.max(1.0));
        }
    }

    #[test]
    fn optimal_solutions_are_feasible_and_deterministic(
        n in 8usize..96, keep in 0.2f64..0.6, nu in -0.5f64..0.5, sigma in 1e-6f64..0.05, seed in any::<u64>()
    ) {
        let rows = rows_for(n, keep, seed);
        let mut rng = Seed::new(seed).child(1).rng();
        let mut x = vec![0.0; n];
        for _ in 0..3 {
            x[rng.random_range(0..n)] = rng.random_range(-1.0..1.0);
        }
        let op = ShiftedFourierOp::with_rows(n, nu, rows).unwrap();
        let y = op.apply(&x).unwrap();
        let radius = (y.len() as f64).sqrt() * sigma;
        let p = BpdnProblem::new(op, y, radius).unwrap();
        let a = solve_bpdn(&p, &SolverOptions::default()).unwrap();
        if a.status == SolveStatus::Optimal {
            prop_assert!(a.residual_norm <= radius * (1.0 + 1e-6));
            prop_assert!(a.objective <= x.iter().map(|v| v.abs()).sum::<f64>() * (1.0 + 1e-6) + 1e-9);
        }
        prop_assert_eq!(a, solve_bpdn(&p, &SolverOptions::default()).unwrap());
    }
}
