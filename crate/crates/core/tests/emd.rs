mod support;

use foldkit_core::analysis::{emd, emd_with_costs, uniform_weights};
use foldkit_core::Matrix;
use support::{euclidean_costs, lp_transport_cost, TestRng};

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn random_points(rng: &mut TestRng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| rng.vec(d, -2.0, 2.0)).collect()
}

#[test]
fn oracle_closed_form_cases() {
    let two = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
    let one = vec![vec![0.0, 0.0]];
    let c = lp_transport_cost(&euclidean_costs(&two, &one), &[0.5, 0.5], &[1.0]);
    assert!((c - 0.5).abs() < 1e-12, "{c}");

    let three = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 0.0]];
    let pair = vec![vec![1.0, 0.0], vec![3.0, 0.0]];
    let c = lp_transport_cost(
        &euclidean_costs(&three, &pair),
        &uniform_weights(3),
        &[0.5, 0.5],
    );
    assert!((c - 1.0).abs() < 1e-12, "{c}");
}

#[test]
fn solver_closed_form_cases() {
    let plan = emd(
        &to_matrix(&[vec![0.0, 0.0], vec![1.0, 0.0]]),
        &to_matrix(&[vec![0.0, 0.0]]),
        None,
        None,
    )
    .unwrap();
    assert!((plan.cost - 0.5).abs() < 1e-12);
    let plan = emd(
        &to_matrix(&[vec![0.0, 0.0], vec![2.0, 0.0], vec![4.0, 0.0]]),
        &to_matrix(&[vec![1.0, 0.0], vec![3.0, 0.0]]),
        None,
        None,
    )
    .unwrap();
    assert!((plan.cost - 1.0).abs() < 1e-12);
}

#[test]
fn matches_lp_oracle_on_random_instances() {
    let mut rng = TestRng::new(2024);
    for case in 0..300 {
        let n = 1 + rng.below(6);
        let k = 1 + rng.below(6);
        let d = 1 + rng.below(3);
        let src = random_points(&mut rng, n, d);
        let dst = random_points(&mut rng, k, d);
        let (a, b) = if case % 3 == 0 {
            (uniform_weights(n), uniform_weights(k))
        } else {
            (rng.simplex(n), rng.simplex(k))
        };
        let expected = lp_transport_cost(&euclidean_costs(&src, &dst), &a, &b);
        let plan = emd(&to_matrix(&src), &to_matrix(&dst), Some(&a), Some(&b)).unwrap();
        assert!(
            (plan.cost - expected).abs() <= 1e-8,
            "case {case}: solver {} vs oracle {expected}",
            plan.cost
        );
    }
}

#[test]
fn degenerate_integer_costs_match_oracle() {
    // Many ties in costs and weights exercise the degenerate pivot path.
    let mut rng = TestRng::new(77);
    for case in 0..200 {
        let n = 2 + rng.below(5);
        let k = 2 + rng.below(5);
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.below(3) as f64).collect())
            .collect();
        let (a, b) = (uniform_weights(n), uniform_weights(k));
        let expected = lp_transport_cost(&cost, &a, &b);
        let plan = emd_with_costs(&to_matrix(&cost), &a, &b).unwrap();
        assert!(
            (plan.cost - expected).abs() <= 1e-8,
            "case {case}: {} vs {expected}",
            plan.cost
        );
    }
}

#[test]
fn plan_marginals_and_cost_recompute() {
    let mut rng = TestRng::new(5);
    for _ in 0..100 {
        let n = 1 + rng.below(12);
        let k = 1 + rng.below(12);
        let src = random_points(&mut rng, n, 3);
        let dst = random_points(&mut rng, k, 3);
        let (a, b) = (rng.simplex(n), rng.simplex(k));
        let plan = emd(&to_matrix(&src), &to_matrix(&dst), Some(&a), Some(&b)).unwrap();
        for (s, w) in plan.row_sums().iter().zip(&a) {
            assert!((s - w).abs() <= 1e-9);
        }
        for (s, w) in plan.col_sums().iter().zip(&b) {
            assert!((s - w).abs() <= 1e-9);
        }
        assert!(plan.gamma.data().iter().all(|g| *g >= -1e-12));
        let costs = euclidean_costs(&src, &dst);
        let recomputed: f64 = (0..n)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| plan.gamma.get(i, j) * costs[i][j])
            .sum();
        assert!((recomputed - plan.cost).abs() <= 1e-9);
    }
}

#[test]
fn metric_axioms_uniform_weights() {
    let mut rng = TestRng::new(99);
    let d = |p: &Vec<Vec<f64>>, q: &Vec<Vec<f64>>| {
        emd(&to_matrix(p), &to_matrix(q), None, None).unwrap().cost
    };
    for _ in 0..100 {
        let m = 1 + rng.below(6);
        let p = random_points(&mut rng, m, 2);
        let m = 1 + rng.below(6);
        let q = random_points(&mut rng, m, 2);
        let m = 1 + rng.below(6);
        let r = random_points(&mut rng, m, 2);
        assert!(d(&p, &p).abs() <= 1e-12);
        assert!((d(&p, &q) - d(&q, &p)).abs() <= 1e-9);
        assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-9);
    }
}

#[test]
fn deterministic_plan() {
    let mut rng = TestRng::new(3);
    let src = to_matrix(&random_points(&mut rng, 40, 4));
    let dst = to_matrix(&random_points(&mut rng, 25, 4));
    let a = emd(&src, &dst, None, None).unwrap();
    let b = emd(&src, &dst, None, None).unwrap();
    assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    assert_eq!(a.gamma, b.gamma);
}

#[test]
fn larger_instance_respects_marginals() {
    let mut rng = TestRng::new(12);
    let src = to_matrix(&random_points(&mut rng, 196, 8));
    let dst = to_matrix(&random_points(&mut rng, 98, 8));
    let plan = emd(&src, &dst, None, None).unwrap();
    let worst_row = plan
        .row_sums()
        .iter()
        .map(|s| (s - 1.0 / 196.0).abs())
        .fold(0.0, f64::max);
    let worst_col = plan
        .col_sums()
        .iter()
        .map(|s| (s - 1.0 / 98.0).abs())
        .fold(0.0, f64::max);
    assert!(worst_row <= 1e-9 && worst_col <= 1e-9);
}
