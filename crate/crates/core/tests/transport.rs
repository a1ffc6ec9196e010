mod common;

use common::*;
use conc_lab::costs::{CostKind, CostSpec};
use conc_lab::measures::{DiscreteMeasure, EmpiricalMeasure};
use conc_lab::rng::StreamId;
use conc_lab::transport::{solve_assignment, solve_general, solve_weights, t_cost, w_p, DEFAULT_SIZE_CAP};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn oracles_agree_with_each_other() {
    let mut rng = StreamId::new(7, 0).rng();
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let c: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect();
        let a = brute_force_assignment(n, &c);
        let b = ssp_assignment(n, &c);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn assignment_matches_brute_force() {
    let mut rng = StreamId::new(8, 0).rng();
    for case in 0..60 {
        let n = 1 + case % 7;
        let d = 1 + case % 3;
        let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cost = [CostKind::Quadratic, CostKind::Alpha { p: 1.3 }, CostKind::Sg][case % 3];
        let plan =
            solve_assignment(&EmpiricalMeasure::new(d, xs.clone()).unwrap(), &EmpiricalMeasure::new(d, ys.clone()).unwrap(), &cost)
                .unwrap();
        let oracle = brute_force_assignment(n, &cost_matrix(&xs, &ys, d, &cost)) / n as f64;
        assert!((plan.total_cost - oracle).abs() <= 1e-10 * oracle.max(1.0));
    }
}

#[test]
fn general_matches_atom_splitting() {
    let mut rng = StreamId::new(9, 0).rng();
    for case in 0..40 {
        let d = 1 + case % 2;
        let (da, db) = (rng.random_range(4..=6), rng.random_range(4..=6));
        let (ka, kb) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let (a, ap) = random_rational_measure(ka, d, da, &mut rng);
        let (b, bp) = random_rational_measure(kb, d, db, &mut rng);
        let cost = [CostKind::Quadratic, CostKind::Power { p: 1.0 }, CostKind::Alpha { p: 1.5 }][case % 3];
        let direct = t_cost(&a, &b, &cost).unwrap();
        let oracle = atom_splitting_cost(&a, &ap, da, &b, &bp, db, &cost);
        assert!((direct - oracle).abs() <= 1e-10 * oracle.max(1.0), "case {case}: {direct} vs {oracle}");
    }
}

#[test]
fn zero_weight_atoms_are_kept() {
    let coords = [0.0, 1.0, 2.0];
    let plan = solve_weights(&coords, &[0.5, 0.0, 0.5], &coords, &[0.0, 1.0, 0.0], 1, &CostKind::Quadratic, DEFAULT_SIZE_CAP)
        .unwrap();
    assert!((plan.total_cost - 1.0).abs() < 1e-15);
    assert_eq!(plan.row_sums().len(), 3);
}

#[test]
fn two_atom_example() {
    let a = DiscreteMeasure::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
    let b = DiscreteMeasure::dirac(&[0.5]).unwrap();
    assert!((t_cost(&a, &b, &CostKind::Quadratic).unwrap() - 0.25).abs() < 1e-15);
    let c = DiscreteMeasure::from_flat(1, vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
    assert!((t_cost(&a, &c, &CostKind::Quadratic).unwrap() - 0.5).abs() < 1e-15);
}

fn measure_strategy(max_atoms: usize, dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((prop::collection::vec(-3.0f64..3.0, dim), 0.01f64..1.0), 1..=max_atoms).prop_map(move |atoms| {
        let coords: Vec<f64> = atoms.iter().flat_map(|(x, _)| x.clone()).collect();
        let weights: Vec<f64> = atoms.iter().map(|(_, w)| *w).collect();
        DiscreteMeasure::normalized(dim, coords, weights).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_has_the_right_marginals(a in measure_strategy(6, 2), b in measure_strategy(6, 2)) {
        let plan = solve_general(&a, &b, &CostKind::Quadratic).unwrap();
        for (s, w) in plan.row_sums().iter().zip(a.weights()) {
            prop_assert!((s - w).abs() < 1e-12);
        }
        for (s, w) in plan.col_sums().iter().zip(b.weights()) {
            prop_assert!((s - w).abs() < 1e-12);
        }
        prop_assert!(plan.entries.iter().all(|e| e.mass > 0.0));
        let recomputed = plan.recompute_cost(a.coords(), b.coords(), 2, &CostKind::Quadratic);
        prop_assert!((recomputed - plan.total_cost).abs() <= 1e-12 * recomputed.max(1.0));
    }

    #[test]
    fn w_p_is_a_metric(a in measure_strategy(5, 1), b in measure_strategy(5, 1), c in measure_strategy(5, 1), p in 1.0f64..3.0) {
        let ab = w_p(&a, &b, p).unwrap();
        let ba = w_p(&b, &a, p).unwrap();
        let bc = w_p(&b, &c, p).unwrap();
        let ac = w_p(&a, &c, p).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-10 * ab.max(1.0));
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!(w_p(&a, &a, p).unwrap() <= 1e-12);
    }

    #[test]
    fn dual_potentials_certify_optimality(a in measure_strategy(6, 2), b in measure_strategy(6, 2)) {
        let plan = solve_general(&a, &b, &CostKind::Alpha { p: 1.5 }).unwrap();
        // u_i + v_j ≤ c_ij everywhere and Σ a_i u_i + Σ b_j v_j equals the cost
        let c = cost_matrix(a.coords(), b.coords(), 2, &CostKind::Alpha { p: 1.5 });
        let m = b.len();
        for i in 0..a.len() {
            for j in 0..m {
                prop_assert!(plan.row_potentials[i] + plan.col_potentials[j] <= c[i * m + j] + 1e-9);
            }
        }
        let dual: f64 = a.integrate(&plan.row_potentials) + b.integrate(&plan.col_potentials);
        prop_assert!((dual - plan.total_cost).abs() <= 1e-9 * plan.total_cost.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn w1_is_below_w2(a in measure_strategy(6, 2), b in measure_strategy(6, 2)) {
        prop_assert!(w_p(&a, &b, 1.0).unwrap() <= w_p(&a, &b, 2.0).unwrap() * (1.0 + 1e-10) + 1e-12);
    }

    /// Gluing two optimal plans and α_p(x + y) ≤ 2α_p(x) + 2α_p(y).
    #[test]
    fn alpha_cost_quasi_triangle(
        a in measure_strategy(5, 1),
        b in measure_strategy(5, 1),
        c in measure_strategy(5, 1),
        p in 1.0f64..=2.0,
    ) {
        let cost = CostKind::Alpha { p };
        let ac = t_cost(&a, &c, &cost).unwrap();
        let bound = 2.0 * t_cost(&a, &b, &cost).unwrap() + 2.0 * t_cost(&b, &c, &cost).unwrap();
        prop_assert!(ac <= bound * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn additive_cost_is_subadditive_on_products(
        a1 in measure_strategy(3, 1),
        b1 in measure_strategy(3, 1),
        a2 in measure_strategy(3, 1),
        b2 in measure_strategy(3, 1),
    ) {
        let sum = CostSpec::additive(CostKind::Quadratic, 2);
        let joint = t_cost(&a1.product(&a2), &b1.product(&b2), &sum).unwrap();
        let separate = t_cost(&a1, &b1, &CostKind::Quadratic).unwrap() + t_cost(&a2, &b2, &CostKind::Quadratic).unwrap();
        prop_assert!(joint <= separate * (1.0 + 1e-10) + 1e-12);
        // for a separable cost the product of optimal plans is optimal
        prop_assert!((joint - separate).abs() <= 1e-9 * separate.max(1.0));
    }
}
