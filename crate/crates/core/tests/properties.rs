use conc_lab::costs::{alpha, rho_p_n, CostKind};
use conc_lab::functionals::{
    check_tau, dirichlet_energy, entropy_functional, inf_convolution, poincare_constant_grid, relative_entropy,
    variance, GradientModel,
};
use conc_lab::measures::{omega, DiscreteMeasure};
use conc_lab::rates::{discrepancy, rate_function, RateMethod};
use proptest::prelude::*;

fn line_measure(max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::btree_set(-200i32..200, 2..=max_atoms).prop_flat_map(|set| {
        let coords: Vec<f64> = set.into_iter().map(|i| i as f64 / 40.0).collect();
        let k = coords.len();
        prop::collection::vec(0.05f64..1.0, k)
            .prop_map(move |w| DiscreteMeasure::normalized(1, coords.clone(), w).unwrap())
    })
}

/// A measure and a reweighting of it on the same atoms.
fn measure_pair(max_atoms: usize) -> impl Strategy<Value = (DiscreteMeasure, DiscreteMeasure)> {
    line_measure(max_atoms).prop_flat_map(|mu| {
        let k = mu.len();
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("zero mass", move |w| {
            (w.iter().sum::<f64>() > 1e-3).then(|| mu.with_weights(&w).ok().map(|nu| (mu.clone(), nu))).flatten()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn alpha_is_the_smaller_of_the_two_branches(u in -20.0f64..20.0, p in 1.0f64..=2.0) {
        let a = alpha(p, u);
        prop_assert!((a - (u * u).min(u.abs().powf(p))).abs() <= 1e-12 * a.max(1.0));
        prop_assert_eq!(a, alpha(p, -u));
    }

    #[test]
    fn alpha_quasi_triangle(x in 0.0f64..50.0, y in 0.0f64..50.0, p in 1.0f64..=2.0) {
        prop_assert!(alpha(p, x + y) <= (2.0 * alpha(p, x) + 2.0 * alpha(p, y)) * (1.0 + 1e-12));
        prop_assert!(alpha(p, x / 12.0) >= alpha(p, x) / 144.0 * (1.0 - 1e-12));
    }

    #[test]
    fn rho_is_a_metric(
        x in prop::collection::vec(-5.0f64..5.0, 6),
        y in prop::collection::vec(-5.0f64..5.0, 6),
        z in prop::collection::vec(-5.0f64..5.0, 6),
        p in 1.0f64..3.0,
    ) {
        let xy = rho_p_n(&x, &y, 2, p).unwrap();
        let yz = rho_p_n(&y, &z, 2, p).unwrap();
        let xz = rho_p_n(&x, &z, 2, p).unwrap();
        prop_assert!(xz <= xy + yz + 1e-10);
        prop_assert!((xy - rho_p_n(&y, &x, 2, p).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn omega_is_increasing_and_odd(u in -10.0f64..10.0, v in -10.0f64..10.0) {
        prop_assert_eq!(omega(-u), -omega(u));
        if u < v {
            prop_assert!(omega(u) < omega(v));
        }
    }

    #[test]
    fn tilts_compose_and_keep_mass(mu in line_measure(8), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let twice = mu.tilt(&[a]).unwrap().tilt(&[b]).unwrap();
        let once = mu.tilt(&[a + b]).unwrap();
        for (u, v) in twice.weights().iter().zip(once.weights()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
        prop_assert!((once.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let pushed = mu.pushforward_omega();
        prop_assert_eq!(pushed.weights(), mu.weights());
    }

    #[test]
    fn entropy_and_variance_are_nonnegative((mu, nu) in measure_pair(8)) {
        let h = relative_entropy(&nu, &mu);
        prop_assert!(h >= 0.0);
        prop_assert_eq!(relative_entropy(&mu, &mu), 0.0);
        let f: Vec<f64> = nu.weights().iter().zip(mu.weights()).map(|(a, b)| a / b).collect();
        // Ent_μ(dν/dμ) = H(ν|μ)
        let ent = entropy_functional(&mu, &f).unwrap();
        prop_assert!((ent - h).abs() <= 1e-10 * h.max(1.0));
        prop_assert!(variance(&mu, &f).unwrap() >= 0.0);
    }

    #[test]
    fn inf_convolution_is_below_f_and_monotone(mu in line_measure(8), seed in prop::collection::vec(-3.0f64..3.0, 8), s in 0.1f64..5.0) {
        let f: Vec<f64> = seed[..mu.len()].to_vec();
        let q = inf_convolution(&f, &mu, &CostKind::Sg, s).unwrap();
        let q2 = inf_convolution(&f, &mu, &CostKind::Sg, 2.0 * s).unwrap();
        for i in 0..mu.len() {
            prop_assert!(q[i] <= f[i]);
            prop_assert!(q[i] <= q2[i]);
        }
        // the (τ) quantity is a product of two Jensen-dominated factors
        let tau = check_tau(&mu, &CostKind::Sg, s, &f).unwrap();
        prop_assert!(tau.lhs.is_finite() && tau.lhs > 0.0);
    }

    #[test]
    fn poincare_constant_bounds_every_function(mu in line_measure(8), seed in prop::collection::vec(-3.0f64..3.0, 8)) {
        let f: Vec<f64> = seed[..mu.len()].to_vec();
        let c = poincare_constant_grid(&mu, &GradientModel::Grid1d).unwrap();
        let var = variance(&mu, &f).unwrap();
        let energy = dirichlet_energy(&mu, &f, &GradientModel::Grid1d).unwrap();
        prop_assert!(var <= c * energy * (1.0 + 1e-9) + 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// R(t) is an infimum, so any ν past the threshold bounds it from above.
    #[test]
    fn rate_is_below_every_feasible_entropy((mu, nu) in measure_pair(4), frac in 0.05f64..0.95) {
        let cost = CostKind::Power { p: 1.0 };
        let d = discrepancy(&nu, &mu, &cost).unwrap();
        prop_assume!(d > 1e-6);
        let t = frac * d;
        let r = rate_function(&mu, &cost, t, RateMethod::PenaltyOptimizer).unwrap();
        prop_assert!(r.value <= relative_entropy(&nu, &mu) + 1e-9);
        prop_assert!(r.value >= 0.0);
        let further = rate_function(&mu, &cost, 0.5 * t, RateMethod::PenaltyOptimizer).unwrap();
        prop_assert!(further.value <= r.value + 1e-9);
    }
}
