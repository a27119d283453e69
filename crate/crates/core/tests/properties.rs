use entroproj::analysis::{compare, push_flow, tv, w1};
use entroproj::control::{solve_constrained, SolverOptions};
use entroproj::hjb::relative_entropy;
use entroproj::io::config_hash;
use entroproj::model::validate_scenario;
use entroproj::particles::simulate;
use entroproj::scenarios;
use proptest::prelude::*;

fn density(weights: &[f64], dx: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum::<f64>() * dx;
    weights.iter().map(|w| w / total).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pinsker_on_discrete_densities(a in proptest::collection::vec(0.01f64..1.0, 24), b in proptest::collection::vec(0.01f64..1.0, 24)) {
        let dx = 0.25;
        let (mu, nu) = (density(&a, dx), density(&b, dx));
        let h = relative_entropy(&mu, &nu, dx).unwrap();
        let d = tv(&mu, &nu, dx);
        prop_assert!(d * d <= 2.0 * h + 1e-12);
    }

    #[test]
    fn distances_vanish_on_identical_slices(a in proptest::collection::vec(0.0f64..1.0, 2..40)) {
        prop_assume!(a.iter().sum::<f64>() > 1e-3);
        let mu = density(&a, 0.1);
        prop_assert_eq!(tv(&mu, &mu, 0.1), 0.0);
        prop_assert_eq!(w1(&mu, &mu, 0.1), 0.0);
    }

    #[test]
    fn w1_is_a_metric(a in proptest::collection::vec(0.01f64..1.0, 16), b in proptest::collection::vec(0.01f64..1.0, 16), c in proptest::collection::vec(0.01f64..1.0, 16)) {
        let dx = 0.5;
        let (p, q, r) = (density(&a, dx), density(&b, dx), density(&c, dx));
        prop_assert!((w1(&p, &q, dx) - w1(&q, &p, dx)).abs() < 1e-12);
        prop_assert!(w1(&p, &r, dx) <= w1(&p, &q, dx) + w1(&q, &r, dx) + 1e-12);
    }

    #[test]
    fn push_preserves_mass(h in 0.0f64..0.1, m0 in -1.0f64..1.0, t in 0.0f64..1.0) {
        let s = scenarios::initial_tilt(m0, 1.0, 120, 10);
        let mu = s.initial_density().unwrap();
        let dx = s.grid.dx();
        let pushed = push_flow(&mu, &s, h, t).unwrap();
        prop_assert!((pushed.iter().sum::<f64>() * dx - 1.0).abs() < 1e-8);
        prop_assert!(pushed.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn config_hash_tracks_every_byte(bytes in proptest::collection::vec(any::<u8>(), 1..64), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut other = bytes.clone();
        let i = pos.index(bytes.len());
        other[i] ^= flip;
        prop_assert_eq!(config_hash(&bytes), config_hash(&bytes.clone()));
        prop_assert_ne!(config_hash(&bytes), config_hash(&other));
    }

    #[test]
    fn validation_is_pure(m0 in -2.0f64..2.0, v0 in 0.2f64..2.0) {
        let s = scenarios::initial_tilt(m0, v0, 80, 10);
        prop_assert_eq!(validate_scenario(&s), validate_scenario(&s));
    }

    #[test]
    fn ensembles_are_bit_reproducible(seed in any::<u64>()) {
        let s = scenarios::gibbs_ou(60, 10);
        let a = simulate(&s, 64, seed, None, false).unwrap();
        let b = simulate(&s, 64, seed, None, false).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn slackness_and_dual_feasibility(m0 in -1.0f64..1.0, v0 in 0.5f64..1.2) {
        let s = scenarios::initial_tilt(m0, v0, 120, 16);
        let opts = SolverOptions::default();
        let r = solve_constrained(&s, &opts).unwrap();
        prop_assert!(r.converged);
        prop_assert!(r.lambda.is_nonnegative());
        prop_assert!(r.node_masses.iter().all(|l| *l >= 0.0));
        prop_assert!(r.slackness_residual <= opts.tol_slack);
        let total: f64 = r.node_masses.iter().sum();
        for (l, gap) in r.node_masses.iter().zip(&r.constraint_gap) {
            if *gap < -10.0 * opts.tol_primal {
                prop_assert!(*l <= 1e-6 * total.max(1e-300));
            }
        }
        for rec in &r.trace {
            prop_assert!(rec.dual_step.is_finite());
        }
    }

    #[test]
    fn value_is_nonincreasing_in_epsilon(e1 in 0.0f64..0.6, e2 in 0.0f64..0.6) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let opts = SolverOptions::default();
        let mut s = scenarios::constant_drift(1.0, 120, 20);
        s.epsilon = lo;
        let v_lo = solve_constrained(&s, &opts).unwrap().optimal_value;
        s.epsilon = hi;
        let v_hi = solve_constrained(&s, &opts).unwrap().optimal_value;
        prop_assert!(v_hi <= v_lo + 1e-6, "{} {}", v_lo, v_hi);
    }
}

#[test]
fn comparing_a_solution_with_itself_gives_zero() {
    let s = scenarios::plateau(120, 20);
    let r = solve_constrained(&s, &SolverOptions::default()).unwrap();
    let rec = compare(&s, &r, &r, 0.1).unwrap();
    assert!(rec.entropy_gap.abs() <= 1e-10);
    assert!(rec.tv_sup <= 1e-10);
    assert!(rec.w1_sup <= 1e-10);
}
