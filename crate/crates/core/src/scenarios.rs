//! Shipped scenarios used by the tests, the acceptance suite and the
//! example configs.

use crate::expr::Expr;
use crate::model::{Coefficients, ConstraintFunctional, InitialLaw, Scenario, SpaceTimeGrid};

fn build(drift: &str, m0: f64, v0: f64, offset: f64, epsilon: f64, t: f64, nx: usize, nt: usize) -> Scenario {
    Scenario::new(
        SpaceTimeGrid::new(-8.0, 8.0, nx, t, nt).expect("valid grid"),
        Coefficients::new(Expr::parse(drift).expect("valid drift"), Expr::constant(1.0)),
        ConstraintFunctional::linear(Expr::x(), offset),
        InitialLaw::Gaussian { mean: m0, variance: v0 },
        epsilon,
    )
    .expect("valid scenario")
}

/// b = 0, σ = 1, ν₀ = N(0, 1), E[X_t] ≤ 1: never binds.
pub fn inactive(nx: usize, nt: usize) -> Scenario {
    build("0", 0.0, 1.0, 1.0, 0.0, 1.0, nx, nt)
}

/// b = 0, σ = 1, ν₀ = N(m₀, v₀), E[X_t] ≤ 0: only the initial law must move.
pub fn initial_tilt(m0: f64, v0: f64, nx: usize, nt: usize) -> Scenario {
    build("0", m0, v0, 0.0, 0.0, 1.0, nx, nt)
}

/// b = 1, σ = 1, ν₀ = N(0, 1), E[X_t] ≤ 0 on [0, T].
pub fn constant_drift(t: f64, nx: usize, nt: usize) -> Scenario {
    build("1", 0.0, 1.0, 0.0, 0.0, t, nx, nt)
}

/// b = sin(πt/T), σ = 1, ν₀ = N(0, 1), E[X_t] ≤ 0: the constraint binds on a
/// terminal plateau and the multiplier has an interior density there.
pub fn plateau(nx: usize, nt: usize) -> Scenario {
    build("sin(pi * t)", 0.0, 1.0, 0.0, 0.0, 1.0, nx, nt)
}

/// Ornstein-Uhlenbeck drift −x/2, ν₀ = N(0.3, 1), E[X_t] ≤ ε = 0.1; used for
/// the conditioning experiment.
pub fn gibbs_ou(nx: usize, nt: usize) -> Scenario {
    build("-0.5 * x", 0.3, 1.0, 0.0, 0.1, 1.0, nx, nt)
}

/// Quadratic attraction ∇W(x) = κx with a non-binding (ε large) or binding
/// (ε = 0) mean constraint.
pub fn attraction(kappa: f64, epsilon: f64, nx: usize, nt: usize) -> Scenario {
    let mut s = build("0", 0.0, 1.0, 0.0, epsilon, 1.0, nx, nt);
    s.coeffs.grad_w = Some(Expr::parse(&format!("{kappa} * x")).expect("valid kernel"));
    s.mckean_vlasov = true;
    s
}

/// Attraction with an off-centre initial law so the mean constraint binds.
pub fn attraction_shifted(kappa: f64, nx: usize, nt: usize) -> Scenario {
    let mut s = attraction(kappa, 0.0, nx, nt);
    s.coeffs.drift = Expr::constant(0.5);
    s
}

/// Double-well drift x − x³ with state-dependent σ; a non-Gaussian flow.
pub fn double_well(nx: usize, nt: usize) -> Scenario {
    let mut s = Scenario::new(
        SpaceTimeGrid::new(-5.0, 5.0, nx, 1.0, nt).expect("valid grid"),
        Coefficients::new(Expr::parse("x - x^3").unwrap(), Expr::parse("1 + 0.2 * tanh(x)").unwrap()),
        ConstraintFunctional::linear(Expr::x(), 0.0),
        InitialLaw::Gaussian { mean: 0.5, variance: 0.5 },
        0.2,
    )
    .expect("valid scenario");
    s.coeffs.lipschitz = 1e3;
    s
}

/// All scenarios shipped with a solve, at a moderate resolution.
pub fn catalogue() -> Vec<(&'static str, Scenario)> {
    vec![
        ("inactive", inactive(200, 50)),
        ("initial_tilt", initial_tilt(1.0, 1.0, 200, 50)),
        ("constant_drift", constant_drift(1.0, 200, 50)),
        ("plateau", plateau(200, 100)),
        ("gibbs_ou", gibbs_ou(200, 50)),
        ("double_well", double_well(200, 100)),
        ("attraction", attraction(1.0, 100.0, 200, 50)),
        ("attraction_shifted", attraction_shifted(1.0, 200, 50)),
    ]
}
