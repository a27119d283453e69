//! Scenario data: grids, coefficient functions, constraint functionals and
//! initial laws, plus validation and functional-derivative evaluation.

use crate::expr::{Expr, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("density not normalized: mass {mass}")]
    NotNormalized { mass: f64 },
    #[error("outer function is not convex near m = {at}")]
    NotConvex { at: f64 },
    #[error("ConvexOfMean constraint requires an outer function")]
    MissingOuter,
    #[error("tabulated initial density has {got} values, grid has {expected} cells")]
    TableLength { got: usize, expected: usize },
    #[error("negative epsilon {0}")]
    NegativeEpsilon(f64),
}

/// Uniform cell-centred grid on `[x_min, x_max] x [0, t_final]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_final: f64,
    pub nt: usize,
}

pub const MIN_RESOLUTION: usize = 8;

impl SpaceTimeGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, t_final: f64, nt: usize) -> Result<Self, ModelError> {
        let g = SpaceTimeGrid { x_min, x_max, nx, t_final, nt };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(ModelError::InvalidGrid(format!("x_max {} must exceed x_min {}", self.x_max, self.x_min)));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(ModelError::InvalidGrid(format!("horizon T = {} must be positive", self.t_final)));
        }
        if self.nx < MIN_RESOLUTION || self.nt < MIN_RESOLUTION {
            return Err(ModelError::InvalidGrid(format!(
                "nx = {}, nt = {}: both must be at least {MIN_RESOLUTION}",
                self.nx, self.nt
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// Cell centre `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    /// Interface between cells `i` and `i + 1`.
    pub fn x_face(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 1.0) * self.dx()
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Index of the cell containing `x`, clamped to the grid.
    pub fn cell_of(&self, x: f64) -> usize {
        let i = ((x - self.x_min) / self.dx()).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.nx - 1)
        }
    }
}

/// Central difference step used whenever an analytic derivative is absent.
pub(crate) fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    /// b(t, x, m1), where m1 is the mean of the current law.
    pub drift: Expr,
    /// ∇W(x); the interacting drift is b − ∇W ∗ μ.
    pub grad_w: Option<Expr>,
    pub sigma: Expr,
    pub cost: Expr,
    pub drift_dx: Option<Expr>,
    pub sigma_dx: Option<Expr>,
    /// Declared Lipschitz bound checked against sampled slopes.
    pub lipschitz: f64,
}

impl Coefficients {
    pub fn new(drift: Expr, sigma: Expr) -> Self {
        Coefficients {
            drift,
            grad_w: None,
            sigma,
            cost: Expr::constant(0.0),
            drift_dx: None,
            sigma_dx: None,
            lipschitz: 1e3,
        }
    }

    pub fn b(&self, t: f64, x: f64, m1: f64) -> f64 {
        self.drift.eval(t, x, m1)
    }

    pub fn sigma(&self, t: f64, x: f64) -> f64 {
        self.sigma.eval(t, x, 0.0)
    }

    pub fn a(&self, t: f64, x: f64) -> f64 {
        let s = self.sigma(t, x);
        s * s
    }

    pub fn cost(&self, t: f64, x: f64) -> f64 {
        self.cost.eval(t, x, 0.0)
    }

    pub fn b_dx(&self, t: f64, x: f64, m1: f64) -> f64 {
        match &self.drift_dx {
            Some(d) => d.eval(t, x, m1),
            None => {
                let h = fd_step(x);
                (self.b(t, x + h, m1) - self.b(t, x - h, m1)) / (2.0 * h)
            }
        }
    }

    /// ∂b/∂m1, always by finite differences.
    pub fn b_dm1(&self, t: f64, x: f64, m1: f64) -> f64 {
        if !self.drift.uses(Var::M1) {
            return 0.0;
        }
        let h = fd_step(m1);
        (self.b(t, x, m1 + h) - self.b(t, x, m1 - h)) / (2.0 * h)
    }

    pub fn sigma_dx(&self, t: f64, x: f64) -> f64 {
        match &self.sigma_dx {
            Some(d) => d.eval(t, x, 0.0),
            None => {
                let h = fd_step(x);
                (self.sigma(t, x + h) - self.sigma(t, x - h)) / (2.0 * h)
            }
        }
    }

    /// ∂ₓa = 2σ ∂ₓσ.
    pub fn a_dx(&self, t: f64, x: f64) -> f64 {
        2.0 * self.sigma(t, x) * self.sigma_dx(t, x)
    }

    pub fn grad_w(&self, x: f64) -> f64 {
        self.grad_w.as_ref().map_or(0.0, |w| w.eval(0.0, x, 0.0))
    }

    /// True when the drift depends on the law of the state.
    pub fn depends_on_law(&self) -> bool {
        self.grad_w.as_ref().is_some_and(|w| w.as_constant() != Some(0.0)) || self.drift.uses(Var::M1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Linear,
    ConvexOfMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintFunctional {
    pub kind: ConstraintKind,
    /// Observable ψ(t, x).
    pub psi: Expr,
    pub psi_dx: Option<Expr>,
    pub psi_dxx: Option<Expr>,
    /// Outer function g(m) for ConvexOfMean; written in the variable `m` (or `x`).
    pub outer: Option<Expr>,
    pub offset: f64,
}

/// Constraint value and linear functional derivative on the grid.
#[derive(Debug, Clone)]
pub struct ConstraintEval {
    /// Ψ(μ).
    pub value: f64,
    /// ∫ψ dμ.
    pub mean: f64,
    /// Chain-rule factor: g′(mean) for ConvexOfMean, 1 for Linear.
    pub slope: f64,
    /// δΨ/δμ(μ, x_i), centred.
    pub derivative: Vec<f64>,
    /// ∂ₓ δΨ/δμ(μ, x_i).
    pub gradient: Vec<f64>,
}

impl ConstraintFunctional {
    pub fn linear(psi: Expr, offset: f64) -> Self {
        ConstraintFunctional { kind: ConstraintKind::Linear, psi, psi_dx: None, psi_dxx: None, outer: None, offset }
    }

    pub fn convex_of_mean(psi: Expr, outer: Expr, offset: f64) -> Result<Self, ModelError> {
        let c = ConstraintFunctional {
            kind: ConstraintKind::ConvexOfMean,
            psi,
            psi_dx: None,
            psi_dxx: None,
            outer: Some(outer),
            offset,
        };
        c.check_convexity()?;
        Ok(c)
    }

    /// Checks convexity of g on a sample of the real line by second differences.
    pub fn check_convexity(&self) -> Result<(), ModelError> {
        if self.kind == ConstraintKind::Linear {
            return Ok(());
        }
        let g = self.outer.as_ref().ok_or(ModelError::MissingOuter)?;
        let h = 1e-2;
        for j in -400..=400 {
            let m = j as f64 * 0.025;
            let f = |m: f64| g.eval(0.0, m, m);
            let d2 = f(m + h) - 2.0 * f(m) + f(m - h);
            let scale = f(m).abs().max(1.0);
            if d2 < -1e-9 * scale || !d2.is_finite() {
                return Err(ModelError::NotConvex { at: m });
            }
        }
        Ok(())
    }

    pub fn psi(&self, t: f64, x: f64) -> f64 {
        self.psi.eval(t, x, 0.0)
    }

    pub fn psi_dx(&self, t: f64, x: f64) -> f64 {
        match &self.psi_dx {
            Some(d) => d.eval(t, x, 0.0),
            None => {
                let h = fd_step(x);
                (self.psi(t, x + h) - self.psi(t, x - h)) / (2.0 * h)
            }
        }
    }

    pub fn psi_dxx(&self, t: f64, x: f64) -> f64 {
        match &self.psi_dxx {
            Some(d) => d.eval(t, x, 0.0),
            None => {
                let h = 1e-3 * (1.0 + x.abs());
                (self.psi(t, x + h) - 2.0 * self.psi(t, x) + self.psi(t, x - h)) / (h * h)
            }
        }
    }

    pub fn g(&self, m: f64) -> f64 {
        match (&self.kind, &self.outer) {
            (ConstraintKind::ConvexOfMean, Some(g)) => g.eval(0.0, m, m),
            _ => m,
        }
    }

    pub fn g_prime(&self, m: f64) -> f64 {
        match (&self.kind, &self.outer) {
            (ConstraintKind::ConvexOfMean, Some(_)) => {
                let h = fd_step(m);
                (self.g(m + h) - self.g(m - h)) / (2.0 * h)
            }
            _ => 1.0,
        }
    }

    /// Ψ for a given value of ∫ψ dμ.
    pub fn value_of_mean(&self, mean: f64) -> f64 {
        self.g(mean) - self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Gaussian { mean: f64, variance: f64 },
    /// Density values on the x-grid cell centres.
    Tabulated(Vec<f64>),
}

impl InitialLaw {
    /// Density on the grid, normalized so that Σ ρ dx = 1.
    pub fn density(&self, grid: &SpaceTimeGrid) -> Result<Vec<f64>, ModelError> {
        let mut rho: Vec<f64> = match self {
            InitialLaw::Gaussian { mean, variance } => grid
                .xs()
                .iter()
                .map(|x| (-(x - mean).powi(2) / (2.0 * variance)).exp())
                .collect(),
            InitialLaw::Tabulated(v) => {
                if v.len() != grid.nx {
                    return Err(ModelError::TableLength { got: v.len(), expected: grid.nx });
                }
                v.clone()
            }
        };
        let mass: f64 = rho.iter().sum::<f64>() * grid.dx();
        if !(mass > 0.0) || !mass.is_finite() || rho.iter().any(|&r| r < 0.0) {
            return Err(ModelError::NotNormalized { mass });
        }
        for r in rho.iter_mut() {
            *r /= mass;
        }
        Ok(rho)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: SpaceTimeGrid,
    pub coeffs: Coefficients,
    pub constraint: ConstraintFunctional,
    pub initial: InitialLaw,
    pub epsilon: f64,
    pub mckean_vlasov: bool,
}

impl Scenario {
    pub fn new(
        grid: SpaceTimeGrid,
        coeffs: Coefficients,
        constraint: ConstraintFunctional,
        initial: InitialLaw,
        epsilon: f64,
    ) -> Result<Self, ModelError> {
        grid.check()?;
        if !(epsilon >= 0.0) {
            return Err(ModelError::NegativeEpsilon(epsilon));
        }
        constraint.check_convexity()?;
        let mckean_vlasov = coeffs.depends_on_law();
        Ok(Scenario { grid, coeffs, constraint, initial, epsilon, mckean_vlasov })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Scenario {
        Scenario { epsilon, ..self.clone() }
    }

    pub fn with_grid(&self, nx: usize, nt: usize) -> Scenario {
        let mut s = self.clone();
        s.grid.nx = nx;
        s.grid.nt = nt;
        s
    }

    pub fn initial_density(&self) -> Result<Vec<f64>, ModelError> {
        self.initial.density(&self.grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Times at which coefficients are sampled during validation.
fn sample_times(grid: &SpaceTimeGrid) -> Vec<f64> {
    (0..=8).map(|j| grid.t_final * j as f64 / 8.0).collect()
}

pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let g = &s.grid;
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, message: String| {
        checks.push(Check { name: name.to_string(), passed, message });
    };

    let grid_ok = g.check();
    push("grid", grid_ok.is_ok(), grid_ok.err().map_or("ok".into(), |e| e.to_string()));
    if g.nx == 0 || !(g.x_max > g.x_min) {
        return ValidationReport { checks };
    }

    let xs = g.xs();
    let dx = g.dx();
    let times = sample_times(g);
    let m_probe = [-1.0, 0.0, 1.0];

    let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &t in &times {
        for &x in &xs {
            let v = s.coeffs.sigma(t, x);
            smin = smin.min(v);
            smax = smax.max(v);
        }
    }
    push(
        "ellipticity",
        smin > 0.0 && smax.is_finite(),
        format!("sigma in [{smin:.6e}, {smax:.6e}]"),
    );

    let lip = s.coeffs.lipschitz;
    let mut b_slope: f64 = 0.0;
    let mut s_slope: f64 = 0.0;
    let mut finite = true;
    for &t in &times {
        for i in 0..g.nx - 1 {
            let (x0, x1) = (xs[i], xs[i + 1]);
            for &m in &m_probe {
                let d = (s.coeffs.b(t, x1, m) - s.coeffs.b(t, x0, m)).abs() / dx;
                finite &= d.is_finite();
                b_slope = b_slope.max(d);
            }
            let d = (s.coeffs.sigma(t, x1) - s.coeffs.sigma(t, x0)).abs() / dx;
            finite &= d.is_finite();
            s_slope = s_slope.max(d);
        }
    }
    push(
        "lipschitz_drift",
        finite && b_slope <= lip,
        format!("max slope {b_slope:.6e}, declared bound {lip:.6e}"),
    );
    push(
        "lipschitz_sigma",
        finite && s_slope <= lip,
        format!("max slope {s_slope:.6e}, declared bound {lip:.6e}"),
    );
    if let Some(w) = &s.coeffs.grad_w {
        let span = g.x_max - g.x_min;
        let mut slope: f64 = 0.0;
        for j in 0..2 * g.nx {
            let z0 = -span + j as f64 * dx;
            slope = slope.max((w.eval(0.0, z0 + dx, 0.0) - w.eval(0.0, z0, 0.0)).abs() / dx);
        }
        push(
            "lipschitz_kernel",
            slope.is_finite() && slope <= lip,
            format!("max slope {slope:.6e}, declared bound {lip:.6e}"),
        );
    }

    match s.initial_density() {
        Ok(rho) => {
            let interior = &rho[1..rho.len() - 1];
            let min_int = interior.iter().cloned().fold(f64::INFINITY, f64::min);
            push("initial_positive", min_int > 0.0, format!("min interior density {min_int:.6e}"));
            let max = rho.iter().cloned().fold(0.0, f64::max);
            let edge = rho[0].max(rho[rho.len() - 1]);
            push(
                "initial_decay",
                edge < 1e-8 * max,
                format!("boundary/max density ratio {:.6e}", edge / max),
            );
        }
        Err(e) => push("initial_positive", false, e.to_string()),
    }

    let mut psi_slope: f64 = 0.0;
    for &t in &times {
        for i in 0..g.nx - 1 {
            let d = (s.constraint.psi_dx(t, xs[i + 1]) - s.constraint.psi_dx(t, xs[i])).abs() / dx;
            psi_slope = psi_slope.max(d);
        }
    }
    push(
        "constraint_derivative_lipschitz",
        psi_slope.is_finite() && psi_slope <= lip,
        format!("max slope of dpsi/dx {psi_slope:.6e}"),
    );
    let convex = s.constraint.check_convexity();
    push("outer_convex", convex.is_ok(), convex.err().map_or("ok".into(), |e| e.to_string()));
    push("epsilon", s.epsilon >= 0.0, format!("epsilon = {}", s.epsilon));

    ValidationReport { checks }
}

/// Ψ(μ_t) and its centred linear derivative.
pub fn evaluate_constraint(
    c: &ConstraintFunctional,
    grid: &SpaceTimeGrid,
    t: f64,
    mu: &[f64],
) -> Result<ConstraintEval, ModelError> {
    let dx = grid.dx();
    let mass: f64 = mu.iter().sum::<f64>() * dx;
    if (mass - 1.0).abs() > 1e-6 || mu.iter().any(|&m| m < 0.0) {
        return Err(ModelError::NotNormalized { mass });
    }
    Ok(evaluate_constraint_unchecked(c, grid, t, mu))
}

pub(crate) fn evaluate_constraint_unchecked(
    c: &ConstraintFunctional,
    grid: &SpaceTimeGrid,
    t: f64,
    mu: &[f64],
) -> ConstraintEval {
    let dx = grid.dx();
    let psi: Vec<f64> = (0..grid.nx).map(|i| c.psi(t, grid.x(i))).collect();
    let mean: f64 = psi.iter().zip(mu).map(|(p, m)| p * m).sum::<f64>() * dx;
    let value = c.value_of_mean(mean);
    let slope = c.g_prime(mean);
    let mut derivative: Vec<f64> = psi.iter().map(|p| slope * (p - mean)).collect();
    // remove the residual from summation round-off
    let resid: f64 = derivative.iter().zip(mu).map(|(d, m)| d * m).sum::<f64>() * dx;
    let mass: f64 = mu.iter().sum::<f64>() * dx;
    if mass > 0.0 {
        for d in derivative.iter_mut() {
            *d -= resid / mass;
        }
    }
    let gradient = (0..grid.nx).map(|i| slope * c.psi_dx(t, grid.x(i))).collect();
    ConstraintEval { value, mean, slope, derivative, gradient }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualificationReport {
    /// Per time node: None when inactive, otherwise whether the gradient norm clears the floor.
    pub per_time: Vec<Option<bool>>,
    pub gradient_norms: Vec<f64>,
    pub passed: bool,
    /// True for law-dependent drifts and nonlinear constraints, where the
    /// gradient-norm test is only a sufficient heuristic.
    pub heuristic: bool,
}

pub const DEFAULT_QUAL_FLOOR: f64 = 1e-6;

/// Checks ∫|∂ₓ δΨ/δμ|² dμ_t > qual_floor at every active time.
pub fn qualification_check(
    s: &Scenario,
    densities: &[Vec<f64>],
    tol_active: f64,
    qual_floor: f64,
) -> QualificationReport {
    let g = &s.grid;
    let dx = g.dx();
    let mut per_time = Vec::with_capacity(densities.len());
    let mut norms = Vec::with_capacity(densities.len());
    for (k, mu) in densities.iter().enumerate() {
        let t = g.t(k);
        let ev = evaluate_constraint_unchecked(&s.constraint, g, t, mu);
        let q: f64 = ev.gradient.iter().zip(mu).map(|(d, m)| d * d * m).sum::<f64>() * dx;
        norms.push(q);
        if ev.value >= s.epsilon - tol_active {
            per_time.push(Some(q > qual_floor));
        } else {
            per_time.push(None);
        }
    }
    let passed = per_time.iter().all(|p| p.unwrap_or(true));
    let heuristic = s.mckean_vlasov || s.constraint.kind != ConstraintKind::Linear;
    QualificationReport { per_time, gradient_norms: norms, passed, heuristic }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(-8.0, 8.0, 400, 1.0, 16).unwrap()
    }

    fn gauss(g: &SpaceTimeGrid, m: f64, v: f64) -> Vec<f64> {
        InitialLaw::Gaussian { mean: m, variance: v }.density(g).unwrap()
    }

    fn brownian() -> Scenario {
        Scenario::new(
            grid(),
            Coefficients::new(Expr::constant(0.0), Expr::constant(1.0)),
            ConstraintFunctional::linear(Expr::x(), 0.0),
            InitialLaw::Gaussian { mean: 0.0, variance: 1.0 },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn grid_rejects_coarse_resolution() {
        assert!(SpaceTimeGrid::new(-1.0, 1.0, 7, 1.0, 8).is_err());
        assert!(SpaceTimeGrid::new(-1.0, 1.0, 8, 1.0, 4).is_err());
        assert!(SpaceTimeGrid::new(1.0, -1.0, 8, 1.0, 8).is_err());
        let g = SpaceTimeGrid::new(-1.0, 1.0, 8, 2.0, 8).unwrap();
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.dt(), 0.25);
    }

    #[test]
    fn standard_scenario_passes_validation() {
        let r = validate_scenario(&brownian());
        assert!(r.passed(), "{:?}", r.failures());
    }

    #[test]
    fn zero_sigma_fails_ellipticity() {
        let mut s = brownian();
        s.coeffs.sigma = Expr::constant(0.0);
        let r = validate_scenario(&s);
        assert!(!r.check("ellipticity").unwrap().passed);
    }

    #[test]
    fn uniform_initial_fails_decay() {
        let mut s = brownian();
        s.initial = InitialLaw::Tabulated(vec![1.0; s.grid.nx]);
        let r = validate_scenario(&s);
        assert!(!r.check("initial_decay").unwrap().passed);
        assert!(r.check("initial_positive").unwrap().passed);
    }

    #[test]
    fn linear_constraint_on_standard_gaussian() {
        let g = grid();
        let mu = gauss(&g, 0.0, 1.0);
        let c = ConstraintFunctional::linear(Expr::x(), 0.0);
        let ev = evaluate_constraint(&c, &g, 0.0, &mu).unwrap();
        assert!(ev.value.abs() < 1e-12);
        for i in 0..g.nx {
            assert!((ev.derivative[i] - g.x(i)).abs() < 1e-10);
        }
        let c2 = ConstraintFunctional::linear(Expr::parse("x^2").unwrap(), 0.0);
        let ev2 = evaluate_constraint(&c2, &g, 0.0, &mu).unwrap();
        assert!((ev2.value - 1.0).abs() < 1e-3);
    }

    #[test]
    fn convex_of_mean_square() {
        let g = grid();
        let mu = gauss(&g, 1.0, 1.0);
        let c = ConstraintFunctional::convex_of_mean(Expr::x(), Expr::parse("m^2").unwrap(), 0.0).unwrap();
        let ev = evaluate_constraint(&c, &g, 0.0, &mu).unwrap();
        assert!((ev.value - 1.0).abs() < 1e-8);
        assert!((ev.slope - 2.0).abs() < 1e-6);
        for i in (0..g.nx).step_by(37) {
            assert!((ev.derivative[i] - 2.0 * (g.x(i) - 1.0)).abs() < 1e-5);
        }
    }

    #[test]
    fn nonconvex_outer_rejected() {
        assert!(ConstraintFunctional::convex_of_mean(Expr::x(), Expr::parse("-m^2").unwrap(), 0.0).is_err());
        assert!(ConstraintFunctional::convex_of_mean(Expr::x(), Expr::parse("sin(m)").unwrap(), 0.0).is_err());
        assert!(ConstraintFunctional::convex_of_mean(Expr::x(), Expr::parse("exp(m)").unwrap(), 0.0).is_ok());
    }

    #[test]
    fn unnormalized_density_rejected() {
        let g = grid();
        let mu = vec![1.0; g.nx];
        let c = ConstraintFunctional::linear(Expr::x(), 0.0);
        assert!(matches!(evaluate_constraint(&c, &g, 0.0, &mu), Err(ModelError::NotNormalized { .. })));
    }

    #[test]
    fn qualification_cases() {
        let s = brownian();
        let g = s.grid;
        let mu = gauss(&g, 0.0, 1.0);
        let q = qualification_check(&s, std::slice::from_ref(&mu), 1e-3, DEFAULT_QUAL_FLOOR);
        assert!(q.passed);
        assert_eq!(q.per_time[0], Some(true));
        assert!((q.gradient_norms[0] - 1.0).abs() < 1e-9);

        let mut flat = s.clone();
        flat.constraint = ConstraintFunctional::linear(Expr::constant(2.0), 2.0);
        let q = qualification_check(&flat, std::slice::from_ref(&mu), 1e-3, DEFAULT_QUAL_FLOOR);
        assert_eq!(q.per_time[0], Some(false));
        assert!(!q.passed);

        // g(m) = m² at mean 0 is active at Ψ = 0 but g'(0) = 0 kills the gradient
        let mut tangent = s.clone();
        tangent.constraint =
            ConstraintFunctional::convex_of_mean(Expr::x(), Expr::parse("m^2").unwrap(), 0.0).unwrap();
        let q = qualification_check(&tangent, std::slice::from_ref(&mu), 1e-3, DEFAULT_QUAL_FLOOR);
        assert_eq!(q.per_time[0], Some(false));
        assert!(q.heuristic);
    }

    proptest! {
        #[test]
        fn derivative_is_centred(weights in proptest::collection::vec(0.0f64..1.0, 16), convex in any::<bool>()) {
            let g = SpaceTimeGrid::new(-3.0, 3.0, 16, 1.0, 8).unwrap();
            let total: f64 = weights.iter().sum::<f64>() + 1e-3;
            let mu: Vec<f64> = weights.iter().map(|w| (w + 1e-3 / 16.0) / (total * g.dx())).collect();
            let c = if convex {
                ConstraintFunctional::convex_of_mean(Expr::parse("x^3/10 + x").unwrap(), Expr::parse("exp(m)").unwrap(), 0.5).unwrap()
            } else {
                ConstraintFunctional::linear(Expr::parse("sin(x) + x^2").unwrap(), 0.1)
            };
            let ev = evaluate_constraint(&c, &g, 0.3, &mu).unwrap();
            let centred: f64 = ev.derivative.iter().zip(&mu).map(|(d, m)| d * m).sum::<f64>() * g.dx();
            prop_assert!(centred.abs() < 1e-10);
        }

        #[test]
        fn validation_is_pure(m in -1.0f64..1.0, v in 0.2f64..2.0) {
            let mut s = brownian();
            s.initial = InitialLaw::Gaussian { mean: m, variance: v };
            prop_assert_eq!(validate_scenario(&s), validate_scenario(&s));
        }
    }
}
