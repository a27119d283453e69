//! Backward HJB solver with a measure-valued source.
//!
//! Step k maps φ_{k+1} to φ_k by
//! `(I − dt L⁰_k) φ_k = φ_{k+1} + dt [H(φ_{k+1}) + c_k + c̄_k + λ_k ψ̂_{k+1}]`,
//! `H(φ) = −½ a (∂ₓφ)²` clipped at the Hamiltonian cap. The drift part of
//! L⁰ is centred where the cell Péclet number allows and upwinded
//! elsewhere. At the two boundary cells φ is extrapolated linearly, so
//! affine value functions are reproduced exactly.

use crate::dynamics::Dynamics;
use crate::fp::{FaceControl, MarginalFlow};
use crate::model::{evaluate_constraint_unchecked, ConstraintEval, ModelError, Scenario, SpaceTimeGrid};
use crate::tridiag;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HjbError {
    #[error("value function blew up at step {step}: sup|phi| = {value:e}")]
    BlowUp { step: usize, value: f64 },
    #[error("relative entropy undefined: tilted density positive where the reference vanishes (cell {cell})")]
    DegenerateDensity { cell: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// λ = atom0 δ₀ + λ_t dt + atomT δ_T with λ_t piecewise constant on time cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier {
    pub atom0: f64,
    pub interior: Vec<f64>,
    pub atom_t: f64,
}

impl Multiplier {
    pub fn zeros(nt: usize) -> Multiplier {
        Multiplier { atom0: 0.0, interior: vec![0.0; nt], atom_t: 0.0 }
    }

    pub fn terminal(nt: usize, atom_t: f64) -> Multiplier {
        Multiplier { atom_t, ..Multiplier::zeros(nt) }
    }

    pub fn total_mass(&self, dt: f64) -> f64 {
        self.atom0 + self.interior.iter().sum::<f64>() * dt + self.atom_t
    }

    pub fn interior_mass(&self, dt: f64) -> f64 {
        self.interior.iter().sum::<f64>() * dt
    }

    pub fn is_nonnegative(&self) -> bool {
        self.atom0 >= 0.0 && self.atom_t >= 0.0 && self.interior.iter().all(|&l| l >= 0.0)
    }

    /// Which of (atom0, interior, atomT) carries more than `frac` of the total mass.
    pub fn support(&self, dt: f64, frac: f64) -> [bool; 3] {
        let total = self.total_mass(dt);
        if total <= 0.0 {
            return [false; 3];
        }
        [self.atom0 > frac * total, self.interior_mass(dt) > frac * total, self.atom_t > frac * total]
    }

    /// Mass carried by each time node: node 0 holds atom0, node k + 1 holds
    /// the interior cell (t_k, t_{k+1}], and node nt also holds atomT.
    pub fn node_masses(&self, dt: f64) -> Vec<f64> {
        let nt = self.interior.len();
        let mut ell = Vec::with_capacity(nt + 1);
        ell.push(self.atom0);
        ell.extend(self.interior.iter().map(|l| l * dt));
        ell[nt] += self.atom_t;
        ell
    }

    /// Inverse of [`Multiplier::node_masses`]. The last node's mass is split
    /// between the final interior cell and atomT: the cell density is capped
    /// by the preceding cell's density and the remainder becomes the atom.
    pub fn from_node_masses(ell: &[f64], dt: f64) -> Multiplier {
        let nt = ell.len() - 1;
        let mut interior: Vec<f64> = ell[1..].iter().map(|l| l / dt).collect();
        let last = ell[nt] / dt;
        let prev = if nt >= 2 { interior[nt - 2] } else { 0.0 };
        interior[nt - 1] = last.min(prev);
        let atom_t = (ell[nt] - interior[nt - 1] * dt).max(0.0);
        Multiplier { atom0: ell[0], interior, atom_t }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    pub grid: SpaceTimeGrid,
    pub phi: Vec<Vec<f64>>,
    pub grad: Vec<Vec<f64>>,
    pub hess: Vec<Vec<f64>>,
    pub hamiltonian_clips: usize,
    pub sup_grad: f64,
}

/// Central first and second differences with linear extrapolation at the ends.
pub(crate) fn derivatives(phi: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
    let n = phi.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    grad[0] = (phi[1] - phi[0]) / dx;
    grad[n - 1] = (phi[n - 1] - phi[n - 2]) / dx;
    for i in 1..n - 1 {
        grad[i] = (phi[i + 1] - phi[i - 1]) / (2.0 * dx);
        hess[i] = (phi[i + 1] - 2.0 * phi[i] + phi[i - 1]) / (dx * dx);
    }
    (grad, hess)
}

impl ValueField {
    pub fn zeros(grid: SpaceTimeGrid) -> ValueField {
        ValueField::from_phi(grid, vec![vec![0.0; grid.nx]; grid.nt + 1])
    }

    pub fn from_phi(grid: SpaceTimeGrid, phi: Vec<Vec<f64>>) -> ValueField {
        let dx = grid.dx();
        let mut grad = Vec::with_capacity(phi.len());
        let mut hess = Vec::with_capacity(phi.len());
        let mut sup: f64 = 0.0;
        for row in &phi {
            let (g, h) = derivatives(row, dx);
            sup = g.iter().fold(sup, |m, v| m.max(v.abs()));
            grad.push(g);
            hess.push(h);
        }
        ValueField { grid, phi, grad, hess, hamiltonian_clips: 0, sup_grad: sup }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbOptions {
    pub blowup_cap: f64,
    pub hamiltonian_cap: f64,
}

impl Default for HjbOptions {
    fn default() -> Self {
        HjbOptions { blowup_cap: 1e6, hamiltonian_cap: 1e4 }
    }
}

/// Centred constraint derivative ψ̂_n = δΨ/δμ(μ_n, ·) at every node of a flow.
pub fn constraint_along(s: &Scenario, densities: &[Vec<f64>]) -> Vec<ConstraintEval> {
    densities
        .iter()
        .enumerate()
        .map(|(k, mu)| evaluate_constraint_unchecked(&s.constraint, &s.grid, s.grid.t(k), mu))
        .collect()
}

/// Tridiagonal coefficients of (I − dt L⁰_k).
fn implicit_operator(dynamics: &Dynamics, k: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = &dynamics.grid;
    let (nx, dx, dt) = (g.nx, g.dx(), g.dt());
    let (b, a) = (&dynamics.b[k], &dynamics.a[k]);
    let (mut lower, mut diag, mut upper) = (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]);
    for i in 0..nx {
        // coefficients of φ_{i-1}, φ_i, φ_{i+1} in L⁰φ at cell i
        let (mut cl, mut cc, mut cr) = (0.0, 0.0, 0.0);
        if i == 0 {
            cc = -b[0] / dx;
            cr = b[0] / dx;
        } else if i == nx - 1 {
            cl = -b[i] / dx;
            cc = b[i] / dx;
        } else {
            let diff = 0.5 * a[i] / (dx * dx);
            cl += diff;
            cc -= 2.0 * diff;
            cr += diff;
            if b[i].abs() * dx <= a[i] {
                cl -= b[i] / (2.0 * dx);
                cr += b[i] / (2.0 * dx);
            } else if b[i] > 0.0 {
                cc -= b[i] / dx;
                cr += b[i] / dx;
            } else {
                cl -= b[i] / dx;
                cc += b[i] / dx;
            }
        }
        lower[i] = -dt * cl;
        diag[i] = 1.0 - dt * cc;
        upper[i] = -dt * cr;
    }
    (lower, diag, upper)
}

/// One backward step from φ_{k+1}; `source` is added to the right-hand side
/// after multiplication by dt. Returns the number of clipped Hamiltonian values.
pub(crate) fn hjb_step(
    dynamics: &Dynamics,
    k: usize,
    phi_next: &[f64],
    source: &[f64],
    opts: &HjbOptions,
    out: &mut Vec<f64>,
) -> usize {
    let g = &dynamics.grid;
    let (dx, dt) = (g.dx(), g.dt());
    let (grad, _) = derivatives(phi_next, dx);
    let mut clips = 0;
    let rhs: Vec<f64> = (0..g.nx)
        .map(|i| {
            let mut h = -0.5 * dynamics.a[k][i] * grad[i] * grad[i];
            if h < -opts.hamiltonian_cap {
                h = -opts.hamiltonian_cap;
                clips += 1;
            }
            phi_next[i] + dt * (h + dynamics.cost[k][i] + source[i])
        })
        .collect();
    let (lower, diag, upper) = implicit_operator(dynamics, k);
    *out = tridiag::solve(&lower, &diag, &upper, &rhs);
    clips
}

/// Backward sweep. `psi_hat[n]` is the centred constraint derivative at node n,
/// `coupling[k]` the McKean-Vlasov coupling term at node k.
pub fn hjb_solve_with(
    dynamics: &Dynamics,
    psi_hat: &[Vec<f64>],
    lambda: &Multiplier,
    coupling: Option<&[Vec<f64>]>,
    opts: &HjbOptions,
) -> Result<ValueField, HjbError> {
    let g = dynamics.grid;
    let (nx, nt) = (g.nx, g.nt);
    let mut phi = vec![vec![0.0; nx]; nt + 1];
    phi[nt] = psi_hat[nt].iter().map(|p| lambda.atom_t * p).collect();
    let mut clips = 0;
    let mut source = vec![0.0; nx];
    let mut next = Vec::new();
    for k in (0..nt).rev() {
        for i in 0..nx {
            source[i] = lambda.interior[k] * psi_hat[k + 1][i] + coupling.map_or(0.0, |c| c[k][i]);
        }
        clips += hjb_step(dynamics, k, &phi[k + 1], &source, opts, &mut next);
        let sup = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(sup <= opts.blowup_cap) {
            return Err(HjbError::BlowUp { step: k, value: sup });
        }
        phi[k] = std::mem::take(&mut next);
    }
    let mut v = ValueField::from_phi(g, phi);
    v.hamiltonian_clips = clips;
    Ok(v)
}

/// Solves the HJB equation with the constraint derivative evaluated along `flow`.
/// `lambda.atom0` is ignored here; it acts on the initial law instead.
pub fn hjb_solve(
    s: &Scenario,
    flow: &MarginalFlow,
    lambda: &Multiplier,
    coupling: Option<&[Vec<f64>]>,
) -> Result<ValueField, HjbError> {
    let dynamics = Dynamics::new(s, None);
    let psi: Vec<Vec<f64>> = constraint_along(s, &flow.densities).into_iter().map(|c| c.derivative).collect();
    hjb_solve_with(&dynamics, &psi, lambda, coupling, &HjbOptions::default())
}

/// Quadrature residual of the time-integrated HJB equation in L²(μ), using
/// trapezoidal time integration of the continuous operator with centred
/// differences. Small only if the sweep is consistent with the equation.
pub fn hjb_residual(
    dynamics: &Dynamics,
    v: &ValueField,
    psi_hat: &[Vec<f64>],
    lambda: &Multiplier,
    flow: &MarginalFlow,
) -> f64 {
    let g = &dynamics.grid;
    let (dx, dt) = (g.dx(), g.dt());
    let gen = |k: usize, i: usize| {
        let (p, h) = (v.grad[k][i], v.hess[k][i]);
        dynamics.b[k][i] * p + 0.5 * dynamics.a[k][i] * h - 0.5 * dynamics.a[k][i] * p * p + dynamics.cost[k][i]
    };
    let mut total = 0.0;
    for k in 0..g.nt {
        let mu = &flow.densities[k];
        for i in 1..g.nx - 1 {
            let r = v.phi[k][i]
                - v.phi[k + 1][i]
                - 0.5 * dt * (gen(k, i) + gen(k + 1, i))
                - dt * lambda.interior[k] * psi_hat[k + 1][i];
            total += r * r * mu[i] * dx;
        }
    }
    total.sqrt()
}

/// Feedback control α = −σ ∂ₓφ on cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    pub grid: SpaceTimeGrid,
    /// `(nt + 1) x nx`.
    pub alpha: Vec<Vec<f64>>,
    pub sup_alpha: f64,
}

impl ControlField {
    pub fn zero(grid: SpaceTimeGrid) -> ControlField {
        ControlField { grid, alpha: vec![vec![0.0; grid.nx]; grid.nt + 1], sup_alpha: 0.0 }
    }

    /// Bilinear interpolation in (t, x), clamped at the grid boundary.
    pub fn at(&self, t: f64, x: f64) -> f64 {
        let g = &self.grid;
        let tk = (t / g.dt()).clamp(0.0, g.nt as f64);
        let k0 = (tk.floor() as usize).min(g.nt);
        let k1 = (k0 + 1).min(g.nt);
        let wt = tk - k0 as f64;
        let xi = ((x - g.x_min) / g.dx() - 0.5).clamp(0.0, (g.nx - 1) as f64);
        let i0 = (xi.floor() as usize).min(g.nx - 1);
        let i1 = (i0 + 1).min(g.nx - 1);
        let wx = xi - i0 as f64;
        let row = |k: usize| self.alpha[k][i0] * (1.0 - wx) + self.alpha[k][i1] * wx;
        if wt == 0.0 {
            row(k0)
        } else {
            row(k0) * (1.0 - wt) + row(k1) * wt
        }
    }
}

pub fn feedback_control(v: &ValueField, s: &Scenario) -> ControlField {
    let g = v.grid;
    let mut sup: f64 = 0.0;
    let alpha: Vec<Vec<f64>> = v
        .grad
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let t = g.t(k);
            row.iter()
                .enumerate()
                .map(|(i, p)| {
                    let a = -s.coeffs.sigma(t, g.x(i)) * p;
                    sup = sup.max(a.abs());
                    a
                })
                .collect()
        })
        .collect();
    ControlField { grid: g, alpha, sup_alpha: sup }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Bounds {
    pub grad: f64,
    pub hess: f64,
    pub third: f64,
}

/// Sup norms of ∂ₓφ, ∂²ₓφ and (on cells at least two away from the boundary) ∂³ₓφ.
pub fn estimate_bounds(v: &ValueField) -> Bounds {
    let dx = v.grid.dx();
    let nx = v.grid.nx;
    let mut b = Bounds { grad: 0.0, hess: 0.0, third: 0.0 };
    for k in 0..v.phi.len() {
        for i in 0..nx {
            b.grad = b.grad.max(v.grad[k][i].abs());
            b.hess = b.hess.max(v.hess[k][i].abs());
        }
        for i in 2..nx - 2 {
            let d3 = (v.hess[k][i + 1] - v.hess[k][i - 1]) / (2.0 * dx);
            b.third = b.third.max(d3.abs());
        }
    }
    b
}

/// Discrete relative entropy Σ μ log(μ/ν) dx.
pub fn relative_entropy(mu: &[f64], nu: &[f64], dx: f64) -> Result<f64, HjbError> {
    let mut h = 0.0;
    for (i, (&m, &n)) in mu.iter().zip(nu).enumerate() {
        if m > 0.0 {
            if !(n > 0.0) {
                return Err(HjbError::DegenerateDensity { cell: i });
            }
            h += m * (m / n).ln();
        }
    }
    Ok(h * dx)
}

/// H(μ₀|ν₀) + Σ_k dt ∫ (½|α|² + c) dμ_k for a face control.
pub fn value_functional_with(
    dynamics: &Dynamics,
    control: &FaceControl,
    flow: &MarginalFlow,
    tilted_init: &[f64],
    nu0: &[f64],
) -> Result<f64, HjbError> {
    let g = &dynamics.grid;
    let (dx, dt) = (g.dx(), g.dt());
    let h = relative_entropy(tilted_init, nu0, dx)?;
    let mut running = 0.0;
    for k in 0..g.nt {
        running += dynamics.cost[k].iter().zip(&flow.densities[k]).map(|(c, m)| c * m).sum::<f64>() * dx * dt;
    }
    Ok(h + control.cost(dynamics, flow) + running)
}

pub fn value_functional(
    s: &Scenario,
    v: &ValueField,
    flow: &MarginalFlow,
    _lambda: &Multiplier,
    tilted_init: &[f64],
) -> Result<f64, HjbError> {
    let dynamics = Dynamics::new(s, None);
    let fc = FaceControl::from_value(v, &dynamics);
    let nu0 = s.initial_density()?;
    value_functional_with(&dynamics, &fc, flow, tilted_init, &nu0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fp::fp_solve;
    use crate::model::{Coefficients, ConstraintFunctional, InitialLaw};

    fn brownian(nx: usize, nt: usize) -> Scenario {
        Scenario::new(
            SpaceTimeGrid::new(-8.0, 8.0, nx, 1.0, nt).unwrap(),
            Coefficients::new(Expr::constant(0.0), Expr::constant(1.0)),
            ConstraintFunctional::linear(Expr::x(), 0.0),
            InitialLaw::Gaussian { mean: 0.0, variance: 1.0 },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let s = brownian(64, 16);
        let f = fp_solve(&s, None, None).unwrap();
        let v = hjb_solve(&s, &f, &Multiplier::zeros(16), None).unwrap();
        assert!(v.phi.iter().flatten().all(|&p| p == 0.0));
        assert_eq!(estimate_bounds(&v), Bounds { grad: 0.0, hess: 0.0, third: 0.0 });
    }

    #[test]
    fn terminal_atom_closed_form() {
        let s = brownian(400, 400);
        let f = fp_solve(&s, None, None).unwrap();
        let beta = 0.8;
        let v = hjb_solve(&s, &f, &Multiplier::terminal(400, beta), None).unwrap();
        let mut err: f64 = 0.0;
        for k in 0..=400 {
            let t = s.grid.t(k);
            for i in 0..400 {
                let x = s.grid.x(i);
                err = err.max((v.phi[k][i] - (beta * x - 0.5 * beta * beta * (1.0 - t))).abs());
            }
        }
        assert!(err < 1e-3, "max error {err}");
        let b = estimate_bounds(&v);
        assert!((b.grad - beta).abs() < 1e-9 && b.hess < 1e-7 && b.third < 1e-3);
    }

    #[test]
    fn constant_interior_density_closed_form() {
        let s = brownian(400, 400);
        let f = fp_solve(&s, None, None).unwrap();
        let rho = 0.6;
        let lambda = Multiplier { atom0: 0.0, interior: vec![rho; 400], atom_t: 0.0 };
        let v = hjb_solve(&s, &f, &lambda, None).unwrap();
        for k in (0..=400).step_by(25) {
            let expect = rho * (1.0 - s.grid.t(k));
            for i in (0..400).step_by(7) {
                assert!((v.grad[k][i] - expect).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn feedback_examples() {
        let s = brownian(32, 8);
        let g = s.grid;
        let v = ValueField::from_phi(g, vec![g.xs().iter().map(|x| 0.7 * x).collect(); 9]);
        let c = feedback_control(&v, &s);
        assert!(c.alpha.iter().flatten().all(|a| (a + 0.7).abs() < 1e-12));
        let mut s2 = s.clone();
        s2.coeffs.sigma = Expr::constant(2.0);
        let q = ValueField::from_phi(g, vec![g.xs().iter().map(|x| 0.5 * x * x).collect(); 9]);
        let c = feedback_control(&q, &s2);
        for i in 1..31 {
            assert!((c.alpha[3][i] + 2.0 * g.x(i)).abs() < 1e-9);
        }
        let b = estimate_bounds(&q);
        assert!((b.grad - 8.0).abs() <= g.dx());
        assert!((b.hess - 1.0).abs() < 1e-9);
        assert!(b.third < 1e-6);
        assert_eq!(feedback_control(&ValueField::zeros(g), &s).sup_alpha, 0.0);
    }

    #[test]
    fn node_mass_round_trip() {
        let lambda = Multiplier { atom0: 0.3, interior: vec![1.0, 2.0, 2.0, 1.5], atom_t: 0.7 };
        let ell = lambda.node_masses(0.25);
        assert_eq!(ell, vec![0.3, 0.25, 0.5, 0.5, 0.375 + 0.7]);
        let back = Multiplier::from_node_masses(&ell, 0.25);
        assert_eq!(back.atom0, 0.3);
        assert_eq!(back.interior[3], 2.0);
        assert!((back.atom_t - (1.075 - 0.5)).abs() < 1e-15);
        assert!((back.total_mass(0.25) - lambda.total_mass(0.25)).abs() < 1e-14);
    }

    #[test]
    fn value_functional_examples() {
        let s = brownian(400, 100);
        let f = fp_solve(&s, None, None).unwrap();
        let nu = s.initial_density().unwrap();
        let zero = ValueField::zeros(s.grid);
        assert_eq!(value_functional(&s, &zero, &f, &Multiplier::zeros(100), &nu).unwrap(), 0.0);
        let shifted = InitialLaw::Gaussian { mean: 0.6, variance: 1.0 }.density(&s.grid).unwrap();
        let h = value_functional(&s, &zero, &f, &Multiplier::zeros(100), &shifted).unwrap();
        assert!((h - 0.18).abs() < 1e-6);
        let beta = 0.8;
        let v = hjb_solve(&s, &f, &Multiplier::terminal(100, beta), None).unwrap();
        let fc = fp_solve(&s, Some(&v), None).unwrap();
        let j = value_functional(&s, &v, &fc, &Multiplier::terminal(100, beta), &nu).unwrap();
        assert!((j - 0.5 * beta * beta).abs() < 1e-6, "{j}");
    }
}
