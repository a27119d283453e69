//! Forward Fokker-Planck solver.
//!
//! Finite volumes on cell centres with a Scharfetter-Gummel (Chang-Cooper
//! type) exponentially fitted flux
//! `F = (D/dx) [B(-w) μ_i - B(w) μ_{i+1}]`, `B(z) = z / (e^z - 1)`,
//! `w = v dx / D`, `D = a/2`, `v = b + u - a'/2`, where `u` is the control
//! drift increment. Each step is fully implicit, so the update matrix is an
//! M-matrix with unit column sums: positivity and mass are preserved exactly
//! and discrete Gibbs states of gradient drifts are stationary.

use crate::dynamics::Dynamics;
use crate::hjb::ValueField;
use crate::model::{ModelError, Scenario, SpaceTimeGrid};
use crate::tridiag;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FpError {
    #[error("step {step}: {required} sub-steps needed, limit is {limit}")]
    CFLViolation { step: usize, required: usize, limit: usize },
    #[error("step {step}: negative density {value:e}")]
    NegativeDensity { step: usize, value: f64 },
    #[error("core sub-domain has {cells} cells, at least 4 needed")]
    DegenerateDensity { cells: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpOptions {
    /// Sub-step when dt·max|v|/dx exceeds this.
    pub cfl_max: f64,
    pub max_substeps: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions { cfl_max: 4.0, max_substeps: 64 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFlow {
    pub grid: SpaceTimeGrid,
    /// `(nt + 1) x nx` densities.
    pub densities: Vec<Vec<f64>>,
    /// |mass − 1| removed by renormalization at each step.
    pub leaked_mass: Vec<f64>,
    pub substeps: usize,
}

impl MarginalFlow {
    pub fn constant(grid: SpaceTimeGrid, mu: &[f64]) -> MarginalFlow {
        MarginalFlow {
            grid,
            densities: vec![mu.to_vec(); grid.nt + 1],
            leaked_mass: vec![0.0; grid.nt + 1],
            substeps: 0,
        }
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.densities[k].iter().sum::<f64>() * self.grid.dx()
    }

    pub fn mean(&self, k: usize) -> f64 {
        crate::dynamics::mean_x(&self.grid, &self.densities[k])
    }

    pub fn variance(&self, k: usize) -> f64 {
        let m = self.mean(k);
        let dx = self.grid.dx();
        self.densities[k].iter().enumerate().map(|(i, r)| (self.grid.x(i) - m).powi(2) * r).sum::<f64>() * dx
    }
}

/// Control drift increment σα on the interior cell faces, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceControl {
    /// `nt x (nx - 1)`.
    pub u: Vec<Vec<f64>>,
}

impl FaceControl {
    pub fn zero(grid: &SpaceTimeGrid) -> FaceControl {
        FaceControl { u: vec![vec![0.0; grid.nx - 1]; grid.nt] }
    }

    /// u = −a ∂ₓφ on faces, with ∂ₓφ the face difference of φ_k.
    pub fn from_value(v: &ValueField, dynamics: &Dynamics) -> FaceControl {
        let g = &v.grid;
        let dx = g.dx();
        let u = (0..g.nt)
            .map(|k| {
                let phi = &v.phi[k];
                (0..g.nx - 1).map(|i| -dynamics.a_face[k][i] * (phi[i + 1] - phi[i]) / dx).collect()
            })
            .collect();
        FaceControl { u }
    }

    /// Adds σ·δ(t, x) to the drift increment.
    pub fn perturbed(&self, dynamics: &Dynamics, delta: impl Fn(f64, f64) -> f64) -> FaceControl {
        let g = &dynamics.grid;
        let u = self
            .u
            .iter()
            .enumerate()
            .map(|(k, row)| {
                row.iter()
                    .enumerate()
                    .map(|(i, u)| u + dynamics.sigma_face[k][i] * delta(g.t(k), g.x_face(i)))
                    .collect()
            })
            .collect();
        FaceControl { u }
    }

    /// ∑_k dt ∑_faces ½ (u/σ)² (μ_i + μ_{i+1})/2 dx.
    pub fn cost(&self, dynamics: &Dynamics, flow: &MarginalFlow) -> f64 {
        let g = &dynamics.grid;
        let (dx, dt) = (g.dx(), g.dt());
        let mut total = 0.0;
        for k in 0..g.nt {
            let mu = &flow.densities[k];
            let mut acc = 0.0;
            for i in 0..g.nx - 1 {
                let alpha = self.u[k][i] / dynamics.sigma_face[k][i];
                acc += 0.5 * alpha * alpha * 0.5 * (mu[i] + mu[i + 1]);
            }
            total += acc * dx * dt;
        }
        total
    }
}

pub(crate) fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else if z > 700.0 {
        0.0
    } else {
        z / z.exp_m1()
    }
}

/// Solves the FP equation for the scenario's own coefficients, with the
/// feedback control of `control` and initial slice `initial` (the scenario's
/// initial law when absent).
pub fn fp_solve(s: &Scenario, control: Option<&ValueField>, initial: Option<&[f64]>) -> Result<MarginalFlow, FpError> {
    let dynamics = Dynamics::new(s, None);
    let mu0 = match initial {
        Some(m) => m.to_vec(),
        None => s.initial_density()?,
    };
    let fc = match control {
        Some(v) => FaceControl::from_value(v, &dynamics),
        None => FaceControl::zero(&s.grid),
    };
    fp_solve_with(&dynamics, &mu0, &fc, &FpOptions::default())
}

pub fn fp_solve_with(
    dynamics: &Dynamics,
    mu0: &[f64],
    control: &FaceControl,
    opts: &FpOptions,
) -> Result<MarginalFlow, FpError> {
    let g = dynamics.grid;
    let (nx, dx, dt) = (g.nx, g.dx(), g.dt());
    let mut densities = Vec::with_capacity(g.nt + 1);
    let mut leaked = Vec::with_capacity(g.nt + 1);
    densities.push(mu0.to_vec());
    leaked.push(0.0);
    let mut max_sub = 1;
    let mut p = vec![0.0; nx - 1];
    let mut q = vec![0.0; nx - 1];
    let (mut lower, mut diag, mut upper) = (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx]);
    for k in 0..g.nt {
        let mut vmax: f64 = 0.0;
        for i in 0..nx - 1 {
            let d = 0.5 * dynamics.a_face[k][i];
            let v = dynamics.b_face[k][i] + control.u[k][i] - 0.5 * dynamics.da_face[k][i];
            vmax = vmax.max(v.abs());
            let w = v * dx / d;
            p[i] = d / dx * bernoulli(-w);
            q[i] = d / dx * bernoulli(w);
        }
        let courant = dt * vmax / dx;
        let nsub = ((courant / opts.cfl_max).ceil() as usize).max(1);
        if nsub > opts.max_substeps {
            return Err(FpError::CFLViolation { step: k, required: nsub, limit: opts.max_substeps });
        }
        max_sub = max_sub.max(nsub);
        let r = dt / nsub as f64 / dx;
        for i in 0..nx {
            let right = if i + 1 < nx { p[i] } else { 0.0 };
            let left = if i > 0 { q[i - 1] } else { 0.0 };
            diag[i] = 1.0 + r * (right + left);
            upper[i] = if i + 1 < nx { -r * q[i] } else { 0.0 };
            lower[i] = if i > 0 { -r * p[i - 1] } else { 0.0 };
        }
        let mut mu = densities[k].clone();
        for _ in 0..nsub {
            mu = tridiag::solve(&lower, &diag, &upper, &mu);
        }
        let min = mu.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-12 {
            return Err(FpError::NegativeDensity { step: k, value: min });
        }
        for m in mu.iter_mut() {
            *m = m.max(0.0);
        }
        let mass: f64 = mu.iter().sum::<f64>() * dx;
        leaked.push((mass - 1.0).abs());
        for m in mu.iter_mut() {
            *m /= mass;
        }
        densities.push(mu);
    }
    Ok(MarginalFlow { grid: g, densities, leaked_mass: leaked, substeps: max_sub })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogDensityRecord {
    pub t: f64,
    /// ∫ log μ dμ.
    pub entropy: f64,
    /// ∫ |∂ₓ log μ|² dμ.
    pub score2: f64,
    /// ∫ |∂ₓ log μ|⁴ dμ.
    pub score4: f64,
    /// ∫ |∂²ₓ log μ|² dμ.
    pub hess2: f64,
    /// ∫ |∂³ₓ log μ|² dμ.
    pub third2: f64,
    pub core_lo: f64,
    pub core_hi: f64,
}

pub const DENSITY_FLOOR: f64 = 1e-12;

/// Longest run of cells with density above the floor.
pub(crate) fn core_range(mu: &[f64], floor: f64) -> (usize, usize) {
    let (mut best, mut cur_start) = ((0, 0), None);
    for (i, &m) in mu.iter().enumerate() {
        if m > floor {
            let s = *cur_start.get_or_insert(i);
            if i + 1 - s > best.1 - best.0 {
                best = (s, i + 1);
            }
        } else {
            cur_start = None;
        }
    }
    best
}

pub fn log_density_slice(grid: &SpaceTimeGrid, t: f64, mu: &[f64]) -> Result<LogDensityRecord, FpError> {
    let (lo, hi) = core_range(mu, DENSITY_FLOOR);
    if hi - lo < 4 {
        return Err(FpError::DegenerateDensity { cells: hi - lo });
    }
    let dx = grid.dx();
    let l: Vec<f64> = mu.iter().map(|m| m.max(DENSITY_FLOOR).ln()).collect();
    let mut rec = LogDensityRecord {
        t,
        entropy: 0.0,
        score2: 0.0,
        score4: 0.0,
        hess2: 0.0,
        third2: 0.0,
        core_lo: grid.x(lo) - 0.5 * dx,
        core_hi: grid.x(hi - 1) + 0.5 * dx,
    };
    for i in lo..hi {
        let w = mu[i] * dx;
        rec.entropy += l[i] * w;
        if i >= lo + 1 && i + 1 < hi {
            let d1 = (l[i + 1] - l[i - 1]) / (2.0 * dx);
            let d2 = (l[i + 1] - 2.0 * l[i] + l[i - 1]) / (dx * dx);
            rec.score2 += d1 * d1 * w;
            rec.score4 += d1.powi(4) * w;
            rec.hess2 += d2 * d2 * w;
        }
        if i >= lo + 2 && i + 2 < hi {
            let d3 = (l[i + 2] - 2.0 * l[i + 1] + 2.0 * l[i - 1] - l[i - 2]) / (2.0 * dx.powi(3));
            rec.third2 += d3 * d3 * w;
        }
    }
    Ok(rec)
}

pub fn log_density_diagnostics(flow: &MarginalFlow) -> Result<Vec<LogDensityRecord>, FpError> {
    flow.densities
        .iter()
        .enumerate()
        .map(|(k, mu)| log_density_slice(&flow.grid, flow.grid.t(k), mu))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::{Coefficients, ConstraintFunctional, InitialLaw};
    use proptest::prelude::*;

    fn scenario(drift: &str, m0: f64, v0: f64, t: f64, nx: usize, nt: usize) -> Scenario {
        Scenario::new(
            SpaceTimeGrid::new(-8.0, 8.0, nx, t, nt).unwrap(),
            Coefficients::new(Expr::parse(drift).unwrap(), Expr::constant(1.0)),
            ConstraintFunctional::linear(Expr::x(), 0.0),
            InitialLaw::Gaussian { mean: m0, variance: v0 },
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn heat_flow_variance() {
        let s = scenario("0", 0.0, 1.0, 0.5, 400, 400);
        let f = fp_solve(&s, None, None).unwrap();
        assert!(f.mean(400).abs() < 1e-3);
        assert!((f.variance(400) - 1.5).abs() < 1e-2);
    }

    #[test]
    fn ou_stationary() {
        let s = scenario("-x", 0.0, 0.5, 2.0, 400, 400);
        let f = fp_solve(&s, None, None).unwrap();
        for k in [0, 100, 400] {
            assert!((f.variance(k) - 0.5).abs() < 5e-3, "k={k} var={}", f.variance(k));
        }
        let diff: f64 = f.densities[0].iter().zip(&f.densities[400]).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff * s.grid.dx() < 1e-10);
    }

    #[test]
    fn constant_push_shifts_mean() {
        let s = scenario("0", 0.0, 1.0, 1.0, 400, 400);
        let mut v = ValueField::zeros(s.grid);
        for k in 0..=s.grid.nt {
            for i in 0..s.grid.nx {
                v.phi[k][i] = -s.grid.x(i);
            }
        }
        let f = fp_solve(&s, Some(&v), None).unwrap();
        assert!((f.mean(400) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn gaussian_slice_log_density_functionals() {
        let g = SpaceTimeGrid::new(-8.0, 8.0, 800, 1.0, 8).unwrap();
        let mu = InitialLaw::Gaussian { mean: 0.0, variance: 1.0 }.density(&g).unwrap();
        let r = log_density_slice(&g, 0.0, &mu).unwrap();
        assert!((r.score2 - 1.0).abs() < 2e-2);
        assert!((r.hess2 - 1.0).abs() < 2e-2);
        assert!(r.third2 < 1e-6);
        assert!((r.score4 - 3.0).abs() < 6e-2);
    }

    #[test]
    fn degenerate_density_rejected() {
        let g = SpaceTimeGrid::new(-1.0, 1.0, 16, 1.0, 8).unwrap();
        let mut mu = vec![0.0; 16];
        mu[5] = 4.0;
        mu[6] = 4.0;
        assert!(matches!(log_density_slice(&g, 0.0, &mu), Err(FpError::DegenerateDensity { cells: 2 })));
    }

    #[test]
    fn cfl_limit_reported() {
        let s = scenario("0", 0.0, 1.0, 1.0, 64, 8);
        let d = Dynamics::new(&s, None);
        let mut fc = FaceControl::zero(&s.grid);
        fc.u[3].iter_mut().for_each(|u| *u = 1e4);
        let mu0 = s.initial_density().unwrap();
        let err = fp_solve_with(&d, &mu0, &fc, &FpOptions::default()).unwrap_err();
        assert!(matches!(err, FpError::CFLViolation { step: 3, .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mass_and_positivity(slope in -3.0f64..3.0, shift in -2.0f64..2.0, push in -2.0f64..2.0, m0 in -1.0f64..1.0) {
            let drift = format!("{slope} * x * tanh(x) + {shift} * sin(x)");
            let mut s = scenario(&drift, m0, 0.5, 1.0, 64, 16);
            s.coeffs.sigma = Expr::parse("1 + 0.3 * tanh(x)").unwrap();
            let d = Dynamics::new(&s, None);
            let fc = FaceControl { u: vec![vec![push; 63]; 16] };
            let mu0 = s.initial_density().unwrap();
            let f = fp_solve_with(&d, &mu0, &fc, &FpOptions::default()).unwrap();
            for k in 0..=16 {
                prop_assert!((f.mass(k) - 1.0).abs() < 1e-8);
                prop_assert!(f.leaked_mass[k] < 1e-12);
                prop_assert!(f.densities[k].iter().all(|&m| m >= 0.0));
            }
        }
    }
}
