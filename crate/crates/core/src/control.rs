//! Multiplier search and McKean-Vlasov fixed point.
//!
//! The multiplier is handled through its node masses ℓ_0..ℓ_nt (see
//! [`Multiplier::node_masses`]). For a given ℓ the primal map solves the HJB
//! equation, tilts the initial law and solves the FP equation; the dual
//! step then moves ℓ towards the complementarity conditions
//! `ℓ ≥ 0, g ≤ 0, ℓ·g = 0` with `g_n = Ψ(μ_n) − ε`.
//!
//! The default dual step is a primal-dual active-set Newton step built on a
//! model Jacobian of g with respect to ℓ (Gaussian moment propagation).
//! Plain projected ascent with the same diagonal scaling is available as
//! [`DualMethod::Uzawa`]. Both use the adaptive step length: start at
//! `uzawa_step`, halve whenever the KKT residual fails to decrease.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{mean_x, Dynamics};
use crate::fp::{fp_solve_with, FaceControl, FpError, FpOptions, MarginalFlow};
use crate::hjb::{
    constraint_along, hjb_solve_with, value_functional_with, HjbError, HjbOptions, Multiplier, ValueField,
};
use crate::model::{qualification_check, validate_scenario, ConstraintEval, ModelError, Scenario};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("scenario failed validation: {0}")]
    Validation(String),
    #[error("dual iteration did not converge after {iterations} iterations (violation {violation:e}, slackness {slackness:e})")]
    NotConverged { iterations: usize, violation: f64, slackness: f64, trace: Vec<TraceRecord> },
    #[error("McKean-Vlasov iteration stalled for {stall} iterations (distances {distances:?})")]
    OscillationDetected { stall: usize, distances: Vec<f64> },
    #[error("McKean-Vlasov iteration did not converge after {iterations} iterations (distance {distance:e})")]
    FixedPointNotConverged { iterations: usize, distance: f64 },
    #[error(transparent)]
    Fp(#[from] FpError),
    #[error(transparent)]
    Hjb(#[from] HjbError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the optimal initial law is formed from ν₀.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum InitialLawPolicy {
    /// μ₀ ∝ exp(−φ₀ − λ({0}) ψ̂₀) ν₀: the first-order condition of the full problem.
    Optimal,
    /// μ₀ ∝ exp(−λ({0}) ψ̂₀) ν₀: only the atom at 0 tilts the initial law.
    AtomTilt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum DualMethod {
    ActiveSetNewton,
    Uzawa,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SolverOptions {
    pub uzawa_step: f64,
    pub tol_primal: f64,
    pub tol_slack: f64,
    pub max_outer: usize,
    /// McKean-Vlasov damping ω.
    pub damping: f64,
    pub seed: u64,
    pub tol_active: f64,
    pub qual_floor: f64,
    pub tol_fp: f64,
    pub stall_limit: usize,
    pub max_fixed_point: usize,
    pub initial_law: InitialLawPolicy,
    pub dual_method: DualMethod,
    pub cfl_max: f64,
    pub max_substeps: usize,
    pub blowup_cap: f64,
    pub hamiltonian_cap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            uzawa_step: 1.0,
            tol_primal: 1e-4,
            tol_slack: 1e-3,
            max_outer: 200,
            damping: 0.5,
            seed: 0,
            tol_active: 1e-3,
            qual_floor: crate::model::DEFAULT_QUAL_FLOOR,
            tol_fp: 1e-5,
            stall_limit: 5,
            max_fixed_point: 200,
            initial_law: InitialLawPolicy::Optimal,
            dual_method: DualMethod::ActiveSetNewton,
            cfl_max: 4.0,
            max_substeps: 64,
            blowup_cap: 1e6,
            hamiltonian_cap: 1e4,
        }
    }
}

impl SolverOptions {
    fn fp(&self) -> FpOptions {
        FpOptions { cfl_max: self.cfl_max, max_substeps: self.max_substeps }
    }

    fn hjb(&self) -> HjbOptions {
        HjbOptions { blowup_cap: self.blowup_cap, hamiltonian_cap: self.hamiltonian_cap }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub violation: f64,
    pub slackness: f64,
    pub kkt_residual: f64,
    pub dual_step: f64,
    pub value: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub flow: MarginalFlow,
    pub value_field: ValueField,
    pub lambda: Multiplier,
    /// Node masses ℓ_0..ℓ_nt of the multiplier.
    pub node_masses: Vec<f64>,
    pub tilted_init: Vec<f64>,
    pub optimal_value: f64,
    pub slackness_residual: f64,
    pub constraint_violation: f64,
    /// Ψ(μ_n) − ε at every node.
    pub constraint_gap: Vec<f64>,
    /// ψ̂_n used for the HJB source and the initial tilt.
    pub psi_hat: Vec<Vec<f64>>,
    pub coupling: Option<Vec<Vec<f64>>>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub fixed_point_iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
    pub qualification_warnings: Vec<String>,
    pub initial_law: InitialLawPolicy,
}

impl SolveReport {
    /// Node indices where the constraint is active within `tol`.
    pub fn active_nodes(&self, tol: f64) -> Vec<bool> {
        self.constraint_gap.iter().map(|g| *g >= -tol).collect()
    }

    /// Full ∂ₓφ at node 0 including the atom at 0, as it enters the initial tilt.
    pub fn initial_gradient(&self) -> Vec<f64> {
        let dx = self.flow.grid.dx();
        let n = self.flow.grid.nx;
        let (g_psi, _) = crate::hjb::derivatives(&self.psi_hat[0], dx);
        (0..n)
            .map(|i| {
                let base = if self.initial_law == InitialLawPolicy::Optimal { self.value_field.grad[0][i] } else { 0.0 };
                base + self.lambda.atom0 * g_psi[i]
            })
            .collect()
    }
}

struct Primal {
    ell: Vec<f64>,
    multiplier: Multiplier,
    value_field: ValueField,
    tilted: Vec<f64>,
    flow: MarginalFlow,
    cons: Vec<ConstraintEval>,
    psi_hat: Vec<Vec<f64>>,
    gap: Vec<f64>,
    value: f64,
}

impl Primal {
    fn violation(&self) -> f64 {
        self.gap.iter().fold(0.0, |m, g| m.max(*g))
    }

    fn slackness(&self) -> f64 {
        self.ell.iter().zip(&self.gap).map(|(l, g)| l * g.abs()).sum()
    }
}

struct Problem<'a> {
    s: &'a Scenario,
    dynamics: &'a Dynamics,
    coupling: Option<&'a [Vec<f64>]>,
    nu0: Vec<f64>,
    opts: &'a SolverOptions,
}

impl Problem<'_> {
    fn evaluate(&self, ell: &[f64], psi_hat: Vec<Vec<f64>>) -> Result<Primal, SolveError> {
        let g = &self.s.grid;
        let multiplier = Multiplier::from_node_masses(ell, g.dt());
        let v = hjb_solve_with(self.dynamics, &psi_hat, &multiplier, self.coupling, &self.opts.hjb())?;
        let tilted = tilt(&self.nu0, &psi_hat[0], ell[0], (self.opts.initial_law == InitialLawPolicy::Optimal).then_some(&v.phi[0]), g.dx());
        let fc = FaceControl::from_value(&v, self.dynamics);
        let flow = fp_solve_with(self.dynamics, &tilted, &fc, &self.opts.fp())?;
        let cons = constraint_along(self.s, &flow.densities);
        let gap = cons.iter().map(|c| c.value - self.s.epsilon).collect();
        let value = value_functional_with(self.dynamics, &fc, &flow, &tilted, &self.nu0)?;
        Ok(Primal { ell: ell.to_vec(), multiplier, value_field: v, tilted, flow, cons, psi_hat, gap, value })
    }

    /// Model Jacobian J_nm ≈ ∂g_n/∂ℓ_m from Gaussian moment propagation.
    fn model_jacobian(&self, p: &Primal) -> DMatrix<f64> {
        let g = &self.s.grid;
        let (nt, dt, dx) = (g.nt, g.dt(), g.dx());
        let n = nt + 1;
        let c = &self.s.constraint;
        let mut q = vec![0.0; nt];
        let mut r = vec![1.0; nt];
        for k in 0..nt {
            let mu = &p.flow.densities[k];
            let t = g.t(k);
            q[k] = (0..g.nx)
                .map(|i| {
                    let d = c.psi_dx(t, g.x(i));
                    self.dynamics.a[k][i] * d * d * mu[i]
                })
                .sum::<f64>()
                * dx;
            r[k] = (dt * self.dynamics.mean_drift_slope(k, mu)).exp();
        }
        let mu0 = &p.flow.densities[0];
        let psi0: Vec<f64> = (0..g.nx).map(|i| c.psi(0.0, g.x(i))).collect();
        let m0: f64 = psi0.iter().zip(mu0).map(|(a, b)| a * b).sum::<f64>() * dx;
        let v0: f64 = psi0.iter().zip(mu0).map(|(a, b)| (a - m0).powi(2) * b).sum::<f64>() * dx;
        let slope: Vec<f64> = p.cons.iter().map(|e| e.slope).collect();
        // p0[n] = P(0, n), s_acc[n] = Σ_{k<n} dt Q_k P(k+1, n)²
        let mut p0 = vec![1.0; n];
        let mut s_acc = vec![0.0; n];
        for k in 0..nt {
            p0[k + 1] = p0[k] * r[k];
            s_acc[k + 1] = r[k] * r[k] * s_acc[k] + dt * q[k];
        }
        let optimal = self.opts.initial_law == InitialLawPolicy::Optimal;
        let mut j = DMatrix::zeros(n, n);
        for nn in 0..n {
            for m in 0..n {
                let lo = nn.min(m);
                let hi = nn.max(m);
                let prop = p0[hi] / p0[lo];
                let tilt = if optimal || m == 0 { v0 * p0[lo] * p0[lo] } else { 0.0 };
                j[(nn, m)] = -slope[nn] * slope[m] * prop * (s_acc[lo] + tilt);
            }
        }
        j
    }

    fn scaling(j: &DMatrix<f64>) -> Vec<f64> {
        let max = (0..j.nrows()).fold(0.0f64, |m, i| m.max(j[(i, i)].abs()));
        (0..j.nrows()).map(|i| 1.0 / j[(i, i)].abs().max(1e-8 * max).max(1e-300)).collect()
    }

    fn kkt_residual(p: &Primal, kappa: &[f64]) -> f64 {
        p.ell
            .iter()
            .zip(&p.gap)
            .zip(kappa)
            .map(|((l, g), k)| (l - (l + k * g).max(0.0)).abs())
            .fold(0.0, f64::max)
    }

    fn direction(&self, p: &Primal, j: &DMatrix<f64>, kappa: &[f64]) -> Vec<f64> {
        let n = p.ell.len();
        match self.opts.dual_method {
            DualMethod::Uzawa => (0..n).map(|i| kappa[i] * p.gap[i]).collect(),
            DualMethod::ActiveSetNewton => {
                // quadratic model of the dual: maximize gᵀδ + ½ δᵀJδ over ℓ + δ ≥ 0
                let h = -(j + j.transpose()) * 0.5;
                let c = &h * DVector::from_column_slice(&p.ell) + DVector::from_column_slice(&p.gap);
                let y = nonnegative_qp(&h, &c, &p.ell);
                (0..n).map(|i| y[i] - p.ell[i]).collect()
            }
        }
    }
}

/// Minimizes ½ yᵀHy − cᵀy over y ≥ 0 for symmetric positive definite H by
/// the Lawson-Hanson active-set method, starting from the support of `start`.
pub(crate) fn nonnegative_qp(h: &DMatrix<f64>, c: &DVector<f64>, start: &[f64]) -> Vec<f64> {
    let n = c.len();
    let scale = (0..n).fold(0.0f64, |m, i| m.max(h[(i, i)].abs())).max(1e-300);
    let ridge = 1e-12 * scale;
    let mut y: Vec<f64> = start.iter().map(|v| v.max(0.0)).collect();
    let mut free: Vec<bool> = y.iter().map(|v| *v > 0.0).collect();
    let solve_free = |free: &[bool]| -> Option<Vec<f64>> {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let mut z = vec![0.0; n];
        if idx.is_empty() {
            return Some(z);
        }
        let m = idx.len();
        let mut a = DMatrix::zeros(m, m);
        let mut b = DVector::zeros(m);
        for (r, &i) in idx.iter().enumerate() {
            b[r] = c[i];
            for (q, &k) in idx.iter().enumerate() {
                a[(r, q)] = h[(i, k)];
            }
            a[(r, r)] += ridge;
        }
        let sol = a.clone().cholesky().map(|ch| ch.solve(&b)).or_else(|| a.lu().solve(&b))?;
        for (r, &i) in idx.iter().enumerate() {
            z[i] = sol[r];
        }
        Some(z)
    };
    let mut outer = 0;
    let mut entering: Option<usize> = None;
    loop {
        // inner loop: move to the optimum on the free set while staying feasible
        let mut inner = 0;
        loop {
            inner += 1;
            let Some(z) = solve_free(&free) else { return y };
            let bad: Vec<usize> = (0..n).filter(|&i| free[i] && z[i] <= 0.0).collect();
            if bad.is_empty() || inner > n + 5 {
                y = z.iter().map(|v| v.max(0.0)).collect();
                break;
            }
            if bad.len() == 1 && Some(bad[0]) == entering && y[bad[0]] == 0.0 {
                // the entering variable cannot move: drop it and stop
                free[bad[0]] = false;
                entering = None;
                continue;
            }
            let mut alpha = 1.0f64;
            for &i in &bad {
                let d = y[i] - z[i];
                if d > 0.0 {
                    alpha = alpha.min(y[i] / d);
                }
            }
            for i in 0..n {
                if free[i] {
                    y[i] += alpha * (z[i] - y[i]);
                    if y[i] <= 1e-15 * scale.max(1.0) {
                        y[i] = 0.0;
                        free[i] = false;
                    }
                }
            }
        }
        outer += 1;
        let hy = h * DVector::from_column_slice(&y);
        let mut best = None;
        let mut best_w = 1e-13 * c.amax().max(1e-300);
        for i in 0..n {
            if !free[i] {
                let w = c[i] - hy[i];
                if w > best_w {
                    best_w = w;
                    best = Some(i);
                }
            }
        }
        match best {
            Some(i) if outer <= 3 * n => {
                free[i] = true;
                entering = Some(i);
            }
            _ => return y,
        }
    }
}

/// μ₀ ∝ exp(−ℓ₀ ψ̂₀ − φ₀) ν₀, normalized on the grid.
pub(crate) fn tilt(nu0: &[f64], psi0: &[f64], atom0: f64, phi0: Option<&Vec<f64>>, dx: f64) -> Vec<f64> {
    let expo: Vec<f64> = (0..nu0.len())
        .map(|i| -atom0 * psi0[i] - phi0.map_or(0.0, |p| p[i]))
        .collect();
    let max = expo
        .iter()
        .zip(nu0)
        .filter(|(_, n)| **n > 0.0)
        .fold(f64::NEG_INFINITY, |m, (e, _)| m.max(*e));
    let mut out: Vec<f64> = expo.iter().zip(nu0).map(|(e, n)| n * (e - max).exp()).collect();
    let mass: f64 = out.iter().sum::<f64>() * dx;
    for o in out.iter_mut() {
        *o /= mass;
    }
    out
}

/// Solves the constrained problem with the drift frozen as in `dynamics`.
pub fn solve_frozen(
    s: &Scenario,
    dynamics: &Dynamics,
    opts: &SolverOptions,
    coupling: Option<&[Vec<f64>]>,
    warm_start: Option<&[f64]>,
) -> Result<SolveReport, SolveError> {
    let g = &s.grid;
    let n = g.nt + 1;
    let problem = Problem { s, dynamics, coupling, nu0: s.initial_density()?, opts };
    let ell0 = warm_start.map_or(vec![0.0; n], |w| w.to_vec());
    let base_psi: Vec<Vec<f64>> = {
        let init_flow = MarginalFlow::constant(*g, &problem.nu0);
        constraint_along(s, &init_flow.densities).into_iter().map(|c| c.derivative).collect()
    };
    let mut cur = problem.evaluate(&ell0, base_psi)?;
    let mut tau = opts.uzawa_step;
    let mut trace = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut j = problem.model_jacobian(&cur);
    let mut kappa = Problem::scaling(&j);
    let mut residual = Problem::kkt_residual(&cur, &kappa);
    loop {
        let qual = qualification_check(s, &cur.flow.densities, opts.tol_active, opts.qual_floor);
        if !qual.passed {
            let msg = format!(
                "qualification fails at {} active time(s){}",
                qual.per_time.iter().filter(|p| **p == Some(false)).count(),
                if qual.heuristic { " (heuristic check outside the linear setting)" } else { "" }
            );
            if !warnings.contains(&msg) {
                warnings.push(msg);
            }
        }
        if cur.violation() <= opts.tol_primal && cur.slackness() <= opts.tol_slack {
            converged = true;
            break;
        }
        if iterations >= opts.max_outer {
            break;
        }
        iterations += 1;
        let delta = problem.direction(&cur, &j, &kappa);
        let cand_ell: Vec<f64> = cur.ell.iter().zip(&delta).map(|(l, d)| (l + tau * d).max(0.0)).collect();
        let psi: Vec<Vec<f64>> = cur.cons.iter().map(|c| c.derivative.clone()).collect();
        let cand = problem.evaluate(&cand_ell, psi)?;
        let cand_res = Problem::kkt_residual(&cand, &kappa);
        let cand_done = cand.violation() <= opts.tol_primal && cand.slackness() <= opts.tol_slack;
        let accepted = cand_done || cand_res < residual || tau < 1e-4;
        trace.push(TraceRecord {
            iteration: iterations,
            violation: cand.violation(),
            slackness: cand.slackness(),
            kkt_residual: cand_res,
            dual_step: tau,
            value: cand.value,
            accepted,
        });
        if accepted {
            cur = cand;
            j = problem.model_jacobian(&cur);
            kappa = Problem::scaling(&j);
            residual = Problem::kkt_residual(&cur, &kappa);
            tau = if tau < 1e-4 { opts.uzawa_step } else { (2.0 * tau).min(opts.uzawa_step) };
        } else {
            tau *= 0.5;
        }
    }
    if !converged {
        return Err(SolveError::NotConverged {
            iterations,
            violation: cur.violation(),
            slackness: cur.slackness(),
            trace,
        });
    }
    Ok(SolveReport {
        constraint_violation: cur.violation(),
        slackness_residual: cur.slackness(),
        kkt_residual: residual,
        flow: cur.flow,
        value_field: cur.value_field,
        lambda: cur.multiplier,
        node_masses: cur.ell,
        tilted_init: cur.tilted,
        optimal_value: cur.value,
        constraint_gap: cur.gap,
        psi_hat: cur.psi_hat,
        coupling: coupling.map(|c| c.to_vec()),
        iterations,
        fixed_point_iterations: 0,
        converged,
        trace,
        qualification_warnings: warnings,
        initial_law: opts.initial_law,
    })
}

fn check_valid(s: &Scenario) -> Result<(), SolveError> {
    let report = validate_scenario(s);
    if report.passed() {
        Ok(())
    } else {
        let msgs: Vec<String> = report.failures().iter().map(|c| format!("{}: {}", c.name, c.message)).collect();
        Err(SolveError::Validation(msgs.join("; ")))
    }
}

/// Dual iteration for a scenario whose drift does not depend on the law
/// (law-dependent drifts are frozen at ν₀; use [`solve_mckean_vlasov`]).
pub fn solve_constrained(s: &Scenario, opts: &SolverOptions) -> Result<SolveReport, SolveError> {
    check_valid(s)?;
    let dynamics = Dynamics::new(s, None);
    solve_frozen(s, &dynamics, opts, None, None)
}

/// c̄_k(x) = ∫ δb/δμ(y, μ_k, x) ∂ₓφ_k(y) μ_k(dy).
pub fn coupling_field(s: &Scenario, frozen: &[Vec<f64>], grad: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let g = &s.grid;
    let (nx, dx) = (g.nx, g.dx());
    let kernel = s.coeffs.grad_w.is_some();
    let n = nx as isize;
    let w: Vec<f64> = if kernel { (-(n - 1)..n).map(|d| s.coeffs.grad_w(d as f64 * dx)).collect() } else { Vec::new() };
    (0..=g.nt)
        .map(|k| {
            let t = g.t(k);
            let mu = &frozen[k];
            let p = &grad[k];
            let m1 = mean_x(g, mu);
            let mut out = vec![0.0; nx];
            if kernel {
                // (∇W ∗ μ)(y_j)
                let conv: Vec<f64> = (0..nx)
                    .map(|jj| (0..nx).map(|l| w[jj + nx - 1 - l] * mu[l]).sum::<f64>() * dx)
                    .collect();
                let centre: f64 = (0..nx).map(|jj| conv[jj] * p[jj] * mu[jj]).sum::<f64>() * dx;
                for (i, o) in out.iter_mut().enumerate() {
                    let direct: f64 = (0..nx).map(|jj| w[jj + nx - 1 - i] * p[jj] * mu[jj]).sum::<f64>() * dx;
                    *o += -direct + centre;
                }
            }
            if s.coeffs.drift.uses(crate::expr::Var::M1) {
                let dm: f64 = (0..nx).map(|jj| s.coeffs.b_dm1(t, g.x(jj), m1) * p[jj] * mu[jj]).sum::<f64>() * dx;
                for (i, o) in out.iter_mut().enumerate() {
                    *o += dm * (g.x(i) - m1);
                }
            }
            out
        })
        .collect()
}

fn sup_l1(a: &[Vec<f64>], b: &[Vec<f64>], dx: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() * dx)
        .fold(0.0, f64::max)
}

/// Damped fixed point over the law entering the drift.
pub fn solve_mckean_vlasov(s: &Scenario, opts: &SolverOptions) -> Result<SolveReport, SolveError> {
    if !s.mckean_vlasov {
        return solve_constrained(s, opts);
    }
    check_valid(s)?;
    let g = &s.grid;
    let dx = g.dx();
    let nu0 = s.initial_density()?;
    let mut mu_hat = vec![nu0; g.nt + 1];
    let mut grad_prev: Option<Vec<Vec<f64>>> = None;
    let mut warm: Option<Vec<f64>> = None;
    let mut distances = Vec::new();
    let mut best = f64::INFINITY;
    let mut stall = 0;
    for it in 1..=opts.max_fixed_point {
        let dynamics = Dynamics::new(s, Some(&mu_hat));
        let coupling = grad_prev.as_ref().map(|gp| coupling_field(s, &mu_hat, gp));
        let mut rep = solve_frozen(s, &dynamics, opts, coupling.as_deref(), warm.as_deref())?;
        let dist = sup_l1(&rep.flow.densities, &mu_hat, dx);
        distances.push(dist);
        if dist <= opts.tol_fp {
            rep.fixed_point_iterations = it;
            return Ok(rep);
        }
        if dist < best {
            best = dist;
            stall = 0;
        } else {
            stall += 1;
            if stall >= opts.stall_limit {
                return Err(SolveError::OscillationDetected { stall, distances });
            }
        }
        let w = opts.damping;
        for (mh, f) in mu_hat.iter_mut().zip(&rep.flow.densities) {
            for (a, b) in mh.iter_mut().zip(f) {
                *a = (1.0 - w) * *a + w * b;
            }
        }
        grad_prev = Some(rep.value_field.grad.clone());
        warm = Some(rep.node_masses.clone());
    }
    Err(SolveError::FixedPointNotConverged { iterations: opts.max_fixed_point, distance: *distances.last().unwrap_or(&f64::NAN) })
}
