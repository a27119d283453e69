//! Distances between solutions, the ε-stability sweep, multiplier recovery
//! from the flow, the gradient-flow push and the competitor inequality.

use rayon::prelude::*;

use crate::control::{solve_constrained, SolveError, SolveReport, SolverOptions};
use crate::dynamics::Dynamics;
use crate::fp::MarginalFlow;
use crate::hjb::{derivatives, hjb_step, relative_entropy, HjbOptions};
use crate::model::Scenario;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("the stability sweep needs a drift that does not depend on the law")]
    LawDependentDrift,
    #[error("baseline solve at epsilon = 0 failed: {0}")]
    Baseline(SolveError),
    #[error("qualification coefficient {value:.3e} below floor {floor:.1e} at cell {cell}")]
    QualificationFloor { cell: usize, value: f64, floor: f64 },
    #[error("report is not converged")]
    NotConverged,
    #[error("{fraction:.3} of the mass leaves the domain")]
    FlowEscape { fraction: f64 },
    #[error("push step h = {h} outside [0, {h_max}]")]
    StepOutOfRange { h: f64, h_max: f64 },
    #[error("bump must be C¹ on [t0, t1] within [0, T] with height at most 0.05 (got t0 = {t0}, t1 = {t1}, height = {height})")]
    InvalidBump { t0: f64, t1: f64, height: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Total variation ½ Σ |μ − ν| dx.
pub fn tv(mu: &[f64], nu: &[f64], dx: f64) -> f64 {
    0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>() * dx
}

/// W₁ = ∫ |F_μ − F_ν| dx for densities on the same cells, exact for
/// piecewise-constant densities.
pub fn w1(mu: &[f64], nu: &[f64], dx: f64) -> f64 {
    let mut diff = 0.0;
    let mut total = 0.0;
    for (a, b) in mu.iter().zip(nu) {
        let next = diff + (a - b) * dx;
        // |linear| integrated over one cell
        total += if diff * next >= 0.0 {
            0.5 * (diff.abs() + next.abs()) * dx
        } else {
            0.5 * (diff * diff + next * next) / (diff - next).abs() * dx
        };
        diff = next;
    }
    total
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilityRecord {
    pub epsilon: f64,
    pub entropy_gap: f64,
    pub tv_sup: f64,
    pub w1_sup: f64,
    pub multiplier_l1: f64,
    pub control_sup: f64,
    /// Largest |d/dt Ψ(μ^ε_t)| at the interior extrema of t ↦ Ψ(μ⁰_t).
    pub local_max_derivative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Slopes {
    pub entropy_gap: f64,
    pub tv_sup: f64,
    pub w1_sup: f64,
    pub multiplier_l1: f64,
    pub control_sup: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StabilitySweep {
    pub records: Vec<StabilityRecord>,
    /// Sweep points whose solve failed, with the error message.
    pub failed: Vec<(f64, String)>,
    pub slopes: Slopes,
    /// Number of maximal runs of active nodes in the ε = 0 solution.
    pub active_intervals: usize,
    /// tv_sup² ≤ 2 entropy_gap on every record.
    pub pinsker_holds: bool,
}

/// Least-squares slope of log y against log x over the points with y > 0.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn count_runs(active: &[bool]) -> usize {
    active.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(active.first() == Some(&true))
}

/// Compares a solution at level ε with the baseline at ε = 0.
pub fn compare(s: &Scenario, base: &SolveReport, other: &SolveReport, epsilon: f64) -> Result<StabilityRecord, AnalysisError> {
    let g = &s.grid;
    let (dx, dt) = (g.dx(), g.dt());
    // H(μ⁰|μ^ε) = H(μ⁰₀|μ^ε₀) + Σ_k dt ∫ ½|α^ε − α⁰|² dμ⁰_k
    let mut entropy_gap = relative_entropy(&base.tilted_init, &other.tilted_init, dx).map_err(SolveError::from)?;
    for k in 0..g.nt {
        let t = g.t(k);
        entropy_gap += (0..g.nx)
            .map(|i| {
                let sig = s.coeffs.sigma(t, g.x(i));
                let d = sig * (other.value_field.grad[k][i] - base.value_field.grad[k][i]);
                0.5 * d * d * base.flow.densities[k][i]
            })
            .sum::<f64>()
            * dx
            * dt;
    }
    let mut tv_sup: f64 = 0.0;
    let mut w1_sup: f64 = 0.0;
    for (a, b) in base.flow.densities.iter().zip(&other.flow.densities) {
        tv_sup = tv_sup.max(tv(a, b, dx));
        w1_sup = w1_sup.max(w1(a, b, dx));
    }
    let (la, lb) = (&other.lambda, &base.lambda);
    let multiplier_l1 = (la.atom0 - lb.atom0).abs()
        + la.interior.iter().zip(&lb.interior).map(|(x, y)| (x - y).abs()).sum::<f64>() * dt
        + (la.atom_t - lb.atom_t).abs();
    // slice 0 carries the atom at 0 through the initial tilt
    let mut control_sup = other
        .initial_gradient()
        .iter()
        .zip(base.initial_gradient())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    for k in 1..=g.nt {
        for i in 0..g.nx {
            control_sup = control_sup.max((other.value_field.grad[k][i] - base.value_field.grad[k][i]).abs());
        }
    }
    Ok(StabilityRecord {
        epsilon,
        entropy_gap,
        tv_sup,
        w1_sup,
        multiplier_l1,
        control_sup,
        local_max_derivative: local_max_derivative_check(&base.flow, &other.flow, s),
    })
}

/// Solves at ε = 0 and at every ε of `eps_list` (in parallel) and compares.
pub fn stability_sweep(s: &Scenario, eps_list: &[f64], opts: &SolverOptions) -> Result<StabilitySweep, AnalysisError> {
    if s.mckean_vlasov {
        return Err(AnalysisError::LawDependentDrift);
    }
    let base = solve_constrained(&s.with_epsilon(0.0), opts).map_err(AnalysisError::Baseline)?;
    let outcomes: Vec<(f64, Result<StabilityRecord, AnalysisError>)> = eps_list
        .par_iter()
        .map(|&eps| {
            let r = solve_constrained(&s.with_epsilon(eps), opts)
                .map_err(AnalysisError::from)
                .and_then(|rep| compare(s, &base, &rep, eps));
            (eps, r)
        })
        .collect();
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (eps, r) in outcomes {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failed.push((eps, e.to_string())),
        }
    }
    let eps: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
    let col = |f: fn(&StabilityRecord) -> f64| loglog_slope(&eps, &records.iter().map(f).collect::<Vec<_>>());
    let slopes = Slopes {
        entropy_gap: col(|r| r.entropy_gap),
        tv_sup: col(|r| r.tv_sup),
        w1_sup: col(|r| r.w1_sup),
        multiplier_l1: col(|r| r.multiplier_l1),
        control_sup: col(|r| r.control_sup),
    };
    let pinsker_holds = records.iter().all(|r| r.tv_sup * r.tv_sup <= 2.0 * r.entropy_gap + 1e-12);
    Ok(StabilitySweep {
        records,
        failed,
        slopes,
        active_intervals: count_runs(&base.active_nodes(opts.tol_active)),
        pinsker_holds,
    })
}

/// Ψ(μ_k) at every node of a flow.
pub fn constraint_curve(flow: &MarginalFlow, s: &Scenario) -> Vec<f64> {
    let g = &flow.grid;
    let dx = g.dx();
    flow.densities
        .iter()
        .enumerate()
        .map(|(k, mu)| {
            let t = g.t(k);
            let m: f64 = mu.iter().enumerate().map(|(i, v)| s.constraint.psi(t, g.x(i)) * v).sum::<f64>() * dx;
            s.constraint.value_of_mean(m)
        })
        .collect()
}

/// max |d/dt Ψ(flowB_t)| over the interior nodes where t ↦ Ψ(flowA_t)
/// attains its global maximum or minimum; 0 when no extremum is interior.
pub fn local_max_derivative_check(flow_a: &MarginalFlow, flow_b: &MarginalFlow, s: &Scenario) -> f64 {
    let ca = constraint_curve(flow_a, s);
    let cb = constraint_curve(flow_b, s);
    let n = ca.len();
    let dt = flow_a.grid.dt();
    let max = ca.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ca.iter().cloned().fold(f64::INFINITY, f64::min);
    if max - min <= 1e-14 * max.abs().max(1.0) {
        return 0.0;
    }
    let scale = (max - min).max(max.abs()).max(1e-300);
    let mut out: f64 = 0.0;
    for k in 1..n - 1 {
        let hit = (max - ca[k]).abs() <= 1e-12 * scale || (ca[k] - min).abs() <= 1e-12 * scale;
        if hit {
            out = out.max(((cb[k + 1] - cb[k - 1]) / (2.0 * dt)).abs());
        }
    }
    out
}

/// Result of recovering the interior multiplier from the flow.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MultiplierRecovery {
    /// λ̂ on every interior cell where recovery was attempted.
    pub recovered: Vec<Option<f64>>,
    /// Σ |λ̂ − λ| dt / Σ |λ| dt over the interior of the active runs.
    pub mismatch: f64,
    pub cells_used: usize,
}

/// E_μ[b ψ̂' + ½ a ψ̂'' − a φ' ψ̂'] at node k: the time derivative of Ψ
/// along the controlled flow.
fn generator_mean(dynamics: &Dynamics, k: usize, mu: &[f64], psi: &[f64], phi: &[f64]) -> f64 {
    let dx = dynamics.grid.dx();
    let (p1, p2) = derivatives(psi, dx);
    let (f1, _) = derivatives(phi, dx);
    (1..mu.len() - 1)
        .map(|i| {
            let (b, a) = (dynamics.b[k][i], dynamics.a[k][i]);
            mu[i] * (b * p1[i] + 0.5 * a * p2[i] - a * f1[i] * p1[i])
        })
        .sum::<f64>()
        * dx
}

/// Recovers the interior multiplier on active cells from the condition
/// dΨ(μ_t)/dt = 0: the HJB step without the cell's own multiplier gives the
/// λ-free part of the drift of Ψ, and the response to a unit multiplier
/// gives the coefficient ∫|σ ∂ₓψ̂|² dμ (times dt).
pub fn multiplier_recovery(report: &SolveReport, s: &Scenario, opts: &SolverOptions) -> Result<MultiplierRecovery, AnalysisError> {
    if !report.converged {
        return Err(AnalysisError::NotConverged);
    }
    let g = &s.grid;
    let (nt, nx, dt, dx) = (g.nt, g.nx, g.dt(), g.dx());
    let frozen = if s.mckean_vlasov { Some(report.flow.densities.as_slice()) } else { None };
    let dynamics = Dynamics::new(s, frozen);
    let hopts = HjbOptions { blowup_cap: opts.blowup_cap, hamiltonian_cap: opts.hamiltonian_cap };
    let active = report.active_nodes(opts.tol_active);
    let curve = constraint_curve(&report.flow, s);
    let mut recovered = vec![None; nt];
    for k in 0..nt {
        // the cell (t_k, t_{k+1}] is active when both ends are
        if !(active[k] && active[k + 1]) || k == 0 {
            continue;
        }
        let mu = &report.flow.densities[k + 1];
        let psi = &report.psi_hat[k + 1];
        let (p1, _) = derivatives(psi, dx);
        let qual: f64 = (0..nx).map(|i| dynamics.a[k][i] * p1[i] * p1[i] * mu[i]).sum::<f64>() * dx;
        if qual < opts.qual_floor {
            return Err(AnalysisError::QualificationFloor { cell: k, value: qual, floor: opts.qual_floor });
        }
        let base_source: Vec<f64> = (0..nx).map(|i| report.coupling.as_ref().map_or(0.0, |c| c[k][i])).collect();
        let unit_source: Vec<f64> = (0..nx).map(|i| base_source[i] + psi[i]).collect();
        let mut free = Vec::new();
        let mut unit = Vec::new();
        hjb_step(&dynamics, k, &report.value_field.phi[k + 1], &base_source, &hopts, &mut free);
        hjb_step(&dynamics, k, &report.value_field.phi[k + 1], &unit_source, &hopts, &mut unit);
        let d_free = generator_mean(&dynamics, k, mu, psi, &free);
        // the same expression is affine in the multiplier: D = D_free − λ coef
        let coef = d_free - generator_mean(&dynamics, k, mu, psi, &unit);
        let observed = (curve[k + 1] - curve[k]) / dt;
        recovered[k] = Some(((d_free - observed) / coef).max(0.0));
    }
    // mismatch over the interior of each run, one cell in from both ends
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0;
    for k in 0..nt {
        let inner = k >= 1 && k + 1 < nt && recovered[k - 1].is_some() && recovered[k].is_some() && recovered[k + 1].is_some();
        if inner {
            let lam = report.lambda.interior[k];
            num += (recovered[k].unwrap() - lam).abs() * dt;
            den += lam.abs() * dt;
            used += 1;
        }
    }
    let mismatch = if den > 0.0 { num / den } else if num == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(MultiplierRecovery { recovered, mismatch, cells_used: used })
}

/// Default upper bound on the push step.
pub const PUSH_H_MAX: f64 = 0.1;

/// Pushes a density along ẋ = −a ∂ₓ(δΨ/δμ) for time h starting at t: the cell
/// edges are moved with RK4 (8 sub-steps) and each cell's mass is spread
/// uniformly over its image, then rebinned onto the grid.
pub fn push_flow(mu: &[f64], s: &Scenario, h: f64, t: f64) -> Result<Vec<f64>, AnalysisError> {
    if !(0.0..=PUSH_H_MAX).contains(&h) {
        return Err(AnalysisError::StepOutOfRange { h, h_max: PUSH_H_MAX });
    }
    if h == 0.0 {
        return Ok(mu.to_vec());
    }
    let g = &s.grid;
    let (nx, dx) = (g.nx, g.dx());
    let c = &s.constraint;
    let mean: f64 = mu.iter().enumerate().map(|(i, m)| c.psi(t, g.x(i)) * m).sum::<f64>() * dx;
    let slope = c.g_prime(mean);
    let speed = |tau: f64, x: f64| -s.coeffs.a(tau, x) * slope * c.psi_dx(tau, x);
    let sub = 8;
    let step = h / sub as f64;
    let edges: Vec<f64> = (0..=nx).map(|i| g.x_min + i as f64 * dx).collect();
    let moved: Vec<f64> = edges
        .iter()
        .map(|&x0| {
            let mut x = x0;
            for j in 0..sub {
                let tau = t + j as f64 * step;
                let k1 = speed(tau, x);
                let k2 = speed(tau + 0.5 * step, x + 0.5 * step * k1);
                let k3 = speed(tau + 0.5 * step, x + 0.5 * step * k2);
                let k4 = speed(tau + step, x + step * k3);
                x += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            x
        })
        .collect();
    let mut out = vec![0.0; nx];
    let mut escaped = 0.0;
    let mut total = 0.0;
    for i in 0..nx {
        let mass = mu[i] * dx;
        total += mass;
        let (a, b) = (moved[i].min(moved[i + 1]), moved[i].max(moved[i + 1]));
        let width = b - a;
        if width <= 0.0 {
            continue;
        }
        let mut inside = 0.0;
        let lo = (((a - g.x_min) / dx).floor().max(0.0) as usize).min(nx - 1);
        let hi = (((b - g.x_min) / dx).ceil().max(0.0) as usize).min(nx);
        for j in lo..hi {
            let overlap = (b.min(edges[j + 1]) - a.max(edges[j])).max(0.0);
            if overlap > 0.0 {
                let part = mass * overlap / width;
                out[j] += part / dx;
                inside += part;
            }
        }
        escaped += mass - inside;
    }
    if total > 0.0 && escaped / total > 0.01 {
        return Err(AnalysisError::FlowEscape { fraction: escaped / total });
    }
    let m: f64 = out.iter().sum::<f64>() * dx;
    for v in out.iter_mut() {
        *v /= m;
    }
    Ok(out)
}

/// C¹ bump h(s) = height · sin²(π (s − t0)/(t1 − t0)) on [t0, t1], zero outside.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Bump {
    pub t0: f64,
    pub t1: f64,
    pub height: f64,
}

impl Bump {
    pub fn new(t0: f64, t1: f64, height: f64, horizon: f64) -> Result<Bump, AnalysisError> {
        if !(0.0 <= t0 && t0 < t1 && t1 <= horizon && (0.0..=0.05).contains(&height)) {
            return Err(AnalysisError::InvalidBump { t0, t1, height });
        }
        Ok(Bump { t0, t1, height })
    }

    pub fn value(&self, s: f64) -> f64 {
        if s <= self.t0 || s >= self.t1 {
            return 0.0;
        }
        let u = std::f64::consts::PI * (s - self.t0) / (self.t1 - self.t0);
        self.height * u.sin().powi(2)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if s <= self.t0 || s >= self.t1 {
            return 0.0;
        }
        let w = std::f64::consts::PI / (self.t1 - self.t0);
        let u = w * (s - self.t0);
        self.height * w * (2.0 * u).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CompetitorCheck {
    pub pass: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub c_hat: f64,
}

/// One-sided check ∫ h E|σψ̂'|² λ ds ≤ Ĉ ∫ (h + |h'|²) ds − 2 ∫ (d/ds E ψ) h' ds.
pub fn competitor_check(report: &SolveReport, s: &Scenario, bump: &Bump) -> CompetitorCheck {
    let g = &s.grid;
    let (nt, nx, dt, dx) = (g.nt, g.nx, g.dt(), g.dx());
    let curve = constraint_curve(&report.flow, s);
    // Ĉ = 10 × sum of the uniform norms of the data entering the constant
    let mut norms = [0.0f64; 6];
    for k in 0..=nt {
        let t = g.t(k);
        for i in 0..nx {
            let x = g.x(i);
            norms[0] = norms[0].max(s.coeffs.b(t, x, 0.0).abs());
            norms[1] = norms[1].max(s.coeffs.a(t, x));
            norms[2] = norms[2].max(s.coeffs.cost(t, x).abs());
            norms[3] = norms[3].max(s.constraint.psi_dx(t, x).abs());
            norms[4] = norms[4].max(s.constraint.psi_dxx(t, x).abs());
            norms[5] = norms[5].max(report.value_field.grad[k][i].abs());
        }
    }
    let c_hat = 10.0 * norms.iter().sum::<f64>();
    let mut lhs = 0.0;
    let mut smooth = 0.0;
    let mut boundary = 0.0;
    for k in 0..nt {
        let mid = g.t(k) + 0.5 * dt;
        let (h, hp) = (bump.value(mid), bump.derivative(mid));
        let mu = &report.flow.densities[k + 1];
        let (p1, _) = derivatives(&report.psi_hat[k + 1], dx);
        let t = g.t(k + 1);
        let q: f64 = (0..nx).map(|i| s.coeffs.a(t, g.x(i)) * p1[i] * p1[i] * mu[i]).sum::<f64>() * dx;
        lhs += h * q * report.lambda.interior[k] * dt;
        smooth += (h + hp * hp) * dt;
        boundary += -2.0 * (curve[k + 1] - curve[k]) / dt * hp * dt;
    }
    let rhs = c_hat * smooth + boundary;
    CompetitorCheck { pass: lhs <= rhs, lhs, rhs, margin: rhs - lhs, c_hat }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpaceTimeGrid;
    use crate::scenarios;

    #[test]
    fn distances_vanish_on_identical_flows() {
        let g = SpaceTimeGrid::new(-4.0, 4.0, 40, 1.0, 8).unwrap();
        let mu: Vec<f64> = g.xs().iter().map(|x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()).collect();
        assert_eq!(tv(&mu, &mu, g.dx()), 0.0);
        assert_eq!(w1(&mu, &mu, g.dx()), 0.0);
    }

    #[test]
    fn w1_of_a_shift() {
        let g = SpaceTimeGrid::new(-8.0, 8.0, 800, 1.0, 8).unwrap();
        let dens = |m: f64| -> Vec<f64> { g.xs().iter().map(|x| (-(x - m).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()).collect() };
        assert!((w1(&dens(0.0), &dens(0.3), g.dx()) - 0.3).abs() < 1e-3);
    }

    #[test]
    fn slope_of_a_power_law() {
        let x = [0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y) - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&x, &[0.0, 0.0, 0.0]).is_nan());
    }

    #[test]
    fn push_translates_and_contracts() {
        let s = scenarios::inactive(400, 8);
        let g = s.grid;
        let mu = s.initial_density().unwrap();
        assert_eq!(push_flow(&mu, &s, 0.0, 0.0).unwrap(), mu);
        let pushed = push_flow(&mu, &s, 0.1, 0.0).unwrap();
        let mean: f64 = g.xs().iter().zip(&pushed).map(|(x, m)| x * m).sum::<f64>() * g.dx();
        assert!((mean + 0.1).abs() < 1e-6, "mean {mean}");
        let mass: f64 = pushed.iter().sum::<f64>() * g.dx();
        assert!((mass - 1.0).abs() < 1e-8);
        let mut q = s.clone();
        q.constraint = crate::model::ConstraintFunctional::linear(crate::expr::Expr::parse("x^2/2").unwrap(), 0.0);
        let pushed = push_flow(&mu, &q, 0.1, 0.0).unwrap();
        let var: f64 = g.xs().iter().zip(&pushed).map(|(x, m)| x * x * m).sum::<f64>() * g.dx();
        assert!((var / (-0.2f64).exp() - 1.0).abs() < 0.01, "variance {var}");
        assert!(matches!(push_flow(&mu, &s, 0.2, 0.0), Err(AnalysisError::StepOutOfRange { .. })));
    }

    #[test]
    fn push_reports_escape() {
        let s = scenarios::inactive(100, 8);
        let g = s.grid;
        // ψ = x moves mass to the left, out of the first cell
        let mut mu = vec![0.0; g.nx];
        mu[0] = 1.0 / g.dx();
        assert!(matches!(push_flow(&mu, &s, 0.1, 0.0), Err(AnalysisError::FlowEscape { .. })));
    }

    #[test]
    fn local_max_derivative_of_flat_curves_is_zero() {
        let s = scenarios::inactive(64, 16);
        let f = crate::fp::fp_solve(&s, None, None).unwrap();
        assert_eq!(local_max_derivative_check(&f, &f, &s), 0.0);
    }

    #[test]
    fn bump_is_validated() {
        assert!(Bump::new(0.2, 0.8, 0.06, 1.0).is_err());
        assert!(Bump::new(0.8, 0.2, 0.01, 1.0).is_err());
        let b = Bump::new(0.2, 0.6, 0.05, 1.0).unwrap();
        assert_eq!(b.value(0.2), 0.0);
        assert!((b.value(0.4) - 0.05).abs() < 1e-15);
    }
}
