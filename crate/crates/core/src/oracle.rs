//! Independent reference solution on a tiny discrete-time, finite-state chain.
//!
//! The reference path measure is the Markov chain on a lattice of at most 15
//! states with Gaussian transition weights sampled at the lattice points. The
//! entropy minimization under the node constraints E[ψ(X_k)] ≤ θ is solved
//! through its concave dual over the node multipliers, with log Z evaluated
//! exactly by transfer matrices.

use nalgebra::{DMatrix, DVector};

use crate::control::nonnegative_qp;
use crate::hjb::Multiplier;
use crate::model::{ConstraintKind, InitialLaw, Scenario};

pub const MAX_STATES: usize = 15;
pub const MAX_STEPS: usize = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle grid {nx} x {nt} outside the supported range (nx in 3..={MAX_STATES}, nt in 1..={MAX_STEPS})")]
    Size { nx: usize, nt: usize },
    #[error("the oracle does not handle law-dependent drifts")]
    LawDependent,
    #[error("constraint infeasible: min Ψ over means is {min_value} > ε")]
    Infeasible { min_value: f64 },
    #[error("oracle did not converge after {iterations} iterations (violation {violation:.3e}, slackness {slackness:.3e})")]
    OracleNotConverged { iterations: usize, violation: f64, slackness: f64 },
}

/// Lattice window and resolution for the oracle chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
}

impl OracleGrid {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub grid: OracleGrid,
    pub dt: f64,
    /// Probability vectors of the optimal chain at nodes 0..=nt.
    pub marginals: Vec<Vec<f64>>,
    /// Multiplier mass at each node in units of Ψ.
    pub node_masses: Vec<f64>,
    pub multiplier: Multiplier,
    /// Ψ(μ_k) − ε at every node.
    pub constraint_gap: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// One linear node constraint E[sign·ψ(t_k, X_k)] ≤ theta.
struct Row {
    node: usize,
    sign: f64,
    theta: f64,
}

struct Chain {
    nu0: Vec<f64>,
    /// kernels[k][i][j]: probability of moving from state i at node k to state j.
    kernels: Vec<Vec<Vec<f64>>>,
    /// psi[k][i] = ψ(t_k, x_i).
    psi: Vec<Vec<f64>>,
    rows: Vec<Row>,
}

impl Chain {
    fn weights(&self, ell: &[f64]) -> Vec<Vec<f64>> {
        let nx = self.nu0.len();
        let mut w = vec![vec![0.0; nx]; self.psi.len()];
        for (r, l) in self.rows.iter().zip(ell) {
            for i in 0..nx {
                w[r.node][i] -= l * r.sign * self.psi[r.node][i];
            }
        }
        w
    }

    /// log Z(ℓ) and the tilted marginals.
    fn forward_backward(&self, ell: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let nx = self.nu0.len();
        let nt = self.kernels.len();
        let logw = self.weights(ell);
        let shift: Vec<f64> = logw.iter().map(|w| w.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let w: Vec<Vec<f64>> = logw.iter().zip(&shift).map(|(row, m)| row.iter().map(|v| (v - m).exp()).collect()).collect();
        let mut log_z = 0.0;
        let mut alpha = vec![vec![0.0; nx]; nt + 1];
        for i in 0..nx {
            alpha[0][i] = self.nu0[i] * w[0][i];
        }
        let mut scale = vec![0.0; nt + 1];
        for k in 0..=nt {
            if k > 0 {
                for j in 0..nx {
                    let mut acc = 0.0;
                    for i in 0..nx {
                        acc += alpha[k - 1][i] * self.kernels[k - 1][i][j];
                    }
                    alpha[k][j] = acc * w[k][j];
                }
            }
            let sum: f64 = alpha[k].iter().sum();
            scale[k] = sum;
            for a in alpha[k].iter_mut() {
                *a /= sum;
            }
            log_z += sum.ln() + shift[k];
        }
        let mut beta = vec![vec![1.0; nx]; nt + 1];
        for k in (0..nt).rev() {
            for i in 0..nx {
                let mut acc = 0.0;
                for j in 0..nx {
                    acc += self.kernels[k][i][j] * w[k + 1][j] * beta[k + 1][j];
                }
                beta[k][i] = acc / scale[k + 1];
            }
        }
        let marginals = (0..=nt)
            .map(|k| {
                let mut m: Vec<f64> = (0..nx).map(|i| alpha[k][i] * beta[k][i]).collect();
                let s: f64 = m.iter().sum();
                for v in m.iter_mut() {
                    *v /= s;
                }
                m
            })
            .collect();
        (log_z, marginals)
    }

    fn gaps(&self, marginals: &[Vec<f64>]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let e: f64 = marginals[r.node].iter().zip(&self.psi[r.node]).map(|(m, p)| m * p).sum();
                r.sign * e - r.theta
            })
            .collect()
    }

    /// Dual objective −log Z(ℓ) − Σ ℓ θ and its gradient.
    fn dual(&self, ell: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
        let (log_z, marg) = self.forward_backward(ell);
        let d = -log_z - self.rows.iter().zip(ell).map(|(r, l)| l * r.theta).sum::<f64>();
        let g = self.gaps(&marg);
        (d, g, marg)
    }
}

fn gaussian_weights(xs: &[f64], mean: f64, var: f64) -> Vec<f64> {
    let mut w: Vec<f64> = xs.iter().map(|x| (-(x - mean).powi(2) / (2.0 * var)).exp()).collect();
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        for v in w.iter_mut() {
            *v /= s;
        }
    } else {
        // mean far outside the window: all mass on the nearest state
        let near = xs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - mean).abs().total_cmp(&(b.1 - mean).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        w[near] = 1.0;
    }
    w
}

fn interval(s: &Scenario) -> Result<(Option<f64>, Option<f64>), OracleError> {
    let c = &s.constraint;
    let target = s.epsilon + c.offset;
    if c.kind == ConstraintKind::Linear {
        return Ok((None, Some(target)));
    }
    // golden section for the minimizer of the convex outer function
    let (mut a, mut b) = (-1e3, 1e3);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = b - r * (b - a);
        let m2 = a + r * (b - a);
        if c.g(m1) <= c.g(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let m_star = 0.5 * (a + b);
    if c.g(m_star) > target {
        return Err(OracleError::Infeasible { min_value: c.g(m_star) - c.offset });
    }
    let root = |far: f64| -> Option<f64> {
        if c.g(far) <= target {
            return None;
        }
        let (mut inside, mut outside) = (m_star, far);
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if c.g(mid) <= target {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Some(inside)
    };
    Ok((root(-1e3), root(1e3)))
}

/// Solves the tiny chain reduction of `s` on `grid`.
pub fn brute_force_oracle(s: &Scenario, grid: OracleGrid) -> Result<OracleSolution, OracleError> {
    let OracleGrid { nx, nt, .. } = grid;
    if !(3..=MAX_STATES).contains(&nx) || !(1..=MAX_STEPS).contains(&nt) || !(grid.x_max > grid.x_min) {
        return Err(OracleError::Size { nx, nt });
    }
    if s.mckean_vlasov {
        return Err(OracleError::LawDependent);
    }
    let dt = s.grid.t_final / nt as f64;
    let xs: Vec<f64> = (0..nx).map(|i| grid.x(i)).collect();
    let nu0 = match &s.initial {
        InitialLaw::Gaussian { mean, variance } => gaussian_weights(&xs, *mean, *variance),
        InitialLaw::Tabulated(table) => {
            // linear interpolation of the table onto the lattice
            let g = &s.grid;
            let mut w: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let u = ((x - g.x(0)) / g.dx()).clamp(0.0, (g.nx - 1) as f64);
                    let i = (u.floor() as usize).min(g.nx - 2);
                    let f = u - i as f64;
                    table[i] * (1.0 - f) + table[i + 1] * f
                })
                .collect();
            let sum: f64 = w.iter().sum();
            for v in w.iter_mut() {
                *v /= sum;
            }
            w
        }
    };
    let coeffs = &s.coeffs;
    let kernels: Vec<Vec<Vec<f64>>> = (0..nt)
        .map(|k| {
            let t = k as f64 * dt;
            xs.iter()
                .map(|&x| {
                    let mean = x + coeffs.b(t, x, 0.0) * dt;
                    let var = coeffs.a(t, x) * dt;
                    gaussian_weights(&xs, mean, var)
                })
                .collect()
        })
        .collect();
    let psi: Vec<Vec<f64>> = (0..=nt).map(|k| xs.iter().map(|&x| s.constraint.psi(k as f64 * dt, x)).collect()).collect();
    let (lo, hi) = interval(s)?;
    let mut rows = Vec::new();
    for node in 0..=nt {
        if let Some(h) = hi {
            rows.push(Row { node, sign: 1.0, theta: h });
        }
        if let Some(l) = lo {
            rows.push(Row { node, sign: -1.0, theta: -l });
        }
    }
    let chain = Chain { nu0, kernels, psi, rows };
    let m = chain.rows.len();
    let mut ell = vec![0.0; m];
    let (mut d, mut g, mut marg) = chain.dual(&ell);
    let tol = 1e-9;
    let mut iterations = 0;
    let kkt = |ell: &[f64], g: &[f64]| -> (f64, f64) {
        let viol = g.iter().fold(0.0f64, |a, v| a.max(*v));
        let slack = ell.iter().zip(g).map(|(l, v)| l * v.abs()).sum::<f64>();
        (viol, slack)
    };
    loop {
        let (viol, slack) = kkt(&ell, &g);
        if viol <= tol && slack <= tol {
            break;
        }
        if iterations >= 200 {
            return Err(OracleError::OracleNotConverged { iterations, violation: viol, slackness: slack });
        }
        iterations += 1;
        // finite-difference Hessian of −D, symmetrized
        let mut h = DMatrix::zeros(m, m);
        for c in 0..m {
            let step = 1e-5 * (1.0 + ell[c].abs());
            let mut up = ell.clone();
            let mut dn = ell.clone();
            up[c] += step;
            dn[c] -= step;
            let gu = chain.gaps(&chain.forward_backward(&up).1);
            let gd = chain.gaps(&chain.forward_backward(&dn).1);
            for r in 0..m {
                h[(r, c)] = -(gu[r] - gd[r]) / (2.0 * step);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let rhs = &h * DVector::from_column_slice(&ell) + DVector::from_column_slice(&g);
        let target = nonnegative_qp(&h, &rhs, &ell);
        let dir: Vec<f64> = target.iter().zip(&ell).map(|(y, l)| y - l).collect();
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut tau = 1.0;
        loop {
            let trial: Vec<f64> = ell.iter().zip(&dir).map(|(l, v)| (l + tau * v).max(0.0)).collect();
            let (dt_, gt, mt) = chain.dual(&trial);
            if dt_ >= d + 1e-4 * tau * slope - 1e-14 * d.abs().max(1.0) || tau < 1e-8 {
                ell = trial;
                d = dt_;
                g = gt;
                marg = mt;
                break;
            }
            tau *= 0.5;
        }
    }
    // back to Ψ units, one multiplier per node
    let c = &s.constraint;
    let mut node_masses = vec![0.0; nt + 1];
    for (r, l) in chain.rows.iter().zip(&ell) {
        let slope = c.g_prime(r.sign * r.theta).abs().max(1e-300);
        node_masses[r.node] += l / slope;
    }
    let constraint_gap = (0..=nt)
        .map(|k| {
            let e: f64 = marg[k].iter().zip(&chain.psi[k]).map(|(p, q)| p * q).sum();
            c.value_of_mean(e) - s.epsilon
        })
        .collect();
    let multiplier = Multiplier::from_node_masses(&node_masses, dt);
    Ok(OracleSolution {
        grid,
        dt,
        marginals: marg,
        node_masses,
        multiplier,
        constraint_gap,
        value: d,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn window(nx: usize, nt: usize) -> OracleGrid {
        OracleGrid { x_min: -4.0, x_max: 4.0, nx, nt }
    }

    #[test]
    fn inactive_has_zero_multiplier() {
        let sol = brute_force_oracle(&scenarios::inactive(100, 20), window(15, 6)).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.node_masses.iter().all(|l| *l == 0.0));
        assert!(sol.value.abs() < 1e-12);
    }

    #[test]
    fn initial_tilt_is_an_atom_at_zero() {
        let sol = brute_force_oracle(&scenarios::initial_tilt(1.0, 1.0, 100, 20), window(15, 6)).unwrap();
        assert!((sol.value - 0.5).abs() < 0.025, "value {}", sol.value);
        assert_eq!(sol.multiplier.support(sol.dt, 0.01), [true, false, false]);
    }

    #[test]
    fn constant_drift_is_an_atom_at_t() {
        let sol = brute_force_oracle(&scenarios::constant_drift(1.0, 100, 20), window(15, 6)).unwrap();
        // the optimal initial law also moves, halving the cost of ½T
        assert!((sol.value - 0.25).abs() < 0.0125, "value {}", sol.value);
        assert_eq!(sol.multiplier.support(sol.dt, 0.01), [false, false, true]);
    }

    #[test]
    fn rejects_large_grids() {
        let s = scenarios::inactive(100, 20);
        assert!(matches!(brute_force_oracle(&s, window(16, 6)), Err(OracleError::Size { .. })));
        assert!(matches!(brute_force_oracle(&s, window(15, 7)), Err(OracleError::Size { .. })));
    }
}
