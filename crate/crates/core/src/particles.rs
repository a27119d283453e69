//! Euler-Maruyama simulation of controlled and interacting diffusions, Monte
//! Carlo estimates of the control cost, the pathwise density check and the
//! rejection-sampling conditioning experiment.
//!
//! Every particle draws from its own ChaCha8 stream (stream id = particle
//! index), so ensembles do not depend on the rayon schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::control::{SolveError, SolveReport};
use crate::dynamics::Dynamics;
use crate::hjb::{feedback_control, ControlField};
use crate::model::{InitialLaw, Scenario, SpaceTimeGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParticleError {
    #[error("interacting simulation needs at least 2 particles, got {0}")]
    TooFewParticles(usize),
    #[error("acceptance rate {rate:.2e} below 1e-4 at N = {n}; use a larger epsilon or importance sampling")]
    NoAcceptedSamples { n: usize, rate: f64 },
    #[error("conditioning needs a strictly positive epsilon")]
    NonPositiveEpsilon,
    #[error("report is not converged")]
    NotConverged,
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Scheme {
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub times: Vec<f64>,
    /// `(nt + 1) x n` positions.
    pub positions: Vec<Vec<f64>>,
    /// `nt x n` Brownian increments used for each step.
    pub increments: Vec<Vec<f64>>,
    pub log_weights: Vec<f64>,
    pub seed: u64,
    pub scheme: Scheme,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Weights normalized to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let m = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    /// Positions of every particle at node k.
    pub fn slice(&self, k: usize) -> &[f64] {
        &self.positions[k]
    }
}

/// Everything beyond the scenario that determines a simulation.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig<'a> {
    pub n: usize,
    pub seed: u64,
    pub control: Option<&'a ControlField>,
    pub interacting: bool,
    /// Grid density for X₀; defaults to the scenario's initial law.
    pub initial: Option<&'a [f64]>,
    /// Drift table to use instead of evaluating the coefficients (for a
    /// law-dependent drift frozen along a flow).
    pub frozen: Option<&'a Dynamics>,
}

impl SimConfig<'_> {
    pub fn new(n: usize, seed: u64) -> Self {
        SimConfig { n, seed, control: None, interacting: false, initial: None, frozen: None }
    }
}

fn rng_for(seed: u64, particle: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(particle as u64);
    rng
}

/// Inverse-CDF sample from a piecewise-constant grid density.
fn sample_grid(grid: &SpaceTimeGrid, cdf: &[f64], u: f64) -> f64 {
    let i = cdf.partition_point(|c| *c < u).min(grid.nx - 1);
    let lo = if i == 0 { 0.0 } else { cdf[i - 1] };
    let width = cdf[i] - lo;
    let frac = if width > 0.0 { ((u - lo) / width).clamp(0.0, 1.0) } else { 0.5 };
    grid.x_min + (i as f64 + frac) * grid.dx()
}

fn cumulative(density: &[f64], dx: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = density.iter().map(|d| {
        acc += d * dx;
        acc
    }).collect();
    let total = acc;
    for c in cdf.iter_mut() {
        *c /= total;
    }
    cdf
}

/// Linear interpolation of a centre-sampled row, clamped at the ends.
pub(crate) fn interp_row(grid: &SpaceTimeGrid, row: &[f64], x: f64) -> f64 {
    let xi = ((x - grid.x_min) / grid.dx() - 0.5).clamp(0.0, (grid.nx - 1) as f64);
    let i0 = (xi.floor() as usize).min(grid.nx - 1);
    let i1 = (i0 + 1).min(grid.nx - 1);
    let w = xi - i0 as f64;
    row[i0] * (1.0 - w) + row[i1] * w
}

struct Stepper<'a> {
    s: &'a Scenario,
    cfg: SimConfig<'a>,
    dt: f64,
    m1_init: f64,
}

impl Stepper<'_> {
    fn drift(&self, k: usize, x: f64, m1: f64) -> f64 {
        match self.cfg.frozen {
            Some(d) => interp_row(&d.grid, &d.b[k], x),
            None => self.s.coeffs.b(k as f64 * self.dt, x, m1),
        }
    }

    fn control(&self, k: usize, x: f64) -> f64 {
        self.cfg.control.map_or(0.0, |c| c.at(k as f64 * self.dt, x))
    }

    fn initial(&self, rng: &mut ChaCha8Rng, cdf: &Option<Vec<f64>>) -> f64 {
        match (cdf, &self.s.initial) {
            (None, InitialLaw::Gaussian { mean, variance }) => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            (Some(c), _) => sample_grid(&self.s.grid, c, rng.random::<f64>()),
            (None, InitialLaw::Tabulated(_)) => unreachable!("tabulated laws always carry a cdf"),
        }
    }
}

/// Euler-Maruyama ensemble with step dt of the scenario grid.
pub fn simulate(
    s: &Scenario,
    n: usize,
    seed: u64,
    control: Option<&ControlField>,
    interacting: bool,
) -> Result<ParticleEnsemble, ParticleError> {
    simulate_with(s, &SimConfig { control, interacting, ..SimConfig::new(n, seed) })
}

pub fn simulate_with(s: &Scenario, cfg: &SimConfig) -> Result<ParticleEnsemble, ParticleError> {
    let g = s.grid;
    let (nt, dt, n) = (g.nt, g.dt(), cfg.n);
    if cfg.interacting && n < 2 {
        return Err(ParticleError::TooFewParticles(n));
    }
    let cdf = match (cfg.initial, &s.initial) {
        (Some(d), _) => Some(cumulative(d, g.dx())),
        (None, InitialLaw::Tabulated(t)) => Some(cumulative(t, g.dx())),
        (None, InitialLaw::Gaussian { .. }) => None,
    };
    let m1_init = match &s.initial {
        InitialLaw::Gaussian { mean, .. } => *mean,
        InitialLaw::Tabulated(t) => {
            let mass: f64 = t.iter().sum();
            t.iter().enumerate().map(|(i, v)| g.x(i) * v).sum::<f64>() / mass
        }
    };
    let st = Stepper { s, cfg: *cfg, dt, m1_init };
    let sqdt = dt.sqrt();
    let mut positions = vec![vec![0.0; n]; nt + 1];
    let mut increments = vec![vec![0.0; n]; nt];
    if !cfg.interacting {
        let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut rng = rng_for(cfg.seed, p);
                let mut x = st.initial(&mut rng, &cdf);
                let mut xs = Vec::with_capacity(nt + 1);
                let mut db = Vec::with_capacity(nt);
                xs.push(x);
                for k in 0..nt {
                    let t = k as f64 * dt;
                    let sig = s.coeffs.sigma(t, x);
                    let z: f64 = rng.sample(StandardNormal);
                    let dw = sqdt * z;
                    x += (st.drift(k, x, st.m1_init) + sig * st.control(k, x)) * dt + sig * dw;
                    xs.push(x);
                    db.push(dw);
                }
                (xs, db)
            })
            .collect();
        for (p, (xs, db)) in paths.into_iter().enumerate() {
            for k in 0..=nt {
                positions[k][p] = xs[k];
            }
            for k in 0..nt {
                increments[k][p] = db[k];
            }
        }
    } else {
        let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|p| rng_for(cfg.seed, p)).collect();
        for (p, rng) in rngs.iter_mut().enumerate() {
            positions[0][p] = st.initial(rng, &cdf);
        }
        let kernel = s.coeffs.grad_w.is_some();
        for k in 0..nt {
            let t = k as f64 * dt;
            let cur = positions[k].clone();
            let m1 = cur.iter().sum::<f64>() / n as f64;
            let step: Vec<(f64, f64)> = rngs
                .par_iter_mut()
                .enumerate()
                .map(|(p, rng)| {
                    let x = cur[p];
                    let mut b = s.coeffs.b(t, x, m1);
                    if kernel {
                        let sum: f64 = cur.iter().enumerate().filter(|(q, _)| *q != p).map(|(_, y)| s.coeffs.grad_w(x - y)).sum();
                        b -= sum / n as f64;
                    }
                    let sig = s.coeffs.sigma(t, x);
                    let z: f64 = rng.sample(StandardNormal);
                    let dw = sqdt * z;
                    (x + (b + sig * st.control(k, x)) * dt + sig * dw, dw)
                })
                .collect();
            for (p, (x, dw)) in step.into_iter().enumerate() {
                positions[k + 1][p] = x;
                increments[k][p] = dw;
            }
        }
    }
    Ok(ParticleEnsemble {
        times: (0..=nt).map(|k| g.t(k)).collect(),
        positions,
        increments,
        log_weights: vec![0.0; n],
        seed: cfg.seed,
        scheme: Scheme::EulerMaruyama,
    })
}

/// Monte Carlo mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Estimate {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Estimate { mean, std_error: (var / n).sqrt() }
    }
}

fn log_ratio(grid: &SpaceTimeGrid, mu: &[f64], nu: &[f64], x: f64) -> f64 {
    let i = grid.cell_of(x);
    if mu[i] > 0.0 && nu[i] > 0.0 {
        (mu[i] / nu[i]).ln()
    } else {
        0.0
    }
}

/// Estimate of H(μ₀|ν₀) + E∫½|α|² dt over an ensemble simulated under the
/// control `alpha` from the initial density `tilted_init`.
pub fn girsanov_cost(e: &ParticleEnsemble, alpha: &ControlField, tilted_init: &[f64], nu0: &[f64]) -> Estimate {
    let g = alpha.grid;
    let dt = g.dt();
    let per_path: Vec<f64> = (0..e.len())
        .into_par_iter()
        .map(|p| {
            let mut v = log_ratio(&g, tilted_init, nu0, e.positions[0][p]);
            for k in 0..e.times.len() - 1 {
                let a = alpha.at(e.times[k], e.positions[k][p]);
                v += 0.5 * a * a * dt;
            }
            v
        })
        .collect();
    Estimate::from_samples(&per_path)
}

/// Result of comparing the two path log-densities of the optimal law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PathDensityCheck {
    pub discrepancy: f64,
    pub mean_abs_difference: f64,
    pub spread: f64,
    pub log_z: f64,
}

/// Compares, along simulated optimal paths, the Girsanov log-density of the
/// optimal law against the exponential formula −∫(c + c̄) − Σ ℓ_k ψ̂_k − log Z.
pub fn path_density_check(report: &SolveReport, s: &Scenario, n_paths: usize, seed: u64) -> Result<PathDensityCheck, ParticleError> {
    if !report.converged {
        return Err(ParticleError::NotConverged);
    }
    let g = s.grid;
    let dt = g.dt();
    let frozen = Dynamics::new(s, if s.mckean_vlasov { Some(&report.flow.densities) } else { None });
    let alpha = feedback_control(&report.value_field, s);
    let nu0 = s.initial_density().map_err(SolveError::from)?;
    let optimal = simulate_with(
        s,
        &SimConfig { control: Some(&alpha), initial: Some(&report.tilted_init), frozen: Some(&frozen), ..SimConfig::new(n_paths, seed) },
    )?;
    let reference = simulate_with(
        s,
        &SimConfig { initial: Some(&nu0), frozen: Some(&frozen), ..SimConfig::new(n_paths, seed.wrapping_add(0x9E37_79B9_7F4A_7C15)) },
    )?;
    let coupling = report.coupling.as_ref();
    let exponent = |e: &ParticleEnsemble, p: usize| -> f64 {
        let mut v = 0.0;
        for k in 0..=g.nt {
            let x = e.positions[k][p];
            if k < g.nt {
                let c = s.coeffs.cost(g.t(k), x) + coupling.map_or(0.0, |c| interp_row(&g, &c[k], x));
                v -= c * dt;
            }
            if report.node_masses[k] != 0.0 {
                v -= report.node_masses[k] * interp_row(&g, &report.psi_hat[k], x);
            }
        }
        v
    };
    let ref_exp: Vec<f64> = (0..n_paths).into_par_iter().map(|p| exponent(&reference, p)).collect();
    let m = ref_exp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = m + (ref_exp.iter().map(|v| (v - m).exp()).sum::<f64>() / n_paths as f64).ln();
    let pairs: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut girsanov = log_ratio(&g, &report.tilted_init, &nu0, optimal.positions[0][p]);
            for k in 0..g.nt {
                let a = alpha.at(g.t(k), optimal.positions[k][p]);
                girsanov += a * optimal.increments[k][p] + 0.5 * a * a * dt;
            }
            (girsanov, exponent(&optimal, p) - log_z)
        })
        .collect();
    let n = n_paths as f64;
    let mad = pairs.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let var = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let mean = pairs.iter().map(f).sum::<f64>() / n;
        pairs.iter().map(|p| (f(p) - mean).powi(2)).sum::<f64>() / n
    };
    let spread = (0.5 * (var(&|p| p.0) + var(&|p| p.1))).sqrt();
    let discrepancy = if spread > 1e-12 { mad / spread } else if mad < 1e-12 { 0.0 } else { f64::INFINITY };
    Ok(PathDensityCheck { discrepancy, mean_abs_difference: mad, spread, log_z })
}

/// Exact W₁ between the empirical law of `samples` and a piecewise-constant
/// density on `grid`, by integrating |F_emp − F| over merged breakpoints.
pub fn w1_to_density(samples: &[f64], grid: &SpaceTimeGrid, density: &[f64]) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let dx = grid.dx();
    let mass: f64 = density.iter().sum::<f64>() * dx;
    let cdf_at = |x: f64| -> f64 {
        if x <= grid.x_min {
            return 0.0;
        }
        if x >= grid.x_max {
            return 1.0;
        }
        let u = (x - grid.x_min) / dx;
        let i = (u.floor() as usize).min(grid.nx - 1);
        let below: f64 = density[..i].iter().sum::<f64>() * dx;
        (below + density[i] * (u - i as f64) * dx) / mass
    };
    let mut breaks: Vec<f64> = (0..=grid.nx).map(|i| grid.x_min + i as f64 * dx).collect();
    breaks.extend(xs.iter().cloned());
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut total = 0.0;
    let mut count = 0usize;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        while count < xs.len() && xs[count] <= a {
            count += 1;
        }
        let fe = count as f64 / n;
        // the density CDF is linear on [a, b]
        let (da, db) = (cdf_at(a) - fe, cdf_at(b) - fe);
        total += if da * db >= 0.0 {
            0.5 * (da.abs() + db.abs()) * (b - a)
        } else {
            0.5 * (da * da + db * db) / (da - db).abs() * (b - a)
        };
    }
    // empirical mass outside the grid window
    for &x in &xs {
        if x < grid.x_min {
            total += grid.x_min - x;
        } else if x > grid.x_max {
            total += x - grid.x_max;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GibbsRow {
    pub n: usize,
    pub probe_t: f64,
    pub w1: f64,
    pub acceptance_rate: f64,
    pub seed: u64,
}

/// Seed of repetition `rep` for population size `n`.
fn derive_seed(seed: u64, n: usize, rep: usize) -> u64 {
    let mut z = seed ^ ((n as u64) << 40) ^ (rep as u64);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Probe nodes at T/4, T/2, 3T/4 and T.
pub fn probe_nodes(grid: &SpaceTimeGrid) -> Vec<usize> {
    [0.25, 0.5, 0.75, 1.0].iter().map(|f| ((f * grid.nt as f64).round() as usize).min(grid.nt)).collect()
}

/// Rejection sampling of `n_reps` unconditioned N-particle systems on the
/// event max_k Ψ(μ^N_k) ≤ ε, and W₁ of the pooled accepted particles
/// against the solved flow at the probe times.
pub fn gibbs_conditioning(
    s: &Scenario,
    report: &SolveReport,
    populations: &[usize],
    n_reps: usize,
    seed: u64,
) -> Result<Vec<GibbsRow>, ParticleError> {
    if !(s.epsilon > 0.0) {
        return Err(ParticleError::NonPositiveEpsilon);
    }
    if !report.converged {
        return Err(ParticleError::NotConverged);
    }
    let g = s.grid;
    let probes = probe_nodes(&g);
    let interacting = s.mckean_vlasov;
    let c = &s.constraint;
    let mut rows = Vec::new();
    for &n in populations {
        let accepted: Vec<Option<Vec<Vec<f64>>>> = (0..n_reps)
            .into_par_iter()
            .map(|rep| {
                let cfg = SimConfig { interacting: interacting && n >= 2, ..SimConfig::new(n, derive_seed(seed, n, rep)) };
                let e = simulate_with(s, &cfg).expect("population size checked");
                let ok = (0..=g.nt).all(|k| {
                    let t = g.t(k);
                    let m = e.positions[k].iter().map(|&x| c.psi(t, x)).sum::<f64>() / n as f64;
                    c.value_of_mean(m) <= s.epsilon
                });
                ok.then(|| probes.iter().map(|&k| e.positions[k].clone()).collect())
            })
            .collect();
        let hits: Vec<&Vec<Vec<f64>>> = accepted.iter().flatten().collect();
        let rate = hits.len() as f64 / n_reps as f64;
        if hits.is_empty() || rate < 1e-4 {
            return Err(ParticleError::NoAcceptedSamples { n, rate });
        }
        for (pi, &k) in probes.iter().enumerate() {
            let pooled: Vec<f64> = hits.iter().flat_map(|h| h[pi].iter().cloned()).collect();
            rows.push(GibbsRow {
                n,
                probe_t: g.t(k),
                w1: w1_to_density(&pooled, &g, &report.flow.densities[k]),
                acceptance_rate: rate,
                seed,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::scenarios;

    #[test]
    fn ensembles_are_reproducible() {
        let s = scenarios::inactive(64, 16);
        let a = simulate(&s, 200, 7, None, false).unwrap();
        let b = simulate(&s, 200, 7, None, false).unwrap();
        assert_eq!(a, b);
        let c = simulate(&s, 200, 8, None, false).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn near_deterministic_paths_stay_put() {
        let mut s = scenarios::inactive(64, 16);
        s.coeffs.sigma = Expr::constant(1e-6);
        let e = simulate(&s, 100, 1, None, false).unwrap();
        for p in 0..100 {
            assert!((e.positions[16][p] - e.positions[0][p]).abs() < 1e-3);
        }
    }

    #[test]
    fn brownian_variance_grows_linearly() {
        let s = scenarios::inactive(64, 20);
        let n = 100_000;
        let e = simulate(&s, n, 3, None, false).unwrap();
        let xt = &e.positions[20];
        let mean = xt.iter().sum::<f64>() / n as f64;
        let var = xt.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of the sample variance of a N(0, 2) sample
        let se = 2.0 * (2.0 / n as f64).sqrt();
        assert!((var - 2.0).abs() < 3.0 * se, "variance {var}");
    }

    #[test]
    fn interacting_symmetric_mean_is_conserved() {
        let s = scenarios::attraction(1.0, 100.0, 64, 20);
        let n = 2000;
        let e = simulate(&s, n, 5, None, true).unwrap();
        // the interaction cancels in the empirical mean, which moves as
        // (1/N) Σ B^i with variance (v₀ + t)/N
        for k in [5, 10, 20] {
            let mean = e.positions[k].iter().sum::<f64>() / n as f64;
            let se = ((1.0 + e.times[k]) / n as f64).sqrt();
            assert!(mean.abs() < 3.0 * se, "mean {mean} at {k}");
            let drift = mean - e.positions[0].iter().sum::<f64>() / n as f64;
            let noise = e.increments[..k].iter().map(|row| row.iter().sum::<f64>()).sum::<f64>() / n as f64;
            assert!((drift - noise).abs() < 1e-10);
        }
        assert!(matches!(simulate(&s, 1, 0, None, true), Err(ParticleError::TooFewParticles(1))));
    }

    #[test]
    fn constant_control_cost_is_deterministic() {
        let s = scenarios::inactive(64, 20);
        let beta = 0.7;
        let mut alpha = ControlField::zero(s.grid);
        for row in alpha.alpha.iter_mut() {
            row.iter_mut().for_each(|a| *a = -beta);
        }
        let nu0 = s.initial_density().unwrap();
        let e = simulate(&s, 500, 2, Some(&alpha), false).unwrap();
        let est = girsanov_cost(&e, &alpha, &nu0, &nu0);
        assert!((est.mean - 0.5 * beta * beta).abs() < 1e-12);
        assert!(est.std_error < 1e-12);
        let zero = girsanov_cost(&e, &ControlField::zero(s.grid), &nu0, &nu0);
        assert_eq!(zero, Estimate { mean: 0.0, std_error: 0.0 });
    }

    #[test]
    fn w1_of_a_point_mass() {
        let g = SpaceTimeGrid::new(-2.0, 2.0, 8, 1.0, 8).unwrap();
        // uniform density on [-2, 2] against a point mass at 0: ∫|F| = 1
        let d = vec![0.25; 8];
        assert!((w1_to_density(&[0.0], &g, &d) - 1.0).abs() < 1e-12);
        // a large sample is close to the density itself
        let xs: Vec<f64> = (0..4000).map(|i| -2.0 + (i as f64 + 0.5) * 4.0 / 4000.0).collect();
        assert!(w1_to_density(&xs, &g, &d) < 1e-3);
    }

    #[test]
    fn inactive_conditioning_accepts_everything() {
        let mut s = scenarios::inactive(100, 20);
        s.epsilon = 2.0;
        let r = crate::control::solve_constrained(&s, &Default::default()).unwrap();
        let rows = gibbs_conditioning(&s, &r, &[16], 200, 1).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.acceptance_rate == 1.0));
        assert!(rows.iter().all(|r| r.w1 < 0.1), "{rows:?}");
    }
}
