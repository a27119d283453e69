//! Coefficients sampled on the grid, with the law-dependence of the drift
//! frozen along a given flow.

use crate::model::{Scenario, SpaceTimeGrid};

/// Grid samples of b, σ, a = σ², ∂ₓa and c at every time node.
/// Centre arrays are `(nt + 1) x nx`, face arrays `(nt + 1) x (nx - 1)`.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub grid: SpaceTimeGrid,
    pub b: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
    pub b_face: Vec<Vec<f64>>,
    pub sigma_face: Vec<Vec<f64>>,
    pub a_face: Vec<Vec<f64>>,
    pub da_face: Vec<Vec<f64>>,
}

pub(crate) fn mean_x(grid: &SpaceTimeGrid, mu: &[f64]) -> f64 {
    let dx = grid.dx();
    mu.iter().enumerate().map(|(i, m)| grid.x(i) * m).sum::<f64>() * dx
}

impl Dynamics {
    /// Samples the coefficients. When `frozen` is given, the law entering the
    /// drift at node k is `frozen[k]`; otherwise the initial law is used.
    pub fn new(s: &Scenario, frozen: Option<&[Vec<f64>]>) -> Dynamics {
        let g = s.grid;
        let c = &s.coeffs;
        let nx = g.nx;
        let mu_init = s.initial_density().unwrap_or_else(|_| vec![1.0 / (g.x_max - g.x_min); nx]);
        let mut out = Dynamics {
            grid: g,
            b: Vec::with_capacity(g.nt + 1),
            sigma: Vec::with_capacity(g.nt + 1),
            a: Vec::with_capacity(g.nt + 1),
            cost: Vec::with_capacity(g.nt + 1),
            b_face: Vec::with_capacity(g.nt + 1),
            sigma_face: Vec::with_capacity(g.nt + 1),
            a_face: Vec::with_capacity(g.nt + 1),
            da_face: Vec::with_capacity(g.nt + 1),
        };
        let interacting = c.grad_w.is_some() && s.mckean_vlasov;
        let dx = g.dx();
        // ∇W tabulated on the centre-to-centre and face-to-centre offsets
        let (w_c, w_f): (Vec<f64>, Vec<f64>) = if interacting {
            let n = nx as isize;
            ((-(n - 1)..n).map(|d| c.grad_w(d as f64 * dx)).collect(),
             (-(n - 1)..n).map(|d| c.grad_w((d as f64 + 0.5) * dx)).collect())
        } else {
            (Vec::new(), Vec::new())
        };
        let conv = |w: &[f64], mu: &[f64], i: usize| -> f64 {
            mu.iter().enumerate().map(|(j, m)| w[i + nx - 1 - j] * m).sum::<f64>() * dx
        };
        let xs = g.xs();
        for k in 0..=g.nt {
            let t = g.t(k);
            let mu: &[f64] = frozen.map_or(&mu_init, |f| &f[k]);
            let m1 = mean_x(&g, mu);
            out.b.push(
                xs.iter()
                    .enumerate()
                    .map(|(i, &x)| c.b(t, x, m1) - if interacting { conv(&w_c, mu, i) } else { 0.0 })
                    .collect(),
            );
            let sig: Vec<f64> = xs.iter().map(|&x| c.sigma(t, x)).collect();
            out.a.push(sig.iter().map(|v| v * v).collect());
            out.sigma.push(sig);
            out.cost.push(xs.iter().map(|&x| c.cost(t, x)).collect());
            let faces: Vec<f64> = (0..nx - 1).map(|i| g.x_face(i)).collect();
            out.b_face.push(
                faces
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| c.b(t, x, m1) - if interacting { conv(&w_f, mu, i) } else { 0.0 })
                    .collect(),
            );
            let sf: Vec<f64> = faces.iter().map(|&x| c.sigma(t, x)).collect();
            out.a_face.push(sf.iter().map(|v| v * v).collect());
            out.sigma_face.push(sf);
            out.da_face.push(faces.iter().map(|&x| c.a_dx(t, x)).collect());
        }
        out
    }

    /// E_μ[∂ₓb] at node k, by central differences of the sampled drift.
    pub fn mean_drift_slope(&self, k: usize, mu: &[f64]) -> f64 {
        let nx = self.grid.nx;
        let dx = self.grid.dx();
        let b = &self.b[k];
        let mut acc = 0.0;
        for i in 0..nx {
            let d = if i == 0 {
                (b[1] - b[0]) / dx
            } else if i == nx - 1 {
                (b[nx - 1] - b[nx - 2]) / dx
            } else {
                (b[i + 1] - b[i - 1]) / (2.0 * dx)
            };
            acc += d * mu[i];
        }
        acc * dx
    }
}
