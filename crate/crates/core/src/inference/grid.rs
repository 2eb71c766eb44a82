//! Brute-force posterior on a `(mu, sigma)` grid.

use serde::{Deserialize, Serialize};

use super::target::Target;
use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::models::density::log_density_unchecked;
use crate::models::{LossSpec, ModelSpec, PriorSpec, Theta};

/// Mass allowed on the outermost grid lines before the grid is rejected.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-3;

/// `n` points from `lo` to `hi` inclusive, equally spaced on a linear or a
/// logarithmic scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub log: bool,
}

impl GridAxis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        GridAxis { lo, hi, n, log: false }
    }

    pub fn log(lo: f64, hi: f64, n: usize) -> Self {
        GridAxis { lo, hi, n, log: true }
    }

    fn ends(&self) -> (f64, f64) {
        if self.log {
            (self.lo.ln(), self.hi.ln())
        } else {
            (self.lo, self.hi)
        }
    }

    /// Spacing on the axis' own scale.
    pub fn step(&self) -> f64 {
        let (a, b) = self.ends();
        (b - a) / (self.n - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let (a, _) = self.ends();
        let h = self.step();
        (0..self.n)
            .map(|i| {
                let u = a + i as f64 * h;
                if self.log {
                    u.exp()
                } else {
                    u
                }
            })
            .collect()
    }

    /// Trapezoid weights for integrating over the natural variable.
    fn weights(&self, points: &[f64]) -> Vec<f64> {
        let h = self.step();
        (0..self.n)
            .map(|i| {
                let w = if i == 0 || i + 1 == self.n { 0.5 * h } else { h };
                if self.log {
                    w * points[i]
                } else {
                    w
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPosterior {
    pub model: ModelSpec,
    /// `mu` of every grid point.
    pub mu: Vec<f64>,
    /// `sigma` of every grid point.
    pub sigma: Vec<f64>,
    /// Normalised density with respect to `d mu d sigma` at every point.
    pub density: Vec<f64>,
    /// Quadrature weight (cell area) of every point.
    pub weight: Vec<f64>,
    /// Posterior means of `(mu, sigma)`.
    pub mean: [f64; 2],
    /// Posterior variances of `(mu, sigma)`.
    pub variance: [f64; 2],
    /// Probability mass on the outermost grid lines.
    pub boundary_mass: f64,
}

impl GridPosterior {
    pub fn sd(&self) -> [f64; 2] {
        [self.variance[0].sqrt(), self.variance[1].sqrt()]
    }

    /// Grid point of highest posterior density.
    pub fn mode(&self) -> (f64, f64) {
        let k = (0..self.density.len()).max_by(|&a, &b| self.density[a].total_cmp(&self.density[b])).unwrap_or(0);
        (self.mu[k], self.sigma[k])
    }

    /// Posterior predictive density at `y`, integrated over the grid.
    pub fn predictive_density(&self, y: f64) -> f64 {
        let x = Observation::Scalar(y);
        let mut total = 0.0;
        for k in 0..self.density.len() {
            let p = self.weight[k] * self.density[k];
            if p > 0.0 {
                total += p * log_density_unchecked(&self.model, &Theta::gaussian(self.mu[k], self.sigma[k]), &x).exp();
            }
        }
        total
    }
}

/// Normalise log-posterior values over points with given cell areas.
fn finish(
    target: &Target,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    weight: Vec<f64>,
    on_boundary: impl Fn(usize) -> bool,
) -> Result<GridPosterior> {
    let lp: Vec<f64> = mu.iter().zip(&sigma).map(|(&m, &s)| target.log_posterior(&Theta::gaussian(m, s))).collect();
    let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::GridTooNarrow("posterior vanishes everywhere on the grid".into()));
    }
    let mut density: Vec<f64> = lp.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = density.iter().zip(&weight).map(|(d, w)| d * w).sum();
    density.iter_mut().for_each(|d| *d /= z);
    let mut m1 = [0.0; 2];
    let mut m2 = [0.0; 2];
    let mut boundary = 0.0;
    for k in 0..density.len() {
        let p = weight[k] * density[k];
        m1[0] += p * mu[k];
        m1[1] += p * sigma[k];
        m2[0] += p * mu[k] * mu[k];
        m2[1] += p * sigma[k] * sigma[k];
        if on_boundary(k) {
            boundary += p;
        }
    }
    if boundary > BOUNDARY_MASS_LIMIT {
        return Err(Error::GridTooNarrow(format!("{boundary:.2e} of the posterior mass lies on the grid boundary")));
    }
    Ok(GridPosterior {
        model: target.model,
        variance: [m2[0] - m1[0] * m1[0], m2[1] - m1[1] * m1[1]],
        mean: m1,
        mu,
        sigma,
        density,
        weight,
        boundary_mass: boundary,
    })
}

fn check_family(model: &ModelSpec) -> Result<()> {
    if matches!(model, ModelSpec::LogisticRegression { .. }) {
        return Err(Error::incompatible("grid posteriors are only available for the Gaussian family"));
    }
    Ok(())
}

/// Normalised posterior on a rectangular `(mu, sigma)` grid (trapezoid rule).
#[allow(clippy::too_many_arguments)]
pub fn grid_posterior(
    model: &ModelSpec,
    prior: &PriorSpec,
    loss_real: &LossSpec,
    data_real: &Dataset,
    loss_synth: &LossSpec,
    data_synth: &Dataset,
    mu_axis: &GridAxis,
    sigma_axis: &GridAxis,
) -> Result<GridPosterior> {
    check_family(model)?;
    let target = Target::new(model, prior, loss_real, data_real, loss_synth, data_synth)?;
    if mu_axis.n < 3 || sigma_axis.n < 3 {
        return Err(Error::invalid("grid axes need at least 3 points"));
    }
    if !(mu_axis.hi > mu_axis.lo && sigma_axis.hi > sigma_axis.lo && sigma_axis.lo > 0.0) || mu_axis.log {
        return Err(Error::invalid("grid axes must be increasing, sigma positive, and mu linear"));
    }
    let (mp, sp) = (mu_axis.points(), sigma_axis.points());
    let (wm, ws) = (mu_axis.weights(&mp), sigma_axis.weights(&sp));
    let (nm, ns) = (mp.len(), sp.len());
    let mut mu = Vec::with_capacity(nm * ns);
    let mut sigma = Vec::with_capacity(nm * ns);
    let mut weight = Vec::with_capacity(nm * ns);
    for i in 0..nm {
        for j in 0..ns {
            mu.push(mp[i]);
            sigma.push(sp[j]);
            weight.push(wm[i] * ws[j]);
        }
    }
    finish(&target, mu, sigma, weight, |k| {
        let (i, j) = (k / ns, k % ns);
        i == 0 || j == 0 || i + 1 == nm || j + 1 == ns
    })
}

/// Like [`grid_posterior`], but chooses the grid itself.
///
/// The grid is rectangular in `(v, ln sigma)` with `mu = c + v sigma`, which
/// follows the shape of Normal-Inverse-Gamma-like posteriors, and its extent
/// is found by coarse passes that keep every point within `e^-30` of the
/// maximum density.
#[allow(clippy::too_many_arguments)]
pub fn grid_posterior_auto(
    model: &ModelSpec,
    prior: &PriorSpec,
    loss_real: &LossSpec,
    data_real: &Dataset,
    loss_synth: &LossSpec,
    data_synth: &Dataset,
    points: usize,
) -> Result<GridPosterior> {
    check_family(model)?;
    if points < 3 {
        return Err(Error::invalid("grid axes need at least 3 points"));
    }
    let target = Target::new(model, prior, loss_real, data_real, loss_synth, data_synth)?;
    let centre = super::default_phi(&target);
    let c = centre[0];
    // log density in (v, u) coordinates, including the Jacobian sigma^2.
    let lq = |v: f64, u: f64| {
        let s = u.exp();
        target.log_posterior(&Theta::gaussian(c + v * s, s)) + 2.0 * u
    };
    let mut bounds = [-30.0, 30.0, centre[1] - 6.0, centre[1] + 6.0];
    const COARSE: usize = 81;
    const DROP: f64 = 30.0;
    for _pass in 0..12 {
        let hv = (bounds[1] - bounds[0]) / (COARSE - 1) as f64;
        let hu = (bounds[3] - bounds[2]) / (COARSE - 1) as f64;
        let mut lp = vec![vec![f64::NEG_INFINITY; COARSE]; COARSE];
        let mut max = f64::NEG_INFINITY;
        for (i, row) in lp.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = lq(bounds[0] + i as f64 * hv, bounds[2] + j as f64 * hu);
                max = max.max(*v);
            }
        }
        if !max.is_finite() {
            return Err(Error::GridTooNarrow("could not locate posterior mass".into()));
        }
        let (mut i0, mut i1, mut j0, mut j1) = (COARSE, 0, COARSE, 0);
        for (i, row) in lp.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v >= max - DROP {
                    i0 = i0.min(i);
                    i1 = i1.max(i);
                    j0 = j0.min(j);
                    j1 = j1.max(j);
                }
            }
        }
        let touches = i0 == 0 || j0 == 0 || i1 == COARSE - 1 || j1 == COARSE - 1;
        let new = [
            bounds[0] + (i0 as f64 - 1.0) * hv,
            bounds[0] + (i1 as f64 + 1.0) * hv,
            bounds[2] + (j0 as f64 - 1.0) * hu,
            bounds[2] + (j1 as f64 + 1.0) * hu,
        ];
        if touches {
            // Grow the box away from the edges the mass touches.
            let wv = bounds[1] - bounds[0];
            let wu = bounds[3] - bounds[2];
            bounds = [
                if i0 == 0 { bounds[0] - wv } else { new[0] },
                if i1 == COARSE - 1 { bounds[1] + wv } else { new[1] },
                if j0 == 0 { bounds[2] - wu } else { new[2] },
                if j1 == COARSE - 1 { bounds[3] + wu } else { new[3] },
            ];
            continue;
        }
        let converged =
            (new[1] - new[0]) > 0.5 * (bounds[1] - bounds[0]) && (new[3] - new[2]) > 0.5 * (bounds[3] - bounds[2]);
        bounds = new;
        if converged {
            let v_axis = GridAxis::new(bounds[0], bounds[1], points);
            let u_axis = GridAxis::new(bounds[2], bounds[3], points);
            let (vp, up) = (v_axis.points(), u_axis.points());
            let (wv, wu) = (v_axis.weights(&vp), u_axis.weights(&up));
            let n = points;
            let mut mu = Vec::with_capacity(n * n);
            let mut sigma = Vec::with_capacity(n * n);
            let mut weight = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let s = up[j].exp();
                    mu.push(c + vp[i] * s);
                    sigma.push(s);
                    weight.push(wv[i] * wu[j] * s * s);
                }
            }
            return finish(&target, mu, sigma, weight, |k| {
                let (i, j) = (k / n, k % n);
                i == 0 || j == 0 || i + 1 == n || j + 1 == n
            });
        }
    }
    Err(Error::GridTooNarrow("grid search did not converge".into()))
}
