//! Adaptive random-walk Metropolis and HMC kernels over unconstrained coordinates.

use rand::Rng;
use rand_distr::StandardNormal;

use super::target::Target;
use super::{McmcConfig, Sampler};
use crate::seed::StreamRng;

pub(crate) struct ChainOutput {
    /// Post-warmup draws in unconstrained coordinates.
    pub phi: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    pub accepted: usize,
    pub divergences: usize,
    /// Final proposal scale (RW) or step size (HMC).
    pub scale: f64,
}

/// Lower Cholesky factor of a symmetric positive-definite matrix, or `None`.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn diag(v: &[f64]) -> Vec<Vec<f64>> {
    let d = v.len();
    let mut m = vec![vec![0.0; d]; d];
    for i in 0..d {
        m[i][i] = v[i];
    }
    m
}

/// Running mean and covariance (Welford).
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<Vec<f64>>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Moments { n: 0.0, mean: vec![0.0; d], m2: vec![vec![0.0; d]; d] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / self.n;
        }
        for (row, di) in self.m2.iter_mut().zip(&delta) {
            for ((c, xj), mj) in row.iter_mut().zip(x).zip(&self.mean) {
                *c += di * (xj - mj);
            }
        }
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        self.m2.iter().map(|row| row.iter().map(|v| v / (self.n - 1.0)).collect()).collect()
    }
}

/// Rough per-coordinate posterior scales from the curvature at `phi`.
pub(crate) fn initial_scales(target: &Target, phi: &[f64]) -> Vec<f64> {
    let f0 = target.log_density_phi(phi);
    let n = target.effective_n().max(1.0);
    (0..phi.len())
        .map(|j| {
            let h = 1e-3 * phi[j].abs().max(1.0);
            let mut p = phi.to_vec();
            let mut q = phi.to_vec();
            p[j] += h;
            q[j] -= h;
            let curv = -(target.log_density_phi(&p) - 2.0 * f0 + target.log_density_phi(&q)) / (h * h);
            if curv.is_finite() && curv > 0.0 {
                (1.0 / curv.sqrt()).min(10.0)
            } else {
                1.0 / n.sqrt()
            }
        })
        .collect()
}

pub(crate) fn run_chain(target: &Target, init: Vec<f64>, cfg: &McmcConfig, rng: &mut StreamRng) -> ChainOutput {
    match cfg.sampler {
        Sampler::AdaptiveRandomWalk => random_walk(target, init, cfg, rng),
        Sampler::Hmc { step_size, leapfrog_steps } => hmc(target, init, cfg, step_size, leapfrog_steps, rng),
    }
}

fn random_walk(target: &Target, mut x: Vec<f64>, cfg: &McmcConfig, rng: &mut StreamRng) -> ChainOutput {
    let d = x.len();
    let mut lp = target.log_density_phi(&x);
    let scales = initial_scales(target, &x);
    let mut chol = diag(&scales);
    let mut ln_s = (2.38 / (d as f64).sqrt()).ln();
    let cov_start = cfg.warmup / 4;
    let mut moments = Moments::new(d);
    let mut proposal = vec![0.0; d];
    let mut eps = vec![0.0; d];

    let mut step = |x: &mut Vec<f64>, lp: &mut f64, chol: &[Vec<f64>], s: f64, rng: &mut StreamRng| -> (f64, bool) {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for i in 0..d {
            proposal[i] = x[i] + s * (0..=i).map(|k| chol[i][k] * eps[k]).sum::<f64>();
        }
        let lq = target.log_density_phi(&proposal);
        let alpha = if lq.is_finite() { (lq - *lp).exp().min(1.0) } else { 0.0 };
        let u: f64 = rng.gen();
        let accept = u < alpha;
        if accept {
            x.copy_from_slice(&proposal);
            *lp = lq;
        }
        (alpha, accept)
    };

    for t in 0..cfg.warmup {
        let (alpha, _) = step(&mut x, &mut lp, &chol, ln_s.exp(), rng);
        let gain = (t as f64 + 1.0).powf(-0.6);
        ln_s = (ln_s + gain * (alpha - cfg.target_accept)).clamp(-20.0, 20.0);
        if t >= cov_start {
            moments.push(&x);
            let seen = t + 1 - cov_start;
            if seen >= 2 * d + 20 && seen.is_multiple_of(20) {
                let mut c = moments.covariance();
                let tr = (0..d).map(|i| c[i][i]).sum::<f64>() / d as f64;
                for (i, row) in c.iter_mut().enumerate() {
                    row[i] += 1e-10 * tr.max(1e-300);
                }
                if let Some(l) = cholesky(&c) {
                    chol = l;
                }
            }
        }
    }

    let s = ln_s.exp();
    let mut out = ChainOutput {
        phi: Vec::with_capacity(cfg.samples_per_chain),
        log_density: Vec::with_capacity(cfg.samples_per_chain),
        accepted: 0,
        divergences: 0,
        scale: s,
    };
    for _ in 0..cfg.samples_per_chain {
        if step(&mut x, &mut lp, &chol, s, rng).1 {
            out.accepted += 1;
        }
        out.phi.push(x.clone());
        out.log_density.push(lp);
    }
    out
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    ln_eps_bar: f64,
    t: f64,
    target: f64,
}

impl DualAveraging {
    fn new(eps: f64, target: f64) -> Self {
        DualAveraging { mu: (10.0 * eps).ln(), h_bar: 0.0, ln_eps_bar: 0.0, t: 0.0, target }
    }

    /// Returns the next step size.
    fn update(&mut self, accept: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.t += 1.0;
        let w = 1.0 / (self.t + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        let ln_eps = self.mu - self.t.sqrt() / GAMMA * self.h_bar;
        let eta = self.t.powf(-KAPPA);
        self.ln_eps_bar = eta * ln_eps + (1.0 - eta) * self.ln_eps_bar;
        ln_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.ln_eps_bar.exp()
    }
}

const DIVERGENCE_THRESHOLD: f64 = 1000.0;

fn hmc(
    target: &Target,
    x0: Vec<f64>,
    cfg: &McmcConfig,
    step_size: f64,
    leapfrog_steps: usize,
    rng: &mut StreamRng,
) -> ChainOutput {
    let d = x0.len();
    let mut inv_metric: Vec<f64> = initial_scales(target, &x0).iter().map(|s| s * s).collect();
    let mut x = x0;
    let (mut lp, mut grad) = target.log_density_phi_gradient(&x).unwrap_or((f64::NEG_INFINITY, vec![0.0; d]));
    let mut eps = step_size;
    let mut da = DualAveraging::new(eps, cfg.target_accept);
    let window = (cfg.warmup * 3 / 20, cfg.warmup * 3 / 4);
    let mut moments = Moments::new(d);

    let transition = |x: &mut Vec<f64>,
                      lp: &mut f64,
                      grad: &mut Vec<f64>,
                      eps: f64,
                      inv_metric: &[f64],
                      rng: &mut StreamRng|
     -> (f64, bool, bool) {
        let mut p: Vec<f64> = inv_metric.iter().map(|m| rng.sample::<f64, _>(StandardNormal) / m.sqrt()).collect();
        let kinetic = |p: &[f64]| 0.5 * p.iter().zip(inv_metric).map(|(a, m)| a * a * m).sum::<f64>();
        let h0 = -*lp + kinetic(&p);
        let mut q = x.clone();
        let mut g = grad.clone();
        let mut lq = *lp;
        let mut ok = true;
        // Jittered step size avoids periodic trajectories.
        let eps = eps * rng.gen_range(0.8..1.2);
        for _ in 0..leapfrog_steps {
            for i in 0..d {
                p[i] += 0.5 * eps * g[i];
                q[i] += eps * inv_metric[i] * p[i];
            }
            match target.log_density_phi_gradient(&q) {
                Some((v, gn)) => {
                    lq = v;
                    g = gn;
                }
                None => {
                    ok = false;
                    break;
                }
            }
            for i in 0..d {
                p[i] += 0.5 * eps * g[i];
            }
        }
        let h1 = if ok { -lq + kinetic(&p) } else { f64::INFINITY };
        let delta = h1 - h0;
        let divergent = !delta.is_finite() || delta > DIVERGENCE_THRESHOLD;
        let alpha = if delta.is_nan() { 0.0 } else { (-delta).exp().min(1.0) };
        let u: f64 = rng.gen();
        let accept = !divergent && u < alpha;
        if accept {
            *x = q;
            *lp = lq;
            *grad = g;
        }
        (alpha, divergent, accept)
    };

    for t in 0..cfg.warmup {
        let (alpha, _, _) = transition(&mut x, &mut lp, &mut grad, eps, &inv_metric, rng);
        eps = da.update(alpha);
        if t >= window.0 && t < window.1 {
            moments.push(&x);
        }
        if t + 1 == window.1 && moments.n > 10.0 {
            let c = moments.covariance();
            // Regularise toward a unit metric as in common practice.
            let n = moments.n;
            inv_metric = (0..d).map(|i| (n / (n + 5.0)) * c[i][i] + 1e-3 * (5.0 / (n + 5.0))).collect();
            da = DualAveraging::new(eps, cfg.target_accept);
        }
    }
    if cfg.warmup > 0 {
        eps = da.final_step();
    }

    let mut out = ChainOutput {
        phi: Vec::with_capacity(cfg.samples_per_chain),
        log_density: Vec::with_capacity(cfg.samples_per_chain),
        accepted: 0,
        divergences: 0,
        scale: eps,
    };
    for _ in 0..cfg.samples_per_chain {
        let (_, divergent, accept) = transition(&mut x, &mut lp, &mut grad, eps, &inv_metric, rng);
        out.divergences += usize::from(divergent);
        out.accepted += usize::from(accept);
        out.phi.push(x.clone());
        out.log_density.push(lp);
    }
    out
}
