//! General-Bayes posterior sampling with convergence diagnostics, plus a
//! brute-force grid posterior for two-parameter models.

mod diagnostics;
mod grid;
mod sampler;
pub(crate) mod target;

pub use diagnostics::{ess, rhat};
pub use grid::{grid_posterior, grid_posterior_auto, GridAxis, GridPosterior};
pub use target::log_unnormalised_posterior;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{LossSpec, ModelSpec, PriorSpec, Theta};
use crate::seed::{rng_from_seed, SeedSpec};
use crate::special::{mean, variance};
use target::Target;

/// R-hat above this is reported as a warning.
pub const RHAT_WARNING: f64 = 1.05;
/// Post-warmup divergence rate above this is reported as a warning.
pub const DIVERGENCE_WARNING: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    AdaptiveRandomWalk,
    Hmc { step_size: f64, leapfrog_steps: usize },
}

/// Starting point of each chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Data moments for the Gaussian family, zero for logistic regression.
    Default,
    /// The default point plus independent `N(0, sd^2)` jitter on the
    /// unconstrained coordinates.
    Jittered { sd: f64 },
    /// A fixed point in natural coordinates.
    Point { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    /// Retained draws per chain; warmup draws come on top and are discarded.
    pub samples_per_chain: usize,
    pub warmup: usize,
    pub sampler: Sampler,
    pub target_accept: f64,
    pub init: Init,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self::gaussian()
    }
}

impl McmcConfig {
    pub fn gaussian() -> Self {
        McmcConfig {
            chains: 4,
            samples_per_chain: 4000,
            warmup: 500,
            sampler: Sampler::AdaptiveRandomWalk,
            target_accept: 0.35,
            init: Init::Default,
        }
    }

    pub fn logistic() -> Self {
        McmcConfig { samples_per_chain: 6000, ..Self::gaussian() }
    }

    pub fn hmc(step_size: f64, leapfrog_steps: usize) -> Self {
        McmcConfig { sampler: Sampler::Hmc { step_size, leapfrog_steps }, target_accept: 0.8, ..Self::gaussian() }
    }

    pub fn with_samples(mut self, chains: usize, samples_per_chain: usize, warmup: usize) -> Self {
        self.chains = chains;
        self.samples_per_chain = samples_per_chain;
        self.warmup = warmup;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::invalid("at least one chain is required"));
        }
        if self.samples_per_chain < 4 {
            return Err(Error::invalid("samples_per_chain must be at least 4"));
        }
        if self.warmup >= self.samples_per_chain {
            return Err(Error::invalid(format!(
                "warmup ({}) must be smaller than samples_per_chain ({})",
                self.warmup, self.samples_per_chain
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid(format!("target_accept must lie in (0, 1), got {}", self.target_accept)));
        }
        if let Sampler::Hmc { step_size, leapfrog_steps } = self.sampler {
            if !(step_size > 0.0 && step_size.is_finite()) || leapfrog_steps == 0 {
                return Err(Error::invalid("HMC needs a positive step size and at least one leapfrog step"));
            }
        }
        if let Init::Jittered { sd } = self.init {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::invalid(format!("init jitter must be >= 0, got {sd}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    /// Post-warmup draws in natural coordinates ([`Theta::to_vec`] order).
    pub draws: Vec<Vec<f64>>,
    /// Unnormalised log posterior of each draw.
    pub log_posterior: Vec<f64>,
    pub acceptance_rate: f64,
    pub divergences: usize,
    pub seed: u64,
    /// Frozen proposal scale (random walk) or step size (HMC).
    pub adapted_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub model: ModelSpec,
    pub chains: Vec<ChainSamples>,
    /// Rank-normalised split R-hat per parameter.
    pub rhat: Vec<f64>,
    /// Bulk effective sample size per parameter.
    pub ess: Vec<f64>,
    pub warmup: usize,
    pub master_seed: u64,
}

impl PosteriorSamples {
    /// Wrap fixed draws (one chain), e.g. for building predictives by hand.
    pub fn from_draws(model: ModelSpec, draws: Vec<Vec<f64>>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::invalid("a posterior needs at least one draw"));
        }
        if draws.iter().any(|d| d.len() != model.param_dim()) {
            return Err(Error::incompatible("draw length does not match the model"));
        }
        let n = draws.len();
        let mut s = PosteriorSamples {
            model,
            chains: vec![ChainSamples {
                draws,
                log_posterior: vec![f64::NAN; n],
                acceptance_rate: f64::NAN,
                divergences: 0,
                seed: 0,
                adapted_scale: f64::NAN,
            }],
            rhat: Vec::new(),
            ess: Vec::new(),
            warmup: 0,
            master_seed: 0,
        };
        s.refresh_diagnostics();
        Ok(s)
    }

    fn refresh_diagnostics(&mut self) {
        let dim = self.dim();
        let cols: Vec<Vec<Vec<f64>>> =
            (0..dim).map(|j| self.chains.iter().map(|c| c.draws.iter().map(|d| d[j]).collect()).collect()).collect();
        self.rhat = cols.iter().map(|cs| rhat(&refs(cs))).collect();
        self.ess = cols.iter().map(|cs| ess(&refs(cs))).collect();
    }

    pub fn dim(&self) -> usize {
        self.model.param_dim()
    }

    pub fn param_names(&self) -> Vec<String> {
        Theta::param_names(&self.model)
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// All draws, chain by chain.
    pub fn draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.chains.iter().flat_map(|c| c.draws.iter().map(|d| d.as_slice()))
    }

    pub fn thetas(&self) -> impl Iterator<Item = Theta> + '_ {
        self.draws().map(move |d| Theta::from_vec(&self.model, d))
    }

    /// Every `k`-th draw of the pooled chains, keeping at most `max` draws.
    pub fn thinned(&self, max: usize) -> Vec<Theta> {
        let n = self.n_draws();
        let k = n.div_ceil(max.max(1)).max(1);
        self.draws().step_by(k).map(|d| Theta::from_vec(&self.model, d)).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws().map(|d| d[j]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| mean(&self.column(j))).collect()
    }

    pub fn sd(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| variance(&self.column(j)).sqrt()).collect()
    }

    /// Monte-Carlo standard error of each posterior mean.
    pub fn mcse_mean(&self) -> Vec<f64> {
        self.sd().iter().zip(&self.ess).map(|(s, e)| s / e.sqrt()).collect()
    }

    /// Monte-Carlo standard error of each posterior standard deviation
    /// (delta method on the second central moment).
    pub fn mcse_sd(&self) -> Vec<f64> {
        let means = self.mean();
        (0..self.dim())
            .map(|j| {
                let sq: Vec<Vec<f64>> =
                    self.chains.iter().map(|c| c.draws.iter().map(|d| (d[j] - means[j]).powi(2)).collect()).collect();
                let flat: Vec<f64> = sq.iter().flatten().copied().collect();
                let e = ess(&refs(&sq));
                let mcse_var = variance(&flat).sqrt() / e.sqrt();
                mcse_var / (2.0 * mean(&flat).sqrt())
            })
            .collect()
    }

    pub fn quantile(&self, j: usize, q: f64) -> f64 {
        let mut v = self.column(j);
        v.sort_by(|a, b| a.total_cmp(b));
        let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.chains.iter().map(|c| c.acceptance_rate).collect()
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NAN, f64::max)
    }

    pub fn divergence_rate(&self) -> f64 {
        self.chains.iter().map(|c| c.divergences).sum::<usize>() as f64 / self.n_draws() as f64
    }

    /// Human-readable convergence warnings; empty when all checks pass.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        for (name, r) in self.param_names().iter().zip(&self.rhat) {
            if *r > RHAT_WARNING {
                w.push(format!("R-hat for {name} is {r:.3} (> {RHAT_WARNING})"));
            }
        }
        let dr = self.divergence_rate();
        if dr > DIVERGENCE_WARNING {
            w.push(format!("{:.1}% of HMC transitions diverged", 100.0 * dr));
        }
        w
    }
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|c| c.as_slice()).collect()
}

/// Deterministic starting point in unconstrained coordinates.
fn default_phi(target: &Target) -> Vec<f64> {
    match target.model {
        ModelSpec::LogisticRegression { dim } => vec![0.0; dim + 1],
        model => {
            let xs: Vec<f64> = target.data_in_use().filter_map(|o| o.as_scalar()).collect();
            let prior = crate::models::prior::prior_location(&target.prior, &model);
            let (m, mut s) = match xs.len() {
                0 => (prior[0], prior[1]),
                1 => (xs[0], prior[1]),
                _ => (mean(&xs), variance(&xs).sqrt()),
            };
            if !(s > 0.0 && s.is_finite()) {
                s = 1.0;
            }
            if let ModelSpec::TruncatedGaussian { halfwidth } = model {
                let spread = xs.iter().map(|x| (x - m).abs()).fold(0.0, f64::max);
                s = s.max(1.05 * spread / halfwidth);
            }
            vec![m, s.ln()]
        }
    }
}

fn initial_point(target: &Target, cfg: &McmcConfig, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let base = match &cfg.init {
        Init::Point { values } => {
            let theta = Theta::from_vec(&target.model, values);
            target.model.check_theta(&theta)?;
            target.phi_of(&theta)
        }
        _ => default_phi(target),
    };
    let mut phi = base.clone();
    if let Init::Jittered { sd } = cfg.init {
        for p in phi.iter_mut() {
            *p += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    if target.log_density_phi(&phi).is_finite() {
        return Ok(phi);
    }
    for attempt in 1..=100 {
        let sd = 0.05 * attempt as f64;
        phi = base.iter().map(|b| b + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        if target.log_density_phi(&phi).is_finite() {
            return Ok(phi);
        }
    }
    Err(Error::Sampler("log posterior is not finite at any of 100 initial points".into()))
}

/// Sample the general-Bayes posterior. Chains run in parallel on independent
/// streams derived from `seed`; the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn sample_posterior(
    model: &ModelSpec,
    prior: &PriorSpec,
    loss_real: &LossSpec,
    data_real: &Dataset,
    loss_synth: &LossSpec,
    data_synth: &Dataset,
    cfg: &McmcConfig,
    seed: u64,
) -> Result<PosteriorSamples> {
    cfg.validate()?;
    let target = Target::new(model, prior, loss_real, data_real, loss_synth, data_synth)?;
    let spec = SeedSpec::new(seed);
    let chains = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let chain_seed = spec.derive("chain", 0, c as u64);
            let mut rng = rng_from_seed(chain_seed);
            let init = initial_point(&target, cfg, &mut rng)?;
            let out = sampler::run_chain(&target, init, cfg, &mut rng);
            let (draws, log_posterior): (Vec<Vec<f64>>, Vec<f64>) = out
                .phi
                .iter()
                .zip(&out.log_density)
                .map(|(phi, lp)| {
                    let theta = target.theta_of(phi);
                    let jac = if matches!(model, ModelSpec::LogisticRegression { .. }) { 0.0 } else { phi[1] };
                    (theta.to_vec(), lp - jac)
                })
                .unzip();
            Ok(ChainSamples {
                acceptance_rate: out.accepted as f64 / cfg.samples_per_chain as f64,
                divergences: out.divergences,
                seed: chain_seed,
                adapted_scale: out.scale,
                draws,
                log_posterior,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = PosteriorSamples {
        model: *model,
        chains,
        rhat: Vec::new(),
        ess: Vec::new(),
        warmup: cfg.warmup,
        master_seed: seed,
    };
    samples.refresh_diagnostics();
    Ok(samples)
}

/// Closed-form posterior of an untruncated Gaussian under the log loss with a
/// Normal-Inverse-Gamma prior. Used as an independent check on the sampler
/// and the grid.
pub fn conjugate_nig_update(prior: &PriorSpec, xs: &[f64]) -> Result<PriorSpec> {
    prior.validate()?;
    let PriorSpec::NormalInverseGamma { shape, rate, mean: m0, scale } = *prior else {
        return Err(Error::incompatible("conjugate update needs a Normal-Inverse-Gamma prior"));
    };
    if xs.is_empty() {
        return Ok(*prior);
    }
    let n = xs.len() as f64;
    let xbar = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let k0 = 1.0 / (scale * scale);
    let kn = k0 + n;
    Ok(PriorSpec::NormalInverseGamma {
        shape: shape + 0.5 * n,
        rate: rate + 0.5 * ss + k0 * n * (xbar - m0).powi(2) / (2.0 * kn),
        mean: (k0 * m0 + n * xbar) / kn,
        scale: 1.0 / kn.sqrt(),
    })
}

#[cfg(test)]
mod tests;
