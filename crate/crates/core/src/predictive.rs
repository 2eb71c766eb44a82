//! Posterior predictive distributions and uniform ensembles over synthetic
//! realisations.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{Observation, Task};
use crate::error::{Error, Result};
use crate::inference::PosteriorSamples;
use crate::models::density::{linear_predictor, log_density_unchecked, truncated_gaussian_ln_pdf};
use crate::models::{ModelSpec, Theta};
use crate::privacy::sample_laplace;
use crate::special::{log_mean_exp, logistic, std_normal_cdf, std_normal_quantile};

/// Anything that assigns a predictive log density (or log mass) to an
/// observation.
pub trait Predictive: Sync {
    fn model(&self) -> &ModelSpec;

    fn log_predictive(&self, x: &Observation) -> f64;

    /// Predicted probability of label 1 (logistic models only).
    fn prob_label_one(&self, features: &[f64]) -> f64 {
        self.log_predictive(&Observation::Labeled { features: features.to_vec(), label: true }).exp()
    }
}

/// The posterior predictive `p(x) = mean_s f(x | theta_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveModel {
    model: ModelSpec,
    draws: Vec<Theta>,
}

impl PredictiveModel {
    /// Uses every retained draw.
    pub fn new(posterior: &PosteriorSamples) -> Self {
        PredictiveModel { model: posterior.model, draws: posterior.thetas().collect() }
    }

    /// Uses an evenly thinned subset of at most `max_draws` draws.
    pub fn thinned(posterior: &PosteriorSamples, max_draws: usize) -> Self {
        PredictiveModel { model: posterior.model, draws: posterior.thinned(max_draws) }
    }

    pub fn from_thetas(model: ModelSpec, draws: Vec<Theta>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::invalid("a predictive needs at least one draw"));
        }
        draws.iter().try_for_each(|t| model.check_theta(t))?;
        Ok(PredictiveModel { model, draws })
    }

    pub fn draws(&self) -> &[Theta] {
        &self.draws
    }

    /// Draw `n` values from the predictive (Gaussian family only).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        if self.model.task() != Task::Gaussian {
            return Err(Error::incompatible("sampling is only implemented for the Gaussian family"));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let Theta::Gaussian { mu, sigma } = self.draws[rng.gen_range(0..self.draws.len())] else {
                unreachable!("checked on construction")
            };
            let y = match self.model {
                ModelSpec::TruncatedGaussian { halfwidth } if halfwidth.is_finite() => {
                    let lo = std_normal_cdf(-halfwidth);
                    let hi = std_normal_cdf(halfwidth);
                    let u = lo + (hi - lo) * rng.gen::<f64>();
                    mu + sigma * std_normal_quantile(u).clamp(-halfwidth, halfwidth)
                }
                ModelSpec::TruncatedGaussian { .. } => mu + sigma * rng.sample::<f64, _>(StandardNormal),
                ModelSpec::NormalLaplace { lambda } => {
                    mu + sigma * rng.sample::<f64, _>(StandardNormal) + sample_laplace(lambda, rng)
                }
                ModelSpec::LogisticRegression { .. } => unreachable!(),
            };
            out.push(y);
        }
        Ok(out)
    }
}

impl Predictive for PredictiveModel {
    fn model(&self) -> &ModelSpec {
        &self.model
    }

    fn log_predictive(&self, x: &Observation) -> f64 {
        // Streaming log-sum-exp; the truncated normaliser is hoisted.
        let mut acc = StreamingLse::default();
        match (self.model, x) {
            (ModelSpec::TruncatedGaussian { halfwidth }, Observation::Scalar(y)) => {
                let ln_mass = ModelSpec::ln_truncation_mass(halfwidth);
                for t in &self.draws {
                    if let Theta::Gaussian { mu, sigma } = t {
                        acc.push(truncated_gaussian_ln_pdf(*mu, *sigma, halfwidth, ln_mass, *y));
                    }
                }
            }
            _ => {
                for t in &self.draws {
                    acc.push(log_density_unchecked(&self.model, t, x));
                }
            }
        }
        acc.value() - (self.draws.len() as f64).ln()
    }

    fn prob_label_one(&self, features: &[f64]) -> f64 {
        let total: f64 = self
            .draws
            .iter()
            .map(|t| match t {
                Theta::Logistic { alpha, coefs } => logistic(linear_predictor(*alpha, coefs, features)),
                Theta::Gaussian { .. } => f64::NAN,
            })
            .sum();
        total / self.draws.len() as f64
    }
}

#[derive(Default)]
struct StreamingLse {
    max: f64,
    sum: f64,
    started: bool,
}

impl StreamingLse {
    fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if !self.started {
            self.max = v;
            self.sum = 1.0;
            self.started = true;
        } else if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        if self.started {
            self.max + self.sum.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Predictive density (or label-1 probability for labelled observations with
/// label 1) at `x`.
pub fn predictive_density(p: &PredictiveModel, x: &Observation) -> Result<f64> {
    p.model.check_observation(x)?;
    Ok(p.log_predictive(x).exp())
}

/// Uniform mixture of member predictives, one per synthetic realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEnsemble {
    members: Vec<PredictiveModel>,
}

impl PredictiveEnsemble {
    pub fn new(members: Vec<PredictiveModel>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::invalid("an ensemble needs at least one member"))?;
        if members.iter().any(|m| m.model != first.model) {
            return Err(Error::incompatible("ensemble members must share a model"));
        }
        Ok(PredictiveEnsemble { members })
    }

    pub fn members(&self) -> &[PredictiveModel] {
        &self.members
    }

    /// Member log predictives at `x`, in member order.
    pub fn member_log_predictives(&self, x: &Observation) -> Vec<f64> {
        self.members.iter().map(|m| m.log_predictive(x)).collect()
    }
}

impl Predictive for PredictiveEnsemble {
    fn model(&self) -> &ModelSpec {
        &self.members[0].model
    }

    fn log_predictive(&self, x: &Observation) -> f64 {
        log_mean_exp(&self.member_log_predictives(x))
    }

    fn prob_label_one(&self, features: &[f64]) -> f64 {
        self.members.iter().map(|m| m.prob_label_one(features)).sum::<f64>() / self.members.len() as f64
    }
}

pub fn averaged_predictive(e: &PredictiveEnsemble, x: &Observation) -> Result<f64> {
    e.model().check_observation(x)?;
    Ok(e.log_predictive(x).exp())
}

/// Index sets for `b` ensemble members of size `m` drawn from a pool of `pool`
/// synthetic points: disjoint when the pool is large enough, otherwise each
/// member is an independent without-replacement subsample.
pub fn ensemble_subsets<R: Rng + ?Sized>(pool: usize, m: usize, b: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if m > pool {
        return Err(Error::invalid(format!("cannot draw {m} points from a pool of {pool}")));
    }
    if m == 0 {
        return Ok(vec![Vec::new(); b]);
    }
    if pool >= b * m {
        let perm = sample_indices(rng, pool, b * m).into_vec();
        Ok(perm.chunks(m).map(|c| c.to_vec()).collect())
    } else {
        Ok((0..b).map(|_| sample_indices(rng, pool, m).into_vec()).collect())
    }
}
