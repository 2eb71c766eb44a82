//! Model likelihoods, generalized-Bayes losses, priors, and their gradients.

pub(crate) mod density;
pub(crate) mod loss;
pub(crate) mod prior;

pub use density::{log_density, log_density_gradient, normal_laplace_density_gradient, normal_laplace_log_density};
pub use loss::{loss_eval, loss_gradient, loss_sum, loss_sum_gradient, LossSum};
pub use prior::{prior_log_density, prior_log_density_gradient};

use serde::{Deserialize, Serialize};

use crate::data::{Observation, Task};
use crate::error::{Error, Result};

/// Smallest β accepted by [`LossSpec::BetaD`]; below this `(1/β) f^β` loses
/// too many digits to cancellation. Use [`LossSpec::LogLoss`] instead.
pub const MIN_BETA: f64 = 1e-4;

/// Default calibration weight for the β-divergence loss.
pub const DEFAULT_W_BETA: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Gaussian restricted to `mu ± halfwidth * sigma` of the current parameter.
    /// An infinite halfwidth gives the ordinary Gaussian.
    TruncatedGaussian {
        #[serde(default = "default_halfwidth")]
        halfwidth: f64,
    },
    /// Gaussian convolved with centred Laplace noise of scale `lambda`.
    NormalLaplace {
        lambda: f64,
    },
    LogisticRegression {
        dim: usize,
    },
}

fn default_halfwidth() -> f64 {
    3.0
}

impl ModelSpec {
    pub fn truncated_gaussian(halfwidth: f64) -> Self {
        ModelSpec::TruncatedGaussian { halfwidth }
    }

    pub fn gaussian() -> Self {
        ModelSpec::TruncatedGaussian { halfwidth: f64::INFINITY }
    }

    pub fn task(&self) -> Task {
        match self {
            ModelSpec::LogisticRegression { .. } => Task::Logistic,
            _ => Task::Gaussian,
        }
    }

    /// Number of scalar parameters.
    pub fn param_dim(&self) -> usize {
        match self {
            ModelSpec::LogisticRegression { dim } => dim + 1,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::TruncatedGaussian { halfwidth } if !(halfwidth > 0.0) => {
                Err(Error::invalid(format!("truncation halfwidth must be > 0, got {halfwidth}")))
            }
            ModelSpec::NormalLaplace { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(Error::invalid(format!("Laplace scale must be > 0, got {lambda}")))
            }
            ModelSpec::LogisticRegression { dim: 0 } => {
                Err(Error::invalid("logistic regression needs at least one feature"))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn check_theta(&self, theta: &Theta) -> Result<()> {
        match (self, theta) {
            (ModelSpec::LogisticRegression { dim }, Theta::Logistic { coefs, .. }) => {
                if coefs.len() != *dim {
                    return Err(Error::incompatible(format!("{} coefficients for a {dim}-feature model", coefs.len())));
                }
                Ok(())
            }
            (ModelSpec::LogisticRegression { .. }, _) => {
                Err(Error::incompatible("Gaussian parameters for a logistic model"))
            }
            (_, Theta::Gaussian { sigma, .. }) => {
                if !(*sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
                }
                Ok(())
            }
            (_, Theta::Logistic { .. }) => Err(Error::incompatible("logistic parameters for a Gaussian model")),
        }
    }

    pub(crate) fn check_observation(&self, x: &Observation) -> Result<()> {
        match (self, x) {
            (ModelSpec::LogisticRegression { dim }, Observation::Labeled { features, .. }) => {
                if features.len() != *dim {
                    return Err(Error::incompatible(format!(
                        "observation has {} features, model expects {dim}",
                        features.len()
                    )));
                }
                Ok(())
            }
            (ModelSpec::LogisticRegression { .. }, Observation::Scalar(_)) => {
                Err(Error::incompatible("scalar observation for a logistic model"))
            }
            (_, Observation::Scalar(_)) => Ok(()),
            (_, Observation::Labeled { .. }) => Err(Error::incompatible("labeled observation for a Gaussian model")),
        }
    }

    /// `ln erf(k / sqrt 2)`, the log mass of a standard normal inside `±k`.
    pub(crate) fn ln_truncation_mass(halfwidth: f64) -> f64 {
        if halfwidth.is_infinite() {
            0.0
        } else {
            crate::special::erf(halfwidth / crate::special::SQRT_2).ln()
        }
    }
}

/// Model parameters in their natural coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Gaussian { mu: f64, sigma: f64 },
    Logistic { alpha: f64, coefs: Vec<f64> },
}

impl Theta {
    pub fn gaussian(mu: f64, sigma: f64) -> Self {
        Theta::Gaussian { mu, sigma }
    }

    pub fn logistic(alpha: f64, coefs: Vec<f64>) -> Self {
        Theta::Logistic { alpha, coefs }
    }

    /// Flattened parameters: `(mu, sigma)` or `(alpha, coef_1, .., coef_d)`.
    /// Gradients use the same ordering.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Theta::Gaussian { mu, sigma } => vec![*mu, *sigma],
            Theta::Logistic { alpha, coefs } => std::iter::once(*alpha).chain(coefs.iter().copied()).collect(),
        }
    }

    pub fn from_vec(model: &ModelSpec, v: &[f64]) -> Self {
        match model {
            ModelSpec::LogisticRegression { .. } => Theta::Logistic { alpha: v[0], coefs: v[1..].to_vec() },
            _ => Theta::Gaussian { mu: v[0], sigma: v[1] },
        }
    }

    pub fn param_names(model: &ModelSpec) -> Vec<String> {
        match model {
            ModelSpec::LogisticRegression { dim } => {
                std::iter::once("alpha".to_string()).chain((1..=*dim).map(|j| format!("theta{j}"))).collect()
            }
            _ => vec!["mu".into(), "sigma".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// `-ln f(z)`.
    #[serde(alias = "log")]
    LogLoss,
    /// `-w ln f(z)`.
    Weighted { w: f64 },
    /// β-divergence loss scaled by the calibration weight `w_beta`.
    #[serde(rename = "beta_d")]
    BetaD {
        beta: f64,
        #[serde(default = "default_w_beta")]
        w_beta: f64,
    },
}

fn default_w_beta() -> f64 {
    DEFAULT_W_BETA
}

impl LossSpec {
    pub fn beta_d(beta: f64) -> Self {
        LossSpec::BetaD { beta, w_beta: DEFAULT_W_BETA }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::LogLoss => Ok(()),
            LossSpec::Weighted { w } if !(w >= 0.0 && w.is_finite()) => {
                Err(Error::invalid(format!("loss weight must be >= 0, got {w}")))
            }
            LossSpec::Weighted { .. } => Ok(()),
            LossSpec::BetaD { beta, w_beta } => {
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(Error::invalid(format!("beta must be > 0, got {beta}")));
                }
                if beta < MIN_BETA {
                    return Err(Error::invalid(format!("beta = {beta} is below {MIN_BETA}; use the log loss instead")));
                }
                if !(w_beta > 0.0 && w_beta.is_finite()) {
                    return Err(Error::invalid(format!("w_beta must be > 0, got {w_beta}")));
                }
                Ok(())
            }
        }
    }

    /// Short label used in file names and result tables.
    pub fn label(&self) -> String {
        match self {
            LossSpec::LogLoss => "log".to_string(),
            LossSpec::Weighted { w } => format!("w{w}"),
            LossSpec::BetaD { beta, w_beta } => format!("beta{beta}_wb{w_beta}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    /// `sigma^2 ~ InvGamma(shape, rate)`, `mu | sigma ~ N(mean, (scale * sigma)^2)`.
    NormalInverseGamma { shape: f64, rate: f64, mean: f64, scale: f64 },
    /// Independent `N(0, sd^2)` on the intercept and every coefficient.
    IndependentNormal {
        #[serde(default = "default_logistic_prior_sd")]
        sd: f64,
    },
}

fn default_logistic_prior_sd() -> f64 {
    50.0
}

impl PriorSpec {
    pub fn nig(shape: f64, rate: f64, mean: f64, scale: f64) -> Self {
        PriorSpec::NormalInverseGamma { shape, rate, mean, scale }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PriorSpec::NormalInverseGamma { shape, rate, mean, scale } => {
                shape > 0.0 && rate > 0.0 && scale > 0.0 && mean.is_finite()
            }
            PriorSpec::IndependentNormal { sd } => sd > 0.0 && sd.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid prior {self:?}")))
        }
    }

    pub(crate) fn check_model(&self, model: &ModelSpec) -> Result<()> {
        match (self, model.task()) {
            (PriorSpec::NormalInverseGamma { .. }, Task::Gaussian)
            | (PriorSpec::IndependentNormal { .. }, Task::Logistic) => Ok(()),
            _ => Err(Error::incompatible(format!("prior {self:?} does not fit model {model:?}"))),
        }
    }
}
