use super::{ModelSpec, PriorSpec, Theta};
use crate::error::{Error, Result};
use crate::special::{ln_gamma, LN_SQRT_2PI};

/// Log prior density.
///
/// For the Gaussian family the density is taken with respect to Lebesgue
/// measure on `(mu, sigma)`, i.e. the Normal-Inverse-Gamma density on
/// `(mu, sigma^2)` times the Jacobian `2 sigma`.
pub fn prior_log_density(prior: &PriorSpec, theta: &Theta) -> Result<f64> {
    prior.validate()?;
    match (prior, theta) {
        (&PriorSpec::NormalInverseGamma { shape, rate, mean, scale }, &Theta::Gaussian { mu, sigma }) => {
            if !(sigma > 0.0) {
                return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
            }
            let ln_s = sigma.ln();
            let var = sigma * sigma;
            let ln_ig = shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * 2.0 * ln_s - rate / var;
            let sd = scale * sigma;
            let z = (mu - mean) / sd;
            let ln_normal = -0.5 * z * z - LN_SQRT_2PI - sd.ln();
            Ok(ln_ig + std::f64::consts::LN_2 + ln_s + ln_normal)
        }
        (&PriorSpec::IndependentNormal { sd }, Theta::Logistic { alpha, coefs }) => {
            let ln_n = |v: f64| -0.5 * (v / sd).powi(2) - LN_SQRT_2PI - sd.ln();
            Ok(ln_n(*alpha) + coefs.iter().map(|c| ln_n(*c)).sum::<f64>())
        }
        _ => Err(Error::incompatible(format!("prior {prior:?} does not match parameters {theta:?}"))),
    }
}

/// Gradient of [`prior_log_density`] in [`Theta::to_vec`] order.
pub fn prior_log_density_gradient(prior: &PriorSpec, theta: &Theta) -> Result<Vec<f64>> {
    prior.validate()?;
    match (prior, theta) {
        (&PriorSpec::NormalInverseGamma { shape, rate, mean, scale }, &Theta::Gaussian { mu, sigma }) => {
            if !(sigma > 0.0) {
                return Err(Error::Boundary(format!("sigma = {sigma}")));
            }
            let s2 = scale * scale;
            let d = mu - mean;
            let s3 = sigma.powi(3);
            Ok(vec![-d / (s2 * sigma * sigma), -2.0 * (shape + 1.0) / sigma + 2.0 * rate / s3 + d * d / (s2 * s3)])
        }
        (&PriorSpec::IndependentNormal { sd }, Theta::Logistic { alpha, coefs }) => {
            let v = sd * sd;
            Ok(std::iter::once(-alpha / v).chain(coefs.iter().map(|c| -c / v)).collect())
        }
        _ => Err(Error::incompatible(format!("prior {prior:?} does not match parameters {theta:?}"))),
    }
}

/// Prior mean of `(mu, sigma^2)` used to initialise samplers with no data.
pub(crate) fn prior_location(prior: &PriorSpec, model: &ModelSpec) -> Vec<f64> {
    match (prior, model) {
        (&PriorSpec::NormalInverseGamma { shape, rate, mean, .. }, _) => {
            let var = if shape > 1.0 { rate / (shape - 1.0) } else { rate / shape };
            vec![mean, var.sqrt()]
        }
        (PriorSpec::IndependentNormal { .. }, m) => vec![0.0; m.param_dim()],
    }
}
