use super::{ModelSpec, Theta};
use crate::data::Observation;
use crate::error::{Error, Result};
use crate::special::{ln_logistic, ln_mills_ratio, logistic, std_normal_ln_pdf};

/// Natural-log density (or mass, for the logistic model) of `x` under `theta`.
///
/// Points outside a truncated Gaussian's support give `-inf`.
pub fn log_density(model: &ModelSpec, theta: &Theta, x: &Observation) -> Result<f64> {
    model.check_theta(theta)?;
    model.check_observation(x)?;
    Ok(log_density_unchecked(model, theta, x))
}

pub(crate) fn log_density_unchecked(model: &ModelSpec, theta: &Theta, x: &Observation) -> f64 {
    match (model, theta, x) {
        (ModelSpec::TruncatedGaussian { halfwidth }, Theta::Gaussian { mu, sigma }, Observation::Scalar(y)) => {
            truncated_gaussian_ln_pdf(*mu, *sigma, *halfwidth, ModelSpec::ln_truncation_mass(*halfwidth), *y)
        }
        (ModelSpec::NormalLaplace { lambda }, Theta::Gaussian { mu, sigma }, Observation::Scalar(y)) => {
            nl_ln_pdf(*mu, *sigma, *lambda, *y)
        }
        (
            ModelSpec::LogisticRegression { .. },
            Theta::Logistic { alpha, coefs },
            Observation::Labeled { features, label },
        ) => {
            let eta = linear_predictor(*alpha, coefs, features);
            if *label {
                ln_logistic(eta)
            } else {
                ln_logistic(-eta)
            }
        }
        _ => unreachable!("checked by caller"),
    }
}

#[inline]
pub(crate) fn truncated_gaussian_ln_pdf(mu: f64, sigma: f64, halfwidth: f64, ln_mass: f64, y: f64) -> f64 {
    let t = (y - mu) / sigma;
    if t.abs() > halfwidth {
        return f64::NEG_INFINITY;
    }
    std_normal_ln_pdf(t) - sigma.ln() - ln_mass
}

#[inline]
pub(crate) fn linear_predictor(alpha: f64, coefs: &[f64], features: &[f64]) -> f64 {
    alpha + coefs.iter().zip(features).map(|(c, f)| c * f).sum::<f64>()
}

/// Log density of `N(mu, sigma^2) * Laplace(0, lambda)` at `y`.
///
/// Written as `phi(t) / (2 lambda) * (R(r - t) + R(r + t))` with
/// `t = (y - mu) / sigma`, `r = sigma / lambda` and `R` Mills' ratio; this is
/// algebraically the erf form and stays finite far into the tails.
pub fn normal_laplace_log_density(mu: f64, sigma: f64, lambda: f64, y: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(nl_ln_pdf(mu, sigma, lambda, y))
}

struct NlParts {
    ln_pdf: f64,
    /// d ln f / dt and d ln f / dr.
    d_t: f64,
    d_r: f64,
}

#[inline]
fn nl_parts(t: f64, r: f64, lambda: f64) -> NlParts {
    let a = r - t;
    let b = r + t;
    let la = ln_mills_ratio(a);
    let lb = ln_mills_ratio(b);
    let ln_s = if la > lb { la + (lb - la).exp().ln_1p() } else { lb + (la - lb).exp().ln_1p() };
    let wa = (la - ln_s).exp();
    let wb = (lb - ln_s).exp();
    let inv_s = (-ln_s).exp();
    NlParts {
        ln_pdf: std_normal_ln_pdf(t) - (2.0 * lambda).ln() + ln_s,
        d_t: -t - a * wa + b * wb,
        d_r: a * wa + b * wb - 2.0 * inv_s,
    }
}

#[inline]
pub(crate) fn nl_ln_pdf(mu: f64, sigma: f64, lambda: f64, y: f64) -> f64 {
    nl_parts((y - mu) / sigma, sigma / lambda, lambda).ln_pdf
}

/// `(ln f, d ln f / d mu, d ln f / d sigma)` for the Normal-Laplace density.
pub fn normal_laplace_density_gradient(mu: f64, sigma: f64, lambda: f64, y: f64) -> (f64, f64, f64) {
    let t = (y - mu) / sigma;
    let p = nl_parts(t, sigma / lambda, lambda);
    (p.ln_pdf, -p.d_t / sigma, -p.d_t * t / sigma + p.d_r / lambda)
}

/// Gradient of `ln f(x)` in the ordering of [`Theta::to_vec`].
///
/// Errors when `x` sits outside (or on the edge of) a truncated support.
pub fn log_density_gradient(model: &ModelSpec, theta: &Theta, x: &Observation) -> Result<Vec<f64>> {
    model.check_theta(theta)?;
    model.check_observation(x)?;
    let mut g = vec![0.0; model.param_dim()];
    add_log_density_gradient(model, theta, x, 1.0, &mut g)?;
    Ok(g)
}

/// Accumulates `scale * grad ln f(x)` into `out`.
pub(crate) fn add_log_density_gradient(
    model: &ModelSpec,
    theta: &Theta,
    x: &Observation,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    match (model, theta, x) {
        (ModelSpec::TruncatedGaussian { halfwidth }, Theta::Gaussian { mu, sigma }, Observation::Scalar(y)) => {
            let t = (y - mu) / sigma;
            if t.abs() >= *halfwidth {
                return Err(Error::Boundary(format!("{y} is not interior to mu ± {halfwidth} sigma")));
            }
            out[0] += scale * t / sigma;
            out[1] += scale * (t * t - 1.0) / sigma;
        }
        (ModelSpec::NormalLaplace { lambda }, Theta::Gaussian { mu, sigma }, Observation::Scalar(y)) => {
            let (_, dmu, dsigma) = normal_laplace_density_gradient(*mu, *sigma, *lambda, *y);
            out[0] += scale * dmu;
            out[1] += scale * dsigma;
        }
        (
            ModelSpec::LogisticRegression { .. },
            Theta::Logistic { alpha, coefs },
            Observation::Labeled { features, label },
        ) => {
            let p1 = logistic(linear_predictor(*alpha, coefs, features));
            let resid = if *label { 1.0 - p1 } else { -p1 };
            out[0] += scale * resid;
            for (o, f) in out[1..].iter_mut().zip(features) {
                *o += scale * resid * f;
            }
        }
        _ => unreachable!("checked by caller"),
    }
    Ok(())
}
