use super::density::{
    add_log_density_gradient, linear_predictor, log_density_unchecked, normal_laplace_density_gradient,
};
use super::{LossSpec, ModelSpec, Theta};
use crate::data::Observation;
use crate::error::Result;
use crate::special::{logistic, GL8, LN_SQRT_2PI};

/// A summed loss together with its gradient over [`Theta::to_vec`] coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSum {
    pub value: f64,
    pub gradient: Vec<f64>,
}

fn check(loss: &LossSpec, model: &ModelSpec, theta: &Theta) -> Result<()> {
    loss.validate()?;
    model.validate()?;
    model.check_theta(theta)
}

/// The loss `l(z, f_theta)` of a single observation.
pub fn loss_eval(loss: &LossSpec, model: &ModelSpec, theta: &Theta, z: &Observation) -> Result<f64> {
    check(loss, model, theta)?;
    model.check_observation(z)?;
    Ok(loss_sum_unchecked(loss, model, theta, std::slice::from_ref(z)))
}

/// Gradient of [`loss_eval`] with respect to `theta`.
pub fn loss_gradient(loss: &LossSpec, model: &ModelSpec, theta: &Theta, z: &Observation) -> Result<Vec<f64>> {
    check(loss, model, theta)?;
    model.check_observation(z)?;
    Ok(loss_sum_gradient_unchecked(loss, model, theta, std::slice::from_ref(z))?.gradient)
}

/// Sum of the loss over `data`. For the Gaussian-family β-divergence the
/// parameter-only integral term is evaluated once.
pub fn loss_sum(loss: &LossSpec, model: &ModelSpec, theta: &Theta, data: &[Observation]) -> Result<f64> {
    check(loss, model, theta)?;
    data.iter().try_for_each(|z| model.check_observation(z))?;
    Ok(loss_sum_unchecked(loss, model, theta, data))
}

pub fn loss_sum_gradient(loss: &LossSpec, model: &ModelSpec, theta: &Theta, data: &[Observation]) -> Result<LossSum> {
    check(loss, model, theta)?;
    data.iter().try_for_each(|z| model.check_observation(z))?;
    loss_sum_gradient_unchecked(loss, model, theta, data)
}

pub(crate) fn loss_sum_unchecked(loss: &LossSpec, model: &ModelSpec, theta: &Theta, data: &[Observation]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    match *loss {
        LossSpec::LogLoss => -data.iter().map(|z| log_density_unchecked(model, theta, z)).sum::<f64>(),
        LossSpec::Weighted { w } => {
            if w == 0.0 {
                0.0
            } else {
                -w * data.iter().map(|z| log_density_unchecked(model, theta, z)).sum::<f64>()
            }
        }
        LossSpec::BetaD { beta, w_beta } => match (model, theta) {
            (ModelSpec::LogisticRegression { .. }, Theta::Logistic { alpha, coefs }) => {
                let mut total = 0.0;
                for z in data {
                    if let Observation::Labeled { features, label } = z {
                        let p1 = logistic(linear_predictor(*alpha, coefs, features));
                        let pz = if *label { p1 } else { 1.0 - p1 };
                        let integral = (p1.powf(beta + 1.0) + (1.0 - p1).powf(beta + 1.0)) / (beta + 1.0);
                        total += integral - pz.powf(beta) / beta;
                    }
                }
                w_beta * total
            }
            (_, Theta::Gaussian { sigma, .. }) => {
                let (integral, _) = gaussian_family_integral_term(model, *sigma, beta);
                let power_sum: f64 = data.iter().map(|z| (beta * log_density_unchecked(model, theta, z)).exp()).sum();
                w_beta * (data.len() as f64 * integral - power_sum / beta)
            }
            _ => unreachable!("checked by caller"),
        },
    }
}

pub(crate) fn loss_sum_gradient_unchecked(
    loss: &LossSpec,
    model: &ModelSpec,
    theta: &Theta,
    data: &[Observation],
) -> Result<LossSum> {
    let mut gradient = vec![0.0; model.param_dim()];
    if data.is_empty() {
        return Ok(LossSum { value: 0.0, gradient });
    }
    let value = match *loss {
        LossSpec::LogLoss | LossSpec::Weighted { .. } => {
            let w = match *loss {
                LossSpec::Weighted { w } => w,
                _ => 1.0,
            };
            if w == 0.0 {
                return Ok(LossSum { value: 0.0, gradient });
            }
            let mut lp = 0.0;
            for z in data {
                lp += log_density_unchecked(model, theta, z);
                add_log_density_gradient(model, theta, z, -w, &mut gradient)?;
            }
            -w * lp
        }
        LossSpec::BetaD { beta, w_beta } => match (model, theta) {
            (ModelSpec::LogisticRegression { .. }, Theta::Logistic { alpha, coefs }) => {
                let mut total = 0.0;
                for z in data {
                    if let Observation::Labeled { features, label } = z {
                        let p1 = logistic(linear_predictor(*alpha, coefs, features));
                        let p0 = 1.0 - p1;
                        let pz = if *label { p1 } else { p0 };
                        let resid = if *label { p0 } else { -p1 };
                        total += (p1.powf(beta + 1.0) + p0.powf(beta + 1.0)) / (beta + 1.0) - pz.powf(beta) / beta;
                        let d_eta = (p1.powf(beta) - p0.powf(beta)) * p1 * p0 - pz.powf(beta) * resid;
                        gradient[0] += w_beta * d_eta;
                        for (g, f) in gradient[1..].iter_mut().zip(features) {
                            *g += w_beta * d_eta * f;
                        }
                    }
                }
                w_beta * total
            }
            (_, Theta::Gaussian { sigma, .. }) => {
                let (integral, d_integral) = gaussian_family_integral_term(model, *sigma, beta);
                let n = data.len() as f64;
                gradient[1] += w_beta * n * d_integral;
                let mut power_sum = 0.0;
                for z in data {
                    let fb = (beta * log_density_unchecked(model, theta, z)).exp();
                    if fb > 0.0 {
                        power_sum += fb;
                        add_log_density_gradient(model, theta, z, -w_beta * fb, &mut gradient)?;
                    }
                }
                w_beta * (n * integral - power_sum / beta)
            }
            _ => unreachable!("checked by caller"),
        },
    };
    Ok(LossSum { value, gradient })
}

/// `(1/(beta+1)) * integral f^(beta+1)` and its derivative in sigma.
///
/// The Gaussian family uses the closed form of the untruncated Gaussian for
/// both the plain and the truncated model; the Normal-Laplace density has no
/// closed form and is integrated numerically.
pub(crate) fn gaussian_family_integral_term(model: &ModelSpec, sigma: f64, beta: f64) -> (f64, f64) {
    match *model {
        ModelSpec::TruncatedGaussian { .. } => {
            let c = (-beta * LN_SQRT_2PI - 1.5 * (1.0 + beta).ln() - beta * sigma.ln()).exp();
            (c, -beta * c / sigma)
        }
        ModelSpec::NormalLaplace { lambda } => normal_laplace_power_integral(sigma, lambda, beta),
        ModelSpec::LogisticRegression { .. } => unreachable!("no shared integral term"),
    }
}

/// Gauss–Legendre quadrature over geometrically widening panels on the
/// half-line; the density is symmetric about its location.
fn normal_laplace_power_integral(sigma: f64, lambda: f64, beta: f64) -> (f64, f64) {
    let h0 = 0.25 * sigma.min(lambda);
    let upper = 12.0 * sigma + 60.0 * lambda / (1.0 + beta);
    let mut lo = 0.0;
    let mut step = h0;
    let mut value = 0.0;
    let mut deriv = 0.0;
    while lo < upper {
        let hi = (lo + step).min(upper);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (x, w) in GL8 {
            let u = mid + half * x;
            let (ln_f, _, d_sigma) = normal_laplace_density_gradient(0.0, sigma, lambda, u);
            let fp = ((beta + 1.0) * ln_f).exp();
            value += w * half * fp;
            deriv += w * half * fp * d_sigma;
        }
        lo = hi;
        step *= 1.25;
    }
    (2.0 * value / (beta + 1.0), 2.0 * deriv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::models::density::nl_ln_pdf;
    use rand::{Rng, SeedableRng};

    fn x(v: f64) -> Observation {
        Observation::Scalar(v)
    }

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).round() as usize;
        let h = (hi - lo) / n as f64;
        let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
        h * (inner + 0.5 * (f(lo) + f(hi)))
    }

    #[test]
    fn weighted_one_is_log_loss() {
        let m = ModelSpec::truncated_gaussian(3.0);
        let th = Theta::gaussian(0.3, 1.2);
        for v in [-1.0, 0.0, 2.5] {
            let a = loss_eval(&LossSpec::LogLoss, &m, &th, &x(v)).unwrap();
            let b = loss_eval(&LossSpec::Weighted { w: 1.0 }, &m, &th, &x(v)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn weighted_zero_annihilates() {
        let m = ModelSpec::truncated_gaussian(3.0);
        let th = Theta::gaussian(0.0, 1.0);
        assert_eq!(loss_eval(&LossSpec::Weighted { w: 0.0 }, &m, &th, &x(10.0)).unwrap(), 0.0);
        assert_eq!(loss_eval(&LossSpec::Weighted { w: 0.0 }, &m, &th, &x(0.5)).unwrap(), 0.0);
    }

    #[test]
    fn beta_integral_term_matches_quadrature() {
        let integral = trapezoid(|y| (-y * y).exp() / (2.0 * std::f64::consts::PI), -12.0, 12.0, 1e-4);
        assert!((0.5 * integral - 0.141047).abs() < 1e-6);
        let (c, _) = gaussian_family_integral_term(&ModelSpec::gaussian(), 1.0, 1.0);
        assert!((c - 0.5 * integral).abs() < 1e-10);
    }

    #[test]
    fn beta_loss_outlier_is_integral_term_only() {
        let m = ModelSpec::truncated_gaussian(3.0);
        let th = Theta::gaussian(0.0, 1.0);
        let loss = LossSpec::BetaD { beta: 0.5, w_beta: 1.25 };
        let v = loss_eval(&loss, &m, &th, &x(50.0)).unwrap();
        let (c, _) = gaussian_family_integral_term(&m, 1.0, 0.5);
        assert!(v.is_finite());
        assert!((v - 1.25 * c).abs() < 1e-15);
    }

    #[test]
    fn normal_laplace_power_integral_matches_trapezoid() {
        for &(sigma, lambda, beta) in &[(1.0, 1.0, 0.5), (0.3, 2.0, 0.2), (2.0, 0.4, 0.9)] {
            let (c, dc) = normal_laplace_power_integral(sigma, lambda, beta);
            let direct = trapezoid(|u| ((beta + 1.0) * nl_ln_pdf(0.0, sigma, lambda, u)).exp(), -120.0, 120.0, 2e-4)
                / (beta + 1.0);
            assert!((c - direct).abs() < 1e-8 * direct, "{c} vs {direct}");
            let h = 1e-5;
            let fd = (normal_laplace_power_integral(sigma + h, lambda, beta).0
                - normal_laplace_power_integral(sigma - h, lambda, beta).0)
                / (2.0 * h);
            assert!((dc - fd).abs() < 1e-6 * fd.abs().max(1e-3), "{dc} vs {fd}");
        }
    }

    #[test]
    fn beta_validation() {
        assert!(LossSpec::BetaD { beta: 1e-5, w_beta: 1.0 }.validate().is_err());
        assert!(LossSpec::BetaD { beta: 0.0, w_beta: 1.0 }.validate().is_err());
        assert!(LossSpec::BetaD { beta: 0.5, w_beta: 0.0 }.validate().is_err());
        assert!(LossSpec::Weighted { w: -0.1 }.validate().is_err());
    }

    #[test]
    fn incompatible_pairs_rejected() {
        let m = ModelSpec::LogisticRegression { dim: 2 };
        let th = Theta::logistic(0.0, vec![0.0, 0.0]);
        assert!(loss_eval(&LossSpec::LogLoss, &m, &th, &x(1.0)).is_err());
        let g = ModelSpec::gaussian();
        assert!(loss_eval(&LossSpec::LogLoss, &g, &th, &x(1.0)).is_err());
    }

    #[test]
    fn log_loss_gradient_in_mu() {
        let g = loss_gradient(&LossSpec::LogLoss, &ModelSpec::gaussian(), &Theta::gaussian(0.0, 1.0), &x(1.0)).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_gradient_is_scaled() {
        let m = ModelSpec::NormalLaplace { lambda: 0.7 };
        let th = Theta::gaussian(0.2, 0.9);
        let a = loss_gradient(&LossSpec::LogLoss, &m, &th, &x(1.4)).unwrap();
        let b = loss_gradient(&LossSpec::Weighted { w: 0.5 }, &m, &th, &x(1.4)).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((0.5 * u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn log_loss_gradient_outside_support_is_boundary() {
        let r =
            loss_gradient(&LossSpec::LogLoss, &ModelSpec::truncated_gaussian(3.0), &Theta::gaussian(0.0, 1.0), &x(4.0));
        assert!(matches!(r, Err(Error::Boundary(_))));
    }

    /// Central differences over every shipped (loss, model) pair.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let losses = [
            LossSpec::LogLoss,
            LossSpec::Weighted { w: 0.5 },
            LossSpec::BetaD { beta: 0.5, w_beta: 1.25 },
            LossSpec::BetaD { beta: 0.1, w_beta: 1.0 },
        ];
        let models = [
            ModelSpec::truncated_gaussian(3.0),
            ModelSpec::gaussian(),
            ModelSpec::NormalLaplace { lambda: 1.0 },
            ModelSpec::LogisticRegression { dim: 3 },
        ];
        let h = 1e-5;
        for loss in &losses {
            for model in &models {
                for _ in 0..100 {
                    let (theta, z) = match model {
                        ModelSpec::LogisticRegression { dim } => (
                            Theta::logistic(
                                rng.gen_range(-2.0..2.0),
                                (0..*dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                            ),
                            Observation::Labeled {
                                features: (0..*dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                                label: rng.gen(),
                            },
                        ),
                        _ => {
                            let mu = rng.gen_range(-2.0..2.0);
                            let sigma = rng.gen_range(0.3..3.0);
                            // Interior of the truncated support, away from the edge.
                            let z = mu + sigma * rng.gen_range(-2.8..2.8);
                            (Theta::gaussian(mu, sigma), x(z))
                        }
                    };
                    let grad = loss_gradient(loss, model, &theta, &z).unwrap();
                    let base = theta.to_vec();
                    for i in 0..base.len() {
                        let mut up = base.clone();
                        let mut dn = base.clone();
                        up[i] += h;
                        dn[i] -= h;
                        let fu = loss_eval(loss, model, &Theta::from_vec(model, &up), &z).unwrap();
                        let fd = loss_eval(loss, model, &Theta::from_vec(model, &dn), &z).unwrap();
                        let numeric = (fu - fd) / (2.0 * h);
                        let err = (grad[i] - numeric).abs();
                        assert!(
                            err <= 1e-5 * numeric.abs().max(1.0),
                            "{loss:?} {model:?} {theta:?} {z:?} d{i}: analytic {} numeric {numeric}",
                            grad[i]
                        );
                    }
                }
            }
        }
    }

    /// As beta -> 0 the grid minimizer of the mean beta loss approaches the
    /// minimizer of the mean log loss.
    #[test]
    fn beta_loss_minimizer_converges_to_log_loss() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Observation> = (0..200).map(|_| x(StandardNormal.sample(&mut rng))).collect();
        let model = ModelSpec::truncated_gaussian(3.0);
        let mus: Vec<f64> = (0..=80).map(|i| -0.4 + 0.01 * i as f64).collect();
        let sigmas: Vec<f64> = (0..=100).map(|i| 0.7 + 0.01 * i as f64).collect();
        let argmin = |loss: LossSpec| -> (usize, usize) {
            let mut best = (f64::INFINITY, 0, 0);
            for (i, mu) in mus.iter().enumerate() {
                for (j, s) in sigmas.iter().enumerate() {
                    let v = loss_sum(&loss, &model, &Theta::gaussian(*mu, *s), &data).unwrap();
                    if v < best.0 {
                        best = (v, i, j);
                    }
                }
            }
            (best.1, best.2)
        };
        let reference = argmin(LossSpec::LogLoss);
        let mut prev = usize::MAX;
        for beta in [0.1, 0.05, 0.01] {
            let (i, j) = argmin(LossSpec::BetaD { beta, w_beta: 1.0 });
            let dist = i.abs_diff(reference.0).max(j.abs_diff(reference.1));
            assert!(dist <= prev, "beta {beta}: distance {dist} grew from {prev}");
            prev = dist;
        }
        assert!(prev <= 1, "grid distance at beta = 0.01 is {prev}");
    }

    /// Unlike the log loss, the beta loss is bounded below as z moves away.
    #[test]
    fn beta_loss_bounded_below_in_z() {
        let model = ModelSpec::gaussian();
        let th = Theta::gaussian(0.0, 1.0);
        let beta = 0.5;
        let loss = LossSpec::BetaD { beta, w_beta: 1.25 };
        let (c, _) = gaussian_family_integral_term(&model, 1.0, beta);
        let sup_f = (-LN_SQRT_2PI).exp();
        let bound = -1.25 * (sup_f.powf(beta) / beta - c);
        for i in 0..2001 {
            let z = -100.0 + 0.1 * i as f64;
            let v = loss_eval(&loss, &model, &th, &x(z)).unwrap();
            assert!(v >= bound - 1e-12);
            assert!(v <= 1.25 * c + 1e-12);
        }
        let log_far = loss_eval(&LossSpec::LogLoss, &model, &th, &x(100.0)).unwrap();
        assert!(log_far > 1000.0);
    }
}
