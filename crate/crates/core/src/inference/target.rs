//! The general-Bayes log target and its unconstrained reparameterisation.

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::models::loss::{loss_sum_gradient_unchecked, loss_sum_unchecked};
use crate::models::{prior_log_density, prior_log_density_gradient, LossSpec, ModelSpec, PriorSpec, Theta};
use crate::special::LN_SQRT_2PI;

/// Centred sufficient statistics of scalar data, used to evaluate the
/// (weighted) log loss of a truncated Gaussian in O(1).
#[derive(Debug, Clone, Copy)]
struct ScalarStats {
    n: f64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl ScalarStats {
    fn of(data: &[Observation]) -> Option<Self> {
        let mut s = ScalarStats { n: 0.0, mean: 0.0, m2: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY };
        for o in data {
            let x = o.as_scalar()?;
            s.n += 1.0;
            let d = x - s.mean;
            s.mean += d / s.n;
            s.m2 += d * (x - s.mean);
            s.min = s.min.min(x);
            s.max = s.max.max(x);
        }
        Some(s)
    }
}

#[derive(Debug, Clone)]
struct Part<'a> {
    loss: LossSpec,
    data: &'a [Observation],
    fast: Option<ScalarStats>,
}

impl<'a> Part<'a> {
    fn new(model: &ModelSpec, loss: LossSpec, data: &'a [Observation]) -> Self {
        let fast = match (model, loss) {
            (ModelSpec::TruncatedGaussian { .. }, LossSpec::LogLoss | LossSpec::Weighted { .. })
                if !data.is_empty() =>
            {
                ScalarStats::of(data)
            }
            _ => None,
        };
        Part { loss, data, fast }
    }

    fn weight(&self) -> f64 {
        match self.loss {
            LossSpec::Weighted { w } => w,
            _ => 1.0,
        }
    }

    fn loss(&self, model: &ModelSpec, theta: &Theta) -> f64 {
        if self.data.is_empty() || self.weight() == 0.0 {
            return 0.0;
        }
        match (self.fast, model, theta) {
            (Some(s), &ModelSpec::TruncatedGaussian { halfwidth }, &Theta::Gaussian { mu, sigma }) => {
                if s.min < mu - halfwidth * sigma || s.max > mu + halfwidth * sigma {
                    return f64::INFINITY;
                }
                let ss = s.m2 + s.n * (s.mean - mu).powi(2);
                let nll = 0.5 * ss / (sigma * sigma)
                    + s.n * (sigma.ln() + LN_SQRT_2PI + ModelSpec::ln_truncation_mass(halfwidth));
                self.weight() * nll
            }
            _ => loss_sum_unchecked(&self.loss, model, theta, self.data),
        }
    }
}

/// `ln prior(theta) - sum l_real - sum l_synth`, prevalidated so it can be
/// evaluated in a tight loop.
#[derive(Debug, Clone)]
pub(crate) struct Target<'a> {
    pub model: ModelSpec,
    pub prior: PriorSpec,
    real: Part<'a>,
    synth: Part<'a>,
}

impl<'a> Target<'a> {
    pub fn new(
        model: &ModelSpec,
        prior: &PriorSpec,
        loss_real: &LossSpec,
        data_real: &'a Dataset,
        loss_synth: &LossSpec,
        data_synth: &'a Dataset,
    ) -> Result<Self> {
        model.validate()?;
        prior.validate()?;
        prior.check_model(model)?;
        loss_real.validate()?;
        loss_synth.validate()?;
        for (name, d) in [("real", data_real), ("synthetic", data_synth)] {
            if !d.is_empty() && d.task() != model.task() {
                return Err(Error::incompatible(format!(
                    "{name} data is a {:?} dataset but the model is {:?}",
                    d.task(),
                    model.task()
                )));
            }
            d.iter().try_for_each(|x| model.check_observation(x))?;
            if d.iter().any(|x| !observation_is_finite(x)) {
                return Err(Error::invalid(format!("{name} data contains non-finite values")));
            }
        }
        Ok(Target {
            model: *model,
            prior: *prior,
            real: Part::new(model, *loss_real, data_real.observations()),
            synth: Part::new(model, *loss_synth, data_synth.observations()),
        })
    }

    /// Observations that carry positive weight in the posterior.
    pub fn data_in_use(&self) -> impl Iterator<Item = &Observation> {
        [&self.real, &self.synth].into_iter().filter(|p| p.weight() > 0.0).flat_map(|p| p.data.iter())
    }

    /// Total number of data points that carry non-zero weight.
    pub fn effective_n(&self) -> f64 {
        let w = |p: &Part| match p.loss {
            LossSpec::Weighted { w } => w,
            _ => 1.0,
        };
        w(&self.real) * self.real.data.len() as f64 + w(&self.synth) * self.synth.data.len() as f64
    }

    pub fn log_posterior(&self, theta: &Theta) -> f64 {
        if let Theta::Gaussian { sigma, .. } = theta {
            if !(*sigma > 0.0 && sigma.is_finite()) {
                return f64::NEG_INFINITY;
            }
        }
        let lp = match prior_log_density(&self.prior, theta) {
            Ok(v) => v,
            Err(_) => return f64::NEG_INFINITY,
        };
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        let v = lp - self.real.loss(&self.model, theta) - self.synth.loss(&self.model, theta);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Value and gradient in natural coordinates, `None` where the target is
    /// zero or not differentiable.
    pub fn log_posterior_gradient(&self, theta: &Theta) -> Option<(f64, Vec<f64>)> {
        let value = self.log_posterior(theta);
        if !value.is_finite() {
            return None;
        }
        let mut g = prior_log_density_gradient(&self.prior, theta).ok()?;
        for part in [&self.real, &self.synth] {
            let ls = loss_sum_gradient_unchecked(&part.loss, &self.model, theta, part.data).ok()?;
            for (gi, li) in g.iter_mut().zip(&ls.gradient) {
                *gi -= li;
            }
        }
        g.iter().all(|v| v.is_finite()).then_some((value, g))
    }

    /// Map unconstrained coordinates (`ln sigma` in place of `sigma`) to theta.
    pub fn theta_of(&self, phi: &[f64]) -> Theta {
        match self.model {
            ModelSpec::LogisticRegression { .. } => Theta::from_vec(&self.model, phi),
            _ => Theta::gaussian(phi[0], phi[1].exp()),
        }
    }

    pub fn phi_of(&self, theta: &Theta) -> Vec<f64> {
        match theta {
            Theta::Gaussian { mu, sigma } => vec![*mu, sigma.ln()],
            t => t.to_vec(),
        }
    }

    /// Log target density in unconstrained coordinates, including the
    /// Jacobian of the `ln sigma` transform.
    pub fn log_density_phi(&self, phi: &[f64]) -> f64 {
        let lp = self.log_posterior(&self.theta_of(phi));
        match self.model {
            ModelSpec::LogisticRegression { .. } => lp,
            _ => lp + phi[1],
        }
    }

    pub fn log_density_phi_gradient(&self, phi: &[f64]) -> Option<(f64, Vec<f64>)> {
        let theta = self.theta_of(phi);
        let (v, mut g) = self.log_posterior_gradient(&theta)?;
        match self.model {
            ModelSpec::LogisticRegression { .. } => Some((v, g)),
            _ => {
                let sigma = phi[1].exp();
                g[1] = g[1] * sigma + 1.0;
                Some((v + phi[1], g))
            }
        }
    }
}

fn observation_is_finite(x: &Observation) -> bool {
    match x {
        Observation::Scalar(v) => v.is_finite(),
        Observation::Labeled { features, .. } => features.iter().all(|f| f.is_finite()),
    }
}

/// `ln prior(theta) - sum_i l_real(x_i) - sum_j l_synth(z_j)`.
///
/// Either dataset may be empty. Returns `-inf` where the target vanishes
/// (e.g. data outside a truncated support under the log loss).
pub fn log_unnormalised_posterior(
    model: &ModelSpec,
    prior: &PriorSpec,
    loss_real: &LossSpec,
    data_real: &Dataset,
    loss_synth: &LossSpec,
    data_synth: &Dataset,
    theta: &Theta,
) -> Result<f64> {
    model.check_theta(theta)?;
    let target = Target::new(model, prior, loss_real, data_real, loss_synth, data_synth)?;
    Ok(target.log_posterior(theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Provenance, Task};
    use crate::models::loss_sum;
    use rand::{Rng, SeedableRng};

    fn nig() -> PriorSpec {
        PriorSpec::nig(2.0, 1.0, 0.0, 0.5)
    }

    #[test]
    fn empty_data_gives_prior() {
        let e = Dataset::empty(Task::Gaussian, Provenance::Real);
        let th = Theta::gaussian(0.3, 1.2);
        let m = ModelSpec::truncated_gaussian(3.0);
        let v =
            log_unnormalised_posterior(&m, &nig(), &LossSpec::LogLoss, &e, &LossSpec::beta_d(0.5), &e, &th).unwrap();
        assert_eq!(v, prior_log_density(&nig(), &th).unwrap());
    }

    #[test]
    fn zero_weight_ignores_synthetic_data() {
        let m = ModelSpec::NormalLaplace { lambda: 1.0 };
        let x = Dataset::gaussian([0.1, -0.4], Provenance::Real);
        let z1 = Dataset::gaussian([5.0, 9.0, -2.0], Provenance::Synthetic);
        let z2 = Dataset::gaussian([0.0], Provenance::Synthetic);
        let th = Theta::gaussian(0.0, 1.0);
        let w0 = LossSpec::Weighted { w: 0.0 };
        let a = log_unnormalised_posterior(&m, &nig(), &LossSpec::LogLoss, &x, &w0, &z1, &th).unwrap();
        let b = log_unnormalised_posterior(&m, &nig(), &LossSpec::LogLoss, &x, &w0, &z2, &th).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fast_path_matches_generic_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0) + 10.0).collect();
        let data = Dataset::gaussian(xs, Provenance::Real);
        let e = Dataset::empty(Task::Gaussian, Provenance::Synthetic);
        let m = ModelSpec::truncated_gaussian(3.0);
        for loss in [LossSpec::LogLoss, LossSpec::Weighted { w: 0.3 }] {
            let t = Target::new(&m, &nig(), &loss, &data, &LossSpec::LogLoss, &e).unwrap();
            for &(mu, s) in &[(10.0, 1.0), (9.5, 0.9), (10.2, 3.0), (12.0, 0.5)] {
                let th = Theta::gaussian(mu, s);
                let generic =
                    prior_log_density(&nig(), &th).unwrap() - loss_sum(&loss, &m, &th, data.observations()).unwrap();
                let fast = t.log_posterior(&th);
                if generic.is_finite() {
                    assert!((generic - fast).abs() < 1e-9 * generic.abs().max(1.0), "{generic} {fast}");
                } else {
                    assert_eq!(fast, f64::NEG_INFINITY);
                }
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let m = ModelSpec::NormalLaplace { lambda: 0.7 };
        let x = Dataset::gaussian([0.1, -0.4, 2.0, 1.3], Provenance::Real);
        let xr = x.select([3, 1, 0, 2]);
        let e = Dataset::empty(Task::Gaussian, Provenance::Synthetic);
        let th = Theta::gaussian(0.2, 0.8);
        let l = LossSpec::beta_d(0.3);
        let a = log_unnormalised_posterior(&m, &nig(), &l, &x, &l, &e, &th).unwrap();
        let b = log_unnormalised_posterior(&m, &nig(), &l, &xr, &l, &e, &th).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_task_mismatch() {
        let m = ModelSpec::LogisticRegression { dim: 1 };
        let x = Dataset::gaussian([0.1], Provenance::Real);
        let e = Dataset::empty(Task::Logistic, Provenance::Synthetic);
        let r = log_unnormalised_posterior(
            &m,
            &PriorSpec::IndependentNormal { sd: 50.0 },
            &LossSpec::LogLoss,
            &x,
            &LossSpec::LogLoss,
            &e,
            &Theta::logistic(0.0, vec![0.0]),
        );
        assert!(matches!(r, Err(Error::Incompatible(_))));
    }

    #[test]
    fn phi_gradient_matches_finite_differences() {
        let m = ModelSpec::NormalLaplace { lambda: 0.5 };
        let x = Dataset::gaussian([0.1, -0.4, 2.0], Provenance::Real);
        let z = Dataset::gaussian([3.0, -1.0], Provenance::Synthetic);
        let t = Target::new(&m, &nig(), &LossSpec::LogLoss, &x, &LossSpec::beta_d(0.5), &z).unwrap();
        let phi = [0.3, -0.2];
        let (_, g) = t.log_density_phi_gradient(&phi).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut p = phi;
            let mut q = phi;
            p[j] += h;
            q[j] -= h;
            let fd = (t.log_density_phi(&p) - t.log_density_phi(&q)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-5 * fd.abs().max(1.0), "{j}: {fd} vs {}", g[j]);
        }
    }
}
