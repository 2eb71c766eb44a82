//! Truncated Laplace mechanism for scalar data.

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation, Provenance, Task};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Clamp to `[lower, upper]`, then add `Laplace(0, lambda)` noise.
///
/// Releases are `(epsilon, 0)`-DP with `epsilon = (upper - lower) / lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceMechanism {
    pub lower: f64,
    pub upper: f64,
    pub lambda: f64,
}

impl LaplaceMechanism {
    pub fn new(lower: f64, upper: f64, lambda: f64) -> Result<Self> {
        let mech = LaplaceMechanism { lower, upper, lambda };
        mech.validate()?;
        Ok(mech)
    }

    /// Bounds `[-3, 3]`, i.e. ±3 standard deviations of a standard normal.
    pub fn standard(lambda: f64) -> Result<Self> {
        Self::new(-3.0, 3.0, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.upper > self.lower) {
            return Err(Error::invalid(format!(
                "mechanism bounds must satisfy lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        if !(self.lambda > 0.0) || self.lambda.is_nan() {
            return Err(Error::invalid(format!("Laplace scale must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn sensitivity(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_of(self)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    /// One noisy release of `x`.
    pub fn release<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        self.clamp(x) + sample_laplace(self.lambda, rng)
    }

    /// `ln p(z | x)` for a single released value.
    pub fn output_log_density(&self, x: f64, z: f64) -> f64 {
        -(z - self.clamp(x)).abs() / self.lambda - (2.0 * self.lambda).ln()
    }
}

pub fn epsilon_of(mech: &LaplaceMechanism) -> f64 {
    mech.sensitivity() / mech.lambda
}

/// Inverse-CDF Laplace draw from one open-interval uniform.
pub fn sample_laplace<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    if u < 0.5 {
        lambda * (2.0 * u).ln()
    } else {
        -lambda * (2.0 * (1.0 - u)).ln()
    }
}

/// Privatise every observation of `real`, in order. The output has the same
/// length as the input.
pub fn privatise(mech: &LaplaceMechanism, real: &Dataset, seed: u64) -> Result<Dataset> {
    privatise_first(mech, real, real.len(), seed)
}

/// Privatise the first `m` observations. Each real record can be released at
/// most once, so `m` may not exceed the dataset size.
pub fn privatise_first(mech: &LaplaceMechanism, real: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    mech.validate()?;
    if real.task() != Task::Gaussian {
        return Err(Error::incompatible("the Laplace mechanism only privatises scalar data"));
    }
    if m > real.len() {
        return Err(Error::invalid(format!(
            "requested {m} synthetic points but only {} real records are available",
            real.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(m);
    for obs in &real.observations()[..m] {
        let x = match obs {
            Observation::Scalar(x) if x.is_finite() => *x,
            other => return Err(Error::invalid(format!("cannot privatise {other:?}"))),
        };
        out.push(mech.release(x, &mut rng));
    }
    Ok(Dataset::gaussian(out, Provenance::Synthetic))
}

/// Result of [`dp_ratio_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpRatioReport {
    /// Largest `|ln p(z | x) - ln p(z | x')|` over the tested outputs.
    pub max_abs_log_ratio: f64,
    /// `epsilon` of the mechanism.
    pub bound: f64,
    /// Index where the two datasets differ, if any.
    pub differing_index: Option<usize>,
}

impl DpRatioReport {
    pub fn holds(&self) -> bool {
        self.max_abs_log_ratio <= self.bound * (1.0 + 1e-12)
    }
}

/// Evaluate the exact output log-density ratio between two adjacent datasets.
///
/// The full-vector ratio factorises: every coordinate except the differing
/// one cancels, so only `z_grid` values at that coordinate matter. Identical
/// datasets are accepted and give a zero ratio.
pub fn dp_ratio_check(mech: &LaplaceMechanism, x: &[f64], x_prime: &[f64], z_grid: &[f64]) -> Result<DpRatioReport> {
    mech.validate()?;
    if x.len() != x_prime.len() {
        return Err(Error::invalid("adjacent datasets must have the same size"));
    }
    let diff: Vec<usize> = (0..x.len()).filter(|&i| x[i] != x_prime[i]).collect();
    if diff.len() > 1 {
        return Err(Error::invalid(format!("datasets differ in {} entries, expected one", diff.len())));
    }
    let max = match diff.first() {
        None => 0.0,
        Some(&i) => z_grid
            .iter()
            .map(|&z| (mech.output_log_density(x[i], z) - mech.output_log_density(x_prime[i], z)).abs())
            .fold(0.0, f64::max),
    };
    Ok(DpRatioReport { max_abs_log_ratio: max, bound: mech.epsilon(), differing_index: diff.first().copied() })
}
