use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{best_index, FitSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{pointwise_log_scores, CriterionKind};
use crate::seed::SeedSpec;
use crate::special::{median, std_normal_cdf};

/// Minimum test points per split half.
pub const MIN_HALF: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueResult {
    pub split_p: Vec<f64>,
    /// m-hat chosen on the first half of each split.
    pub split_mhat: Vec<usize>,
    pub aggregate: f64,
    pub alpha: f64,
    pub use_synthetic: bool,
    /// m-hat re-estimated on the whole test set when synthetic data is used.
    pub final_mhat: Option<usize>,
    pub flags: Vec<String>,
}

/// `min(1, median(2 p_1, ..., 2 p_K))`.
pub fn aggregate_pvalues(ps: &[f64]) -> Result<f64> {
    if ps.is_empty() || ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid("p-values must be a non-empty list in [0, 1]"));
    }
    let doubled: Vec<f64> = ps.iter().map(|p| 2.0 * p).collect();
    Ok(median(&doubled).min(1.0))
}

/// One-sided normal-approximation p-value for `H0: E[d] >= 0`, where
/// negative `d` favours the synthetic fit. Returns an optional flag for the
/// degenerate zero-variance case.
pub fn one_sided_pvalue(d: &[f64]) -> (f64, Option<String>) {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    if mean.is_nan() {
        return (1.0, Some("undefined score difference".into()));
    }
    if mean.is_infinite() {
        return if mean > 0.0 { (1.0, None) } else { (f64::MIN_POSITIVE, Some("infinite improvement".into())) };
    }
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if var == 0.0 {
        return if mean >= 0.0 {
            (1.0, Some("zero variance".into()))
        } else {
            (f64::MIN_POSITIVE, Some("zero variance".into()))
        };
    }
    (std_normal_cdf(mean / (var / n).sqrt()), None)
}

fn diff(a: f64, b: f64) -> f64 {
    // equal infinities carry no information either way
    if a == b {
        0.0
    } else {
        a - b
    }
}

/// Split-sample test of whether synthetic data improves the log score.
///
/// `scores[i]` holds per-test-point negative log predictives of the fit at
/// `m = grid[i]`; `m = 0` must be present. Each of `k` random splits picks
/// m-hat on one half and tests `s(m_hat) - s(0)` on the other.
pub fn synthetic_use_pvalue(
    grid: &[usize],
    scores: &[Vec<f64>],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<PValueResult> {
    if k == 0 {
        return Err(Error::invalid("at least one split is required"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if grid.len() != scores.len() || grid.is_empty() {
        return Err(Error::invalid("one score vector per grid value is required"));
    }
    let zero = grid.iter().position(|&m| m == 0).ok_or_else(|| Error::invalid("m = 0 must be in the grid"))?;
    let n = scores[0].len();
    if scores.iter().any(|s| s.len() != n) {
        return Err(Error::invalid("score vectors have different lengths"));
    }
    if n / 2 < MIN_HALF {
        return Err(Error::InsufficientData(format!("{n} test points; need at least {} per half", MIN_HALF)));
    }
    let mhat_on = |idx: &[usize]| -> usize {
        let curve: Vec<(usize, f64)> =
            (0..grid.len()).map(|i| (i, idx.iter().map(|&j| scores[i][j]).sum::<f64>() / idx.len() as f64)).collect();
        best_index(&curve, CriterionKind::LogScore).unwrap_or(zero)
    };

    let seeds = SeedSpec::new(seed);
    let mut split_p = Vec::with_capacity(k);
    let mut split_mhat = Vec::with_capacity(k);
    let mut flags = Vec::new();
    for s in 0..k {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seeds.rng("split", s as u64, 0));
        let (a, b) = idx.split_at(n / 2);
        let i_hat = mhat_on(a);
        let d: Vec<f64> = b.iter().map(|&j| diff(scores[i_hat][j], scores[zero][j])).collect();
        let (p, flag) = one_sided_pvalue(&d);
        if let Some(f) = flag {
            flags.push(format!("split {s}: {f}"));
        }
        split_p.push(p);
        split_mhat.push(grid[i_hat]);
    }
    let aggregate = aggregate_pvalues(&split_p)?;
    let use_synthetic = aggregate < alpha;
    let final_mhat = use_synthetic.then(|| grid[mhat_on(&(0..n).collect::<Vec<_>>())]);
    Ok(PValueResult { split_p, split_mhat, aggregate, alpha, use_synthetic, final_mhat, flags })
}

/// Fit the prefixes `stream[..m]` for every `m` in `m_grid` (plus 0), score
/// the test set pointwise and run [`synthetic_use_pvalue`].
#[allow(clippy::too_many_arguments)]
pub fn synthetic_use_test(
    fit: &FitSpec,
    real: &Dataset,
    stream: &Dataset,
    m_grid: &[usize],
    test: &Dataset,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<PValueResult> {
    fit.validate()?;
    let mut grid: Vec<usize> = m_grid.to_vec();
    grid.push(0);
    grid.sort_unstable();
    grid.dedup();
    if let Some(&m) = grid.iter().find(|&&m| m > stream.len()) {
        return Err(Error::invalid(format!("m = {m} exceeds the {} synthetic records", stream.len())));
    }
    test.iter().try_for_each(|x| fit.model.check_observation(x))?;
    let seeds = SeedSpec::new(seed);
    let scores = grid
        .par_iter()
        .map(|&m| {
            let pred = fit.fit(real, &stream.prefix(m), seeds.derive("fit", 0, 0))?;
            Ok(pointwise_log_scores(&pred, test))
        })
        .collect::<Result<Vec<_>>>()?;
    synthetic_use_pvalue(&grid, &scores, k, alpha, seeds.derive("splits", 0, 0))
}
