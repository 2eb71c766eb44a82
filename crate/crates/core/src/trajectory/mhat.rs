use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{best_index, FitSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{CriterionKind, F0Spec};
use crate::predictive::ensemble_subsets;
use crate::privacy::{privatise, LaplaceMechanism};
use crate::seed::SeedSpec;

/// Where synthetic realisations come from.
#[derive(Debug, Clone, Copy)]
pub enum SyntheticSource<'a> {
    /// A fixed pool; realisations are subsamples of it. Only subsampling
    /// randomness is available.
    Pool(&'a Dataset),
    /// Fresh releases of subsets of the keeper's real data.
    Generator { mechanism: &'a LaplaceMechanism, keeper: &'a Dataset },
}

impl SyntheticSource<'_> {
    fn capacity(&self) -> usize {
        match self {
            SyntheticSource::Pool(d) => d.len(),
            SyntheticSource::Generator { keeper, .. } => keeper.len(),
        }
    }

    fn realise(&self, idx: &[usize], seed: u64) -> Result<Dataset> {
        match self {
            SyntheticSource::Pool(d) => Ok(d.select(idx.iter().copied())),
            SyntheticSource::Generator { mechanism, keeper } => {
                privatise(mechanism, &keeper.select(idx.iter().copied()), seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhatPoint {
    pub m: usize,
    /// Mean criterion over test points and realisations.
    pub mean: f64,
    /// Standard error across realisations (0 with a single realisation).
    pub stderr: f64,
    pub realisations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhatResult {
    pub criterion: CriterionKind,
    pub m_hat: usize,
    pub per_m: Vec<MhatPoint>,
}

impl MhatResult {
    fn from_points(criterion: CriterionKind, per_m: Vec<MhatPoint>) -> Result<Self> {
        let curve: Vec<(usize, f64)> = per_m.iter().map(|p| (p.m, p.mean)).collect();
        let m_hat = best_index(&curve, criterion)
            .ok_or_else(|| Error::Sampler("every m produced an undefined score".into()))?;
        Ok(MhatResult { criterion, m_hat, per_m })
    }
}

fn with_zero(m_grid: &[usize]) -> Vec<usize> {
    let mut m: Vec<usize> = m_grid.to_vec();
    m.push(0);
    m.sort_unstable();
    m.dedup();
    m
}

/// Criterion-optimal synthetic sample size, averaging over `b` synthetic
/// realisations per grid value. Returns one result per criterion, reusing the
/// same fits. Ties go to the smallest `m`.
///
/// Realisation `j` is fitted with the same seed at every `m`. The caller is
/// responsible for keeping `test` disjoint from the training data.
#[allow(clippy::too_many_arguments)]
pub fn estimate_mhat(
    fit: &FitSpec,
    real: &Dataset,
    source: SyntheticSource<'_>,
    m_grid: &[usize],
    b: usize,
    test: &Dataset,
    f0: Option<&F0Spec>,
    criteria: &[CriterionKind],
    seed: u64,
) -> Result<Vec<MhatResult>> {
    fit.validate()?;
    fit.check_criteria(criteria, f0)?;
    if b == 0 {
        return Err(Error::invalid("at least one realisation is required"));
    }
    if test.is_empty() {
        return Err(Error::invalid("m-hat needs a non-empty test set"));
    }
    let grid = with_zero(m_grid);
    let cap = source.capacity();
    if let Some(&m) = grid.iter().find(|&&m| m > cap) {
        return Err(Error::invalid(format!("m = {m} exceeds the {cap} available synthetic records")));
    }
    let seeds = SeedSpec::new(seed);

    let mut work = Vec::new();
    for (i, &m) in grid.iter().enumerate() {
        let reps = if m == 0 { 1 } else { b };
        let subsets = ensemble_subsets(cap, m, reps, &mut seeds.rng("subsets", i as u64, 0))?;
        work.extend(subsets.into_iter().enumerate().map(|(j, s)| (i, j, s)));
    }
    let scored: Vec<Result<(usize, Vec<f64>)>> = work
        .par_iter()
        .map(|(i, j, idx)| {
            let z = source.realise(idx, seeds.derive("privatise", *i as u64, *j as u64))?;
            let pred = fit.fit(real, &z, seeds.derive("fit", *j as u64, 0))?;
            let vals = criteria
                .iter()
                .map(|&c| fit.score(&pred, c, test, f0, seeds.derive("w1", *j as u64, 0)).map(|s| s.0))
                .collect::<Result<Vec<f64>>>()?;
            Ok((*i, vals))
        })
        .collect();
    let scored = scored.into_iter().collect::<Result<Vec<_>>>()?;

    criteria
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let points = grid
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let vals: Vec<f64> = scored.iter().filter(|(ii, _)| *ii == i).map(|(_, v)| v[k]).collect();
                    point(m, &vals)
                })
                .collect();
            MhatResult::from_points(c, points)
        })
        .collect()
}

fn point(m: usize, vals: &[f64]) -> MhatPoint {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let stderr = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    MhatPoint { m, mean, stderr, realisations: vals.len() }
}

/// m-hat from one ordered synthetic stream: the fitted prefixes `z_{1:m}`
/// for `m` in `m_grid` (default `0..=len`). The answer depends on the order
/// of the stream; averaging over realisations ([`estimate_mhat`]) removes
/// that dependence.
#[allow(clippy::too_many_arguments)]
pub fn mhat_single_stream(
    fit: &FitSpec,
    real: &Dataset,
    stream: &Dataset,
    m_grid: Option<&[usize]>,
    test: &Dataset,
    f0: Option<&F0Spec>,
    criterion: CriterionKind,
    seed: u64,
) -> Result<MhatResult> {
    fit.validate()?;
    fit.check_criteria(&[criterion], f0)?;
    let grid: Vec<usize> = match m_grid {
        Some(g) => with_zero(g).into_iter().filter(|&m| m <= stream.len()).collect(),
        None => (0..=stream.len()).collect(),
    };
    let seeds = SeedSpec::new(seed);
    let points = grid
        .par_iter()
        .map(|&m| {
            let pred = fit.fit(real, &stream.prefix(m), seeds.derive("fit", 0, 0))?;
            let v = fit.score(&pred, criterion, test, f0, seeds.derive("w1", 0, 0))?.0;
            Ok(point(m, &[v]))
        })
        .collect::<Result<Vec<_>>>()?;
    MhatResult::from_points(criterion, points)
}
