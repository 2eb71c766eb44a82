use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrajectoryResult;
use crate::error::{Error, Result};
use crate::evaluation::CriterionKind;
use crate::seed::SeedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSpec {
    /// Curves resampled per replicate; `None` means all repeats.
    pub n_curves: Option<usize>,
    pub replicates: usize,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec { n_curves: Some(100), replicates: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NEffResult {
    pub n_l: usize,
    pub criterion: CriterionKind,
    /// Plug-in estimate from the repeat-averaged curves.
    pub point_estimate: usize,
    pub mean: f64,
    pub variance: f64,
    pub replicates: Vec<usize>,
    /// Share of replicates whose match hit the end of the baseline.
    pub censored_fraction: f64,
}

/// Number of extra real observations whose benefit the best synthetic
/// trajectory point matches.
///
/// Each bootstrap replicate resamples repeat indices once and uses them for
/// both the trajectory and the baseline (a paired bootstrap). A single
/// replicate drawing all curves is the plug-in estimate.
pub fn n_effective(
    traj: &TrajectoryResult,
    n_l: usize,
    criterion: CriterionKind,
    boot: BootstrapSpec,
    seed: u64,
) -> Result<NEffResult> {
    if boot.replicates == 0 {
        return Err(Error::invalid("at least one bootstrap replicate is required"));
    }
    let repeats = traj.grid.repeats;
    let m_grid = traj.grid.m_with_zero();
    let baseline: Vec<usize> = traj.baseline_curve(criterion).into_iter().map(|p| p.x).filter(|&n| n >= n_l).collect();
    if baseline.first() != Some(&n_l) {
        return Err(Error::InsufficientData(format!("the baseline does not start at n_L = {n_l}")));
    }
    // value tables indexed [repeat][grid point], NaN where missing
    let table = |pairs: &mut dyn Iterator<Item = (usize, usize)>| -> Vec<Vec<f64>> {
        let mut t = vec![Vec::new(); repeats];
        for (n, m) in pairs {
            for (r, row) in t.iter_mut().enumerate() {
                row.push(traj.value(n, m, r, criterion).map_or(f64::NAN, |v| criterion.as_loss(v)));
            }
        }
        t
    };
    let branch = table(&mut m_grid.iter().map(|&m| (n_l, m)));
    let base = table(&mut baseline.iter().map(|&n| (n, 0)));
    if branch.iter().all(|r| r.iter().all(|v| v.is_nan())) {
        return Err(Error::InsufficientData(format!("no trajectory values at n_L = {n_l}")));
    }

    let all: Vec<usize> = (0..repeats).collect();
    let (point_estimate, _) = match_once(&branch, &base, &all, &baseline, n_l);

    let n_curves = boot.n_curves.unwrap_or(repeats).max(1);
    let mut rng = SeedSpec::new(seed).rng("neff", n_l as u64, 0);
    let mut replicates = Vec::with_capacity(boot.replicates);
    let mut censored = 0usize;
    for _ in 0..boot.replicates {
        let idx: Vec<usize> = if boot.replicates == 1 && n_curves >= repeats {
            all.clone()
        } else {
            (0..n_curves).map(|_| rng.gen_range(0..repeats)).collect()
        };
        let (t, cens) = match_once(&branch, &base, &idx, &baseline, n_l);
        censored += usize::from(cens);
        replicates.push(t);
    }
    let k = replicates.len() as f64;
    let mean = replicates.iter().sum::<usize>() as f64 / k;
    let variance = if replicates.len() > 1 {
        replicates.iter().map(|&t| (t as f64 - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok(NEffResult {
        n_l,
        criterion,
        point_estimate,
        mean,
        variance,
        replicates,
        censored_fraction: censored as f64 / k,
    })
}

fn column_means(table: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let width = table.first().map_or(0, Vec::len);
    (0..width)
        .map(|j| {
            let vals: Vec<f64> = idx.iter().map(|&r| table[r][j]).filter(|v| !v.is_nan()).collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect()
}

/// `(t, censored)`: the smallest `t` minimising `|baseline(n_L + t) - best|`.
fn match_once(branch: &[Vec<f64>], base: &[Vec<f64>], idx: &[usize], baseline: &[usize], n_l: usize) -> (usize, bool) {
    let best = column_means(branch, idx).into_iter().filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min);
    let curve = column_means(base, idx);
    let mut arg = 0;
    let mut gap = f64::INFINITY;
    for (j, v) in curve.iter().enumerate() {
        let d = (v - best).abs();
        if d < gap {
            gap = d;
            arg = j;
        }
    }
    let last = curve.len() - 1;
    let censored = arg == last && last > 0 && curve[last] > best;
    (baseline[arg] - n_l, censored)
}
