//! Learning trajectories: criterion values of the posterior predictive as a
//! function of the number of synthetic observations, plus the quantities
//! derived from them (m-hat, n-effective, the synthetic-use p-value).

mod mhat;
mod neff;
mod pvalue;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance, Task};
use crate::error::{Error, Result};
use crate::evaluation::{kld_to_f0, log_score, predictive_auroc, wasserstein1, CriterionKind, F0Spec, Quadrature};
use crate::inference::{sample_posterior, McmcConfig};
use crate::models::{LossSpec, ModelSpec, PriorSpec};
use crate::predictive::PredictiveModel;
use crate::privacy::{privatise, LaplaceMechanism};
use crate::seed::{rng_from_seed, SeedSpec};

pub use mhat::{estimate_mhat, mhat_single_stream, MhatPoint, MhatResult, SyntheticSource};
pub use neff::{n_effective, BootstrapSpec, NEffResult};
pub use pvalue::{aggregate_pvalues, one_sided_pvalue, synthetic_use_pvalue, synthetic_use_test, PValueResult};

/// Desk runs shrink every grid so a single workstation finishes in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::invalid(format!("unknown scale {other:?} (expected desk or paper)"))),
        }
    }
}

pub const PAPER_N_L: [usize; 16] = [2, 4, 6, 8, 10, 13, 16, 19, 22, 25, 30, 35, 40, 50, 75, 100];
pub const DESK_M: [usize; 24] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 14, 16, 18, 20, 25, 30, 35, 40, 45, 50, 55, 60];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryGrid {
    pub n_l: Vec<usize>,
    /// Synthetic sizes; `m = 0` is always evaluated whether listed or not.
    pub m: Vec<usize>,
    pub repeats: usize,
    /// Synthetic realisations per `(n_L, m)` for m-hat estimation.
    pub realisations: usize,
    /// Real-only sizes for the baseline curve. Defaults to every integer
    /// from the smallest `n_L` to `max n_L + max m`.
    pub baseline_n: Option<Vec<usize>>,
}

impl Default for TrajectoryGrid {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrajectoryGrid {
    pub fn paper() -> Self {
        let m = (0..=100).chain((120..=200).step_by(20)).collect();
        TrajectoryGrid { n_l: PAPER_N_L.to_vec(), m, repeats: 100, realisations: 10, baseline_n: None }
    }

    pub fn desk() -> Self {
        TrajectoryGrid { n_l: PAPER_N_L.to_vec(), m: DESK_M.to_vec(), repeats: 10, realisations: 5, baseline_n: None }
    }

    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self::desk(),
            Scale::Paper => Self::paper(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_l.is_empty() || self.m.is_empty() {
            return Err(Error::invalid("trajectory grids must be non-empty"));
        }
        if self.m.windows(2).any(|w| w[0] >= w[1]) || self.n_l.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid values must be strictly ascending"));
        }
        if self.repeats < 2 {
            return Err(Error::invalid("a trajectory needs at least 2 repeats"));
        }
        if self.realisations == 0 {
            return Err(Error::invalid("at least one synthetic realisation is required"));
        }
        if let Some(b) = &self.baseline_n {
            if b.is_empty() || b.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("baseline sizes must be non-empty and strictly ascending"));
            }
        }
        Ok(())
    }

    /// The m grid with 0 prepended if absent.
    pub fn m_with_zero(&self) -> Vec<usize> {
        let mut m: BTreeSet<usize> = self.m.iter().copied().collect();
        m.insert(0);
        m.into_iter().collect()
    }

    pub fn baseline(&self) -> Vec<usize> {
        match &self.baseline_n {
            Some(b) => b.clone(),
            None => {
                let lo = self.n_l.iter().copied().min().unwrap_or(0);
                let hi = self.n_l.iter().copied().max().unwrap_or(0) + self.m.iter().copied().max().unwrap_or(0);
                (lo..=hi).collect()
            }
        }
    }
}

/// Everything needed to turn `(real, synthetic)` data into criterion values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub model: ModelSpec,
    pub prior: PriorSpec,
    pub loss_real: LossSpec,
    pub loss_synth: LossSpec,
    pub mcmc: McmcConfig,
    /// Posterior draws kept in the predictive mixture.
    pub predictive_draws: usize,
    /// KLD quadrature step in units of the true standard deviation.
    pub kld_step: f64,
    /// Predictive sample size for the Wasserstein criterion.
    pub w1_samples: usize,
}

impl FitSpec {
    pub fn for_scale(model: ModelSpec, prior: PriorSpec, loss_synth: LossSpec, scale: Scale) -> Self {
        let logistic = model.task() == Task::Logistic;
        let (mcmc, draws, step) = match scale {
            Scale::Desk => {
                let base = if logistic { McmcConfig::logistic() } else { McmcConfig::gaussian() };
                (base.with_samples(2, 1000, 300), 200, 0.01)
            }
            Scale::Paper => (if logistic { McmcConfig::logistic() } else { McmcConfig::gaussian() }, 1000, 0.002),
        };
        FitSpec {
            model,
            prior,
            loss_real: LossSpec::LogLoss,
            loss_synth,
            mcmc,
            predictive_draws: draws,
            kld_step: step,
            w1_samples: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.prior.validate()?;
        self.prior.check_model(&self.model)?;
        self.loss_real.validate()?;
        self.loss_synth.validate()?;
        self.mcmc.validate()?;
        if self.predictive_draws == 0 || self.w1_samples == 0 {
            return Err(Error::invalid("predictive_draws and w1_samples must be positive"));
        }
        if !(self.kld_step > 0.0 && self.kld_step < 1.0) {
            return Err(Error::invalid(format!("kld_step must lie in (0, 1), got {}", self.kld_step)));
        }
        Ok(())
    }

    pub fn fit(&self, real: &Dataset, synth: &Dataset, seed: u64) -> Result<PredictiveModel> {
        let post = sample_posterior(
            &self.model,
            &self.prior,
            &self.loss_real,
            real,
            &self.loss_synth,
            synth,
            &self.mcmc,
            seed,
        )?;
        Ok(PredictiveModel::thinned(&post, self.predictive_draws))
    }

    /// One criterion value plus a diagnostic note (empty when clean).
    pub fn score(
        &self,
        pred: &PredictiveModel,
        criterion: CriterionKind,
        test: &Dataset,
        f0: Option<&F0Spec>,
        sample_seed: u64,
    ) -> Result<(f64, String)> {
        match criterion {
            CriterionKind::LogScore => {
                let s = log_score(pred, test)?;
                let note =
                    if s.flagged() { format!("zero_density_points={}", s.zero_density_points) } else { String::new() };
                Ok((s.value, note))
            }
            CriterionKind::Kld => {
                let f0 = f0.ok_or_else(|| Error::invalid("KLD needs a known F0"))?;
                let F0Spec::KnownGaussian { mu0, sigma0 } = *f0 else {
                    return Err(Error::invalid("KLD needs a known F0"));
                };
                let quad = Quadrature { step: self.kld_step * sigma0, ..Quadrature::default_for(mu0, sigma0) };
                let k = kld_to_f0(f0, pred, &quad)?;
                let note = if k.flagged() { format!("support_deficit={:.3e}", k.deficit_mass) } else { String::new() };
                Ok((k.value, note))
            }
            CriterionKind::Wasserstein1 => {
                let ys = test.scalars().ok_or_else(|| Error::incompatible("W1 needs scalar data"))?;
                let mut rng = rng_from_seed(sample_seed);
                let draws = pred.sample(self.w1_samples, &mut rng)?;
                Ok((wasserstein1(&draws, &ys)?, String::new()))
            }
            CriterionKind::Auroc => Ok((predictive_auroc(pred, test)?, String::new())),
        }
    }

    fn check_criteria(&self, criteria: &[CriterionKind], f0: Option<&F0Spec>) -> Result<()> {
        if criteria.is_empty() {
            return Err(Error::invalid("at least one criterion is required"));
        }
        for c in criteria {
            match c {
                CriterionKind::Kld if !matches!(f0, Some(F0Spec::KnownGaussian { .. })) => {
                    return Err(Error::invalid("KLD is only available when the true density is known"));
                }
                CriterionKind::Kld | CriterionKind::Wasserstein1 if self.model.task() != Task::Gaussian => {
                    return Err(Error::incompatible(format!("{c} needs a scalar model")));
                }
                CriterionKind::Auroc if self.model.task() != Task::Logistic => {
                    return Err(Error::incompatible("AUROC needs a logistic model"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Where real, synthetic and test data come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Real, keeper and test data are draws from `N(mu0, sigma0^2)`; the
    /// synthetic stream is the keeper data passed through the mechanism.
    GaussianSimulation { mu0: f64, sigma0: f64, mechanism: LaplaceMechanism, test_size: usize },
    /// Fixed datasets; each repeat reshuffles both and holds out
    /// `test_fraction` of the real rows as the test set.
    Datasets { real: Dataset, synthetic: Dataset, test_fraction: f64 },
}

impl DataSource {
    pub fn f0(&self) -> Option<F0Spec> {
        match *self {
            DataSource::GaussianSimulation { mu0, sigma0, .. } => Some(F0Spec::KnownGaussian { mu0, sigma0 }),
            DataSource::Datasets { .. } => None,
        }
    }

    /// Real stream, synthetic stream and test set for one repeat. Simulated
    /// sources also return the keeper's unprivatised data.
    pub fn draw(&self, seeds: &SeedSpec, repeat: u64, n_real: usize, n_synth: usize) -> Result<RepeatData> {
        match self {
            &DataSource::GaussianSimulation { mu0, sigma0, ref mechanism, test_size } => {
                let normal = Normal::new(mu0, sigma0).map_err(|e| Error::invalid(e.to_string()))?;
                let draw = |purpose: &str, n: usize| {
                    let mut rng = seeds.rng(purpose, repeat, 0);
                    normal.sample_iter(&mut rng).take(n).collect::<Vec<f64>>()
                };
                let real = Dataset::gaussian(draw("real", n_real), Provenance::Real);
                let keeper = Dataset::gaussian(draw("keeper", n_synth), Provenance::Real);
                let test = Dataset::gaussian(draw("test", test_size), Provenance::Real);
                let synth = privatise(mechanism, &keeper, seeds.derive("privatise", repeat, 0))?;
                Ok(RepeatData { real, synth, test, keeper: Some(keeper) })
            }
            DataSource::Datasets { real, synthetic, test_fraction } => {
                let mut idx: Vec<usize> = (0..real.len()).collect();
                idx.shuffle(&mut seeds.rng("split", repeat, 0));
                let n_test = ((real.len() as f64) * test_fraction).round() as usize;
                let test = real.select(idx[..n_test].iter().copied());
                let train = real.select(idx[n_test..].iter().copied());
                let mut sidx: Vec<usize> = (0..synthetic.len()).collect();
                sidx.shuffle(&mut seeds.rng("synthetic", repeat, 0));
                let synth = synthetic.select(sidx).with_provenance(Provenance::Synthetic);
                Ok(RepeatData { real: train, synth, test, keeper: None })
            }
        }
    }

    fn validate(&self, model: &ModelSpec) -> Result<()> {
        match self {
            DataSource::GaussianSimulation { sigma0, mechanism, test_size, mu0 } => {
                mechanism.validate()?;
                if model.task() != Task::Gaussian {
                    return Err(Error::incompatible("simulated data is scalar"));
                }
                if !(sigma0.is_finite() && *sigma0 > 0.0 && mu0.is_finite()) || *test_size == 0 {
                    return Err(Error::invalid("invalid simulation parameters"));
                }
            }
            DataSource::Datasets { real, synthetic, test_fraction } => {
                if real.task() != model.task() || synthetic.task() != model.task() {
                    return Err(Error::incompatible("dataset task does not match the model"));
                }
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                    return Err(Error::invalid("test_fraction must lie in (0, 1)"));
                }
                if ((real.len() as f64) * test_fraction).round() < 1.0 {
                    return Err(Error::InsufficientData("the test split would be empty".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatData {
    pub real: Dataset,
    pub synth: Dataset,
    pub test: Dataset,
    pub keeper: Option<Dataset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub fit: FitSpec,
    pub source: DataSource,
}

impl ExperimentSpec {
    /// `F0 = N(0, 1)`, Laplace mechanism with `lambda = 1` on `[-3, 3]`
    /// (epsilon = 6), truncated Gaussian model with `k = 3`, and an off-target
    /// `NIG(2, 4, 3, 1)` prior worth a single pseudo-observation.
    pub fn gaussian_default(loss_synth: LossSpec, scale: Scale) -> Self {
        ExperimentSpec {
            fit: FitSpec::for_scale(
                ModelSpec::truncated_gaussian(3.0),
                PriorSpec::nig(2.0, 4.0, 3.0, 1.0),
                loss_synth,
                scale,
            ),
            source: DataSource::GaussianSimulation {
                mu0: 0.0,
                sigma0: 1.0,
                mechanism: LaplaceMechanism { lower: -3.0, upper: 3.0, lambda: 1.0 },
                test_size: 500,
            },
        }
    }

    pub fn validate(&self, criteria: &[CriterionKind]) -> Result<()> {
        self.fit.validate()?;
        self.source.validate(&self.fit.model)?;
        self.fit.check_criteria(criteria, self.source.f0().as_ref())
    }
}

/// One `(n_L, m, repeat, criterion)` cell. Failed cells carry `NaN` and the
/// reason in `note`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub n_l: usize,
    pub m: usize,
    pub repeat: usize,
    pub criterion: CriterionKind,
    pub value: f64,
    pub seed: u64,
    /// Synthetic-data loss label.
    pub loss: String,
    pub note: String,
}

impl TrajectoryRow {
    pub fn failed(&self) -> bool {
        self.note.starts_with("failed")
    }
}

/// Mean and standard error of a curve point across repeats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: usize,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub grid: TrajectoryGrid,
    pub loss: String,
    pub rows: Vec<TrajectoryRow>,
    index: BTreeMap<(usize, usize, CriterionKind), Vec<(usize, f64)>>,
}

impl TrajectoryResult {
    pub fn from_rows(grid: TrajectoryGrid, loss: impl Into<String>, mut rows: Vec<TrajectoryRow>) -> Self {
        rows.sort_by_key(|r| (r.n_l, r.m, r.repeat, r.criterion));
        let mut index: BTreeMap<_, Vec<(usize, f64)>> = BTreeMap::new();
        for r in &rows {
            if !r.failed() {
                index.entry((r.n_l, r.m, r.criterion)).or_default().push((r.repeat, r.value));
            }
        }
        TrajectoryResult { grid, loss: loss.into(), rows, index }
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrajectoryRow> {
        self.rows.iter().filter(|r| r.failed())
    }

    pub fn criteria(&self) -> Vec<CriterionKind> {
        self.rows.iter().map(|r| r.criterion).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Successful values of one cell across repeats, keyed by repeat.
    pub fn values(&self, n_l: usize, m: usize, criterion: CriterionKind) -> &[(usize, f64)] {
        self.index.get(&(n_l, m, criterion)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn value(&self, n_l: usize, m: usize, repeat: usize, criterion: CriterionKind) -> Option<f64> {
        self.values(n_l, m, criterion).iter().find(|(r, _)| *r == repeat).map(|(_, v)| *v)
    }

    /// Repeat-averaged trajectory over `m` at fixed `n_L`.
    pub fn expected_curve(&self, n_l: usize, criterion: CriterionKind) -> Vec<CurvePoint> {
        self.grid.m_with_zero().into_iter().filter_map(|m| summarise(m, self.values(n_l, m, criterion))).collect()
    }

    /// Repeat-averaged real-only curve over `n`.
    pub fn baseline_curve(&self, criterion: CriterionKind) -> Vec<CurvePoint> {
        self.index
            .iter()
            .filter(|((_, m, c), _)| *m == 0 && *c == criterion)
            .filter_map(|((n, _, _), v)| summarise(*n, v))
            .collect()
    }

    /// `(m, value)` for one repeat, skipping failed cells.
    pub fn repeat_curve(&self, n_l: usize, criterion: CriterionKind, repeat: usize) -> Vec<(usize, f64)> {
        self.grid
            .m_with_zero()
            .into_iter()
            .filter_map(|m| self.value(n_l, m, repeat, criterion).map(|v| (m, v)))
            .collect()
    }

    /// Per-repeat argmin over `m` (ties to the smallest m).
    pub fn mhat_per_repeat(&self, n_l: usize, criterion: CriterionKind) -> Vec<usize> {
        (0..self.grid.repeats).filter_map(|r| best_index(&self.repeat_curve(n_l, criterion, r), criterion)).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_trajectories(path, std::slice::from_ref(self))
    }

    /// Long table for branching, model-comparison and n-effective plots.
    pub fn write_plotdata(&self, path: impl AsRef<Path>) -> Result<()> {
        write_plotdata(path, std::slice::from_ref(self))
    }

    fn plot_rows(&self) -> Vec<PlotRow<'_>> {
        let mut out = Vec::new();
        for c in self.criteria() {
            for &n_l in &self.grid.n_l {
                for p in self.expected_curve(n_l, c) {
                    out.push(PlotRow::new("trajectory", &self.loss, n_l, p.x, c, p));
                }
            }
            for p in self.baseline_curve(c) {
                out.push(PlotRow::new("baseline", &self.loss, p.x, 0, c, p));
            }
        }
        out
    }
}

#[derive(Serialize)]
struct PlotRow<'a> {
    curve: &'a str,
    loss: &'a str,
    n_l: usize,
    m: usize,
    total_n: usize,
    criterion: CriterionKind,
    mean: f64,
    stderr: f64,
    count: usize,
}

impl<'a> PlotRow<'a> {
    fn new(curve: &'a str, loss: &'a str, n_l: usize, m: usize, criterion: CriterionKind, p: CurvePoint) -> Self {
        PlotRow { curve, loss, n_l, m, total_n: n_l + m, criterion, mean: p.mean, stderr: p.stderr, count: p.count }
    }
}

/// Long-format CSV of one or more trajectories (one `loss` label each).
pub fn write_trajectories(path: impl AsRef<Path>, results: &[TrajectoryResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| io_err(path.as_ref(), e))?;
    for r in results.iter().flat_map(|t| &t.rows) {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Io { path: path.as_ref().into(), source: e })
}

/// Inverse of [`write_trajectories`]; results come back in file order.
pub fn read_trajectories(path: impl AsRef<Path>, grid: &TrajectoryGrid) -> Result<Vec<TrajectoryResult>> {
    let mut rd = csv::Reader::from_path(path.as_ref()).map_err(|e| io_err(path.as_ref(), e))?;
    let mut groups: Vec<(String, Vec<TrajectoryRow>)> = Vec::new();
    for row in rd.deserialize() {
        let row: TrajectoryRow = row?;
        match groups.iter_mut().find(|(l, _)| *l == row.loss) {
            Some((_, rows)) => rows.push(row),
            None => groups.push((row.loss.clone(), vec![row])),
        }
    }
    Ok(groups.into_iter().map(|(loss, rows)| TrajectoryResult::from_rows(grid.clone(), loss, rows)).collect())
}

pub fn write_plotdata(path: impl AsRef<Path>, results: &[TrajectoryResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| io_err(path.as_ref(), e))?;
    for r in results {
        for row in r.plot_rows() {
            w.serialize(row)?;
        }
    }
    w.flush().map_err(|e| Error::Io { path: path.as_ref().into(), source: e })
}

fn io_err(path: &Path, e: csv::Error) -> Error {
    if !e.is_io_error() {
        return Error::Csv(e);
    }
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.into(), source },
        _ => unreachable!("checked above"),
    }
}

fn summarise(x: usize, values: &[(usize, f64)]) -> Option<CurvePoint> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.1).sum::<f64>() / n;
    let stderr = if values.len() > 1 {
        (values.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    Some(CurvePoint { x, mean, stderr, count: values.len() })
}

/// Grid value with the best criterion value; the first (smallest) wins ties.
pub(crate) fn best_index(curve: &[(usize, f64)], criterion: CriterionKind) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(x, v) in curve {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if !criterion.better(v, b) => {}
            _ => best = Some((x, v)),
        }
    }
    best.map(|b| b.0)
}

/// Fill the `(n_L, m, repeat, criterion)` table plus the real-only baseline.
///
/// Every cell of repeat `r` is fitted with the same seed, so differences
/// along a trajectory are not swamped by Monte-Carlo noise; results do not
/// depend on the worker count. Cell failures are recorded, not fatal.
pub fn run_trajectory(
    grid: &TrajectoryGrid,
    spec: &ExperimentSpec,
    criteria: &[CriterionKind],
    seed: u64,
) -> Result<TrajectoryResult> {
    grid.validate()?;
    spec.validate(criteria)?;
    let seeds = SeedSpec::new(seed);
    let m_grid = grid.m_with_zero();
    let baseline = grid.baseline();
    let n_real = grid.n_l.iter().chain(&baseline).copied().max().unwrap_or(0);
    let n_synth = m_grid.last().copied().unwrap_or(0);

    let data: Vec<std::result::Result<RepeatData, String>> = (0..grid.repeats)
        .into_par_iter()
        .map(|r| spec.source.draw(&seeds, r as u64, n_real, n_synth).map_err(|e| e.to_string()))
        .collect();

    let mut cells: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &n in &grid.n_l {
        cells.extend(m_grid.iter().map(|&m| (n, m)));
    }
    cells.extend(baseline.iter().map(|&n| (n, 0)));
    let work: Vec<(usize, usize, usize)> =
        cells.iter().flat_map(|&(n, m)| (0..grid.repeats).map(move |r| (n, m, r))).collect();

    let f0 = spec.source.f0();
    let loss = spec.fit.loss_synth.label();
    let rows: Vec<TrajectoryRow> = work
        .par_iter()
        .flat_map_iter(|&(n, m, r)| {
            let fit_seed = seeds.derive("fit", r as u64, 0);
            let outcome = data[r].clone().and_then(|d| run_cell(spec, &d, n, m, criteria, f0.as_ref(), &seeds, r));
            let rows: Vec<TrajectoryRow> = match outcome {
                Ok(vals) => vals
                    .into_iter()
                    .map(|(criterion, value, note)| TrajectoryRow {
                        n_l: n,
                        m,
                        repeat: r,
                        criterion,
                        value,
                        seed: fit_seed,
                        loss: loss.clone(),
                        note,
                    })
                    .collect(),
                Err(reason) => criteria
                    .iter()
                    .map(|&criterion| TrajectoryRow {
                        n_l: n,
                        m,
                        repeat: r,
                        criterion,
                        value: f64::NAN,
                        seed: fit_seed,
                        loss: loss.clone(),
                        note: format!("failed: {reason}"),
                    })
                    .collect(),
            };
            rows
        })
        .collect();
    Ok(TrajectoryResult::from_rows(grid.clone(), loss, rows))
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    spec: &ExperimentSpec,
    d: &RepeatData,
    n: usize,
    m: usize,
    criteria: &[CriterionKind],
    f0: Option<&F0Spec>,
    seeds: &SeedSpec,
    r: usize,
) -> std::result::Result<Vec<(CriterionKind, f64, String)>, String> {
    if n > d.real.len() {
        return Err(format!("only {} real observations available", d.real.len()));
    }
    if m > d.synth.len() {
        return Err(format!("only {} synthetic observations available", d.synth.len()));
    }
    let pred = spec
        .fit
        .fit(&d.real.prefix(n), &d.synth.prefix(m), seeds.derive("fit", r as u64, 0))
        .map_err(|e| e.to_string())?;
    criteria
        .iter()
        .map(|&c| {
            spec.fit
                .score(&pred, c, &d.test, f0, seeds.derive("w1", r as u64, 0))
                .map(|(v, note)| (c, v, note))
                .map_err(|e| e.to_string())
        })
        .collect()
}
