//! JSON experiment configuration for the command-line tool.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use synlearn::trajectory::{BootstrapSpec, DataSource, FitSpec, Scale, TrajectoryGrid};
use synlearn::{
    load_csv, CriterionKind, Dataset, LaplaceMechanism, LossSpec, McmcConfig, ModelSpec, PriorSpec, Provenance, Task,
};

/// Exactly one synthetic source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticConfig {
    Mechanism(LaplaceMechanism),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(t) => vec![t.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// True data-generating distribution for simulated experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Truth {
    pub mu0: f64,
    pub sigma0: f64,
    pub test_size: usize,
}

impl Default for Truth {
    fn default() -> Self {
        Truth { mu0: 0.0, sigma0: 1.0, test_size: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Size of the simulated real dataset when no input file is given.
    pub n: usize,
    /// Number of records to release (default: all).
    pub m: Option<usize>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig { n: 100, m: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhatConfig {
    pub n_l: usize,
    /// Defaults to the trajectory grid's realisations.
    pub realisations: Option<usize>,
    /// Defaults to the trajectory grid's m values.
    pub m: Option<Vec<usize>>,
}

impl Default for MhatConfig {
    fn default() -> Self {
        MhatConfig { n_l: 10, realisations: None, m: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PValueConfig {
    pub n_l: usize,
    pub splits: usize,
    pub alpha: f64,
    pub m: Option<Vec<usize>>,
}

impl Default for PValueConfig {
    fn default() -> Self {
        PValueConfig { n_l: 10, splits: 10, alpha: 0.05, m: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Option<Task>,
    pub model: Option<ModelSpec>,
    pub prior: Option<PriorSpec>,
    pub loss_real: Option<LossSpec>,
    pub loss_synth: Option<OneOrMany<LossSpec>>,
    /// Appends `Weighted { w }` losses.
    pub w_grid: Vec<f64>,
    /// Appends `BetaD { beta }` losses.
    pub beta_grid: Vec<f64>,
    pub w_beta: Option<f64>,
    pub synthetic: Option<SyntheticConfig>,
    pub real_csv: Option<PathBuf>,
    pub truth: Truth,
    pub test_fraction: Option<f64>,
    pub grid: Option<TrajectoryGrid>,
    pub criteria: Option<Vec<CriterionKind>>,
    pub mcmc: Option<McmcConfig>,
    pub predictive_draws: Option<usize>,
    pub kld_step: Option<f64>,
    pub w1_samples: Option<usize>,
    pub seed: Option<u64>,
    pub scale: Option<Scale>,
    pub out: Option<PathBuf>,
    pub generate: GenerateConfig,
    pub mhat: MhatConfig,
    pub neff: Option<BootstrapSpec>,
    pub pvalue: PValueConfig,
}

/// A fully resolved configuration.
pub struct Resolved {
    pub cfg: ExperimentConfig,
    pub task: Task,
    pub scale: Scale,
    pub seed: u64,
    pub out: PathBuf,
    pub grid: TrajectoryGrid,
    pub criteria: Vec<CriterionKind>,
    pub losses: Vec<LossSpec>,
    pub mechanism: Option<LaplaceMechanism>,
    base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub scale: Option<Scale>,
    pub out: Option<PathBuf>,
}

impl Resolved {
    pub fn new(cfg: ExperimentConfig, base_dir: PathBuf, ov: Overrides) -> Result<Self> {
        let task = cfg.task.or_else(|| cfg.model.map(|m| m.task())).unwrap_or(Task::Gaussian);
        let scale = ov.scale.or(cfg.scale).unwrap_or_default();
        let seed = ov.seed.or(cfg.seed).unwrap_or(0);
        let out = ov
            .out
            .or_else(|| cfg.out.clone().map(|p| base_dir.join(p)))
            .or_else(|| std::env::var_os("SYNLEARN_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("synlearn-out"));
        let grid = cfg.grid.clone().unwrap_or_else(|| TrajectoryGrid::for_scale(scale));
        grid.validate()?;
        let criteria = cfg.criteria.clone().unwrap_or_else(|| match task {
            Task::Gaussian => vec![CriterionKind::Kld, CriterionKind::LogScore, CriterionKind::Wasserstein1],
            Task::Logistic => vec![CriterionKind::LogScore, CriterionKind::Auroc],
        });
        if criteria.is_empty() {
            bail!("the criteria list is empty");
        }
        let mut losses = cfg.loss_synth.as_ref().map(OneOrMany::to_vec).unwrap_or_default();
        losses.extend(cfg.w_grid.iter().map(|&w| LossSpec::Weighted { w }));
        let w_beta = cfg.w_beta.unwrap_or(synlearn::models::DEFAULT_W_BETA);
        losses.extend(cfg.beta_grid.iter().map(|&beta| LossSpec::BetaD { beta, w_beta }));
        if losses.is_empty() {
            losses.push(LossSpec::LogLoss);
        }
        for l in &losses {
            l.validate()?;
        }
        let mechanism = match &cfg.synthetic {
            Some(SyntheticConfig::Mechanism(m)) => {
                m.validate()?;
                Some(*m)
            }
            Some(SyntheticConfig::Csv(_)) => None,
            None if task == Task::Gaussian && cfg.real_csv.is_none() => Some(LaplaceMechanism::standard(1.0)?),
            None => bail!("a synthetic source (mechanism or csv) is required"),
        };
        if cfg.model.is_some_and(|m| m.task() != task) {
            bail!("model does not match task {task:?}");
        }
        Ok(Resolved { cfg, task, scale, seed, out, grid, criteria, losses, mechanism, base_dir })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn load(&self, p: &Path, provenance: Provenance) -> Result<Dataset> {
        let path = self.path(p);
        let d = load_csv(&path, self.task).with_context(|| format!("loading {}", path.display()))?;
        Ok(d.with_provenance(provenance))
    }

    pub fn model(&self, real: Option<&Dataset>) -> Result<ModelSpec> {
        if let Some(m) = self.cfg.model {
            return Ok(m);
        }
        match self.task {
            Task::Gaussian => Ok(ModelSpec::truncated_gaussian(3.0)),
            Task::Logistic => {
                let dim = real.map(Dataset::dim).filter(|&d| d > 0);
                Ok(ModelSpec::LogisticRegression { dim: dim.context("logistic runs need a model or real data")? })
            }
        }
    }

    pub fn prior(&self) -> PriorSpec {
        self.cfg.prior.unwrap_or(match self.task {
            Task::Gaussian => PriorSpec::nig(2.0, 4.0, 3.0, 1.0),
            Task::Logistic => PriorSpec::IndependentNormal { sd: 50.0 },
        })
    }

    pub fn fit_spec(&self, model: ModelSpec, loss: LossSpec) -> FitSpec {
        let mut f = FitSpec::for_scale(model, self.prior(), loss, self.scale);
        if let Some(l) = self.cfg.loss_real {
            f.loss_real = l;
        }
        if let Some(m) = &self.cfg.mcmc {
            f.mcmc = m.clone();
        }
        if let Some(d) = self.cfg.predictive_draws {
            f.predictive_draws = d;
        }
        if let Some(s) = self.cfg.kld_step {
            f.kld_step = s;
        }
        if let Some(n) = self.cfg.w1_samples {
            f.w1_samples = n;
        }
        f
    }

    /// The experiment's data source; the real CSV is required for
    /// non-simulated runs.
    pub fn source(&self) -> Result<DataSource> {
        match (&self.cfg.real_csv, &self.cfg.synthetic) {
            (None, Some(SyntheticConfig::Csv(_))) => bail!("a synthetic CSV needs real_csv as well"),
            (None, _) => {
                let t = &self.cfg.truth;
                Ok(DataSource::GaussianSimulation {
                    mu0: t.mu0,
                    sigma0: t.sigma0,
                    mechanism: self.mechanism.context("simulation needs a mechanism")?,
                    test_size: t.test_size,
                })
            }
            (Some(real), Some(SyntheticConfig::Csv(synth))) => Ok(DataSource::Datasets {
                real: self.load(real, Provenance::Real)?,
                synthetic: self.load(synth, Provenance::Synthetic)?,
                test_fraction: self.cfg.test_fraction.unwrap_or(0.3),
            }),
            (Some(_), _) => bail!("real_csv requires a synthetic csv source"),
        }
    }

    pub fn bootstrap(&self) -> BootstrapSpec {
        self.cfg.neff.unwrap_or(match self.scale {
            Scale::Desk => BootstrapSpec { n_curves: None, replicates: 200 },
            Scale::Paper => BootstrapSpec::default(),
        })
    }
}
