//! `synlearn` command-line tool.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{ExperimentConfig, Overrides, Resolved, SyntheticConfig};
use synlearn::privacy::privatise_first;
use synlearn::trajectory::{
    estimate_mhat, n_effective, read_trajectories, synthetic_use_test, write_plotdata, write_trajectories,
    ExperimentSpec, MhatResult, NEffResult, PValueResult, Scale, SyntheticSource,
};
use synlearn::{
    run_trajectory, sample_posterior, write_csv, Dataset, LossSpec, PosteriorSamples, Provenance, SeedSpec, Task,
};

#[derive(Parser)]
#[command(name = "synlearn", version, about = "Bayesian learning from differentially private synthetic data")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; the only source of randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    scale: Option<Scale>,
    /// Output directory (falls back to the config, then SYNLEARN_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Privatise real data with the Laplace mechanism.
    Generate {
        /// Real data to privatise; simulated from the configured truth if omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Sample one posterior and write its summary and draws.
    Fit {
        #[arg(long)]
        real: Option<PathBuf>,
        #[arg(long)]
        synthetic: Option<PathBuf>,
    },
    /// Learning trajectories over the (n_L, m) grid.
    Trajectory,
    /// Criterion-optimal synthetic sample size.
    Mhat,
    /// Effective real sample size from an existing trajectory.csv.
    Neff,
    /// Split-sample p-value for using synthetic data.
    Test,
}

/// Configuration or input problem (exit code 2).
#[derive(Debug)]
struct InputError;

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid configuration or input")
    }
}

impl std::error::Error for InputError {}

enum Outcome {
    Done,
    Partial(usize),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(n)) => {
            eprintln!("warning: {n} cells failed; see the note column of trajectory.csv");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<InputError>() || cause.is::<serde_json::Error>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<synlearn::Error>() {
            use synlearn::Error::*;
            return match err {
                Io { .. } | Csv(_) | Parse { .. } | InvalidParameter(_) | Incompatible(_) | InsufficientData(_) => 2,
                Boundary(_) | Sampler(_) | GridTooNarrow(_) => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    let (cfg, base) = match &cli.config {
        Some(p) => {
            let cfg = ExperimentConfig::load(p).context(InputError)?;
            (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (ExperimentConfig::default(), PathBuf::new()),
    };
    let r = Resolved::new(cfg, base, Overrides { seed: cli.seed, scale: cli.scale, out: cli.out.clone() })
        .context(InputError)?;
    fs::create_dir_all(&r.out).with_context(|| format!("creating {}", r.out.display()))?;
    match cli.command {
        Command::Generate { input } => generate(&r, input),
        Command::Fit { real, synthetic } => fit(&r, real, synthetic),
        Command::Trajectory => trajectory(&r),
        Command::Mhat => mhat(&r),
        Command::Neff => neff(&r),
        Command::Test => test(&r),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn generate(r: &Resolved, input: Option<PathBuf>) -> Result<Outcome> {
    if r.task != Task::Gaussian {
        return Err(anyhow::Error::new(InputError).context("generate only privatises scalar (Gaussian-task) data"));
    }
    let mech = r.mechanism.context("generate needs a mechanism source").context(InputError)?;
    let seeds = SeedSpec::new(r.seed);
    let (real, source) = match input {
        Some(p) => (r.load(&p, Provenance::Real).context(InputError)?, p.display().to_string()),
        None => {
            let t = &r.cfg.truth;
            let normal = rand_distr::Normal::new(t.mu0, t.sigma0).context(InputError)?;
            use rand_distr::Distribution;
            let xs: Vec<f64> = normal.sample_iter(seeds.rng("real", 0, 0)).take(r.cfg.generate.n).collect();
            let real = Dataset::gaussian(xs, Provenance::Real);
            write_csv(&real, r.out.join("real.csv"))?;
            (real, "simulated".to_string())
        }
    };
    let m = r.cfg.generate.m.unwrap_or(real.len());
    let z = privatise_first(&mech, &real, m, seeds.derive("privatise", 0, 0)).context(InputError)?;
    write_csv(&z, r.out.join("synthetic.csv"))?;

    #[derive(Serialize)]
    struct Report {
        epsilon: f64,
        lambda: f64,
        bounds: [f64; 2],
        n: usize,
        m: usize,
        seed: u64,
        source: String,
    }
    write_json(
        &r.out.join("generate.json"),
        &Report {
            epsilon: mech.epsilon(),
            lambda: mech.lambda,
            bounds: [mech.lower, mech.upper],
            n: real.len(),
            m,
            seed: r.seed,
            source,
        },
    )?;
    println!("released {m} of {} records at epsilon = {}", real.len(), mech.epsilon());
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct ParamSummary {
    name: String,
    mean: f64,
    sd: f64,
    mcse_mean: f64,
    q05: f64,
    q25: f64,
    q50: f64,
    q75: f64,
    q95: f64,
    rhat: f64,
    ess: f64,
}

fn fit(r: &Resolved, real: Option<PathBuf>, synthetic: Option<PathBuf>) -> Result<Outcome> {
    let real_path =
        real.or_else(|| r.cfg.real_csv.clone()).context("fit needs --real or real_csv").context(InputError)?;
    let real = r.load(&real_path, Provenance::Real).context(InputError)?;
    let synth_path = synthetic.or_else(|| match &r.cfg.synthetic {
        Some(SyntheticConfig::Csv(p)) => Some(p.clone()),
        _ => None,
    });
    let synth = match synth_path {
        Some(p) => r.load(&p, Provenance::Synthetic).context(InputError)?,
        None => Dataset::empty(r.task, Provenance::Synthetic),
    };
    let model = r.model(Some(&real)).context(InputError)?;
    let loss = r.losses[0];
    let spec = r.fit_spec(model, loss);
    spec.validate().context(InputError)?;
    let post = sample_posterior(
        &spec.model,
        &spec.prior,
        &spec.loss_real,
        &real,
        &spec.loss_synth,
        &synth,
        &spec.mcmc,
        r.seed,
    )?;

    #[derive(Serialize)]
    struct Summary<'a> {
        model: synlearn::ModelSpec,
        prior: synlearn::PriorSpec,
        loss_real: LossSpec,
        loss_synth: LossSpec,
        n_real: usize,
        n_synth: usize,
        seed: u64,
        draws: usize,
        parameters: Vec<ParamSummary>,
        acceptance_rates: Vec<f64>,
        divergence_rate: f64,
        max_rhat: f64,
        warnings: &'a [String],
    }
    let warnings = post.warnings();
    let summary = Summary {
        model: spec.model,
        prior: spec.prior,
        loss_real: spec.loss_real,
        loss_synth: spec.loss_synth,
        n_real: real.len(),
        n_synth: synth.len(),
        seed: r.seed,
        draws: post.n_draws(),
        parameters: param_summaries(&post),
        acceptance_rates: post.acceptance_rates(),
        divergence_rate: post.divergence_rate(),
        max_rhat: post.max_rhat(),
        warnings: &warnings,
    };
    write_json(&r.out.join("posterior_summary.json"), &summary)?;
    write_draws(&r.out.join("draws.csv"), &post)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for p in &summary.parameters {
        println!("{:>8}  mean {:>10.4}  sd {:>8.4}  rhat {:.3}", p.name, p.mean, p.sd, p.rhat);
    }
    Ok(Outcome::Done)
}

fn param_summaries(post: &PosteriorSamples) -> Vec<ParamSummary> {
    let (mean, sd, mcse) = (post.mean(), post.sd(), post.mcse_mean());
    post.param_names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| ParamSummary {
            name,
            mean: mean[j],
            sd: sd[j],
            mcse_mean: mcse[j],
            q05: post.quantile(j, 0.05),
            q25: post.quantile(j, 0.25),
            q50: post.quantile(j, 0.5),
            q75: post.quantile(j, 0.75),
            q95: post.quantile(j, 0.95),
            rhat: post.rhat[j],
            ess: post.ess[j],
        })
        .collect()
}

fn write_draws(path: &Path, post: &PosteriorSamples) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(post.param_names());
    w.write_record(&header)?;
    for (c, chain) in post.chains.iter().enumerate() {
        for (i, d) in chain.draws.iter().enumerate() {
            let mut rec = vec![c.to_string(), i.to_string()];
            rec.extend(d.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn experiment(r: &Resolved, loss: LossSpec) -> Result<ExperimentSpec> {
    let source = r.source().context(InputError)?;
    let real = match &source {
        synlearn::trajectory::DataSource::Datasets { real, .. } => Some(real),
        _ => None,
    };
    let model = r.model(real).context(InputError)?;
    Ok(ExperimentSpec { fit: r.fit_spec(model, loss), source })
}

fn trajectory(r: &Resolved) -> Result<Outcome> {
    let mut results = Vec::with_capacity(r.losses.len());
    for &loss in &r.losses {
        let spec = experiment(r, loss)?;
        spec.validate(&r.criteria).context(InputError)?;
        let res = run_trajectory(&r.grid, &spec, &r.criteria, r.seed)?;
        println!("{}: {} cells, {} failed", res.loss, res.rows.len(), res.failures().count());
        results.push(res);
    }
    write_trajectories(r.out.join("trajectory.csv"), &results)?;
    write_plotdata(r.out.join("branching_plotdata.csv"), &results)?;
    let failed: usize = results.iter().map(|t| t.failures().count()).sum();
    let total: usize = results.iter().map(|t| t.rows.len()).sum();
    if failed == total {
        bail!("every trajectory cell failed");
    }
    Ok(if failed > 0 { Outcome::Partial(failed) } else { Outcome::Done })
}

fn mhat(r: &Resolved) -> Result<Outcome> {
    let b = r.cfg.mhat.realisations.unwrap_or(r.grid.realisations);
    let m_grid = r.cfg.mhat.m.clone().unwrap_or_else(|| r.grid.m.clone());
    let max_m = m_grid.iter().copied().max().unwrap_or(0);
    let n_l = r.cfg.mhat.n_l;

    #[derive(Serialize)]
    struct PerLoss {
        loss: String,
        results: Vec<MhatResult>,
    }
    #[derive(Serialize)]
    struct Report {
        seed: u64,
        n_l: usize,
        realisations: usize,
        losses: Vec<PerLoss>,
    }
    let mut losses = Vec::new();
    for &loss in &r.losses {
        let spec = experiment(r, loss)?;
        spec.validate(&r.criteria).context(InputError)?;
        let seeds = SeedSpec::new(r.seed);
        let d = spec.source.draw(&seeds, 0, n_l, b * max_m)?;
        if d.real.len() < n_l {
            return Err(anyhow::Error::new(InputError)
                .context(format!("n_l = {n_l} exceeds the {} training rows", d.real.len())));
        }
        let source = match (&spec.source, &d.keeper) {
            (synlearn::trajectory::DataSource::GaussianSimulation { mechanism, .. }, Some(keeper)) => {
                SyntheticSource::Generator { mechanism, keeper }
            }
            _ => SyntheticSource::Pool(&d.synth),
        };
        let f0 = spec.source.f0();
        let results = estimate_mhat(
            &spec.fit,
            &d.real.prefix(n_l),
            source,
            &m_grid,
            b,
            &d.test,
            f0.as_ref(),
            &r.criteria,
            seeds.derive("mhat", 0, 0),
        )?;
        for res in &results {
            println!("{}: m_hat({}) = {}", loss.label(), res.criterion, res.m_hat);
        }
        losses.push(PerLoss { loss: loss.label(), results });
    }
    write_json(&r.out.join("mhat.json"), &Report { seed: r.seed, n_l, realisations: b, losses })?;
    Ok(Outcome::Done)
}

fn neff(r: &Resolved) -> Result<Outcome> {
    let path = r.out.join("trajectory.csv");
    let trajs = read_trajectories(&path, &r.grid)
        .with_context(|| format!("reading {} (run `synlearn trajectory` first)", path.display()))
        .context(InputError)?;
    let boot = r.bootstrap();

    #[derive(Serialize)]
    struct Entry {
        loss: String,
        #[serde(flatten)]
        result: NEffResult,
    }
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for t in &trajs {
        for c in t.criteria() {
            for &n_l in &r.grid.n_l {
                match n_effective(t, n_l, c, boot, r.seed) {
                    Ok(res) => entries.push(Entry { loss: t.loss.clone(), result: res }),
                    Err(e) => failures.push(format!("{} n_l={n_l} {c}: {e}", t.loss)),
                }
            }
        }
    }
    #[derive(Serialize)]
    struct Report {
        seed: u64,
        bootstrap: synlearn::trajectory::BootstrapSpec,
        results: Vec<Entry>,
        failures: Vec<String>,
    }
    let n_fail = failures.len();
    let n_ok = entries.len();
    write_json(&r.out.join("neff.json"), &Report { seed: r.seed, bootstrap: boot, results: entries, failures })?;
    println!("n_eff computed for {n_ok} (loss, n_L, criterion) combinations");
    if n_ok == 0 {
        bail!("no n_eff could be computed");
    }
    Ok(if n_fail > 0 { Outcome::Partial(n_fail) } else { Outcome::Done })
}

fn test(r: &Resolved) -> Result<Outcome> {
    let pc = &r.cfg.pvalue;
    let m_grid = pc.m.clone().unwrap_or_else(|| r.grid.m.clone());
    let max_m = m_grid.iter().copied().max().unwrap_or(0);

    #[derive(Serialize)]
    struct PerLoss {
        loss: String,
        #[serde(flatten)]
        result: PValueResult,
    }
    #[derive(Serialize)]
    struct Report {
        seed: u64,
        n_l: usize,
        splits: usize,
        losses: Vec<PerLoss>,
    }
    let mut losses = Vec::new();
    for &loss in &r.losses {
        let spec = experiment(r, loss)?;
        spec.fit.validate().context(InputError)?;
        let seeds = SeedSpec::new(r.seed);
        let d = spec.source.draw(&seeds, 0, pc.n_l, max_m)?;
        if d.real.len() < pc.n_l {
            return Err(anyhow::Error::new(InputError).context(format!(
                "n_l = {} exceeds the {} training rows",
                pc.n_l,
                d.real.len()
            )));
        }
        let res = synthetic_use_test(
            &spec.fit,
            &d.real.prefix(pc.n_l),
            &d.synth,
            &m_grid,
            &d.test,
            pc.splits,
            pc.alpha,
            seeds.derive("pvalue", 0, 0),
        )?;
        println!(
            "{}: p = {:.4} -> {}",
            loss.label(),
            res.aggregate,
            if res.use_synthetic { "use synthetic data" } else { "do not use synthetic data" }
        );
        losses.push(PerLoss { loss: loss.label(), result: res });
    }
    write_json(&r.out.join("pvalue.json"), &Report { seed: r.seed, n_l: pc.n_l, splits: pc.splits, losses })?;
    Ok(Outcome::Done)
}
