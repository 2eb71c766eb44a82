use super::*;
use crate::data::{Provenance, Task};
use crate::models::prior_log_density;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn normal_data(seed: u64, n: usize, mu: f64, sd: f64) -> Dataset {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(mu, sd).unwrap();
    Dataset::gaussian((0..n).map(|_| d.sample(&mut rng)), Provenance::Real)
}

fn empty() -> Dataset {
    Dataset::empty(Task::Gaussian, Provenance::Synthetic)
}

fn nig() -> PriorSpec {
    PriorSpec::nig(2.0, 1.0, 0.0, 0.5)
}

#[test]
fn grid_matches_conjugate_posterior() {
    let x = normal_data(11, 20, 0.3, 1.2);
    let model = ModelSpec::gaussian();
    let post = conjugate_nig_update(&nig(), &x.scalars().unwrap()).unwrap();
    let g = grid_posterior_auto(&model, &nig(), &LossSpec::LogLoss, &x, &LossSpec::LogLoss, &empty(), 200).unwrap();
    let mut sup: f64 = 0.0;
    for k in 0..g.density.len() {
        let exact = prior_log_density(&post, &Theta::gaussian(g.mu[k], g.sigma[k])).unwrap().exp();
        sup = sup.max((exact - g.density[k]).abs());
    }
    assert!(sup < 1e-6, "{sup}");
}

#[test]
fn flat_prior_mode_at_observation() {
    let z = 1.7;
    let x = Dataset::gaussian([z], Provenance::Real);
    let prior = PriorSpec::nig(2.0, 1.0, 0.0, 1e8);
    let model = ModelSpec::gaussian();
    let best = (0..=4000)
        .map(|i| -2.0 + i as f64 * 1e-3)
        .map(|m| {
            let v = log_unnormalised_posterior(
                &model,
                &prior,
                &LossSpec::LogLoss,
                &x,
                &LossSpec::LogLoss,
                &empty(),
                &Theta::gaussian(m, 1.0),
            )
            .unwrap();
            (m, v)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((best.0 - z).abs() <= 1e-3);
}

#[test]
fn beta_d_predictive_mode_resists_outlier() {
    let model = ModelSpec::gaussian();
    let prior = PriorSpec::nig(2.0, 1.0, 0.0, std::f64::consts::SQRT_2);
    let outlier = Dataset::gaussian([5.0], Provenance::Synthetic);
    let none = Dataset::empty(Task::Gaussian, Provenance::Real);
    let predictive_mode = |loss: LossSpec| {
        let g = grid_posterior_auto(&model, &prior, &LossSpec::LogLoss, &none, &loss, &outlier, 161).unwrap();
        (0..=600)
            .map(|i| -3.0 + i as f64 * 0.01)
            .map(|y| (y, g.predictive_density(y)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    };
    let log_mode = predictive_mode(LossSpec::LogLoss);
    let bd_mode = predictive_mode(LossSpec::beta_d(0.5));
    assert!(log_mode > 0.5, "{log_mode}");
    assert!(bd_mode.abs() <= log_mode.abs() / 3.0, "{bd_mode} vs {log_mode}");
}

#[test]
fn narrow_grid_is_rejected() {
    let x = normal_data(1, 20, 0.0, 1.0);
    let r = grid_posterior(
        &ModelSpec::gaussian(),
        &nig(),
        &LossSpec::LogLoss,
        &x,
        &LossSpec::LogLoss,
        &empty(),
        &GridAxis::new(-0.1, 0.1, 50),
        &GridAxis::new(0.8, 1.2, 50),
    );
    assert!(matches!(r, Err(Error::GridTooNarrow(_))));
}

fn check_against_grid(model: ModelSpec, loss: LossSpec, cfg: &McmcConfig, seed: u64) {
    let x = normal_data(seed, 8, 0.0, 1.0);
    let z = normal_data(seed + 100, 12, 0.5, 1.3).with_provenance(Provenance::Synthetic);
    let g = grid_posterior_auto(&model, &nig(), &LossSpec::LogLoss, &x, &loss, &z, 201).unwrap();
    let s = sample_posterior(&model, &nig(), &LossSpec::LogLoss, &x, &loss, &z, cfg, seed).unwrap();
    let (m, sd, se_m, se_sd) = (s.mean(), s.sd(), s.mcse_mean(), s.mcse_sd());
    let gsd = g.sd();
    for j in 0..2 {
        assert!(
            (m[j] - g.mean[j]).abs() < 3.0 * se_m[j],
            "{model:?} {loss:?} mean[{j}] {} vs {} (se {})",
            m[j],
            g.mean[j],
            se_m[j]
        );
        assert!(
            (sd[j] - gsd[j]).abs() < 3.0 * se_sd[j],
            "{model:?} {loss:?} sd[{j}] {} vs {} (se {})",
            sd[j],
            gsd[j],
            se_sd[j]
        );
    }
    assert!(s.max_rhat() < 1.05);
}

#[test]
fn random_walk_matches_grid() {
    let cfg = McmcConfig::gaussian();
    check_against_grid(ModelSpec::truncated_gaussian(3.0), LossSpec::beta_d(0.5), &cfg, 1);
    check_against_grid(ModelSpec::NormalLaplace { lambda: 1.0 }, LossSpec::Weighted { w: 0.5 }, &cfg, 2);
}

#[test]
fn hmc_matches_grid() {
    let cfg = McmcConfig::hmc(0.2, 10).with_samples(4, 2000, 500);
    check_against_grid(ModelSpec::NormalLaplace { lambda: 1.0 }, LossSpec::beta_d(0.5), &cfg, 3);
    check_against_grid(ModelSpec::gaussian(), LossSpec::LogLoss, &cfg, 4);
}

#[test]
fn sampling_is_deterministic() {
    let x = normal_data(5, 20, 0.0, 1.0);
    let cfg = McmcConfig::gaussian().with_samples(3, 500, 100);
    let m = ModelSpec::truncated_gaussian(3.0);
    let a = sample_posterior(&m, &nig(), &LossSpec::LogLoss, &x, &LossSpec::LogLoss, &empty(), &cfg, 9).unwrap();
    let b = sample_posterior(&m, &nig(), &LossSpec::LogLoss, &x, &LossSpec::LogLoss, &empty(), &cfg, 9).unwrap();
    assert_eq!(a, b);
    let c = sample_posterior(&m, &nig(), &LossSpec::LogLoss, &x, &LossSpec::LogLoss, &empty(), &cfg, 10).unwrap();
    assert_ne!(a.chains[0].draws, c.chains[0].draws);
    assert_eq!(a.n_draws(), 1500);
    assert!(a.chains.iter().all(|c| c.draws.len() == 500));
}

#[test]
fn unit_weight_is_the_log_loss() {
    let x = normal_data(6, 10, 0.0, 1.0);
    let z = normal_data(7, 15, 0.2, 1.0).with_provenance(Provenance::Synthetic);
    let cfg = McmcConfig::gaussian().with_samples(2, 1000, 200);
    let m = ModelSpec::truncated_gaussian(3.0);
    let w = LossSpec::Weighted { w: 15.0 / 15.0 };
    let a = sample_posterior(&m, &nig(), &LossSpec::LogLoss, &x, &w, &z, &cfg, 1).unwrap();
    let b = sample_posterior(&m, &nig(), &LossSpec::LogLoss, &x, &LossSpec::LogLoss, &z, &cfg, 1).unwrap();
    assert_eq!(a.mean(), b.mean());
}

#[test]
fn acceptance_lands_near_target() {
    let x = normal_data(8, 30, 0.0, 1.0);
    let cfg = McmcConfig::gaussian();
    let m = ModelSpec::truncated_gaussian(3.0);
    let s = sample_posterior(&m, &nig(), &LossSpec::LogLoss, &x, &LossSpec::LogLoss, &empty(), &cfg, 3).unwrap();
    for a in s.acceptance_rates() {
        assert!((a - 0.35).abs() < 0.1, "{a}");
    }
    assert!(s.max_rhat() < 1.05);
    assert!(s.warnings().is_empty());
}

#[test]
fn logistic_posterior_recovers_signal() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<(Vec<f64>, bool)> = (0..400)
        .map(|_| {
            let x1: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
            let x2: f64 = Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
            let p = crate::special::logistic(0.5 + 2.0 * x1 - 1.0 * x2);
            (vec![x1, x2], rand::Rng::gen::<f64>(&mut rng) < p)
        })
        .collect();
    let data = Dataset::logistic(rows, Provenance::Real).unwrap();
    let none = Dataset::empty(Task::Logistic, Provenance::Synthetic);
    let model = ModelSpec::LogisticRegression { dim: 2 };
    let prior = PriorSpec::IndependentNormal { sd: 50.0 };
    let cfg = McmcConfig::logistic().with_samples(4, 2000, 500);
    let s =
        sample_posterior(&model, &prior, &LossSpec::LogLoss, &data, &LossSpec::beta_d(0.5), &none, &cfg, 2).unwrap();
    let m = s.mean();
    let sd = s.sd();
    for (est, (truth, sd)) in m.iter().zip([0.5, 2.0, -1.0].iter().zip(&sd)) {
        assert!((est - truth).abs() < 4.0 * sd, "{m:?}");
    }
    assert!(s.max_rhat() < 1.05);
}

#[test]
fn config_validation() {
    assert!(McmcConfig::gaussian().with_samples(2, 100, 100).validate().is_err());
    assert!(McmcConfig::gaussian().with_samples(0, 100, 10).validate().is_err());
    assert!(McmcConfig::hmc(0.0, 10).validate().is_err());
}

#[test]
fn from_draws_single_point() {
    let p = PosteriorSamples::from_draws(ModelSpec::gaussian(), vec![vec![0.0, 1.0]]).unwrap();
    assert_eq!(p.n_draws(), 1);
    assert_eq!(p.mean(), vec![0.0, 1.0]);
    assert!(PosteriorSamples::from_draws(ModelSpec::gaussian(), vec![]).is_err());
}
