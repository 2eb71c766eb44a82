use std::ffi::CStr;

use super::*;

fn dataset(xs: &[f64]) -> *mut SynDataset {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { syn_dataset_from_values(xs.as_ptr(), xs.len(), &mut ds) }, SynStatus::Ok);
    ds
}

fn last_error() -> String {
    let p = syn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn options(seed: u64) -> SynFitOptions {
    SynFitOptions {
        halfwidth: f64::INFINITY,
        prior_shape: 2.0,
        prior_rate: 1.0,
        prior_mean: 0.0,
        prior_scale: 10.0,
        loss_synth: SynLoss { kind: SynLossKind::Log, w: 1.0, beta: 0.5, w_beta: 1.25 },
        chains: 2,
        samples_per_chain: 500,
        warmup: 200,
        predictive_draws: 200,
        seed,
    }
}

#[test]
fn dataset_round_trip() {
    let ds = dataset(&[1.0, -2.0, 0.5]);
    let mut n = 0;
    assert_eq!(unsafe { syn_dataset_len(ds, &mut n) }, SynStatus::Ok);
    assert_eq!(n, 3);
    let mut buf = [0.0; 3];
    assert_eq!(unsafe { syn_dataset_values(ds, buf.as_mut_ptr(), 3, &mut n) }, SynStatus::Ok);
    assert_eq!(buf, [1.0, -2.0, 0.5]);
    let mut small = [0.0; 2];
    assert_eq!(unsafe { syn_dataset_values(ds, small.as_mut_ptr(), 2, &mut n) }, SynStatus::BufferTooSmall);
    assert_eq!(n, 3);
    unsafe { syn_dataset_free(ds) };
}

#[test]
fn null_pointers_are_reported() {
    let mut n = 0;
    assert_eq!(unsafe { syn_dataset_len(ptr::null(), &mut n) }, SynStatus::NullPointer);
    assert!(last_error().contains("null"));
    unsafe { syn_dataset_free(ptr::null_mut()) };
    unsafe { syn_posterior_free(ptr::null_mut()) };
}

#[test]
fn epsilon_matches_definition() {
    let mut eps = 0.0;
    assert_eq!(unsafe { syn_epsilon(-3.0, 3.0, 1.0, &mut eps) }, SynStatus::Ok);
    assert_eq!(eps, 6.0);
    assert_eq!(unsafe { syn_epsilon(3.0, -3.0, 1.0, &mut eps) }, SynStatus::InvalidArgument);
    assert!(!last_error().is_empty());
}

#[test]
fn privatise_clamps_then_adds_noise() {
    let real = dataset(&[10.0; 200]);
    let mut z = ptr::null_mut();
    assert_eq!(unsafe { syn_privatise(real, -3.0, 3.0, 1.0, 4, &mut z) }, SynStatus::Ok);
    let mut buf = vec![0.0; 200];
    let mut n = 0;
    unsafe { syn_dataset_values(z, buf.as_mut_ptr(), buf.len(), &mut n) };
    let mean = buf.iter().sum::<f64>() / 200.0;
    // clamped to 3, Laplace(1) noise has sd sqrt(2)
    assert!((mean - 3.0).abs() < 4.0 * (2.0f64 / 200.0).sqrt(), "mean {mean}");
    unsafe {
        syn_dataset_free(z);
        syn_dataset_free(real);
    }
}

#[test]
fn loss_eval_log_loss_is_negative_log_density() {
    let loss = SynLoss { kind: SynLossKind::Log, w: 0.0, beta: 0.0, w_beta: 0.0 };
    let mut v = 0.0;
    assert_eq!(unsafe { syn_loss_eval(&loss, 0.0, 0.0, 1.0, 0.0, &mut v) }, SynStatus::Ok);
    assert!((v - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    let weighted = SynLoss { kind: SynLossKind::Weighted, w: 0.5, ..loss };
    let mut vw = 0.0;
    unsafe { syn_loss_eval(&weighted, 0.0, 0.0, 1.0, 0.0, &mut vw) };
    assert!((vw - 0.5 * v).abs() < 1e-12);
    let bad = SynLoss { kind: SynLossKind::BetaD, w: 0.0, beta: -1.0, w_beta: 1.0 };
    assert_eq!(unsafe { syn_loss_eval(&bad, 0.0, 0.0, 1.0, 0.0, &mut v) }, SynStatus::InvalidArgument);
}

#[test]
fn fit_and_score() {
    let xs: Vec<f64> = (0..60).map(|i| 2.0 + ((i * 37 % 60) as f64 / 60.0 - 0.5) * 3.0).collect();
    let real = dataset(&xs);
    let opts = options(9);
    let mut post = ptr::null_mut();
    assert_eq!(unsafe { syn_fit(real, ptr::null(), &opts, &mut post) }, SynStatus::Ok, "{}", last_error());
    let mut mean = [0.0; 2];
    let mut n = 0;
    assert_eq!(unsafe { syn_posterior_mean(post, mean.as_mut_ptr(), 2, &mut n) }, SynStatus::Ok);
    assert_eq!(n, 2);
    assert!((mean[0] - 2.0).abs() < 0.3, "mu {}", mean[0]);
    let mut rhat = 0.0;
    unsafe { syn_posterior_max_rhat(post, &mut rhat) };
    assert!(rhat < 1.05);

    let (mut near, mut far, mut deficit) = (0.0, 0.0, -1.0);
    assert_eq!(unsafe { syn_kld(post, 2.0, 0.87, 0.01, &mut near, &mut deficit) }, SynStatus::Ok);
    assert_eq!(unsafe { syn_kld(post, -2.0, 0.87, 0.01, &mut far, ptr::null_mut()) }, SynStatus::Ok);
    assert!(near >= 0.0 && near < far);
    assert_eq!(deficit, 0.0);

    let mut ls = 0.0;
    assert_eq!(unsafe { syn_log_score(post, real, &mut ls) }, SynStatus::Ok);
    assert!(ls.is_finite());
    unsafe {
        syn_posterior_free(post);
        syn_dataset_free(real);
    }
}

#[test]
fn fit_is_seed_deterministic() {
    let real = dataset(&[0.1, -0.4, 1.2, 0.3, -0.9, 0.0, 0.6, -0.2]);
    let run = |seed| {
        let mut post = ptr::null_mut();
        unsafe { syn_fit(real, ptr::null(), &options(seed), &mut post) };
        let mut m = [0.0; 2];
        let mut n = 0;
        unsafe {
            syn_posterior_mean(post, m.as_mut_ptr(), 2, &mut n);
            syn_posterior_free(post);
        }
        m
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
    unsafe { syn_dataset_free(real) };
}

#[test]
fn metrics() {
    let mut v = 0.0;
    let a = [0.0, 1.0, 2.0];
    let b = [1.0, 2.0, 3.0];
    assert_eq!(unsafe { syn_wasserstein1(a.as_ptr(), 3, b.as_ptr(), 3, &mut v) }, SynStatus::Ok);
    assert!((v - 1.0).abs() < 1e-12);

    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    assert_eq!(unsafe { syn_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut v) }, SynStatus::Ok);
    assert!((v - 0.75).abs() < 1e-12);

    let ps = [0.01, 0.02, 0.5];
    assert_eq!(unsafe { syn_aggregate_pvalues(ps.as_ptr(), 3, &mut v) }, SynStatus::Ok);
    assert!((v - 0.04).abs() < 1e-12);
    let bad = [1.5];
    assert_eq!(unsafe { syn_aggregate_pvalues(bad.as_ptr(), 1, &mut v) }, SynStatus::InvalidArgument);
}

#[test]
fn missing_csv_is_an_io_error() {
    let mut ds = ptr::null_mut();
    let path = c"/nonexistent/synlearn.csv";
    assert_eq!(unsafe { syn_dataset_load_csv(path.as_ptr(), SynTask::Gaussian, &mut ds) }, SynStatus::Io);
    assert!(ds.is_null());
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(syn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
