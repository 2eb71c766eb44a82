//! C ABI for `synlearn`.
//!
//! Every function returns a [`SynStatus`]; results go through out-pointers.
//! On failure, [`syn_last_error`] returns a message for the calling thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use synlearn::evaluation::{auroc, kld_to_f0, log_score, wasserstein1, Quadrature};
use synlearn::models::loss_eval;
use synlearn::privacy::privatise;
use synlearn::trajectory::aggregate_pvalues;
use synlearn::{
    load_csv, sample_posterior, Dataset, Error, F0Spec, LaplaceMechanism, LossSpec, McmcConfig, ModelSpec, Observation,
    PosteriorSamples, PredictiveModel, PriorSpec, Provenance, Task, Theta,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Incompatible = 5,
    InsufficientData = 6,
    /// Sampler failure, boundary parameter or too-narrow grid.
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynTask {
    Gaussian = 0,
    Logistic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynLossKind {
    Log = 0,
    Weighted = 1,
    BetaD = 2,
}

/// `w` is used by `Weighted`; `beta` and `w_beta` by `BetaD`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SynLoss {
    pub kind: SynLossKind,
    pub w: f64,
    pub beta: f64,
    pub w_beta: f64,
}

/// Options for a scalar (truncated-)Gaussian fit with a normal-inverse-gamma
/// prior. A non-finite or non-positive `halfwidth` means no truncation.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SynFitOptions {
    pub halfwidth: f64,
    pub prior_shape: f64,
    pub prior_rate: f64,
    pub prior_mean: f64,
    pub prior_scale: f64,
    pub loss_synth: SynLoss,
    pub chains: usize,
    pub samples_per_chain: usize,
    pub warmup: usize,
    /// Draws kept for the predictive (0 keeps all).
    pub predictive_draws: usize,
    pub seed: u64,
}

pub struct SynDataset(Dataset);

pub struct SynPosterior {
    samples: PosteriorSamples,
    predictive: PredictiveModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(SynStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => SynStatus::Io,
            Error::Csv(_) | Error::Parse { .. } => SynStatus::Parse,
            Error::InvalidParameter(_) => SynStatus::InvalidArgument,
            Error::Incompatible(_) => SynStatus::Incompatible,
            Error::InsufficientData(_) => SynStatus::InsufficientData,
            Error::Boundary(_) | Error::Sampler(_) | Error::GridTooNarrow(_) => SynStatus::Numerical,
        };
        Fail(status, e.to_string())
    }
}

fn fail(status: SynStatus, msg: &str) -> Fail {
    Fail(status, msg.to_string())
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SynStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SynStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SynStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(SynStatus::NullPointer, "null output pointer"))
}

unsafe fn input<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| fail(SynStatus::NullPointer, "null handle"))
}

unsafe fn array<'a, T>(p: *const T, n: usize) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SynStatus::NullPointer, "null array"));
    }
    Ok(slice::from_raw_parts(p, n))
}

fn loss_spec(l: &SynLoss) -> Result<LossSpec, Fail> {
    let spec = match l.kind {
        SynLossKind::Log => LossSpec::LogLoss,
        SynLossKind::Weighted => LossSpec::Weighted { w: l.w },
        SynLossKind::BetaD => LossSpec::BetaD { beta: l.beta, w_beta: l.w_beta },
    };
    spec.validate()?;
    Ok(spec)
}

fn tg_model(halfwidth: f64) -> ModelSpec {
    if halfwidth.is_finite() && halfwidth > 0.0 {
        ModelSpec::truncated_gaussian(halfwidth)
    } else {
        ModelSpec::gaussian()
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn syn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn syn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a CSV dataset in the format written by the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn syn_dataset_load_csv(
    path: *const c_char,
    task: SynTask,
    out_ds: *mut *mut SynDataset,
) -> SynStatus {
    guard(|| {
        let out_ds = out(out_ds)?;
        let path = input(path)?;
        let path = CStr::from_ptr(path).to_str().map_err(|_| fail(SynStatus::InvalidArgument, "path is not UTF-8"))?;
        let task = match task {
            SynTask::Gaussian => Task::Gaussian,
            SynTask::Logistic => Task::Logistic,
        };
        *out_ds = Box::into_raw(Box::new(SynDataset(load_csv(path, task)?)));
        Ok(())
    })
}

/// Build a scalar dataset from `n` values.
///
/// # Safety
/// `values` must point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_dataset_from_values(
    values: *const f64,
    n: usize,
    out_ds: *mut *mut SynDataset,
) -> SynStatus {
    guard(|| {
        let out_ds = out(out_ds)?;
        let xs = array(values, n)?;
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(fail(SynStatus::InvalidArgument, "values must be finite"));
        }
        *out_ds = Box::into_raw(Box::new(SynDataset(Dataset::gaussian(xs.iter().copied(), Provenance::Real))));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn syn_dataset_free(ds: *mut SynDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` and `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_dataset_len(ds: *const SynDataset, len: *mut usize) -> SynStatus {
    guard(|| {
        *out(len)? = input(ds)?.0.len();
        Ok(())
    })
}

/// Copy scalar values into `buf` (capacity `cap`). `written` receives the
/// dataset length even when the buffer is too small.
///
/// # Safety
/// `buf` must hold `cap` doubles; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_dataset_values(
    ds: *const SynDataset,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SynStatus {
    guard(|| {
        let written = out(written)?;
        let xs = input(ds)?.0.scalars().ok_or_else(|| fail(SynStatus::Incompatible, "dataset is not scalar"))?;
        *written = xs.len();
        copy_out(&xs, buf, cap)
    })
}

unsafe fn copy_out(xs: &[f64], buf: *mut f64, cap: usize) -> Result<(), Fail> {
    if cap < xs.len() {
        return Err(fail(SynStatus::BufferTooSmall, "buffer too small"));
    }
    if !xs.is_empty() {
        if buf.is_null() {
            return Err(fail(SynStatus::NullPointer, "null buffer"));
        }
        ptr::copy_nonoverlapping(xs.as_ptr(), buf, xs.len());
    }
    Ok(())
}

/// Privacy level of the clamped Laplace mechanism on `[lower, upper]`.
///
/// # Safety
/// `epsilon` must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_epsilon(lower: f64, upper: f64, lambda: f64, epsilon: *mut f64) -> SynStatus {
    guard(|| {
        *out(epsilon)? = LaplaceMechanism::new(lower, upper, lambda)?.epsilon();
        Ok(())
    })
}

/// Release every record of `real` through the clamped Laplace mechanism.
///
/// # Safety
/// `real` and `out_ds` must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_privatise(
    real: *const SynDataset,
    lower: f64,
    upper: f64,
    lambda: f64,
    seed: u64,
    out_ds: *mut *mut SynDataset,
) -> SynStatus {
    guard(|| {
        let out_ds = out(out_ds)?;
        let mech = LaplaceMechanism::new(lower, upper, lambda)?;
        let z = privatise(&mech, &input(real)?.0, seed)?;
        *out_ds = Box::into_raw(Box::new(SynDataset(z)));
        Ok(())
    })
}

/// Loss of one scalar observation `z` under a (truncated-)Gaussian `(mu, sigma)`.
///
/// # Safety
/// `loss` and `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_loss_eval(
    loss: *const SynLoss,
    halfwidth: f64,
    mu: f64,
    sigma: f64,
    z: f64,
    value: *mut f64,
) -> SynStatus {
    guard(|| {
        let value = out(value)?;
        let spec = loss_spec(input(loss)?)?;
        if !(sigma > 0.0 && mu.is_finite() && z.is_finite()) {
            return Err(fail(SynStatus::InvalidArgument, "need finite mu, z and sigma > 0"));
        }
        *value = loss_eval(&spec, &tg_model(halfwidth), &Theta::gaussian(mu, sigma), &Observation::Scalar(z))?;
        Ok(())
    })
}

/// Sample the posterior given real and (optionally null) synthetic data.
///
/// # Safety
/// `real`, `opts` and `out_post` must be valid; `synth` may be null.
#[no_mangle]
pub unsafe extern "C" fn syn_fit(
    real: *const SynDataset,
    synth: *const SynDataset,
    opts: *const SynFitOptions,
    out_post: *mut *mut SynPosterior,
) -> SynStatus {
    guard(|| {
        let out_post = out(out_post)?;
        let real = &input(real)?.0;
        let o = input(opts)?;
        let empty = Dataset::empty(Task::Gaussian, Provenance::Synthetic);
        let synth = if synth.is_null() { &empty } else { &(*synth).0 };
        let model = tg_model(o.halfwidth);
        let prior = PriorSpec::nig(o.prior_shape, o.prior_rate, o.prior_mean, o.prior_scale);
        prior.validate()?;
        let mcmc = McmcConfig::gaussian().with_samples(o.chains, o.samples_per_chain, o.warmup);
        let samples = sample_posterior(
            &model,
            &prior,
            &LossSpec::LogLoss,
            real,
            &loss_spec(&o.loss_synth)?,
            synth,
            &mcmc,
            o.seed,
        )?;
        let predictive = if o.predictive_draws == 0 {
            PredictiveModel::new(&samples)
        } else {
            PredictiveModel::thinned(&samples, o.predictive_draws)
        };
        *out_post = Box::into_raw(Box::new(SynPosterior { samples, predictive }));
        Ok(())
    })
}

/// # Safety
/// `post` must come from [`syn_fit`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn syn_posterior_free(post: *mut SynPosterior) {
    if !post.is_null() {
        drop(Box::from_raw(post));
    }
}

/// Posterior means of `(mu, sigma)`; `written` receives the parameter count.
///
/// # Safety
/// `buf` must hold `cap` doubles; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_posterior_mean(
    post: *const SynPosterior,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SynStatus {
    guard(|| {
        let written = out(written)?;
        let m = input(post)?.samples.mean();
        *written = m.len();
        copy_out(&m, buf, cap)
    })
}

/// Posterior standard deviations, laid out like [`syn_posterior_mean`].
///
/// # Safety
/// As for [`syn_posterior_mean`].
#[no_mangle]
pub unsafe extern "C" fn syn_posterior_sd(
    post: *const SynPosterior,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> SynStatus {
    guard(|| {
        let written = out(written)?;
        let s = input(post)?.samples.sd();
        *written = s.len();
        copy_out(&s, buf, cap)
    })
}

/// Largest R-hat over parameters.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_posterior_max_rhat(post: *const SynPosterior, value: *mut f64) -> SynStatus {
    guard(|| {
        *out(value)? = input(post)?.samples.max_rhat();
        Ok(())
    })
}

/// KL divergence from `N(mu0, sigma0^2)` to the posterior predictive, by the
/// trapezoid rule with the given `step` (0 picks `sigma0 / 500`).
/// `deficit` (nullable) receives the `f0` mass where the predictive is zero.
///
/// # Safety
/// `post` and `value` must be valid; `deficit` may be null.
#[no_mangle]
pub unsafe extern "C" fn syn_kld(
    post: *const SynPosterior,
    mu0: f64,
    sigma0: f64,
    step: f64,
    value: *mut f64,
    deficit: *mut f64,
) -> SynStatus {
    guard(|| {
        let value = out(value)?;
        let p = &input(post)?.predictive;
        if !(sigma0 > 0.0 && mu0.is_finite()) {
            return Err(fail(SynStatus::InvalidArgument, "need finite mu0 and sigma0 > 0"));
        }
        let mut quad = Quadrature::default_for(mu0, sigma0);
        if step > 0.0 {
            quad.step = step;
        }
        let k = kld_to_f0(&F0Spec::KnownGaussian { mu0, sigma0 }, p, &quad)?;
        *value = k.value;
        if let Some(d) = deficit.as_mut() {
            *d = k.deficit_mass;
        }
        Ok(())
    })
}

/// Mean negative log predictive density over `test`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn syn_log_score(
    post: *const SynPosterior,
    test: *const SynDataset,
    value: *mut f64,
) -> SynStatus {
    guard(|| {
        let value = out(value)?;
        *value = log_score(&input(post)?.predictive, &input(test)?.0)?.value;
        Ok(())
    })
}

/// Wasserstein-1 distance between two empirical samples.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` doubles.
#[no_mangle]
pub unsafe extern "C" fn syn_wasserstein1(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    value: *mut f64,
) -> SynStatus {
    guard(|| {
        *out(value)? = wasserstein1(array(a, na)?, array(b, nb)?)?;
        Ok(())
    })
}

/// AUROC of `scores` against 0/1 `labels` (ties count one half).
///
/// # Safety
/// `scores` and `labels` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn syn_auroc(scores: *const f64, labels: *const u8, n: usize, value: *mut f64) -> SynStatus {
    guard(|| {
        let value = out(value)?;
        let labels: Vec<bool> = array(labels, n)?.iter().map(|&l| l != 0).collect();
        *value = auroc(array(scores, n)?, &labels)?;
        Ok(())
    })
}

/// `min(1, median(2 p_1, ..., 2 p_n))`.
///
/// # Safety
/// `ps` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn syn_aggregate_pvalues(ps: *const f64, n: usize, value: *mut f64) -> SynStatus {
    guard(|| {
        *out(value)? = aggregate_pvalues(array(ps, n)?)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests;
