#ifndef SYNLEARN_H
#define SYNLEARN_H

/* Generated by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SynLossKind {
  SYN_LOSS_KIND_LOG = 0,
  SYN_LOSS_KIND_WEIGHTED = 1,
  SYN_LOSS_KIND_BETA_D = 2,
} SynLossKind;

typedef enum SynStatus {
  SYN_STATUS_OK = 0,
  SYN_STATUS_NULL_POINTER = 1,
  SYN_STATUS_INVALID_ARGUMENT = 2,
  SYN_STATUS_IO = 3,
  SYN_STATUS_PARSE = 4,
  SYN_STATUS_INCOMPATIBLE = 5,
  SYN_STATUS_INSUFFICIENT_DATA = 6,
  // Sampler failure, boundary parameter or too-narrow grid.
  SYN_STATUS_NUMERICAL = 7,
  SYN_STATUS_BUFFER_TOO_SMALL = 8,
  SYN_STATUS_PANIC = 99,
} SynStatus;

typedef enum SynTask {
  SYN_TASK_GAUSSIAN = 0,
  SYN_TASK_LOGISTIC = 1,
} SynTask;

typedef struct SynDataset SynDataset;

typedef struct SynPosterior SynPosterior;

// `w` is used by `Weighted`; `beta` and `w_beta` by `BetaD`.
typedef struct SynLoss {
  enum SynLossKind kind;
  double w;
  double beta;
  double w_beta;
} SynLoss;

// Options for a scalar (truncated-)Gaussian fit with a normal-inverse-gamma
// prior. A non-finite or non-positive `halfwidth` means no truncation.
typedef struct SynFitOptions {
  double halfwidth;
  double prior_shape;
  double prior_rate;
  double prior_mean;
  double prior_scale;
  struct SynLoss loss_synth;
  size_t chains;
  size_t samples_per_chain;
  size_t warmup;
  // Draws kept for the predictive (0 keeps all).
  size_t predictive_draws;
  uint64_t seed;
} SynFitOptions;

// Message for the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *syn_last_error(void);

// Library version as a static NUL-terminated string.
const char *syn_version(void);

// Load a CSV dataset in the format written by the CLI.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SynStatus syn_dataset_load_csv(const char *path,
                                    enum SynTask task,
                                    struct SynDataset **out_ds);

// Build a scalar dataset from `n` values.
//
// # Safety
// `values` must point to `n` doubles; `out` must be valid.
enum SynStatus syn_dataset_from_values(const double *values, size_t n, struct SynDataset **out_ds);

// # Safety
// `ds` must come from this library and not be freed twice. Null is ignored.
void syn_dataset_free(struct SynDataset *ds);

// # Safety
// `ds` and `len` must be valid.
enum SynStatus syn_dataset_len(const struct SynDataset *ds, size_t *len);

// Copy scalar values into `buf` (capacity `cap`). `written` receives the
// dataset length even when the buffer is too small.
//
// # Safety
// `buf` must hold `cap` doubles; the other pointers must be valid.
enum SynStatus syn_dataset_values(const struct SynDataset *ds,
                                  double *buf,
                                  size_t cap,
                                  size_t *written);

// Privacy level of the clamped Laplace mechanism on `[lower, upper]`.
//
// # Safety
// `epsilon` must be valid.
enum SynStatus syn_epsilon(double lower, double upper, double lambda, double *epsilon);

// Release every record of `real` through the clamped Laplace mechanism.
//
// # Safety
// `real` and `out_ds` must be valid.
enum SynStatus syn_privatise(const struct SynDataset *real,
                             double lower,
                             double upper,
                             double lambda,
                             uint64_t seed,
                             struct SynDataset **out_ds);

// Loss of one scalar observation `z` under a (truncated-)Gaussian `(mu, sigma)`.
//
// # Safety
// `loss` and `value` must be valid.
enum SynStatus syn_loss_eval(const struct SynLoss *loss,
                             double halfwidth,
                             double mu,
                             double sigma,
                             double z,
                             double *value);

// Sample the posterior given real and (optionally null) synthetic data.
//
// # Safety
// `real`, `opts` and `out_post` must be valid; `synth` may be null.
enum SynStatus syn_fit(const struct SynDataset *real,
                       const struct SynDataset *synth,
                       const struct SynFitOptions *opts,
                       struct SynPosterior **out_post);

// # Safety
// `post` must come from [`syn_fit`] and not be freed twice. Null is ignored.
void syn_posterior_free(struct SynPosterior *post);

// Posterior means of `(mu, sigma)`; `written` receives the parameter count.
//
// # Safety
// `buf` must hold `cap` doubles; the other pointers must be valid.
enum SynStatus syn_posterior_mean(const struct SynPosterior *post,
                                  double *buf,
                                  size_t cap,
                                  size_t *written);

// Posterior standard deviations, laid out like [`syn_posterior_mean`].
//
// # Safety
// As for [`syn_posterior_mean`].
enum SynStatus syn_posterior_sd(const struct SynPosterior *post,
                                double *buf,
                                size_t cap,
                                size_t *written);

// Largest R-hat over parameters.
//
// # Safety
// Pointers must be valid.
enum SynStatus syn_posterior_max_rhat(const struct SynPosterior *post, double *value);

// KL divergence from `N(mu0, sigma0^2)` to the posterior predictive, by the
// trapezoid rule with the given `step` (0 picks `sigma0 / 500`).
// `deficit` (nullable) receives the `f0` mass where the predictive is zero.
//
// # Safety
// `post` and `value` must be valid; `deficit` may be null.
enum SynStatus syn_kld(const struct SynPosterior *post,
                       double mu0,
                       double sigma0,
                       double step,
                       double *value,
                       double *deficit);

// Mean negative log predictive density over `test`.
//
// # Safety
// Pointers must be valid.
enum SynStatus syn_log_score(const struct SynPosterior *post,
                             const struct SynDataset *test,
                             double *value);

// Wasserstein-1 distance between two empirical samples.
//
// # Safety
// `a` and `b` must hold `na` and `nb` doubles.
enum SynStatus syn_wasserstein1(const double *a,
                                size_t na,
                                const double *b,
                                size_t nb,
                                double *value);

// AUROC of `scores` against 0/1 `labels` (ties count one half).
//
// # Safety
// `scores` and `labels` must hold `n` elements.
enum SynStatus syn_auroc(const double *scores, const uint8_t *labels, size_t n, double *value);

// `min(1, median(2 p_1, ..., 2 p_n))`.
//
// # Safety
// `ps` must hold `n` doubles.
enum SynStatus syn_aggregate_pvalues(const double *ps, size_t n, double *value);

#endif  /* SYNLEARN_H */
