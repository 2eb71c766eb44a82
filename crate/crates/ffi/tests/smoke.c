#include <math.h>
#include <stdio.h>

#include "synlearn.h"

#define CHECK(call)                                                          \
  do {                                                                       \
    SynStatus s_ = (call);                                                   \
    if (s_ != SYN_STATUS_OK) {                                               \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, syn_last_error());   \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(void) {
  double xs[40];
  for (int i = 0; i < 40; i++) xs[i] = 1.0 + 0.05 * (i % 20) - 0.5;

  SynDataset *real = NULL, *synth = NULL;
  CHECK(syn_dataset_from_values(xs, 40, &real));
  CHECK(syn_privatise(real, -3.0, 3.0, 1.0, 7, &synth));

  double eps;
  CHECK(syn_epsilon(-3.0, 3.0, 1.0, &eps));

  SynFitOptions opts = {
      .halfwidth = 3.0,
      .prior_shape = 2.0, .prior_rate = 1.0, .prior_mean = 0.0, .prior_scale = 10.0,
      .loss_synth = {.kind = SYN_LOSS_KIND_BETA_D, .beta = 0.5, .w_beta = 1.25},
      .chains = 2, .samples_per_chain = 400, .warmup = 200,
      .predictive_draws = 100, .seed = 3,
  };
  SynPosterior *post = NULL;
  CHECK(syn_fit(real, synth, &opts, &post));

  double mean[2];
  size_t n = 0;
  CHECK(syn_posterior_mean(post, mean, 2, &n));
  double kld;
  CHECK(syn_kld(post, 1.0, 0.3, 0.0, &kld, NULL));

  /* errors carry a message */
  if (syn_epsilon(1.0, 0.0, 1.0, &eps) != SYN_STATUS_INVALID_ARGUMENT || syn_last_error() == NULL) return 2;

  printf("epsilon=%g mu=%.3f sigma=%.3f kld=%.4f\n", 6.0, mean[0], mean[1], kld);
  syn_posterior_free(post);
  syn_dataset_free(synth);
  syn_dataset_free(real);
  return (n == 2 && isfinite(kld) && fabs(mean[0] - 1.0) < 0.5) ? 0 : 3;
}
