/* C interface to the adalab optimization laboratory. */

#ifndef ADALAB_H
#define ADALAB_H

#pragma once

/* Generated with cbindgen:0.27.0 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Scalar noise law of the multiplicative oracle.
typedef enum AdalabNoiseDist {
  ADALAB_NOISE_DIST_RADEMACHER = 0,
  ADALAB_NOISE_DIST_GAUSSIAN = 1,
} AdalabNoiseDist;

// Status code of every fallible call.
typedef enum AdalabStatus {
  ADALAB_STATUS_OK = 0,
  ADALAB_STATUS_NULL_POINTER = 1,
  ADALAB_STATUS_INVALID_ARGUMENT = 2,
  ADALAB_STATUS_DIMENSION_MISMATCH = 3,
  ADALAB_STATUS_NON_FINITE = 4,
  ADALAB_STATUS_INCOMPATIBLE = 5,
  ADALAB_STATUS_TRAJECTORY_ABORTED = 6,
  ADALAB_STATUS_IO = 7,
  ADALAB_STATUS_CONFIG_ERROR = 8,
  ADALAB_STATUS_VERDICT_FAILURE = 9,
  ADALAB_STATUS_INTERNAL = 10,
} AdalabStatus;

typedef struct AdalabAdagrad AdalabAdagrad;

typedef struct AdalabObjective AdalabObjective;

typedef struct AdalabOracle AdalabOracle;

typedef struct AdalabRmsprop AdalabRmsprop;

typedef struct AdalabRng AdalabRng;

typedef struct AdalabSgd AdalabSgd;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the library; static storage, do not free.
const char *adalab_version(void);

// Message of the most recent failure on this thread. Valid until the next
// failing call from the same thread; do not free.
const char *adalab_last_error_message(void);

// Creates a deterministic random stream for `(seed, stream_id)`.
struct AdalabRng *adalab_rng_new(uint64_t seed, uint64_t stream_id);

void adalab_rng_free(struct AdalabRng *rng);

// Fills `out[0..n]` with i.i.d. standard normal draws.
enum AdalabStatus adalab_rng_standard_normal(struct AdalabRng *rng, double *out, size_t n);

// Quadratic objective with the given positive eigenvalues; `minimizer` may
// be null for the origin.
struct AdalabObjective *adalab_objective_quadratic(const double *eigenvalues,
                                                   size_t dim,
                                                   const double *minimizer);

// Separable non-convex well `sum_i [x_i^2/2 + a (1 + cos(b x_i))]`
// (requires `a b^2 > 1`).
struct AdalabObjective *adalab_objective_cosine_well(size_t dim, double a, double b);

// Ridge-regularized logistic loss over a reproducible synthetic dataset.
struct AdalabObjective *adalab_objective_logistic_synthetic(size_t n_samples,
                                                            size_t dim,
                                                            double noise_rate,
                                                            double ridge,
                                                            uint64_t data_seed);

void adalab_objective_free(struct AdalabObjective *obj);

// Dimension of the objective (0 for a null handle).
size_t adalab_objective_dim(const struct AdalabObjective *obj);

// Declared upper bound on the gradient's Lipschitz constant.
enum AdalabStatus adalab_objective_lipschitz_bound(const struct AdalabObjective *obj, double *out);

// Declared lower bound on the objective infimum.
enum AdalabStatus adalab_objective_infimum_bound(const struct AdalabObjective *obj, double *out);

enum AdalabStatus adalab_objective_eval(const struct AdalabObjective *obj,
                                        const double *theta,
                                        size_t dim,
                                        double *out);

// Writes the analytic gradient into `out[0..dim]`.
enum AdalabStatus adalab_objective_grad(const struct AdalabObjective *obj,
                                        const double *theta,
                                        size_t dim,
                                        double *out);

// `G = grad + sigma * z` with standard normal `z`; declared energy bound
// `(1, sigma^2 dim)`.
struct AdalabOracle *adalab_oracle_additive_gaussian(double sigma, size_t dim);

// `G = (1 + gamma u) grad` with scalar unit-variance `u`.
struct AdalabOracle *adalab_oracle_multiplicative(double gamma, enum AdalabNoiseDist dist);

// Uniform mini-batch oracle over a finite-sum objective.
struct AdalabOracle *adalab_oracle_mini_batch(size_t batch_size, bool replacement);

void adalab_oracle_free(struct AdalabOracle *oracle);

// One stochastic gradient draw into `out[0..dim]`.
enum AdalabStatus adalab_oracle_sample(const struct AdalabOracle *oracle,
                                       const struct AdalabObjective *obj,
                                       const double *theta,
                                       size_t dim,
                                       struct AdalabRng *rng,
                                       double *out);

struct AdalabAdagrad *adalab_adagrad_new(const double *theta, size_t dim, double alpha0, double s0);

void adalab_adagrad_free(struct AdalabAdagrad *h);

// Applies one update with the stochastic gradient `g[0..dim]`.
enum AdalabStatus adalab_adagrad_step(struct AdalabAdagrad *h, const double *g, size_t dim);

// Copies the current iterate into `out[0..dim]`.
enum AdalabStatus adalab_adagrad_theta(const struct AdalabAdagrad *h, double *out, size_t dim);

// Current squared-draw accumulator value.
enum AdalabStatus adalab_adagrad_accumulator(const struct AdalabAdagrad *h, double *out);

// Multiplier applied to the next draw given the current accumulator.
enum AdalabStatus adalab_adagrad_effective_stepsize(const struct AdalabAdagrad *h, double *out);

// Number of completed steps.
enum AdalabStatus adalab_adagrad_step_count(const struct AdalabAdagrad *h, uint64_t *out);

struct AdalabRmsprop *adalab_rmsprop_new(const double *theta,
                                         size_t dim,
                                         double beta1,
                                         double eps,
                                         double v_init);

void adalab_rmsprop_free(struct AdalabRmsprop *h);

enum AdalabStatus adalab_rmsprop_step(struct AdalabRmsprop *h, const double *g, size_t dim);

enum AdalabStatus adalab_rmsprop_theta(const struct AdalabRmsprop *h, double *out, size_t dim);

// Copies the per-coordinate second-moment state into `out[0..dim]`.
enum AdalabStatus adalab_rmsprop_scaling(const struct AdalabRmsprop *h, double *out, size_t dim);

// Per-coordinate multiplier for the pending step.
enum AdalabStatus adalab_rmsprop_effective_stepsize(const struct AdalabRmsprop *h,
                                                    double *out,
                                                    size_t dim);

// Index of the step the state is about to produce (1 before the first step).
enum AdalabStatus adalab_rmsprop_step_index(const struct AdalabRmsprop *h, uint64_t *out);

struct AdalabSgd *adalab_sgd_new(const double *theta, size_t dim, double c, double offset);

void adalab_sgd_free(struct AdalabSgd *h);

enum AdalabStatus adalab_sgd_step(struct AdalabSgd *h, const double *g, size_t dim);

enum AdalabStatus adalab_sgd_theta(const struct AdalabSgd *h, double *out, size_t dim);

// Runs a full configured ensemble, writing CSVs and the manifest.
// `jobs = 0` uses all logical cores.
enum AdalabStatus adalab_run_config_file(const char *path, size_t jobs);

// Certifies the configured objective/oracle pair; `VerdictFailure` when an
// empirical check contradicts a declaration.
enum AdalabStatus adalab_check_config_file(const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADALAB_H */
