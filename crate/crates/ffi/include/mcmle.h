#ifndef MCMLE_H
#define MCMLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum McmleStatus {
  MCMLE_STATUS_OK = 0,
  MCMLE_STATUS_NULL_POINTER = 1,
  MCMLE_STATUS_INVALID_ARGUMENT = 2,
  MCMLE_STATUS_DIMENSION_MISMATCH = 3,
  MCMLE_STATUS_NUMERICAL = 4,
  MCMLE_STATUS_IO = 5,
  MCMLE_STATUS_PANIC = 6,
} McmleStatus;

/**
 * Built-in sufficient statistics on a continuous box.
 */
typedef enum McmleFeature {
  MCMLE_FEATURE_COS = 0,
  MCMLE_FEATURE_ARCTAN = 1,
  MCMLE_FEATURE_RATIONAL = 2,
} McmleFeature;

/**
 * Combining function for mirror statistics.
 */
typedef enum McmleMirror {
  MCMLE_MIRROR_PRODUCT = 0,
  MCMLE_MIRROR_SUM = 1,
} McmleMirror;

/**
 * Observed rows plus a weighted reference sample, both already featurized.
 */
typedef struct McmleData McmleData;

/**
 * A penalized fit.
 */
typedef struct McmleFit McmleFit;

/**
 * A feature map together with the state space it is defined on.
 */
typedef struct McmleModel McmleModel;

/**
 * Scalar summary of a fit and the penalty it used.
 */
typedef struct McmleFitSummary {
  uintptr_t p;
  double objective;
  uintptr_t iterations;
  double kkt_residual;
  bool converged;
  uintptr_t support_size;
  double lambda1;
  double lambda2;
  double lambda_prime;
} McmleFitSummary;

/**
 * Score test, one-step estimate and interval for one coordinate.
 */
typedef struct McmleInference {
  uintptr_t target_index;
  double alpha0;
  double u_hat;
  double h_hat;
  double s_stat;
  double p_value;
  double alpha_hat;
  double alpha_tilde;
  double ci_lo;
  double ci_hi;
  bool ci_defined;
} McmleInference;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null after a success.
 *
 * The pointer stays valid until the next call into this library from the same thread.
 */
const char *mcmle_last_error(void);

/**
 * Builds a built-in feature map of dimension `p` on the box `[lo, hi]^1`.
 *
 * # Safety
 * `out_model` must be a valid pointer to writable storage for one handle.
 */
enum McmleStatus mcmle_model_new_builtin(enum McmleFeature feature,
                                         uintptr_t p,
                                         double lo,
                                         double hi,
                                         struct McmleModel **out_model);

/**
 * Builds an Ising model on `d` binary spins, with external fields when `with_fields` is set.
 *
 * # Safety
 * `out_model` must be a valid pointer to writable storage for one handle.
 */
enum McmleStatus mcmle_model_new_ising(uintptr_t d,
                                       bool with_fields,
                                       struct McmleModel **out_model);

/**
 * Parameter dimension of a model, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t mcmle_model_p(const struct McmleModel *model);

/**
 * State dimension of a model, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t mcmle_model_state_dim(const struct McmleModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void mcmle_model_free(struct McmleModel *model);

/**
 * Featurizes `n` observed states and `m` reference states.
 *
 * Both buffers are row-major with `state_dim` columns. `log_h[i]` is the log
 * density the i-th reference state was drawn from, up to a shared constant.
 *
 * # Safety
 * `observed` must hold `n * state_dim` doubles, `reference` and `log_h`
 * must hold `m * state_dim` and `m` doubles, and `out_data` must be writable.
 */
enum McmleStatus mcmle_data_new(const struct McmleModel *model,
                                const double *observed,
                                uintptr_t n,
                                const double *reference,
                                const double *log_h,
                                uintptr_t m,
                                struct McmleData **out_data);

/**
 * Number of observed rows, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
uintptr_t mcmle_data_n(const struct McmleData *data);

/**
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void mcmle_data_free(struct McmleData *data);

/**
 * Elastic-net fit at fixed penalties.
 *
 * # Safety
 * `data` must be a live handle and `out_fit` writable.
 */
enum McmleStatus mcmle_fit_fixed(const struct McmleData *data,
                                 double lambda1,
                                 double lambda2,
                                 double lambda_prime,
                                 struct McmleFit **out_fit);

/**
 * Elastic-net fit with penalties chosen by `folds`-fold cross-validation on the default grid.
 *
 * # Safety
 * `data` must be a live handle and `out_fit` writable.
 */
enum McmleStatus mcmle_fit_cv(const struct McmleData *data,
                              uintptr_t folds,
                              uint64_t seed,
                              struct McmleFit **out_fit);

/**
 * Copies the fit summary into `out_summary`.
 *
 * # Safety
 * `fit` must be a live handle and `out_summary` writable.
 */
enum McmleStatus mcmle_fit_summary(const struct McmleFit *fit, struct McmleFitSummary *out_summary);

/**
 * Copies the estimate into `buf`, which must have room for exactly `len == p` doubles.
 *
 * # Safety
 * `fit` must be a live handle and `buf` must point to `len` writable doubles.
 */
enum McmleStatus mcmle_fit_theta(const struct McmleFit *fit, double *buf, uintptr_t len);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void mcmle_fit_free(struct McmleFit *fit);

/**
 * Decorrelated score test of `theta[target] = alpha0` with a `100(1 - eta)%` interval.
 *
 * `lambda_prime` penalizes the decorrelation direction; pass the fit's own
 * value from [`McmleFitSummary`] when in doubt.
 *
 * # Safety
 * `data` and `fit` must be live handles and `out_result` writable.
 */
enum McmleStatus mcmle_infer(const struct McmleData *data,
                             const struct McmleFit *fit,
                             uintptr_t target,
                             double alpha0,
                             double lambda_prime,
                             double eta,
                             struct McmleInference *out_result);

/**
 * e-BH selection at level `q`; `selected_mask[j]` becomes 1 for rejected hypotheses.
 *
 * # Safety
 * `e_values` must hold `p` doubles, `selected_mask` must have `p` writable
 * bytes and `out_count` must be writable.
 */
enum McmleStatus mcmle_ebh_select(const double *e_values,
                                  uintptr_t p,
                                  double q,
                                  uint8_t *selected_mask,
                                  uintptr_t *out_count);

/**
 * Mirror-statistic selection from two independent normalized estimates.
 *
 * `out_threshold` receives the data-driven cutoff (infinite when nothing can be selected).
 *
 * # Safety
 * `t1` and `t2` must hold `p` doubles, `selected_mask` must have `p` writable
 * bytes, and `out_count` and `out_threshold` must be writable.
 */
enum McmleStatus mcmle_mirror_select(const double *t1,
                                     const double *t2,
                                     uintptr_t p,
                                     double q,
                                     enum McmleMirror mirror,
                                     uint8_t *selected_mask,
                                     uintptr_t *out_count,
                                     double *out_threshold);

/**
 * Runs the built-in numerical self-checks and reports how many passed.
 *
 * # Safety
 * `out_passed` and `out_total` must be writable.
 */
enum McmleStatus mcmle_verify(uint64_t seed, uintptr_t *out_passed, uintptr_t *out_total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCMLE_H */
