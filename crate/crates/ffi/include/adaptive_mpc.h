#ifndef ADAPTIVE_MPC_H
#define ADAPTIVE_MPC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmpcEstimator {
  AMPC_ESTIMATOR_A_POSTERIORI = 0,
  AMPC_ESTIMATOR_A_PRIORI = 1,
} AmpcEstimator;

typedef enum AmpcShortening {
  AMPC_SHORTENING_CERTIFIED = 0,
  AMPC_SHORTENING_HEURISTIC_DECREMENT = 1,
} AmpcShortening;

typedef enum AmpcStatus {
  AMPC_STATUS_OK = 0,
  AMPC_STATUS_NULL_POINTER = 1,
  AMPC_STATUS_INVALID_ARGUMENT = 2,
  AMPC_STATUS_BUFFER_TOO_SMALL = 3,
  AMPC_STATUS_INTEGRATION_FAILURE = 4,
  AMPC_STATUS_MAX_ITERATIONS = 5,
  AMPC_STATUS_NON_FINITE_OBJECTIVE = 6,
  AMPC_STATUS_EQUILIBRIUM_REACHED = 7,
  AMPC_STATUS_HORIZON_CAP_REACHED = 8,
  AMPC_STATUS_ENUMERATION_TOO_LARGE = 9,
  AMPC_STATUS_SINGULAR_INNOVATION = 10,
  AMPC_STATUS_NO_FEASIBLE_GAMMA = 11,
  AMPC_STATUS_PANIC = 99,
} AmpcStatus;

/**
 * How a closed loop ended.
 */
typedef enum AmpcTermination {
  AMPC_TERMINATION_COST_THRESHOLD = 0,
  AMPC_TERMINATION_STEP_LIMIT = 1,
  AMPC_TERMINATION_ERROR = 2,
} AmpcTermination;

/**
 * Opaque system model.
 */
typedef struct AmpcModel AmpcModel;

/**
 * Opaque closed-loop trace.
 */
typedef struct AmpcTrace AmpcTrace;

typedef struct AmpcSolverOptions {
  double tolerance;
  size_t max_iterations;
  double penalty_weight;
  double fd_step;
} AmpcSolverOptions;

typedef struct AmpcAdaptationConfig {
  double alpha_bar;
  size_t n_min;
  size_t n_max;
  size_t n0;
  size_t n_hat;
  enum AmpcEstimator estimator;
  enum AmpcShortening shortening;
  double equilibrium_threshold;
} AmpcAdaptationConfig;

typedef struct AmpcStopRule {
  double cost_threshold;
  size_t max_steps;
} AmpcStopRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *ampc_last_error(void);

struct AmpcSolverOptions ampc_solver_options_default(void);

struct AmpcAdaptationConfig ampc_adaptation_config_default(void);

struct AmpcStopRule ampc_stop_rule_default(void);

/**
 * The crane benchmark sampled with period `sampling_period` and
 * integrator tolerance `tolerance`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AmpcStatus ampc_model_crane(double sampling_period, double tolerance, struct AmpcModel **out);

/**
 * Linear system `x⁺ = Ax + Bu` with stage cost `x'Qx + u'Ru`. Matrices are
 * row-major. `u_lo` and `u_hi` may be null for unbounded controls.
 *
 * # Safety
 * Non-null pointers must reference arrays of the documented sizes.
 */
enum AmpcStatus ampc_model_lq(size_t nx,
                              size_t nu,
                              const double *a,
                              const double *b,
                              const double *q,
                              const double *r,
                              const double *u_lo,
                              const double *u_hi,
                              struct AmpcModel **out);

/**
 * # Safety
 * `model` must come from an `ampc_model_*` constructor and not be used
 * afterwards. Null is ignored.
 */
void ampc_model_free(struct AmpcModel *model);

/**
 * # Safety
 * `model` must be a live handle; out-pointers must be valid.
 */
enum AmpcStatus ampc_model_dims(const struct AmpcModel *model,
                                size_t *state_dim,
                                size_t *control_dim);

/**
 * Solves the `horizon`-stage problem at `x0` and writes `V_N(x0)` and the
 * `horizon · nu` optimal controls (stage-major). `options` may be null.
 *
 * # Safety
 * `x0` must hold `nx` values and `controls` `capacity` writable values.
 */
enum AmpcStatus ampc_solve(const struct AmpcModel *model,
                           const double *x0,
                           size_t nx,
                           size_t horizon,
                           const struct AmpcSolverOptions *options,
                           double *value,
                           double *controls,
                           size_t capacity);

/**
 * A priori suboptimality `α(γ, N, N₀)`; `valid` is set to 1 when the
 * estimate certifies stability.
 *
 * # Safety
 * Out-pointers must be valid.
 */
enum AmpcStatus ampc_a_priori_alpha(double gamma,
                                    size_t n,
                                    size_t n0,
                                    double *alpha,
                                    int32_t *valid);

/**
 * Largest `γ` with `α(γ, N, N₀) ≥ alpha_bar`.
 *
 * # Safety
 * `gamma` must be valid.
 */
enum AmpcStatus ampc_gamma_bar(double alpha_bar, size_t n, size_t n0, double *gamma);

/**
 * Fixed-horizon closed loop. `options` and `stop` may be null for
 * defaults. A failure inside the loop still yields a trace whose
 * termination is `Error`.
 *
 * # Safety
 * `x0` must hold `nx` values; `out` must be valid.
 */
enum AmpcStatus ampc_run_fixed(const struct AmpcModel *model,
                               const double *x0,
                               size_t nx,
                               size_t horizon,
                               const struct AmpcSolverOptions *options,
                               const struct AmpcStopRule *stop,
                               struct AmpcTrace **out);

/**
 * Adaptive-horizon closed loop starting at `initial_horizon` (0 for the
 * smallest admissible horizon).
 *
 * # Safety
 * `x0` must hold `nx` values; `config` and `out` must be valid.
 */
enum AmpcStatus ampc_run_adaptive(const struct AmpcModel *model,
                                  const double *x0,
                                  size_t nx,
                                  const struct AmpcAdaptationConfig *config,
                                  size_t initial_horizon,
                                  const struct AmpcSolverOptions *options,
                                  const struct AmpcStopRule *stop,
                                  struct AmpcTrace **out);

/**
 * # Safety
 * `trace` must come from `ampc_run_*` and not be used afterwards. Null is
 * ignored.
 */
void ampc_trace_free(struct AmpcTrace *trace);

/**
 * Number of records, accumulated cost, largest horizon and termination.
 * When the loop ended in an error, `error` receives its status and
 * [`ampc_last_error`] its message; otherwise `error` is `Ok`.
 *
 * # Safety
 * `trace` must be a live handle; out-pointers must be valid.
 */
enum AmpcStatus ampc_trace_summary(const struct AmpcTrace *trace,
                                   size_t *len,
                                   double *accumulated_cost,
                                   size_t *n_star,
                                   enum AmpcTermination *termination,
                                   enum AmpcStatus *error);

/**
 * Scalar data of record `index`. `alpha` is NaN where no estimate was
 * made; `reused` is 1 for steps that replayed stored controls.
 *
 * # Safety
 * `trace` must be a live handle; out-pointers must be valid.
 */
enum AmpcStatus ampc_trace_step(const struct AmpcTrace *trace,
                                size_t index,
                                size_t *horizon,
                                double *stage_cost,
                                double *value,
                                double *alpha,
                                int32_t *reused);

/**
 * Copies the state of record `index` into `buf`.
 *
 * # Safety
 * `buf` must hold `capacity` writable values.
 */
enum AmpcStatus ampc_trace_state(const struct AmpcTrace *trace,
                                 size_t index,
                                 double *buf,
                                 size_t capacity);

/**
 * Copies the applied control of record `index` into `buf`.
 *
 * # Safety
 * `buf` must hold `capacity` writable values.
 */
enum AmpcStatus ampc_trace_control(const struct AmpcTrace *trace,
                                   size_t index,
                                   double *buf,
                                   size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTIVE_MPC_H */
