#ifndef TSALLIS_MERTON_H
#define TSALLIS_MERTON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum TmStatus {
  TM_STATUS_OK = 0,
  // Null pointer, bad UTF-8 or a too-small buffer.
  TM_STATUS_INVALID_ARGUMENT = 1,
  TM_STATUS_INVALID_PARAMETER = 2,
  // The query lies where the value function is infinite.
  TM_STATUS_ILL_POSED = 3,
  TM_STATUS_DIVERGENCE = 4,
  TM_STATUS_UNSUPPORTED = 5,
  TM_STATUS_SINGULAR_MATRIX = 6,
  TM_STATUS_CONFIG = 7,
  TM_STATUS_MOMENT_ORDER = 8,
  TM_STATUS_IO = 9,
  // A Rust panic was caught at the boundary.
  TM_STATUS_INTERNAL = 10,
} TmStatus;

typedef enum TmPolicyFamily {
  TM_POLICY_FAMILY_GAUSSIAN = 0,
  TM_POLICY_FAMILY_SEMICIRCLE = 1,
} TmPolicyFamily;

// Actor-critic training session.
typedef struct TmTrainer TmTrainer;

// Solved value function for one market and exploration spec.
typedef struct TmValueFunction TmValueFunction;

typedef struct TmMarket {
  double r;
  double mu;
  double sigma;
} TmMarket;

// `beta` is 1 (Shannon) or 3 (Tsallis).
typedef struct TmSpec {
  double p;
  double gamma;
  uint8_t beta;
} TmSpec;

// `tau` and `delta` are NaN when the value is finite everywhere.
typedef struct TmVerdict {
  bool well_posed_everywhere;
  double tau;
  double delta;
} TmVerdict;

// `radius` is 0 for the Gaussian family.
typedef struct TmPolicy {
  enum TmPolicyFamily family;
  double mean;
  double variance;
  double radius;
} TmPolicy;

typedef struct TmIterate {
  size_t iteration;
  double phi1;
  double phi2;
  double ml_loss;
  size_t reject_count;
} TmIterate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *tm_version(void);

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len - 1` bytes). Returns the full message
// length in bytes excluding the terminator.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t tm_last_error_message(char *buf, size_t len);

// Classical Merton fraction `(μ - r) / (σ² (1 - p))`.
//
// # Safety
// Pointers must be valid.
enum TmStatus tm_merton_strategy(const struct TmMarket *market, double p, double *out);

// Classical Merton value `V(t, w)` on horizon `horizon`.
//
// # Safety
// Pointers must be valid.
enum TmStatus tm_merton_value(const struct TmMarket *market,
                              double p,
                              double t,
                              double horizon,
                              double w,
                              double *out);

// Solves the exploratory value function. `step <= 0` selects the default
// RK4 step `horizon / 10^4`.
//
// # Safety
// Pointers must be valid; free the handle with [`tm_value_function_free`].
enum TmStatus tm_value_function_new(const struct TmMarket *market,
                                    const struct TmSpec *spec,
                                    double horizon,
                                    double step,
                                    struct TmValueFunction **out);

// # Safety
// `vf` must come from [`tm_value_function_new`] or be null.
void tm_value_function_free(struct TmValueFunction *vf);

// Well-posedness of the solved problem.
//
// # Safety
// Pointers must be valid.
enum TmStatus tm_value_function_verdict(const struct TmValueFunction *vf, struct TmVerdict *out);

// `f(t)`; [`TmStatus::IllPosed`] when `t <= tau`.
//
// # Safety
// Pointers must be valid.
enum TmStatus tm_value_function_f(const struct TmValueFunction *vf, double t, double *out);

// Exploratory value `V(t, w)`.
//
// # Safety
// Pointers must be valid.
enum TmStatus tm_value_function_value(const struct TmValueFunction *vf,
                                      double t,
                                      double w,
                                      double *out);

// Optimal exploratory policy at time `t`.
//
// # Safety
// Pointers must be valid.
enum TmStatus tm_value_function_policy(const struct TmValueFunction *vf,
                                       double t,
                                       struct TmPolicy *out);

// Exploration cost at time `t` (Shannon entropy, `p != 0`).
//
// # Safety
// Pointers must be valid.
enum TmStatus tm_value_function_cost(const struct TmValueFunction *vf, double t, double *out);

// Creates a trainer from a JSON training config (NUL-terminated UTF-8).
// Absent keys take the defaults.
//
// # Safety
// Pointers must be valid; free the handle with [`tm_trainer_free`].
enum TmStatus tm_trainer_new(const char *config_json, struct TmTrainer **out);

// # Safety
// `trainer` must come from [`tm_trainer_new`] or be null.
void tm_trainer_free(struct TmTrainer *trainer);

// Runs one iteration. `out` may be null.
//
// # Safety
// `trainer` must be a live handle.
enum TmStatus tm_trainer_step(struct TmTrainer *trainer, struct TmIterate *out);

// Runs the remaining iterations.
//
// # Safety
// `trainer` must be a live handle.
enum TmStatus tm_trainer_run(struct TmTrainer *trainer);

// Current parameters. `theta` receives up to `theta_len` critic weights;
// `theta_count` (if non-null) receives the total number.
//
// # Safety
// `theta` must be null or valid for `theta_len` doubles; other pointers
// must be valid or null.
enum TmStatus tm_trainer_params(const struct TmTrainer *trainer,
                                double *phi1,
                                double *phi2,
                                double *theta,
                                size_t theta_len,
                                size_t *theta_count);

// Completed iterations.
//
// # Safety
// Pointers must be valid.
enum TmStatus tm_trainer_iteration(const struct TmTrainer *trainer, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSALLIS_MERTON_H */
