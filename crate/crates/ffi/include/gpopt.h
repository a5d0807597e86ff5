#ifndef GPOPT_H
#define GPOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GpoptStatus {
  GPOPT_STATUS_OK = 0,
  GPOPT_STATUS_NULL_POINTER = 1,
  GPOPT_STATUS_INVALID_INPUT = 2,
  GPOPT_STATUS_IO = 3,
  GPOPT_STATUS_SCHEMA = 4,
  GPOPT_STATUS_NOT_POSITIVE_DEFINITE = 5,
  GPOPT_STATUS_NUMERICAL = 6,
  GPOPT_STATUS_BUFFER_TOO_SMALL = 7,
  GPOPT_STATUS_PANIC = 8,
} GpoptStatus;

typedef enum GpoptKernel {
  GPOPT_KERNEL_MATERN12 = 0,
  GPOPT_KERNEL_MATERN32 = 1,
  GPOPT_KERNEL_MATERN52 = 2,
  GPOPT_KERNEL_SQUARED_EXPONENTIAL = 3,
} GpoptKernel;

typedef enum GpoptFormulation {
  GPOPT_FORMULATION_REDUCED = 0,
  GPOPT_FORMULATION_FULL = 1,
} GpoptFormulation;

/**
 * Termination reason of a branch-and-bound run.
 */
typedef enum GpoptSolveStatus {
  GPOPT_SOLVE_STATUS_OPTIMAL = 0,
  GPOPT_SOLVE_STATUS_TIME_LIMIT = 1,
  GPOPT_SOLVE_STATUS_ITER_LIMIT = 2,
  GPOPT_SOLVE_STATUS_INFEASIBLE = 3,
} GpoptSolveStatus;

typedef enum GpoptAcquisition {
  /**
   * Expected improvement over `param` (the incumbent value).
   */
  GPOPT_ACQUISITION_EI = 0,
  /**
   * Probability of improvement over `param`.
   */
  GPOPT_ACQUISITION_PI = 1,
  /**
   * Lower confidence bound with weight `param`.
   */
  GPOPT_ACQUISITION_LCB = 2,
} GpoptAcquisition;

/**
 * Opaque trained model.
 */
typedef struct GpoptModel GpoptModel;

/**
 * Solver settings; obtain defaults from `gpopt_settings_default`.
 */
typedef struct GpoptSettings {
  double abs_tol;
  double rel_tol;
  double feas_tol;
  double max_time_s;
  uint64_t max_iter;
  uint64_t multistart_count;
  bool use_envelopes;
  uint64_t seed;
} GpoptSettings;

/**
 * Summary of a solve. Objective values are in minimization form.
 */
typedef struct GpoptResult {
  enum GpoptSolveStatus status;
  double ub;
  double lb;
  uint64_t iterations;
  double wall_time_s;
  /**
   * Whether an incumbent was found and written to the caller's buffer.
   */
  bool has_incumbent;
} GpoptResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated,
 * truncated to `len` bytes) and returns its full length in bytes
 * excluding the terminator. `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` writable bytes.
 */
size_t gpopt_last_error(char *buf, size_t len);

struct GpoptSettings gpopt_settings_default(void);

/**
 * The peaks test function.
 */
double gpopt_peaks(double x1, double x2);

/**
 * Loads a model document from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum GpoptStatus gpopt_model_load(const char *path, struct GpoptModel **out);

/**
 * Parses a model document from a JSON string.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum GpoptStatus gpopt_model_from_json(const char *json, struct GpoptModel **out);

/**
 * Writes the model document to a file.
 *
 * # Safety
 * `model` must come from a constructor of this library; `path` must be a
 * NUL-terminated string.
 */
enum GpoptStatus gpopt_model_save(const struct GpoptModel *model, const char *path);

/**
 * MAP training on `n` row-major samples of dimension `dim`, with input
 * bounds `lo[i] <= x_i <= hi[i]`.
 *
 * # Safety
 * `x` must hold `n * dim` values, `y` `n` values, `lo` and `hi` `dim`
 * values each; `out` must be valid for a write.
 */
enum GpoptStatus gpopt_model_train(const double *x,
                                   const double *y,
                                   size_t n,
                                   size_t dim,
                                   const double *lo,
                                   const double *hi,
                                   enum GpoptKernel kernel,
                                   size_t restarts,
                                   uint64_t seed,
                                   struct GpoptModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or come from a constructor of this library and not
 * have been freed.
 */
void gpopt_model_free(struct GpoptModel *model);

/**
 * Input dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t gpopt_model_dim(const struct GpoptModel *model);

/**
 * Posterior mean and variance at `x` (raw units, `dim` values).
 *
 * # Safety
 * `model` must be a live handle, `x` must hold `dim` values, and `mean`,
 * `variance` must be valid for writes.
 */
enum GpoptStatus gpopt_model_predict(const struct GpoptModel *model,
                                     const double *x,
                                     double *mean,
                                     double *variance);

/**
 * Minimizes (or, with `maximize`, maximizes) the posterior mean over the
 * model's input box. The incumbent's inputs are written to `x_out`.
 *
 * # Safety
 * Handles and pointers must be valid; `x_out` must hold `x_len` values.
 */
enum GpoptStatus gpopt_solve_mean(const struct GpoptModel *model,
                                  enum GpoptFormulation formulation,
                                  bool maximize,
                                  const struct GpoptSettings *settings,
                                  struct GpoptResult *result,
                                  double *x_out,
                                  size_t x_len);

/**
 * Optimizes an acquisition function: maximizes EI or PI over the incumbent
 * value `param`, or minimizes LCB with weight `param`.
 *
 * # Safety
 * Handles and pointers must be valid; `x_out` must hold `x_len` values.
 */
enum GpoptStatus gpopt_solve_acquisition(const struct GpoptModel *model,
                                         enum GpoptAcquisition kind,
                                         double param,
                                         const struct GpoptSettings *settings,
                                         struct GpoptResult *result,
                                         double *x_out,
                                         size_t x_len);

/**
 * Maximizes the mean of `objective` subject to
 * `mean_c + z * sqrt(var_c) <= c` for the model `constraint`.
 *
 * # Safety
 * Handles and pointers must be valid; `x_out` must hold `x_len` values.
 */
enum GpoptStatus gpopt_solve_chance(const struct GpoptModel *objective,
                                    const struct GpoptModel *constraint,
                                    double c,
                                    double z,
                                    const struct GpoptSettings *settings,
                                    struct GpoptResult *result,
                                    double *x_out,
                                    size_t x_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPOPT_H */
