#ifndef RESILIENT_GD_H
#define RESILIENT_GD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  RGD_STATUS_OK = 0,
  RGD_STATUS_NULL_POINTER = 1,
  RGD_STATUS_INVALID_ARGUMENT = 2,
  RGD_STATUS_BUFFER_TOO_SMALL = 3,
  RGD_STATUS_DIMENSION_MISMATCH = 4,
  RGD_STATUS_RANK_DEFICIENT = 5,
  RGD_STATUS_BUDGET_INVALID = 6,
  RGD_STATUS_NON_POSITIVE_MARGIN = 7,
  RGD_STATUS_STEP_TOO_LARGE = 8,
  RGD_STATUS_INSUFFICIENT_REPORTS = 9,
  RGD_STATUS_ENUMERATION_TOO_LARGE = 10,
  RGD_STATUS_INVALID_PROBLEM = 11,
  RGD_STATUS_INVALID_CONFIG = 12,
  RGD_STATUS_IO = 13,
  RGD_STATUS_PARSE = 14,
  RGD_STATUS_INTERNAL = 15,
} RgdStatus;

/**
 * Opaque handle to a regression problem.
 */
typedef struct RgdProblem RgdProblem;

/**
 * Opaque handle to a finished run.
 */
typedef struct RgdTrajectory RgdTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * success. The pointer stays valid until the next call on the same thread.
 */
const char *rgd_last_error_message(void);

/**
 * Loads a bundled dataset by name (e.g. `"paper-regression"`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
RgdStatus rgd_problem_from_fixture(const char *name, RgdProblem **out);

/**
 * Loads a problem from a CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
RgdStatus rgd_problem_from_csv(const char *path, RgdProblem **out);

/**
 * Builds a problem from `n` agents. Agent `i` owns the next
 * `rows_per_agent[i]` rows of the row-major `total × d` matrix `rows` and
 * the matching entries of `responses`, where `total` is the sum of
 * `rows_per_agent`.
 *
 * # Safety
 * `rows_per_agent` must hold `n` values, `rows` `total · d` values and
 * `responses` `total` values; `out` must be writable.
 */
RgdStatus rgd_problem_from_arrays(size_t n,
                                  size_t d,
                                  const size_t *rows_per_agent,
                                  const double *rows,
                                  const double *responses,
                                  RgdProblem **out);

/**
 * Releases a problem. Null is ignored.
 *
 * # Safety
 * `problem` must come from an `rgd_problem_from_*` call and not be used
 * afterwards.
 */
void rgd_problem_free(RgdProblem *problem);

/**
 * Number of agents, or 0 for null.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t rgd_problem_n(const RgdProblem *problem);

/**
 * Parameter dimension, or 0 for null.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t rgd_problem_dim(const RgdProblem *problem);

/**
 * Minimizer of the summed cost of the agents in `subset` (0-based).
 *
 * # Safety
 * `subset` must hold `subset_len` values and `out_x` `out_len` values.
 */
RgdStatus rgd_least_squares_min(const RgdProblem *problem,
                                const size_t *subset,
                                size_t subset_len,
                                double *out_x,
                                size_t out_len);

/**
 * Smallest `ε` for which the problem is `(f, r; ε)`-redundant.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
RgdStatus rgd_compute_epsilon(const RgdProblem *problem, size_t f, size_t r, double *out);

/**
 * Lipschitz constant `μ` of the agents' gradients.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
RgdStatus rgd_mu(const RgdProblem *problem, double *out);

/**
 * Strong convexity constant `γ` for `f` faulty agents.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
RgdStatus rgd_gamma(const RgdProblem *problem, size_t f, double *out);

/**
 * Tabulated convergence radius `D*` for `(f, r)`.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
RgdStatus rgd_dstar(const RgdProblem *problem, size_t f, size_t r, double *out);

/**
 * Comparative gradient elimination over `m` gradients of length `d`
 * stored row-major in `gradients`: drops the `f` largest norms and sums
 * the rest into `out` (length `d`).
 *
 * # Safety
 * `gradients` must hold `m · d` values and `out` `d` values.
 */
RgdStatus rgd_cge_filter(const double *gradients, size_t m, size_t d, size_t f, double *out);

/**
 * Runs a simulation described by a JSON config (the CLI's `run` format).
 * Relative dataset paths resolve against `base_dir`, or the working
 * directory when `base_dir` is null.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string, `base_dir` null or
 * NUL-terminated, and `out` writable.
 */
RgdStatus rgd_run_json(const char *config_json, const char *base_dir, RgdTrajectory **out);

/**
 * Releases a trajectory. Null is ignored.
 *
 * # Safety
 * `traj` must come from [`rgd_run_json`] and not be used afterwards.
 */
void rgd_trajectory_free(RgdTrajectory *traj);

/**
 * Number of recorded iterates (`T + 1`), or 0 for null.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t rgd_trajectory_len(const RgdTrajectory *traj);

/**
 * Parameter dimension, or 0 for null.
 *
 * # Safety
 * `traj` must be null or a live handle.
 */
size_t rgd_trajectory_dim(const RgdTrajectory *traj);

/**
 * Copies iterate `x^t` into `out_x`.
 *
 * # Safety
 * `traj` must be a live handle and `out_x` hold `out_len` values.
 */
RgdStatus rgd_trajectory_point(const RgdTrajectory *traj, size_t t, double *out_x, size_t out_len);

/**
 * Distance from `x^t` to the honest minimizer.
 *
 * # Safety
 * `traj` must be a live handle and `out` writable.
 */
RgdStatus rgd_trajectory_dist(const RgdTrajectory *traj, size_t t, double *out);

/**
 * Copies the honest minimizer `x_H` into `out_x`.
 *
 * # Safety
 * `traj` must be a live handle and `out_x` hold `out_len` values.
 */
RgdStatus rgd_trajectory_honest_minimizer(const RgdTrajectory *traj, double *out_x, size_t out_len);

/**
 * Writes the trajectory CSV (same format as the CLI) to `path`.
 *
 * # Safety
 * `traj` must be a live handle and `path` NUL-terminated.
 */
RgdStatus rgd_trajectory_write_csv(const RgdTrajectory *traj, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RESILIENT_GD_H */
