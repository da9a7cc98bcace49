#ifndef EPISOC_H
#define EPISOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EpisocStatus {
  EPISOC_STATUS_OK = 0,
  EPISOC_STATUS_NULL_POINTER = 1,
  EPISOC_STATUS_INVALID_ARGUMENT = 2,
  EPISOC_STATUS_PARSE = 3,
  EPISOC_STATUS_NUMERICAL = 4,
  EPISOC_STATUS_CALIBRATION = 5,
  EPISOC_STATUS_IO = 6,
  EPISOC_STATUS_PANIC = 7,
} EpisocStatus;

typedef enum EpisocLpStatus {
  EPISOC_LP_STATUS_OPTIMAL = 0,
  EPISOC_LP_STATUS_UNBOUNDED = 1,
  EPISOC_LP_STATUS_INFEASIBLE = 2,
} EpisocLpStatus;

typedef enum EpisocPolicy {
  EPISOC_POLICY_SOC = 0,
  EPISOC_POLICY_TRIVIAL = 1,
  EPISOC_POLICY_TRIVIAL_FRONT_LOADED = 2,
  EPISOC_POLICY_MOST_NEIGHBORS = 3,
  EPISOC_POLICY_MOST_NEIGHBORS_FRONT_LOADED = 4,
  EPISOC_POLICY_LEAST_NEIGHBORS = 5,
  EPISOC_POLICY_LEAST_NEIGHBORS_FRONT_LOADED = 6,
  EPISOC_POLICY_SPECTRAL_RADIUS = 7,
} EpisocPolicy;

typedef enum EpisocEventKind {
  EPISOC_EVENT_KIND_INFECTION = 0,
  EPISOC_EVENT_KIND_RECOVERY = 1,
  EPISOC_EVENT_KIND_TREATMENT_START = 2,
} EpisocEventKind;

// Opaque contact network.
typedef struct EpisocNetwork EpisocNetwork;

// Opaque result of one simulated run.
typedef struct EpisocRun EpisocRun;

// Disease rates.
typedef struct EpisocModelParams {
  double beta;
  double gamma;
  double delta;
  double rho;
} EpisocModelParams;

// Control weights, uniform across nodes.
typedef struct EpisocControlParams {
  double q_lambda;
  double q_x;
  double eta;
} EpisocControlParams;

// Policy constants for uniform control weights.
typedef struct EpisocPolicyConstants {
  double k1;
  double k2;
  double k3;
  double k4;
  double k5;
} EpisocPolicyConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread; never null.
const char *episoc_last_error(void);

// Bundled 49-node US-states contiguity graph.
//
// # Safety
// `out` must be valid for writes.
enum EpisocStatus episoc_network_us_states(struct EpisocNetwork **out);

// Parses a whitespace-separated edge list (one edge per line, `#`
// comments; integer tokens are node indices, anything else a label).
//
// # Safety
// `text` must be a NUL-terminated string and `out` valid for writes.
enum EpisocStatus episoc_network_from_edge_list(const char *text, struct EpisocNetwork **out);

// # Safety
// `net` must be null or a handle from this library not yet freed.
void episoc_network_free(struct EpisocNetwork *net);

// # Safety
// `net` must be null or a live handle.
uintptr_t episoc_network_node_count(const struct EpisocNetwork *net);

// # Safety
// `net` must be null or a live handle.
uintptr_t episoc_network_edge_count(const struct EpisocNetwork *net);

// Largest adjacency eigenvalue.
//
// # Safety
// `net` must be a live handle and `out` valid for writes.
enum EpisocStatus episoc_network_spectral_radius(const struct EpisocNetwork *net, double *out);

// Solves `min cᵀx s.t. Gx ≥ h` over free `x`. `g` is row-major
// `n_constraints × n_vars`. `x_out` receives `n_vars` values and
// `objective_out` the optimum; both are only written when the status is
// Optimal.
//
// # Safety
// Array arguments must hold the stated number of elements.
enum EpisocStatus episoc_lp_solve(uintptr_t n_vars,
                                  uintptr_t n_constraints,
                                  const double *c,
                                  const double *g,
                                  const double *h,
                                  double tol,
                                  enum EpisocLpStatus *lp_status,
                                  double *x_out,
                                  double *objective_out);

// # Safety
// Pointers must be valid.
enum EpisocStatus episoc_policy_constants(const struct EpisocModelParams *mp,
                                          const struct EpisocControlParams *cp,
                                          struct EpisocPolicyConstants *out);

// Optimal treatment intensities for the given infection (`infected[i] != 0`)
// and treatment pattern. `treated` may be null (nobody treated). All
// arrays have `episoc_network_node_count` elements.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum EpisocStatus episoc_soc_intensity(const struct EpisocNetwork *net,
                                       const struct EpisocModelParams *mp,
                                       const struct EpisocControlParams *cp,
                                       const uint8_t *infected,
                                       const uint8_t *treated,
                                       double *lambda_out);

// Simulates one run on `[0, t_final]`. `scale` multiplies scaled
// baselines; `budget` caps front-loaded baselines; both are ignored by SOC.
//
// # Safety
// Pointers must be valid; `out` receives a handle to free with
// [`episoc_run_free`].
enum EpisocStatus episoc_run(const struct EpisocNetwork *net,
                             const struct EpisocModelParams *mp,
                             const struct EpisocControlParams *cp,
                             enum EpisocPolicy policy,
                             double scale,
                             double budget,
                             double t_final,
                             uintptr_t initial_infected,
                             uint64_t seed,
                             uint64_t init_seed,
                             struct EpisocRun **out);

// # Safety
// `run` must be null or a handle from [`episoc_run`] not yet freed.
void episoc_run_free(struct EpisocRun *run);

// Total infection coverage; NaN for a null handle.
//
// # Safety
// `run` must be null or a live handle.
double episoc_run_coverage(const struct EpisocRun *run);

// # Safety
// `run` must be null or a live handle.
double episoc_run_discounted_cost(const struct EpisocRun *run);

// # Safety
// `run` must be null or a live handle.
uintptr_t episoc_run_peak_infected(const struct EpisocRun *run);

// # Safety
// `run` must be null or a live handle.
uint64_t episoc_run_total_treatments(const struct EpisocRun *run);

// # Safety
// `run` must be null or a live handle.
uintptr_t episoc_run_event_count(const struct EpisocRun *run);

// Reads event `index` of the run's log.
//
// # Safety
// `run` must be a live handle; output pointers valid for writes.
enum EpisocStatus episoc_run_event(const struct EpisocRun *run,
                                   uintptr_t index,
                                   double *t,
                                   uintptr_t *node,
                                   enum EpisocEventKind *kind);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EPISOC_H */
