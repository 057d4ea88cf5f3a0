#ifndef EPRA_H
#define EPRA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum EpraCode {
  EPRA_CODE_OK = 0,
  EPRA_CODE_NULL_POINTER = 1,
  EPRA_CODE_INVALID_INPUT = 2,
  EPRA_CODE_DIMENSION_MISMATCH = 3,
  EPRA_CODE_RANK_DEFICIENT = 4,
  EPRA_CODE_NON_FINITE = 5,
  EPRA_CODE_FORMAT = 6,
  EPRA_CODE_NUMERICAL = 7,
  EPRA_CODE_PANIC = 8,
} EpraCode;

typedef enum EpraFamily {
  EPRA_FAMILY_NAIVE = 0,
  EPRA_FAMILY_CONTROLLED = 1,
  EPRA_FAMILY_PARTITIONED = 2,
} EpraFamily;

// Basic procedure used inside each round.
typedef enum EpraScheme {
  EPRA_SCHEME_PERCEPTRON = 0,
  EPRA_SCHEME_VON_NEUMANN = 1,
  EPRA_SCHEME_VON_NEUMANN_AWAY = 2,
  EPRA_SCHEME_SMOOTH = 3,
} EpraScheme;

typedef enum EpraRescale {
  EPRA_RESCALE_ALL_DIRECTIONS = 0,
  EPRA_RESCALE_SINGLE_DIRECTION = 1,
} EpraRescale;

// Termination status of a solve.
typedef enum EpraOutcome {
  EPRA_OUTCOME_TRIVIAL_PRIMAL = 0,
  EPRA_OUTCOME_TRIVIAL_DUAL = 1,
  EPRA_OUTCOME_PARTITION_FOUND = 2,
  EPRA_OUTCOME_ROUND_LIMIT = 3,
  EPRA_OUTCOME_STALLED = 4,
} EpraOutcome;

// Opaque problem instance.
typedef struct EpraInstance EpraInstance;

// Opaque solver result.
typedef struct EpraSolution EpraSolution;

// Solver parameters; start from `epra_config_default`.
typedef struct EpraSolverConfig {
  double u_cap;
  double epsilon;
  enum EpraScheme scheme;
  size_t max_rounds;
  size_t bp_max_iters;
  enum EpraRescale rescale_mode;
  double membership_tol;
  double rank_tol;
} EpraSolverConfig;

typedef struct EpraVerification {
  bool membership_ok;
  bool positivity_ok;
  bool relint_ok;
  // False when the instance carries no ground-truth partition.
  bool partition_known;
  bool partition_matches;
  double max_residual;
} EpraVerification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success. The pointer is
// valid until the next call into this library from the same thread.
const char *epra_last_error_message(void);

// Parses an instance from its JSON form.
//
// # Safety
// `json` must be a nul-terminated string and `out` a valid pointer.
enum EpraCode epra_instance_from_json(const char *json, struct EpraInstance **out);

// Builds an instance from an `m x n` row-major kernel matrix. `m = 0` means `L = R^n`
// and `a` may then be null.
//
// # Safety
// `a` must point to `m * n` doubles and `out` must be valid.
enum EpraCode epra_instance_from_matrix(size_t m,
                                        size_t n,
                                        const double *a,
                                        struct EpraInstance **out);

// Generates a random instance. `m` is ignored by the partitioned family; pass 0 there.
//
// # Safety
// `out` must be valid.
enum EpraCode epra_instance_generate(enum EpraFamily family,
                                     size_t n,
                                     size_t m,
                                     uint64_t seed,
                                     struct EpraInstance **out);

// # Safety
// `inst` must be a live handle; `m` and `n` valid pointers.
enum EpraCode epra_instance_dims(const struct EpraInstance *inst, size_t *m, size_t *n);

// Serialises the instance; release the string with `epra_string_free`.
//
// # Safety
// `inst` must be a live handle and `out` valid.
enum EpraCode epra_instance_to_json(const struct EpraInstance *inst, char **out);

// # Safety
// `inst` must be null or a handle not yet freed.
void epra_instance_free(struct EpraInstance *inst);

// # Safety
// `s` must be null or a string returned by this library.
void epra_string_free(char *s);

struct EpraSolverConfig epra_config_default(void);

// Runs the solver. `config` may be null for the defaults. An unsolved run (round limit,
// stall) still returns `Ok` with a solution whose outcome says so.
//
// # Safety
// `inst` must be a live handle, `config` null or valid, `out` valid.
enum EpraCode epra_solve(const struct EpraInstance *inst,
                         const struct EpraSolverConfig *config,
                         struct EpraSolution **out);

// # Safety
// `sol` must be a live handle and `out` valid.
enum EpraCode epra_solution_outcome(const struct EpraSolution *sol, enum EpraOutcome *out);

// Rescaling rounds and basic-procedure iterations on each side.
//
// # Safety
// `sol` must be a live handle; the out pointers may be null to skip a value.
enum EpraCode epra_solution_counters(const struct EpraSolution *sol,
                                     size_t *rounds,
                                     size_t *bp_iters_primal,
                                     size_t *bp_iters_dual);

// Copies `x` (a point of `L`) into `buf`, which must hold at least `n` doubles.
//
// # Safety
// `sol` must be a live handle and `buf` valid for `len` writes.
enum EpraCode epra_solution_x(const struct EpraSolution *sol, double *buf, size_t len);

// Copies `x_hat` (a point of the orthogonal complement) into `buf`.
//
// # Safety
// As for `epra_solution_x`.
enum EpraCode epra_solution_x_hat(const struct EpraSolution *sol, double *buf, size_t len);

// Writes 1 for indices in `B`, 2 for indices in `N`, 0 for neither (unsolved runs).
//
// # Safety
// `sol` must be a live handle and `buf` valid for `len` writes.
enum EpraCode epra_solution_partition(const struct EpraSolution *sol, uint8_t *buf, size_t len);

// Serialises the result; release the string with `epra_string_free`.
//
// # Safety
// `sol` must be a live handle and `out` valid.
enum EpraCode epra_solution_to_json(const struct EpraSolution *sol, char **out);

// # Safety
// `sol` must be null or a handle not yet freed.
void epra_solution_free(struct EpraSolution *sol);

// Checks a solution against its instance.
//
// # Safety
// `inst` and `sol` must be live handles and `out` valid.
enum EpraCode epra_verify(const struct EpraInstance *inst,
                          const struct EpraSolution *sol,
                          double u_cap,
                          double tol,
                          struct EpraVerification *out);

// Probability that the orthogonal complement of the kernel of an `m x n` Gaussian matrix
// meets the open orthant.
//
// # Safety
// `out` must be valid.
enum EpraCode epra_wendel_probability(size_t m, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EPRA_H */
