#ifndef SATGNN_H
#define SATGNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SatgnnStatus {
  SATGNN_STATUS_OK = 0,
  SATGNN_STATUS_NULL_POINTER = 1,
  SATGNN_STATUS_INVALID_ARGUMENT = 2,
  SATGNN_STATUS_PARSE = 3,
  SATGNN_STATUS_IO = 4,
  SATGNN_STATUS_CHECKPOINT = 5,
  SATGNN_STATUS_BUDGET_EXCEEDED = 6,
  // A caller buffer is shorter than the variable count.
  SATGNN_STATUS_BUFFER_TOO_SMALL = 7,
  // A Rust panic was caught at the boundary.
  SATGNN_STATUS_PANIC = 8,
  SATGNN_STATUS_INTERNAL = 9,
} SatgnnStatus;

// Opaque CNF formula.
typedef struct SatgnnFormula SatgnnFormula;

// Opaque trained model.
typedef struct SatgnnModel SatgnnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *satgnn_last_error(void);

// Library version as a static NUL-terminated string.
const char *satgnn_version(void);

// Parse DIMACS text into a new formula handle.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a writable pointer.
enum SatgnnStatus satgnn_formula_parse_dimacs(const char *text, struct SatgnnFormula **out);

// Build a formula from `len` DIMACS literals where each clause ends in 0.
//
// # Safety
// `lits` must point to `len` readable values and `out` must be writable.
enum SatgnnStatus satgnn_formula_from_literals(uintptr_t num_vars,
                                               const int64_t *lits,
                                               uintptr_t len,
                                               struct SatgnnFormula **out);

// Release a formula handle. Null is ignored.
//
// # Safety
// `f` must come from this library and not be used afterwards.
void satgnn_formula_free(struct SatgnnFormula *f);

// Variable count of a formula; 0 for a null handle.
//
// # Safety
// `f` must be null or a live handle.
uintptr_t satgnn_formula_num_vars(const struct SatgnnFormula *f);

// Clause count of a formula; 0 for a null handle.
//
// # Safety
// `f` must be null or a live handle.
uintptr_t satgnn_formula_num_clauses(const struct SatgnnFormula *f);

// Number of clauses left unsatisfied by `values` (`len` bytes).
//
// # Safety
// `values` must point to `len` readable bytes and `out_gap` be writable.
enum SatgnnStatus satgnn_formula_gap(const struct SatgnnFormula *f,
                                     const uint8_t *values,
                                     uintptr_t len,
                                     uintptr_t *out_gap);

// Exact satisfiability check. On SAT the witness is written to `out_values`
// when it is non-null.
//
// # Safety
// `out_sat` must be writable; `out_values` null or `len` writable bytes.
enum SatgnnStatus satgnn_dpll_solve(const struct SatgnnFormula *f,
                                    bool *out_sat,
                                    uint8_t *out_values,
                                    uintptr_t len);

// Minimum achievable gap and an assignment reaching it.
//
// # Safety
// `out_min_gap` must be writable; `out_values` null or `len` writable bytes.
enum SatgnnStatus satgnn_maxsat_optimum(const struct SatgnnFormula *f,
                                        uintptr_t *out_min_gap,
                                        uint8_t *out_values,
                                        uintptr_t len);

// Load a model checkpoint written by the training pipeline.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum SatgnnStatus satgnn_model_load(const char *path, struct SatgnnModel **out);

// Release a model handle. Null is ignored.
//
// # Safety
// `m` must come from this library and not be used afterwards.
void satgnn_model_free(struct SatgnnModel *m);

// Message-passing search: best of `samples` attempts of up to `max_iters`
// rounds each, stopping at the first satisfying decode. Writes the best
// assignment, its gap and the round at which it appeared.
//
// # Safety
// Handles must be live; `out_values` null or `len` writable bytes; the
// scalar outputs null or writable.
enum SatgnnStatus satgnn_model_solve(const struct SatgnnModel *m,
                                     const struct SatgnnFormula *f,
                                     uintptr_t max_iters,
                                     uintptr_t samples,
                                     uint64_t seed,
                                     uint8_t *out_values,
                                     uintptr_t len,
                                     uintptr_t *out_gap,
                                     uintptr_t *out_iter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SATGNN_H */
