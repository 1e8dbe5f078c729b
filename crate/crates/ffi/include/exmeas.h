#ifndef EXMEAS_H
#define EXMEAS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ExmeasStatus {
  EXMEAS_STATUS_OK = 0,
  EXMEAS_STATUS_NULL_POINTER = 1,
  EXMEAS_STATUS_INVALID_UTF8 = 2,
  EXMEAS_STATUS_CONFIG = 3,
  EXMEAS_STATUS_PARSE = 4,
  EXMEAS_STATUS_EVAL = 5,
  EXMEAS_STATUS_RESOURCE_CAP = 6,
  EXMEAS_STATUS_SAMPLE = 7,
  EXMEAS_STATUS_INVALID_ARGUMENT = 8,
  EXMEAS_STATUS_PANIC = 9,
} ExmeasStatus;

// Verdict of a certification, as written by [`exmeas_certify`].
typedef enum ExmeasVerdict {
  EXMEAS_VERDICT_LOCALLY_FINITE = 0,
  EXMEAS_VERDICT_NOT_LOCALLY_FINITE = 1,
  EXMEAS_VERDICT_INCONCLUSIVE = 2,
} ExmeasVerdict;

// A parsed function expression.
typedef struct ExmeasExpr ExmeasExpr;

// A loaded model configuration.
typedef struct ExmeasModel ExmeasModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library on the same thread.
const char *exmeas_last_error(void);

// Library version as a static NUL-terminated string.
const char *exmeas_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void exmeas_string_free(char *s);

// Loads a model from configuration text (TOML with a `[model]` section).
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum ExmeasStatus exmeas_model_from_config(const char *text, struct ExmeasModel **out);

// Loads a model from a configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ExmeasStatus exmeas_model_from_file(const char *path, struct ExmeasModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from this library and not have been freed.
void exmeas_model_free(struct ExmeasModel *model);

// Certifies local finiteness. Writes the verdict and, if `json_out` is not
// NULL, the per-condition evidence as JSON.
//
// # Safety
// `model` must be a live handle; `verdict` a valid pointer; `json_out` NULL or valid.
enum ExmeasStatus exmeas_certify(const struct ExmeasModel *model,
                                 enum ExmeasVerdict *verdict,
                                 char **json_out);

// Samples the window `[0, window]^2` and writes the atoms in the TSV format
// of the command line tool. A negative `mark_cap` keeps the configured one.
//
// # Safety
// `model` must be a live handle and `tsv_out` a valid pointer.
enum ExmeasStatus exmeas_sample_tsv(const struct ExmeasModel *model,
                                    double window,
                                    double mark_cap,
                                    unsigned long long seed,
                                    char **tsv_out);

// Parses a function expression in the variables x, y, z, k, v.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum ExmeasStatus exmeas_expr_parse(const char *text, struct ExmeasExpr **out);

// Evaluates an expression. `values` holds `n` entries bound in the order
// x, y, z, k, v; variables past `n` are unbound.
//
// # Safety
// `expr` must be a live handle, `values` must point to `n` doubles (or be
// NULL with `n == 0`) and `out` must be valid.
enum ExmeasStatus exmeas_expr_eval(const struct ExmeasExpr *expr,
                                   const double *values,
                                   int n,
                                   double *out);

// Canonical text of an expression.
//
// # Safety
// `expr` must be a live handle and `text_out` a valid pointer.
enum ExmeasStatus exmeas_expr_print(const struct ExmeasExpr *expr, char **text_out);

// Releases an expression. NULL is ignored.
//
// # Safety
// `expr` must come from this library and not have been freed.
void exmeas_expr_free(struct ExmeasExpr *expr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXMEAS_H */
