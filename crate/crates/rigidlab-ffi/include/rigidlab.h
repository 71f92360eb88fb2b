/* C ABI for the rigidlab core.
 *
 * Conventions:
 *   - constructors return an owned opaque handle, or NULL on failure;
 *   - all other calls return an RL_* code and write results through
 *     out-pointers;
 *   - after any failure, rl_last_error() copies a NUL-terminated message
 *     describing it (per thread);
 *   - handles must be released with the matching *_free function; freeing
 *     NULL is a no-op.
 *
 * Variable layout for expressions: q1..qd, p1..pd, xi1..xik, t.
 */

#ifndef RIGIDLAB_H
#define RIGIDLAB_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Error codes. */
#define RL_OK 0
#define RL_NULL_ARGUMENT 1
#define RL_INVALID_UTF8 2
#define RL_PARSE_ERROR 3
#define RL_EVAL_ERROR 4
#define RL_DIMENSION_MISMATCH 5
#define RL_RUNTIME_ERROR 6

/* Opaque handles. */
typedef struct RlExpression RlExpression;
typedef struct RlField RlField;
typedef struct RlGfqi RlGfqi;

/* Copies the most recent error message on this thread into buf
 * (NUL-terminated, truncated to len bytes). Returns the full message
 * length excluding the NUL; buf may be NULL to query the length. */
size_t rl_last_error(char *buf, size_t len);

/* --- expressions ------------------------------------------------------ */

/* Parses source over d position/momentum pairs and k fiber variables. */
RlExpression *rl_expression_parse(const char *source, size_t d, size_t k);
void rl_expression_free(RlExpression *expr);

/* Evaluates at vars[0..nvars] (missing trailing slots read as zero). */
int rl_expression_eval(const RlExpression *expr, const double *vars,
                       size_t nvars, double *out);

/* Exact gradient with respect to the first n flat variables. */
int rl_expression_gradient(const RlExpression *expr, const double *vars,
                           size_t nvars, size_t n, double *out);

/* 0 smooth, 1 C^{1,1}, 2 Lipschitz, -1 on a NULL handle. */
int rl_expression_smoothness(const RlExpression *expr);

/* --- Hamiltonians on phase space -------------------------------------- */

RlField *rl_field_from_expression(const RlExpression *expr);
RlField *rl_field_from_catalog(const char *name);
void rl_field_free(RlField *field);

/* Degrees of freedom; 0 on a NULL handle. */
size_t rl_field_dof(const RlField *field);

/* Poisson bracket {f, g} at the phase point x[0..len), len = 2 * dof. */
int rl_poisson_bracket(const RlField *f, const RlField *g, const double *x,
                       size_t len, double *out);

/* --- generating functions quadratic at infinity ------------------------ */

/* From a position-only, 1-periodic expression (k must be 0). */
RlGfqi *rl_gfqi_from_base(const RlExpression *expr);
void rl_gfqi_free(RlGfqi *g);

/* Spectral gamma invariant at the given grid resolution. */
int rl_gfqi_gamma(const RlGfqi *g, size_t resolution, double c_box,
                  double *out);

/* Gamma distance between two generating functions. */
int rl_gfqi_gamma_distance(const RlGfqi *a, const RlGfqi *b,
                           size_t resolution, double c_box, double *out);

#ifdef __cplusplus
}
#endif

#endif /* RIGIDLAB_H */
