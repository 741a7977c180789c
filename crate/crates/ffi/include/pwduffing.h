#ifndef PWDUFFING_H
#define PWDUFFING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PwdStatus {
  PWD_STATUS_OK = 0,
  PWD_STATUS_INVALID_INPUT = 1,
  PWD_STATUS_NUMERICAL_FAILURE = 2,
  PWD_STATUS_NULL_POINTER = 3,
  PWD_STATUS_WRONG_SYSTEM_KIND = 4,
  PWD_STATUS_PANIC = 5,
} PwdStatus;

typedef enum PwdShape {
  PWD_SHAPE_LINEAR = 0,
  PWD_SHAPE_CUBIC = 1,
  PWD_SHAPE_POLYNOMIAL = 2,
} PwdShape;

// Opaque system handle.
typedef struct PwdSystem PwdSystem;

// Closed-form first Melnikov function and its three pieces.
typedef struct PwdMelnikovPieces {
  double first_quarter;
  double middle_half;
  double last_quarter;
  double total;
} PwdMelnikovPieces;

// One displacement measurement, `d = p - h`.
typedef struct PwdDisplacement {
  double r;
  double h;
  double epsilon;
  double p;
  double d;
} PwdDisplacement;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last non-OK status on this thread, or NULL. Valid until the next
// call into the library from the same thread; do not free.
const char *pwd_last_error(void);

// Builds a piecewise system. `shape` is a `PwdShape` value; `coefficients` (h' low
// to high) is read only for `PWD_SHAPE_POLYNOMIAL`.
//
// # Safety
// Array arguments must point to at least the given number of doubles; `out` must be valid.
enum PwdStatus pwd_system_new(const double *breakpoints,
                              size_t n_breakpoints,
                              const double *slopes,
                              size_t n_slopes,
                              int32_t shape,
                              const double *coefficients,
                              size_t n_coefficients,
                              bool strict_mode,
                              struct PwdSystem **out);

// The van der Pol harness, `g2 = (1 - x^2) y`.
//
// # Safety
// `out` must be valid.
enum PwdStatus pwd_system_new_van_der_pol(struct PwdSystem **out);

// Builds a system from configuration text (TOML, or JSON when `json` is true).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be valid.
enum PwdStatus pwd_system_from_config(const char *text, bool json, struct PwdSystem **out);

// # Safety
// `sys` must come from a constructor above and not be freed twice. NULL is ignored.
void pwd_system_free(struct PwdSystem *sys);

// Number of breakpoints `n` of a piecewise system.
//
// # Safety
// Pointers must be valid.
enum PwdStatus pwd_breakpoint_count(const struct PwdSystem *sys, size_t *out);

// Zone `i` with `x` in `(a_i, a_{i+1}]`.
//
// # Safety
// Pointers must be valid.
enum PwdStatus pwd_zone_index(const struct PwdSystem *sys, double x, size_t *out);

// # Safety
// Pointers must be valid.
enum PwdStatus pwd_eval_g(const struct PwdSystem *sys, double x, double y, double eps, double *out);

// Writes `(dx/dt, dy/dt)` to `out[0..2]`.
//
// # Safety
// `out` must point to two doubles.
enum PwdStatus pwd_vector_field(const struct PwdSystem *sys,
                                double x,
                                double y,
                                double eps,
                                double *out);

// # Safety
// Pointers must be valid.
enum PwdStatus pwd_m1_closed_form(const struct PwdSystem *sys,
                                  double r,
                                  struct PwdMelnikovPieces *out);

// # Safety
// Pointers must be valid.
enum PwdStatus pwd_m1_quadrature(const struct PwdSystem *sys, double r, double tol, double *out);

// `pi r^2`.
//
// # Safety
// `out` must be valid.
enum PwdStatus pwd_m2_closed_form(double r, double *out);

// # Safety
// Pointers must be valid.
enum PwdStatus pwd_m2_quadrature(const struct PwdSystem *sys, double r, double tol, double *out);

// Displacement on the orbit of radius `r` with default integrator settings.
//
// # Safety
// Pointers must be valid.
enum PwdStatus pwd_displacement(const struct PwdSystem *sys,
                                double r,
                                double eps,
                                struct PwdDisplacement *out);

// Evidence report as JSON over `r_count` linearly spaced radii in `[r_min, r_max]`.
// An empty epsilon list gives Melnikov evidence only. Free the result with
// `pwd_string_free`.
//
// # Safety
// `epsilons` must point to `n_epsilons` doubles; pointers must be valid.
enum PwdStatus pwd_report_json(const struct PwdSystem *sys,
                               double r_min,
                               double r_max,
                               size_t r_count,
                               const double *epsilons,
                               size_t n_epsilons,
                               char **out);

// # Safety
// `s` must come from this library and not be freed twice. NULL is ignored.
void pwd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PWDUFFING_H */
