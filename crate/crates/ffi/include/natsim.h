#ifndef NATSIM_H
#define NATSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum NatStatus {
  NAT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  NAT_STATUS_NULL_POINTER = 1,
  /**
   * Malformed input: bad UTF-8, bad JSON, unknown mode.
   */
  NAT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The network or a parameter failed validation.
   */
  NAT_STATUS_VALIDATION = 3,
  /**
   * Numerical failure: singular or degenerate steady state, underflow.
   */
  NAT_STATUS_SOLVER = 4,
  /**
   * The Fock space exceeds the dimension cap.
   */
  NAT_STATUS_OVERFLOW = 5,
  /**
   * An internal panic was caught.
   */
  NAT_STATUS_PANIC = 6,
} NatStatus;

/**
 * Interference mode of the four-site network.
 */
typedef enum NatMode {
  NAT_MODE_CONSTRUCTIVE = 0,
  NAT_MODE_DESTRUCTIVE = 1,
} NatMode;

/**
 * Opaque validated network.
 */
typedef struct NatNetwork NatNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Four-site network with disorder `omega2` and dephasing `gamma2` on site 2,
 * default couplings.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum NatStatus nat_network_standard_four_site(enum NatMode mode,
                                              double omega2,
                                              double gamma2,
                                              struct NatNetwork **out);

/**
 * Network from a NUL-terminated JSON document.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` writable.
 */
enum NatStatus nat_network_from_json(const char *json, struct NatNetwork **out);

/**
 * Number of sites of a network.
 *
 * # Safety
 * `net` must be a live handle and `out` writable.
 */
enum NatStatus nat_network_n_sites(const struct NatNetwork *net, size_t *out);

/**
 * Release a handle; null is ignored.
 *
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void nat_network_free(struct NatNetwork *net);

/**
 * Steady-state transmission from the truncated-Fock engine.
 *
 * # Safety
 * `net` must be a live handle and `out` writable.
 */
enum NatStatus nat_transmission_fock(const struct NatNetwork *net, size_t cutoff, double *out);

/**
 * Steady-state transmission from the second-moment engine.
 *
 * # Safety
 * `net` must be a live handle and `out` writable.
 */
enum NatStatus nat_transmission_moments(const struct NatNetwork *net, double *out);

/**
 * Message of the last failed call on this thread, empty after a success.
 * Valid until the next call on the same thread.
 */
const char *nat_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nat_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NATSIM_H */
