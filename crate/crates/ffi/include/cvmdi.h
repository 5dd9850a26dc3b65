#ifndef CVMDI_H
#define CVMDI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Row flag bits.
 */
#define CVMDI_FLAG_BOUNDARY_OPTIMAL 1

#define CVMDI_FLAG_NO_POSITIVE_RATE 2

#define CVMDI_FLAG_ASYMPTOTIC 4

#define CVMDI_FLAG_ERROR 8

typedef enum CvmdiStatus {
  CVMDI_STATUS_OK = 0,
  CVMDI_STATUS_NULL_POINTER = 1,
  /**
   * Parameters violate a physical constraint.
   */
  CVMDI_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Input outside an operation's domain.
   */
  CVMDI_STATUS_DOMAIN = 3,
  /**
   * Matrix input rejected or numerically unphysical.
   */
  CVMDI_STATUS_INVALID_MATRIX = 4,
  /**
   * Information quantity diverges.
   */
  CVMDI_STATUS_DIVERGENT = 5,
  CVMDI_STATUS_INSUFFICIENT_DATA = 6,
  CVMDI_STATUS_INDETERMINATE_PHASE = 7,
  /**
   * Index past the end of a result.
   */
  CVMDI_STATUS_OUT_OF_RANGE = 8,
  /**
   * A Rust panic was caught at the boundary.
   */
  CVMDI_STATUS_INTERNAL = 9,
} CvmdiStatus;

typedef enum CvmdiDirection {
  CVMDI_DIRECTION_DIRECT = 0,
  CVMDI_DIRECTION_REVERSE = 1,
} CvmdiDirection;

typedef enum CvmdiRecaster {
  CVMDI_RECASTER_BOB = 0,
  CVMDI_RECASTER_ALICE = 1,
} CvmdiRecaster;

typedef enum CvmdiHolevoMode {
  CVMDI_HOLEVO_MODE_EXACT = 0,
  CVMDI_HOLEVO_MODE_ASYMPTOTIC = 1,
} CvmdiHolevoMode;

typedef enum CvmdiGeometryKind {
  CVMDI_GEOMETRY_KIND_SYMMETRIC = 0,
  CVMDI_GEOMETRY_KIND_RELAY_NEAR_ALICE = 1,
  CVMDI_GEOMETRY_KIND_RELAY_NEAR_BOB = 2,
  /**
   * Split in the ratio `alice_share : bob_share`.
   */
  CVMDI_GEOMETRY_KIND_CUSTOM = 3,
} CvmdiGeometryKind;

typedef enum CvmdiPolicyKind {
  CVMDI_POLICY_KIND_FIXED = 0,
  CVMDI_POLICY_KIND_OPTIMAL = 1,
  CVMDI_POLICY_KIND_ASYMPTOTIC = 2,
} CvmdiPolicyKind;

typedef enum CvmdiCutoffKind {
  /**
   * Zero crossing found.
   */
  CVMDI_CUTOFF_KIND_AT = 0,
  CVMDI_CUTOFF_KIND_SECURE_EVERYWHERE = 1,
  CVMDI_CUTOFF_KIND_INSECURE_EVERYWHERE = 2,
} CvmdiCutoffKind;

/**
 * Opaque scan result handle.
 */
typedef struct CvmdiScan CvmdiScan;

/**
 * Opaque scenario handle.
 */
typedef struct CvmdiScenario CvmdiScenario;

typedef struct CvmdiKeyRate {
  double reconciliation_efficiency;
  double mutual_info_ab;
  double eve_shannon;
  double eve_holevo;
  double key_rate;
} CvmdiKeyRate;

typedef struct CvmdiGeometry {
  enum CvmdiGeometryKind kind;
  double alice_share;
  double bob_share;
} CvmdiGeometry;

/**
 * Variance policy; `total_variance` is read only for `Fixed`.
 */
typedef struct CvmdiPolicy {
  enum CvmdiPolicyKind kind;
  double total_variance;
} CvmdiPolicy;

/**
 * One scan row. With `CVMDI_FLAG_ERROR` set, variance and rate fields are NaN.
 */
typedef struct CvmdiScanRow {
  double total_km;
  double d_a_km;
  double d_b_km;
  double eps_a;
  double eps_b;
  double total_variance;
  struct CvmdiKeyRate rate;
  uint32_t flags;
} CvmdiScanRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cvmdi_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len − 1` bytes) and returns the full message
 * length. Pass a null `buf` to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes of writes.
 */
size_t cvmdi_last_error_message(char *buf, size_t len);

/**
 * Creates a scenario with ideal detectors and Bob recasting.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum CvmdiStatus cvmdi_scenario_new(double t1,
                                    double eps_a,
                                    double t2,
                                    double eps_b,
                                    double total_variance,
                                    double beta,
                                    enum CvmdiDirection direction,
                                    struct CvmdiScenario **out);

/**
 * Sets the relay detector efficiency and electronic noise.
 *
 * # Safety
 * `s` must be a live handle from [`cvmdi_scenario_new`].
 */
enum CvmdiStatus cvmdi_scenario_set_detector(struct CvmdiScenario *s, double eta, double v_el);

/**
 * Chooses which party recasts its data.
 *
 * # Safety
 * `s` must be a live handle from [`cvmdi_scenario_new`].
 */
enum CvmdiStatus cvmdi_scenario_set_recaster(struct CvmdiScenario *s, enum CvmdiRecaster recaster);

/**
 * # Safety
 * `s` must be null or a live handle; it is invalid afterwards.
 */
void cvmdi_scenario_free(struct CvmdiScenario *s);

/**
 * Key rate in the scenario's direction. `mode` applies to reverse
 * reconciliation only.
 *
 * # Safety
 * `s` must be a live handle and `out` valid for writes.
 */
enum CvmdiStatus cvmdi_key_rate(const struct CvmdiScenario *s,
                                enum CvmdiHolevoMode mode,
                                struct CvmdiKeyRate *out);

/**
 * Maximises the key rate over the modulation variance. The scenario's own
 * variance is ignored.
 *
 * # Safety
 * `s` must be a live handle; the out pointers must be valid for writes.
 */
enum CvmdiStatus cvmdi_optimize_modulation(const struct CvmdiScenario *s,
                                           double *out_total_variance,
                                           struct CvmdiKeyRate *out_rate,
                                           uint32_t *out_flags);

/**
 * Runs a scan with ideal detectors, 0.2 dB/km fiber and Bob recasting.
 *
 * # Safety
 * `distances` and `eps` must point to `n_distances` and `n_eps` values;
 * `out` must be valid for a pointer write.
 */
enum CvmdiStatus cvmdi_scan_run(struct CvmdiGeometry geometry,
                                const double *distances,
                                size_t n_distances,
                                const double *eps,
                                size_t n_eps,
                                double beta,
                                struct CvmdiPolicy policy,
                                enum CvmdiDirection direction,
                                struct CvmdiScan **out);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `scan` must be null or a live handle.
 */
size_t cvmdi_scan_row_count(const struct CvmdiScan *scan);

/**
 * Copies row `index` (noise-major, distance-minor order).
 *
 * # Safety
 * `scan` must be a live handle and `out` valid for writes.
 */
enum CvmdiStatus cvmdi_scan_row(const struct CvmdiScan *scan,
                                size_t index,
                                struct CvmdiScanRow *out);

/**
 * # Safety
 * `scan` must be null or a live handle; it is invalid afterwards.
 */
void cvmdi_scan_free(struct CvmdiScan *scan);

/**
 * Cutoff distance of one line. `out_total_km` receives the crossing for
 * `At`, the search limit for `SecureEverywhere` and NaN otherwise.
 *
 * # Safety
 * Out pointers must be valid for writes.
 */
enum CvmdiStatus cvmdi_find_cutoff(struct CvmdiGeometry geometry,
                                   double eps,
                                   double beta,
                                   struct CvmdiPolicy policy,
                                   enum CvmdiDirection direction,
                                   enum CvmdiCutoffKind *out_kind,
                                   double *out_total_km);

/**
 * Symplectic eigenvalues of a row-major `dim × dim` covariance matrix,
 * ascending, written to `out[0..dim/2]`.
 *
 * # Safety
 * `data` must point to `dim * dim` values and `out` to `dim / 2` writable slots.
 */
enum CvmdiStatus cvmdi_symplectic_eigenvalues(const double *data, size_t dim, double *out);

/**
 * Calibration photodetector intensities for LO phases `theta_a`, `theta_b`.
 *
 * # Safety
 * Out pointers must be valid for writes.
 */
enum CvmdiStatus cvmdi_lo_interference_outputs(double theta_a,
                                               double theta_b,
                                               double intensity,
                                               double *out_beta1,
                                               double *out_beta2);

/**
 * Phase difference in `[0, 2π)` from the two calibration intensities.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CvmdiStatus cvmdi_recover_phase_difference(double beta1,
                                                double beta2,
                                                double intensity,
                                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVMDI_H */
