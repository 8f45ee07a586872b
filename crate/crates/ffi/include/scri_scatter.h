#ifndef SCRI_SCATTER_H
#define SCRI_SCATTER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status returned by every fallible entry point.
 */
typedef enum ScriStatus {
  ScriStatus_Ok = 0,
  ScriStatus_Domain = 1,
  ScriStatus_Config = 2,
  ScriStatus_WorldtubeContamination = 3,
  ScriStatus_BoundaryContamination = 4,
  ScriStatus_NonlinearDivergence = 5,
  ScriStatus_NoContraction = 6,
  ScriStatus_CflViolation = 7,
  ScriStatus_ConeOutsideDomain = 8,
  ScriStatus_FoliationOutsideDomain = 9,
  ScriStatus_ExtractionInconsistency = 10,
  ScriStatus_NonFinite = 11,
  ScriStatus_Io = 12,
  ScriStatus_NullPointer = 100,
  ScriStatus_InvalidUtf8 = 101,
  ScriStatus_BufferTooSmall = 102,
  ScriStatus_Panic = 103,
} ScriStatus;

/**
 * Run configuration (chart, grid, coefficient b, tolerances).
 */
typedef struct ScriConfig ScriConfig;

/**
 * Mode profile on the scri lattice.
 */
typedef struct ScriProfileHandle ScriProfileHandle;

/**
 * Mode data on the t = 0 slice.
 */
typedef struct ScriSigma ScriSigma;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next call.
 */
const char *scri_last_error_message(void);

/**
 * Default configuration.
 */
struct ScriConfig *scri_config_default(void);

/**
 * Parses INI text into a validated configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ScriStatus scri_config_from_ini(const char *text, struct ScriConfig **out);

/**
 * # Safety
 * `cfg` must come from this library or be null.
 */
void scri_config_free(struct ScriConfig *cfg);

/**
 * The configured scri data profile.
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum ScriStatus scri_config_scri_data(const struct ScriConfig *cfg, struct ScriProfileHandle **out);

/**
 * Profile from `n` samples starting at `u0` with spacing `du` and declared
 * support `[support_lo, support_hi]`.
 *
 * # Safety
 * `values` must point to `n` doubles and `out` be writable.
 */
enum ScriStatus scri_profile_new(uint32_t l,
                                 double u0,
                                 double du,
                                 const double *values,
                                 uintptr_t n,
                                 double support_lo,
                                 double support_hi,
                                 struct ScriProfileHandle **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `p` must be a live handle or null.
 */
uintptr_t scri_profile_len(const struct ScriProfileHandle *p);

/**
 * Copies the samples into `buf` of capacity `cap`.
 *
 * # Safety
 * `p` must be a live handle and `buf` writable for `cap` doubles.
 */
enum ScriStatus scri_profile_values(const struct ScriProfileHandle *p, double *buf, uintptr_t cap);

/**
 * H1 norm on scri.
 *
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum ScriStatus scri_profile_h1(const struct ScriProfileHandle *p, double *out);

/**
 * # Safety
 * `p` must come from this library or be null.
 */
void scri_profile_free(struct ScriProfileHandle *p);

/**
 * Scattering operator from past scri data to future scri data.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum ScriStatus scri_scattering_operator(const struct ScriConfig *cfg,
                                         const struct ScriProfileHandle *theta_minus,
                                         struct ScriProfileHandle **out);

/**
 * Inverse scattering operator.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum ScriStatus scri_scattering_inverse(const struct ScriConfig *cfg,
                                        const struct ScriProfileHandle *theta_plus,
                                        struct ScriProfileHandle **out);

/**
 * Slice data from future scri data.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum ScriStatus scri_trace_plus_to_slice(const struct ScriConfig *cfg,
                                         const struct ScriProfileHandle *theta,
                                         struct ScriSigma **out);

/**
 * Future scri data from slice data.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum ScriStatus scri_trace_slice_to_plus(const struct ScriConfig *cfg,
                                         const struct ScriSigma *data,
                                         struct ScriProfileHandle **out);

/**
 * Number of slice samples, or 0 for a null handle.
 *
 * # Safety
 * `d` must be a live handle or null.
 */
uintptr_t scri_sigma_len(const struct ScriSigma *d);

/**
 * Copies r*, field and T-derivative samples; any output pointer may be null.
 *
 * # Safety
 * `d` must be a live handle; non-null buffers must hold `cap` doubles.
 */
enum ScriStatus scri_sigma_values(const struct ScriSigma *d,
                                  double *rstar,
                                  double *theta,
                                  double *xi,
                                  uintptr_t cap);

/**
 * # Safety
 * `d` must come from this library or be null.
 */
void scri_sigma_free(struct ScriSigma *d);

/**
 * Runs the command-line front end with `argv[0..argc]` and returns its exit code.
 *
 * # Safety
 * `argv` must hold `argc` NUL-terminated strings.
 */
int scri_cli_main(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCRI_SCATTER_H */
