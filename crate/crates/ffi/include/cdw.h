#ifndef CDW_H
#define CDW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum CdwStatus {
  CDW_STATUS_OK = 0,
  CDW_STATUS_NULL_POINTER = 1,
  CDW_STATUS_INVALID_UTF8 = 2,
  CDW_STATUS_INVALID_ARGUMENT = 3,
  CDW_STATUS_CONFIG = 4,
  CDW_STATUS_IO = 5,
  CDW_STATUS_FORMAT = 6,
  CDW_STATUS_COMPUTE = 7,
  CDW_STATUS_BUFFER_TOO_SMALL = 8,
  CDW_STATUS_NOT_AVAILABLE = 9,
  CDW_STATUS_PANIC = 10,
} CdwStatus;

// Parsed experiment configuration.
typedef struct CdwConfig CdwConfig;

// Result of [`cdw_run`]: image, envelope and scalar metrics.
typedef struct CdwRun CdwRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *cdw_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *cdw_version(void);

// Parses configuration text. An empty string gives the defaults.
//
// # Safety
// `text` must be a NUL-terminated string, `out` a valid pointer.
enum CdwStatus cdw_config_from_str(const char *text, struct CdwConfig **out);

// Reads and parses a configuration file.
//
// # Safety
// `path` must be a NUL-terminated string, `out` a valid pointer.
enum CdwStatus cdw_config_from_file(const char *path, struct CdwConfig **out);

// Overrides one key. The configuration is left unchanged when the result is invalid.
//
// # Safety
// `cfg` must come from a `cdw_config_*` constructor; strings must be NUL-terminated.
enum CdwStatus cdw_config_set(struct CdwConfig *cfg,
                              const char *section,
                              const char *key,
                              const char *value);

// # Safety
// `cfg` must be null or come from a `cdw_config_*` constructor, freed once.
void cdw_config_free(struct CdwConfig *cfg);

// Runs the experiment. Artifacts go to `out_dir`, or the configured
// directory when it is null.
//
// # Safety
// `cfg` must be a live handle; `out_dir` null or NUL-terminated; `out` valid.
enum CdwStatus cdw_run(const struct CdwConfig *cfg, const char *out_dir, struct CdwRun **out);

// # Safety
// `run` must be null or come from [`cdw_run`], freed once.
void cdw_run_free(struct CdwRun *run);

// Polar envelope size.
//
// # Safety
// `run` must be a live handle; outputs valid pointers.
enum CdwStatus cdw_run_envelope_dims(const struct CdwRun *run, size_t *n_angles, size_t *n_ranges);

// Envelope samples, angle-major.
//
// # Safety
// `run` must be a live handle; `buf` null or `cap` writable doubles.
enum CdwStatus cdw_run_envelope(const struct CdwRun *run, double *buf, size_t cap, size_t *len);

// Angles in degrees and ranges in metres of the polar grid.
//
// # Safety
// As [`cdw_run_envelope`].
enum CdwStatus cdw_run_axes(const struct CdwRun *run,
                            double *angles_deg,
                            size_t n_angles,
                            double *ranges_m,
                            size_t n_ranges);

// Size of the 8-bit B-mode image.
//
// # Safety
// As [`cdw_run_envelope_dims`].
enum CdwStatus cdw_run_bmode_dims(const struct CdwRun *run, size_t *width, size_t *height);

// B-mode gray levels, row-major from the shallowest row.
//
// # Safety
// `run` must be a live handle; `buf` null or `cap` writable bytes.
enum CdwStatus cdw_run_bmode(const struct CdwRun *run, uint8_t *buf, size_t cap, size_t *len);

// Pin signal strengths in dB, in phantom order.
//
// # Safety
// As [`cdw_run_envelope`].
enum CdwStatus cdw_run_signal_strength(const struct CdwRun *run,
                                       double *buf,
                                       size_t cap,
                                       size_t *len);

// Penetration depth in metres; `NotAvailable` without noise or when the
// SNR never drops below threshold.
//
// # Safety
// `run` must be a live handle; `depth` valid.
enum CdwStatus cdw_run_penetration_depth(const struct CdwRun *run, double *depth);

// Golay pair of `bits` chips as ±1 values.
//
// # Safety
// `a` and `b` null or `cap` writable bytes; `len` null or valid.
enum CdwStatus cdw_golay_pair(size_t bits, int8_t *a, int8_t *b, size_t cap, size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDW_H */
