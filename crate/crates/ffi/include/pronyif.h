#ifndef PRONYIF_H
#define PRONYIF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PronyifStatus {
  PRONYIF_STATUS_OK = 0,
  PRONYIF_STATUS_NULL_POINTER = 1,
  PRONYIF_STATUS_INVALID_ARGUMENT = 2,
  PRONYIF_STATUS_NUMERICAL = 3,
  PRONYIF_STATUS_OUT_OF_RANGE = 4,
  PRONYIF_STATUS_PANIC = 5,
} PronyifStatus;

/**
 * Opaque pipeline configuration.
 */
typedef struct PronyifConfig PronyifConfig;

/**
 * Opaque result of one estimation run.
 */
typedef struct PronyifEstimate PronyifEstimate;

/**
 * Opaque sampled signal.
 */
typedef struct PronyifSignal PronyifSignal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *pronyif_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pronyif_version(void);

/**
 * Builds a signal from `len` interleaved `(re, im)` pairs.
 *
 * # Safety
 * `interleaved` must point to `2 * len` readable doubles; `out` must be
 * writable.
 */
enum PronyifStatus pronyif_signal_from_samples(const double *interleaved,
                                               size_t len,
                                               double sample_rate,
                                               struct PronyifSignal **out);

/**
 * Synthesizes a built-in scenario (`tones`, `parallel-chirps`,
 * `partial-chirps`) with `sample_count` samples. `snr_db` may be `INFINITY`.
 *
 * # Safety
 * `scenario` must be a NUL-terminated string; `out` must be writable.
 */
enum PronyifStatus pronyif_signal_scenario(const char *scenario,
                                           size_t sample_count,
                                           double snr_db,
                                           uint64_t seed,
                                           struct PronyifSignal **out);

/**
 * Number of samples, 0 for a null handle.
 *
 * # Safety
 * `signal` must be null or a live handle.
 */
size_t pronyif_signal_len(const struct PronyifSignal *signal);

/**
 * Copies up to `cap` interleaved pairs into `dst`; returns the pair count
 * written through `written`.
 *
 * # Safety
 * `dst` must have room for `2 * cap` doubles.
 */
enum PronyifStatus pronyif_signal_copy(const struct PronyifSignal *signal,
                                       double *dst,
                                       size_t cap,
                                       size_t *written);

/**
 * # Safety
 * `signal` must be null or a handle not yet freed.
 */
void pronyif_signal_free(struct PronyifSignal *signal);

/**
 * Default configuration (cad-spline, σ = 0.02 s).
 *
 * # Safety
 * `out` must be writable.
 */
enum PronyifStatus pronyif_config_new(struct PronyifConfig **out);

/**
 * Parses the `[pipeline]` section of a TOML document.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum PronyifStatus pronyif_config_from_toml(const char *toml, struct PronyifConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle; `method` a NUL-terminated string.
 */
enum PronyifStatus pronyif_config_set_method(struct PronyifConfig *cfg, const char *method);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum PronyifStatus pronyif_config_set_sigma(struct PronyifConfig *cfg, double sigma);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void pronyif_config_free(struct PronyifConfig *cfg);

/**
 * Runs the full estimator for `order` modes.
 *
 * Returns `PRONYIF_STATUS_NUMERICAL` if any mode failed refinement; the
 * handle is still produced in that case and the failed modes read as NaN.
 *
 * # Safety
 * `signal` and `cfg` must be live handles; `out` must be writable.
 */
enum PronyifStatus pronyif_estimate(const struct PronyifSignal *signal,
                                    size_t order,
                                    const struct PronyifConfig *cfg,
                                    struct PronyifEstimate **out);

/**
 * # Safety
 * `est` must be null or a live handle.
 */
size_t pronyif_estimate_frames(const struct PronyifEstimate *est);

/**
 * # Safety
 * `est` must be null or a live handle.
 */
size_t pronyif_estimate_modes(const struct PronyifEstimate *est);

/**
 * Frames at each end excluded from scoring.
 *
 * # Safety
 * `est` must be null or a live handle.
 */
size_t pronyif_estimate_margin(const struct PronyifEstimate *est);

/**
 * Copies the final IF estimate of `mode` (Hz per frame) into `dst`, which
 * must hold `pronyif_estimate_frames(est)` doubles.
 *
 * # Safety
 * `est` must be a live handle; `dst` must have room for `cap` doubles.
 */
enum PronyifStatus pronyif_estimate_copy_mode(const struct PronyifEstimate *est,
                                              size_t mode,
                                              double *dst,
                                              size_t cap);

/**
 * # Safety
 * `est` must be null or a handle not yet freed.
 */
void pronyif_estimate_free(struct PronyifEstimate *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRONYIF_H */
