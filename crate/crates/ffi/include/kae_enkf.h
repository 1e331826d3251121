#ifndef KAE_ENKF_H
#define KAE_ENKF_H

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum KaeStatus {
  KAE_STATUS_OK = 0,
  KAE_STATUS_NULL_POINTER = 1,
  KAE_STATUS_INVALID_ARGUMENT = 2,
  KAE_STATUS_DIMENSION = 3,
  KAE_STATUS_CONFIG = 4,
  KAE_STATUS_NUMERICAL = 5,
  KAE_STATUS_STATE = 6,
  KAE_STATUS_IO = 7,
  KAE_STATUS_FORMAT = 8,
  KAE_STATUS_PANIC = 9,
} KaeStatus;

/**
 * Filter layout selector.
 */
typedef enum KaeFilterKind {
  KAE_FILTER_KIND_LATENT = 0,
  KAE_FILTER_KIND_FULL_STATE = 1,
} KaeFilterKind;

/**
 * Opaque running filter with its own random stream.
 */
typedef struct KaeFilterHandle KaeFilterHandle;

/**
 * Opaque trained model.
 */
typedef struct KaeModelHandle KaeModelHandle;

/**
 * The five filter variances.
 */
typedef struct KaeNoise {
  double alpha1;
  double alpha2;
  double alpha3;
  double alpha4;
  double alpha5;
} KaeNoise;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *kae_status_str(enum KaeStatus status);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t kae_last_error(char *buf, uintptr_t len);

/**
 * Load a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum KaeStatus kae_model_load(const char *path, struct KaeModelHandle **out);

/**
 * Parse a checkpoint from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum KaeStatus kae_model_from_json(const char *json, struct KaeModelHandle **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, not yet freed.
 */
void kae_model_free(struct KaeModelHandle *model);

/**
 * Measurement dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t kae_model_input_dim(const struct KaeModelHandle *model);

/**
 * Number of conjugate pairs, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t kae_model_pairs(const struct KaeModelHandle *model);

/**
 * Copy the trained moduli and arguments, `pairs` values each.
 *
 * # Safety
 * `tau` and `theta` must point to `pairs` writable doubles.
 */
enum KaeStatus kae_model_spectrum(const struct KaeModelHandle *model,
                                  double *tau,
                                  double *theta,
                                  uintptr_t pairs);

/**
 * Encode one raw measurement into `2 * pairs` latent values.
 *
 * # Safety
 * `x` must point to `n` doubles and `z` to `nz` writable doubles.
 */
enum KaeStatus kae_model_encode(const struct KaeModelHandle *model,
                                const double *x,
                                uintptr_t n,
                                double *z,
                                uintptr_t nz);

/**
 * Decode a latent vector back to a raw measurement.
 *
 * # Safety
 * `z` must point to `nz` doubles and `x` to `n` writable doubles.
 */
enum KaeStatus kae_model_decode(const struct KaeModelHandle *model,
                                const double *z,
                                uintptr_t nz,
                                double *x,
                                uintptr_t n);

/**
 * Encode, advance `dt` steps with the trained spectrum, decode.
 *
 * # Safety
 * `x` must point to `n` doubles and `out` to `n` writable doubles.
 */
enum KaeStatus kae_model_forecast(const struct KaeModelHandle *model,
                                  const double *x,
                                  uintptr_t n,
                                  uint32_t dt,
                                  double *out);

/**
 * Start a filter from measurement `x0` and the model's trained spectrum.
 * The model is copied, so the model handle may be freed afterwards.
 *
 * # Safety
 * `model` must be a live handle, `x0` must point to `n` doubles, `noise`
 * must be readable and `out` writable.
 */
enum KaeStatus kae_filter_new(const struct KaeModelHandle *model,
                              enum KaeFilterKind kind,
                              const double *x0,
                              uintptr_t n,
                              const struct KaeNoise *noise,
                              uintptr_t members,
                              uint64_t seed,
                              struct KaeFilterHandle **out);

/**
 * # Safety
 * `filter` must be null or a handle from this library, not yet freed.
 */
void kae_filter_free(struct KaeFilterHandle *filter);

/**
 * Assimilate one raw measurement.
 *
 * # Safety
 * `filter` must be a live handle and `x` must point to `n` doubles.
 */
enum KaeStatus kae_filter_step(struct KaeFilterHandle *filter, const double *x, uintptr_t n);

/**
 * Ensemble-mean moduli and circular-mean arguments.
 *
 * # Safety
 * `tau` and `theta` must point to `pairs` writable doubles.
 */
enum KaeStatus kae_filter_estimates(const struct KaeFilterHandle *filter,
                                    double *tau,
                                    double *theta,
                                    uintptr_t pairs);

/**
 * Mean of the decoded member forecasts `dt` steps ahead.
 *
 * # Safety
 * `out` must point to `n` writable doubles.
 */
enum KaeStatus kae_filter_forecast(const struct KaeFilterHandle *filter,
                                   uint32_t dt,
                                   double *out,
                                   uintptr_t n);

/**
 * Determinant of the latent ensemble's sample covariance.
 *
 * # Safety
 * `out` must point to one writable double.
 */
enum KaeStatus kae_filter_generalized_variance(const struct KaeFilterHandle *filter, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KAE_ENKF_H */
