/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef OSP_TSP_H
#define OSP_TSP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Base forecasting model selector.
typedef enum OspBaseModel {
  OSP_BASE_MODEL_NAIVE = 0,
  OSP_BASE_MODEL_SEASONAL_NAIVE = 1,
  OSP_BASE_MODEL_SES = 2,
  OSP_BASE_MODEL_HOLT = 3,
  OSP_BASE_MODEL_HOLT_WINTERS = 4,
  OSP_BASE_MODEL_ETS = 5,
  OSP_BASE_MODEL_THETA = 6,
} OspBaseModel;

// Result code of every call.
typedef enum OspStatus {
  OSP_STATUS_OK = 0,
  OSP_STATUS_NULL_POINTER = 1,
  OSP_STATUS_INVALID_ARGUMENT = 2,
  OSP_STATUS_TOO_SHORT = 3,
  OSP_STATUS_INELIGIBLE = 4,
  OSP_STATUS_UNDEFINED = 5,
  OSP_STATUS_FORECAST_FAILED = 6,
  OSP_STATUS_MODEL_ERROR = 7,
  OSP_STATUS_IO_ERROR = 8,
  OSP_STATUS_PARSE_ERROR = 9,
  OSP_STATUS_PANIC = 99,
} OspStatus;

// Opaque trained interval model.
typedef struct OspModel OspModel;

// Interval geometry and base model for `osp_forecast`.
typedef struct OspForecastConfig {
  size_t m;
  size_t n;
  size_t horizon;
  // 0 selects the default `max(horizon + 2, 2 * frequency, 8)`.
  size_t min_len;
  enum OspBaseModel base;
} OspForecastConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next call into this library on the same
// thread.
const char *osp_last_error_message(void);

// Number of features produced by `osp_extract_features`.
size_t osp_feature_count(void);

// Static name of feature `index`, or NULL when out of range.
const char *osp_feature_name(size_t index);

// Writes the feature vector of a series into `out` (`osp_feature_count()` doubles).
//
// # Safety
// `values` must point to `len` doubles and `out` to `osp_feature_count()` writable doubles.
enum OspStatus osp_extract_features(const double *values,
                                    size_t len,
                                    size_t frequency,
                                    double *out);

// Loads a model JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum OspStatus osp_model_load(const char *path, struct OspModel **out);

// Parses a model from a JSON string.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer.
enum OspStatus osp_model_from_json(const char *json, struct OspModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must be NULL or a handle from this library that has not been freed.
void osp_model_free(struct OspModel *model);

// Number of intervals a classification model chooses from; 0 for regression models.
//
// # Safety
// `model` must be a live handle and `out` a writable pointer.
enum OspStatus osp_model_num_classes(const struct OspModel *model, size_t *out);

// Predicted 1-based interval for a feature vector of `n_features` doubles.
//
// # Safety
// `model` must be a live handle, `features` must point to `n_features`
// doubles and `out_interval` must be writable.
enum OspStatus osp_predict_interval(const struct OspModel *model,
                                    const double *features,
                                    size_t n_features,
                                    size_t m,
                                    size_t *out_interval);

// Forecasts `config.horizon` steps from the interval the model predicts.
// `out` receives the averaged forecast; `out_interval` (optional) the interval.
//
// # Safety
// `model` must be a live handle, `values` must point to `len` doubles,
// `out` to `config.horizon` writable doubles, and `out_interval` must be
// NULL or writable.
enum OspStatus osp_forecast(const struct OspModel *model,
                            const double *values,
                            size_t len,
                            size_t frequency,
                            struct OspForecastConfig config,
                            double *out,
                            size_t *out_interval);

// Plain base-model forecast of `horizon` steps from the whole series.
//
// # Safety
// `values` must point to `len` doubles and `out` to `horizon` writable doubles.
enum OspStatus osp_base_forecast(const double *values,
                                 size_t len,
                                 size_t frequency,
                                 enum OspBaseModel base,
                                 size_t horizon,
                                 double *out);

// MASE of `forecast` against `actual` (both `horizon` long), scaled by the
// mean absolute first difference of `train`.
//
// # Safety
// `train` must point to `train_len` doubles; `actual` and `forecast` to
// `horizon` doubles; `out` must be writable.
enum OspStatus osp_mase(const double *train,
                        size_t train_len,
                        const double *actual,
                        const double *forecast,
                        size_t horizon,
                        double *out);

// MAPE in percent.
//
// # Safety
// `actual` and `forecast` must point to `horizon` doubles; `out` must be writable.
enum OspStatus osp_mape(const double *actual, const double *forecast, size_t horizon, double *out);

// CUSUM mean-change test. `out_found` is set to 1 and `out_index` to the
// first index of the new regime when a change is detected, else `out_found`
// is 0. A non-positive `threshold` selects the 95% critical value.
//
// # Safety
// `values` must point to `len` doubles; `out_found` and `out_index` must be writable.
enum OspStatus osp_cusum_changepoint(const double *values,
                                     size_t len,
                                     double threshold,
                                     int32_t *out_found,
                                     size_t *out_index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OSP_TSP_H */
