//! C ABI over `osp-core`.
//!
//! Every function returns an `OspStatus`; results go through out-pointers.
//! On failure a message is kept per thread and can be read with
//! `osp_last_error_message`. Panics never cross the boundary: they are
//! caught and reported as `OspStatus::Panic`.
//!
//! Models are opaque `OspModel` handles created by `osp_model_load` or
//! `osp_model_from_json` and released with `osp_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use osp_core::data_io::{load_model, model_from_json};
use osp_core::engine::{
    self as engine, cusum_changepoint_with, predict_interval, ModelKind, OspMethod,
    CUSUM_THRESHOLD_95,
};
use osp_core::features::{extract_features, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use osp_core::forecasters::{forecast, ForecasterKind, ForecasterSpec};
use osp_core::gbdt::{GbdtModel, Objective};
use osp_core::labeler::LabelKind;
use osp_core::metrics::{mape, mase};
use osp_core::series::{default_min_len, SegmentationConfig, TimeSeries};
use osp_core::OspError;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OspStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    TooShort = 3,
    Ineligible = 4,
    Undefined = 5,
    ForecastFailed = 6,
    ModelError = 7,
    IoError = 8,
    ParseError = 9,
    Panic = 99,
}

/// Base forecasting model selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OspBaseModel {
    Naive = 0,
    SeasonalNaive = 1,
    Ses = 2,
    Holt = 3,
    HoltWinters = 4,
    Ets = 5,
    Theta = 6,
}

impl From<OspBaseModel> for ForecasterKind {
    fn from(b: OspBaseModel) -> Self {
        match b {
            OspBaseModel::Naive => ForecasterKind::Naive,
            OspBaseModel::SeasonalNaive => ForecasterKind::Snaive,
            OspBaseModel::Ses => ForecasterKind::Ses,
            OspBaseModel::Holt => ForecasterKind::Holt,
            OspBaseModel::HoltWinters => ForecasterKind::HoltWintersAdd,
            OspBaseModel::Ets => ForecasterKind::EtsAuto,
            OspBaseModel::Theta => ForecasterKind::Theta,
        }
    }
}

/// Opaque trained interval model.
pub struct OspModel {
    inner: GbdtModel,
}

struct Failure {
    status: OspStatus,
    message: String,
}

impl Failure {
    fn new(status: OspStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<OspError> for Failure {
    fn from(e: OspError) -> Self {
        let status = match &e {
            OspError::TooShort { .. } => OspStatus::TooShort,
            OspError::Ineligible(_) | OspError::EmptyTrainingSet => OspStatus::Ineligible,
            OspError::UndefinedScale | OspError::UndefinedMape(_) => OspStatus::Undefined,
            OspError::Forecast(_) => OspStatus::ForecastFailed,
            OspError::Model(_) | OspError::FeatureMismatch(_) | OspError::Training(_) => {
                OspStatus::ModelError
            }
            OspError::Io { .. } => OspStatus::IoError,
            OspError::Parse { .. } | OspError::Csv(_) | OspError::Json(_) => OspStatus::ParseError,
            _ => OspStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> OspStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            OspStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            OspStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> FfiResult<()> {
    if p.is_null() {
        Err(Failure::new(
            OspStatus::NullPointer,
            format!("{name} is NULL"),
        ))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be NULL or point to `len` readable `f64`s.
unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be NULL or point to `len` writable `f64`s.
unsafe fn slice_mut<'a>(p: *mut f64, len: usize, name: &str) -> FfiResult<&'a mut [f64]> {
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be NULL or a NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure::new(
            OspStatus::InvalidArgument,
            format!("{name} is not valid UTF-8"),
        )
    })
}

fn series(values: &[f64], frequency: usize) -> FfiResult<TimeSeries> {
    Ok(TimeSeries::new("ffi", values.to_vec(), frequency)?)
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn osp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Number of features produced by `osp_extract_features`.
#[no_mangle]
pub extern "C" fn osp_feature_count() -> usize {
    FEATURE_COUNT
}

/// Static name of feature `index`, or NULL when out of range.
#[no_mangle]
pub extern "C" fn osp_feature_name(index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        FEATURE_NAMES
            .iter()
            .map(|n| CString::new(*n).unwrap())
            .collect()
    });
    names.get(index).map_or(std::ptr::null(), |n| n.as_ptr())
}

/// Writes the feature vector of a series into `out` (`osp_feature_count()` doubles).
///
/// # Safety
/// `values` must point to `len` doubles and `out` to `osp_feature_count()` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn osp_extract_features(
    values: *const f64,
    len: usize,
    frequency: usize,
    out: *mut f64,
) -> OspStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        let out = slice_mut(out, FEATURE_COUNT, "out")?;
        let fv = extract_features(&series(v, frequency)?)?;
        out.copy_from_slice(fv.as_slice());
        Ok(())
    })
}

/// Loads a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn osp_model_load(path: *const c_char, out: *mut *mut OspModel) -> OspStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = load_model(string(path, "path")?)?;
        *out = Box::into_raw(Box::new(OspModel { inner: model }));
        Ok(())
    })
}

/// Parses a model from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn osp_model_from_json(
    json: *const c_char,
    out: *mut *mut OspModel,
) -> OspStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = model_from_json(string(json, "json")?)?;
        *out = Box::into_raw(Box::new(OspModel { inner: model }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn osp_model_free(model: *mut OspModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of intervals a classification model chooses from; 0 for regression models.
///
/// # Safety
/// `model` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn osp_model_num_classes(
    model: *const OspModel,
    out: *mut usize,
) -> OspStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = match (*model).inner.objective {
            Objective::Multiclass { num_classes } => num_classes,
            Objective::Regression => 0,
        };
        Ok(())
    })
}

/// Predicted 1-based interval for a feature vector of `n_features` doubles.
///
/// # Safety
/// `model` must be a live handle, `features` must point to `n_features`
/// doubles and `out_interval` must be writable.
#[no_mangle]
pub unsafe extern "C" fn osp_predict_interval(
    model: *const OspModel,
    features: *const f64,
    n_features: usize,
    m: usize,
    out_interval: *mut usize,
) -> OspStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out_interval, "out_interval")?;
        if m < 1 {
            return Err(Failure::new(OspStatus::InvalidArgument, "m must be >= 1"));
        }
        let fv = FeatureVector::from_slice(slice(features, n_features, "features")?)?;
        *out_interval = predict_interval(&(*model).inner, &fv, m)?.get();
        Ok(())
    })
}

/// Interval geometry and base model for `osp_forecast`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OspForecastConfig {
    pub m: usize,
    pub n: usize,
    pub horizon: usize,
    /// 0 selects the default `max(horizon + 2, 2 * frequency, 8)`.
    pub min_len: usize,
    pub base: OspBaseModel,
}

/// Forecasts `config.horizon` steps from the interval the model predicts.
/// `out` receives the averaged forecast; `out_interval` (optional) the interval.
///
/// # Safety
/// `model` must be a live handle, `values` must point to `len` doubles,
/// `out` to `config.horizon` writable doubles, and `out_interval` must be
/// NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn osp_forecast(
    model: *const OspModel,
    values: *const f64,
    len: usize,
    frequency: usize,
    config: OspForecastConfig,
    out: *mut f64,
    out_interval: *mut usize,
) -> OspStatus {
    guard(|| {
        non_null(model, "model")?;
        let v = slice(values, len, "values")?;
        let out = slice_mut(out, config.horizon, "out")?;
        let min_len = if config.min_len == 0 {
            default_min_len(config.horizon, frequency)
        } else {
            config.min_len
        };
        let seg = SegmentationConfig::new(config.m, config.n, config.horizon, min_len)?;
        let model = &(*model).inner;
        let kind = match model.objective {
            Objective::Multiclass { .. } => ModelKind::Classification,
            Objective::Regression => ModelKind::Regression,
        };
        // the label kind only names the method; it does not affect prediction
        let method = OspMethod::new(LabelKind::Average, kind);
        let result = engine::osp_forecast(
            &series(v, frequency)?,
            model,
            &seg,
            &ForecasterSpec::new(config.base.into()),
            method,
        )?;
        out.copy_from_slice(&result.final_forecast.values);
        if !out_interval.is_null() {
            *out_interval = result.predicted_interval.get();
        }
        Ok(())
    })
}

/// Plain base-model forecast of `horizon` steps from the whole series.
///
/// # Safety
/// `values` must point to `len` doubles and `out` to `horizon` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn osp_base_forecast(
    values: *const f64,
    len: usize,
    frequency: usize,
    base: OspBaseModel,
    horizon: usize,
    out: *mut f64,
) -> OspStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        let out = slice_mut(out, horizon, "out")?;
        let fc = forecast(
            &ForecasterSpec::new(base.into()),
            &series(v, frequency)?,
            horizon,
        )?;
        out.copy_from_slice(&fc.values);
        Ok(())
    })
}

/// MASE of `forecast` against `actual` (both `horizon` long), scaled by the
/// mean absolute first difference of `train`.
///
/// # Safety
/// `train` must point to `train_len` doubles; `actual` and `forecast` to
/// `horizon` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn osp_mase(
    train: *const f64,
    train_len: usize,
    actual: *const f64,
    forecast: *const f64,
    horizon: usize,
    out: *mut f64,
) -> OspStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = mase(
            slice(train, train_len, "train")?,
            slice(actual, horizon, "actual")?,
            slice(forecast, horizon, "forecast")?,
        )?;
        Ok(())
    })
}

/// MAPE in percent.
///
/// # Safety
/// `actual` and `forecast` must point to `horizon` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn osp_mape(
    actual: *const f64,
    forecast: *const f64,
    horizon: usize,
    out: *mut f64,
) -> OspStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = mape(
            slice(actual, horizon, "actual")?,
            slice(forecast, horizon, "forecast")?,
        )?;
        Ok(())
    })
}

/// CUSUM mean-change test. `out_found` is set to 1 and `out_index` to the
/// first index of the new regime when a change is detected, else `out_found`
/// is 0. A non-positive `threshold` selects the 95% critical value.
///
/// # Safety
/// `values` must point to `len` doubles; `out_found` and `out_index` must be writable.
#[no_mangle]
pub unsafe extern "C" fn osp_cusum_changepoint(
    values: *const f64,
    len: usize,
    threshold: f64,
    out_found: *mut i32,
    out_index: *mut usize,
) -> OspStatus {
    guard(|| {
        non_null(out_found, "out_found")?;
        non_null(out_index, "out_index")?;
        let t = if threshold > 0.0 {
            threshold
        } else {
            CUSUM_THRESHOLD_95
        };
        match cusum_changepoint_with(&series(slice(values, len, "values")?, 1)?, t)? {
            Some(k) => {
                *out_found = 1;
                *out_index = k;
            }
            None => *out_found = 0,
        }
        Ok(())
    })
}
