//! The two-stage pipeline: a boosted classifier or regressor predicts which
//! sub-interval holds the best starting point, and the final forecast is the
//! mean of the base forecasts started from that interval's candidates.
//! Baselines (random interval, CUSUM change point) live here too.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use serde::{Deserialize, Serialize};

use crate::error::{OspError, Result};
use crate::features::{extract_features, FeatureVector, FEATURE_NAMES};
use crate::forecasters::{forecast, Forecast, ForecasterSpec};
use crate::gbdt::{GbdtModel, GbdtParams, Objective};
use crate::labeler::{build_grid, IntervalLabel, LabelKind, LabeledExample};
use crate::series::{default_min_len, SegmentationConfig, TimeSeries};

/// Critical value of the Brownian-bridge supremum at the 95% level.
pub const CUSUM_THRESHOLD_95: f64 = 1.358;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Classification,
    Regression,
}

impl ModelKind {
    pub fn short_name(&self) -> &'static str {
        match self {
            ModelKind::Classification => "cls",
            ModelKind::Regression => "reg",
        }
    }
}

impl FromStr for ModelKind {
    type Err = OspError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" | "classification" => Ok(ModelKind::Classification),
            "reg" | "regression" => Ok(ModelKind::Regression),
            other => Err(OspError::InvalidConfig(format!(
                "unknown objective `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OspMethod {
    pub label_kind: LabelKind,
    pub model_kind: ModelKind,
}

impl OspMethod {
    pub const ALL: [OspMethod; 4] = [
        OspMethod::new(LabelKind::Actual, ModelKind::Classification),
        OspMethod::new(LabelKind::Actual, ModelKind::Regression),
        OspMethod::new(LabelKind::Average, ModelKind::Classification),
        OspMethod::new(LabelKind::Average, ModelKind::Regression),
    ];

    pub const fn new(label_kind: LabelKind, model_kind: ModelKind) -> Self {
        Self {
            label_kind,
            model_kind,
        }
    }

    /// `actual_cls`, `average_reg`, ...
    pub fn name(&self) -> String {
        format!(
            "{}_{}",
            self.label_kind.name(),
            self.model_kind.short_name()
        )
    }
}

impl fmt::Display for OspMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for OspMethod {
    type Err = OspError;

    fn from_str(s: &str) -> Result<Self> {
        let (label, model) = s.split_once('_').ok_or_else(|| {
            OspError::InvalidConfig(format!(
                "method `{s}` is not of the form <label>_<objective>"
            ))
        })?;
        Ok(Self::new(label.parse()?, model.parse()?))
    }
}

/// Metadata keys written by [`train_osp`].
pub mod meta {
    pub const M: &str = "m";
    pub const N: &str = "n";
    pub const METHOD: &str = "method";
}

/// Fits the interval model on labelled examples.
pub fn train_osp(
    examples: &[LabeledExample],
    method: OspMethod,
    params: &GbdtParams,
) -> Result<GbdtModel> {
    let first = examples.first().ok_or(OspError::EmptyTrainingSet)?;
    let (m, n) = (first.m(), first.n());
    if let Some(bad) = examples.iter().find(|e| e.m() != m || e.n() != n) {
        return Err(OspError::Training(format!(
            "example {} has a {}x{} error matrix, expected {m}x{n}",
            bad.series_id,
            bad.m(),
            bad.n()
        )));
    }
    let x: Vec<Vec<f64>> = examples
        .iter()
        .map(|e| e.features.as_slice().to_vec())
        .collect();
    let y: Vec<f64> = examples
        .iter()
        .map(|e| e.label(method.label_kind).get() as f64)
        .collect();
    let objective = match method.model_kind {
        ModelKind::Classification => Objective::Multiclass { num_classes: m },
        ModelKind::Regression => Objective::Regression,
    };
    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let mut model = GbdtModel::fit(&x, &y, objective, params, names)?;
    model.metadata.insert(meta::M.into(), m.to_string());
    model.metadata.insert(meta::N.into(), n.to_string());
    model.metadata.insert(meta::METHOD.into(), method.name());
    Ok(model)
}

/// Maps a raw regression output to an interval: round half away from zero,
/// then clamp into `1..=m`.
pub fn interval_from_regression(raw: f64, m: usize) -> IntervalLabel {
    let r = raw.round();
    let k = if r.is_nan() || r < 1.0 {
        1
    } else if r > m as f64 {
        m
    } else {
        r as usize
    };
    IntervalLabel::from_zero_based(k - 1)
}

/// Most probable interval; ties go to the lower interval.
pub fn interval_from_probabilities(probs: &[f64]) -> IntervalLabel {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    IntervalLabel::from_zero_based(best)
}

pub fn predict_interval(
    model: &GbdtModel,
    features: &FeatureVector,
    m: usize,
) -> Result<IntervalLabel> {
    let raw = model.predict_raw(features.as_slice())?;
    match model.objective {
        Objective::Regression => Ok(interval_from_regression(raw[0], m)),
        Objective::Multiclass { num_classes } => {
            if num_classes != m {
                return Err(OspError::InvalidConfig(format!(
                    "model predicts {num_classes} intervals but m = {m}"
                )));
            }
            Ok(interval_from_probabilities(&raw))
        }
    }
}

/// Elementwise mean, summing in input order and dividing once.
pub fn mean_forecast<'a>(parts: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let mut sum: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for p in parts {
        match &mut sum {
            None => sum = Some(p.to_vec()),
            Some(s) => {
                if s.len() != p.len() {
                    return Err(OspError::LengthMismatch(s.len(), p.len()));
                }
                for (a, b) in s.iter_mut().zip(p) {
                    *a += b;
                }
            }
        }
        count += 1;
    }
    let sum = sum.ok_or_else(|| OspError::Forecast("nothing to average".into()))?;
    Ok(sum.into_iter().map(|v| v / count as f64).collect())
}

/// Forecasts started from the candidates of one interval of `series`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalForecast {
    pub interval: IntervalLabel,
    pub start_indices: Vec<usize>,
    pub components: Vec<Forecast>,
    pub combined: Forecast,
}

/// Truncates at every surviving candidate of `interval`, forecasts `config.h`
/// steps from each suffix and averages. Candidates whose forecaster fails are
/// dropped.
pub fn forecast_from_interval(
    series: &TimeSeries,
    interval: IntervalLabel,
    config: &SegmentationConfig,
    spec: &ForecasterSpec,
) -> Result<IntervalForecast> {
    if interval.get() > config.m {
        return Err(OspError::OutOfRange {
            index: interval.get(),
            len: config.m,
        });
    }
    let grid = build_grid(series.len(), config)?;
    let mut start_indices = Vec::new();
    let mut components = Vec::new();
    let mut last_err = None;
    for idx in grid.interval(interval) {
        match series
            .truncate_from(idx)
            .and_then(|s| forecast(spec, &s, config.h))
        {
            Ok(fc) => {
                start_indices.push(idx);
                components.push(fc);
            }
            Err(e) => last_err = Some(e),
        }
    }
    if components.is_empty() {
        return Err(OspError::Forecast(format!(
            "every candidate in interval {} failed{}",
            interval.get(),
            last_err.map(|e| format!(": {e}")).unwrap_or_default()
        )));
    }
    let values = mean_forecast(components.iter().map(|c| c.values.as_slice()))?;
    let combined = Forecast {
        values,
        model_name: components[0].model_name.clone(),
        origin_length: series.len(),
    };
    Ok(IntervalForecast {
        interval,
        start_indices,
        components,
        combined,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OspForecastResult {
    pub series_id: String,
    pub predicted_interval: IntervalLabel,
    pub start_indices: Vec<usize>,
    pub component_forecasts: Vec<Forecast>,
    pub final_forecast: Forecast,
    pub method: OspMethod,
}

/// Features of the whole series pick the interval; the series is then
/// forecast from that interval's candidates.
pub fn osp_forecast(
    series: &TimeSeries,
    model: &GbdtModel,
    config: &SegmentationConfig,
    spec: &ForecasterSpec,
    method: OspMethod,
) -> Result<OspForecastResult> {
    let expected = match method.model_kind {
        ModelKind::Classification => matches!(model.objective, Objective::Multiclass { .. }),
        ModelKind::Regression => matches!(model.objective, Objective::Regression),
    };
    if !expected {
        return Err(OspError::InvalidConfig(format!(
            "method {method} does not match the model objective"
        )));
    }
    build_grid(series.len(), config)?;
    let features = extract_features(series).map_err(|e| OspError::Ineligible(e.to_string()))?;
    let interval = predict_interval(model, &features, config.m)?;
    let fc = forecast_from_interval(series, interval, config, spec)?;
    Ok(OspForecastResult {
        series_id: series.id().to_string(),
        predicted_interval: interval,
        start_indices: fc.start_indices,
        component_forecasts: fc.components,
        final_forecast: fc.combined,
        method,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    All,
    ClassificationOnly,
    RegressionOnly,
}

impl CombineMode {
    fn admits(&self, kind: ModelKind) -> bool {
        match self {
            CombineMode::All => true,
            CombineMode::ClassificationOnly => kind == ModelKind::Classification,
            CombineMode::RegressionOnly => kind == ModelKind::Regression,
        }
    }
}

/// Elementwise mean of the selected methods' final forecasts.
pub fn combine(results: &[OspForecastResult], mode: CombineMode) -> Result<Forecast> {
    let chosen: Vec<&OspForecastResult> = results
        .iter()
        .filter(|r| mode.admits(r.method.model_kind))
        .collect();
    let first = chosen
        .first()
        .ok_or_else(|| OspError::Forecast("no forecasts left to combine".into()))?;
    if let Some(other) = chosen.iter().find(|r| r.series_id != first.series_id) {
        return Err(OspError::InvalidValue(format!(
            "cannot combine forecasts of {} and {}",
            first.series_id, other.series_id
        )));
    }
    let values = mean_forecast(chosen.iter().map(|r| r.final_forecast.values.as_slice()))?;
    Ok(Forecast {
        values,
        model_name: "combined".into(),
        origin_length: first.final_forecast.origin_length,
    })
}

/// Independent, order-stable seed for stream `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut outer = SplitMix64::seed_from_u64(seed);
    let base = outer.next_u64();
    SplitMix64::seed_from_u64(base ^ index).next_u64()
}

/// Uniform interval draw in `1..=m`.
pub fn random_interval(m: usize, seed: u64) -> IntervalLabel {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    IntervalLabel::from_zero_based(rng.gen_range(0..m))
}

/// Forecast from a uniformly drawn interval instead of a predicted one.
pub fn random_start_forecast(
    series: &TimeSeries,
    config: &SegmentationConfig,
    spec: &ForecasterSpec,
    seed: u64,
) -> Result<Forecast> {
    let interval = random_interval(config.m, seed);
    Ok(forecast_from_interval(series, interval, config, spec)?.combined)
}

/// CUSUM of the standardised series, `max_k |S_k| / sqrt(T)`, and the `k`
/// attaining it. `None` for constant input.
pub fn cusum_statistic(values: &[f64]) -> Result<Option<(f64, usize)>> {
    let t = values.len();
    if t < 10 {
        return Err(OspError::TooShort { needed: 10, got: t });
    }
    let mean = values.iter().sum::<f64>() / t as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if var.is_nan() || var.sqrt() <= 1e-12 * max_abs.max(f64::MIN_POSITIVE) {
        return Ok(None);
    }
    let sd = var.sqrt();
    let mut s = 0.0;
    let mut best = (0.0, 1);
    for (k, v) in values[..t - 1].iter().enumerate() {
        s += (v - mean) / sd;
        if s.abs() > best.0 {
            best = (s.abs(), k + 1);
        }
    }
    Ok(Some((best.0 / (t as f64).sqrt(), best.1)))
}

/// Index of the first observation after a detected mean change.
pub fn cusum_changepoint_with(series: &TimeSeries, threshold: f64) -> Result<Option<usize>> {
    Ok(cusum_statistic(series.values())?.and_then(|(stat, k)| (stat > threshold).then_some(k)))
}

pub fn cusum_changepoint(series: &TimeSeries) -> Result<Option<usize>> {
    cusum_changepoint_with(series, CUSUM_THRESHOLD_95)
}

/// Forecasts from the detected change point, or from the whole series when
/// nothing is detected or the suffix would be too short.
pub fn changepoint_forecast_with(
    series: &TimeSeries,
    spec: &ForecasterSpec,
    h: usize,
    threshold: f64,
) -> Result<Forecast> {
    let f = series.frequency();
    let min_len = default_min_len(h, f).max(spec.min_length(f));
    let start = if series.len() >= 10 {
        cusum_changepoint_with(series, threshold)?
    } else {
        None
    };
    match start {
        Some(c) if series.len() - c >= min_len => forecast(spec, &series.truncate_from(c)?, h),
        _ => forecast(spec, series, h),
    }
}

pub fn changepoint_forecast(
    series: &TimeSeries,
    spec: &ForecasterSpec,
    h: usize,
) -> Result<Forecast> {
    changepoint_forecast_with(series, spec, h, CUSUM_THRESHOLD_95)
}
