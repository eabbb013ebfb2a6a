//! Feature extraction: a fixed 21-column vector describing trend, seasonality,
//! autocorrelation and forecastability of a series. This vector is the input
//! of the starting-interval model, so the column order is frozen and recorded
//! in every saved model.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{OspError, Result};
use crate::series::{difference, TimeSeries};

pub const FEATURE_COUNT: usize = 21;

/// Frozen column order. Changing it is a model-format break.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "length",
    "frequency",
    "nperiods",
    "seasonal_period",
    "trend",
    "spike",
    "linearity",
    "curvature",
    "e_acf1",
    "e_acf10",
    "seasonal_strength",
    "peak",
    "trough",
    "entropy",
    "x_acf1",
    "x_acf10",
    "diff1_acf1",
    "diff1_acf10",
    "diff2_acf1",
    "diff2_acf10",
    "seas_acf1",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn from_array(values: [f64; FEATURE_COUNT]) -> Self {
        Self { values }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let values: [f64; FEATURE_COUNT] = values.try_into().map_err(|_| {
            OspError::FeatureMismatch(format!(
                "expected {FEATURE_COUNT} features, got {}",
                values.len()
            ))
        })?;
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }

    pub fn names() -> &'static [&'static str] {
        &FEATURE_NAMES
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&n| n == name)
}

/// Additive split `values = trend + seasonal + remainder`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64
}

/// True when a sum of squared deviations is indistinguishable from rounding
/// noise relative to the magnitude of the data.
fn negligible(sum_sq_dev: f64, values: &[f64]) -> bool {
    let magnitude = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    sum_sq_dev <= values.len() as f64 * (1e-13 * magnitude).powi(2)
}

/// Sample autocorrelation at `lag`; zero for zero-variance input.
pub fn acf(values: &[f64], lag: usize) -> Result<f64> {
    if lag == 0 {
        return Err(OspError::InvalidValue("acf lag must be >= 1".into()));
    }
    if values.len() <= lag {
        return Err(OspError::TooShort {
            needed: lag + 1,
            got: values.len(),
        });
    }
    Ok(acf_unchecked(values, lag))
}

fn acf_unchecked(values: &[f64], lag: usize) -> f64 {
    if is_constant(values) {
        return 0.0;
    }
    let m = mean(values);
    let dev: Vec<f64> = values.iter().map(|v| v - m).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if negligible(denom, values) {
        return 0.0;
    }
    let num: f64 = dev[lag..].iter().zip(&dev).map(|(a, b)| a * b).sum();
    (num / denom).clamp(-1.0, 1.0)
}

/// Sum of the first ten squared autocorrelations.
pub fn acf10(values: &[f64]) -> Result<f64> {
    if values.len() <= 10 {
        return Err(OspError::TooShort {
            needed: 11,
            got: values.len(),
        });
    }
    Ok(acf_sum_sq(values, 10))
}

/// Sum of squared autocorrelations for lags `1..=min(max_lag, len - 1)`.
fn acf_sum_sq(values: &[f64], max_lag: usize) -> f64 {
    let top = max_lag.min(values.len().saturating_sub(1));
    (1..=top).map(|k| acf_unchecked(values, k).powi(2)).sum()
}

/// Centered moving average. Odd windows are plain means; even windows use the
/// 2 x window average. Returns the first fitted index and the fitted values.
pub(crate) fn centered_moving_average(values: &[f64], window: usize) -> (usize, Vec<f64>) {
    let half = window / 2;
    let n = values.len();
    let fitted = (half..n - half)
        .map(|t| {
            if window % 2 == 1 {
                values[t - half..=t + half].iter().sum::<f64>() / window as f64
            } else {
                let inner: f64 = values[t + 1 - half..t + half].iter().sum();
                (0.5 * values[t - half] + inner + 0.5 * values[t + half]) / window as f64
            }
        })
        .collect();
    (half, fitted)
}

/// OLS line through `(x_i, y_i)`, returned as (intercept, slope).
fn ols_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (my, 0.0);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Fill the trend at both ends by extrapolating a line fitted to the nearest
/// `segment` fitted values.
fn extrapolate_trend(n: usize, start: usize, fitted: &[f64], segment: usize) -> Vec<f64> {
    let k = segment.clamp(1, fitted.len());
    let end = start + fitted.len();
    let mut trend = vec![0.0; n];
    trend[start..end].copy_from_slice(fitted);

    let head_x: Vec<f64> = (start..start + k).map(|t| t as f64).collect();
    let (a, b) = ols_line(&head_x, &fitted[..k]);
    for (t, slot) in trend.iter_mut().enumerate().take(start) {
        *slot = a + b * t as f64;
    }
    let tail_x: Vec<f64> = (end - k..end).map(|t| t as f64).collect();
    let (a, b) = ols_line(&tail_x, &fitted[fitted.len() - k..]);
    for (t, slot) in trend.iter_mut().enumerate().skip(end) {
        *slot = a + b * t as f64;
    }
    trend
}

/// Classical additive decomposition by moving averages.
pub fn decompose(series: &TimeSeries) -> Result<Decomposition> {
    let values = series.values();
    let n = values.len();
    let freq = series.frequency();
    let needed = if freq > 1 { 2 * freq } else { 5 };
    if n < needed {
        return Err(OspError::TooShort { needed, got: n });
    }
    if is_constant(values) {
        return Ok(Decomposition {
            trend: values.to_vec(),
            seasonal: vec![0.0; n],
            remainder: vec![0.0; n],
        });
    }

    let window = if freq > 1 {
        freq
    } else {
        let w = ((n as f64 / 10.0).round() as usize).max(3);
        if w.is_multiple_of(2) {
            w + 1
        } else {
            w
        }
    };
    let (start, fitted) = centered_moving_average(values, window);
    let trend = extrapolate_trend(n, start, &fitted, window);

    let seasonal = if freq > 1 {
        let mut sums = vec![0.0; freq];
        let mut counts = vec![0usize; freq];
        for t in start..start + fitted.len() {
            sums[t % freq] += values[t] - trend[t];
            counts[t % freq] += 1;
        }
        let phase_means: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let centre = mean(&phase_means);
        (0..n).map(|t| phase_means[t % freq] - centre).collect()
    } else {
        vec![0.0; n]
    };

    let remainder = values
        .iter()
        .zip(&trend)
        .zip(&seasonal)
        .map(|((y, tr), s)| y - tr - s)
        .collect();
    Ok(Decomposition {
        trend,
        seasonal,
        remainder,
    })
}

fn strength(component: &[f64], remainder: &[f64]) -> f64 {
    let combined: Vec<f64> = component
        .iter()
        .zip(remainder)
        .map(|(c, r)| c + r)
        .collect();
    let denom = variance(&combined);
    if is_constant(&combined) || negligible(denom * combined.len() as f64, component) {
        return 0.0;
    }
    (1.0 - variance(remainder) / denom).clamp(0.0, 1.0)
}

pub fn trend_strength(d: &Decomposition) -> f64 {
    strength(&d.trend, &d.remainder)
}

pub fn seasonal_strength(d: &Decomposition) -> f64 {
    if d.seasonal.iter().all(|&s| s == 0.0) {
        return 0.0;
    }
    strength(&d.seasonal, &d.remainder)
}

/// Variance of the leave-one-out variances of the remainder.
pub fn spike(d: &Decomposition) -> Result<f64> {
    let r = &d.remainder;
    let n = r.len();
    if n < 3 {
        return Err(OspError::TooShort { needed: 3, got: n });
    }
    let m = mean(r);
    let dev: Vec<f64> = r.iter().map(|v| v - m).collect();
    let sum: f64 = dev.iter().sum();
    let sum_sq: f64 = dev.iter().map(|d| d * d).sum();
    let k = (n - 1) as f64;
    let loo: Vec<f64> = dev
        .iter()
        .map(|&x| {
            let s = sum - x;
            (sum_sq - x * x - s * s / k) / (k - 1.0)
        })
        .collect();
    Ok(sample_variance(&loo))
}

fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

/// Orthonormal polynomial basis of degree 0..=2 over `n` equispaced points,
/// built by Gram-Schmidt on {1, t', t'^2} with standardized time t'.
pub(crate) fn orthonormal_quadratic_basis(n: usize) -> [Vec<f64>; 3] {
    let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mt = mean(&t);
    let sd = (t.iter().map(|x| (x - mt).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let ts: Vec<f64> = t.iter().map(|x| (x - mt) / sd).collect();
    let raw = [
        vec![1.0; n],
        ts.clone(),
        ts.iter().map(|x| x * x).collect::<Vec<_>>(),
    ];

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(3);
    for v in raw {
        let mut u = v;
        for q in &basis {
            let p = dot(&u, q);
            u.iter_mut().zip(q).for_each(|(ui, qi)| *ui -= p * qi);
        }
        let norm = dot(&u, &u).sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        basis.push(u);
    }
    let mut it = basis.into_iter();
    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
}

/// Linear and quadratic coefficients of the trend on an orthonormal quadratic basis.
pub fn linearity_curvature(d: &Decomposition) -> Result<(f64, f64)> {
    let n = d.trend.len();
    if n < 3 {
        return Err(OspError::TooShort { needed: 3, got: n });
    }
    let [_, q1, q2] = orthonormal_quadratic_basis(n);
    let b1 = q1.iter().zip(&d.trend).map(|(q, y)| q * y).sum();
    let b2 = q2.iter().zip(&d.trend).map(|(q, y)| q * y).sum();
    Ok((b1, b2))
}

/// Normalized Shannon entropy of the periodogram, in [0, 1].
pub fn spectral_entropy(series: &TimeSeries) -> Result<f64> {
    let values = series.values();
    let n = values.len();
    if n < 8 {
        return Err(OspError::TooShort { needed: 8, got: n });
    }
    if is_constant(values) {
        return Ok(0.0);
    }
    let m = mean(values);
    let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let k = n / 2;
    let power: Vec<f64> = buf[1..=k].iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    let dev_sq: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    if total <= 0.0 || negligible(dev_sq, values) {
        return Ok(0.0);
    }
    let h: f64 = power
        .iter()
        .map(|&p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    Ok((h / (k as f64).ln()).clamp(0.0, 1.0))
}

/// `(acf(remainder, 1), acf10(remainder))`.
pub fn residual_acf_features(series: &TimeSeries) -> Result<(f64, f64)> {
    let d = decompose(series)?;
    Ok((acf(&d.remainder, 1)?, acf10(&d.remainder)?))
}

/// 1-based phase indices of the largest and smallest per-phase seasonal mean,
/// earliest phase on ties; `(0, 0)` for non-seasonal data.
pub fn peak_trough(d: &Decomposition, frequency: usize) -> (f64, f64) {
    if frequency <= 1 {
        return (0.0, 0.0);
    }
    let mut sums = vec![0.0; frequency];
    let mut counts = vec![0usize; frequency];
    for (t, s) in d.seasonal.iter().enumerate() {
        sums[t % frequency] += s;
        counts[t % frequency] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let magnitude = d.trend.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * magnitude;

    let mut peak = 0;
    let mut trough = 0;
    for (i, &v) in means.iter().enumerate() {
        if v > means[peak] + tol {
            peak = i;
        }
        if v < means[trough] - tol {
            trough = i;
        }
    }
    ((peak + 1) as f64, (trough + 1) as f64)
}

/// Minimum length accepted by [`extract_features`].
pub fn min_feature_length(frequency: usize) -> usize {
    12usize.max(2 * frequency + 1)
}

pub fn extract_features(series: &TimeSeries) -> Result<FeatureVector> {
    let n = series.len();
    let freq = series.frequency();
    let needed = min_feature_length(freq);
    if n < needed {
        return Err(OspError::TooShort { needed, got: n });
    }
    let values = series.values();
    let d = decompose(series)?;
    let (linearity, curvature) = linearity_curvature(&d)?;
    let (peak, trough) = peak_trough(&d, freq);
    let diff1 = difference(values, 1, 1)?;
    let diff2 = difference(values, 1, 2)?;
    let seasonal_lag = if freq > 1 { freq } else { 1 };

    Ok(FeatureVector::from_array([
        n as f64,
        freq as f64,
        if freq > 1 { 1.0 } else { 0.0 },
        freq as f64,
        trend_strength(&d),
        spike(&d)?,
        linearity,
        curvature,
        acf_unchecked(&d.remainder, 1),
        acf_sum_sq(&d.remainder, 10),
        seasonal_strength(&d),
        peak,
        trough,
        spectral_entropy(series)?,
        acf_unchecked(values, 1),
        acf_sum_sq(values, 10),
        acf_unchecked(&diff1, 1),
        acf_sum_sq(&diff1, 10),
        acf_unchecked(&diff2, 1),
        acf_sum_sq(&diff2, 10),
        acf_unchecked(values, seasonal_lag),
    ]))
}

/// Sinusoid helper shared by tests.
#[cfg(test)]
pub(crate) fn sinusoid(n: usize, cycles: f64) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..n)
        .map(|t| (2.0 * PI * cycles * t as f64 / n as f64).sin())
        .collect()
}
