//! Base forecasting models. Every model is deterministic: smoothing constants
//! come from a fixed grid search on in-sample one-step squared error, never
//! from a stochastic optimiser.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{OspError, Result};
use crate::features::{acf, centered_moving_average};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    Naive,
    Snaive,
    Ses,
    Holt,
    HoltWintersAdd,
    EtsAuto,
    Theta,
}

impl ForecasterKind {
    pub fn name(&self) -> &'static str {
        match self {
            ForecasterKind::Naive => "naive",
            ForecasterKind::Snaive => "snaive",
            ForecasterKind::Ses => "ses",
            ForecasterKind::Holt => "holt",
            ForecasterKind::HoltWintersAdd => "hw",
            ForecasterKind::EtsAuto => "ets",
            ForecasterKind::Theta => "theta",
        }
    }

    pub fn is_seasonal(&self) -> bool {
        matches!(
            self,
            ForecasterKind::Snaive | ForecasterKind::HoltWintersAdd
        )
    }
}

impl fmt::Display for ForecasterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForecasterKind {
    type Err = OspError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "naive" => ForecasterKind::Naive,
            "snaive" => ForecasterKind::Snaive,
            "ses" => ForecasterKind::Ses,
            "holt" => ForecasterKind::Holt,
            "hw" | "holt_winters_add" => ForecasterKind::HoltWintersAdd,
            "ets" | "ets_auto" => ForecasterKind::EtsAuto,
            "theta" => ForecasterKind::Theta,
            other => {
                return Err(OspError::InvalidSpec(format!(
                    "unknown base model `{other}`"
                )))
            }
        })
    }
}

/// A base model plus optional fixed smoothing constants. `None` means the
/// constant is chosen by grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecasterSpec {
    pub kind: ForecasterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl ForecasterSpec {
    pub fn new(kind: ForecasterKind) -> Self {
        Self {
            kind,
            alpha: None,
            beta: None,
            gamma: None,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(OspError::InvalidSpec(format!(
                        "{name} must lie in (0, 1], got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Smallest series length this model accepts at the given frequency.
    pub fn min_length(&self, frequency: usize) -> usize {
        match self.kind {
            ForecasterKind::Naive => 1,
            ForecasterKind::Ses
            | ForecasterKind::Holt
            | ForecasterKind::Theta
            | ForecasterKind::EtsAuto => 4,
            ForecasterKind::Snaive | ForecasterKind::HoltWintersAdd => 2 * frequency,
        }
    }
}

impl From<ForecasterKind> for ForecasterSpec {
    fn from(kind: ForecasterKind) -> Self {
        Self::new(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub values: Vec<f64>,
    pub model_name: String,
    pub origin_length: usize,
}

/// One-step-ahead in-sample fit. Positions with no usable history are fitted
/// by the observation itself, so their residual is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InSampleFit {
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Smoothing constants actually used, in (alpha, beta, gamma) order.
    pub params: Vec<f64>,
    pub model_name: String,
}

impl InSampleFit {
    pub fn sse(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

/// Smoothing grid `{0.01, ..., 0.99}`.
pub fn fine_grid() -> impl Iterator<Item = f64> + Clone {
    (1..=99).map(|k| k as f64 / 100.0)
}

/// Coarse grid `{0.05, 0.15, ..., 0.95}` used for the three-parameter model.
pub fn coarse_grid() -> impl Iterator<Item = f64> + Clone {
    (0..10).map(|k| (2 * k + 1) as f64 / 20.0)
}

fn grid_for(fixed: Option<f64>, grid: impl Iterator<Item = f64>) -> Vec<f64> {
    match fixed {
        Some(v) => vec![v],
        None => grid.collect(),
    }
}

// ---------------------------------------------------------------------------
// recursions

fn ses_run(y: &[f64], alpha: f64, fitted: Option<&mut Vec<f64>>) -> (f64, f64) {
    let mut level = y[0];
    let mut sse = 0.0;
    let mut out = fitted;
    if let Some(f) = out.as_deref_mut() {
        f.push(y[0]);
    }
    for &obs in &y[1..] {
        let e = obs - level;
        sse += e * e;
        if let Some(f) = out.as_deref_mut() {
            f.push(level);
        }
        level = alpha * obs + (1.0 - alpha) * level;
    }
    (sse, level)
}

fn holt_run(y: &[f64], alpha: f64, beta: f64, fitted: Option<&mut Vec<f64>>) -> (f64, f64, f64) {
    let mut level = y[0];
    let mut trend = y[1] - y[0];
    let mut sse = 0.0;
    let mut out = fitted;
    if let Some(f) = out.as_deref_mut() {
        f.push(y[0]);
    }
    for &obs in &y[1..] {
        let pred = level + trend;
        let e = obs - pred;
        sse += e * e;
        if let Some(f) = out.as_deref_mut() {
            f.push(pred);
        }
        let new_level = alpha * obs + (1.0 - alpha) * pred;
        trend = beta * (new_level - level) + (1.0 - beta) * trend;
        level = new_level;
    }
    (sse, level, trend)
}

struct HwState {
    level: f64,
    trend: f64,
    season: Vec<f64>,
}

fn hw_run(
    y: &[f64],
    period: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    fitted: Option<&mut Vec<f64>>,
) -> (f64, HwState) {
    let first_mean = y[..period].iter().sum::<f64>() / period as f64;
    let second_mean = y[period..2 * period].iter().sum::<f64>() / period as f64;
    let mut trend = (second_mean - first_mean) / period as f64;
    let mut level = first_mean + trend * (period as f64 - 1.0) / 2.0;
    let mut season: Vec<f64> = y[..period].iter().map(|v| v - first_mean).collect();
    let mut sse = 0.0;
    let mut out = fitted;
    if let Some(f) = out.as_deref_mut() {
        f.extend_from_slice(&y[..period]);
    }
    for (t, &obs) in y.iter().enumerate().skip(period) {
        let phase = t % period;
        let pred = level + trend + season[phase];
        let e = obs - pred;
        sse += e * e;
        if let Some(f) = out.as_deref_mut() {
            f.push(pred);
        }
        let new_level = alpha * (obs - season[phase]) + (1.0 - alpha) * (level + trend);
        trend = beta * (new_level - level) + (1.0 - beta) * trend;
        season[phase] = gamma * (obs - new_level) + (1.0 - gamma) * season[phase];
        level = new_level;
    }
    (
        sse,
        HwState {
            level,
            trend,
            season,
        },
    )
}

// ---------------------------------------------------------------------------
// fitted models

#[derive(Debug, Clone)]
enum Fitted {
    Naive {
        last: f64,
    },
    Snaive {
        cycle: Vec<f64>,
    },
    Ses {
        alpha: f64,
        level: f64,
    },
    Holt {
        alpha: f64,
        beta: f64,
        level: f64,
        trend: f64,
    },
    HoltWinters {
        alpha: f64,
        beta: f64,
        gamma: f64,
        level: f64,
        trend: f64,
        season: Vec<f64>,
        n: usize,
    },
    Theta {
        alpha: f64,
        level: f64,
        slope: f64,
        seasonal: Option<(Vec<f64>, usize)>,
    },
}

impl Fitted {
    fn project(&self, h: usize) -> Vec<f64> {
        match self {
            Fitted::Naive { last } => vec![*last; h],
            Fitted::Snaive { cycle } => (0..h).map(|k| cycle[k % cycle.len()]).collect(),
            Fitted::Ses { level, .. } => vec![*level; h],
            Fitted::Holt { level, trend, .. } => {
                (1..=h).map(|k| level + k as f64 * trend).collect()
            }
            Fitted::HoltWinters {
                level,
                trend,
                season,
                n,
                ..
            } => (1..=h)
                .map(|k| level + k as f64 * trend + season[(n - 1 + k) % season.len()])
                .collect(),
            Fitted::Theta {
                level,
                slope,
                seasonal,
                ..
            } => (1..=h)
                .map(|k| {
                    let v = level + 0.5 * slope * k as f64;
                    match seasonal {
                        Some((idx, n)) => v * idx[(n - 1 + k) % idx.len()],
                        None => v,
                    }
                })
                .collect(),
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Fitted::Naive { .. } | Fitted::Snaive { .. } => vec![],
            Fitted::Ses { alpha, .. } | Fitted::Theta { alpha, .. } => vec![*alpha],
            Fitted::Holt { alpha, beta, .. } => vec![*alpha, *beta],
            Fitted::HoltWinters {
                alpha, beta, gamma, ..
            } => vec![*alpha, *beta, *gamma],
        }
    }
}

struct Fit {
    model: Fitted,
    fitted: Vec<f64>,
    name: String,
}

fn check_length(spec: &ForecasterSpec, series: &TimeSeries) -> Result<()> {
    spec.validate()?;
    if spec.kind.is_seasonal() && series.frequency() <= 1 {
        return Err(OspError::InvalidSpec(format!(
            "{} requires a seasonal frequency > 1",
            spec.kind
        )));
    }
    let needed = spec.min_length(series.frequency());
    if series.len() < needed {
        return Err(OspError::TooShort {
            needed,
            got: series.len(),
        });
    }
    Ok(())
}

fn fit_ses(y: &[f64], fixed: Option<f64>) -> Fit {
    let mut best = (f64::INFINITY, 0.0);
    for alpha in grid_for(fixed, fine_grid()) {
        let (sse, _) = ses_run(y, alpha, None);
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    let alpha = best.1;
    let mut fitted = Vec::with_capacity(y.len());
    let (_, level) = ses_run(y, alpha, Some(&mut fitted));
    Fit {
        model: Fitted::Ses { alpha, level },
        fitted,
        name: "ses".into(),
    }
}

fn fit_holt(y: &[f64], spec: &ForecasterSpec) -> Fit {
    let betas = grid_for(spec.beta, fine_grid());
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for alpha in grid_for(spec.alpha, fine_grid()) {
        for &beta in &betas {
            let (sse, _, _) = holt_run(y, alpha, beta, None);
            if sse < best.0 {
                best = (sse, alpha, beta);
            }
        }
    }
    let (_, alpha, beta) = best;
    let mut fitted = Vec::with_capacity(y.len());
    let (_, level, trend) = holt_run(y, alpha, beta, Some(&mut fitted));
    Fit {
        model: Fitted::Holt {
            alpha,
            beta,
            level,
            trend,
        },
        fitted,
        name: "holt".into(),
    }
}

fn fit_hw(y: &[f64], period: usize, spec: &ForecasterSpec) -> Fit {
    let betas = grid_for(spec.beta, coarse_grid());
    let gammas = grid_for(spec.gamma, coarse_grid());
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for alpha in grid_for(spec.alpha, coarse_grid()) {
        for &beta in &betas {
            for &gamma in &gammas {
                let (sse, _) = hw_run(y, period, alpha, beta, gamma, None);
                if sse < best.0 {
                    best = (sse, alpha, beta, gamma);
                }
            }
        }
    }
    let (_, alpha, beta, gamma) = best;
    let mut fitted = Vec::with_capacity(y.len());
    let (_, st) = hw_run(y, period, alpha, beta, gamma, Some(&mut fitted));
    Fit {
        model: Fitted::HoltWinters {
            alpha,
            beta,
            gamma,
            level: st.level,
            trend: st.trend,
            season: st.season,
            n: y.len(),
        },
        fitted,
        name: "hw".into(),
    }
}

/// Corrected AIC under a Gaussian one-step error likelihood.
fn aicc(sse: f64, n: usize, k: usize) -> Option<f64> {
    if n <= k + 1 {
        return None;
    }
    let n_f = n as f64;
    let k_f = k as f64;
    let sigma2 = (sse / n_f).max(f64::MIN_POSITIVE);
    Some(n_f * sigma2.ln() + 2.0 * k_f + 2.0 * k_f * (k_f + 1.0) / (n_f - k_f - 1.0))
}

fn sse_of(y: &[f64], fitted: &[f64]) -> f64 {
    y.iter().zip(fitted).map(|(a, f)| (a - f).powi(2)).sum()
}

fn fit_ets(series: &TimeSeries, spec: &ForecasterSpec) -> Result<Fit> {
    let y = series.values();
    let n = y.len();
    let freq = series.frequency();
    let mut candidates: Vec<(Fit, usize)> = vec![(fit_ses(y, spec.alpha), 2)];
    if n >= 4 {
        candidates.push((fit_holt(y, spec), 4));
    }
    if freq > 1 && n >= 2 * freq {
        candidates.push((fit_hw(y, freq, spec), 3 + 2 + freq));
    }
    let mut best: Option<(f64, Fit)> = None;
    for (fit, k) in candidates {
        let Some(score) = aicc(sse_of(y, &fit.fitted), n, k) else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit));
        }
    }
    let (_, mut fit) = best.ok_or(OspError::TooShort { needed: 4, got: n })?;
    fit.name = format!("ets({})", fit.name);
    Ok(fit)
}

/// Multiplicative seasonal indices (mean 1) by classical decomposition.
fn multiplicative_indices(y: &[f64], period: usize) -> Vec<f64> {
    let (start, trend) = centered_moving_average(y, period);
    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (i, tr) in trend.iter().enumerate() {
        let t = start + i;
        sums[t % period] += y[t] / tr;
        counts[t % period] += 1;
    }
    let raw: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let m = raw.iter().sum::<f64>() / period as f64;
    raw.iter().map(|r| r / m).collect()
}

fn ols_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mt = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in y.iter().enumerate() {
        let dt = t as f64 - mt;
        sxy += dt * (v - my);
        sxx += dt * dt;
    }
    sxy / sxx
}

/// Whether the theta method should deseasonalize: seasonal frequency, enough
/// history, strictly positive data and a significant autocorrelation at the
/// seasonal lag (90% level).
pub fn theta_uses_seasonal_adjustment(series: &TimeSeries) -> bool {
    let y = series.values();
    let f = series.frequency();
    if f <= 1 || y.len() < 2 * f || y.iter().any(|&v| v <= 0.0) {
        return false;
    }
    match acf(y, f) {
        Ok(r) => r.abs() > 1.645 / (y.len() as f64).sqrt(),
        Err(_) => false,
    }
}

fn fit_theta(series: &TimeSeries, spec: &ForecasterSpec) -> Fit {
    let y = series.values();
    let f = series.frequency();
    let seasonal = theta_uses_seasonal_adjustment(series).then(|| multiplicative_indices(y, f));
    let adjusted: Vec<f64> = match &seasonal {
        Some(idx) => y.iter().enumerate().map(|(t, v)| v / idx[t % f]).collect(),
        None => y.to_vec(),
    };
    let ses = fit_ses(&adjusted, spec.alpha);
    let Fitted::Ses { alpha, level } = ses.model else {
        unreachable!()
    };
    let slope = ols_slope(&adjusted);
    let fitted = ses
        .fitted
        .iter()
        .enumerate()
        .map(|(t, v)| {
            let base = if t == 0 { *v } else { v + 0.5 * slope };
            match &seasonal {
                Some(idx) => base * idx[t % f],
                None => base,
            }
        })
        .collect();
    Fit {
        model: Fitted::Theta {
            alpha,
            level,
            slope,
            seasonal: seasonal.map(|idx| (idx, y.len())),
        },
        fitted,
        name: "theta".into(),
    }
}

fn fit(spec: &ForecasterSpec, series: &TimeSeries) -> Result<Fit> {
    check_length(spec, series)?;
    let y = series.values();
    let f = series.frequency();
    Ok(match spec.kind {
        ForecasterKind::Naive => {
            let fitted = std::iter::once(y[0])
                .chain(y[..y.len() - 1].iter().copied())
                .collect();
            Fit {
                model: Fitted::Naive {
                    last: series.last(),
                },
                fitted,
                name: "naive".into(),
            }
        }
        ForecasterKind::Snaive => {
            let fitted = (0..y.len())
                .map(|t| if t < f { y[t] } else { y[t - f] })
                .collect();
            Fit {
                model: Fitted::Snaive {
                    cycle: y[y.len() - f..].to_vec(),
                },
                fitted,
                name: "snaive".into(),
            }
        }
        ForecasterKind::Ses => fit_ses(y, spec.alpha),
        ForecasterKind::Holt => fit_holt(y, spec),
        ForecasterKind::HoltWintersAdd => fit_hw(y, f, spec),
        ForecasterKind::EtsAuto => fit_ets(series, spec)?,
        ForecasterKind::Theta => fit_theta(series, spec),
    })
}

/// h-step point forecast from the end of `series`.
pub fn forecast(spec: &ForecasterSpec, series: &TimeSeries, h: usize) -> Result<Forecast> {
    if h == 0 {
        return Err(OspError::InvalidConfig("horizon must be >= 1".into()));
    }
    let fit = fit(spec, series)?;
    let values = fit.model.project(h);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(OspError::Forecast(format!(
            "{} produced a non-finite forecast",
            fit.name
        )));
    }
    Ok(Forecast {
        values,
        model_name: fit.name,
        origin_length: series.len(),
    })
}

pub fn in_sample_fit(spec: &ForecasterSpec, series: &TimeSeries) -> Result<InSampleFit> {
    let fit = fit(spec, series)?;
    let residuals = series
        .values()
        .iter()
        .zip(&fit.fitted)
        .map(|(y, f)| y - f)
        .collect();
    Ok(InSampleFit {
        params: fit.model.params(),
        fitted: fit.fitted,
        residuals,
        model_name: fit.name,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn ts(values: Vec<f64>, freq: usize) -> TimeSeries {
        TimeSeries::new("t", values, freq).unwrap()
    }

    fn noisy(n: usize, freq: usize, seed: u64) -> Vec<f64> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|t| {
                let season = if freq > 1 {
                    3.0 * ((t % freq) as f64 - freq as f64 / 2.0)
                } else {
                    0.0
                };
                50.0 + 0.3 * t as f64 + season + normal.sample(&mut rng)
            })
            .collect()
    }

    fn spec(kind: ForecasterKind) -> ForecasterSpec {
        ForecasterSpec::new(kind)
    }

    #[test]
    fn naive_and_snaive() {
        let f = forecast(&spec(ForecasterKind::Naive), &ts(vec![1., 2., 3.], 1), 2).unwrap();
        assert_eq!(f.values, vec![3., 3.]);
        assert_eq!(f.origin_length, 3);
        let s = ts((1..=8).map(f64::from).collect(), 4);
        assert_eq!(
            forecast(&spec(ForecasterKind::Snaive), &s, 4)
                .unwrap()
                .values,
            vec![5., 6., 7., 8.]
        );
        assert_eq!(
            forecast(&spec(ForecasterKind::Snaive), &s, 6)
                .unwrap()
                .values,
            vec![5., 6., 7., 8., 5., 6.]
        );
    }

    #[test]
    fn ses_alpha_one_is_naive() {
        let y = noisy(30, 1, 4);
        let f = forecast(
            &spec(ForecasterKind::Ses).with_alpha(1.0),
            &ts(y.clone(), 1),
            3,
        )
        .unwrap();
        assert_eq!(f.values, vec![*y.last().unwrap(); 3]);
    }

    #[test]
    fn spec_errors() {
        assert!(matches!(
            forecast(&spec(ForecasterKind::Snaive), &ts(noisy(20, 1, 1), 1), 2),
            Err(OspError::InvalidSpec(_))
        ));
        assert!(matches!(
            forecast(
                &spec(ForecasterKind::HoltWintersAdd),
                &ts(noisy(7, 4, 1), 4),
                2
            ),
            Err(OspError::TooShort { needed: 8, got: 7 })
        ));
        assert!(forecast(&spec(ForecasterKind::Ses), &ts(vec![1., 2., 3.], 1), 2).is_err());
        assert!(forecast(&spec(ForecasterKind::Theta), &ts(vec![1., 2., 3.], 1), 2).is_err());
        assert!(forecast(
            &spec(ForecasterKind::Ses).with_alpha(1.5),
            &ts(noisy(10, 1, 1), 1),
            2
        )
        .is_err());
        assert!(forecast(&spec(ForecasterKind::Naive), &ts(vec![1.], 1), 0).is_err());
        assert!(forecast(&spec(ForecasterKind::Naive), &ts(vec![1.], 1), 1).is_ok());
    }

    #[test]
    fn in_sample_examples() {
        let y = vec![3., 1., 4., 1., 5.];
        let fit = in_sample_fit(&spec(ForecasterKind::Naive), &ts(y.clone(), 1)).unwrap();
        assert_eq!(&fit.fitted[1..], &y[..4]);

        let fit = in_sample_fit(&spec(ForecasterKind::Ses), &ts(vec![2.0; 10], 1)).unwrap();
        assert!(fit.residuals[1..].iter().all(|&r| r == 0.0));

        // the reported SSE is the minimum over the grid, re-evaluated independently
        let s = ts(noisy(40, 1, 9), 1);
        let fit = in_sample_fit(&spec(ForecasterKind::Ses), &s).unwrap();
        let y = s.values();
        let oracle = |alpha: f64| {
            let mut level = y[0];
            let mut sse = 0.0;
            for &v in &y[1..] {
                sse += (v - level) * (v - level);
                level = alpha * v + (1.0 - alpha) * level;
            }
            sse
        };
        let best = (1..=99)
            .map(|k| oracle(k as f64 / 100.0))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(fit.sse(), oracle(fit.params[0]));
        assert_eq!(fit.sse(), best);
    }

    /// Independent SES-plus-half-slope reference for a non-seasonal series.
    fn theta_reference(y: &[f64], h: usize) -> Vec<f64> {
        let mut best_sse = f64::INFINITY;
        let mut best_level = 0.0;
        for k in 1..=99 {
            let a = k as f64 / 100.0;
            let mut level = y[0];
            let mut sse = 0.0;
            for &v in &y[1..] {
                sse += (v - level).powi(2);
                level += a * (v - level);
            }
            if sse < best_sse {
                best_sse = sse;
                best_level = level;
            }
        }
        let n = y.len() as f64;
        let tbar = (n + 1.0) / 2.0;
        let ybar = y.iter().sum::<f64>() / n;
        let num: f64 = y
            .iter()
            .enumerate()
            .map(|(i, v)| (i as f64 + 1.0 - tbar) * (v - ybar))
            .sum();
        let den: f64 = (1..=y.len()).map(|i| (i as f64 - tbar).powi(2)).sum();
        let b = num / den;
        (1..=h).map(|k| best_level + 0.5 * b * k as f64).collect()
    }

    #[test]
    fn theta_on_ramp_matches_reference() {
        let y: Vec<f64> = (1..=50).map(f64::from).collect();
        let f = forecast(&spec(ForecasterKind::Theta), &ts(y.clone(), 1), 1).unwrap();
        let r = theta_reference(&y, 1);
        assert!(
            (f.values[0] - r[0]).abs() < 1e-6,
            "{} vs {}",
            f.values[0],
            r[0]
        );

        let f = forecast(&spec(ForecasterKind::Theta), &ts(y, 1), 6).unwrap();
        for w in f.values.windows(2) {
            assert!((w[1] - w[0] - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn theta_seasonal_adjustment_triggers() {
        let y: Vec<f64> = (0..48)
            .map(|t| 100.0 + 20.0 * [1., -1., 0.5, -0.5][t % 4])
            .collect();
        let s = ts(y, 4);
        assert!(theta_uses_seasonal_adjustment(&s));
        let f = forecast(&spec(ForecasterKind::Theta), &s, 4).unwrap();
        // reseasonalized forecast follows the cycle
        assert!(f.values[0] > f.values[1]);
        assert!(!theta_uses_seasonal_adjustment(&ts(noisy(48, 1, 2), 1)));
    }

    #[test]
    fn ets_picks_a_candidate() {
        let f = forecast(&spec(ForecasterKind::EtsAuto), &ts(noisy(48, 4, 5), 4), 8).unwrap();
        assert!(f.model_name.starts_with("ets("));
        assert_eq!(f.values.len(), 8);
        // a pure level with noise and no trend should not need the seasonal model
        let flat: Vec<f64> = noisy(60, 1, 6)
            .iter()
            .enumerate()
            .map(|(t, v)| v - 0.3 * t as f64)
            .collect();
        let f = forecast(&spec(ForecasterKind::EtsAuto), &ts(flat, 1), 3).unwrap();
        assert!(f.model_name == "ets(ses)" || f.model_name == "ets(holt)");
    }

    #[test]
    fn holt_tracks_exact_line() {
        let y: Vec<f64> = (0..20).map(|t| 2.0 + 3.0 * t as f64).collect();
        let f = forecast(&spec(ForecasterKind::Holt), &ts(y, 1), 3).unwrap();
        for (k, v) in f.values.iter().enumerate() {
            assert!((v - (2.0 + 3.0 * (20 + k) as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn grids() {
        let g: Vec<f64> = coarse_grid().collect();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[9], 0.95);
        assert_eq!(fine_grid().count(), 99);
    }

    const ALL: [ForecasterKind; 7] = [
        ForecasterKind::Naive,
        ForecasterKind::Snaive,
        ForecasterKind::Ses,
        ForecasterKind::Holt,
        ForecasterKind::HoltWintersAdd,
        ForecasterKind::EtsAuto,
        ForecasterKind::Theta,
    ];

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn deterministic_and_equivariant(seed in 0u64..10_000, shift in -100.0f64..100.0, scale in 0.1f64..10.0) {
            let y = noisy(36, 4, seed);
            for kind in ALL {
                let s = spec(kind);
                let base = forecast(&s, &ts(y.clone(), 4), 6).unwrap();
                prop_assert_eq!(&base, &forecast(&s, &ts(y.clone(), 4), 6).unwrap());

                let scaled: Vec<f64> = y.iter().map(|v| v * scale).collect();
                let fs = forecast(&s, &ts(scaled, 4), 6).unwrap();
                let expect: Vec<f64> = base.values.iter().map(|v| v * scale).collect();
                prop_assert!(close(&fs.values, &expect, 1e-8), "{kind} scale");

                if kind != ForecasterKind::Theta {
                    let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
                    let fsh = forecast(&s, &ts(shifted, 4), 6).unwrap();
                    let expect: Vec<f64> = base.values.iter().map(|v| v + shift).collect();
                    prop_assert!(close(&fsh.values, &expect, 1e-8), "{kind} shift");
                }
            }
        }
    }
}
