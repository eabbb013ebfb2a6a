//! Forecast accuracy metrics. MASE is the optimisation target everywhere in the
//! pipeline; its scale is the in-sample mean absolute lag-1 difference, also for
//! seasonal data.

use serde::{Deserialize, Serialize};

use crate::error::{OspError, Result};

/// Which series supplies the MASE denominator while labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaseScale {
    /// The truncated suffix actually fed to the forecaster.
    #[default]
    Suffix,
    /// The whole pre-holdout series.
    Full,
}

impl std::str::FromStr for MaseScale {
    type Err = OspError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "suffix" => Ok(MaseScale::Suffix),
            "full" => Ok(MaseScale::Full),
            other => Err(OspError::InvalidConfig(format!(
                "unknown MASE scale `{other}`"
            ))),
        }
    }
}

/// Mean absolute lag-1 difference of the in-sample series.
pub fn mase_scale(train: &[f64]) -> Result<f64> {
    if train.len() < 2 {
        return Err(OspError::TooShort {
            needed: 2,
            got: train.len(),
        });
    }
    let total: f64 = train.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let scale = total / (train.len() - 1) as f64;
    if scale == 0.0 {
        return Err(OspError::UndefinedScale);
    }
    Ok(scale)
}

fn check_lengths(actual: &[f64], forecast: &[f64]) -> Result<()> {
    if actual.len() != forecast.len() {
        return Err(OspError::LengthMismatch(actual.len(), forecast.len()));
    }
    if actual.is_empty() {
        return Err(OspError::TooShort { needed: 1, got: 0 });
    }
    Ok(())
}

fn mean_absolute_error(actual: &[f64], forecast: &[f64]) -> f64 {
    actual
        .iter()
        .zip(forecast)
        .map(|(a, f)| (a - f).abs())
        .sum::<f64>()
        / actual.len() as f64
}

pub fn mase(train: &[f64], actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_lengths(actual, forecast)?;
    let scale = mase_scale(train)?;
    Ok(mean_absolute_error(actual, forecast) / scale)
}

/// MASE with a precomputed denominator.
pub fn mase_with_scale(scale: f64, actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_lengths(actual, forecast)?;
    if scale.is_nan() || scale <= 0.0 {
        return Err(OspError::UndefinedScale);
    }
    Ok(mean_absolute_error(actual, forecast) / scale)
}

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<f64> {
    check_lengths(actual, forecast)?;
    if let Some(pos) = actual.iter().position(|&a| a == 0.0) {
        return Err(OspError::UndefinedMape(pos));
    }
    let total: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(a, f)| ((f - a) / a).abs())
        .sum();
    Ok(100.0 * total / actual.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// `None` when the in-sample scale is zero.
    pub mase: Option<f64>,
    /// `None` when some actual value is zero.
    pub mape: Option<f64>,
    pub abs_errors: Vec<f64>,
}

/// Both metrics at once; each is flagged independently when undefined.
pub fn evaluate(train: &[f64], actual: &[f64], forecast: &[f64]) -> Result<ErrorReport> {
    check_lengths(actual, forecast)?;
    let mase = match mase(train, actual, forecast) {
        Ok(v) => Some(v),
        Err(OspError::UndefinedScale) => None,
        Err(e) => return Err(e),
    };
    let mape = mape(actual, forecast).ok();
    Ok(ErrorReport {
        mase,
        mape,
        abs_errors: actual
            .iter()
            .zip(forecast)
            .map(|(a, f)| (a - f).abs())
            .collect(),
    })
}

/// Arithmetic mean across series, skipping undefined entries.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mase_examples() {
        assert_eq!(mase(&[1., 2., 3., 4.], &[5., 6.], &[4., 4.]).unwrap(), 1.5);
        assert_eq!(mase(&[1., 2., 3., 4.], &[5., 6.], &[5., 6.]).unwrap(), 0.0);
        assert_eq!(mase(&[0., 2., 0., 2.], &[3., 1.], &[1., 1.]).unwrap(), 0.5);
    }

    #[test]
    fn mase_errors() {
        assert!(matches!(
            mase(&[3., 3., 3.], &[1.], &[2.]),
            Err(OspError::UndefinedScale)
        ));
        assert!(matches!(
            mase(&[1., 2.], &[1., 2.], &[1.]),
            Err(OspError::LengthMismatch(2, 1))
        ));
        assert!(mase(&[1.], &[1.], &[1.]).is_err());
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[100., 100.], &[90., 110.]).unwrap(), 10.0);
        assert_eq!(mape(&[3., 7.], &[3., 7.]).unwrap(), 0.0);
        assert!(matches!(
            mape(&[0., 5.], &[1., 1.]),
            Err(OspError::UndefinedMape(0))
        ));
    }

    #[test]
    fn evaluate_bundles_both() {
        let r = evaluate(&[1., 2., 3.], &[4., 5.], &[4., 5.]).unwrap();
        assert_eq!(r.mase, Some(0.0));
        assert_eq!(r.mape, Some(0.0));

        let train = [1., 3., 2., 5.];
        let actual = [4., 6.];
        let forecast = [5., 5.];
        let r = evaluate(&train, &actual, &forecast).unwrap();
        assert_eq!(r.mase.unwrap(), mase(&train, &actual, &forecast).unwrap());
        assert_eq!(r.mape.unwrap(), mape(&actual, &forecast).unwrap());
        assert_eq!(r.abs_errors, vec![1., 1.]);

        let r = evaluate(&[2., 2.], &[0., 1.], &[1., 1.]).unwrap();
        assert_eq!(r.mase, None);
        assert_eq!(r.mape, None);
    }

    #[test]
    fn collection_average_is_arithmetic_mean() {
        assert_eq!(
            mean_defined([Some(1.0), Some(2.0), None, Some(6.0)]),
            Some(3.0)
        );
        assert_eq!(mean_defined([None, None]), None);
    }

    proptest! {
        #[test]
        fn scale_invariance(
            train in prop::collection::vec(1.0f64..100.0, 3..20),
            pairs in prop::collection::vec((1.0f64..100.0, 1.0f64..100.0), 1..8),
            c in 0.01f64..100.0,
        ) {
            let (actual, forecast): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(mase_scale(&train).is_ok());
            let scaled = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
            let a = mase(&train, &actual, &forecast).unwrap();
            let b = mase(&scaled(&train), &scaled(&actual), &scaled(&forecast)).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
            let a = mape(&actual, &forecast).unwrap();
            let b = mape(&scaled(&actual), &scaled(&forecast)).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
        }

        #[test]
        fn nonnegative_and_zero_iff_equal(
            train in prop::collection::vec(-50.0f64..50.0, 3..20),
            pairs in prop::collection::vec((1.0f64..100.0, -100.0f64..100.0), 1..8),
        ) {
            prop_assume!(mase_scale(&train).is_ok());
            let (actual, forecast): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = mase(&train, &actual, &forecast).unwrap();
            let p = mape(&actual, &forecast).unwrap();
            prop_assert!(m >= 0.0 && p >= 0.0);
            prop_assert_eq!(m == 0.0, actual == forecast);
            prop_assert_eq!(mase(&train, &actual, &actual).unwrap(), 0.0);
            prop_assert_eq!(mape(&actual, &actual).unwrap(), 0.0);
        }
    }
}
