//! Time-series representation and the slicing primitives every other module
//! builds on. Indices are 0-based throughout; interval labels (1-based) live in
//! the labeler.

use serde::{Deserialize, Serialize};

use crate::error::{OspError, Result};

/// A univariate, equispaced series with its seasonal frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    id: String,
    values: Vec<f64>,
    frequency: usize,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>, frequency: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(OspError::TooShort { needed: 1, got: 0 });
        }
        if frequency == 0 {
            return Err(OspError::InvalidValue("frequency must be >= 1".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(OspError::InvalidValue(format!(
                "non-finite observation at index {pos}"
            )));
        }
        Ok(Self {
            id: id.into(),
            values,
            frequency,
        })
    }

    /// Non-seasonal series with an empty id; handy in tests and the FFI layer.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new("", values, 1)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frequency(&self) -> usize {
        self.frequency
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Same id and frequency, new values. Values are assumed finite and nonempty.
    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        Self {
            id: self.id.clone(),
            values,
            frequency: self.frequency,
        }
    }

    /// Suffix starting at `start` (0-based).
    pub fn truncate_from(&self, start: usize) -> Result<Self> {
        if start >= self.len() {
            return Err(OspError::OutOfRange {
                index: start,
                len: self.len(),
            });
        }
        Ok(self.with_values(self.values[start..].to_vec()))
    }

    /// Splits off the last `h` observations as a holdout.
    pub fn split_holdout(&self, h: usize) -> Result<TrainTestSplit> {
        if h == 0 {
            return Err(OspError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.len() < h + 2 {
            return Err(OspError::TooShort {
                needed: h + 2,
                got: self.len(),
            });
        }
        let cut = self.len() - h;
        Ok(TrainTestSplit {
            train: self.with_values(self.values[..cut].to_vec()),
            test: self.with_values(self.values[cut..].to_vec()),
        })
    }

    /// Lagged differencing applied `order` times.
    pub fn difference(&self, lag: usize, order: usize) -> Result<Self> {
        Ok(self.with_values(difference(&self.values, lag, order)?))
    }
}

/// Repeated lagged differencing on a raw slice.
pub fn difference(values: &[f64], lag: usize, order: usize) -> Result<Vec<f64>> {
    if lag == 0 {
        return Err(OspError::InvalidValue("difference lag must be >= 1".into()));
    }
    let needed = lag * order + 1;
    if values.len() < needed {
        return Err(OspError::TooShort {
            needed,
            got: values.len(),
        });
    }
    let mut out = values.to_vec();
    for _ in 0..order {
        out = out.windows(lag + 1).map(|w| w[lag] - w[0]).collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTestSplit {
    pub train: TimeSeries,
    pub test: TimeSeries,
}

/// Geometry of the interval search: `m` sub-intervals with `n` candidate
/// starting points each, forecast horizon `h`, and the minimum suffix length
/// any candidate may leave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub m: usize,
    pub n: usize,
    pub h: usize,
    pub min_len: usize,
}

impl SegmentationConfig {
    pub fn new(m: usize, n: usize, h: usize, min_len: usize) -> Result<Self> {
        let config = Self { m, n, h, min_len };
        config.validate()?;
        Ok(config)
    }

    /// `min_len` defaults to `max(h + 2, 2 * frequency, 8)`.
    pub fn with_default_min_len(m: usize, n: usize, h: usize, frequency: usize) -> Result<Self> {
        Self::new(m, n, h, default_min_len(h, frequency))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(OspError::InvalidConfig(format!(
                "m must be >= 2, got {}",
                self.m
            )));
        }
        if self.n < 1 {
            return Err(OspError::InvalidConfig("n must be >= 1".into()));
        }
        if self.h < 1 {
            return Err(OspError::InvalidConfig("horizon must be >= 1".into()));
        }
        if self.min_len < 2 {
            return Err(OspError::InvalidConfig(format!(
                "min_len must be >= 2, got {}",
                self.min_len
            )));
        }
        Ok(())
    }

    /// Use-site check: seasonal base models need two full cycles in every suffix.
    pub fn check_frequency(&self, frequency: usize) -> Result<()> {
        if frequency > 1 && self.min_len < 2 * frequency {
            return Err(OspError::InvalidConfig(format!(
                "min_len {} is below 2 x frequency ({frequency})",
                self.min_len
            )));
        }
        Ok(())
    }
}

pub fn default_min_len(h: usize, frequency: usize) -> usize {
    (h + 2).max(2 * frequency).max(8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(values: &[f64]) -> TimeSeries {
        TimeSeries::new("t", values.to_vec(), 1).unwrap()
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(
            ts(&[1., 2., 3., 4., 5.]).truncate_from(2).unwrap().values(),
            &[3., 4., 5.]
        );
        assert_eq!(
            ts(&[1., 2., 3.]).truncate_from(0).unwrap().values(),
            &[1., 2., 3.]
        );
        assert_eq!(ts(&[7.]).truncate_from(0).unwrap().values(), &[7.]);
        assert!(matches!(
            ts(&[1., 2.]).truncate_from(2),
            Err(OspError::OutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn truncate_keeps_metadata() {
        let s = TimeSeries::new("abc", vec![1., 2., 3., 4.], 4).unwrap();
        let t = s.truncate_from(1).unwrap();
        assert_eq!(t.id(), "abc");
        assert_eq!(t.frequency(), 4);
    }

    #[test]
    fn split_examples() {
        let sp = ts(&[1., 2., 3., 4., 5.]).split_holdout(2).unwrap();
        assert_eq!(sp.train.values(), &[1., 2., 3.]);
        assert_eq!(sp.test.values(), &[4., 5.]);
        let sp = ts(&[1., 2., 3.]).split_holdout(1).unwrap();
        assert_eq!(sp.train.values(), &[1., 2.]);
        assert_eq!(sp.test.values(), &[3.]);
        assert!(matches!(
            ts(&[1., 2.]).split_holdout(1),
            Err(OspError::TooShort { .. })
        ));
    }

    #[test]
    fn difference_examples() {
        let s = ts(&[1., 2., 4., 7.]);
        assert_eq!(s.difference(1, 1).unwrap().values(), &[1., 2., 3.]);
        assert_eq!(s.difference(1, 2).unwrap().values(), &[1., 1.]);
        assert_eq!(
            ts(&[1., 2., 3., 4.]).difference(2, 1).unwrap().values(),
            &[2., 2.]
        );
        assert!(ts(&[1., 2.]).difference(1, 2).is_err());
    }

    #[test]
    fn rejects_bad_series() {
        assert!(TimeSeries::new("x", vec![], 1).is_err());
        assert!(TimeSeries::new("x", vec![1.0, f64::NAN], 1).is_err());
        assert!(TimeSeries::new("x", vec![1.0], 0).is_err());
    }

    #[test]
    fn segmentation_validation() {
        assert!(SegmentationConfig::new(1, 4, 6, 8).is_err());
        assert!(SegmentationConfig::new(5, 0, 6, 8).is_err());
        assert!(SegmentationConfig::new(5, 4, 6, 1).is_err());
        let c = SegmentationConfig::with_default_min_len(5, 4, 6, 12).unwrap();
        assert_eq!(c.min_len, 24);
        assert!(c.check_frequency(12).is_ok());
        assert!(SegmentationConfig::new(5, 4, 6, 8)
            .unwrap()
            .check_frequency(12)
            .is_err());
    }

    proptest! {
        #[test]
        fn truncation_composes(values in prop::collection::vec(-1e3f64..1e3, 1..60), fa in 0.0f64..1.0, fb in 0.0f64..1.0) {
            let s = ts(&values);
            let a = (fa * s.len() as f64) as usize;
            let b = (fb * (s.len() - a) as f64) as usize;
            let twice = s.truncate_from(a).unwrap().truncate_from(b).unwrap();
            prop_assert_eq!(twice, s.truncate_from(a + b).unwrap());
        }

        #[test]
        fn split_concatenates(values in prop::collection::vec(-1e3f64..1e3, 3..60), h in 1usize..10) {
            let s = ts(&values);
            prop_assume!(s.len() >= h + 2);
            let sp = s.split_holdout(h).unwrap();
            let joined: Vec<f64> = sp.train.values().iter().chain(sp.test.values()).copied().collect();
            prop_assert_eq!(joined, values);
        }

        #[test]
        fn differencing_polynomial_is_constant(c in prop::collection::vec(-5i32..5, 1..4), len in 8usize..30) {
            // degree = c.len() - 1, integer coefficients keep the arithmetic exact
            let order = c.len() - 1;
            let values: Vec<f64> = (0..len)
                .map(|t| c.iter().enumerate().map(|(k, &ck)| ck as f64 * (t as f64).powi(k as i32)).sum())
                .collect();
            let d = difference(&values, 1, order).unwrap();
            prop_assert!(d.iter().all(|&v| v == d[0]));
        }
    }
}
