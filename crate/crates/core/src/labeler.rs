//! Builds the supervised training set: every series is cut into `m` equal
//! sub-intervals, `n` interior starting points are placed in each, and the
//! holdout error of forecasting from every starting point decides which
//! interval is labelled as holding the best start.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OspError, Result};
use crate::features::{extract_features, FeatureVector};
use crate::forecasters::{forecast, ForecasterSpec};
use crate::metrics::{mase, mase_scale, mase_with_scale, MaseScale};
use crate::series::{SegmentationConfig, TimeSeries};

/// 1-based sub-interval index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntervalLabel(usize);

impl IntervalLabel {
    pub fn new(interval: usize, m: usize) -> Result<Self> {
        if interval == 0 || interval > m {
            return Err(OspError::InvalidValue(format!(
                "interval label {interval} outside 1..={m}"
            )));
        }
        Ok(Self(interval))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub(crate) fn from_zero_based(i: usize) -> Self {
        Self(i + 1)
    }
}

/// Candidate starting indices. Slot `[i][j]` is the `j`-th point of interval
/// `i` (both 0-based), `None` where the suffix would be shorter than `min_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateGrid {
    slots: Vec<Vec<Option<usize>>>,
}

impl CandidateGrid {
    pub fn m(&self) -> usize {
        self.slots.len()
    }

    pub fn n(&self) -> usize {
        self.slots.first().map_or(0, Vec::len)
    }

    pub fn slots(&self) -> &[Vec<Option<usize>>] {
        &self.slots
    }

    /// Surviving start indices of a 1-based interval.
    pub fn interval(&self, label: IntervalLabel) -> Vec<usize> {
        self.slots[label.get() - 1]
            .iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn flat(&self) -> Vec<usize> {
        self.slots.iter().flatten().flatten().copied().collect()
    }
}

/// Places `n` interior equal-partition points in each of `m` equal intervals
/// of a length-`len` series.
pub fn build_grid(len: usize, config: &SegmentationConfig) -> Result<CandidateGrid> {
    let SegmentationConfig { m, n, min_len, .. } = *config;
    if len < m * (n + 1) {
        return Err(OspError::Ineligible(format!(
            "length {len} cannot hold {m} intervals of {n} interior points"
        )));
    }
    let slots: Vec<Vec<Option<usize>>> = (1..=m)
        .map(|i| {
            let start = (i - 1) * len / m;
            let width = i * len / m - start;
            (1..=n)
                .map(|j| {
                    let idx = start + j * width / (n + 1);
                    (len - idx >= min_len).then_some(idx)
                })
                .collect()
        })
        .collect();
    if let Some(i) = slots.iter().position(|s| s.iter().all(Option::is_none)) {
        return Err(OspError::Ineligible(format!(
            "interval {} has no candidate leaving at least {min_len} observations",
            i + 1
        )));
    }
    Ok(CandidateGrid { slots })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub series_id: String,
    pub features: FeatureVector,
    /// `m x n` holdout MASE per candidate; `None` where the cell is absent.
    pub error_matrix: Vec<Vec<Option<f64>>>,
    pub label_actual: IntervalLabel,
    pub label_average: IntervalLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    /// Interval holding the single smallest candidate error.
    Actual,
    /// Interval with the smallest mean candidate error.
    Average,
}

impl LabelKind {
    pub fn name(&self) -> &'static str {
        match self {
            LabelKind::Actual => "actual",
            LabelKind::Average => "average",
        }
    }
}

impl std::str::FromStr for LabelKind {
    type Err = OspError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "actual" => Ok(LabelKind::Actual),
            "average" => Ok(LabelKind::Average),
            other => Err(OspError::InvalidConfig(format!(
                "unknown label kind `{other}`"
            ))),
        }
    }
}

impl LabeledExample {
    pub fn label(&self, kind: LabelKind) -> IntervalLabel {
        match kind {
            LabelKind::Actual => self.label_actual,
            LabelKind::Average => self.label_average,
        }
    }

    pub fn m(&self) -> usize {
        self.error_matrix.len()
    }

    pub fn n(&self) -> usize {
        self.error_matrix.first().map_or(0, Vec::len)
    }
}

/// Index of the smallest score; ties go to the later interval.
fn argmin_latest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s <= scores[best] {
            best = i;
        }
    }
    best
}

/// (actual-min label, average-min label) for a matrix whose every row has at
/// least one present cell.
pub fn labels_from_matrix(matrix: &[Vec<Option<f64>>]) -> (IntervalLabel, IntervalLabel) {
    let mins: Vec<f64> = matrix
        .iter()
        .map(|row| row.iter().flatten().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let means: Vec<f64> = matrix
        .iter()
        .map(|row| {
            let present: Vec<f64> = row.iter().flatten().copied().collect();
            present.iter().sum::<f64>() / present.len() as f64
        })
        .collect();
    (
        IntervalLabel::from_zero_based(argmin_latest(&mins)),
        IntervalLabel::from_zero_based(argmin_latest(&means)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipRecord {
    pub series_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub examples: Vec<LabeledExample>,
    pub skipped: Vec<SkipRecord>,
}

/// Labeling settings: interval geometry, base model and MASE scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Labeler {
    pub config: SegmentationConfig,
    pub base: ForecasterSpec,
    pub mase_scale: MaseScale,
}

impl Labeler {
    pub fn new(config: SegmentationConfig, base: ForecasterSpec) -> Self {
        Self {
            config,
            base,
            mase_scale: MaseScale::default(),
        }
    }

    pub fn with_mase_scale(mut self, scale: MaseScale) -> Self {
        self.mase_scale = scale;
        self
    }

    pub fn label_series(&self, series: &TimeSeries) -> Result<LabeledExample> {
        let h = self.config.h;
        let split = series
            .split_holdout(h)
            .map_err(|e| OspError::Ineligible(e.to_string()))?;
        let train = &split.train;
        let actual = split.test.values();
        let full_scale = match mase_scale(train.values()) {
            Ok(s) => s,
            Err(_) => return Err(OspError::Ineligible("constant training portion".into())),
        };
        let grid = build_grid(train.len(), &self.config)?;
        let features = extract_features(train).map_err(|e| OspError::Ineligible(e.to_string()))?;

        let error_matrix: Vec<Vec<Option<f64>>> = grid
            .slots()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|slot| {
                        slot.and_then(|idx| self.candidate_error(train, idx, actual, full_scale))
                    })
                    .collect()
            })
            .collect();
        if let Some(i) = error_matrix
            .iter()
            .position(|r| r.iter().all(Option::is_none))
        {
            return Err(OspError::Ineligible(format!(
                "every candidate in interval {} failed",
                i + 1
            )));
        }
        let (label_actual, label_average) = labels_from_matrix(&error_matrix);
        Ok(LabeledExample {
            series_id: series.id().to_string(),
            features,
            error_matrix,
            label_actual,
            label_average,
        })
    }

    fn candidate_error(
        &self,
        train: &TimeSeries,
        start: usize,
        actual: &[f64],
        full_scale: f64,
    ) -> Option<f64> {
        let suffix = train.truncate_from(start).ok()?;
        let fc = forecast(&self.base, &suffix, actual.len()).ok()?;
        let err = match self.mase_scale {
            MaseScale::Suffix => mase(suffix.values(), actual, &fc.values),
            MaseScale::Full => mase_with_scale(full_scale, actual, &fc.values),
        };
        err.ok().filter(|e| e.is_finite())
    }

    /// Labels every eligible series, in input order. Runs on the current rayon
    /// pool; the result does not depend on its size.
    pub fn build_training_set(&self, series: &[TimeSeries]) -> Result<TrainingSet> {
        if series.is_empty() {
            return Err(OspError::EmptyTrainingSet);
        }
        let results: Vec<Result<LabeledExample>> =
            series.par_iter().map(|s| self.label_series(s)).collect();
        let mut examples = Vec::new();
        let mut skipped = Vec::new();
        for (s, r) in series.iter().zip(results) {
            match r {
                Ok(ex) => examples.push(ex),
                Err(e) => {
                    warn!("skipping series {}: {e}", s.id());
                    skipped.push(SkipRecord {
                        series_id: s.id().to_string(),
                        reason: e.to_string(),
                    });
                }
            }
        }
        if examples.is_empty() {
            return Err(OspError::EmptyTrainingSet);
        }
        Ok(TrainingSet { examples, skipped })
    }
}
