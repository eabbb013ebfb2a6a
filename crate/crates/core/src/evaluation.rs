//! Holdout comparison of the interval models against the baselines.
//!
//! Every series loses its final `h` observations; each method forecasts them
//! from the remainder and is scored with MASE (scaled on the whole remainder)
//! and MAPE. A series on which any method hard-fails is reported and left out
//! of every method's mean, so all means cover the same series.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    changepoint_forecast_with, combine, derive_seed, osp_forecast, random_start_forecast,
    CombineMode, OspMethod, CUSUM_THRESHOLD_95,
};
use crate::error::{OspError, Result};
use crate::forecasters::{forecast, ForecasterSpec};
use crate::gbdt::GbdtModel;
use crate::metrics::{evaluate, mean_defined};
use crate::series::{SegmentationConfig, TimeSeries};

pub const COMBINED: &str = "combined";
pub const RANDOM: &str = "random";
pub const CHANGEPOINT: &str = "changepoint";
pub const TOTAL_SERIES: &str = "total_series";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationConfig {
    pub segmentation: SegmentationConfig,
    pub base: ForecasterSpec,
    pub seed: u64,
    pub cusum_threshold: f64,
}

impl EvaluationConfig {
    pub fn new(segmentation: SegmentationConfig, base: ForecasterSpec, seed: u64) -> Self {
        Self {
            segmentation,
            base,
            seed,
            cusum_threshold: CUSUM_THRESHOLD_95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesScore {
    pub series_id: String,
    pub method: String,
    pub mase: f64,
    pub mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub series: usize,
    pub mean_mase: f64,
    pub mean_mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFailure {
    pub series_id: String,
    pub method: String,
    pub reason: String,
    /// Ineligible series are skipped; anything else is a hard failure.
    pub hard: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub scores: Vec<SeriesScore>,
    pub summary: Vec<MethodSummary>,
    pub failures: Vec<SeriesFailure>,
}

impl EvaluationReport {
    pub fn has_hard_failures(&self) -> bool {
        self.failures.iter().any(|f| f.hard)
    }

    pub fn mean_mase(&self, method: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.method == method)
            .map(|s| s.mean_mase)
    }

    /// `series_id,method,mase,mape`; an undefined MAPE is an empty cell.
    pub fn write_scores<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["series_id", "method", "mase", "mape"])?;
        for s in &self.scores {
            w.write_record([
                s.series_id.clone(),
                s.method.clone(),
                s.mase.to_string(),
                s.mape.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| OspError::io("<output>", e))?;
        Ok(())
    }

    /// `method,series,mean_mase,mean_mape`.
    pub fn write_summary<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "series", "mean_mase", "mean_mape"])?;
        for s in &self.summary {
            w.write_record([
                s.method.clone(),
                s.series.to_string(),
                s.mean_mase.to_string(),
                s.mean_mape.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| OspError::io("<output>", e))?;
        Ok(())
    }

    /// Fixed-width table for terminals.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>12} {:>12}",
            "method", "series", "MASE", "MAPE"
        );
        for s in &self.summary {
            let mape = s.mean_mape.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{:<16} {:>7} {:>12.4} {:>12}",
                s.method, s.series, s.mean_mase, mape
            );
        }
        out
    }
}

type MethodOutcome = (String, Result<Vec<f64>>);

fn run_methods(
    train: &TimeSeries,
    models: &[(OspMethod, GbdtModel)],
    config: &EvaluationConfig,
    index: usize,
) -> Vec<MethodOutcome> {
    let seg = &config.segmentation;
    let mut out: Vec<MethodOutcome> = Vec::new();
    let mut osp_results = Vec::new();
    let mut component_err = None;
    for (method, model) in models {
        let r = osp_forecast(train, model, seg, &config.base, *method);
        out.push((
            method.name(),
            r.as_ref()
                .map(|r| r.final_forecast.values.clone())
                .map_err(clone_err),
        ));
        match r {
            Ok(r) => osp_results.push(r),
            Err(e) => component_err = component_err.or(Some(e)),
        }
    }
    if !models.is_empty() {
        let combined = match component_err {
            None => combine(&osp_results, CombineMode::All).map(|f| f.values),
            Some(e) => Err(e),
        };
        out.push((COMBINED.into(), combined));
    }
    let seed = derive_seed(config.seed, index as u64);
    out.push((
        RANDOM.into(),
        random_start_forecast(train, seg, &config.base, seed).map(|f| f.values),
    ));
    out.push((
        CHANGEPOINT.into(),
        changepoint_forecast_with(train, &config.base, seg.h, config.cusum_threshold)
            .map(|f| f.values),
    ));
    out.push((
        TOTAL_SERIES.into(),
        forecast(&config.base, train, seg.h).map(|f| f.values),
    ));
    out
}

/// Errors are not `Clone`; keep the variant that matters for classification.
fn clone_err(e: &OspError) -> OspError {
    match e {
        OspError::Ineligible(s) => OspError::Ineligible(s.clone()),
        other => OspError::Forecast(other.to_string()),
    }
}

enum SeriesOutcome {
    Scored(Vec<SeriesScore>),
    Failed(Vec<SeriesFailure>),
}

fn evaluate_series(
    series: &TimeSeries,
    models: &[(OspMethod, GbdtModel)],
    config: &EvaluationConfig,
    index: usize,
) -> SeriesOutcome {
    let id = series.id().to_string();
    let fail = |method: &str, reason: String, hard: bool| {
        SeriesOutcome::Failed(vec![SeriesFailure {
            series_id: id.clone(),
            method: method.into(),
            reason,
            hard,
        }])
    };
    let split = match series.split_holdout(config.segmentation.h) {
        Ok(s) => s,
        Err(e) => return fail("holdout", e.to_string(), false),
    };
    let (train, actual) = (&split.train, split.test.values());
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (method, outcome) in run_methods(train, models, config, index) {
        match outcome.and_then(|fc| evaluate(train.values(), actual, &fc)) {
            Ok(report) => match report.mase {
                Some(mase) => scores.push(SeriesScore {
                    series_id: id.clone(),
                    method,
                    mase,
                    mape: report.mape,
                }),
                None => failures.push(SeriesFailure {
                    series_id: id.clone(),
                    method,
                    reason: "MASE undefined on a constant series".into(),
                    hard: false,
                }),
            },
            Err(e) => {
                let hard = !matches!(e, OspError::Ineligible(_) | OspError::TooShort { .. });
                failures.push(SeriesFailure {
                    series_id: id.clone(),
                    method,
                    reason: e.to_string(),
                    hard,
                });
            }
        }
    }
    if failures.is_empty() {
        SeriesOutcome::Scored(scores)
    } else {
        SeriesOutcome::Failed(failures)
    }
}

/// Scores every method on every series. Work is spread over the current rayon
/// pool; output order follows the input order regardless of pool size.
pub fn evaluate_corpus(
    series: &[TimeSeries],
    models: &[(OspMethod, GbdtModel)],
    config: &EvaluationConfig,
) -> Result<EvaluationReport> {
    config.segmentation.validate()?;
    config.base.validate()?;
    let outcomes: Vec<SeriesOutcome> = series
        .par_iter()
        .enumerate()
        .map(|(i, s)| evaluate_series(s, models, config, i))
        .collect();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            SeriesOutcome::Scored(s) => scores.extend(s),
            SeriesOutcome::Failed(f) => failures.extend(f),
        }
    }
    let mut methods: Vec<String> = models.iter().map(|(m, _)| m.name()).collect();
    if !models.is_empty() {
        methods.push(COMBINED.into());
    }
    methods.extend([RANDOM, CHANGEPOINT, TOTAL_SERIES].map(String::from));
    let summary = methods
        .into_iter()
        .map(|method| {
            let rows: Vec<&SeriesScore> = scores.iter().filter(|s| s.method == method).collect();
            let mean_mase = if rows.is_empty() {
                f64::NAN
            } else {
                rows.iter().map(|s| s.mase).sum::<f64>() / rows.len() as f64
            };
            MethodSummary {
                series: rows.len(),
                mean_mase,
                mean_mape: mean_defined(rows.iter().map(|s| s.mape)),
                method,
            }
        })
        .collect();
    Ok(EvaluationReport {
        scores,
        summary,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{generate_synthetic, SyntheticSpec};
    use crate::engine::{train_osp, ModelKind};
    use crate::forecasters::ForecasterKind;
    use crate::gbdt::GbdtParams;
    use crate::labeler::{LabelKind, Labeler};

    fn setup() -> (
        Vec<TimeSeries>,
        Vec<(OspMethod, GbdtModel)>,
        EvaluationConfig,
    ) {
        let seg = SegmentationConfig::with_default_min_len(5, 4, 6, 1).unwrap();
        let base = ForecasterSpec::new(ForecasterKind::Ses);
        let train = generate_synthetic(&SyntheticSpec {
            count: 40,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let set = Labeler::new(seg, base).build_training_set(&train).unwrap();
        let p = GbdtParams {
            rounds: 10,
            ..Default::default()
        };
        let models = [ModelKind::Classification, ModelKind::Regression]
            .into_iter()
            .map(|k| {
                let m = OspMethod::new(LabelKind::Average, k);
                (m, train_osp(&set.examples, m, &p).unwrap())
            })
            .collect();
        let test = generate_synthetic(&SyntheticSpec {
            count: 15,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        (test, models, EvaluationConfig::new(seg, base, 5))
    }

    #[test]
    fn summary_matches_scores() {
        let (test, models, config) = setup();
        let report = evaluate_corpus(&test, &models, &config).unwrap();
        assert!(!report.has_hard_failures());
        let names: Vec<&str> = report.summary.iter().map(|s| s.method.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "average_cls",
                "average_reg",
                COMBINED,
                RANDOM,
                CHANGEPOINT,
                TOTAL_SERIES
            ]
        );
        for s in &report.summary {
            let rows: Vec<f64> = report
                .scores
                .iter()
                .filter(|r| r.method == s.method)
                .map(|r| r.mase)
                .collect();
            assert_eq!(rows.len(), test.len());
            let mut sum = 0.0;
            for r in &rows {
                sum += r;
            }
            assert_eq!(s.mean_mase, sum / rows.len() as f64);
        }
    }

    #[test]
    fn total_series_row_without_models() {
        let (test, _, config) = setup();
        let report = evaluate_corpus(&test, &[], &config).unwrap();
        assert!(report.mean_mase(TOTAL_SERIES).is_some());
        assert!(report.mean_mase(COMBINED).is_none());
        let mut buf = Vec::new();
        report.write_summary(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("total_series"));
    }

    #[test]
    fn short_series_are_skipped_softly() {
        let (mut test, models, config) = setup();
        test.push(
            TimeSeries::new(
                "tiny",
                vec![1.0, 2.0, 4.0, 3.0, 5.0, 6.0, 8.0, 7.0, 9.0, 10.0],
                1,
            )
            .unwrap(),
        );
        let report = evaluate_corpus(&test, &models, &config).unwrap();
        assert!(report.failures.iter().any(|f| f.series_id == "tiny"));
        assert!(!report.has_hard_failures());
        assert!(report.scores.iter().all(|s| s.series_id != "tiny"));
    }

    #[test]
    fn identical_across_pool_sizes() {
        let (test, models, config) = setup();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let report = pool.install(|| evaluate_corpus(&test, &models, &config).unwrap());
            let mut buf = Vec::new();
            report.write_scores(&mut buf).unwrap();
            report.write_summary(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(1), run(4));
    }
}
