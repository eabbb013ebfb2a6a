//! Reading and writing series, feature tables, labelled training sets and
//! models, plus the seeded structural-break generator.
//!
//! Series files hold a header row and then one series per row: the id in the
//! first column followed by its observations. Rows may be ragged; an empty or
//! `NA` cell ends the row's series.
//!
//! The generator draws from Xoshiro256++ streams seeded through SplitMix64, one
//! stream per series derived from `(seed, index)`, so a corpus depends only on
//! its spec.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::engine::derive_seed;
use crate::error::{OspError, Result};
use crate::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::gbdt::GbdtModel;
use crate::labeler::{IntervalLabel, LabeledExample};
use crate::series::TimeSeries;

/// Fewest observations a loaded row must have to be kept.
pub const MIN_OBSERVATIONS: usize = 3;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| OspError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| OspError::io(path, e))
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn parse_number(cell: &str, row: usize, column: usize, what: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(OspError::Parse {
            row,
            column,
            message: format!("{what}: `{cell}` is not a finite number"),
        }),
    }
}

/// Parses series rows from any reader. Row numbers in errors count the header
/// as row 1.
pub fn read_series<R: Read>(reader: R, frequency: usize) -> Result<Vec<TimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let Some(id) = record.get(0).filter(|s| !s.is_empty()) else {
            warn!("row {row}: missing series id, skipped");
            continue;
        };
        let mut values = Vec::new();
        for (j, cell) in record.iter().enumerate().skip(1) {
            if is_missing(cell) {
                break;
            }
            values.push(parse_number(cell, row, j + 1, &format!("series {id}"))?);
        }
        if values.len() < MIN_OBSERVATIONS {
            warn!(
                "series {id}: {} observations, fewer than {MIN_OBSERVATIONS}; skipped",
                values.len()
            );
            continue;
        }
        out.push(TimeSeries::new(id, values, frequency)?);
    }
    Ok(out)
}

pub fn load_m4_csv(path: impl AsRef<Path>, frequency: usize) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    read_series(open(path)?, frequency).map_err(|e| match e {
        OspError::Csv(c) => OspError::Parse {
            row: c.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: format!("{}: {c}", path.display()),
        },
        other => other,
    })
}

/// Writes series in the loader's format. The header names observation columns
/// `V1..Vk` for the longest series.
pub fn write_series<W: Write>(writer: W, series: &[TimeSeries]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    let width = series.iter().map(TimeSeries::len).max().unwrap_or(0);
    let mut header = vec!["id".to_string()];
    header.extend((1..=width).map(|k| format!("V{k}")));
    w.write_record(&header)?;
    for s in series {
        let mut row = vec![s.id().to_string()];
        row.extend(s.values().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| OspError::io("<output>", e))?;
    Ok(())
}

pub fn save_series_csv(path: impl AsRef<Path>, series: &[TimeSeries]) -> Result<()> {
    write_series(create(path.as_ref())?, series)
}

/// One row per series: `series_id` then the feature columns.
pub fn write_features<W: Write>(writer: W, rows: &[(String, FeatureVector)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["series_id"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for (id, fv) in rows {
        let mut row = vec![id.clone()];
        row.extend(fv.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| OspError::io("<output>", e))?;
    Ok(())
}

fn error_column(i: usize, j: usize) -> String {
    format!("e{i}_{j}")
}

/// `series_id`, the features, `m*n` error columns `e{interval}_{candidate}`
/// (empty when absent), `label_actual`, `label_average`.
pub fn write_labeled<W: Write>(writer: W, examples: &[LabeledExample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let (m, n) = examples.first().map_or((0, 0), |e| (e.m(), e.n()));
    let mut header: Vec<String> = vec!["series_id".into()];
    header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    for i in 1..=m {
        for j in 1..=n {
            header.push(error_column(i, j));
        }
    }
    header.push("label_actual".into());
    header.push("label_average".into());
    w.write_record(&header)?;
    for ex in examples {
        if ex.m() != m || ex.n() != n {
            return Err(OspError::InvalidValue(format!(
                "example {} has a {}x{} error matrix, expected {m}x{n}",
                ex.series_id,
                ex.m(),
                ex.n()
            )));
        }
        let mut row = vec![ex.series_id.clone()];
        row.extend(ex.features.as_slice().iter().map(|v| v.to_string()));
        row.extend(
            ex.error_matrix
                .iter()
                .flatten()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default()),
        );
        row.push(ex.label_actual.get().to_string());
        row.push(ex.label_average.get().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| OspError::io("<output>", e))?;
    Ok(())
}

pub fn save_labeled_csv(path: impl AsRef<Path>, examples: &[LabeledExample]) -> Result<()> {
    write_labeled(create(path.as_ref())?, examples)
}

fn parse_error_header(name: &str) -> Option<(usize, usize)> {
    let (i, j) = name.strip_prefix('e')?.split_once('_')?;
    Some((i.parse().ok()?, j.parse().ok()?))
}

pub fn read_labeled<R: Read>(reader: R) -> Result<Vec<LabeledExample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let schema = |msg: String| OspError::FeatureMismatch(msg);
    if header.get(0) != Some("series_id") {
        return Err(schema("first column must be series_id".into()));
    }
    for (k, name) in FEATURE_NAMES.iter().enumerate() {
        if header.get(k + 1) != Some(*name) {
            return Err(schema(format!(
                "column {} should be feature `{name}`, found `{}`",
                k + 2,
                header.get(k + 1).unwrap_or("")
            )));
        }
    }
    let err_cols: Vec<&str> = header.iter().skip(1 + FEATURE_COUNT).collect();
    if err_cols.len() < 2 || err_cols[err_cols.len() - 2..] != ["label_actual", "label_average"] {
        return Err(schema(
            "last columns must be label_actual, label_average".into(),
        ));
    }
    let err_cols = &err_cols[..err_cols.len() - 2];
    let (m, n) = err_cols
        .iter()
        .map(|c| parse_error_header(c))
        .try_fold((0, 0), |(m, n), p| p.map(|(i, j)| (m.max(i), n.max(j))))
        .ok_or_else(|| schema("unrecognised error column".into()))?;
    let expected: Vec<String> = (1..=m)
        .flat_map(|i| (1..=n).map(move |j| error_column(i, j)))
        .collect();
    if m == 0 || expected != err_cols {
        return Err(schema(
            "error columns must be e1_1..e{m}_{n} in row-major order".into(),
        ));
    }

    let mut out = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 2;
        let id = record.get(0).unwrap_or("").to_string();
        let mut features = [0.0; FEATURE_COUNT];
        for (k, f) in features.iter_mut().enumerate() {
            *f = parse_number(record.get(k + 1).unwrap_or(""), row, k + 2, &id)?;
        }
        let base = 1 + FEATURE_COUNT;
        let mut matrix = vec![vec![None; n]; m];
        for (i, cells) in matrix.iter_mut().enumerate() {
            for (j, slot) in cells.iter_mut().enumerate() {
                let col = base + i * n + j;
                let cell = record.get(col).unwrap_or("");
                if !cell.is_empty() {
                    *slot = Some(parse_number(cell, row, col + 1, &id)?);
                }
            }
        }
        let label = |col: usize| -> Result<IntervalLabel> {
            let cell = record.get(col).unwrap_or("");
            let v: usize = cell.parse().map_err(|_| OspError::Parse {
                row,
                column: col + 1,
                message: format!("{id}: `{cell}` is not an interval label"),
            })?;
            IntervalLabel::new(v, m).map_err(|e| OspError::Parse {
                row,
                column: col + 1,
                message: e.to_string(),
            })
        };
        out.push(LabeledExample {
            series_id: id.clone(),
            features: FeatureVector::from_array(features),
            error_matrix: matrix,
            label_actual: label(base + m * n)?,
            label_average: label(base + m * n + 1)?,
        });
    }
    Ok(out)
}

pub fn load_labeled_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>> {
    read_labeled(open(path.as_ref())?)
}

/// Parses a model and checks it expects the frozen feature order.
pub fn model_from_json(text: &str) -> Result<GbdtModel> {
    let model = GbdtModel::from_json(text)?;
    if model.feature_names.len() != FEATURE_COUNT
        || model
            .feature_names
            .iter()
            .zip(FEATURE_NAMES)
            .any(|(a, b)| a != b)
    {
        return Err(OspError::FeatureMismatch(
            "model feature names differ from the extractor's feature order".into(),
        ));
    }
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &GbdtModel) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    w.write_all(model.to_json()?.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| OspError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GbdtModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| OspError::io(path, e))?;
    model_from_json(&text)
}

/// Conventional horizon for a sampling frequency.
pub fn default_horizon(frequency: usize) -> Option<usize> {
    match frequency {
        1 => Some(6),
        4 => Some(8),
        12 => Some(18),
        52 => Some(13),
        7 | 365 => Some(14),
        24 => Some(48),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub frequency: usize,
    pub horizon: usize,
    pub sources: Vec<PathBuf>,
}

impl DatasetManifest {
    /// Uses the conventional horizon for `frequency`.
    pub fn new(name: impl Into<String>, frequency: usize, sources: Vec<PathBuf>) -> Result<Self> {
        let horizon = default_horizon(frequency).ok_or_else(|| {
            OspError::InvalidConfig(format!(
                "no default horizon for frequency {frequency}; set it explicitly"
            ))
        })?;
        let m = Self {
            name: name.into(),
            frequency,
            horizon,
            sources,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequency < 1 {
            return Err(OspError::InvalidConfig("frequency must be >= 1".into()));
        }
        if self.horizon < 1 {
            return Err(OspError::InvalidConfig("horizon must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| OspError::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    /// Loads every source in order.
    pub fn load_series(&self) -> Result<Vec<TimeSeries>> {
        let mut out = Vec::new();
        for src in &self.sources {
            out.extend(load_m4_csv(src, self.frequency)?);
        }
        Ok(out)
    }
}

/// Parameter ranges of one regime; every draw is uniform within `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessParams {
    /// AR(1) coefficient of the stochastic component; 1 gives a random walk.
    pub ar: (f64, f64),
    pub slope: (f64, f64),
    pub seasonal_amplitude: (f64, f64),
    pub noise_sd: (f64, f64),
}

impl ProcessParams {
    fn validate(&self, which: &str) -> Result<()> {
        for (name, (lo, hi)) in [
            ("ar", self.ar),
            ("slope", self.slope),
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("noise_sd", self.noise_sd),
        ] {
            check_range(&format!("{which}.{name}"), lo, hi)?;
        }
        if self.ar.0 < -1.0 || self.ar.1 > 1.0 {
            return Err(OspError::InvalidConfig(format!(
                "{which}.ar must lie within [-1, 1]"
            )));
        }
        if self.noise_sd.0 < 0.0 || self.seasonal_amplitude.0 < 0.0 {
            return Err(OspError::InvalidConfig(format!(
                "{which}: noise sd and seasonal amplitude must be >= 0"
            )));
        }
        Ok(())
    }
}

fn check_range(name: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(OspError::InvalidConfig(format!(
            "{name}: invalid range [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn draw(rng: &mut Xoshiro256PlusPlus, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Structural-break corpus description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub count: usize,
    /// Inclusive length range.
    pub length: (usize, usize),
    pub frequency: usize,
    pub break_probability: f64,
    /// Starting level.
    pub level: (f64, f64),
    /// Level jump at a break, in units of the post-break noise sd; the sign is random.
    pub level_shift: (f64, f64),
    pub pre: ProcessParams,
    pub post: ProcessParams,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            count: 200,
            length: (80, 150),
            frequency: 1,
            break_probability: 0.8,
            level: (50.0, 150.0),
            level_shift: (3.0, 8.0),
            pre: ProcessParams {
                ar: (0.9, 1.0),
                slope: (-0.5, 0.5),
                seasonal_amplitude: (0.0, 0.0),
                noise_sd: (0.5, 2.0),
            },
            post: ProcessParams {
                ar: (0.0, 0.2),
                slope: (0.0, 0.0),
                seasonal_amplitude: (0.0, 0.0),
                noise_sd: (0.5, 2.0),
            },
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(OspError::InvalidConfig("count must be >= 1".into()));
        }
        if self.length.0 < 10 || self.length.0 > self.length.1 {
            return Err(OspError::InvalidConfig(format!(
                "length range {:?} must satisfy 10 <= lo <= hi",
                self.length
            )));
        }
        if self.frequency < 1 {
            return Err(OspError::InvalidConfig("frequency must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.break_probability) {
            return Err(OspError::InvalidConfig(
                "break probability must lie in [0, 1]".into(),
            ));
        }
        check_range("level", self.level.0, self.level.1)?;
        check_range("level_shift", self.level_shift.0, self.level_shift.1)?;
        self.pre.validate("pre")?;
        self.post.validate("post")
    }
}

/// Break positions are drawn from `[ceil(0.2 T), floor(0.8 T)]`.
pub fn break_window(len: usize) -> (usize, usize) {
    ((2 * len).div_ceil(10), 8 * len / 10)
}

/// Ground-truth break index recorded in a generated id (`..._b<index>`).
pub fn break_index(id: &str) -> Option<usize> {
    id.rsplit_once("_b").and_then(|(_, tail)| tail.parse().ok())
}

struct Regime {
    level: f64,
    slope: f64,
    ar: f64,
    amplitude: f64,
    phase: f64,
    noise: Normal<f64>,
    sd: f64,
}

impl Regime {
    fn draw(rng: &mut Xoshiro256PlusPlus, p: &ProcessParams, level: f64) -> Self {
        let sd = draw(rng, p.noise_sd);
        Self {
            level,
            slope: draw(rng, p.slope),
            ar: draw(rng, p.ar),
            amplitude: draw(rng, p.seasonal_amplitude),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            noise: Normal::new(0.0, sd).expect("sd validated non-negative"),
            sd,
        }
    }
}

fn generate_one(spec: &SyntheticSpec, index: usize) -> TimeSeries {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(spec.seed, index as u64));
    let len = rng.gen_range(spec.length.0..=spec.length.1);
    let has_break = rng.gen_bool(spec.break_probability);
    let brk = if has_break {
        let (lo, hi) = break_window(len);
        Some(rng.gen_range(lo..=hi))
    } else {
        None
    };
    let start_level = draw(&mut rng, spec.level);
    let mut regime = Regime::draw(&mut rng, &spec.pre, start_level);
    let f = spec.frequency as f64;
    let mut origin = 0usize;
    let mut state = 0.0;
    let mut values = Vec::with_capacity(len);
    for t in 0..len {
        if Some(t) == brk {
            let prev = values.last().copied().unwrap_or(start_level);
            let mut next = Regime::draw(&mut rng, &spec.post, 0.0);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            next.level = prev + sign * draw(&mut rng, spec.level_shift) * next.sd;
            regime = next;
            origin = t;
            state = 0.0;
        }
        state = regime.ar * state + regime.noise.sample(&mut rng);
        let season = if spec.frequency > 1 {
            regime.amplitude * (std::f64::consts::TAU * t as f64 / f + regime.phase).sin()
        } else {
            0.0
        };
        values.push(regime.level + regime.slope * (t - origin) as f64 + season + state);
    }
    let id = match brk {
        Some(b) => format!("syn{index:05}_b{b}"),
        None => format!("syn{index:05}"),
    };
    TimeSeries::new(id, values, spec.frequency).expect("generated values are finite")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<TimeSeries>> {
    spec.validate()?;
    Ok((0..spec.count).map(|i| generate_one(spec, i)).collect())
}
