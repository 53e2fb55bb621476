//! Dataset ingestion, chronological splits, window slicing, normalization
//! and synthetic-series generation.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Half-open index ranges into the time axis. Disjoint, ordered, contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: (usize, usize),
    pub val: (usize, usize),
    pub test: (usize, usize),
}

impl Splits {
    /// Chronological split by ratio; remainders go to the test range.
    pub fn by_ratio(n: usize, train: f64, val: f64) -> Splits {
        let tr = (n as f64 * train).floor() as usize;
        let va = (n as f64 * val).floor() as usize;
        Splits {
            train: (0, tr),
            val: (tr, tr + va),
            test: (tr + va, n),
        }
    }

    pub fn range(&self, split: Split) -> (usize, usize) {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// Multivariate series with chronological splits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastDataset {
    pub names: Vec<String>,
    /// M x N raw values.
    pub series: Tensor,
    pub splits: Splits,
    /// Timestamps of the N points, when the source had them.
    pub timestamps: Option<Vec<String>>,
    /// Seasonal period m for MASE, when inferable.
    pub frequency: Option<usize>,
}

impl ForecastDataset {
    pub fn variables(&self) -> usize {
        self.series.shape[0]
    }

    pub fn len(&self) -> usize {
        self.series.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_series(names: Vec<String>, series: Tensor) -> Result<ForecastDataset> {
        if series.shape.len() != 2 {
            return Err(Error::Dimension {
                op: "dataset::from_series",
                lhs: series.shape.clone(),
                rhs: vec![],
            });
        }
        let n = series.shape[1];
        Ok(ForecastDataset {
            names,
            series,
            splits: Splits::by_ratio(n, 0.7, 0.1),
            timestamps: None,
            frequency: None,
        })
    }

    /// In-sample values of one variable over the train range (for MASE).
    pub fn train_insample(&self, var: usize) -> Vec<f64> {
        let (a, b) = self.splits.train;
        (a..b).map(|t| self.series.at2(var, t)).collect()
    }
}

/// Lookback/horizon window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(lookback: usize, horizon: usize) -> WindowSpec {
        WindowSpec {
            lookback,
            horizon,
            stride: 1,
        }
    }

    /// Number of windows that fit in `len` points.
    pub fn count(&self, len: usize) -> usize {
        if len < self.lookback + self.horizon {
            0
        } else {
            (len - self.lookback - self.horizon) / self.stride + 1
        }
    }
}

/// Deterministic ordered window enumeration within one split.
pub fn windows(
    ds: &ForecastDataset,
    spec: &WindowSpec,
    split: Split,
) -> Vec<(Tensor, Tensor)> {
    let (start, end) = ds.splits.range(split);
    let len = end - start;
    let m = ds.variables();
    let mut out = Vec::with_capacity(spec.count(len));
    let mut s = 0;
    while s + spec.lookback + spec.horizon <= len {
        let mut x = Tensor::zeros(vec![m, spec.lookback]);
        let mut y = Tensor::zeros(vec![m, spec.horizon]);
        for i in 0..m {
            for t in 0..spec.lookback {
                x.data[i * spec.lookback + t] = ds.series.at2(i, start + s + t);
            }
            for t in 0..spec.horizon {
                y.data[i * spec.horizon + t] = ds.series.at2(i, start + s + spec.lookback + t);
            }
        }
        out.push((x, y));
        s += spec.stride;
    }
    out
}

// ── normalization ────────────────────────────────────────────────────

/// Per-variable z-score statistics fitted on the train split only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(m: usize) -> Normalizer {
        Normalizer {
            mean: vec![0.0; m],
            std: vec![1.0; m],
        }
    }

    pub fn fit(ds: &ForecastDataset) -> Result<Normalizer> {
        let (a, b) = ds.splits.train;
        if b <= a {
            return Err(Error::usage("normalizer requires a nonempty train split"));
        }
        let n = (b - a) as f64;
        let m = ds.variables();
        let mut mean = vec![0.0; m];
        let mut std = vec![0.0; m];
        for i in 0..m {
            let mu: f64 = (a..b).map(|t| ds.series.at2(i, t)).sum::<f64>() / n;
            let var: f64 = (a..b)
                .map(|t| (ds.series.at2(i, t) - mu).powi(2))
                .sum::<f64>()
                / n;
            mean[i] = mu;
            std[i] = var.sqrt().max(1e-8);
        }
        Ok(Normalizer { mean, std })
    }

    fn apply(&self, x: &Tensor, inverse: bool) -> Result<Tensor> {
        if x.shape.len() != 2 || x.shape[0] != self.mean.len() {
            return Err(Error::Dimension {
                op: "normalizer",
                lhs: vec![self.mean.len()],
                rhs: x.shape.clone(),
            });
        }
        let (m, l) = (x.shape[0], x.shape[1]);
        let mut out = x.clone();
        for i in 0..m {
            for t in 0..l {
                let v = &mut out.data[i * l + t];
                if inverse {
                    *v = *v * self.std[i] + self.mean[i];
                } else {
                    *v = (*v - self.mean[i]) / self.std[i];
                }
            }
        }
        Ok(out)
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        self.apply(x, false)
    }

    pub fn inverse(&self, x: &Tensor) -> Result<Tensor> {
        self.apply(x, true)
    }
}

// ── CSV ──────────────────────────────────────────────────────────────

const TIMESTAMP_FORMATS: [&str; 3] = ["%Y-%m-%d %H:%M:%S", "%Y/%m/%d %H:%M", "%Y-%m-%dT%H:%M:%S"];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Seasonal period heuristic from consecutive timestamp spacing.
fn infer_frequency(timestamps: &[String]) -> Option<usize> {
    if timestamps.len() < 2 {
        return None;
    }
    let a = parse_timestamp(&timestamps[0])?;
    let b = parse_timestamp(&timestamps[1])?;
    let secs = (b - a).num_seconds();
    match secs {
        900 => Some(96),      // 15 min -> daily season
        3600 => Some(24),     // hourly -> daily season
        86400 => Some(7),     // daily -> weekly season
        _ => None,
    }
}

/// Loads an ETT-format CSV: header row, leading timestamp column, then one
/// column of decimal numerals per variable. Values are transposed to M x N.
pub fn load_csv(path: &Path) -> Result<ForecastDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 {
        return Err(Error::parse(
            path.display().to_string(),
            format!("need a timestamp column plus at least one value column, got {} columns", cols.len()),
        ));
    }
    let names: Vec<String> = cols[1..].iter().map(|s| s.trim().to_string()).collect();
    let m = names.len();
    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); m];
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != m + 1 {
            return Err(Error::parse(
                format!("{}:{}", path.display(), line_no + 1),
                format!("ragged row: expected {} fields, got {}", m + 1, fields.len()),
            ));
        }
        timestamps.push(fields[0].trim().to_string());
        for (ci, field) in fields[1..].iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(
                    format!("{}:{}:{}", path.display(), line_no + 1, ci + 2),
                    format!("non-numeric cell `{}`", field.trim()),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    format!("{}:{}:{}", path.display(), line_no + 1, ci + 2),
                    "missing or non-finite value".to_string(),
                ));
            }
            columns[ci].push(v);
        }
    }
    let n = timestamps.len();
    if n == 0 {
        return Err(Error::parse(path.display().to_string(), "no data rows"));
    }
    let mut data = vec![0.0; m * n];
    for (i, col) in columns.iter().enumerate() {
        data[i * n..(i + 1) * n].copy_from_slice(col);
    }
    let frequency = infer_frequency(&timestamps);
    Ok(ForecastDataset {
        names,
        series: Tensor::new(vec![m, n], data)?,
        splits: Splits::by_ratio(n, 0.7, 0.1),
        timestamps: Some(timestamps),
        frequency,
    })
}

/// Writes the dataset back in the same CSV format. Values are rendered with
/// the shortest decimal form that round-trips 64-bit reals bit-exactly.
pub fn write_csv(ds: &ForecastDataset, path: &Path) -> Result<()> {
    let m = ds.variables();
    let n = ds.len();
    let mut out = String::new();
    out.push_str("date");
    for name in &ds.names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for t in 0..n {
        match &ds.timestamps {
            Some(ts) => out.push_str(&ts[t]),
            None => {
                let _ = write!(out, "{t}");
            }
        }
        for i in 0..m {
            let _ = write!(out, ",{}", ds.series.at2(i, t));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ── synthetic series ─────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Mixed-frequency sinusoids plus optional noise.
    Sines,
    /// Per-variable AR(1) with cross-variable coupling.
    Ar1,
    /// Linear trend plus seasonal component plus noise.
    TrendSeason,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sines" => Ok(SynthKind::Sines),
            "ar1" => Ok(SynthKind::Ar1),
            "trend_season" => Ok(SynthKind::TrendSeason),
            other => Err(Error::usage(format!(
                "unknown synthetic kind `{other}` (expected sines, ar1 or trend_season)"
            ))),
        }
    }
}

/// Seeded synthetic dataset with hourly timestamps.
pub fn synth(kind: SynthKind, m: usize, n: usize, noise: f64, seed: u64) -> Result<ForecastDataset> {
    if m == 0 || n == 0 {
        return Err(Error::usage("synth requires m >= 1 and n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; m * n];
    match kind {
        SynthKind::Sines => {
            // per-variable mixture of two incommensurate frequencies
            let specs: Vec<(f64, f64, f64, f64)> = (0..m)
                .map(|_| {
                    (
                        rng.random_range(0.05..0.3),
                        rng.random_range(0.3..0.9),
                        rng.random_range(0.5..1.5),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            for (i, (f1, f2, amp, phase)) in specs.iter().enumerate() {
                for t in 0..n {
                    let tf = t as f64;
                    data[i * n + t] = amp * (f1 * tf + phase).sin()
                        + 0.5 * amp * (f2 * tf).sin()
                        + noise * rng.random_range(-1.0..1.0);
                }
            }
        }
        SynthKind::Ar1 => {
            let phi: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..0.95)).collect();
            // weak cross-variable coupling to the previous variable's lag
            let coupling: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.2)).collect();
            let mut prev = vec![0.0; m];
            for t in 0..n {
                let mut cur = vec![0.0; m];
                for i in 0..m {
                    let cross = if m > 1 { coupling[i] * prev[(i + m - 1) % m] } else { 0.0 };
                    cur[i] = phi[i] * prev[i] + cross + noise.max(0.05) * rng.random_range(-1.0..1.0);
                    data[i * n + t] = cur[i];
                }
                prev = cur;
            }
        }
        SynthKind::TrendSeason => {
            let season = 24.0;
            for i in 0..m {
                let slope = rng.random_range(-0.01..0.01);
                let amp = rng.random_range(0.5..1.5);
                for t in 0..n {
                    let tf = t as f64;
                    data[i * n + t] = slope * tf
                        + amp * (std::f64::consts::TAU * tf / season).sin()
                        + noise * rng.random_range(-1.0..1.0);
                }
            }
        }
    }
    let start = NaiveDateTime::parse_from_str("2020-01-01 00:00:00", "%Y-%m-%d %H:%M:%S").unwrap();
    let timestamps: Vec<String> = (0..n)
        .map(|t| {
            (start + chrono::Duration::hours(t as i64))
                .format("%Y-%m-%d %H:%M:%S")
                .to_string()
        })
        .collect();
    Ok(ForecastDataset {
        names: (0..m).map(|i| format!("var{i}")).collect(),
        series: Tensor::new(vec![m, n], data)?,
        splits: Splits::by_ratio(n, 0.7, 0.1),
        timestamps: Some(timestamps),
        frequency: Some(24),
    })
}
