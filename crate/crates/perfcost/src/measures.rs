//! Empirical probability measures: construction, CSV ingestion, Gaussian
//! sampling, and pushforwards.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Kahan-compensated sum; the mass invariant must not drown in naive
/// accumulation error at large n.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Weighted point cloud on ℝ^d. Immutable after construction; weights are
/// nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Builds a measure with explicit weights, validating the invariants.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyData("measure needs at least one point".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::Shape("points must have at least one coordinate".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::Shape(format!(
                    "point {i} has dimension {} but expected {d}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("point {i} has a non-finite coordinate")));
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Argument(format!("weight {i} is negative or non-finite")));
            }
        }
        let sum = compensated_sum(&weights);
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Argument(format!("weights sum to {sum}, expected 1")));
        }
        Ok(EmpiricalMeasure { points, weights })
    }

    /// Uniform weights 1/n.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyData("measure needs at least one point".into()));
        }
        let w = vec![1.0 / n as f64; n];
        EmpiricalMeasure::new(points, w)
    }

    /// 1D convenience constructor with uniform weights.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        EmpiricalMeasure::from_points(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&x| (x - w).abs() <= WEIGHT_SUM_TOL)
    }

    /// Weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            for (o, &x) in out.iter_mut().zip(p) {
                *o += w * x;
            }
        }
        out
    }

    /// Seeded uniform subsample without replacement, keeping original order.
    pub fn subsample(&self, k: usize, seed: u64) -> Result<EmpiricalMeasure> {
        if k == 0 || k > self.len() {
            return Err(Error::Argument(format!(
                "subsample size {k} out of range 1..={}",
                self.len()
            )));
        }
        let mut rng = Rng::seed_from_u64(seed);
        let idx = rng.sample_indices(self.len(), k);
        EmpiricalMeasure::from_points(idx.iter().map(|&i| self.points[i].clone()).collect())
    }
}

/// Pushes a measure forward through a point map; weights are untouched.
pub fn pushforward<F>(m: &EmpiricalMeasure, f: F) -> Result<EmpiricalMeasure>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut points = Vec::with_capacity(m.len());
    for (index, p) in m.points().iter().enumerate() {
        let q = f(p);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::MapEval { index });
        }
        points.push(q);
    }
    EmpiricalMeasure::new(points, m.weights().to_vec())
}

/// Fallible-map variant of [`pushforward`].
pub fn try_pushforward<F>(m: &EmpiricalMeasure, f: F) -> Result<EmpiricalMeasure>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut points = Vec::with_capacity(m.len());
    for (index, p) in m.points().iter().enumerate() {
        let q = f(p)?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::MapEval { index });
        }
        points.push(q);
    }
    EmpiricalMeasure::new(points, m.weights().to_vec())
}

/// Draws `n` points from N(mean, cov). `cov` may be singular (PSD); the draw
/// is deterministic in `seed`: point-by-point, coordinate-by-coordinate
/// standard normals through the documented Box-Muller stream, then `mean + Lz`.
pub fn sample_gaussian(mean: &[f64], cov: &Matrix, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::Shape(format!(
            "covariance is {}x{} but mean has dimension {d}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    let l = cov.cholesky_psd(1e-8)?;
    let mut rng = Rng::seed_from_u64(seed);
    let mut z = vec![0.0; d];
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        rng.fill_standard_normal(&mut z);
        let lz = l.matvec(&z);
        points.push(mean.iter().zip(&lz).map(|(m, v)| m + v).collect());
    }
    EmpiricalMeasure::from_points(points)
}

/// Column layout of a CSV dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub feature_columns: Vec<String>,
    #[serde(default)]
    pub label_column: Option<String>,
    /// Appends a constant-1 feature after the named columns.
    #[serde(default)]
    pub intercept: bool,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        if self.feature_columns.is_empty() {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        for (i, a) in self.feature_columns.iter().enumerate() {
            for b in &self.feature_columns[i + 1..] {
                if a == b {
                    return Err(Error::Schema(format!("duplicate feature column '{a}'")));
                }
            }
        }
        if let Some(label) = &self.label_column {
            if self.feature_columns.iter().any(|f| f == label) {
                return Err(Error::Schema(format!(
                    "label column '{label}' also appears among the features"
                )));
            }
        }
        Ok(())
    }
}

/// Result of CSV ingestion: the measure, optional labels, and how many rows
/// were dropped for non-finite values.
#[derive(Debug, Clone)]
pub struct CsvIngest {
    pub measure: EmpiricalMeasure,
    pub labels: Option<Vec<f64>>,
    pub dropped_rows: usize,
}

/// Reads a header-first CSV into a uniform-weight measure. Rows with any
/// non-finite referenced value are dropped and counted; surviving row order
/// is preserved.
pub fn from_csv<P: AsRef<Path>>(path: P, schema: &DatasetSchema) -> Result<CsvIngest> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let feature_idx: Vec<usize> = schema
        .feature_columns
        .iter()
        .map(|c| col_index(c))
        .collect::<Result<_>>()?;
    let label_idx = match &schema.label_column {
        Some(c) => Some(col_index(c)?),
        None => None,
    };

    let mut points = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let parse = |idx: usize| -> Option<f64> {
            record.get(idx).and_then(|s| s.trim().parse::<f64>().ok())
        };
        let mut row: Vec<f64> = Vec::with_capacity(feature_idx.len() + usize::from(schema.intercept));
        let mut ok = true;
        for &idx in &feature_idx {
            match parse(idx) {
                Some(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        let label_val = if ok {
            match label_idx {
                Some(idx) => match parse(idx) {
                    Some(v) if v.is_finite() => Some(v),
                    _ => {
                        ok = false;
                        None
                    }
                },
                None => None,
            }
        } else {
            None
        };
        if !ok {
            dropped += 1;
            continue;
        }
        if schema.intercept {
            row.push(1.0);
        }
        points.push(row);
        if let (Some(ls), Some(v)) = (labels.as_mut(), label_val) {
            ls.push(v);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyData(
            "no rows survived ingestion (all dropped or file empty)".into(),
        ));
    }
    Ok(CsvIngest {
        measure: EmpiricalMeasure::from_points(points)?,
        labels,
        dropped_rows: dropped,
    })
}

/// Writes points (and optional labels) back to CSV. Floats are printed with
/// the shortest decimal form that parses back bit-exactly, so a
/// write-then-read round trip is exact.
pub fn write_csv<P: AsRef<Path>>(
    path: P,
    column_names: &[String],
    measure: &EmpiricalMeasure,
    label_column: Option<(&str, &[f64])>,
) -> Result<()> {
    if column_names.len() != measure.dim() {
        return Err(Error::Schema(format!(
            "{} column names for dimension {}",
            column_names.len(),
            measure.dim()
        )));
    }
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = column_names.to_vec();
    if let Some((name, labels)) = label_column {
        if labels.len() != measure.len() {
            return Err(Error::Shape("label length does not match measure".into()));
        }
        header.push(name.to_string());
    }
    writer.write_record(&header)?;
    for (i, p) in measure.points().iter().enumerate() {
        let mut rec: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        if let Some((_, labels)) = label_column {
            rec.push(format!("{}", labels[i]));
        }
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
