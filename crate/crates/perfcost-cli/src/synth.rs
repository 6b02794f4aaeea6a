//! Synthetic look-alike for the credit-scoring dataset: heavy-tailed
//! positive features with the usual column names and a default indicator
//! driven by a logistic model in the standardized features. No real records
//! are bundled or required.

use perfcost::error::Result;
use perfcost::measures::{write_csv, DatasetSchema, EmpiricalMeasure};
use perfcost::perf_risk::LabeledData;
use perfcost::rng::Rng;
use std::path::Path;

pub const FEATURE_COLUMNS: [&str; 3] = [
    "RevolvingUtilizationOfUnsecuredLines",
    "DebtRatio",
    "MonthlyIncome",
];
pub const LABEL_COLUMN: &str = "SeriousDlqin2yrs";

pub fn credit_schema() -> DatasetSchema {
    DatasetSchema {
        feature_columns: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        label_column: Some(LABEL_COLUMN.to_string()),
        intercept: false,
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Draws `n` synthetic credit records. Utilization is a squashed lognormal
/// in [0, ~1.3], debt ratio and income are lognormal; default probability
/// rises with utilization and debt ratio and falls with income.
pub fn sample_credit(n: usize, seed: u64) -> Result<LabeledData> {
    let mut rng = Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let (z1, z2) = rng.next_normal_pair();
        let (z3, _) = rng.next_normal_pair();
        let utilization = (0.35 * (0.9 * z1 - 0.6).exp()).min(1.3);
        let debt_ratio = 0.4 * (0.7 * z2).exp();
        let income = 5.0 * (0.5 * z3 + 0.1).exp(); // in thousands
        let logit = -2.2 + 2.6 * utilization + 0.8 * debt_ratio - 0.25 * income;
        let y = if rng.next_f64() < sigmoid(logit) { 1.0 } else { 0.0 };
        pts.push(vec![utilization, debt_ratio, income]);
        labels.push(y);
    }
    LabeledData::new(EmpiricalMeasure::from_points(pts)?, labels)
}

/// Z-scores each feature column with the sample statistics (deterministic in
/// the data); returns the standardized data and the per-column (mean, sd).
pub fn standardize(data: &LabeledData) -> Result<(LabeledData, Vec<(f64, f64)>)> {
    let d = data.measure.dim();
    let n = data.measure.len() as f64;
    let mut stats = Vec::with_capacity(d);
    for j in 0..d {
        let mean = data.measure.points().iter().map(|p| p[j]).sum::<f64>() / n;
        let var = data
            .measure
            .points()
            .iter()
            .map(|p| (p[j] - mean) * (p[j] - mean))
            .sum::<f64>()
            / n;
        stats.push((mean, var.sqrt().max(1e-12)));
    }
    let pts: Vec<Vec<f64>> = data
        .measure
        .points()
        .iter()
        .map(|p| {
            p.iter()
                .zip(&stats)
                .map(|(x, (m, s))| (x - m) / s)
                .collect()
        })
        .collect();
    Ok((
        LabeledData::new(EmpiricalMeasure::from_points(pts)?, data.labels.clone())?,
        stats,
    ))
}

/// Writes a synthetic credit CSV with the canonical column names.
pub fn write_credit_csv(path: &Path, n: usize, seed: u64) -> Result<()> {
    let data = sample_credit(n, seed)?;
    let cols: Vec<String> = FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_csv(path, &cols, &data.measure, Some((LABEL_COLUMN, &data.labels)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use perfcost::measures::from_csv;

    #[test]
    fn generator_is_deterministic_and_plausible() {
        let a = sample_credit(500, 7).unwrap();
        let b = sample_credit(500, 7).unwrap();
        assert_eq!(a.measure, b.measure);
        assert_eq!(a.labels, b.labels);
        let rate = a.labels.iter().sum::<f64>() / 500.0;
        assert!(rate > 0.02 && rate < 0.5, "default rate {rate}");
        for p in a.measure.points() {
            assert!(p[0] >= 0.0 && p[0] <= 1.3);
            assert!(p[1] > 0.0 && p[2] > 0.0);
        }
    }

    #[test]
    fn csv_round_trip_through_the_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("credit.csv");
        write_credit_csv(&path, 50, 3).unwrap();
        let got = from_csv(&path, &credit_schema()).unwrap();
        assert_eq!(got.measure.len(), 50);
        assert_eq!(got.dropped_rows, 0);
        assert!(got.labels.unwrap().iter().all(|&y| y == 0.0 || y == 1.0));
    }

    #[test]
    fn standardize_zeroes_means() {
        let data = sample_credit(400, 11).unwrap();
        let (std_data, stats) = standardize(&data).unwrap();
        for j in 0..3 {
            let mean: f64 =
                std_data.measure.points().iter().map(|p| p[j]).sum::<f64>() / 400.0;
            assert!(mean.abs() < 1e-10);
            assert!(stats[j].1 > 0.0);
        }
    }
}
