use serde::{Deserialize, Serialize};

use super::{Dataset, Stage, N_COLUMNS};
use crate::error::{Error, Result};
use crate::models::{N_FEATURES, N_OUTPUTS};
use crate::nn::Tensor;

/// Per-column mean and sample standard deviation of the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub fit_rows: usize,
    pub fit_source: String,
}

pub fn fit_standardizer(ds: &Dataset, rows: &[usize]) -> Result<StandardizationStats> {
    if rows.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "standardization needs at least 2 rows, have {}",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; N_COLUMNS];
    let mut std = vec![0.0; N_COLUMNS];
    for c in 0..N_COLUMNS {
        let m = rows.iter().map(|&r| ds.records[r].value(c)).sum::<f64>() / n;
        let ss: f64 = rows.iter().map(|&r| (ds.records[r].value(c) - m).powi(2)).sum();
        let s = (ss / (n - 1.0)).sqrt();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Config(format!(
                "column `{}` is constant on the training rows and cannot be standardized",
                ds.columns[c]
            )));
        }
        mean[c] = m;
        std[c] = s;
    }
    Ok(StandardizationStats {
        columns: ds.columns.clone(),
        mean,
        std,
        fit_rows: rows.len(),
        fit_source: "train".into(),
    })
}

/// `(x − μ)/σ` on every column of every record.
pub fn standardize(ds: &Dataset, stats: &StandardizationStats) -> Result<Dataset> {
    if stats.columns != ds.columns {
        return Err(Error::Schema(format!(
            "statistics fitted on columns {:?}, dataset has {:?}",
            stats.columns, ds.columns
        )));
    }
    let mut out = ds.clone();
    for r in &mut out.records {
        for c in 0..N_COLUMNS {
            let v = r.value_mut(c);
            *v = (*v - stats.mean[c]) / stats.std[c];
        }
    }
    out.stats = Some(stats.clone());
    out.stages.push(Stage::Standardized);
    Ok(out)
}

/// Inverse map; `values[k]` belongs to column `columns[k]`.
pub fn destandardize(values: &[f64], stats: &StandardizationStats, columns: &[usize]) -> Result<Vec<f64>> {
    if values.len() != columns.len() {
        return Err(Error::dim("destandardize", format!("{} values for {} columns", values.len(), columns.len())));
    }
    columns
        .iter()
        .zip(values)
        .map(|(&c, &v)| {
            if c >= stats.mean.len() {
                return Err(Error::Schema(format!("column index {c} outside the fitted statistics")));
            }
            Ok(v * stats.std[c] + stats.mean[c])
        })
        .collect()
}

impl StandardizationStats {
    /// Raw `[B,10]` voltage features to model inputs.
    pub fn standardize_features(&self, x: &Tensor) -> Result<Tensor> {
        self.map_block(x, 0, |v, m, s| (v - m) / s)
    }

    /// Model outputs `[B,10]` back to amperes / percent.
    pub fn destandardize_targets(&self, y: &Tensor) -> Result<Tensor> {
        self.map_block(y, N_FEATURES, |v, m, s| v * s + m)
    }

    pub fn standardize_targets(&self, y: &Tensor) -> Result<Tensor> {
        self.map_block(y, N_FEATURES, |v, m, s| (v - m) / s)
    }

    fn map_block(&self, t: &Tensor, offset: usize, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        if t.shape().len() != 2 || t.cols() != N_OUTPUTS || self.mean.len() != N_COLUMNS {
            return Err(Error::dim("standardization", format!("block shape {:?}", t.shape())));
        }
        let mut out = t.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let c = offset + k % N_OUTPUTS;
            *v = f(*v, self.mean[c], self.std[c]);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{fixtures, split, SplitMode};

    fn random_dataset(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = crate::seeds::rng(seed, 0);
        let mut ds = fixtures::dataset(n);
        for r in &mut ds.records {
            for c in 0..20 {
                *r.value_mut(c) = rng.random_range(0.0..50.0) * (c + 1) as f64;
            }
        }
        ds
    }

    #[test]
    fn mean_maps_to_zero_and_mean_plus_std_to_one() {
        let ds = random_dataset(30, 1);
        let stats = fit_standardizer(&ds, &ds.all_rows()).unwrap();
        let mut probe = ds.clone();
        probe.records.truncate(2);
        for c in 0..20 {
            *probe.records[0].value_mut(c) = stats.mean[c];
            *probe.records[1].value_mut(c) = stats.mean[c] + stats.std[c];
        }
        let z = standardize(&probe, &stats).unwrap();
        for c in 0..20 {
            assert_eq!(z.records[0].value(c), 0.0);
            assert_close!(z.records[1].value(c), 1.0, 1e-15);
        }
    }

    #[test]
    fn training_columns_have_zero_mean_unit_sample_std() {
        let ds = split(&random_dataset(500, 2), 0.85, 3, SplitMode::Shuffled).unwrap();
        let rows = ds.train_rows().unwrap().to_vec();
        let stats = fit_standardizer(&ds, &rows).unwrap();
        let z = standardize(&ds, &stats).unwrap();
        let n = rows.len() as f64;
        for c in 0..20 {
            let col: Vec<f64> = rows.iter().map(|&r| z.records[r].value(c)).collect();
            let m = col.iter().sum::<f64>() / n;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(m.abs() <= 1e-10, "{m}");
            assert!((s - 1.0).abs() <= 1e-10, "{s}");
        }
    }

    #[test]
    fn constant_column_is_config_error_naming_it() {
        let mut ds = random_dataset(10, 3);
        for r in &mut ds.records {
            r.i[4] = 2.0;
        }
        match fit_standardizer(&ds, &ds.all_rows()) {
            Err(Error::Config(msg)) => assert!(msg.contains("i11")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn foreign_column_set_is_schema_error() {
        let ds = random_dataset(10, 4);
        let mut stats = fit_standardizer(&ds, &ds.all_rows()).unwrap();
        stats.columns.swap(0, 1);
        assert!(matches!(standardize(&ds, &stats), Err(Error::Schema(_))));
    }

    proptest! {
        #[test]
        fn round_trip_within_1e12(seed in any::<u64>(), x in 0.0f64..1e3, c in 0usize..20) {
            let ds = random_dataset(20, seed);
            let stats = fit_standardizer(&ds, &ds.all_rows()).unwrap();
            let z = (x - stats.mean[c]) / stats.std[c];
            let back = destandardize(&[z], &stats, &[c]).unwrap()[0];
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
