//! Measurement records, CSV ingestion, preprocessing and the synthetic generator.
//!
//! Preprocessing runs in a fixed order: [`remove_outliers`] → [`split`] →
//! [`fit_standardizer`] on the training rows → [`standardize`]. Each stage
//! appends itself to [`Dataset::stages`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FEATURE_NAMES, N_FEATURES, N_OUTPUTS, OUTPUT_NAMES};
use crate::nn::Tensor;

mod csv_io;
mod outliers;
mod split;
mod standardize;
pub mod synth;

pub use csv_io::{load_csv, read_csv, write_csv, CSV_HEADER};
pub use outliers::{flag_column, percentile_rank, remove_outliers, ColumnThreshold, OutlierReport};
pub use split::{split, train_count, Split, SplitManifest, SplitMode};
pub use standardize::{destandardize, fit_standardizer, standardize, StandardizationStats};
pub use synth::{synthesize, GenConfig, GroundTruth, LoadSignature};

pub const N_COLUMNS: usize = N_FEATURES + N_OUTPUTS;

/// The 20 numeric columns: voltage features then current outputs.
pub fn column_names() -> Vec<String> {
    FEATURE_NAMES.iter().chain(OUTPUT_NAMES.iter()).map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicRecord {
    pub timestamp: Option<String>,
    /// v3..v19 in volts, thd_v in percent.
    pub v: [f64; N_FEATURES],
    /// i3..i19 in amperes, thd_i in percent.
    pub i: [f64; N_OUTPUTS],
}

impl HarmonicRecord {
    /// Column `c` of the 20-column layout.
    pub fn value(&self, c: usize) -> f64 {
        if c < N_FEATURES {
            self.v[c]
        } else {
            self.i[c - N_FEATURES]
        }
    }

    pub fn value_mut(&mut self, c: usize) -> &mut f64 {
        if c < N_FEATURES {
            &mut self.v[c]
        } else {
            &mut self.i[c - N_FEATURES]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    OutliersRemoved,
    Split,
    Standardized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<HarmonicRecord>,
    pub columns: Vec<String>,
    pub stats: Option<StandardizationStats>,
    pub split: Option<Split>,
    /// Source file or generator seed.
    pub provenance: String,
    pub stages: Vec<Stage>,
}

impl Dataset {
    pub fn new(records: Vec<HarmonicRecord>, provenance: impl Into<String>) -> Self {
        Self {
            records,
            columns: column_names(),
            stats: None,
            split: None,
            provenance: provenance.into(),
            stages: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.value(c)).collect()
    }

    /// `[rows.len(), 10]` voltage features.
    pub fn features(&self, rows: &[usize]) -> Result<Tensor> {
        self.gather(rows, |r| &r.v[..])
    }

    /// `[rows.len(), 10]` current targets.
    pub fn targets(&self, rows: &[usize]) -> Result<Tensor> {
        self.gather(rows, |r| &r.i[..])
    }

    fn gather(&self, rows: &[usize], pick: impl Fn(&HarmonicRecord) -> &[f64]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset("no rows selected".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * 10);
        for &r in rows {
            let rec = self
                .records
                .get(r)
                .ok_or_else(|| Error::Usage(format!("row {r} out of range for {} records", self.len())))?;
            data.extend_from_slice(pick(rec));
        }
        Tensor::matrix(rows.len(), 10, data)
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn train_rows(&self) -> Result<&[usize]> {
        Ok(&self.require_split()?.train)
    }

    pub fn test_rows(&self) -> Result<&[usize]> {
        Ok(&self.require_split()?.test)
    }

    fn require_split(&self) -> Result<&Split> {
        self.split.as_ref().ok_or_else(|| Error::Usage("dataset has not been split".into()))
    }

    pub fn has_stage(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }
}

/// Output of the full preprocessing chain.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Standardized records with split assignment.
    pub dataset: Dataset,
    pub stats: StandardizationStats,
    pub outliers: OutlierReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub percentile: f64,
    /// `false` skips outlier removal entirely.
    pub remove_outliers: bool,
    pub train_ratio: f64,
    pub split_mode: SplitMode,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            percentile: 95.0,
            remove_outliers: true,
            train_ratio: 0.85,
            split_mode: SplitMode::Shuffled,
        }
    }
}

/// Outlier removal, split, train-only standardization.
pub fn preprocess(raw: &Dataset, cfg: &PreprocessConfig, seed: u64) -> Result<Prepared> {
    let (cleaned, report) = if cfg.remove_outliers {
        remove_outliers(raw, cfg.percentile)?
    } else {
        (raw.clone(), OutlierReport::skipped(raw))
    };
    let split_ds = split(&cleaned, cfg.train_ratio, seed, cfg.split_mode)?;
    let stats = fit_standardizer(&split_ds, split_ds.train_rows()?)?;
    let dataset = standardize(&split_ds, &stats)?;
    Ok(Prepared {
        dataset,
        stats,
        outliers: report,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn record(seed: f64) -> HarmonicRecord {
        let mut v = [0.0; 10];
        let mut i = [0.0; 10];
        for k in 0..10 {
            v[k] = 1.0 + seed * 0.5 + k as f64 * 0.125;
            i[k] = 2.0 + seed * 0.25 + k as f64 * 0.0625;
        }
        HarmonicRecord { timestamp: None, v, i }
    }

    pub fn dataset(n: usize) -> Dataset {
        Dataset::new((0..n).map(|s| record(s as f64)).collect(), "fixture")
    }
}
