use serde::{Deserialize, Serialize};

use super::{Dataset, Stage, N_COLUMNS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnThreshold {
    pub column: String,
    /// 1-based rank into the ascending sort.
    pub rank: usize,
    pub threshold: f64,
    pub flagged: usize,
    /// The threshold equals the column minimum, so the column flags nothing.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub percentile: f64,
    pub applied: bool,
    pub input: usize,
    pub retained: usize,
    pub dropped: usize,
    pub columns: Vec<ColumnThreshold>,
}

impl OutlierReport {
    pub fn skipped(ds: &Dataset) -> Self {
        Self {
            percentile: 0.0,
            applied: false,
            input: ds.len(),
            retained: ds.len(),
            dropped: 0,
            columns: Vec::new(),
        }
    }
}

/// `P = percentile·(N+1)/100`, rounded half up and clamped to `[1, N]`.
pub fn percentile_rank(n: usize, percentile: f64) -> usize {
    let p = percentile * (n + 1) as f64 / 100.0;
    ((p + 0.5).floor() as usize).clamp(1, n)
}

/// Threshold and flags for one column; values `>= threshold` are flagged.
pub fn flag_column(name: &str, values: &[f64], percentile: f64) -> (ColumnThreshold, Vec<bool>) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = percentile_rank(values.len(), percentile);
    let threshold = sorted[rank - 1];
    let degenerate = threshold == sorted[0];
    let flags: Vec<bool> = values.iter().map(|&v| !degenerate && v >= threshold).collect();
    let info = ColumnThreshold {
        column: name.to_string(),
        rank,
        threshold,
        flagged: flags.iter().filter(|&&f| f).count(),
        degenerate,
    };
    (info, flags)
}

/// Drops every record flagged in any of the 20 columns.
pub fn remove_outliers(ds: &Dataset, percentile: f64) -> Result<(Dataset, OutlierReport)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("outlier removal on an empty dataset".into()));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::Config(format!("percentile {percentile} outside (0, 100]")));
    }
    let mut drop = vec![false; ds.len()];
    let mut columns = Vec::with_capacity(N_COLUMNS);
    for c in 0..N_COLUMNS {
        let (info, flags) = flag_column(&ds.columns[c], &ds.column(c), percentile);
        for (d, f) in drop.iter_mut().zip(flags) {
            *d |= f;
        }
        columns.push(info);
    }
    let mut out = ds.clone();
    out.records = ds
        .records
        .iter()
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|(r, _)| r.clone())
        .collect();
    out.split = None;
    out.stages.push(Stage::OutliersRemoved);
    let report = OutlierReport {
        percentile,
        applied: true,
        input: ds.len(),
        retained: out.len(),
        dropped: ds.len() - out.len(),
        columns,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::fixtures;

    #[test]
    fn nineteen_values_threshold_is_nineteen() {
        let values: Vec<f64> = (1..=19).map(f64::from).collect();
        let (info, flags) = flag_column("x", &values, 95.0);
        assert_eq!(info.rank, 19);
        assert_eq!(info.threshold, 19.0);
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        assert!(flags[18]);
    }

    #[test]
    fn ninety_nine_values_drop_five() {
        let values: Vec<f64> = (1..=99).map(f64::from).collect();
        let (info, flags) = flag_column("x", &values, 95.0);
        assert_eq!(info.rank, 95);
        assert_eq!(info.threshold, 95.0);
        let flagged: Vec<f64> = values.iter().zip(&flags).filter(|(_, &f)| f).map(|(v, _)| *v).collect();
        assert_eq!(flagged, vec![95.0, 96.0, 97.0, 98.0, 99.0]);
    }

    #[test]
    fn constant_column_flags_nothing() {
        let (info, flags) = flag_column("x", &[4.0; 30], 95.0);
        assert!(info.degenerate);
        assert!(flags.iter().all(|&f| !f));
    }

    #[test]
    fn rank_rounds_half_up_and_clamps() {
        // 95·10/100 = 9.5 → 10
        assert_eq!(percentile_rank(9, 95.0), 9);
        assert_eq!(percentile_rank(10, 95.0), 10);
        assert_eq!(percentile_rank(1, 95.0), 1);
        assert_eq!(percentile_rank(1, 1.0), 1);
        // 50·4/100 = 2
        assert_eq!(percentile_rank(3, 50.0), 2);
        // 50·6/100 = 3
        assert_eq!(percentile_rank(5, 50.0), 3);
    }

    #[test]
    fn dataset_drops_row_flagged_in_any_column() {
        let mut ds = fixtures::dataset(19);
        for (k, r) in ds.records.iter_mut().enumerate() {
            for c in 0..20 {
                *r.value_mut(c) = 1.0;
            }
            *r.value_mut(12) = (k + 1) as f64;
        }
        let (out, rep) = remove_outliers(&ds, 95.0).unwrap();
        assert_eq!(rep.dropped, 1);
        assert_eq!(out.len(), 18);
        assert!(out.records.iter().all(|r| r.value(12) < 19.0));
        assert_eq!(rep.columns.iter().filter(|c| c.degenerate).count(), 19);
        assert!(out.has_stage(Stage::OutliersRemoved));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let ds = fixtures::dataset(0);
        assert!(matches!(remove_outliers(&ds, 95.0), Err(Error::EmptyDataset(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn drops_respect_union_bound(n in 1usize..120, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::seeds::rng(seed, 0);
            let mut ds = fixtures::dataset(n);
            for r in ds.records.iter_mut() {
                for c in 0..20 {
                    // Continuous draws; heavy ties can flag more than the bound allows.
                    *r.value_mut(c) = rng.random_range(0.0..10.0);
                }
            }
            let (out, rep) = remove_outliers(&ds, 95.0).unwrap();
            prop_assert!(rep.dropped as f64 <= n as f64 * 20.0 * 0.05 + 20.0);
            prop_assert_eq!(out.len() + rep.dropped, n);
        }
    }
}
