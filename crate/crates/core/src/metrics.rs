//! R², MAE and RMSE per output column and pooled over all outputs, and the
//! percentage-improvement table against baseline models.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StandardizationStats};
use crate::error::{Error, Result};
use crate::models::{Predictor, OUTPUT_NAMES};
use crate::nn::Tensor;

/// Which mean the R² denominator is centred on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RSquaredMode {
    /// Mean of the actual values, the usual coefficient of determination.
    #[default]
    Standard,
    /// Mean of the predicted values, the literal reading of the metric's gloss.
    PredictedMean,
}

impl std::str::FromStr for RSquaredMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "predicted_mean" | "predicted-mean" => Ok(Self::PredictedMean),
            other => Err(Error::Config(format!(
                "unknown R² mode `{other}` (expected standard or predicted_mean)"
            ))),
        }
    }
}

fn check(actual: &[f64], predicted: &[f64], min: usize, what: &str) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::dim(
            what,
            format!("{} actual values vs {} predictions", actual.len(), predicted.len()),
        ));
    }
    if actual.len() < min {
        return Err(Error::UndefinedMetric(format!(
            "{what} needs at least {min} value(s), got {}",
            actual.len()
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    r_squared_with(actual, predicted, RSquaredMode::Standard)
}

/// `1 − Σ(y−ŷ)² / Σ(y−c)²` where `c` is picked by `mode`.
pub fn r_squared_with(actual: &[f64], predicted: &[f64], mode: RSquaredMode) -> Result<f64> {
    check(actual, predicted, 2, "r_squared")?;
    if actual.iter().all(|&y| y == actual[0]) {
        return Err(Error::UndefinedMetric(
            "R² is undefined for constant actual values (zero variance)".into(),
        ));
    }
    let c = match mode {
        RSquaredMode::Standard => mean(actual),
        RSquaredMode::PredictedMean => mean(predicted),
    };
    let ss_res: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum();
    let ss_tot: f64 = actual.iter().map(|y| (y - c) * (y - c)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted, 1, "mae")?;
    Ok(actual.iter().zip(predicted).map(|(y, p)| (y - p).abs()).sum::<f64>() / actual.len() as f64)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted, 1, "rmse")?;
    let ms = actual.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / actual.len() as f64;
    Ok(ms.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub output: String,
    pub r2: f64,
    pub mae: f64,
    pub rmse: f64,
}

impl MetricRow {
    fn compute(output: &str, actual: &[f64], predicted: &[f64], mode: RSquaredMode) -> Result<Self> {
        let r2 = r_squared_with(actual, predicted, mode)
            .map_err(|e| Error::UndefinedMetric(format!("output `{output}`: {e}")))?;
        Ok(Self {
            output: output.to_string(),
            r2,
            mae: mae(actual, predicted)?,
            rmse: rmse(actual, predicted)?,
        })
    }
}

/// Test-set metrics in destandardized units (amperes, THD in percent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub samples: usize,
    pub r2_mode: RSquaredMode,
    /// The 10 outputs, then `Total` computed over the pooled residuals of all outputs.
    pub rows: Vec<MetricRow>,
    /// Unweighted mean of the 10 per-output rows, the other reading of `Total`.
    pub mean_of_outputs: MetricRow,
}

pub const TOTAL: &str = "Total";

impl MetricsReport {
    /// `actual` and `predicted` are `[n, 10]` in the same units.
    pub fn from_predictions(model: &str, actual: &Tensor, predicted: &Tensor, mode: RSquaredMode) -> Result<Self> {
        if actual.shape() != predicted.shape() || actual.cols() != OUTPUT_NAMES.len() {
            return Err(Error::dim(
                "metrics",
                format!("actual {:?} vs predicted {:?}", actual.shape(), predicted.shape()),
            ));
        }
        let mut rows = Vec::with_capacity(OUTPUT_NAMES.len() + 1);
        for (k, name) in OUTPUT_NAMES.iter().enumerate() {
            let a = actual.column(k)?;
            let p = predicted.column(k)?;
            rows.push(MetricRow::compute(name, a.data(), p.data(), mode)?);
        }
        let n = OUTPUT_NAMES.len() as f64;
        let mean_of_outputs = MetricRow {
            output: "Mean".into(),
            r2: rows.iter().map(|r| r.r2).sum::<f64>() / n,
            mae: rows.iter().map(|r| r.mae).sum::<f64>() / n,
            rmse: rows.iter().map(|r| r.rmse).sum::<f64>() / n,
        };
        rows.push(MetricRow::compute(TOTAL, actual.data(), predicted.data(), mode)?);
        Ok(Self {
            model: model.to_string(),
            samples: actual.rows(),
            r2_mode: mode,
            rows,
            mean_of_outputs,
        })
    }

    pub fn row(&self, output: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.output == output)
    }

    pub fn total(&self) -> &MetricRow {
        self.rows.last().expect("total row")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["output", "r2", "mae", "rmse"])?;
        for r in &self.rows {
            w.write_record([r.output.clone(), r.r2.to_string(), r.mae.to_string(), r.rmse.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("metrics csv", e))?;
        Ok(())
    }
}

/// Predictions on the test split, destandardized with the training statistics.
pub fn evaluate(
    model: &dyn Predictor,
    name: &str,
    ds: &Dataset,
    stats: &StandardizationStats,
    mode: RSquaredMode,
) -> Result<MetricsReport> {
    let rows = ds.test_rows()?;
    let x = ds.features(rows)?;
    let actual = stats.destandardize_targets(&ds.targets(rows)?)?;
    let predicted = stats.destandardize_targets(&model.predict(&x)?)?;
    MetricsReport::from_predictions(name, &actual, &predicted, mode)
}

/// `(baseline − candidate) / baseline × 100`; equal values give exactly 0.
pub fn improvement_pct(baseline: f64, candidate: f64) -> f64 {
    if baseline == candidate {
        0.0
    } else {
        (baseline - candidate) / baseline * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub metric: String,
    pub output: String,
    pub candidate: f64,
    /// One value per baseline, in table order.
    pub baselines: Vec<f64>,
    pub improvement_pct: Vec<f64>,
}

/// MAE and RMSE of a candidate against each baseline, one row per (metric, output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementTable {
    pub candidate: String,
    pub baselines: Vec<String>,
    pub rows: Vec<ImprovementRow>,
}

pub fn improvement(candidate: &MetricsReport, baselines: &[MetricsReport]) -> Result<ImprovementTable> {
    if baselines.is_empty() {
        return Err(Error::Usage("improvement needs at least one baseline report".into()));
    }
    for b in baselines {
        let same = b.rows.len() == candidate.rows.len()
            && b.rows.iter().zip(&candidate.rows).all(|(x, y)| x.output == y.output);
        if !same {
            return Err(Error::Schema(format!(
                "report for `{}` has different output rows than `{}`",
                b.model, candidate.model
            )));
        }
    }
    let mut rows = Vec::new();
    for (metric, pick) in [("MAE", (|r: &MetricRow| r.mae) as fn(&MetricRow) -> f64), ("RMSE", |r| r.rmse)] {
        for (i, c) in candidate.rows.iter().enumerate() {
            let values: Vec<f64> = baselines.iter().map(|b| pick(&b.rows[i])).collect();
            rows.push(ImprovementRow {
                metric: metric.into(),
                output: c.output.clone(),
                candidate: pick(c),
                improvement_pct: values.iter().map(|&b| improvement_pct(b, pick(c))).collect(),
                baselines: values,
            });
        }
    }
    Ok(ImprovementTable {
        candidate: candidate.model.clone(),
        baselines: baselines.iter().map(|b| b.model.clone()).collect(),
        rows,
    })
}

impl ImprovementTable {
    /// `metric, output, <candidate>, <baselines…>, improvement_vs_<baseline>_pct…`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["metric".to_string(), "output".to_string(), self.candidate.clone()];
        header.extend(self.baselines.iter().cloned());
        header.extend(self.baselines.iter().map(|b| format!("improvement_vs_{b}_pct")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.metric.clone(), r.output.clone(), r.candidate.to_string()];
            rec.extend(r.baselines.iter().map(f64::to_string));
            rec.extend(r.improvement_pct.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("improvement csv", e))?;
        Ok(())
    }
}
