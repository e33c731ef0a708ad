//! Shapley attribution of predictions to the 10 voltage features.
//!
//! The value of a coalition `S` is the model output averaged over a background
//! set, with the explained sample's values substituted on `S` (interventional
//! replacement). With 10 features all 1024 coalitions can be enumerated, which
//! gives exact Shapley values; the permutation estimator samples orderings
//! instead. Both work on every output column of the model at once.

use std::io::Write;

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{Predictor, FEATURE_NAMES, N_FEATURES, OUTPUT_NAMES};
use crate::nn::Tensor;
use crate::seeds;

pub const N_COALITIONS: usize = 1 << N_FEATURES;

/// Coalition rows evaluated per model call when enumerating.
const COALITIONS_PER_CALL: usize = 32;

/// A subset of the feature indices, bit `j` set when feature `j` is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(u16);

impl Coalition {
    pub const EMPTY: Self = Self(0);
    pub const FULL: Self = Self((N_COALITIONS - 1) as u16);

    pub fn from_bits(bits: usize) -> Result<Self> {
        if bits >= N_COALITIONS {
            return Err(Error::Usage(format!("coalition bits {bits:#b} name more than {N_FEATURES} features")));
        }
        Ok(Self(bits as u16))
    }

    pub fn from_features(features: &[usize]) -> Result<Self> {
        features.iter().try_fold(Self::EMPTY, |s, &j| {
            if j >= N_FEATURES {
                Err(Error::Usage(format!("feature index {j} out of range")))
            } else {
                Ok(s.with(j))
            }
        })
    }

    pub fn bits(self) -> usize {
        self.0 as usize
    }

    pub fn contains(self, j: usize) -> bool {
        self.0 >> j & 1 == 1
    }

    pub fn with(self, j: usize) -> Self {
        Self(self.0 | 1 << j)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..N_COALITIONS).map(|b| Self(b as u16))
    }
}

/// Reference rows (standardized features) defining the expectation in `v(S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    rows: Tensor,
    /// Dataset rows the background was drawn from, when it came from a dataset.
    pub source_rows: Vec<usize>,
    pub seed: Option<u64>,
}

impl Background {
    pub fn new(rows: Tensor) -> Result<Self> {
        if rows.shape().len() != 2 || rows.cols() != N_FEATURES {
            return Err(Error::dim("background", format!("rows {:?}, expected [B, {N_FEATURES}]", rows.shape())));
        }
        Ok(Self {
            rows,
            source_rows: Vec::new(),
            seed: None,
        })
    }

    /// `b` distinct training rows (all of them if there are fewer), seeded.
    pub fn sample(ds: &Dataset, b: usize, seed: u64) -> Result<Self> {
        if b == 0 {
            return Err(Error::Config("background size must be at least 1".into()));
        }
        let train = ds.train_rows()?;
        let picked = pick_rows(train, b, seeds::rng(seed, seeds::stream::BACKGROUND));
        Ok(Self {
            rows: ds.features(&picked)?,
            source_rows: picked,
            seed: Some(seed),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    pub fn mean(&self) -> [f64; N_FEATURES] {
        let mut m = [0.0; N_FEATURES];
        for r in 0..self.len() {
            for (acc, v) in m.iter_mut().zip(self.rows.row(r)) {
                *acc += v;
            }
        }
        m.map(|s| s / self.len() as f64)
    }

    /// Background rows with the explained sample's values on `s`.
    fn fill(&self, x: &[f64], s: Coalition, out: &mut Vec<f64>) {
        for r in 0..self.len() {
            let row = self.rows.row(r);
            out.extend((0..N_FEATURES).map(|j| if s.contains(j) { x[j] } else { row[j] }));
        }
    }
}

/// Up to `n` distinct entries of `rows`, returned in ascending order.
fn pick_rows(rows: &[usize], n: usize, mut rng: ChaCha8Rng) -> Vec<usize> {
    if n >= rows.len() {
        return rows.to_vec();
    }
    let mut picked: Vec<usize> = sample(&mut rng, rows.len(), n).into_iter().map(|i| rows[i]).collect();
    picked.sort_unstable();
    picked
}

fn check_sample(x: &[f64]) -> Result<()> {
    if x.len() != N_FEATURES {
        return Err(Error::dim("explain", format!("sample has {} features, expected {N_FEATURES}", x.len())));
    }
    Ok(())
}

/// Column means of `model` over the rows of `batch`, split into consecutive blocks of `block` rows.
fn block_means(model: &dyn Predictor, batch: Vec<f64>, block: usize) -> Result<Vec<Vec<f64>>> {
    let rows = batch.len() / N_FEATURES;
    let y = model.predict(&Tensor::matrix(rows, N_FEATURES, batch)?)?;
    let width = y.cols();
    Ok((0..rows / block)
        .map(|c| {
            let mut m = vec![0.0; width];
            for r in c * block..(c + 1) * block {
                for (acc, v) in m.iter_mut().zip(y.row(r)) {
                    *acc += v;
                }
            }
            m.iter_mut().for_each(|v| *v /= block as f64);
            m
        })
        .collect())
}

/// `v(S)` for every output column of `model`.
pub fn coalition_value(model: &dyn Predictor, x: &[f64], s: Coalition, bg: &Background) -> Result<Vec<f64>> {
    check_sample(x)?;
    let mut batch = Vec::with_capacity(bg.len() * N_FEATURES);
    bg.fill(x, s, &mut batch);
    Ok(block_means(model, batch, bg.len())?.remove(0))
}

/// `v(S)` for all 1024 coalitions of one sample, indexed by coalition bits.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionTable {
    values: Vec<Vec<f64>>,
}

impl CoalitionTable {
    pub fn compute(model: &dyn Predictor, x: &[f64], bg: &Background) -> Result<Self> {
        check_sample(x)?;
        let mut values = Vec::with_capacity(N_COALITIONS);
        for first in (0..N_COALITIONS).step_by(COALITIONS_PER_CALL) {
            let mut batch = Vec::with_capacity(COALITIONS_PER_CALL * bg.len() * N_FEATURES);
            for bits in first..first + COALITIONS_PER_CALL {
                bg.fill(x, Coalition(bits as u16), &mut batch);
            }
            values.extend(block_means(model, batch, bg.len())?);
        }
        Ok(Self { values })
    }

    pub fn value(&self, s: Coalition) -> &[f64] {
        &self.values[s.bits()]
    }

    pub fn outputs(&self) -> usize {
        self.values[0].len()
    }
}

/// `|S|! (p − |S| − 1)! / p!` for `|S| = 0..p−1`.
pub fn shapley_weights() -> [f64; N_FEATURES] {
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let p = N_FEATURES;
    std::array::from_fn(|s| fact(s) * fact(p - s - 1) / fact(p))
}

/// Attributions `φ[output][feature]`.
pub type Attribution = Vec<[f64; N_FEATURES]>;

/// Exact Shapley values from a full coalition table.
pub fn exact_from_table(table: &CoalitionTable) -> Attribution {
    let w = shapley_weights();
    let mut phi = vec![[0.0; N_FEATURES]; table.outputs()];
    for s in Coalition::all() {
        let base = table.value(s);
        for j in (0..N_FEATURES).filter(|&j| !s.contains(j)) {
            let with = table.value(s.with(j));
            for (o, p) in phi.iter_mut().enumerate() {
                p[j] += w[s.len()] * (with[o] - base[o]);
            }
        }
    }
    phi
}

pub fn exact_shapley(model: &dyn Predictor, x: &[f64], bg: &Background) -> Result<Attribution> {
    Ok(exact_from_table(&CoalitionTable::compute(model, x, bg)?))
}

/// Permutation sampling over any coalition-value oracle.
fn permutation_estimate(
    outputs: usize,
    m: usize,
    seed: u64,
    mut value: impl FnMut(Coalition) -> Result<Vec<f64>>,
) -> Result<Attribution> {
    if m < 1 {
        return Err(Error::Config("the Monte-Carlo estimator needs at least one permutation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: [usize; N_FEATURES] = std::array::from_fn(|j| j);
    let mut phi = vec![[0.0; N_FEATURES]; outputs];
    let empty = value(Coalition::EMPTY)?;
    for _ in 0..m {
        order.shuffle(&mut rng);
        let mut s = Coalition::EMPTY;
        let mut prev = empty.clone();
        for &j in &order {
            s = s.with(j);
            let cur = value(s)?;
            for (p, (c, b)) in phi.iter_mut().zip(cur.iter().zip(&prev)) {
                p[j] += c - b;
            }
            prev = cur;
        }
    }
    for p in &mut phi {
        p.iter_mut().for_each(|v| *v /= m as f64);
    }
    Ok(phi)
}

/// Permutation-sampling estimate with `m` orderings. Coalition values are
/// memoized, so repeated prefixes cost one model evaluation each.
pub fn mc_shapley(model: &dyn Predictor, x: &[f64], bg: &Background, m: usize, seed: u64) -> Result<Attribution> {
    check_sample(x)?;
    let mut memo: Vec<Option<Vec<f64>>> = vec![None; N_COALITIONS];
    let outputs = coalition_value(model, x, Coalition::FULL, bg)?.len();
    permutation_estimate(outputs, m, seed, |s| {
        if let Some(v) = &memo[s.bits()] {
            return Ok(v.clone());
        }
        let v = coalition_value(model, x, s, bg)?;
        memo[s.bits()] = Some(v.clone());
        Ok(v)
    })
}

/// The same estimator reading values from a precomputed table.
pub fn mc_from_table(table: &CoalitionTable, m: usize, seed: u64) -> Result<Attribution> {
    permutation_estimate(table.outputs(), m, seed, |s| Ok(table.value(s).to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    MonteCarlo { permutations: usize },
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Exact => write!(f, "exact"),
            Estimator::MonteCarlo { permutations } => write!(f, "monte-carlo M={permutations}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Background rows drawn from the training split.
    pub background: usize,
    /// Explained rows drawn from the test split.
    pub samples: usize,
    pub estimator: Estimator,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            background: 100,
            samples: 200,
            estimator: Estimator::Exact,
            seed: 0,
        }
    }
}

/// Mean |φ| of each feature for each output, raw and scaled by the row maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub outputs: Vec<String>,
    pub features: Vec<String>,
    pub raw: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    pub samples: usize,
    pub estimator: Estimator,
}

impl ShapMatrix {
    fn from_raw(raw: Vec<Vec<f64>>, samples: usize, estimator: Estimator) -> Self {
        let normalized = raw
            .iter()
            .map(|row| {
                let max = row.iter().copied().fold(0.0, f64::max);
                if max > 0.0 {
                    row.iter().map(|v| v / max).collect()
                } else {
                    vec![0.0; row.len()]
                }
            })
            .collect();
        let outputs = if raw.len() == OUTPUT_NAMES.len() {
            OUTPUT_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..raw.len()).map(|o| format!("output{o}")).collect()
        };
        Self {
            outputs,
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            raw,
            normalized,
            samples,
            estimator,
        }
    }

    /// Feature indices of each output row, most important first (ties by index).
    pub fn ranking(&self, output: usize) -> Vec<usize> {
        let row = &self.raw[output];
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx
    }

    fn write_table<W: Write>(&self, rows: &[Vec<f64>], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["output".to_string()];
        header.extend(self.features.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.outputs.iter().zip(rows) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("shap csv", e))?;
        Ok(())
    }

    pub fn write_raw_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write_table(&self.raw, writer)
    }

    pub fn write_normalized_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write_table(&self.normalized, writer)
    }
}

/// Attribution of one sample under `estimator`; Monte-Carlo draws use `seed`.
pub fn attribute(
    model: &dyn Predictor,
    x: &[f64],
    bg: &Background,
    estimator: Estimator,
    seed: u64,
) -> Result<Attribution> {
    match estimator {
        Estimator::Exact => exact_shapley(model, x, bg),
        Estimator::MonteCarlo { permutations } => mc_shapley(model, x, bg, permutations, seed),
    }
}

/// Mean |φ| over the rows of `samples`. Sample `i` uses the Monte-Carlo seed
/// `derive(seed, i)`, so the result does not depend on evaluation order.
pub fn importance_matrix(
    model: &(dyn Predictor + Sync),
    samples: &Tensor,
    bg: &Background,
    estimator: Estimator,
    seed: u64,
) -> Result<ShapMatrix> {
    if samples.is_empty() || samples.rows() == 0 {
        return Err(Error::EmptyDataset("no samples to explain".into()));
    }
    let per_sample = (0..samples.rows())
        .into_par_iter()
        .map(|i| attribute(model, samples.row(i), bg, estimator, seeds::derive(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let outputs = per_sample[0].len();
    let mut raw = vec![vec![0.0; N_FEATURES]; outputs];
    for phi in &per_sample {
        for (acc, p) in raw.iter_mut().zip(phi) {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v.abs();
            }
        }
    }
    let n = per_sample.len() as f64;
    raw.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v /= n));
    Ok(ShapMatrix::from_raw(raw, per_sample.len(), estimator))
}

/// Provenance of an importance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainManifest {
    pub estimator: Estimator,
    pub background: usize,
    pub samples: usize,
    pub seed: u64,
    pub background_rows: Vec<usize>,
    pub sample_rows: Vec<usize>,
}

/// Background from the training split, explained rows from the test split.
pub fn explain(model: &(dyn Predictor + Sync), ds: &Dataset, cfg: &ExplainConfig) -> Result<(ShapMatrix, ExplainManifest)> {
    if cfg.samples == 0 {
        return Err(Error::Config("the explained sample count must be at least 1".into()));
    }
    let bg = Background::sample(ds, cfg.background, cfg.seed)?;
    let sample_rows = pick_rows(ds.test_rows()?, cfg.samples, seeds::rng(cfg.seed, seeds::stream::EXPLAIN));
    let x = ds.features(&sample_rows)?;
    let matrix = importance_matrix(model, &x, &bg, cfg.estimator, cfg.seed)?;
    let manifest = ExplainManifest {
        estimator: cfg.estimator,
        background: bg.len(),
        samples: sample_rows.len(),
        seed: cfg.seed,
        background_rows: bg.source_rows.clone(),
        sample_rows,
    };
    Ok((matrix, manifest))
}
