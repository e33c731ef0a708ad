use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Stage};
use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Shuffled,
    Chronological,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    /// Sorted record indices.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
    pub mode: SplitMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub records: usize,
    pub ratio: f64,
    pub seed: u64,
    pub mode: SplitMode,
    pub rounding: String,
    pub n_train: usize,
    pub n_test: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            records: self.train.len() + self.test.len(),
            ratio: self.ratio,
            seed: self.seed,
            mode: self.mode,
            rounding: "round-half-up".into(),
            n_train: self.train.len(),
            n_test: self.test.len(),
            train: self.train.clone(),
            test: self.test.clone(),
        }
    }
}

/// Training-set size: `ratio·n` rounded half up, kept within `[1, n-1]`.
pub fn train_count(n: usize, ratio: f64) -> usize {
    let t = (ratio * n as f64 + 0.5).floor() as usize;
    t.clamp(1, n.saturating_sub(1).max(1))
}

pub fn split(ds: &Dataset, ratio: f64, seed: u64, mode: SplitMode) -> Result<Dataset> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 records, have {n}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Split(format!("ratio {ratio} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if mode == SplitMode::Shuffled {
        order.shuffle(&mut seeds::rng(seed, seeds::stream::SPLIT));
    }
    let k = train_count(n, ratio);
    let mut train = order[..k].to_vec();
    let mut test = order[k..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let mut out = ds.clone();
    out.split = Some(Split {
        train,
        test,
        ratio,
        seed,
        mode,
    });
    out.stages.push(Stage::Split);
    Ok(out)
}
