//! Self-describing JSON checkpoints.
//!
//! Layout (`format_version` 1):
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "architecture": "mcresanet" | "mlp" | "cnn",
//!   "inputs":  ["v3", ..., "thdv"],
//!   "outputs": ["i3", ..., "thdi"],
//!   "widths":  {...},                 // architecture table, informational
//!   "mcresanet": {refine_steps, refine_width, share_token_mixers, layer_norm_eps} | null,
//!   "standardization": {columns, mean, std, fit_rows, fit_source} | null,
//!   "parameters": [[{"name", "kind", "shape", "values"}, ...], ...]   // one list per head
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so reloading is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cnn, mcresanet, mlp, Ensemble, McresanetConfig, Model, ModelKind, FEATURE_NAMES, OUTPUT_NAMES};
use crate::data::StandardizationStats;
use crate::error::{Error, Result};
use crate::nn::{ParamKind, ParamSet, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: ModelKind,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub widths: serde_json::Value,
    pub mcresanet: Option<McresanetConfig>,
    pub standardization: Option<StandardizationStats>,
    pub parameters: Vec<Vec<ParamArray>>,
}

fn arrays(set: &ParamSet) -> Vec<ParamArray> {
    set.iter()
        .map(|(_, p)| ParamArray {
            name: p.name.clone(),
            kind: p.kind,
            shape: p.value.shape().to_vec(),
            values: p.value.data().to_vec(),
        })
        .collect()
}

fn widths(kind: ModelKind) -> serde_json::Value {
    match kind {
        ModelKind::Mcresanet => serde_json::json!({
            "extract": mcresanet::EXTRACT_WIDTHS,
            "compression": mcresanet::COMPRESSION_WIDTHS,
            "grid": mcresanet::GRID,
            "token_hidden": mcresanet::TOKEN_HIDDEN,
        }),
        ModelKind::Mlp => serde_json::json!({ "layers": mlp::MLP_WIDTHS }),
        ModelKind::Cnn => serde_json::json!({
            "channels": cnn::CONV_CHANNELS,
            "flatten": cnn::FLATTEN_WIDTH,
            "head": cnn::CNN_HEAD_WIDTHS,
        }),
    }
}

impl Checkpoint {
    pub fn from_model(model: &Model, stats: Option<&StandardizationStats>) -> Self {
        let kind = model.kind();
        Self {
            format_version: FORMAT_VERSION,
            architecture: kind,
            inputs: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            outputs: OUTPUT_NAMES.iter().map(|s| s.to_string()).collect(),
            widths: widths(kind),
            mcresanet: match model {
                Model::Mcresanet(e) => Some(*e.config()),
                _ => None,
            },
            standardization: stats.cloned(),
            parameters: model.param_sets().into_iter().map(arrays).collect(),
        }
    }

    /// Rebuilds the model; every array must match the architecture by name and shape.
    pub fn to_model(&self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", self.format_version)));
        }
        if self.inputs != FEATURE_NAMES || self.outputs != OUTPUT_NAMES {
            return Err(Error::Checkpoint("input/output order differs from this build".into()));
        }
        let config = match self.architecture {
            ModelKind::Mcresanet => self
                .mcresanet
                .ok_or_else(|| Error::Checkpoint("mcresanet checkpoint without its configuration".into()))?,
            _ => McresanetConfig::default(),
        };
        let mut model = Model::new(self.architecture, config, 0)?;
        let mut sets = model.param_sets_mut();
        if sets.len() != self.parameters.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter groups, found {}",
                sets.len(),
                self.parameters.len()
            )));
        }
        for (set, group) in sets.iter_mut().zip(&self.parameters) {
            let loaded = group
                .iter()
                .map(|a| Ok((a.name.clone(), Tensor::new(a.shape.clone(), a.values.clone())?)))
                .collect::<Result<Vec<_>>>()?;
            set.load_from(&loaded)?;
        }
        if let Model::Mcresanet(e) = &model {
            e.heads().iter().try_for_each(|h| h.audit())?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

impl Model {
    /// Convenience: model plus the statistics stored alongside it.
    pub fn load(path: impl AsRef<Path>) -> Result<(Model, Option<StandardizationStats>)> {
        let ck = Checkpoint::load(path)?;
        Ok((ck.to_model()?, ck.standardization))
    }
}

impl Ensemble {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&Model::Mcresanet(self.clone()), None)
    }
}
