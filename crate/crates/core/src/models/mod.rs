//! Architectures: the MCReSAnet ensemble and the MLP and CNN baselines.
//!
//! Every model maps standardized rows of the 10 voltage features
//! (`[B,10]`) to standardized predictions of the 10 current outputs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{grad_check, GradCheckReport, Graph, ParamId, ParamSet, Tensor, Var, GRAD_CHECK_STEP};

pub mod checkpoint;
pub mod cnn;
pub mod layers;
pub mod mcresanet;
pub mod mlp;

pub use cnn::Cnn;
pub use mcresanet::{Ensemble, McresanetConfig, McresanetHead};
pub use mlp::Mlp;

pub const N_FEATURES: usize = 10;
pub const N_OUTPUTS: usize = 10;

/// Voltage feature order: odd orders 3..19 then THD.
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["v3", "v5", "v7", "v9", "v11", "v13", "v15", "v17", "v19", "thdv"];
/// Current output order; head `k` of the ensemble predicts `OUTPUT_NAMES[k]`.
pub const OUTPUT_NAMES: [&str; N_OUTPUTS] = ["i3", "i5", "i7", "i9", "i11", "i13", "i15", "i17", "i19", "thdi"];

/// Rows evaluated per forward pass in [`predict_network`].
pub const PREDICT_CHUNK: usize = 512;

pub(crate) fn expect_shape(set: &ParamSet, id: ParamId, shape: &[usize]) -> Result<()> {
    let p = set.get(id);
    if p.value.shape() != shape {
        return Err(Error::dim(
            p.name.clone(),
            format!("shape {:?}, architecture expects {shape:?}", p.value.shape()),
        ));
    }
    Ok(())
}

/// A differentiable model with its own parameter set.
pub trait Network {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn output_width(&self) -> usize;

    /// Forward pass reading parameters from `set`, which must have the layout of `params()`.
    fn forward_with(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var>;

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.forward_with(g, self.params(), x)
    }
}

/// Inference over `[B,10]` in chunks; returns `[B, output_width]`.
pub fn predict_network<N: Network + ?Sized>(net: &N, x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 2 || x.cols() != N_FEATURES {
        return Err(Error::dim("input", format!("shape {:?}, expected [B, {N_FEATURES}]", x.shape())));
    }
    let width = net.output_width();
    let mut out = Vec::with_capacity(x.rows() * width);
    let mut g = Graph::new();
    for start in (0..x.rows()).step_by(PREDICT_CHUNK) {
        let end = (start + PREDICT_CHUNK).min(x.rows());
        let chunk = Tensor::matrix(end - start, N_FEATURES, x.data()[start * N_FEATURES..end * N_FEATURES].to_vec())?;
        g.clear();
        let xv = g.input(chunk);
        let y = net.forward(&mut g, xv)?;
        out.extend_from_slice(g.value(y).data());
    }
    Tensor::matrix(x.rows(), width, out)
}

/// Four rows: enough that batch statistics are not degenerate, few enough that
/// a full head check stays fast.
pub const GRAD_CHECK_BATCH: usize = 4;

/// Full-model gradient check on a seeded batch of `GRAD_CHECK_BATCH` inputs.
///
/// Targets sit at the current predictions plus offsets of 0.05, so the loss is
/// small and its rounding error does not swamp coordinates whose true
/// gradient is tiny.
pub fn grad_check_network<N: Network + ?Sized>(net: &N, seed: u64) -> Result<GradCheckReport> {
    grad_check_network_batch(net, seed, GRAD_CHECK_BATCH)
}

pub fn grad_check_network_batch<N: Network + ?Sized>(net: &N, seed: u64, batch: usize) -> Result<GradCheckReport> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = crate::seeds::rng(seed, crate::seeds::stream::VALIDATION);
    let x = Tensor::matrix(batch, N_FEATURES, (0..batch * N_FEATURES).map(|_| rng.sample(StandardNormal)).collect())?;
    let mut target = predict_network(net, &x)?;
    for v in target.data_mut() {
        *v += if rng.random::<bool>() { 0.05 } else { -0.05 };
    }
    grad_check(net.params(), GRAD_CHECK_STEP, |g, set| {
        let xi = g.input(x.clone());
        let y = net.forward_with(g, set, xi)?;
        g.mse(y, target.clone())
    })
}

/// Anything that maps standardized features `[B,10]` to standardized outputs `[B,10]`.
pub trait Predictor {
    fn predict(&self, x: &Tensor) -> Result<Tensor>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mcresanet,
    Mlp,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mcresanet, ModelKind::Mlp, ModelKind::Cnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mcresanet => "mcresanet",
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcresanet" => Ok(ModelKind::Mcresanet),
            "mlp" => Ok(ModelKind::Mlp),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(Error::Config(format!("unknown model `{other}` (expected mcresanet, mlp or cnn)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Mcresanet(Ensemble),
    Mlp(Mlp),
    Cnn(Cnn),
}

impl Model {
    /// Fresh initialization; `config` only matters for MCReSAnet.
    pub fn new(kind: ModelKind, config: McresanetConfig, seed: u64) -> Result<Self> {
        Ok(match kind {
            ModelKind::Mcresanet => Model::Mcresanet(Ensemble::new(config, seed)?),
            ModelKind::Mlp => Model::Mlp(Mlp::new(&mut crate::seeds::rng(seed, crate::seeds::stream::INIT))?),
            ModelKind::Cnn => Model::Cnn(Cnn::new(&mut crate::seeds::rng(seed, crate::seeds::stream::INIT))?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mcresanet(_) => ModelKind::Mcresanet,
            Model::Mlp(_) => ModelKind::Mlp,
            Model::Cnn(_) => ModelKind::Cnn,
        }
    }

    /// Every parameter set of the model (ten for the ensemble, one otherwise).
    pub fn param_sets(&self) -> Vec<&ParamSet> {
        match self {
            Model::Mcresanet(e) => e.heads().iter().map(|h| h.params()).collect(),
            Model::Mlp(m) => vec![m.params()],
            Model::Cnn(c) => vec![c.params()],
        }
    }

    pub fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        match self {
            Model::Mcresanet(e) => e.heads_mut().iter_mut().map(|h| h.params_mut()).collect(),
            Model::Mlp(m) => vec![m.params_mut()],
            Model::Cnn(c) => vec![c.params_mut()],
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.param_sets().iter().map(|p| p.scalar_count()).sum()
    }
}

impl Predictor for Model {
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Model::Mcresanet(e) => e.predict(x),
            Model::Mlp(m) => predict_network(m, x),
            Model::Cnn(c) => predict_network(c, x),
        }
    }
}

impl<F: Fn(&Tensor) -> Result<Tensor>> Predictor for F {
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self(x)
    }
}
