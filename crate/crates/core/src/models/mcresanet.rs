//! Multi-compression refined self-attention network.
//!
//! One head maps the 10 standardized voltage features to a single current
//! output:
//!
//! ```text
//! x ─ extract(10→32→64→128→64) ─┬─ block(4)  ─┐
//!                               ├─ block(8)  ─┤
//!                               ├─   ...     ─┼─ Σ ─ 8×8 grid ─ attention ─ mixer ─ gate ─ FC 64→1 ─ refine(K)
//!                               └─ block(128)─┘
//! ```
//!
//! The ensemble holds one independent head per output column.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Dense, DenseNormGelu, TwoLayerGelu, DEFAULT_EPS};
use super::{Network, FEATURE_NAMES, N_FEATURES, OUTPUT_NAMES};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamSet, Tensor, Var};
use crate::seeds;

pub const GRID: usize = 8;
pub const FEATURE_WIDTH: usize = GRID * GRID;
pub const EXTRACT_WIDTHS: [usize; 4] = [32, 64, 128, 64];
pub const COMPRESSION_WIDTHS: [usize; 6] = [4, 8, 16, 32, 64, 128];
pub const TOKEN_HIDDEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McresanetConfig {
    /// K, the number of residual refinement steps.
    pub refine_steps: usize,
    pub refine_width: usize,
    /// Use one token-mixing MLP for both the height and the width branch.
    pub share_token_mixers: bool,
    pub layer_norm_eps: f64,
}

impl Default for McresanetConfig {
    fn default() -> Self {
        Self {
            refine_steps: 4,
            refine_width: 8,
            share_token_mixers: false,
            layer_norm_eps: DEFAULT_EPS,
        }
    }
}

impl McresanetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refine_steps < 1 {
            return Err(Error::Config("refinement needs K >= 1".into()));
        }
        if self.refine_width < 1 {
            return Err(Error::Config("refinement width must be positive".into()));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("layer norm epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CompressionBlock {
    pub inner: usize,
    pub enter: DenseNormGelu,
    pub exit: Dense,
}

#[derive(Debug, Clone)]
pub struct McresanetHead {
    config: McresanetConfig,
    params: ParamSet,
    extract: Vec<DenseNormGelu>,
    extract_out: Dense,
    blocks: Vec<CompressionBlock>,
    wq: Dense,
    wk: Dense,
    wv: Dense,
    wo: Dense,
    height_mixer: TwoLayerGelu,
    width_mixer: Option<TwoLayerGelu>,
    channel: Dense,
    gate: Dense,
    gate_out: Dense,
    reduce: Dense,
    refine: Vec<TwoLayerGelu>,
}

impl McresanetHead {
    pub fn new<R: Rng + ?Sized>(config: McresanetConfig, rng: &mut R, prefix: &str) -> Result<Self> {
        config.validate()?;
        let mut p = ParamSet::new();
        let set = &mut p;
        let mut widths = vec![N_FEATURES];
        widths.extend_from_slice(&EXTRACT_WIDTHS[..3]);
        let extract = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseNormGelu::new(set, rng, &format!("{prefix}.extract{i}"), w[0], w[1]))
            .collect();
        let extract_out = Dense::new(set, rng, &format!("{prefix}.extract3"), EXTRACT_WIDTHS[2], EXTRACT_WIDTHS[3]);
        let blocks = COMPRESSION_WIDTHS
            .iter()
            .map(|&n| CompressionBlock {
                inner: n,
                enter: DenseNormGelu::new(set, rng, &format!("{prefix}.compress{n}.enter"), FEATURE_WIDTH, n),
                exit: Dense::new(set, rng, &format!("{prefix}.compress{n}.exit"), n, FEATURE_WIDTH),
            })
            .collect();
        let wq = Dense::projection(set, rng, &format!("{prefix}.attn.wq"), GRID);
        let wk = Dense::projection(set, rng, &format!("{prefix}.attn.wk"), GRID);
        let wv = Dense::projection(set, rng, &format!("{prefix}.attn.wv"), GRID);
        let wo = Dense::projection(set, rng, &format!("{prefix}.attn.wo"), GRID);
        let height_mixer = TwoLayerGelu::new(set, rng, &format!("{prefix}.mixer.height"), GRID, TOKEN_HIDDEN);
        let width_mixer = (!config.share_token_mixers)
            .then(|| TwoLayerGelu::new(set, rng, &format!("{prefix}.mixer.width"), GRID, TOKEN_HIDDEN));
        let channel = Dense::new(set, rng, &format!("{prefix}.mixer.channel"), FEATURE_WIDTH, FEATURE_WIDTH);
        let gate = Dense::new(set, rng, &format!("{prefix}.gate.select"), FEATURE_WIDTH, FEATURE_WIDTH);
        let gate_out = Dense::new(set, rng, &format!("{prefix}.gate.out"), FEATURE_WIDTH, FEATURE_WIDTH);
        let reduce = Dense::new(set, rng, &format!("{prefix}.reduce"), FEATURE_WIDTH, 1);
        let refine = (0..config.refine_steps)
            .map(|k| TwoLayerGelu::new(set, rng, &format!("{prefix}.refine{k}"), 1, config.refine_width))
            .collect();
        let head = Self {
            config,
            params: p,
            extract,
            extract_out,
            blocks,
            wq,
            wk,
            wv,
            wo,
            height_mixer,
            width_mixer,
            channel,
            gate,
            gate_out,
            reduce,
            refine,
        };
        head.audit()?;
        Ok(head)
    }

    pub fn config(&self) -> &McresanetConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[CompressionBlock] {
        &self.blocks
    }

    /// Feature extraction followed by the summed compression blocks: `[B,10] → [B,64]`.
    pub fn multi_compression(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var> {
        let eps = self.config.layer_norm_eps;
        let mut h = x;
        for layer in &self.extract {
            h = layer.forward(g, set, h, eps)?;
        }
        let f = self.extract_out.forward(g, set, h)?;
        let mut fused: Option<Var> = None;
        for block in &self.blocks {
            let b = block.enter.forward(g, set, f, eps)?;
            let b = block.exit.forward(g, set, b)?;
            fused = Some(match fused {
                Some(acc) => g.add(acc, b)?,
                None => b,
            });
        }
        Ok(fused.expect("six blocks"))
    }

    /// Self-attention on each row read as an 8×8 grid: `[B,64] → [B,64]`.
    pub fn attention(&self, g: &mut Graph, set: &ParamSet, v: Var) -> Result<Var> {
        let batch = g.value(v).rows();
        let grid = g.reshape(v, &[batch * GRID, GRID])?;
        let [q, k, val, o] = [&self.wq, &self.wk, &self.wv, &self.wo].map(|d| g.param(set, d.w));
        let q = g.matmul(grid, q)?;
        let k = g.matmul(grid, k)?;
        let val = g.matmul(grid, val)?;
        let scores = g.batch_matmul(q, k, batch, true)?;
        let scores = g.scale(scores, 1.0 / (GRID as f64).sqrt());
        let weights = g.softmax_rows(scores);
        let mixed = g.batch_matmul(weights, val, batch, false)?;
        let out = g.matmul(mixed, o)?;
        g.reshape(out, &[batch, FEATURE_WIDTH])
    }

    /// Mixer output before the channel map: `transpose(height) + width + skip`.
    pub fn mixer_tokens(&self, g: &mut Graph, set: &ParamSet, v: Var) -> Result<Var> {
        let batch = g.value(v).rows();
        let rows = g.reshape(v, &[batch * GRID, GRID])?;
        let width_map = self.width_mixer.as_ref().unwrap_or(&self.height_mixer);
        let lower = width_map.forward(g, set, rows)?;
        let lower = g.reshape(lower, &[batch, FEATURE_WIDTH])?;

        let vt = g.block_transpose(v, GRID)?;
        let cols = g.reshape(vt, &[batch * GRID, GRID])?;
        let upper = self.height_mixer.forward(g, set, cols)?;
        let upper = g.reshape(upper, &[batch, FEATURE_WIDTH])?;
        let upper = g.block_transpose(upper, GRID)?;

        let y1 = g.add(upper, lower)?;
        g.add(y1, v)
    }

    /// Full mixer, `[B,64] → [B,64]`: token mixing, skip, then GELU(FC 64→64).
    pub fn mixer(&self, g: &mut Graph, set: &ParamSet, v: Var) -> Result<Var> {
        let y = self.mixer_tokens(g, set, v)?;
        let y = self.channel.forward(g, set, y)?;
        Ok(g.gelu(y))
    }

    /// `W (ReLU(W_gate x + b_gate) ⊙ x) + b`.
    pub fn feature_gate(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var> {
        let pre = self.gate.forward(g, set, x)?;
        let open = g.relu(pre);
        let gated = g.mul(open, x)?;
        self.gate_out.forward(g, set, gated)
    }

    /// `y_k = y_{k-1} + MLP_k(y_{k-1})`, output is the mean of `y_1..y_K`.
    pub fn refine(&self, g: &mut Graph, set: &ParamSet, s: Var) -> Result<Var> {
        let mut y = s;
        let mut total: Option<Var> = None;
        for step in &self.refine {
            let delta = step.forward(g, set, y)?;
            y = g.add(y, delta)?;
            total = Some(match total {
                Some(t) => g.add(t, y)?,
                None => y,
            });
        }
        Ok(g.scale(total.expect("K >= 1"), 1.0 / self.refine.len() as f64))
    }

    /// Intermediate extents of one forward pass, stage by stage.
    pub fn trace_shapes(&self) -> Result<Vec<(&'static str, Vec<usize>)>> {
        let set = &self.params;
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, N_FEATURES]));
        let mut trace = Vec::new();
        let f = self.multi_compression(&mut g, set, x)?;
        trace.push(("multi_compression", g.value(f).shape().to_vec()));
        let a = self.attention(&mut g, set, f)?;
        trace.push(("attention", g.value(a).shape().to_vec()));
        let m = self.mixer(&mut g, set, a)?;
        trace.push(("mixer", g.value(m).shape().to_vec()));
        let gt = self.feature_gate(&mut g, set, m)?;
        trace.push(("feature_gate", g.value(gt).shape().to_vec()));
        let r = self.reduce.forward(&mut g, set, gt)?;
        trace.push(("reduce", g.value(r).shape().to_vec()));
        let out = self.refine(&mut g, set, r)?;
        trace.push(("refine", g.value(out).shape().to_vec()));
        Ok(trace)
    }

    /// Checks every parameter against the architecture table and every stage extent.
    pub fn audit(&self) -> Result<()> {
        let set = &self.params;
        if FEATURE_WIDTH != GRID * GRID {
            return Err(Error::dim("attention", "grid does not tile the feature width"));
        }
        for l in &self.extract {
            l.check(set)?;
        }
        self.extract_out.check(set)?;
        let inner: Vec<usize> = self.blocks.iter().map(|b| b.inner).collect();
        if inner != COMPRESSION_WIDTHS {
            return Err(Error::dim("compression", format!("block widths {inner:?}")));
        }
        for b in &self.blocks {
            b.enter.check(set)?;
            b.exit.check(set)?;
        }
        for d in [&self.wq, &self.wk, &self.wv, &self.wo] {
            d.check(set)?;
        }
        self.height_mixer.check(set)?;
        if let Some(w) = &self.width_mixer {
            w.check(set)?;
        }
        for d in [&self.channel, &self.gate, &self.gate_out, &self.reduce] {
            d.check(set)?;
        }
        if self.refine.is_empty() {
            return Err(Error::Config("refinement needs K >= 1".into()));
        }
        for r in &self.refine {
            r.check(set)?;
        }
        let expected: [(&str, &[usize]); 6] = [
            ("multi_compression", &[2, FEATURE_WIDTH]),
            ("attention", &[2, FEATURE_WIDTH]),
            ("mixer", &[2, FEATURE_WIDTH]),
            ("feature_gate", &[2, FEATURE_WIDTH]),
            ("reduce", &[2, 1]),
            ("refine", &[2, 1]),
        ];
        for ((stage, got), (name, want)) in self.trace_shapes()?.iter().zip(expected) {
            if got.as_slice() != want || *stage != name {
                return Err(Error::dim(*stage, format!("extent {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }
}

impl Network for McresanetHead {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn output_width(&self) -> usize {
        1
    }

    fn forward_with(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var> {
        let f = self.multi_compression(g, set, x)?;
        let a = self.attention(g, set, f)?;
        let m = self.mixer(g, set, a)?;
        let gt = self.feature_gate(g, set, m)?;
        let s = self.reduce.forward(g, set, gt)?;
        self.refine(g, set, s)
    }
}

/// Row-major view of a 64-vector as an 8×8 grid.
pub fn reshape_grid(v: &[f64]) -> Result<Tensor> {
    if v.len() != FEATURE_WIDTH {
        return Err(Error::dim("reshape_grid", format!("{} values, expected {FEATURE_WIDTH}", v.len())));
    }
    Tensor::matrix(GRID, GRID, v.to_vec())
}

pub fn flatten_grid(m: &Tensor) -> Vec<f64> {
    m.data().to_vec()
}

/// One head per output column; heads share no parameters.
#[derive(Debug, Clone)]
pub struct Ensemble {
    heads: Vec<McresanetHead>,
}

impl Ensemble {
    /// Head `k` is initialized from its own stream of `seed`.
    pub fn new(config: McresanetConfig, seed: u64) -> Result<Self> {
        let heads = (0..OUTPUT_NAMES.len())
            .map(|k| {
                let mut rng = seeds::rng2(seed, seeds::stream::INIT, k as u64);
                McresanetHead::new(config, &mut rng, &format!("head{k}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { heads })
    }

    pub fn from_heads(heads: Vec<McresanetHead>) -> Result<Self> {
        if heads.len() != OUTPUT_NAMES.len() {
            return Err(Error::Config(format!("ensemble needs {} heads", OUTPUT_NAMES.len())));
        }
        Ok(Self { heads })
    }

    pub fn heads(&self) -> &[McresanetHead] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [McresanetHead] {
        &mut self.heads
    }

    pub fn config(&self) -> &McresanetConfig {
        self.heads[0].config()
    }

    /// `[B,10] → [B,10]`, column `k` from head `k`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let rows = x.rows();
        let mut out = vec![0.0; rows * self.heads.len()];
        for (k, head) in self.heads.iter().enumerate() {
            let col = super::predict_network(head, x)?;
            for r in 0..rows {
                out[r * self.heads.len() + k] = col.data()[r];
            }
        }
        Tensor::matrix(rows, self.heads.len(), out)
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        &FEATURE_NAMES
    }
}
