//! Parameter handles for the building blocks shared by all architectures.

use rand::Rng;

use crate::error::Result;
use crate::nn::{functional::LAYER_NORM_EPS, glorot_uniform, Graph, ParamId, ParamKind, ParamSet, Tensor, Var};

/// Fully connected layer, `W` stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub name: String,
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        set: &mut ParamSet,
        rng: &mut R,
        name: &str,
        inputs: usize,
        outputs: usize,
    ) -> Self {
        let w = set.add(format!("{name}.w"), ParamKind::Weight, glorot_uniform(rng, outputs, inputs));
        let b = set.add(format!("{name}.b"), ParamKind::Bias, Tensor::zeros(&[outputs]));
        Self {
            name: name.to_string(),
            w,
            b: Some(b),
            inputs,
            outputs,
        }
    }

    /// A bias-free square projection (attention weights).
    pub fn projection<R: Rng + ?Sized>(set: &mut ParamSet, rng: &mut R, name: &str, side: usize) -> Self {
        let w = set.add(name.to_string(), ParamKind::Weight, glorot_uniform(rng, side, side));
        Self {
            name: name.to_string(),
            w,
            b: None,
            inputs: side,
            outputs: side,
        }
    }

    pub fn forward(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var> {
        let w = g.param(set, self.w);
        let b = self.b.map(|b| g.param(set, b));
        g.linear(x, w, b)
    }

    pub fn check(&self, set: &ParamSet) -> Result<()> {
        super::expect_shape(set, self.w, &[self.outputs, self.inputs])?;
        if let Some(b) = self.b {
            super::expect_shape(set, b, &[self.outputs])?;
        }
        Ok(())
    }
}

/// Layer normalization gain and shift.
#[derive(Debug, Clone)]
pub struct Norm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub width: usize,
}

impl Norm {
    pub fn new(set: &mut ParamSet, name: &str, width: usize) -> Self {
        let gain = set.add(format!("{name}.gain"), ParamKind::Gain, Tensor::filled(&[width], 1.0));
        let shift = set.add(format!("{name}.shift"), ParamKind::Shift, Tensor::zeros(&[width]));
        Self { gain, shift, width }
    }

    pub fn forward(&self, g: &mut Graph, set: &ParamSet, x: Var, eps: f64) -> Result<Var> {
        let gain = g.param(set, self.gain);
        let shift = g.param(set, self.shift);
        g.layer_norm(x, gain, shift, eps)
    }

    pub fn check(&self, set: &ParamSet) -> Result<()> {
        super::expect_shape(set, self.gain, &[self.width])?;
        super::expect_shape(set, self.shift, &[self.width])
    }
}

/// FC → LN → GELU.
#[derive(Debug, Clone)]
pub struct DenseNormGelu {
    pub fc: Dense,
    pub norm: Norm,
}

impl DenseNormGelu {
    pub fn new<R: Rng + ?Sized>(set: &mut ParamSet, rng: &mut R, name: &str, inputs: usize, outputs: usize) -> Self {
        let fc = Dense::new(set, rng, &format!("{name}.fc"), inputs, outputs);
        let norm = Norm::new(set, &format!("{name}.ln"), outputs);
        Self { fc, norm }
    }

    pub fn forward(&self, g: &mut Graph, set: &ParamSet, x: Var, eps: f64) -> Result<Var> {
        let h = self.fc.forward(g, set, x)?;
        let h = self.norm.forward(g, set, h, eps)?;
        Ok(g.gelu(h))
    }

    pub fn check(&self, set: &ParamSet) -> Result<()> {
        self.fc.check(set)?;
        self.norm.check(set)
    }
}

/// FC → GELU → FC.
#[derive(Debug, Clone)]
pub struct TwoLayerGelu {
    pub fc1: Dense,
    pub fc2: Dense,
}

impl TwoLayerGelu {
    pub fn new<R: Rng + ?Sized>(set: &mut ParamSet, rng: &mut R, name: &str, width: usize, hidden: usize) -> Self {
        Self {
            fc1: Dense::new(set, rng, &format!("{name}.fc1"), width, hidden),
            fc2: Dense::new(set, rng, &format!("{name}.fc2"), hidden, width),
        }
    }

    pub fn forward(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, set, x)?;
        let h = g.gelu(h);
        self.fc2.forward(g, set, h)
    }

    pub fn check(&self, set: &ParamSet) -> Result<()> {
        self.fc1.check(set)?;
        self.fc2.check(set)
    }
}

pub const DEFAULT_EPS: f64 = LAYER_NORM_EPS;
