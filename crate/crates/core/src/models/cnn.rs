//! Convolutional baseline on the features read as a 1-channel length-10 sequence.
//!
//! conv(1→16)+pool+ReLU, conv(16→32)+pool+ReLU, conv(32→64)+ReLU, flatten 64×2,
//! then FC 128→64→32→10 with ReLU between the FC layers.

use rand::Rng;

use super::layers::Dense;
use super::{Network, N_FEATURES, N_OUTPUTS};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamKind, ParamSet, Tensor, Var};

pub const CONV_CHANNELS: [usize; 4] = [1, 16, 32, 64];
pub const FLATTEN_WIDTH: usize = 128;
pub const CNN_HEAD_WIDTHS: [usize; 4] = [FLATTEN_WIDTH, 64, 32, N_OUTPUTS];
const KERNEL: usize = 3;

#[derive(Debug, Clone)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub pool: bool,
}

#[derive(Debug, Clone)]
pub struct Cnn {
    params: ParamSet,
    convs: Vec<Conv>,
    head: Vec<Dense>,
}

impl Cnn {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        let mut params = ParamSet::new();
        let convs = CONV_CHANNELS
            .windows(2)
            .enumerate()
            .map(|(i, c)| {
                let (c_in, c_out) = (c[0], c[1]);
                let limit = (6.0 / ((c_in + c_out) * KERNEL) as f64).sqrt();
                let w = (0..c_out * c_in * KERNEL).map(|_| rng.random_range(-limit..limit)).collect();
                Conv {
                    w: params.add(
                        format!("cnn.conv{i}.w"),
                        ParamKind::Weight,
                        Tensor::new(vec![c_out, c_in * KERNEL], w).expect("positive extents"),
                    ),
                    b: params.add(format!("cnn.conv{i}.b"), ParamKind::Bias, Tensor::zeros(&[c_out])),
                    c_in,
                    c_out,
                    pool: i < 2,
                }
            })
            .collect();
        let head = CNN_HEAD_WIDTHS
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(&mut params, rng, &format!("cnn.fc{i}"), w[0], w[1]))
            .collect();
        let c = Self { params, convs, head };
        c.audit()?;
        Ok(c)
    }

    /// Flattened width after the convolution stack.
    pub fn flatten_width(&self) -> usize {
        let mut len = N_FEATURES;
        for c in &self.convs {
            if c.pool {
                len /= 2;
            }
        }
        len * self.convs.last().map_or(1, |c| c.c_out)
    }

    fn features(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var> {
        let mut len = N_FEATURES;
        let mut h = x;
        for c in &self.convs {
            let w = g.param(set, c.w);
            let b = g.param(set, c.b);
            h = g.conv1d(h, w, b, c.c_in, len)?;
            if c.pool {
                h = g.maxpool1d(h, c.c_out, len)?;
                len /= 2;
            }
            h = g.relu(h);
        }
        Ok(h)
    }

    pub fn audit(&self) -> Result<()> {
        for c in &self.convs {
            super::expect_shape(&self.params, c.w, &[c.c_out, c.c_in * KERNEL])?;
            super::expect_shape(&self.params, c.b, &[c.c_out])?;
        }
        for l in &self.head {
            l.check(&self.params)?;
        }
        if self.flatten_width() != FLATTEN_WIDTH || self.head[0].inputs != FLATTEN_WIDTH {
            return Err(Error::dim("cnn.flatten", format!("width {}, expected {FLATTEN_WIDTH}", self.flatten_width())));
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, N_FEATURES]));
        let f = self.features(&mut g, &self.params, x)?;
        if g.value(f).shape() != [1, FLATTEN_WIDTH] {
            return Err(Error::dim("cnn.flatten", format!("extent {:?}", g.value(f).shape())));
        }
        let y = self.forward(&mut g, x)?;
        if g.value(y).shape() != [1, N_OUTPUTS] {
            return Err(Error::dim("cnn", format!("output extent {:?}", g.value(y).shape())));
        }
        Ok(())
    }
}

impl Network for Cnn {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn output_width(&self) -> usize {
        N_OUTPUTS
    }

    fn forward_with(&self, g: &mut Graph, set: &ParamSet, x: Var) -> Result<Var> {
        let mut h = self.features(g, set, x)?;
        for (i, layer) in self.head.iter().enumerate() {
            h = layer.forward(g, set, h)?;
            if i + 1 < self.head.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut c = Cnn::new(&mut seeds::rng(0, 0)).unwrap();
        c.params_mut().iter_mut().for_each(|p| p.value.data_mut().fill(0.0));
        let y = super::super::predict_network(&c, &Tensor::filled(&[2, 10], -0.7)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flatten_is_128_wide() {
        let c = Cnn::new(&mut seeds::rng(0, 0)).unwrap();
        assert_eq!(c.flatten_width(), 128);
        c.audit().unwrap();
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let c = Cnn::new(&mut seeds::rng(seed, 2)).unwrap();
            let r = super::super::grad_check_network(&c, seed).unwrap();
            assert!(r.max_rel_error < 1e-4, "seed {seed}: {r:?}");
        }
    }
}
