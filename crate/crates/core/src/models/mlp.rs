//! Fully connected baseline: 10→32→64→128→64→32→10 with ReLU between layers.

use rand::Rng;

use super::layers::Dense;
use super::{Network, N_FEATURES, N_OUTPUTS};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamSet, Tensor, Var};

pub const MLP_WIDTHS: [usize; 7] = [N_FEATURES, 32, 64, 128, 64, 32, N_OUTPUTS];

#[derive(Debug, Clone)]
pub struct Mlp {
    params: ParamSet,
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        let mut params = ParamSet::new();
        let layers = MLP_WIDTHS
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(&mut params, rng, &format!("mlp.fc{i}"), w[0], w[1]))
            .collect();
        let m = Self { params, layers };
        m.audit()?;
        Ok(m)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn audit(&self) -> Result<()> {
        let widths: Vec<usize> = std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect();
        if widths != MLP_WIDTHS {
            return Err(Error::dim("mlp", format!("widths {widths:?}")));
        }
        for l in &self.layers {
            l.check(&self.params)?;
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, N_FEATURES]));
        let y = self.forward(&mut g, x)?;
        if g.value(y).shape() != [1, N_OUTPUTS] {
            return Err(Error::dim("mlp", format!("output extent {:?}", g.value(y).shape())));
        }
        Ok(())
    }
}

impl Network for Mlp {
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
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, set, h)?;
            if i + 1 < self.layers.len() {
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
        let mut m = Mlp::new(&mut seeds::rng(0, 0)).unwrap();
        m.params_mut().iter_mut().for_each(|p| p.value.data_mut().fill(0.0));
        let y = super::super::predict_network(&m, &Tensor::filled(&[2, 10], 1.5)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn widths_pass_audit() {
        let m = Mlp::new(&mut seeds::rng(0, 0)).unwrap();
        assert_eq!(m.layers().len(), 6);
        m.audit().unwrap();
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let m = Mlp::new(&mut seeds::rng(seed, 1)).unwrap();
            let r = super::super::grad_check_network(&m, seed).unwrap();
            assert!(r.max_rel_error < 1e-4, "seed {seed}: {r:?}");
        }
    }
}
