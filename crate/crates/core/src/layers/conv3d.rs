use rand_chacha::ChaCha8Rng;

use super::convlstm::check_kernel;
use super::glorot;
use crate::autodiff::{Activation, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Same-padded 3-D convolution over `(time, rows, cols)` followed by an activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d<T> {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: [usize; 3],
    /// `[F, C_in, kd, kh, kw]`
    pub weights: Tensor<T>,
    /// `[F]`
    pub bias: Tensor<T>,
    pub activation: Activation,
}

impl<T: Real> Conv3d<T> {
    pub fn zeroed(
        in_channels: usize,
        filters: usize,
        kernel: [usize; 3],
        activation: Activation,
    ) -> Result<Self> {
        check_kernel(&kernel)?;
        if in_channels == 0 || filters == 0 {
            return Err(Error::config("conv3d needs at least one channel and filter"));
        }
        let [kd, kh, kw] = kernel;
        Ok(Conv3d {
            in_channels,
            filters,
            kernel,
            weights: Tensor::zeros(&[filters, in_channels, kd, kh, kw]),
            bias: Tensor::zeros(&[filters]),
            activation,
        })
    }

    pub fn init(
        in_channels: usize,
        filters: usize,
        kernel: [usize; 3],
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut layer = Self::zeroed(in_channels, filters, kernel, activation)?;
        layer.weights = glorot(layer.weights.shape(), rng);
        Ok(layer)
    }

    pub fn param_count(&self) -> usize {
        self.filters * (self.kernel.iter().product::<usize>() * self.in_channels + 1)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.weights, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weights, &mut self.bias]
    }

    /// `x` is `[B, C_in, L, M, N]`.
    pub fn apply_graph(&self, g: &mut Graph<T>, params: &[Var], x: Var) -> Result<Var> {
        let z = g.conv3d_same(x, params[0], Some(params[1]))?;
        Ok(g.activation(self.activation, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let a = Conv3d::<f32>::zeroed(8, 4, [3, 3, 3], Activation::Relu).unwrap();
        assert_eq!(a.param_count(), 868);
        let b = Conv3d::<f32>::zeroed(4, 1, [1, 1, 1], Activation::Sigmoid).unwrap();
        assert_eq!(b.param_count(), 5);
        assert!(Conv3d::<f32>::zeroed(4, 1, [2, 3, 3], Activation::Relu).is_err());
    }
}
