use rand_chacha::ChaCha8Rng;

use super::glorot;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Four-gate convolutional LSTM cell without peephole terms.
///
/// Gate blocks are stored stacked along the output-channel axis in the
/// order input `i`, forget `f`, candidate `g`, output `o`:
///
/// ```text
/// i = σ(Wxi*x + Whi*H + bi)    f = σ(Wxf*x + Whf*H + bf)
/// g = tanh(Wxg*x + Whg*H + bg) o = σ(Wxo*x + Who*H + bo)
/// C' = f⊗C + i⊗g               H' = o⊗tanh(C')
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmCell<T> {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: (usize, usize),
    /// `[4F, C_in, kh, kw]`
    pub w_x: Tensor<T>,
    /// `[4F, F, kh, kw]`
    pub w_h: Tensor<T>,
    /// `[4F]`
    pub bias: Tensor<T>,
}

/// Hidden and cell state of one layer, `[F, M, N]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Real> ConvLstmState<T> {
    pub fn zeros(filters: usize, rows: usize, cols: usize) -> Self {
        ConvLstmState {
            h: Tensor::zeros(&[filters, rows, cols]),
            c: Tensor::zeros(&[filters, rows, cols]),
        }
    }
}

pub(crate) fn check_kernel(kernel: &[usize]) -> Result<()> {
    if kernel.iter().any(|&k| k == 0 || k % 2 == 0) {
        return Err(Error::config(format!(
            "kernel {kernel:?} must have odd, positive extents"
        )));
    }
    Ok(())
}

impl<T: Real> ConvLstmCell<T> {
    /// Cell with every weight and bias set to zero.
    pub fn zeroed(in_channels: usize, filters: usize, kernel: (usize, usize)) -> Result<Self> {
        check_kernel(&[kernel.0, kernel.1])?;
        if in_channels == 0 || filters == 0 {
            return Err(Error::config("convLSTM needs at least one channel and filter"));
        }
        let (kh, kw) = kernel;
        Ok(ConvLstmCell {
            in_channels,
            filters,
            kernel,
            w_x: Tensor::zeros(&[4 * filters, in_channels, kh, kw]),
            w_h: Tensor::zeros(&[4 * filters, filters, kh, kw]),
            bias: Tensor::zeros(&[4 * filters]),
        })
    }

    /// Glorot-uniform kernels, zero biases except a forget-gate bias of 1.
    pub fn init(
        in_channels: usize,
        filters: usize,
        kernel: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut cell = Self::zeroed(in_channels, filters, kernel)?;
        cell.w_x = glorot(cell.w_x.shape(), rng);
        cell.w_h = glorot(cell.w_h.shape(), rng);
        cell.bias.data_mut()[filters..2 * filters].fill(T::one());
        Ok(cell)
    }

    pub fn param_count(&self) -> usize {
        let (kh, kw) = self.kernel;
        4 * self.filters * (kh * kw * (self.in_channels + self.filters) + 1)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.w_x, &self.w_h, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.bias]
    }

    /// One time step on the graph. `params` are the bound `[w_x, w_h, bias]`;
    /// `x` is `[B, C_in, M, N]`, `h` and `c` are `[B, F, M, N]`.
    pub fn step_graph(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let f = self.filters;
        let zx = g.conv2d_same(x, params[0], Some(params[2]))?;
        let zh = g.conv2d_same(h, params[1], None)?;
        let z = g.add(zx, zh)?;
        let zi = g.slice_channels(z, 0, f)?;
        let zf = g.slice_channels(z, f, f)?;
        let zg = g.slice_channels(z, 2 * f, f)?;
        let zo = g.slice_channels(z, 3 * f, f)?;
        let i = g.sigmoid(zi);
        let fg = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(fg, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// Unbatched step: `x_t` is `[C_in, M, N]`.
    pub fn step(&self, x_t: &Tensor<T>, state: &ConvLstmState<T>) -> Result<ConvLstmState<T>> {
        let xs = x_t.shape();
        if xs.len() != 3 || xs[0] != self.in_channels {
            return Err(Error::dim(format!(
                "input {xs:?} does not match {} input channels",
                self.in_channels
            )));
        }
        let want = [self.filters, xs[1], xs[2]];
        if state.h.shape() != want || state.c.shape() != want {
            return Err(Error::dim(format!(
                "state {:?}/{:?} does not match {want:?}",
                state.h.shape(),
                state.c.shape()
            )));
        }
        let mut g = Graph::new();
        let params: Vec<Var> = self.params().into_iter().map(|p| g.constant(p.clone())).collect();
        let batched = |t: &Tensor<T>| {
            let mut s = vec![1];
            s.extend_from_slice(t.shape());
            t.clone().reshape(&s)
        };
        let x = g.constant(batched(x_t)?);
        let h = g.constant(batched(&state.h)?);
        let c = g.constant(batched(&state.c)?);
        let (h2, c2) = self.step_graph(&mut g, &params, x, h, c)?;
        Ok(ConvLstmState {
            h: g.value(h2).clone().reshape(&want)?,
            c: g.value(c2).clone().reshape(&want)?,
        })
    }
}
