use rand_chacha::ChaCha8Rng;

use super::convlstm::check_kernel;
use super::glorot;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Spatio-temporal LSTM cell with a temporal memory `C` (carried across
/// time) and a spatial memory `M` (carried up through the layer stack).
///
/// ```text
/// g  = tanh(Wxg*X + Whg*H + bg)     g' = tanh(W'xg*X + Wmg*M_in + b'g)
/// i  = σ(Wxi*X + Whi*H + bi)        i' = σ(W'xi*X + Wmi*M_in + b'i)
/// f  = σ(Wxf*X + Whf*H + bf)        f' = σ(W'xf*X + Wmf*M_in + b'f)
/// C  = f⊗C_prev + i⊗g               M  = f'⊗M_in + i'⊗g'
/// O  = σ(Wxo*X + Who*H + Wco*C + Wmo*M + bo)
/// H  = O⊗tanh(W1x1*[C, M])
/// ```
///
/// Temporal and spatial gate blocks are stacked in the order `i, f, g`.
/// When the incoming spatial memory has a different channel count than
/// this cell's filters, it is first mapped through a bias-free 1×1
/// projection (`w_mproj`).
#[derive(Clone, Debug, PartialEq)]
pub struct StLstmCell<T> {
    pub in_channels: usize,
    pub filters: usize,
    pub memory_in_channels: usize,
    pub kernel: (usize, usize),
    /// `[3F, C_in, kh, kw]`: W_xi, W_xf, W_xg
    pub w_xt: Tensor<T>,
    /// `[3F, F, kh, kw]`: W_hi, W_hf, W_hg
    pub w_ht: Tensor<T>,
    /// `[3F]`: b_i, b_f, b_g
    pub b_t: Tensor<T>,
    /// `[3F, C_in, kh, kw]`: W'_xi, W'_xf, W'_xg
    pub w_xs: Tensor<T>,
    /// `[3F, F, kh, kw]`: W_mi, W_mf, W_mg
    pub w_ms: Tensor<T>,
    /// `[3F]`: b'_i, b'_f, b'_g
    pub b_s: Tensor<T>,
    pub w_xo: Tensor<T>,
    pub w_ho: Tensor<T>,
    pub w_co: Tensor<T>,
    pub w_mo: Tensor<T>,
    pub b_o: Tensor<T>,
    /// `[F, 2F, 1, 1]`
    pub w_fuse: Tensor<T>,
    /// `[F, memory_in_channels, 1, 1]`, present only when the channel counts differ.
    pub w_mproj: Option<Tensor<T>>,
}

/// Per-layer recurrent state, `[F, M, N]` each.
#[derive(Clone, Debug, PartialEq)]
pub struct StLstmState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    pub m: Tensor<T>,
}

impl<T: Real> StLstmCell<T> {
    pub fn zeroed(
        in_channels: usize,
        filters: usize,
        memory_in_channels: usize,
        kernel: (usize, usize),
    ) -> Result<Self> {
        check_kernel(&[kernel.0, kernel.1])?;
        if in_channels == 0 || filters == 0 || memory_in_channels == 0 {
            return Err(Error::config("ST-LSTM needs non-zero channel counts"));
        }
        let (kh, kw) = kernel;
        let f = filters;
        Ok(StLstmCell {
            in_channels,
            filters,
            memory_in_channels,
            kernel,
            w_xt: Tensor::zeros(&[3 * f, in_channels, kh, kw]),
            w_ht: Tensor::zeros(&[3 * f, f, kh, kw]),
            b_t: Tensor::zeros(&[3 * f]),
            w_xs: Tensor::zeros(&[3 * f, in_channels, kh, kw]),
            w_ms: Tensor::zeros(&[3 * f, f, kh, kw]),
            b_s: Tensor::zeros(&[3 * f]),
            w_xo: Tensor::zeros(&[f, in_channels, kh, kw]),
            w_ho: Tensor::zeros(&[f, f, kh, kw]),
            w_co: Tensor::zeros(&[f, f, kh, kw]),
            w_mo: Tensor::zeros(&[f, f, kh, kw]),
            b_o: Tensor::zeros(&[f]),
            w_fuse: Tensor::zeros(&[f, 2 * f, 1, 1]),
            w_mproj: (memory_in_channels != f)
                .then(|| Tensor::zeros(&[f, memory_in_channels, 1, 1])),
        })
    }

    /// Glorot-uniform kernels; forget biases (temporal and spatial) set to 1.
    pub fn init(
        in_channels: usize,
        filters: usize,
        memory_in_channels: usize,
        kernel: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut cell = Self::zeroed(in_channels, filters, memory_in_channels, kernel)?;
        let f = filters;
        for w in [
            &mut cell.w_xt,
            &mut cell.w_ht,
            &mut cell.w_xs,
            &mut cell.w_ms,
            &mut cell.w_xo,
            &mut cell.w_ho,
            &mut cell.w_co,
            &mut cell.w_mo,
            &mut cell.w_fuse,
        ] {
            *w = glorot(w.shape(), rng);
        }
        if let Some(p) = cell.w_mproj.as_mut() {
            *p = glorot(p.shape(), rng);
        }
        cell.b_t.data_mut()[f..2 * f].fill(T::one());
        cell.b_s.data_mut()[f..2 * f].fill(T::one());
        Ok(cell)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![
            &self.w_xt,
            &self.w_ht,
            &self.b_t,
            &self.w_xs,
            &self.w_ms,
            &self.b_s,
            &self.w_xo,
            &self.w_ho,
            &self.w_co,
            &self.w_mo,
            &self.b_o,
            &self.w_fuse,
        ];
        v.extend(self.w_mproj.as_ref());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![
            &mut self.w_xt,
            &mut self.w_ht,
            &mut self.b_t,
            &mut self.w_xs,
            &mut self.w_ms,
            &mut self.b_s,
            &mut self.w_xo,
            &mut self.w_ho,
            &mut self.w_co,
            &mut self.w_mo,
            &mut self.b_o,
            &mut self.w_fuse,
        ];
        v.extend(self.w_mproj.as_mut());
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// One step on the graph. `params` follow [`StLstmCell::params`] order;
    /// `m_in` is the spatial memory from the layer below (or from the top
    /// layer at the previous step, for the first layer).
    /// Returns `(H, C, M)`.
    #[allow(clippy::too_many_arguments)]
    pub fn step_graph(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        x: Var,
        h_prev: Var,
        c_prev: Var,
        m_in: Var,
    ) -> Result<(Var, Var, Var)> {
        let f = self.filters;
        let m_in = match params.get(12) {
            Some(&proj) => g.conv2d_same(m_in, proj, None)?,
            None => m_in,
        };

        let zx = g.conv2d_same(x, params[0], Some(params[2]))?;
        let zh = g.conv2d_same(h_prev, params[1], None)?;
        let zt = g.add(zx, zh)?;
        let (zi, zf, zg) = (
            g.slice_channels(zt, 0, f)?,
            g.slice_channels(zt, f, f)?,
            g.slice_channels(zt, 2 * f, f)?,
        );
        let i = g.sigmoid(zi);
        let fg = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let keep = g.mul(fg, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;

        let sx = g.conv2d_same(x, params[3], Some(params[5]))?;
        let sm = g.conv2d_same(m_in, params[4], None)?;
        let zs = g.add(sx, sm)?;
        let (si, sf, sg) = (
            g.slice_channels(zs, 0, f)?,
            g.slice_channels(zs, f, f)?,
            g.slice_channels(zs, 2 * f, f)?,
        );
        let i2 = g.sigmoid(si);
        let f2 = g.sigmoid(sf);
        let cand2 = g.tanh(sg);
        let keep2 = g.mul(f2, m_in)?;
        let write2 = g.mul(i2, cand2)?;
        let m = g.add(keep2, write2)?;

        let ox = g.conv2d_same(x, params[6], Some(params[10]))?;
        let oh = g.conv2d_same(h_prev, params[7], None)?;
        let oc = g.conv2d_same(c, params[8], None)?;
        let om = g.conv2d_same(m, params[9], None)?;
        let a = g.add(ox, oh)?;
        let b = g.add(oc, om)?;
        let zo = g.add(a, b)?;
        let o = g.sigmoid(zo);

        let cm = g.concat_channels(&[c, m])?;
        let fused = g.conv2d_same(cm, params[11], None)?;
        let squashed = g.tanh(fused);
        let h = g.mul(o, squashed)?;
        Ok((h, c, m))
    }

    /// Unbatched step: `x_t` is `[C_in, M, N]`, `h_prev`/`c_prev` are
    /// `[F, M, N]`, `m_in` is `[memory_in_channels, M, N]`.
    pub fn step(
        &self,
        x_t: &Tensor<T>,
        h_prev: &Tensor<T>,
        c_prev: &Tensor<T>,
        m_in: &Tensor<T>,
    ) -> Result<StLstmState<T>> {
        let xs = x_t.shape();
        if xs.len() != 3 || xs[0] != self.in_channels {
            return Err(Error::dim(format!(
                "input {xs:?} does not match {} input channels",
                self.in_channels
            )));
        }
        let want = [self.filters, xs[1], xs[2]];
        if h_prev.shape() != want || c_prev.shape() != want {
            return Err(Error::dim(format!("state shapes must be {want:?}")));
        }
        if m_in.shape() != [self.memory_in_channels, xs[1], xs[2]] {
            return Err(Error::dim(format!(
                "spatial memory {:?} must have {} channels on a {}x{} grid",
                m_in.shape(),
                self.memory_in_channels,
                xs[1],
                xs[2]
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
        let h = g.constant(batched(h_prev)?);
        let c = g.constant(batched(c_prev)?);
        let m = g.constant(batched(m_in)?);
        let (h2, c2, m2) = self.step_graph(&mut g, &params, x, h, c, m)?;
        Ok(StLstmState {
            h: g.value(h2).clone().reshape(&want)?,
            c: g.value(c2).clone().reshape(&want)?,
            m: g.value(m2).clone().reshape(&want)?,
        })
    }
}
