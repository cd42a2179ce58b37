use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BatchNorm, Conv3d, ConvLstmCell, NormMode, StLstmCell};
use crate::autodiff::{Activation, BatchStats, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Convlstm,
    Stlstm,
}

/// Architecture of a single layer; no parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerConfig {
    BatchNorm {
        channels: usize,
        momentum: f64,
        epsilon: f64,
    },
    ConvLstm {
        in_channels: usize,
        filters: usize,
        kernel: [usize; 2],
    },
    StLstm {
        in_channels: usize,
        filters: usize,
        memory_in_channels: usize,
        kernel: [usize; 2],
    },
    Conv3d {
        in_channels: usize,
        filters: usize,
        kernel: [usize; 3],
        activation: Activation,
    },
}

impl LayerConfig {
    fn is_recurrent(&self) -> bool {
        matches!(self, LayerConfig::ConvLstm { .. } | LayerConfig::StLstm { .. })
    }

    /// `(total, trainable)` parameter counts.
    pub fn param_count(&self) -> (usize, usize) {
        match *self {
            LayerConfig::BatchNorm { channels, .. } => (4 * channels, 2 * channels),
            LayerConfig::ConvLstm {
                in_channels,
                filters,
                kernel,
            } => {
                let n = 4 * filters * (kernel[0] * kernel[1] * (in_channels + filters) + 1);
                (n, n)
            }
            LayerConfig::StLstm {
                in_channels,
                filters: f,
                memory_in_channels,
                kernel,
            } => {
                let k = kernel[0] * kernel[1];
                let proj = if memory_in_channels != f {
                    f * memory_in_channels
                } else {
                    0
                };
                let n = k * (7 * f * in_channels + 9 * f * f) + 7 * f + 2 * f * f + proj;
                (n, n)
            }
            LayerConfig::Conv3d {
                in_channels,
                filters,
                kernel,
                ..
            } => {
                let n = filters * (kernel.iter().product::<usize>() * in_channels + 1);
                (n, n)
            }
        }
    }
}

/// Ordered layer stack plus the recurrent cell kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub cell: CellKind,
    pub layers: Vec<LayerConfig>,
}

impl NetworkSpec {
    /// BN → recurrent(16, 3×3) → BN → recurrent(8, 3×3) → BN →
    /// Conv3D(4, 3×3×3, relu) → Conv3D(1, 1×1×1, sigmoid).
    pub fn reference(cell: CellKind) -> Self {
        Self::stacked(cell, &[16, 8], 3, 4).expect("reference architecture is valid")
    }

    /// A batch norm precedes every recurrent layer and the first Conv3D.
    pub fn stacked(
        cell: CellKind,
        recurrent_filters: &[usize],
        kernel: usize,
        conv_filters: usize,
    ) -> Result<Self> {
        if recurrent_filters.is_empty() {
            return Err(Error::config("at least one recurrent layer is required"));
        }
        let bn = |channels| LayerConfig::BatchNorm {
            channels,
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        };
        let top = *recurrent_filters.last().expect("non-empty");
        let mut layers = Vec::new();
        let mut channels = 1;
        for (i, &f) in recurrent_filters.iter().enumerate() {
            layers.push(bn(channels));
            layers.push(match cell {
                CellKind::Convlstm => LayerConfig::ConvLstm {
                    in_channels: channels,
                    filters: f,
                    kernel: [kernel, kernel],
                },
                CellKind::Stlstm => LayerConfig::StLstm {
                    in_channels: channels,
                    filters: f,
                    memory_in_channels: if i == 0 { top } else { recurrent_filters[i - 1] },
                    kernel: [kernel, kernel],
                },
            });
            channels = f;
        }
        layers.push(bn(channels));
        layers.push(LayerConfig::Conv3d {
            in_channels: channels,
            filters: conv_filters,
            kernel: [3, 3, 3],
            activation: Activation::Relu,
        });
        layers.push(LayerConfig::Conv3d {
            in_channels: conv_filters,
            filters: 1,
            kernel: [1, 1, 1],
            activation: Activation::Sigmoid,
        });
        let spec = NetworkSpec { cell, layers };
        spec.validate()?;
        Ok(spec)
    }

    /// Index range of the recurrent layers (first..=last).
    fn recurrent_block(&self) -> Option<(usize, usize)> {
        let first = self.layers.iter().position(LayerConfig::is_recurrent)?;
        let last = self.layers.iter().rposition(LayerConfig::is_recurrent)?;
        Some((first, last))
    }

    pub fn validate(&self) -> Result<()> {
        let mut channels = 1;
        let mut st_filters = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let fail = |msg: String| Err(Error::config(format!("layer {i}: {msg}")));
            match *layer {
                LayerConfig::BatchNorm {
                    channels: c,
                    momentum,
                    epsilon,
                } => {
                    if c != channels {
                        return fail(format!("batch norm over {c} channels, input has {channels}"));
                    }
                    if !(0.0..=1.0).contains(&momentum) || epsilon < 0.0 {
                        return fail("invalid batch norm momentum/epsilon".into());
                    }
                }
                LayerConfig::ConvLstm {
                    in_channels,
                    filters,
                    kernel,
                } => {
                    if self.cell != CellKind::Convlstm {
                        return fail("convLSTM layer in an ST-LSTM network".into());
                    }
                    if in_channels != channels || filters == 0 {
                        return fail(format!("expects {in_channels} channels, input has {channels}"));
                    }
                    super::convlstm::check_kernel(&kernel)?;
                    channels = filters;
                }
                LayerConfig::StLstm {
                    in_channels,
                    filters,
                    kernel,
                    ..
                } => {
                    if self.cell != CellKind::Stlstm {
                        return fail("ST-LSTM layer in a convLSTM network".into());
                    }
                    if in_channels != channels || filters == 0 {
                        return fail(format!("expects {in_channels} channels, input has {channels}"));
                    }
                    super::convlstm::check_kernel(&kernel)?;
                    st_filters.push(filters);
                    channels = filters;
                }
                LayerConfig::Conv3d {
                    in_channels,
                    filters,
                    kernel,
                    ..
                } => {
                    if in_channels != channels || filters == 0 {
                        return fail(format!("expects {in_channels} channels, input has {channels}"));
                    }
                    super::convlstm::check_kernel(&kernel)?;
                    channels = filters;
                }
            }
        }
        if channels != 1 {
            return Err(Error::config(format!(
                "network must end with one channel, ends with {channels}"
            )));
        }
        let Some((first, last)) = self.recurrent_block() else {
            return Err(Error::config("network has no recurrent layer"));
        };
        if self.cell == CellKind::Stlstm {
            if self.layers[first..=last]
                .iter()
                .any(|l| !matches!(l, LayerConfig::StLstm { .. } | LayerConfig::BatchNorm { .. }))
            {
                return Err(Error::config(
                    "only batch norms may sit between ST-LSTM layers",
                ));
            }
            let mut k = 0;
            for layer in &self.layers[first..=last] {
                if let LayerConfig::StLstm {
                    memory_in_channels, ..
                } = *layer
                {
                    let expect = if k == 0 {
                        *st_filters.last().expect("non-empty")
                    } else {
                        st_filters[k - 1]
                    };
                    if memory_in_channels != expect {
                        return Err(Error::config(format!(
                            "ST-LSTM layer {k} receives {expect}-channel spatial memory, \
                             declared {memory_in_channels}"
                        )));
                    }
                    k += 1;
                }
            }
        }
        Ok(())
    }
}

/// Per-layer parameter counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCount {
    pub name: String,
    pub total: usize,
    pub trainable: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub layers: Vec<LayerCount>,
    pub total: usize,
    pub trainable: usize,
}

impl ParamCount {
    /// Rows grouped like a summary table: each recurrent and Conv3D layer
    /// on its own row, all batch norms combined, then the total.
    pub fn table(&self) -> Vec<(String, usize)> {
        let mut rows: Vec<(String, usize)> = self
            .layers
            .iter()
            .filter(|l| !l.name.starts_with("batch norm"))
            .map(|l| (l.name.clone(), l.total))
            .collect();
        let bn: usize = self
            .layers
            .iter()
            .filter(|l| l.name.starts_with("batch norm"))
            .map(|l| l.total)
            .sum();
        rows.push(("All batch normalizations".into(), bn));
        rows.push(("Total".into(), self.total));
        rows
    }
}

pub fn param_count(spec: &NetworkSpec) -> ParamCount {
    let (mut rec, mut conv, mut bn) = (0, 0, 0);
    let layers: Vec<LayerCount> = spec
        .layers
        .iter()
        .map(|l| {
            let name = match l {
                LayerConfig::BatchNorm { .. } => {
                    bn += 1;
                    format!("batch norm {bn}")
                }
                LayerConfig::ConvLstm { .. } => {
                    rec += 1;
                    format!("convLSTM {rec}")
                }
                LayerConfig::StLstm { .. } => {
                    rec += 1;
                    format!("ST-LSTM {rec}")
                }
                LayerConfig::Conv3d { .. } => {
                    conv += 1;
                    format!("3D convolution {conv}")
                }
            };
            let (total, trainable) = l.param_count();
            LayerCount {
                name,
                total,
                trainable,
            }
        })
        .collect();
    ParamCount {
        total: layers.iter().map(|l| l.total).sum(),
        trainable: layers.iter().map(|l| l.trainable).sum(),
        layers,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    BatchNorm(BatchNorm<T>),
    ConvLstm(ConvLstmCell<T>),
    StLstm(StLstmCell<T>),
    Conv3d(Conv3d<T>),
}

impl<T: Real> Layer<T> {
    fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::BatchNorm(l) => l.params(),
            Layer::ConvLstm(l) => l.params(),
            Layer::StLstm(l) => l.params(),
            Layer::Conv3d(l) => l.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::BatchNorm(l) => l.params_mut(),
            Layer::ConvLstm(l) => l.params_mut(),
            Layer::StLstm(l) => l.params_mut(),
            Layer::Conv3d(l) => l.params_mut(),
        }
    }

    fn trainable_mask(&self) -> Vec<bool> {
        match self {
            Layer::BatchNorm(_) => vec![true, true, false, false],
            other => vec![true; other.params().len()],
        }
    }
}

/// Result of one forward pass on a graph.
pub struct ForwardPass<T> {
    /// `[B, L, M, N, 1]`
    pub output: Var,
    /// Batch statistics observed by each batch-norm layer (train mode only).
    pub batch_stats: Vec<(usize, BatchStats<T>)>,
}

/// Layer stack with parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
}

fn build<T: Real>(spec: &NetworkSpec, mut rng: Option<&mut ChaCha8Rng>) -> Result<Vec<Layer<T>>> {
    spec.validate()?;
    spec.layers
        .iter()
        .map(|cfg| {
            Ok(match *cfg {
                LayerConfig::BatchNorm {
                    channels,
                    momentum,
                    epsilon,
                } => Layer::BatchNorm(BatchNorm::new(channels, momentum, epsilon)?),
                LayerConfig::ConvLstm {
                    in_channels,
                    filters,
                    kernel,
                } => {
                    let k = (kernel[0], kernel[1]);
                    Layer::ConvLstm(match rng.as_deref_mut() {
                        Some(r) => ConvLstmCell::init(in_channels, filters, k, r)?,
                        None => ConvLstmCell::zeroed(in_channels, filters, k)?,
                    })
                }
                LayerConfig::StLstm {
                    in_channels,
                    filters,
                    memory_in_channels,
                    kernel,
                } => {
                    let k = (kernel[0], kernel[1]);
                    Layer::StLstm(match rng.as_deref_mut() {
                        Some(r) => StLstmCell::init(in_channels, filters, memory_in_channels, k, r)?,
                        None => StLstmCell::zeroed(in_channels, filters, memory_in_channels, k)?,
                    })
                }
                LayerConfig::Conv3d {
                    in_channels,
                    filters,
                    kernel,
                    activation,
                } => Layer::Conv3d(match rng.as_deref_mut() {
                    Some(r) => Conv3d::init(in_channels, filters, kernel, activation, r)?,
                    None => Conv3d::zeroed(in_channels, filters, kernel, activation)?,
                }),
            })
        })
        .collect()
}

fn mean_stats<T: Real>(stats: &[BatchStats<T>]) -> BatchStats<T> {
    let n = T::from_usize(stats.len()).expect("count");
    let c = stats[0].mean.len();
    let avg = |pick: fn(&BatchStats<T>) -> &Vec<T>| {
        (0..c)
            .map(|ch| stats.iter().map(|s| pick(s)[ch]).sum::<T>() / n)
            .collect()
    };
    BatchStats {
        mean: avg(|s| &s.mean),
        var: avg(|s| &s.var),
    }
}

impl<T: Real> Network<T> {
    /// Seeded Glorot-uniform initialization.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = build(&spec, Some(&mut rng))?;
        Ok(Network { spec, layers })
    }

    /// All weights and biases zero; batch norms at identity defaults.
    pub fn zeroed(spec: NetworkSpec) -> Result<Self> {
        let layers = build(&spec, None)?;
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(&self.spec)
    }

    /// Every parameter tensor in declared order, with its trainable flag.
    pub fn parameters(&self) -> Vec<(&Tensor<T>, bool)> {
        self.layers
            .iter()
            .flat_map(|l| l.params().into_iter().zip(l.trainable_mask()))
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<(&mut Tensor<T>, bool)> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let mask = l.trainable_mask();
                l.params_mut().into_iter().zip(mask)
            })
            .collect()
    }

    /// Trainable tensors only, in declared order.
    pub fn trainable(&self) -> Vec<&Tensor<T>> {
        self.parameters()
            .into_iter()
            .filter_map(|(t, tr)| tr.then_some(t))
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.parameters_mut()
            .into_iter()
            .filter_map(|(t, tr)| tr.then_some(t))
            .collect()
    }

    /// Adds every parameter to the graph; trainable ones are differentiable
    /// when `with_grad` is set.
    pub fn bind(&self, g: &mut Graph<T>, with_grad: bool) -> Vec<Var> {
        self.parameters()
            .into_iter()
            .map(|(t, trainable)| g.leaf(t.clone().with_grad(with_grad && trainable)))
            .collect()
    }

    /// Forward pass over `input` (`[B, L, M, N, 1]`) using parameters bound
    /// by [`Network::bind`] (or any vars of the same shapes, in order).
    pub fn forward_with(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        input: Var,
        mode: NormMode,
    ) -> Result<ForwardPass<T>> {
        let shape = g.shape(input).to_vec();
        if shape.len() != 5 || shape[4] != 1 {
            return Err(Error::dim(format!(
                "network input must be [B, L, M, N, 1], got {shape:?}"
            )));
        }
        let expected: usize = self.layers.iter().map(|l| l.params().len()).sum();
        if params.len() != expected {
            return Err(Error::usage(format!(
                "{} parameter vars bound, network has {expected}",
                params.len()
            )));
        }
        let (b, l, m, n) = (shape[0], shape[1], shape[2], shape[3]);
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            let k = layer.params().len();
            offsets.push(off..off + k);
            off += k;
        }
        let p = |i: usize| &params[offsets[i].clone()];

        let mut stats = Vec::new();
        let mut cur = g.reshape(input, &[b, 1, l, m, n])?;
        let (block_start, block_end) = match self.spec.cell {
            CellKind::Stlstm => self.spec.recurrent_block().expect("validated"),
            CellKind::Convlstm => (usize::MAX, usize::MAX),
        };

        let mut idx = 0;
        while idx < self.layers.len() {
            if idx == block_start {
                cur = self.st_block(g, &p, cur, block_start, block_end, mode, &mut stats)?;
                idx = block_end + 1;
                continue;
            }
            cur = match &self.layers[idx] {
                Layer::BatchNorm(bn) => {
                    let (y, st) = bn.apply_graph(g, p(idx), cur, mode)?;
                    if let Some(st) = st {
                        stats.push((idx, st));
                    }
                    y
                }
                Layer::ConvLstm(cell) => {
                    let zeros = Tensor::zeros(&[b, cell.filters, m, n]);
                    let mut h = g.constant(zeros.clone());
                    let mut c = g.constant(zeros);
                    let mut outs = Vec::with_capacity(l);
                    for t in 0..l {
                        let xt = g.time_slice(cur, t)?;
                        (h, c) = cell.step_graph(g, p(idx), xt, h, c)?;
                        outs.push(h);
                    }
                    g.stack_time(&outs)?
                }
                Layer::Conv3d(conv) => conv.apply_graph(g, p(idx), cur)?,
                Layer::StLstm(_) => unreachable!("ST-LSTM layers run inside the recurrent block"),
            };
            idx += 1;
        }
        let output = g.reshape(cur, &[b, l, m, n, 1])?;
        Ok(ForwardPass {
            output,
            batch_stats: stats,
        })
    }

    /// Time-major pass over the ST-LSTM block. Spatial memory flows upward
    /// within a step and from the top layer back to the bottom layer at the
    /// next step. Batch norms inside the block normalize each time slice.
    #[allow(clippy::too_many_arguments)]
    fn st_block<'p>(
        &self,
        g: &mut Graph<T>,
        p: &impl Fn(usize) -> &'p [Var],
        input: Var,
        start: usize,
        end: usize,
        mode: NormMode,
        stats: &mut Vec<(usize, BatchStats<T>)>,
    ) -> Result<Var> {
        let s = g.shape(input).to_vec();
        let (b, l, m, n) = (s[0], s[2], s[3], s[4]);
        let mut states: Vec<Option<(Var, Var)>> = vec![None; end + 1];
        let mut top_filters = 0;
        for idx in start..=end {
            if let Layer::StLstm(cell) = &self.layers[idx] {
                let zeros = Tensor::zeros(&[b, cell.filters, m, n]);
                states[idx] = Some((g.constant(zeros.clone()), g.constant(zeros)));
                top_filters = cell.filters;
            }
        }
        let mut memory = g.constant(Tensor::zeros(&[b, top_filters, m, n]));
        let mut slice_stats: Vec<Vec<BatchStats<T>>> = vec![Vec::new(); end + 1];
        let mut outs = Vec::with_capacity(l);
        for t in 0..l {
            let mut v = g.time_slice(input, t)?;
            for idx in start..=end {
                match &self.layers[idx] {
                    Layer::BatchNorm(bn) => {
                        let (y, st) = bn.apply_graph(g, p(idx), v, mode)?;
                        slice_stats[idx].extend(st);
                        v = y;
                    }
                    Layer::StLstm(cell) => {
                        let (h, c) = states[idx].expect("state initialized");
                        let (h2, c2, m2) = cell.step_graph(g, p(idx), v, h, c, memory)?;
                        states[idx] = Some((h2, c2));
                        memory = m2;
                        v = h2;
                    }
                    _ => unreachable!("validated block contents"),
                }
            }
            outs.push(v);
        }
        for (idx, st) in slice_stats.iter().enumerate() {
            if !st.is_empty() {
                stats.push((idx, mean_stats(st)));
            }
        }
        g.stack_time(&outs)
    }

    /// Binds parameters and runs [`Network::forward_with`].
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        input: Var,
        mode: NormMode,
        with_grad: bool,
    ) -> Result<(ForwardPass<T>, Vec<Var>)> {
        let params = self.bind(g, with_grad);
        let pass = self.forward_with(g, &params, input, mode)?;
        Ok((pass, params))
    }

    /// Folds observed batch statistics into the moving averages.
    pub fn update_moving_stats(&mut self, stats: &[(usize, BatchStats<T>)]) {
        for (idx, st) in stats {
            if let Some(Layer::BatchNorm(bn)) = self.layers.get_mut(*idx) {
                bn.update_moving(st);
            }
        }
    }

    /// Inference-mode forward of a `[B, L, M, N, 1]` window.
    pub fn predict(&self, window: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.constant(window.clone());
        let (pass, _) = self.forward(&mut g, x, NormMode::Infer, false)?;
        Ok(g.value(pass.output).clone())
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let mut out = Network::<U>::zeroed(self.spec.clone()).expect("spec already validated");
        for ((dst, _), (src, _)) in out.parameters_mut().into_iter().zip(self.parameters()) {
            *dst = src.cast();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_counts() {
        let pc = param_count(&NetworkSpec::reference(CellKind::Convlstm));
        let totals: Vec<usize> = pc.layers.iter().map(|l| l.total).collect();
        assert_eq!(totals, vec![4, 9856, 64, 6944, 32, 868, 5]);
        assert_eq!((pc.total, pc.trainable), (17773, 17723));
    }

    #[test]
    fn st_formula_matches_tensors() {
        let spec = NetworkSpec::reference(CellKind::Stlstm);
        let net = Network::<f32>::zeroed(spec.clone()).unwrap();
        let n: usize = net.parameters().iter().map(|(t, _)| t.len()).sum();
        assert_eq!(n, param_count(&spec).total);
    }

    #[test]
    fn validation_rejects_broken_chains() {
        let mut spec = NetworkSpec::reference(CellKind::Convlstm);
        spec.layers.remove(1);
        assert!(matches!(Network::<f32>::zeroed(spec), Err(Error::Config(_))));
        let mut spec = NetworkSpec::reference(CellKind::Stlstm);
        if let LayerConfig::StLstm {
            memory_in_channels, ..
        } = &mut spec.layers[1]
        {
            *memory_in_channels = 16;
        }
        assert!(spec.validate().is_err());
    }

    #[test]
    fn wrong_rank_is_dimension_error() {
        let net = Network::<f32>::zeroed(NetworkSpec::reference(CellKind::Convlstm)).unwrap();
        let r = net.predict(&Tensor::zeros(&[1, 3, 4, 4]));
        assert!(matches!(r, Err(Error::Dimension(_))));
        let r = net.predict(&Tensor::zeros(&[1, 3, 4, 4, 2]));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_network_outputs_half() {
        for cell in [CellKind::Convlstm, CellKind::Stlstm] {
            let net = Network::<f64>::zeroed(NetworkSpec::reference(cell)).unwrap();
            let y = net.predict(&Tensor::zeros(&[1, 2, 3, 3, 1])).unwrap();
            assert!(y.data().iter().all(|&v| v == 0.5), "{cell:?}");
        }
    }

    #[test]
    fn cast_roundtrip() {
        let net = Network::<f32>::init(NetworkSpec::reference(CellKind::Convlstm), 9).unwrap();
        let back: Network<f32> = net.cast::<f64>().cast();
        assert_eq!(back, net);
    }
}
