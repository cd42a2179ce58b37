use crate::autodiff::{BatchStats, Graph, NormStats, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics; moving statistics are updated.
    Train,
    /// Moving statistics.
    Infer,
}

/// Per-channel batch normalization over axis 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub moving_mean: Tensor<T>,
    pub moving_var: Tensor<T>,
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize, momentum: f64, epsilon: f64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("batch norm needs at least one channel"));
        }
        if !(0.0..=1.0).contains(&momentum) || epsilon < 0.0 {
            return Err(Error::config(format!(
                "batch norm momentum {momentum} / epsilon {epsilon} out of range"
            )));
        }
        Ok(BatchNorm {
            channels,
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            moving_mean: Tensor::zeros(&[channels]),
            moving_var: Tensor::full(&[channels], T::one()),
            momentum: T::from_f64_lossy(momentum),
            epsilon: T::from_f64_lossy(epsilon),
        })
    }

    pub fn param_count(&self) -> usize {
        4 * self.channels
    }

    pub fn trainable_count(&self) -> usize {
        2 * self.channels
    }

    /// `gamma, beta, moving_mean, moving_var`; only the first two are trainable.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.gamma, &self.beta, &self.moving_mean, &self.moving_var]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.moving_mean,
            &mut self.moving_var,
        ]
    }

    pub fn apply_graph(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        x: Var,
        mode: NormMode,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let stats = match mode {
            NormMode::Train => NormStats::Batch {
                epsilon: self.epsilon,
            },
            NormMode::Infer => NormStats::Fixed {
                mean: self.moving_mean.data().to_vec(),
                var: self.moving_var.data().to_vec(),
                epsilon: self.epsilon,
            },
        };
        g.batch_norm(x, params[0], params[1], stats)
    }

    /// `moving = momentum * moving + (1 - momentum) * batch`.
    pub fn update_moving(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        let blend = |moving: &mut Tensor<T>, batch: &[T]| {
            for (mv, &b) in moving.data_mut().iter_mut().zip(batch) {
                *mv = m * *mv + (T::one() - m) * b;
            }
        };
        blend(&mut self.moving_mean, &stats.mean);
        blend(&mut self.moving_var, &stats.var);
    }

    /// Normalizes `x` (`[B, C, ...]`). In train mode the moving statistics
    /// are updated from the batch.
    pub fn forward(&mut self, x: &Tensor<T>, mode: NormMode) -> Result<Tensor<T>> {
        if x.rank() < 2 {
            return Err(Error::usage(format!(
                "batch norm input {:?} has no batch axis",
                x.shape()
            )));
        }
        if x.shape()[1] != self.channels {
            return Err(Error::dim(format!(
                "input {:?} has {} channels, expected {}",
                x.shape(),
                x.shape()[1],
                self.channels
            )));
        }
        let mut g = Graph::new();
        let gamma = g.constant(self.gamma.clone());
        let beta = g.constant(self.beta.clone());
        let xv = g.constant(x.clone());
        let (y, stats) = self.apply_graph(&mut g, &[gamma, beta], xv, mode)?;
        if let Some(stats) = stats {
            self.update_moving(&stats);
        }
        Ok(g.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_input_is_nearly_unchanged() {
        let mut bn = BatchNorm::<f64>::new(1, 0.99, 1e-3).unwrap();
        let x = Tensor::new(vec![4, 1], vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let y = bn.forward(&x, NormMode::Train).unwrap();
        let scale = 1.0 / (1.0f64 + 1e-3).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-12);
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut bn = BatchNorm::<f32>::new(2, 0.99, 1e-3).unwrap();
        bn.beta.data_mut().copy_from_slice(&[0.25, -1.5]);
        let x = Tensor::from_fn(&[3, 2, 2, 2], |i| if (i / 4) % 2 == 0 { 7.0 } else { -3.0 });
        let y = bn.forward(&x, NormMode::Train).unwrap();
        for (i, &v) in y.data().iter().enumerate() {
            let expect = if (i / 4) % 2 == 0 { 0.25 } else { -1.5 };
            assert_eq!(v, expect);
        }
    }

    #[test]
    fn hand_arithmetic_example() {
        let mut bn = BatchNorm::<f64>::new(1, 0.99, 0.0).unwrap();
        bn.gamma.data_mut()[0] = 2.0;
        bn.beta.data_mut()[0] = 1.0;
        let x = Tensor::new(vec![2, 1], vec![1.0, 3.0]).unwrap();
        let y = bn.forward(&x, NormMode::Train).unwrap();
        assert_eq!(y.data(), &[-1.0, 3.0]);
        assert!((bn.moving_mean.data()[0] - 0.02).abs() < 1e-15);
        assert!((bn.moving_var.data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infer_uses_moving_statistics() {
        let mut bn = BatchNorm::<f64>::new(1, 0.5, 0.0).unwrap();
        bn.moving_mean.data_mut()[0] = 2.0;
        bn.moving_var.data_mut()[0] = 4.0;
        let x = Tensor::new(vec![2, 1], vec![2.0, 6.0]).unwrap();
        let y = bn.forward(&x, NormMode::Infer).unwrap();
        assert_eq!(y.data(), &[0.0, 2.0]);
        assert_eq!(bn.moving_mean.data()[0], 2.0);
    }

    #[test]
    fn counts_and_errors() {
        let mut bn = BatchNorm::<f32>::new(16, 0.99, 1e-3).unwrap();
        assert_eq!((bn.param_count(), bn.trainable_count()), (64, 32));
        assert!(matches!(
            bn.forward(&Tensor::zeros(&[4]), NormMode::Train),
            Err(Error::Usage(_))
        ));
        assert!(bn.forward(&Tensor::zeros(&[2, 3]), NormMode::Train).is_err());
    }
}
