use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Example, Loss, Trainable};
use crate::error::{Error, Result};

/// Sequence-level SGD with momentum and global gradient-norm clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Gradients with a larger L2 norm are rescaled to this norm.
    pub clip_norm: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Visit examples in a fresh seeded order every epoch.
    pub shuffle: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, clip_norm: 5.0, epochs: 10, seed: 0, shuffle: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean per-example loss of each epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

impl TrainingLog {
    pub fn last(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    /// One `epoch<TAB>loss` line per epoch.
    pub fn to_text(&self) -> String {
        self.epoch_losses.iter().enumerate().map(|(e, l)| format!("{e}\t{l:.9e}\n")).collect()
    }
}

/// Holds optimizer state across epochs so callers can interleave their own
/// validation.
pub struct Trainer<M: Trainable> {
    opt: OptimizerConfig,
    loss: Loss,
    velocity: M,
    grad: M,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<M: Trainable> Trainer<M> {
    pub fn new(model: &M, loss: Loss, opt: OptimizerConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(opt.seed),
            velocity: model.zeros_like(),
            grad: model.zeros_like(),
            opt,
            loss,
            epoch: 0,
        }
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// One pass over `data` with one update per example; returns the mean loss.
    pub fn run_epoch(&mut self, model: &mut M, data: &[Example]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        for ex in data {
            model.validate(ex, self.loss)?;
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        if self.opt.shuffle {
            order.shuffle(&mut self.rng);
        }
        let mut total = 0.0;
        for &i in &order {
            for g in self.grad.params_mut() {
                g.fill(0.0);
            }
            let loss = model.accumulate_gradient(&data[i], self.loss, &mut self.grad)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: self.epoch, example: i });
            }
            total += loss;
            self.step(model);
        }
        self.epoch += 1;
        Ok(total / data.len() as f64)
    }

    fn step(&mut self, model: &mut M) {
        let norm: f64 = self.grad.params().iter().flat_map(|g| g.iter()).map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > self.opt.clip_norm && norm > 0.0 { self.opt.clip_norm / norm } else { 1.0 };
        let (lr, mu) = (self.opt.learning_rate, self.opt.momentum);
        for ((p, v), g) in model.params_mut().into_iter().zip(self.velocity.params_mut()).zip(self.grad.params()) {
            for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = mu * *vi + gi * scale;
                *pi -= lr * *vi;
            }
        }
    }
}

/// Trains for `opt.epochs` epochs with full backpropagation through time.
pub fn train<M: Trainable>(model: &mut M, data: &[Example], loss: Loss, opt: &OptimizerConfig) -> Result<TrainingLog> {
    let mut trainer = Trainer::new(model, loss, opt.clone());
    let mut log = TrainingLog::default();
    for _ in 0..opt.epochs {
        log.epoch_losses.push(trainer.run_epoch(model, data)?);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DblstmNetwork, DnnClassifier};
    use rand::SeedableRng;

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = DblstmNetwork::random(3, 4, 1, 2, &mut rng);
        let before = net.clone();
        let data = vec![Example::regression(vec![vec![0.5; 3]; 4], vec![vec![1.0, -1.0]; 4])];
        let opt = OptimizerConfig { learning_rate: 0.0, epochs: 3, ..Default::default() };
        train(&mut net, &data, Loss::Mse, &opt).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn constant_pair_mse_decreases_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut net = DblstmNetwork::random(3, 8, 2, 4, &mut rng);
        let data = vec![Example::regression(vec![vec![0.3, -0.2, 0.9]; 10], vec![vec![0.5, -0.5, 1.0, 0.0]; 10])];
        let opt = OptimizerConfig { learning_rate: 1e-3, epochs: 10, seed: 7, ..Default::default() };
        let log = train(&mut net, &data, Loss::Mse, &opt).unwrap();
        for w in log.epoch_losses.windows(2) {
            assert!(w[1] < w[0], "{:?}", log.epoch_losses);
        }
    }

    #[test]
    fn separable_classifier_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut clf = DnnClassifier::random(2, &[4], 2, &mut rng);
        let frames: Vec<Vec<f64>> = (0..20).map(|i| if i % 2 == 0 { vec![1.0, 0.2] } else { vec![-1.0, -0.1] }).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let data = vec![Example::classes(frames, labels)];
        let opt = OptimizerConfig { learning_rate: 0.5, epochs: 200, ..Default::default() };
        let log = train(&mut clf, &data, Loss::CrossEntropy, &opt).unwrap();
        assert!(log.last().unwrap() < 0.01, "{:?}", log.last());
    }

    #[test]
    fn training_is_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut net = DblstmNetwork::random(2, 3, 1, 2, &mut rng);
            let data: Vec<Example> = (0..4)
                .map(|k| Example::regression(vec![vec![k as f64 * 0.1, 0.4]; 5], vec![vec![0.2, -(k as f64)]; 5]))
                .collect();
            let opt = OptimizerConfig { learning_rate: 0.05, epochs: 5, seed: 99, ..Default::default() };
            let log = train(&mut net, &data, Loss::Mse, &opt).unwrap();
            (net, log)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut net = DblstmNetwork::zeros(1, 2, 1, 1);
        let data = vec![Example::regression(vec![vec![0.0]], vec![vec![f64::INFINITY]])];
        let err = train(&mut net, &data, Loss::Mse, &OptimizerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, example: 0 }));
    }

    #[test]
    fn shape_errors_surface() {
        let mut net = DblstmNetwork::zeros(2, 2, 1, 3);
        let data = vec![Example::regression(vec![vec![0.0; 2]; 3], vec![vec![0.0; 2]; 3])];
        assert!(matches!(train(&mut net, &data, Loss::Mse, &OptimizerConfig::default()), Err(Error::ShapeMismatch(_))));
        assert!(train(&mut net, &data, Loss::CrossEntropy, &OptimizerConfig::default()).is_err());
    }
}
