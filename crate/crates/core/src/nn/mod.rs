//! From-scratch neural network core: dense and softmax layers, LSTM cells,
//! bidirectional and stacked bidirectional LSTMs, losses, backpropagation
//! (through time), SGD with momentum and finite-difference gradient checks.
//!
//! Everything runs in `f64`. Sequences are passed as `&[Vec<f64>]`, one
//! vector per frame.

mod blstm;
mod classifier;
mod dense;
mod gradcheck;
mod lstm;
mod train;

pub use blstm::{blstm_layer_forward, BlstmLayer, DblstmNetwork};
pub use classifier::DnnClassifier;
pub use dense::{softmax, Activation, DenseLayer};
pub use gradcheck::{grad_check, grad_check_suite, GradCheckSummary};
pub use lstm::{lstm_step, LstmCell};
pub use train::{train, OptimizerConfig, Trainer, TrainingLog};

use crate::error::{Error, Result};

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean over frames and dimensions of the squared error.
    Mse,
    /// Mean over frames of the negative log-probability of the label.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Regression(Vec<Vec<f64>>),
    Classes(Vec<usize>),
}

/// One training sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub inputs: Vec<Vec<f64>>,
    pub target: Target,
}

impl Example {
    pub fn regression(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Self {
        Self { inputs, target: Target::Regression(targets) }
    }

    pub fn classes(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> Self {
        Self { inputs, target: Target::Classes(labels) }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// A model the trainer and gradient checker can drive. Gradients are stored
/// in a value of the model's own type, so parameters and gradients share a
/// layout.
pub trait Trainable: Clone {
    /// Same architecture with every parameter zero.
    fn zeros_like(&self) -> Self;

    fn params(&self) -> Vec<&[f64]>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    /// Rejects examples whose shapes, or a loss, the model cannot handle.
    fn validate(&self, ex: &Example, loss: Loss) -> Result<()>;

    fn loss(&self, ex: &Example, loss: Loss) -> Result<f64>;

    /// Adds the loss gradient for `ex` into `grad` and returns the loss.
    fn accumulate_gradient(&self, ex: &Example, loss: Loss, grad: &mut Self) -> Result<f64>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

fn check_sequence(inputs: &[Vec<f64>], dim: usize) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptySequence);
    }
    for x in inputs {
        if x.len() != dim {
            return Err(Error::DimMismatch { expected: dim, got: x.len() });
        }
    }
    Ok(())
}

/// Validates the target against a model output width for the given loss.
fn check_target(ex: &Example, loss: Loss, output_dim: usize, model: &str) -> Result<()> {
    match (&ex.target, loss) {
        (Target::Regression(ts), Loss::Mse) => {
            if ts.len() != ex.inputs.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} target frames for {} input frames",
                    ts.len(),
                    ex.inputs.len()
                )));
            }
            if let Some(t) = ts.iter().find(|t| t.len() != output_dim) {
                return Err(Error::ShapeMismatch(format!("target dim {} but model outputs {output_dim}", t.len())));
            }
            Ok(())
        }
        (Target::Classes(labels), Loss::CrossEntropy) => {
            if labels.len() != ex.inputs.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {} input frames",
                    labels.len(),
                    ex.inputs.len()
                )));
            }
            if let Some(&l) = labels.iter().find(|&&l| l >= output_dim) {
                return Err(Error::ShapeMismatch(format!("label {l} outside {output_dim} classes")));
            }
            Ok(())
        }
        _ => Err(Error::ShapeMismatch(format!("{loss:?} loss does not match the target kind for a {model}"))),
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
