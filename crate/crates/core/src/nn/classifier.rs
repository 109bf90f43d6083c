use rand::Rng;

use super::dense::{Activation, DenseLayer};
use super::{check_sequence, check_target, Example, Loss, Target, Trainable};
use crate::error::{Error, Result};

/// Frame-level feed-forward classifier: sigmoid hidden layers and a softmax
/// output giving P(class | frame).
#[derive(Debug, Clone, PartialEq)]
pub struct DnnClassifier {
    pub(crate) layers: Vec<DenseLayer>,
}

impl DnnClassifier {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::ArchitectureMismatch("classifier needs at least one layer".into()));
        };
        if last.activation != Activation::Softmax {
            return Err(Error::ArchitectureMismatch("classifier output layer must be softmax".into()));
        }
        if let Some(l) = layers[..layers.len() - 1].iter().find(|l| l.activation == Activation::Softmax) {
            return Err(Error::ArchitectureMismatch(format!("softmax hidden layer ({}→{})", l.inputs, l.outputs)));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::ArchitectureMismatch(format!(
                    "layer emits {} but the next reads {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn random(input: usize, hidden: &[usize], classes: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(DenseLayer::random(prev, h, Activation::Sigmoid, rng));
            prev = h;
        }
        layers.push(DenseLayer::random(prev, classes, Activation::Softmax, rng));
        Self { layers }
    }

    pub fn zeros(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(DenseLayer::zeros(prev, h, Activation::Sigmoid));
            prev = h;
        }
        layers.push(DenseLayer::zeros(prev, classes, Activation::Softmax));
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Class posteriors for one frame.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward_unchecked(&cur);
        }
        cur
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_sequence(xs, self.input_dim())?;
        Ok(xs.iter().map(|x| self.predict_unchecked(x)).collect())
    }

    fn cross_entropy(&self, ex: &Example, mut grad: Option<&mut Self>) -> Result<f64> {
        self.validate(ex, Loss::CrossEntropy)?;
        let Target::Classes(labels) = &ex.target else { unreachable!() };
        let n = self.layers.len();
        let norm = 1.0 / ex.inputs.len() as f64;
        let mut total = 0.0;
        for (x, &label) in ex.inputs.iter().zip(labels) {
            // activations[l] is the input of layer l
            let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n);
            activations.push(x.clone());
            for layer in &self.layers[..n - 1] {
                let next = layer.forward_unchecked(activations.last().unwrap());
                activations.push(next);
            }
            let last = &self.layers[n - 1];
            let mut z = vec![0.0; last.outputs];
            last.pre_activation(activations.last().unwrap(), &mut z);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += log_sum - z[label];

            let Some(grad) = grad.as_deref_mut() else { continue };
            let mut dz: Vec<f64> = z.iter().map(|v| (v - log_sum).exp() * norm).collect();
            dz[label] -= norm;
            for l in (0..n).rev() {
                let input = &activations[l];
                if l == 0 {
                    self.layers[l].backward_preact(input, &dz, &mut grad.layers[l], None);
                } else {
                    let mut dx = vec![0.0; input.len()];
                    self.layers[l].backward_preact(input, &dz, &mut grad.layers[l], Some(&mut dx));
                    self.layers[l - 1].activation.backprop(input, &mut dx);
                    dz = dx;
                }
            }
        }
        Ok(total * norm)
    }
}

impl Trainable for DnnClassifier {
    fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| DenseLayer::zeros(l.inputs, l.outputs, l.activation)).collect(),
        }
    }

    fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    fn validate(&self, ex: &Example, loss: Loss) -> Result<()> {
        if loss != Loss::CrossEntropy {
            return Err(Error::ShapeMismatch("a softmax classifier trains with cross-entropy".into()));
        }
        check_sequence(&ex.inputs, self.input_dim())?;
        check_target(ex, loss, self.num_classes(), "classifier")
    }

    fn loss(&self, ex: &Example, _loss: Loss) -> Result<f64> {
        self.cross_entropy(ex, None)
    }

    fn accumulate_gradient(&self, ex: &Example, _loss: Loss, grad: &mut Self) -> Result<f64> {
        self.cross_entropy(ex, Some(grad))
    }
}
