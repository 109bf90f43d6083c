use rand::Rng;

use super::{axpy, dot, sigmoid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
    Softmax,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
            Activation::Identity => 3,
            Activation::Softmax => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Some(match id {
            0 => Activation::Sigmoid,
            1 => Activation::Tanh,
            2 => Activation::Relu,
            3 => Activation::Identity,
            4 => Activation::Softmax,
            _ => return None,
        })
    }

    /// Applies the activation to pre-activations `z` in place.
    pub fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Identity => {}
            Activation::Softmax => softmax_in_place(z),
        }
    }

    /// Turns the gradient w.r.t. outputs `y` into the gradient w.r.t. the
    /// pre-activations, in place.
    pub fn backprop(self, y: &[f64], dy: &mut [f64]) {
        match self {
            Activation::Sigmoid => dy.iter_mut().zip(y).for_each(|(d, &v)| *d *= v * (1.0 - v)),
            Activation::Tanh => dy.iter_mut().zip(y).for_each(|(d, &v)| *d *= 1.0 - v * v),
            Activation::Relu => dy.iter_mut().zip(y).for_each(|(d, &v)| {
                if v <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Identity => {}
            Activation::Softmax => {
                let s = dot(dy, y);
                dy.iter_mut().zip(y).for_each(|(d, &v)| *d = v * (*d - s));
            }
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// `exp(z - max z) / sum exp(z - max z)`.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Fully connected layer `y = act(W x + b)`, `W` stored row-major out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs], activation }
    }

    /// Weights uniform in ±1/sqrt(inputs), zero bias.
    pub fn random(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs], activation }
    }

    pub fn from_parts(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.len() != inputs * outputs {
            return Err(Error::DimMismatch { expected: inputs * outputs, got: weights.len() });
        }
        if bias.len() != outputs {
            return Err(Error::DimMismatch { expected: outputs, got: bias.len() });
        }
        Ok(Self { inputs, outputs, weights, bias, activation })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn pre_activation(&self, x: &[f64], z: &mut [f64]) {
        for ((zr, row), b) in z.iter_mut().zip(self.weights.chunks_exact(self.inputs.max(1))).zip(&self.bias) {
            *zr = b + dot(row, x);
        }
        if self.inputs == 0 {
            z.copy_from_slice(&self.bias);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::DimMismatch { expected: self.inputs, got: x.len() });
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.outputs];
        self.pre_activation(x, &mut z);
        self.activation.apply(&mut z);
        z
    }

    /// Accumulates parameter gradients given the pre-activation gradient `dz`
    /// and, when asked, writes the input gradient into `dx`.
    pub(crate) fn backward_preact(&self, x: &[f64], dz: &[f64], grad: &mut DenseLayer, dx: Option<&mut [f64]>) {
        if self.inputs > 0 {
            for (r, &d) in dz.iter().enumerate() {
                axpy(d, x, &mut grad.weights[r * self.inputs..(r + 1) * self.inputs]);
            }
        }
        axpy(1.0, dz, &mut grad.bias);
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|v| *v = 0.0);
            if self.inputs > 0 {
                for (r, &d) in dz.iter().enumerate() {
                    axpy(d, &self.weights[r * self.inputs..(r + 1) * self.inputs], dx);
                }
            }
        }
    }

    pub(crate) fn params(&self) -> [&[f64]; 2] {
        [&self.weights, &self.bias]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weights, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer() {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let layer = DenseLayer::from_parts(3, 3, w, vec![0.0; 3], Activation::Identity).unwrap();
        assert_eq!(layer.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn zero_sigmoid_layer_is_half() {
        let layer = DenseLayer::zeros(4, 5, Activation::Sigmoid);
        assert_eq!(layer.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.5; 5]);
        assert!(matches!(layer.forward(&[1.0]), Err(Error::DimMismatch { expected: 4, got: 1 })));
    }

    #[test]
    fn asr_hidden_shape() {
        let layer = DenseLayer::zeros(221, 2048, Activation::Sigmoid);
        assert_eq!(layer.forward(&vec![0.1; 221]).unwrap().len(), 2048);
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&vec![0.0; 39]);
        assert!(p.iter().all(|&v| (v - 1.0 / 39.0).abs() < 1e-15));
        let p = softmax(&[0.0, 2f64.ln()]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-15);
        let z = [0.3, -1.2, 4.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 1000.0).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn activation_ids_round_trip() {
        for a in [Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::Identity, Activation::Softmax] {
            assert_eq!(Activation::from_id(a.id()), Some(a));
        }
        assert_eq!(Activation::from_id(9), None);
    }
}
