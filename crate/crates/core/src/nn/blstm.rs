use rand::Rng;

use super::dense::{Activation, DenseLayer};
use super::lstm::{LstmCell, LstmTrace};
use super::{check_sequence, check_target, Example, Loss, Target, Trainable};
use crate::error::{Error, Result};

/// A forward and a backward LSTM reading the same sequence; the output at
/// each step is `[h_fwd_t; h_bwd_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlstmLayer {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

struct BlstmTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
}

impl BlstmLayer {
    pub fn new(forward: LstmCell, backward: LstmCell) -> Result<Self> {
        if forward.input != backward.input || forward.hidden != backward.hidden {
            return Err(Error::ArchitectureMismatch("forward and backward cells differ in shape".into()));
        }
        Ok(Self { forward, backward })
    }

    pub fn input_size(&self) -> usize {
        self.forward.input
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden
    }

    fn run(&self, xs: &[&[f64]]) -> (BlstmTrace, Vec<f64>) {
        let h = self.hidden_size();
        let steps = xs.len();
        let fwd = self.forward.run(xs);
        let reversed: Vec<&[f64]> = xs.iter().rev().copied().collect();
        let bwd = self.backward.run(&reversed);
        let mut out = vec![0.0; steps * 2 * h];
        for t in 0..steps {
            let row = &mut out[t * 2 * h..(t + 1) * 2 * h];
            row[..h].copy_from_slice(&fwd.h[t * h..(t + 1) * h]);
            let s = steps - 1 - t;
            row[h..].copy_from_slice(&bwd.h[s * h..(s + 1) * h]);
        }
        (BlstmTrace { fwd, bwd }, out)
    }

    fn backward_pass(&self, trace: &BlstmTrace, dout: &[f64], grad: &mut BlstmLayer) -> Vec<f64> {
        let h = self.hidden_size();
        let inp = self.input_size();
        let steps = dout.len() / (2 * h);
        let mut dh_fwd = vec![0.0; steps * h];
        let mut dh_bwd = vec![0.0; steps * h];
        for t in 0..steps {
            let row = &dout[t * 2 * h..(t + 1) * 2 * h];
            dh_fwd[t * h..(t + 1) * h].copy_from_slice(&row[..h]);
            let s = steps - 1 - t;
            dh_bwd[s * h..(s + 1) * h].copy_from_slice(&row[h..]);
        }
        let mut dx = self.forward.backward(&trace.fwd, &dh_fwd, &mut grad.forward);
        let dx_rev = self.backward.backward(&trace.bwd, &dh_bwd, &mut grad.backward);
        for t in 0..steps {
            let s = steps - 1 - t;
            for k in 0..inp {
                dx[t * inp + k] += dx_rev[s * inp + k];
            }
        }
        dx
    }
}

/// Runs one bidirectional layer from zero initial states.
pub fn blstm_layer_forward(fwd: &LstmCell, bwd: &LstmCell, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let layer = BlstmLayer::new(fwd.clone(), bwd.clone())?;
    check_sequence(xs, layer.input_size())?;
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, out) = layer.run(&refs);
    Ok(out.chunks_exact(2 * layer.hidden_size()).map(<[f64]>::to_vec).collect())
}

/// Stacked bidirectional LSTM with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DblstmNetwork {
    pub(crate) layers: Vec<BlstmLayer>,
    pub(crate) output: DenseLayer,
}

impl DblstmNetwork {
    /// Validates that layer `l > 0` reads `2H` inputs and the output layer
    /// reads the top layer's `2H`.
    pub fn from_parts(layers: Vec<BlstmLayer>, output: DenseLayer) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ArchitectureMismatch("DBLSTM needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].input_size() != 2 * pair[0].hidden_size() {
                return Err(Error::ArchitectureMismatch(format!(
                    "layer expects {} inputs but the layer below emits {}",
                    pair[1].input_size(),
                    2 * pair[0].hidden_size()
                )));
            }
        }
        let top = 2 * layers.last().unwrap().hidden_size();
        if output.inputs != top {
            return Err(Error::ArchitectureMismatch(format!("output layer reads {} but top layer emits {top}", output.inputs)));
        }
        if output.activation != Activation::Identity {
            return Err(Error::ArchitectureMismatch("DBLSTM output layer must be linear".into()));
        }
        Ok(Self { layers, output })
    }

    pub fn random(input_dim: usize, hidden: usize, num_layers: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        assert!(num_layers > 0 && hidden > 0);
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input_dim } else { 2 * hidden };
                BlstmLayer { forward: LstmCell::random(inp, hidden, rng), backward: LstmCell::random(inp, hidden, rng) }
            })
            .collect();
        let output = DenseLayer::random(2 * hidden, output_dim, Activation::Identity, rng);
        Self { layers, output }
    }

    pub fn zeros(input_dim: usize, hidden: usize, num_layers: usize, output_dim: usize) -> Self {
        assert!(num_layers > 0 && hidden > 0);
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input_dim } else { 2 * hidden };
                BlstmLayer { forward: LstmCell::zeros(inp, hidden), backward: LstmCell::zeros(inp, hidden) }
            })
            .collect();
        Self { layers, output: DenseLayer::zeros(2 * hidden, output_dim, Activation::Identity) }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_dim(&self) -> usize {
        self.output.outputs
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[BlstmLayer] {
        &self.layers
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.output
    }

    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_sequence(xs, self.input_dim())?;
        let (_, top) = self.run(xs);
        let width = 2 * self.hidden_size();
        Ok(top.chunks_exact(width).map(|h| self.output.forward_unchecked(h)).collect())
    }

    /// Returns per-layer traces plus the flattened top-layer activations.
    fn run(&self, xs: &[Vec<f64>]) -> (Vec<(BlstmTrace, Vec<f64>)>, Vec<f64>) {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut current: Vec<f64> = xs.concat();
        let mut width = self.input_dim();
        for layer in &self.layers {
            let refs: Vec<&[f64]> = current.chunks_exact(width).collect();
            let (trace, out) = layer.run(&refs);
            width = 2 * layer.hidden_size();
            traces.push((trace, std::mem::replace(&mut current, out)));
        }
        (traces, current)
    }

    fn mse_and_grad(&self, ex: &Example, grad: Option<&mut Self>) -> Result<f64> {
        self.validate(ex, Loss::Mse)?;
        let Target::Regression(targets) = &ex.target else { unreachable!() };
        let (traces, top) = self.run(&ex.inputs);
        let width = 2 * self.hidden_size();
        let dims = self.output_dim();
        let steps = ex.inputs.len();
        let norm = 1.0 / (steps * dims) as f64;
        let mut loss = 0.0;
        let mut dys = Vec::with_capacity(steps);
        for (h, t) in top.chunks_exact(width).zip(targets) {
            let y = self.output.forward_unchecked(h);
            let dy: Vec<f64> = y.iter().zip(t).map(|(a, b)| 2.0 * (a - b) * norm).collect();
            loss += y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            dys.push(dy);
        }
        let loss = loss * norm;
        let Some(grad) = grad else { return Ok(loss) };

        let mut dtop = vec![0.0; steps * width];
        for (t, dy) in dys.iter().enumerate() {
            let h = &top[t * width..(t + 1) * width];
            self.output.backward_preact(h, dy, &mut grad.output, Some(&mut dtop[t * width..(t + 1) * width]));
        }
        let mut dcur = dtop;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (trace, _) = &traces[l];
            dcur = layer.backward_pass(trace, &dcur, &mut grad.layers[l]);
        }
        Ok(loss)
    }
}

impl Trainable for DblstmNetwork {
    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_size(), self.num_layers(), self.output_dim())
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut p = Vec::with_capacity(4 * self.layers.len() + 2);
        for layer in &self.layers {
            p.extend(layer.forward.params());
            p.extend(layer.backward.params());
        }
        p.extend(self.output.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = Vec::with_capacity(4 * self.layers.len() + 2);
        for layer in &mut self.layers {
            p.extend(layer.forward.params_mut());
            p.extend(layer.backward.params_mut());
        }
        p.extend(self.output.params_mut());
        p
    }

    fn validate(&self, ex: &Example, loss: Loss) -> Result<()> {
        if loss != Loss::Mse {
            return Err(Error::ShapeMismatch("a DBLSTM regressor trains with MSE".into()));
        }
        check_sequence(&ex.inputs, self.input_dim())?;
        check_target(ex, loss, self.output_dim(), "DBLSTM")
    }

    fn loss(&self, ex: &Example, _loss: Loss) -> Result<f64> {
        self.mse_and_grad(ex, None)
    }

    fn accumulate_gradient(&self, ex: &Example, _loss: Loss, grad: &mut Self) -> Result<f64> {
        self.mse_and_grad(ex, Some(grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(len: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn single_step_is_concat_of_two_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = LstmCell::random(3, 4, &mut rng);
        let b = LstmCell::random(3, 4, &mut rng);
        let x = seq(1, 3, 2);
        let out = blstm_layer_forward(&f, &b, &x).unwrap();
        let (hf, _) = super::super::lstm_step(&f, &x[0], &[0.0; 4], &[0.0; 4]).unwrap();
        let (hb, _) = super::super::lstm_step(&b, &x[0], &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(out[0], [hf, hb].concat());
    }

    #[test]
    fn reversal_swaps_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = LstmCell::random(2, 3, &mut rng);
        let b = LstmCell::random(2, 3, &mut rng);
        let xs = seq(6, 2, 9);
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let out = blstm_layer_forward(&f, &b, &xs).unwrap();
        let out_rev = blstm_layer_forward(&b, &f, &rev).unwrap();
        for t in 0..6 {
            let a = &out[t];
            let r = &out_rev[5 - t];
            assert_eq!(&a[..3], &r[3..]);
            assert_eq!(&a[3..], &r[..3]);
        }
    }

    #[test]
    fn backward_context_reaches_first_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = LstmCell::random(2, 3, &mut rng);
        let b = LstmCell::random(2, 3, &mut rng);
        let mut xs = seq(3, 2, 4);
        let before = blstm_layer_forward(&f, &b, &xs).unwrap();
        xs[2][0] += 0.5;
        let after = blstm_layer_forward(&f, &b, &xs).unwrap();
        assert_eq!(before[0][..3], after[0][..3]);
        assert_ne!(before[0][3..], after[0][3..]);
    }

    #[test]
    fn empty_and_mismatched_sequences() {
        let net = DblstmNetwork::zeros(39, 8, 2, 40);
        assert!(matches!(net.forward(&[]), Err(Error::EmptySequence)));
        assert!(matches!(net.forward(&[vec![0.0; 38]]), Err(Error::DimMismatch { expected: 39, got: 38 })));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = DblstmNetwork::zeros(39, 16, 4, 40);
        let out = net.forward(&seq(7, 39, 1)).unwrap();
        assert_eq!(out.len(), 7);
        assert!(out.iter().all(|r| r.len() == 40 && r.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn from_parts_checks_stacking() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l0 = BlstmLayer::new(LstmCell::random(3, 4, &mut rng), LstmCell::random(3, 4, &mut rng)).unwrap();
        let bad = BlstmLayer::new(LstmCell::random(7, 4, &mut rng), LstmCell::random(7, 4, &mut rng)).unwrap();
        let out = DenseLayer::zeros(8, 2, Activation::Identity);
        assert!(DblstmNetwork::from_parts(vec![l0.clone(), bad], out.clone()).is_err());
        assert!(DblstmNetwork::from_parts(vec![l0.clone()], DenseLayer::zeros(8, 2, Activation::Tanh)).is_err());
        assert!(DblstmNetwork::from_parts(vec![l0], out).is_ok());
    }
}
