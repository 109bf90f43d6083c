use rand::Rng;

use super::{axpy, dot, sigmoid};
use crate::error::{Error, Result};

/// LSTM cell without peepholes.
///
/// Gate pre-activations are `W [x; h_prev] + b` with the four gates stacked
/// row-wise in the order input, forget, output, candidate. `W` is
/// `4H × (I + H)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub(crate) input: usize,
    pub(crate) hidden: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self { input, hidden, weights: vec![0.0; 4 * hidden * (input + hidden)], bias: vec![0.0; 4 * hidden] }
    }

    /// Weights uniform in ±1/sqrt(I + H); forget-gate bias 1, other biases 0.
    pub fn random(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let fan_in = input + hidden;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights = (0..4 * hidden * fan_in).map(|_| rng.random_range(-bound..bound)).collect();
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        Self { input, hidden, weights, bias }
    }

    pub fn from_parts(input: usize, hidden: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != 4 * hidden * (input + hidden) {
            return Err(Error::DimMismatch { expected: 4 * hidden * (input + hidden), got: weights.len() });
        }
        if bias.len() != 4 * hidden {
            return Err(Error::DimMismatch { expected: 4 * hidden, got: bias.len() });
        }
        Ok(Self { input, hidden, weights, bias })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn width(&self) -> usize {
        self.input + self.hidden
    }

    /// Writes activated gates `[i, f, o, g]` for the concatenated input `xh`.
    fn gates(&self, xh: &[f64], gates: &mut [f64]) {
        let h = self.hidden;
        for ((g, row), b) in gates.iter_mut().zip(self.weights.chunks_exact(self.width())).zip(&self.bias) {
            *g = b + dot(row, xh);
        }
        gates[..3 * h].iter_mut().for_each(|v| *v = sigmoid(*v));
        gates[3 * h..].iter_mut().for_each(|v| *v = v.tanh());
    }

    /// Runs the cell over a sequence from zero state, recording what the
    /// backward pass needs.
    pub(crate) fn run(&self, xs: &[&[f64]]) -> LstmTrace {
        let (h, w) = (self.hidden, self.width());
        let steps = xs.len();
        let mut trace = LstmTrace {
            steps,
            xh: vec![0.0; steps * w],
            gates: vec![0.0; steps * 4 * h],
            c: vec![0.0; (steps + 1) * h],
            tanh_c: vec![0.0; steps * h],
            h: vec![0.0; steps * h],
        };
        for (t, x) in xs.iter().enumerate() {
            let xh = &mut trace.xh[t * w..(t + 1) * w];
            xh[..self.input].copy_from_slice(x);
            if t > 0 {
                xh[self.input..].copy_from_slice(&trace.h[(t - 1) * h..t * h]);
            }
            let gates = &mut trace.gates[t * 4 * h..(t + 1) * 4 * h];
            self.gates(xh, gates);
            for j in 0..h {
                let (i_g, f_g, o_g, g_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let c = f_g * trace.c[t * h + j] + i_g * g_g;
                trace.c[(t + 1) * h + j] = c;
                let tc = c.tanh();
                trace.tanh_c[t * h + j] = tc;
                trace.h[t * h + j] = o_g * tc;
            }
        }
        trace
    }

    /// Backpropagation through time. `dh` holds dL/dh_t for every step (from
    /// the layer above); returns dL/dx_t flattened.
    pub(crate) fn backward(&self, trace: &LstmTrace, dh: &[f64], grad: &mut LstmCell) -> Vec<f64> {
        let (h, w, inp) = (self.hidden, self.width(), self.input);
        let steps = trace.steps;
        let mut dx = vec![0.0; steps * inp];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let mut dxh = vec![0.0; w];
        for t in (0..steps).rev() {
            let gates = &trace.gates[t * 4 * h..(t + 1) * 4 * h];
            for j in 0..h {
                let (i_g, f_g, o_g, g_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = trace.tanh_c[t * h + j];
                let dhj = dh[t * h + j] + dh_next[j];
                let d_o = dhj * tc;
                let dc = dhj * o_g * (1.0 - tc * tc) + dc_next[j];
                let d_i = dc * g_g;
                let d_g = dc * i_g;
                let d_f = dc * trace.c[t * h + j];
                dc_next[j] = dc * f_g;
                dz[j] = d_i * i_g * (1.0 - i_g);
                dz[h + j] = d_f * f_g * (1.0 - f_g);
                dz[2 * h + j] = d_o * o_g * (1.0 - o_g);
                dz[3 * h + j] = d_g * (1.0 - g_g * g_g);
            }
            let xh = &trace.xh[t * w..(t + 1) * w];
            dxh.iter_mut().for_each(|v| *v = 0.0);
            for (r, &d) in dz.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, xh, &mut grad.weights[r * w..(r + 1) * w]);
                    axpy(d, &self.weights[r * w..(r + 1) * w], &mut dxh);
                }
            }
            axpy(1.0, &dz, &mut grad.bias);
            dx[t * inp..(t + 1) * inp].copy_from_slice(&dxh[..inp]);
            dh_next.copy_from_slice(&dxh[inp..]);
        }
        dx
    }

    pub(crate) fn params(&self) -> [&[f64]; 2] {
        [&self.weights, &self.bias]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weights, &mut self.bias]
    }
}

/// Forward-pass record of one cell over one sequence.
pub(crate) struct LstmTrace {
    steps: usize,
    /// `[x_t; h_{t-1}]` per step.
    xh: Vec<f64>,
    /// Activated gates per step.
    gates: Vec<f64>,
    /// Cell states, `c[0]` is the zero initial state.
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_step(cell: &LstmCell, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != cell.input {
        return Err(Error::DimMismatch { expected: cell.input, got: x.len() });
    }
    for s in [h_prev, c_prev] {
        if s.len() != cell.hidden {
            return Err(Error::DimMismatch { expected: cell.hidden, got: s.len() });
        }
    }
    let h = cell.hidden;
    let xh: Vec<f64> = x.iter().chain(h_prev).copied().collect();
    let mut gates = vec![0.0; 4 * h];
    cell.gates(&xh, &mut gates);
    let c: Vec<f64> = (0..h).map(|j| gates[h + j] * c_prev[j] + gates[j] * gates[3 * h + j]).collect();
    let h_t = (0..h).map(|j| gates[2 * h + j] * c[j].tanh()).collect();
    Ok((h_t, c))
}
