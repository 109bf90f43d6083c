use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DblstmNetwork, DnnClassifier, Example, Loss, Trainable};
use crate::error::Result;

const STEP: f64 = 1e-5;

/// Compares the analytic gradient with central differences on every
/// parameter and returns `max |g_a - g_n| / max(|g_a|, |g_n|, 1e-8)`.
pub fn grad_check<M: Trainable>(model: &M, ex: &Example, loss: Loss) -> Result<f64> {
    model.validate(ex, loss)?;
    let mut analytic = model.zeros_like();
    model.accumulate_gradient(ex, loss, &mut analytic)?;
    let analytic: Vec<f64> = analytic.params().iter().flat_map(|p| p.iter().copied()).collect();

    let mut probe = model.clone();
    let slice_lens: Vec<usize> = probe.params().iter().map(|p| p.len()).collect();
    let mut worst = 0.0f64;
    let mut flat = 0;
    for (s, &len) in slice_lens.iter().enumerate() {
        for i in 0..len {
            let original = probe.params()[s][i];
            probe.params_mut()[s][i] = original + STEP;
            let plus = probe.loss(ex, loss)?;
            probe.params_mut()[s][i] = original - STEP;
            let minus = probe.loss(ex, loss)?;
            probe.params_mut()[s][i] = original;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic[flat];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
            flat += 1;
        }
    }
    Ok(worst)
}

/// Worst relative errors of the standard gradient-check suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSummary {
    pub seeds: usize,
    pub dense_softmax: f64,
    pub single_blstm: f64,
    pub two_layer_dblstm: f64,
}

impl GradCheckSummary {
    pub fn max_error(&self) -> f64 {
        self.dense_softmax.max(self.single_blstm).max(self.two_layer_dblstm)
    }
}

fn random_sequence(rng: &mut ChaCha8Rng, frames: usize, dims: usize) -> Vec<Vec<f64>> {
    (0..frames).map(|_| (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Checks a dense+softmax classifier, a single BLSTM layer and a two-layer
/// DBLSTM (each well under 1e4 parameters) for seeds `0..seeds`.
pub fn grad_check_suite(seeds: usize) -> Result<GradCheckSummary> {
    let mut summary = GradCheckSummary { seeds, dense_softmax: 0.0, single_blstm: 0.0, two_layer_dblstm: 0.0 };
    for seed in 0..seeds as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let clf = DnnClassifier::random(6, &[8, 7], 4, &mut rng);
        let xs = random_sequence(&mut rng, 5, 6);
        let labels = (0..5).map(|_| rng.random_range(0..4)).collect();
        let err = grad_check(&clf, &Example::classes(xs, labels), Loss::CrossEntropy)?;
        summary.dense_softmax = summary.dense_softmax.max(err);

        for (layers, slot) in [(1, &mut summary.single_blstm), (2, &mut summary.two_layer_dblstm)] {
            let net = DblstmNetwork::random(3, 4, layers, 2, &mut rng);
            let xs = random_sequence(&mut rng, 6, 3);
            // Targets sit near the current output: with O(1) residuals the
            // rounding of the loss itself, about ulp(L) / 2h, swamps
            // structurally tiny gradient entries.
            let ys = net
                .forward(&xs)?
                .into_iter()
                .map(|y| y.into_iter().map(|v| v + rng.random_range(-0.1..0.1)).collect())
                .collect();
            let err = grad_check(&net, &Example::regression(xs, ys), Loss::Mse)?;
            *slot = slot.max(err);
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_few_seeds() {
        let s = grad_check_suite(2).unwrap();
        assert!(s.max_error() < 1e-4, "{s:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // A model whose analytic gradient is deliberately off by a factor.
        #[derive(Clone)]
        struct Scaled(Vec<f64>);
        impl Trainable for Scaled {
            fn zeros_like(&self) -> Self {
                Scaled(vec![0.0; self.0.len()])
            }
            fn params(&self) -> Vec<&[f64]> {
                vec![&self.0]
            }
            fn params_mut(&mut self) -> Vec<&mut [f64]> {
                vec![&mut self.0]
            }
            fn validate(&self, _: &Example, _: Loss) -> Result<()> {
                Ok(())
            }
            fn loss(&self, _: &Example, _: Loss) -> Result<f64> {
                Ok(self.0.iter().map(|p| p * p).sum())
            }
            fn accumulate_gradient(&self, ex: &Example, l: Loss, g: &mut Self) -> Result<f64> {
                for (gi, p) in g.0.iter_mut().zip(&self.0) {
                    *gi += 3.0 * p;
                }
                self.loss(ex, l)
            }
        }
        let ex = Example::regression(vec![vec![0.0]], vec![vec![0.0]]);
        assert!(grad_check(&Scaled(vec![0.5, -1.0]), &ex, Loss::Mse).unwrap() > 0.3);
    }
}
