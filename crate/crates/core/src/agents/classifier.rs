//! Ensemble of sigmoid classifiers predicting whether `(s, a)` has positive
//! advantage. Approval requires a confident and unanimous ensemble.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::filter::ClassifierConfig;
use crate::error::{Error, Result};
use crate::numkit::{adam_step, AdamConfig, AdamState, GradTape, MlpNet};
use crate::Scalar;

#[derive(Clone, Debug)]
pub struct AdvantageClassifier<T> {
    members: Vec<MlpNet<T>>,
    optimizers: Vec<AdamState<T>>,
    tapes: Vec<GradTape<T>>,
    config: ClassifierConfig,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl<T: Scalar> AdvantageClassifier<T> {
    /// Members share an architecture but not their hidden-layer weights; the
    /// output layer starts at zero so every member initially predicts 0.5.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, config: ClassifierConfig, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let mut members = Vec::with_capacity(config.ensemble_size);
        for _ in 0..config.ensemble_size {
            let mut net = MlpNet::new(&sizes, rng)?;
            let out = net.output_layer_mut();
            out.weight.fill(T::zero());
            out.bias.fill(T::zero());
            members.push(net);
        }
        let adam = AdamConfig::with_lr(config.lr);
        let optimizers = members.iter().map(|m| AdamState::new(m, adam)).collect();
        let tapes = members.iter().map(GradTape::for_net).collect();
        Ok(AdvantageClassifier {
            members,
            optimizers,
            tapes,
            config,
        })
    }

    pub fn members(&self) -> &[MlpNet<T>] {
        &self.members
    }

    /// Per-row ensemble mean and population std of the predicted probability.
    pub fn confidence(&self, inputs: ArrayView2<T>) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = inputs.nrows();
        let k = self.members.len() as f64;
        let mut probs = vec![Vec::with_capacity(self.members.len()); n];
        for m in &self.members {
            let z = m.forward_batch(inputs)?;
            for (i, row) in probs.iter_mut().enumerate() {
                row.push(sigmoid(z[[i, 0]].to_f64_lossy()));
            }
        }
        let mut means = Vec::with_capacity(n);
        let mut stds = Vec::with_capacity(n);
        for row in probs {
            let mean = row.iter().sum::<f64>() / k;
            let var = row.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / k;
            means.push(mean);
            stds.push(var.sqrt());
        }
        Ok((means, stds))
    }

    pub fn approve(&self, inputs: ArrayView2<T>) -> Result<Vec<bool>> {
        let (means, stds) = self.confidence(inputs)?;
        Ok(means
            .iter()
            .zip(&stds)
            .map(|(&m, &s)| m > self.config.confidence_threshold && s < self.config.max_disagreement)
            .collect())
    }

    /// One Adam step per member on binary cross-entropy; returns the mean loss.
    pub fn train(&mut self, inputs: ArrayView2<T>, labels: &[bool]) -> Result<f64> {
        let n = inputs.nrows();
        if labels.len() != n {
            return Err(Error::Shape {
                context: "classifier labels",
                expected: n,
                actual: labels.len(),
            });
        }
        if n == 0 {
            return Err(Error::usage("empty classifier batch"));
        }
        let mut total = 0.0;
        for ((m, opt), tape) in self.members.iter_mut().zip(&mut self.optimizers).zip(&mut self.tapes) {
            let z = m.forward_train(inputs, tape)?;
            let mut grad = Array2::zeros((n, 1));
            let mut loss = 0.0;
            for i in 0..n {
                let zi = z[[i, 0]].to_f64_lossy();
                let y = if labels[i] { 1.0 } else { 0.0 };
                // stable BCE with logits
                loss += zi.max(0.0) - zi * y + (-zi.abs()).exp().ln_1p();
                grad[[i, 0]] = T::lit((sigmoid(zi) - y) / n as f64);
            }
            if !loss.is_finite() {
                return Err(Error::non_finite("classifier loss"));
            }
            m.backward(tape, grad.view())?;
            adam_step(m, tape, opt)?;
            total += loss / n as f64;
        }
        Ok(total / self.members.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> ClassifierConfig {
        ClassifierConfig {
            hidden: vec![16],
            lr: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn untrained_ensemble_is_exactly_undecided() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = AdvantageClassifier::<f64>::new(2, config(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 2), |(i, j)| i as f64 - j as f64);
        let (m, s) = c.confidence(x.view()).unwrap();
        assert!(m.iter().all(|&p| p == 0.5));
        assert!(s.iter().all(|&d| d == 0.0));
        let strict = ClassifierConfig {
            confidence_threshold: 0.7,
            ..config()
        };
        let c = AdvantageClassifier::<f64>::new(2, strict, &mut rng).unwrap();
        assert!(c.approve(x.view()).unwrap().iter().all(|&a| !a));
    }

    #[test]
    fn learns_a_separable_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = AdvantageClassifier::<f64>::new(2, config(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((256, 2), |_| rng.random_range(-1.0..1.0));
        let labels: Vec<bool> = x.rows().into_iter().map(|r| r[0] + r[1] > 0.0).collect();
        for _ in 0..1500 {
            c.train(x.view(), &labels).unwrap();
        }
        let (m, _) = c.confidence(x.view()).unwrap();
        let correct = m.iter().zip(&labels).filter(|(&p, &y)| (p > 0.5) == y).count();
        assert!(correct as f64 / 256.0 >= 0.97, "{correct}");
    }
}
