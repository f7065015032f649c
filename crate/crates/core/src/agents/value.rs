//! State-value baseline for Monte-Carlo advantages.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::{adam_step, AdamConfig, AdamState, GradTape, MlpNet};
use crate::Scalar;

#[derive(Clone, Debug)]
pub struct ValueNet<T> {
    net: MlpNet<T>,
    optimizer: AdamState<T>,
    tape: GradTape<T>,
}

impl<T: Scalar> ValueNet<T> {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], lr: f64, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::from_net(MlpNet::new(&sizes, rng)?, lr)
    }

    pub fn from_net(net: MlpNet<T>, lr: f64) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::Shape {
                context: "value net output",
                expected: 1,
                actual: net.output_dim(),
            });
        }
        let optimizer = AdamState::new(&net, AdamConfig::with_lr(lr));
        let tape = GradTape::for_net(&net);
        Ok(ValueNet { net, optimizer, tape })
    }

    pub fn net(&self) -> &MlpNet<T> {
        &self.net
    }

    pub fn predict(&self, states: ArrayView2<T>) -> Result<Vec<T>> {
        Ok(self.net.forward_batch(states)?.column(0).to_vec())
    }

    /// One Adam step on `(1/B) sum (V(s) - G)^2`; returns the loss.
    pub fn fit(&mut self, states: ArrayView2<T>, returns: ArrayView1<T>) -> Result<T> {
        let n = states.nrows();
        if returns.len() != n {
            return Err(Error::Shape {
                context: "value targets",
                expected: n,
                actual: returns.len(),
            });
        }
        let v = self.net.forward_train(states, &mut self.tape)?;
        let inv = T::one() / T::from_usize(n.max(1)).unwrap();
        let mut grad = Array2::zeros((n, 1));
        let mut loss = T::zero();
        for i in 0..n {
            let e = v[[i, 0]] - returns[i];
            loss += e * e * inv;
            grad[[i, 0]] = T::lit(2.0) * e * inv;
        }
        if !loss.is_finite() {
            return Err(Error::non_finite("value loss"));
        }
        self.net.backward(&mut self.tape, grad.view())?;
        adam_step(&mut self.net, &self.tape, &mut self.optimizer)?;
        Ok(loss)
    }
}

/// `A_MC = G(s, a) - V(s)` for each row.
pub fn mc_advantage<T: Scalar>(value: &ValueNet<T>, returns_to_go: Option<ArrayView1<T>>, states: ArrayView2<T>) -> Result<Vec<f64>> {
    let g = returns_to_go.ok_or_else(|| Error::data("Monte-Carlo advantages need return-to-go annotations"))?;
    let v = value.predict(states)?;
    Ok(g.iter().zip(v).map(|(&g, v)| (g - v).to_f64_lossy()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Dense;
    use ndarray::array;

    #[test]
    fn ten_minus_seven() {
        let net = MlpNet::from_layers(vec![Dense {
            weight: array![[0.0]],
            bias: array![7.0],
        }])
        .unwrap();
        let v = ValueNet::from_net(net, 1e-3).unwrap();
        let a = mc_advantage(&v, Some(array![10.0].view()), array![[0.3]].view()).unwrap();
        assert_eq!(a, vec![3.0]);
        assert!(mc_advantage(&v, None, array![[0.3]].view()).is_err());
    }
}
