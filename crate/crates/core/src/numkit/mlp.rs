use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One affine layer. `weight` is stored `(fan_in, fan_out)` so a batch
/// forward pass is `x.dot(weight) + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn fill(&mut self, value: T) {
        self.weight.fill(value);
        self.bias.fill(value);
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|x| x.is_finite())
    }
}

/// Feed-forward network: rectifier on hidden layers, identity on the output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpNet<T> {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense<T>>,
}

/// Gradient accumulators plus the intermediates cached by the last
/// training-mode forward pass.
#[derive(Clone, Debug)]
pub struct GradTape<T> {
    grads: Vec<Dense<T>>,
    cache: Option<Vec<Array2<T>>>,
    populated: bool,
}

impl<T: Scalar> GradTape<T> {
    pub fn for_net(net: &MlpNet<T>) -> Self {
        GradTape {
            grads: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.fan_in(), l.fan_out()))
                .collect(),
            cache: None,
            populated: false,
        }
    }

    pub fn grads(&self) -> &[Dense<T>] {
        &self.grads
    }

    /// True once a backward pass has written gradients.
    pub fn is_populated(&self) -> bool {
        self.populated
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
        self.populated = false;
    }

    pub fn to_flat(&self) -> Vec<T> {
        flatten(&self.grads)
    }

    pub fn has_forward(&self) -> bool {
        self.cache.is_some()
    }
}

fn flatten<T: Scalar>(layers: &[Dense<T>]) -> Vec<T> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

fn relu_inplace<T: Scalar>(x: &mut Array2<T>) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
}

impl<T: Scalar> MlpNet<T> {
    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// `fan_in` inputs is drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer.weight.mapv_inplace(|_| T::lit(dist.sample(rng)));
            layer.bias.mapv_inplace(|_| T::lit(dist.sample(rng)));
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config(format!(
                "a network needs at least input and output widths, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::config(format!(
                "layer widths must be positive, got {layer_sizes:?}"
            )));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(MlpNet {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    /// Builds a network from explicit layers, checking that consecutive widths chain.
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::config("a network needs at least one layer"))?;
        let mut sizes = vec![first.fan_in()];
        for layer in &layers {
            let expected = *sizes.last().unwrap();
            if layer.fan_in() != expected {
                return Err(Error::Shape {
                    context: "MlpNet::from_layers",
                    expected,
                    actual: layer.fan_in(),
                });
            }
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::Shape {
                    context: "MlpNet::from_layers bias",
                    expected: layer.fan_out(),
                    actual: layer.bias.len(),
                });
            }
            sizes.push(layer.fan_out());
        }
        Ok(MlpNet {
            layer_sizes: sizes,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense<T> {
        self.layers.last_mut().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn to_flat(&self) -> Vec<T> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape {
                context: "MlpNet::set_flat",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let x = ArrayView1::from(input);
        let x = x.insert_axis(Axis(0));
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut h = self.layers[0].affine(x);
        for layer in &self.layers[1..] {
            relu_inplace(&mut h);
            h = layer.affine(h.view());
        }
        Ok(h)
    }

    /// Forward pass that records the intermediates `backward` needs.
    pub fn forward_train(&self, x: ArrayView2<T>, tape: &mut GradTape<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.affine(h.view());
            inputs.push(h);
            if i + 1 < self.layers.len() {
                relu_inplace(&mut out);
            }
            h = out;
        }
        tape.cache = Some(inputs);
        Ok(h)
    }

    /// Writes `d loss / d parameter` into `tape` given `d loss / d output` for
    /// every row of the batch passed to the preceding `forward_train`, and
    /// returns `d loss / d input`.
    ///
    /// Gradients are overwritten, not accumulated; the cached intermediates
    /// are consumed.
    pub fn backward(&self, tape: &mut GradTape<T>, output_grad: ArrayView2<T>) -> Result<Array2<T>> {
        let inputs = tape
            .cache
            .take()
            .ok_or_else(|| Error::usage("backward called without a preceding forward_train"))?;
        if output_grad.ncols() != self.output_dim() {
            return Err(Error::Shape {
                context: "MlpNet::backward output_grad width",
                expected: self.output_dim(),
                actual: output_grad.ncols(),
            });
        }
        if output_grad.nrows() != inputs[0].nrows() {
            return Err(Error::Shape {
                context: "MlpNet::backward batch size",
                expected: inputs[0].nrows(),
                actual: output_grad.nrows(),
            });
        }
        if tape.grads.len() != self.layers.len() {
            return Err(Error::usage("gradient tape was built for a different network"));
        }

        let mut delta = output_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &inputs[i];
            let grad = &mut tape.grads[i];
            grad.weight = input.t().dot(&delta);
            grad.bias = delta.sum_axis(Axis(0));
            let mut prev = delta.dot(&layer.weight.t());
            if i > 0 {
                // relu'(pre) is 1 exactly where the cached post-activation is positive
                ndarray::Zip::from(&mut prev).and(input).for_each(|d, &a| {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                });
            }
            delta = prev;
        }
        tape.populated = true;
        Ok(delta)
    }

    /// `self <- (1 - tau) * self + tau * online`.
    pub fn polyak_from(&mut self, online: &MlpNet<T>, tau: T) -> Result<()> {
        if online.layer_sizes != self.layer_sizes {
            return Err(Error::usage("polyak update between networks of different shapes"));
        }
        let keep = T::one() - tau;
        for (dst, src) in self.layers.iter_mut().zip(&online.layers) {
            ndarray::Zip::from(&mut dst.weight)
                .and(&src.weight)
                .for_each(|d, &s| *d = keep * *d + tau * s);
            ndarray::Zip::from(&mut dst.bias)
                .and(&src.bias)
                .for_each(|d, &s| *d = keep * *d + tau * s);
        }
        Ok(())
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::Shape {
                context: "MlpNet input width",
                expected: self.input_dim(),
                actual: width,
            });
        }
        Ok(())
    }
}

impl<T: Scalar> Dense<T> {
    fn affine(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut out = x.dot(&self.weight);
        out += &self.bias;
        out
    }
}
