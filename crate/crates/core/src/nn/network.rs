use rand::{Rng, SeedableRng};

use super::layer::{ConvGeometry, LayerSpec, NetworkSpec};
use super::ops;
use super::{EngineRng, NnError, Scalar, Tensor};

/// Dropout behaviour for a forward pass.
pub enum Mode<'a> {
    /// Dropout is the identity.
    Eval,
    /// Dropout samples fresh masks from the given generator.
    Train(&'a mut EngineRng),
}

/// Per-layer parameter gradients plus the loss they were taken at.
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    pub loss: f64,
    pub layers: Vec<Vec<Tensor<S>>>,
}

/// A [`NetworkSpec`] together with its parameters.
///
/// `params[j]` is `[weight, bias]` for dense and conv layers and empty for
/// everything else.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<S = f32> {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    params: Vec<Vec<Tensor<S>>>,
    seed: u64,
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub(crate) fn init_layer<S: Scalar>(layer: &LayerSpec, input: &[usize], rng: &mut EngineRng) -> Vec<Tensor<S>> {
    let shapes = layer.param_shapes(input);
    if shapes.is_empty() {
        return Vec::new();
    }
    let (fan_in, fan_out) = layer.fans(input);
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let weight_len = shapes[0].iter().product();
    let weights = (0..weight_len).map(|_| S::of((2.0 * rng.random::<f64>() - 1.0) * limit)).collect();
    vec![Tensor::from_raw(shapes[0].clone(), weights), Tensor::zeros(shapes[1].clone())]
}

struct Trace<S> {
    /// `acts[j]` is the input activation of layer `j`; the final entry is
    /// the network output.
    acts: Vec<Vec<S>>,
    cols: Vec<Option<Vec<S>>>,
    argmax: Vec<Option<Vec<u32>>>,
    masks: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Network<S> {
    /// Builds a freshly initialized network; `(spec, seed)` fixes every bit.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        let mut rng = EngineRng::seed_from_u64(seed);
        let params = spec.layers.iter().zip(&shapes).map(|(layer, input)| init_layer(layer, input, &mut rng)).collect();
        Ok(Network { spec, shapes, params, seed })
    }

    /// Assembles a network from explicit parameters, checking every shape.
    pub fn from_params(spec: NetworkSpec, params: Vec<Vec<Tensor<S>>>, seed: u64) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(NnError::Parameters {
                layer: params.len().min(spec.layers.len()),
                expected: Vec::new(),
                actual: Vec::new(),
            });
        }
        for (j, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            let expected = layer.param_shapes(&shapes[j]);
            let actual: Vec<Vec<usize>> = p.iter().map(|t| t.shape().to_vec()).collect();
            if expected != actual {
                return Err(NnError::Parameters { layer: j, expected, actual });
            }
            if !p.iter().all(Tensor::is_finite) {
                return Err(NnError::NonFinite("parameters"));
            }
        }
        Ok(Network { spec, shapes, params, seed })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Activation shapes (see [`NetworkSpec::shapes`]).
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn params(&self) -> &[Vec<Tensor<S>>] {
        &self.params
    }

    pub fn layer_params(&self, layer: usize) -> &[Tensor<S>] {
        &self.params[layer]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().map(|s| s[0]).unwrap_or(0)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    /// Same network in another precision.
    pub fn cast<T: Scalar>(&self) -> Network<T> {
        Network {
            spec: self.spec.clone(),
            shapes: self.shapes.clone(),
            params: self.params.iter().map(|p| p.iter().map(Tensor::cast).collect()).collect(),
            seed: self.seed,
        }
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Vec<Tensor<S>>] {
        &mut self.params
    }

    fn check_batch(&self, batch: &Tensor<S>) -> Result<usize, NnError> {
        let shape = batch.shape();
        if shape.len() != self.spec.input_shape.len() + 1 || shape[1..] != self.spec.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(0)];
            expected.extend_from_slice(&self.spec.input_shape);
            return Err(NnError::InputShape { expected, actual: shape.to_vec() });
        }
        Ok(shape[0])
    }

    /// Class probabilities, one row per example.
    pub fn forward(&self, batch: &Tensor<S>, mode: Mode<'_>) -> Result<Tensor<S>, NnError> {
        let n = self.check_batch(batch)?;
        let trace = self.run(batch.data(), n, mode, false, self.spec.layers.len());
        let out = trace.acts.into_iter().last().unwrap_or_default();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("network output"));
        }
        Ok(Tensor::from_raw(vec![n, self.classes()], out))
    }

    /// Output of the first `upto` layers in eval mode, with its shape.
    pub fn activations(&self, batch: &Tensor<S>, upto: usize) -> Result<Tensor<S>, NnError> {
        let n = self.check_batch(batch)?;
        let upto = upto.min(self.spec.layers.len());
        let trace = self.run(batch.data(), n, Mode::Eval, false, upto);
        let mut shape = vec![n];
        shape.extend_from_slice(&self.shapes[upto]);
        Ok(Tensor::from_raw(shape, trace.acts.into_iter().last().unwrap_or_default()))
    }

    /// Gradients of the mean cross-entropy loss w.r.t. every parameter.
    pub fn grad(&self, batch: &Tensor<S>, labels: &[usize], mode: Mode<'_>) -> Result<Gradients<S>, NnError> {
        let n = self.check_batch(batch)?;
        if labels.len() != n {
            return Err(NnError::InputShape { expected: vec![n], actual: vec![labels.len()] });
        }
        let classes = self.classes();
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(NnError::Label { label, classes });
        }
        let last = self.spec.layers.len() - 1;
        let trace = self.run(batch.data(), n, mode, true, last);
        let (loss, dlogits) = ops::softmax_cross_entropy(&trace.acts[last], labels, classes);
        if !loss.is_finite() {
            return Err(NnError::NonFinite("loss"));
        }
        let layers = self.backward(trace, dlogits, n);
        Ok(Gradients { loss, layers })
    }

    /// Runs layers `0..upto`. With `keep` set, every intermediate activation
    /// and auxiliary buffer needed by [`Self::backward`] is retained.
    fn run(&self, input: &[S], n: usize, mut mode: Mode<'_>, keep: bool, upto: usize) -> Trace<S> {
        let layers = upto;
        let mut trace = Trace {
            acts: Vec::with_capacity(layers + 1),
            cols: (0..layers).map(|_| None).collect(),
            argmax: (0..layers).map(|_| None).collect(),
            masks: (0..layers).map(|_| None).collect(),
        };
        let mut current = input.to_vec();
        for j in 0..layers {
            let layer = &self.spec.layers[j];
            let in_shape = &self.shapes[j];
            let p = &self.params[j];
            let next = match *layer {
                LayerSpec::Dense { activation, .. } => {
                    ops::dense_forward(&current, n, p[0].data(), p[1].data(), activation)
                }
                LayerSpec::Conv2d { kernel, stride, padding, activation, .. } => {
                    let g = ConvGeometry::new(in_shape, kernel, stride, padding).expect("validated spec");
                    let (y, cols) = ops::conv_forward(&current, n, &g, p[0].data(), p[1].data(), activation, keep);
                    trace.cols[j] = cols;
                    y
                }
                LayerSpec::MaxPool2d { window } => {
                    let (y, idx) = ops::maxpool_forward(&current, n, in_shape, window);
                    if keep {
                        trace.argmax[j] = Some(idx);
                    }
                    y
                }
                LayerSpec::Dropout { rate } => match &mut mode {
                    Mode::Train(rng) if rate > 0.0 => {
                        let mask: Vec<S> = ops::dropout_mask(current.len(), rate, rng);
                        let y = current.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
                        if keep {
                            trace.masks[j] = Some(mask);
                        }
                        y
                    }
                    _ => current.clone(),
                },
                LayerSpec::Softmax => ops::softmax_rows(&current, in_shape[0]),
                LayerSpec::Flatten => current.clone(),
                LayerSpec::Relu => {
                    let mut y = current.clone();
                    ops::relu_in_place(&mut y);
                    y
                }
            };
            if keep {
                trace.acts.push(std::mem::replace(&mut current, next));
            } else {
                current = next;
            }
        }
        trace.acts.push(current);
        trace
    }

    /// Backpropagates `grad` (w.r.t. the output of the last traced layer).
    fn backward(&self, mut trace: Trace<S>, mut grad: Vec<S>, n: usize) -> Vec<Vec<Tensor<S>>> {
        let traced = trace.acts.len() - 1;
        let mut out: Vec<Vec<Tensor<S>>> = vec![Vec::new(); self.spec.layers.len()];
        for j in (0..traced).rev() {
            let need_dx = j > 0;
            let layer = &self.spec.layers[j];
            let p = &self.params[j];
            let x = &trace.acts[j];
            let y = &trace.acts[j + 1];
            grad = match *layer {
                LayerSpec::Dense { activation, .. } => {
                    let (dx, dw, db) = ops::dense_backward(x, y, grad, n, p[0].data(), activation, need_dx);
                    out[j] =
                        vec![Tensor::from_raw(p[0].shape().to_vec(), dw), Tensor::from_raw(p[1].shape().to_vec(), db)];
                    dx.unwrap_or_default()
                }
                LayerSpec::Conv2d { kernel, stride, padding, activation, .. } => {
                    let g = ConvGeometry::new(&self.shapes[j], kernel, stride, padding).expect("validated spec");
                    let cols = trace.cols[j].take().expect("conv columns kept");
                    let (dx, dw, db) = ops::conv_backward(&cols, y, grad, n, &g, p[0].data(), activation, need_dx);
                    out[j] =
                        vec![Tensor::from_raw(p[0].shape().to_vec(), dw), Tensor::from_raw(p[1].shape().to_vec(), db)];
                    dx.unwrap_or_default()
                }
                LayerSpec::MaxPool2d { .. } => {
                    let idx = trace.argmax[j].take().expect("pool indices kept");
                    ops::maxpool_backward(&idx, &grad, n, self.shapes[j].iter().product())
                }
                LayerSpec::Dropout { .. } => match trace.masks[j].take() {
                    Some(mask) => grad.iter().zip(&mask).map(|(&g, &m)| g * m).collect(),
                    None => grad,
                },
                LayerSpec::Relu => {
                    ops::relu_backward(y, &mut grad);
                    grad
                }
                LayerSpec::Flatten => grad,
                LayerSpec::Softmax => unreachable!("softmax is folded into the loss"),
            };
            trace.acts.truncate(j + 1);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Activation;

    fn dense_spec() -> NetworkSpec {
        NetworkSpec::new(vec![4], vec![LayerSpec::dense_relu(5), LayerSpec::dense(3), LayerSpec::Softmax]).unwrap()
    }

    #[test]
    fn dense_parameter_shapes() {
        let net = Network::<f32>::build(dense_spec(), 7).unwrap();
        let shapes: Vec<Vec<Vec<usize>>> =
            net.params().iter().map(|p| p.iter().map(|t| t.shape().to_vec()).collect()).collect();
        assert_eq!(shapes, vec![vec![vec![5, 4], vec![5]], vec![vec![3, 5], vec![3]], vec![]]);
    }

    #[test]
    fn same_seed_same_bits() {
        let a = Network::<f32>::build(dense_spec(), 7).unwrap();
        let b = Network::<f32>::build(dense_spec(), 7).unwrap();
        let c = Network::<f32>::build(dense_spec(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn conv_weight_shape() {
        let spec = NetworkSpec::new(
            vec![1, 28, 28],
            vec![LayerSpec::conv(64, 3), LayerSpec::Flatten, LayerSpec::dense(10), LayerSpec::Softmax],
        )
        .unwrap();
        let net = Network::<f32>::build(spec, 1).unwrap();
        assert_eq!(net.layer_params(0)[0].shape(), &[64, 1, 3, 3]);
        assert_eq!(net.layer_params(0)[1].shape(), &[64]);
    }

    #[test]
    fn init_within_bounds_and_zero_bias() {
        let net = Network::<f64>::build(dense_spec(), 3).unwrap();
        let limit = (6.0f64 / 9.0).sqrt();
        assert!(net.layer_params(0)[0].data().iter().all(|w| w.abs() <= limit));
        assert!(net.layer_params(0)[1].data().iter().all(|b| *b == 0.0));
    }

    #[test]
    fn identity_weights_pick_hot_class() {
        // logits = I x + 0, so the argmax is the hot coordinate.
        let spec = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3), LayerSpec::Softmax]).unwrap();
        let eye = Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let net = Network::from_params(spec, vec![vec![eye, Tensor::zeros(vec![3])], vec![]], 0).unwrap();
        let x = Tensor::new(vec![3, 3], vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let p = net.forward(&x, Mode::Eval).unwrap();
        // softmax([1, 0, 0]) = [e, 1, 1] / (e + 2)
        let e = std::f64::consts::E;
        let hot = e / (e + 2.0);
        for (row, hot_idx) in [1usize, 2, 0].iter().enumerate() {
            let r = p.row(row);
            assert!((r[*hot_idx] - hot).abs() < 1e-12);
            let argmax = (0..3).max_by(|&a, &b| r[a].partial_cmp(&r[b]).unwrap()).unwrap();
            assert_eq!(argmax, *hot_idx);
        }
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let net = Network::<f32>::build(dense_spec(), 1).unwrap();
        let x = Tensor::zeros(vec![2, 5]);
        assert!(matches!(net.forward(&x, Mode::Eval), Err(NnError::InputShape { .. })));
    }

    #[test]
    fn rejects_out_of_range_label() {
        let net = Network::<f32>::build(dense_spec(), 1).unwrap();
        let x = Tensor::zeros(vec![1, 4]);
        assert_eq!(net.grad(&x, &[3], Mode::Eval).unwrap_err(), NnError::Label { label: 3, classes: 3 });
    }

    #[test]
    fn zero_dropout_matches_eval() {
        let spec = NetworkSpec::new(
            vec![4],
            vec![
                LayerSpec::Dense { units: 6, activation: Activation::Relu },
                LayerSpec::Dropout { rate: 0.0 },
                LayerSpec::dense(2),
                LayerSpec::Softmax,
            ],
        )
        .unwrap();
        let net = Network::<f32>::build(spec, 2).unwrap();
        let x = Tensor::new(vec![2, 4], vec![0.1, -0.3, 0.5, 0.9, 1.0, 2.0, -1.0, 0.0]).unwrap();
        let mut rng = EngineRng::seed_from_u64(9);
        let train = net.forward(&x, Mode::Train(&mut rng)).unwrap();
        let eval = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn duplicated_example_has_same_gradient() {
        let net = Network::<f64>::build(dense_spec(), 5).unwrap();
        let one = Tensor::new(vec![1, 4], vec![0.3, -0.2, 0.8, 0.1]).unwrap();
        let two = Tensor::new(vec![2, 4], vec![0.3, -0.2, 0.8, 0.1, 0.3, -0.2, 0.8, 0.1]).unwrap();
        let g1 = net.grad(&one, &[2], Mode::Eval).unwrap();
        let g2 = net.grad(&two, &[2, 2], Mode::Eval).unwrap();
        assert!((g1.loss - g2.loss).abs() < 1e-15);
        for (a, b) in g1.layers.iter().flatten().zip(g2.layers.iter().flatten()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_weight_softmax_bias_gradient_sums_to_zero() {
        // With all-zero parameters every class has probability 1/K, so the
        // bias gradient is (1/K - freq_k); balanced labels make each entry 0.
        let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(3), LayerSpec::Softmax]).unwrap();
        let params = vec![vec![Tensor::zeros(vec![3, 2]), Tensor::zeros(vec![3])], vec![]];
        let net = Network::<f64>::from_params(spec, params, 0).unwrap();
        let x = Tensor::new(vec![3, 2], vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let g = net.grad(&x, &[0, 1, 2], Mode::Eval).unwrap();
        let db = g.layers[0][1].data();
        assert!(db.iter().all(|v| v.abs() < 1e-15), "{db:?}");
        assert!(db.iter().sum::<f64>().abs() < 1e-15);
        assert!((g.loss - 3f64.ln()).abs() < 1e-12);
    }
}
