use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{Layer, LayerSpec};
use super::tensor::{Scalar, Tensor};
use super::NnError;

/// A sequential stack of layers with a fixed per-example input shape.
#[derive(Clone, Debug)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    pub layers: Vec<Layer<T>>,
}

/// Checks that `specs` chain together starting from `input_shape` and
/// returns the final per-example output shape.
pub fn validate_specs(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Vec<usize>, NnError> {
    specs
        .iter()
        .try_fold(input_shape.to_vec(), |shape, spec| spec.output_shape(&shape))
}

impl<T: Scalar> Network<T> {
    pub fn new(input_shape: Vec<usize>, specs: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let output_shape = validate_specs(&input_shape, &specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs.into_iter().map(|s| Layer::init(s, &mut rng)).collect();
        Ok(Self {
            input_shape,
            output_shape,
            layers,
        })
    }

    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<Layer<T>>) -> Result<Self, NnError> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec.clone()).collect();
        let output_shape = validate_specs(&input_shape, &specs)?;
        for l in &layers {
            if (l.weight.len(), l.bias.len()) != l.spec.param_counts() {
                return Err(NnError::Shape(format!("parameter count mismatch for {}", l.spec)));
            }
        }
        Ok(Self {
            input_shape,
            output_shape,
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        if x.shape().len() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(NnError::Shape(format!(
                "network expects examples of shape {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training forward pass; records activations for [`Self::backward`].
    pub fn forward(&mut self, x: Tensor<T>, mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor<T>, NnError> {
        self.check_input(&x)?;
        let mut h = x;
        for layer in &mut self.layers {
            h = layer.forward(h, rng.as_deref_mut())?;
        }
        Ok(h)
    }

    /// Inference forward pass: no caching, phase shuffle disabled.
    pub fn infer(&self, x: Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(&x)?;
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward_uncached(h, None)?.0;
        }
        Ok(h)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut g = dy.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Like [`Self::backward`] but skips the gradient with respect to the
    /// network input, which callers updating only parameters do not need.
    pub fn backward_params(&mut self, dy: &Tensor<T>) -> Result<(), NnError> {
        let mut g = dy.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            if i == 0 {
                if layer.has_params() {
                    layer.accumulate_cached_param_grad(&g)?;
                }
                break;
            }
            g = layer.backward(&g)?;
        }
        Ok(())
    }

    /// Gradient with respect to the input only. Returns `deltas` where
    /// `deltas[i]` is the gradient at the output of layer `i`, and the input
    /// gradient as the last element of the tuple.
    pub fn input_gradient(&self, dy: &Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>), NnError> {
        let mut deltas = vec![Tensor::zeros(vec![0]); self.layers.len()];
        let mut g = dy.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let next = layer.backward_input(&g)?;
            deltas[i] = std::mem::replace(&mut g, next);
        }
        Ok((deltas, g))
    }

    /// Accumulates `∂⟨v, ∇ₓ⟩/∂θ`, where `∇ₓ` is the input gradient
    /// produced by [`Self::input_gradient`] from the same forward pass and
    /// `v` is the cotangent of that input gradient.
    pub fn accumulate_input_gradient_param_grad(
        &mut self,
        deltas: &[Tensor<T>],
        v: &Tensor<T>,
    ) -> Result<(), NnError> {
        let mut cur = v.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if layer.has_params() {
                layer.accumulate_param_grad(&cur, &deltas[i], false);
            }
            if i + 1 < deltas.len() {
                cur = layer.jvp(&cur)?;
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(|l| l.zero_grad());
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(|l| l.clear_cache());
    }

    /// Parameter tensors in a fixed order: weight then bias, layer by layer.
    pub fn params(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .filter(|l| l.has_params())
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// Mutable parameter/gradient pairs in the order of [`Self::params`].
    pub fn params_and_grads_mut(&mut self) -> Vec<(&mut Vec<T>, &Vec<T>)> {
        let mut out = Vec::new();
        for l in self.layers.iter_mut().filter(|l| !l.weight.is_empty()) {
            out.push((&mut l.weight, &l.grad_weight));
            out.push((&mut l.bias, &l.grad_bias));
        }
        out
    }

    /// Flat views used by gradient checks: parameter at flat index `k`.
    pub fn param_mut(&mut self, mut k: usize) -> Option<&mut T> {
        for l in self.layers.iter_mut() {
            if k < l.weight.len() {
                return l.weight.get_mut(k);
            }
            k -= l.weight.len();
            if k < l.bias.len() {
                return l.bias.get_mut(k);
            }
            k -= l.bias.len();
        }
        None
    }

    pub fn grad(&self, mut k: usize) -> Option<T> {
        for l in &self.layers {
            if k < l.grad_weight.len() {
                return Some(l.grad_weight[k]);
            }
            k -= l.grad_weight.len();
            if k < l.grad_bias.len() {
                return Some(l.grad_bias[k]);
            }
            k -= l.grad_bias.len();
        }
        None
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        Network {
            input_shape: self.input_shape.clone(),
            output_shape: self.output_shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer::with_params(l.spec.clone(), conv(&l.weight), conv(&l.bias)))
                .collect(),
        }
    }

    /// Sign pattern of every leaky-ReLU input recorded by the last training
    /// forward pass. Finite-difference checks use it to detect kinks.
    pub fn activation_pattern(&self) -> Vec<bool> {
        use super::layer::Cache;
        self.layers
            .iter()
            .filter(|l| matches!(l.spec, LayerSpec::LeakyRelu { .. }))
            .flat_map(|l| match &l.cache {
                Some(Cache::Input(x)) => x.data().iter().map(|v| *v > T::zero()).collect(),
                _ => Vec::new(),
            })
            .collect()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}
