use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{gemm_nn, gemm_nt, gemm_tn, ConvGeom};
use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Declarative description of one layer. Shapes exclude the batch axis.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Conv1dTranspose {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Tanh,
    Reshape {
        shape: Vec<usize>,
    },
    PhaseShuffle {
        radius: usize,
    },
}

impl LayerSpec {
    /// Output example shape for a given input example shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mismatch = || NnError::Shape(format!("{self} cannot take input shape {input:?}"));
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if input.iter().product::<usize>() != inputs || input.len() != 1 {
                    return Err(mismatch());
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => match input {
                [c, len] if *c == in_channels => ConvGeom::conv_out_len(*len, kernel, stride, padding)
                    .map(|l| vec![out_channels, l])
                    .ok_or_else(mismatch),
                _ => Err(mismatch()),
            },
            LayerSpec::Conv1dTranspose {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => match input {
                [c, len] if *c == in_channels && stride > 0 => {
                    ConvGeom::transpose_out_len(*len, kernel, stride, padding)
                        .map(|l| vec![out_channels, l])
                        .ok_or_else(mismatch)
                }
                _ => Err(mismatch()),
            },
            LayerSpec::LeakyRelu { .. } | LayerSpec::Tanh => Ok(input.to_vec()),
            LayerSpec::Reshape { ref shape } => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(mismatch());
                }
                Ok(shape.clone())
            }
            LayerSpec::PhaseShuffle { radius } => match input {
                [_, len] if radius < *len => Ok(input.to_vec()),
                [_, len] => Err(NnError::InvalidArgument(format!(
                    "phase shuffle radius {radius} must be below length {len}"
                ))),
                _ => Err(mismatch()),
            },
        }
    }

    /// Number of (weight, bias) parameters.
    pub fn param_counts(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs * outputs, outputs),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * out_channels * kernel, out_channels),
            LayerSpec::Conv1dTranspose {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * out_channels * kernel, out_channels),
            _ => (0, 0),
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | LayerSpec::Conv1dTranspose {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (in_channels * kernel, out_channels * kernel),
            _ => (0, 0),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense in={inputs} out={outputs}"),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv1d in={in_channels} out={out_channels} kernel={kernel} stride={stride} padding={padding}"
            ),
            LayerSpec::Conv1dTranspose {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv1d_transpose in={in_channels} out={out_channels} kernel={kernel} stride={stride} padding={padding}"
            ),
            LayerSpec::LeakyRelu { slope } => write!(f, "leaky_relu slope={slope:?}"),
            LayerSpec::Tanh => write!(f, "tanh"),
            LayerSpec::Reshape { shape } => {
                let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
                write!(f, "reshape shape={}", dims.join("x"))
            }
            LayerSpec::PhaseShuffle { radius } => write!(f, "phase_shuffle radius={radius}"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| NnError::Format(format!("layer spec `{s}`: {why}"));
        let mut parts = s.split_whitespace();
        let kind = parts.next().ok_or_else(|| bad("empty"))?;
        let mut fields = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            fields.insert(k, v);
        }
        let num = |key: &str| -> Result<usize, NnError> {
            fields
                .get(key)
                .ok_or_else(|| bad(&format!("missing {key}")))?
                .parse()
                .map_err(|_| bad(&format!("bad {key}")))
        };
        Ok(match kind {
            "dense" => LayerSpec::Dense {
                inputs: num("in")?,
                outputs: num("out")?,
            },
            "conv1d" => LayerSpec::Conv1d {
                in_channels: num("in")?,
                out_channels: num("out")?,
                kernel: num("kernel")?,
                stride: num("stride")?,
                padding: num("padding")?,
            },
            "conv1d_transpose" => LayerSpec::Conv1dTranspose {
                in_channels: num("in")?,
                out_channels: num("out")?,
                kernel: num("kernel")?,
                stride: num("stride")?,
                padding: num("padding")?,
            },
            "leaky_relu" => LayerSpec::LeakyRelu {
                slope: fields
                    .get("slope")
                    .ok_or_else(|| bad("missing slope"))?
                    .parse()
                    .map_err(|_| bad("bad slope"))?,
            },
            "tanh" => LayerSpec::Tanh,
            "reshape" => LayerSpec::Reshape {
                shape: fields
                    .get("shape")
                    .ok_or_else(|| bad("missing shape"))?
                    .split('x')
                    .map(|d| d.parse().map_err(|_| bad("bad shape")))
                    .collect::<Result<_, _>>()?,
            },
            "phase_shuffle" => LayerSpec::PhaseShuffle {
                radius: num("radius")?,
            },
            other => return Err(bad(&format!("unknown kind {other}"))),
        })
    }
}

/// Activations recorded by a training forward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Shifts(Vec<isize>),
    InputShape(Vec<usize>),
}

/// A layer with its parameters, gradient accumulators and forward cache.
#[derive(Clone, Debug)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
    pub(crate) cache: Option<Cache<T>>,
}

fn reflect(i: isize, len: usize) -> usize {
    let last = len as isize - 1;
    let mut j = i;
    if j < 0 {
        j = -j;
    }
    if j > last {
        j = 2 * last - j;
    }
    j as usize
}

/// Shift every channel of `x` (`[batch, channels, len]`) by the per-example
/// offset, reflecting at the edges: `out[t] = in[reflect(t - shift)]`.
pub fn phase_shuffle_apply<T: Scalar>(x: &Tensor<T>, shifts: &[isize]) -> Tensor<T> {
    let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Tensor::zeros(x.shape().to_vec());
    for bi in 0..b {
        let s = shifts[bi];
        for ci in 0..c {
            let row = &x.data()[(bi * c + ci) * l..][..l];
            let orow = &mut out.data_mut()[(bi * c + ci) * l..][..l];
            for (t, o) in orow.iter_mut().enumerate() {
                *o = row[reflect(t as isize - s, l)];
            }
        }
    }
    out
}

fn phase_shuffle_adjoint<T: Scalar>(dy: &Tensor<T>, shifts: &[isize]) -> Tensor<T> {
    let (b, c, l) = (dy.shape()[0], dy.shape()[1], dy.shape()[2]);
    let mut dx = Tensor::zeros(dy.shape().to_vec());
    for bi in 0..b {
        let s = shifts[bi];
        for ci in 0..c {
            let row = &dy.data()[(bi * c + ci) * l..][..l];
            let drow = &mut dx.data_mut()[(bi * c + ci) * l..][..l];
            for (t, &g) in row.iter().enumerate() {
                drow[reflect(t as isize - s, l)] += g;
            }
        }
    }
    dx
}

impl<T: Scalar> Layer<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn init(spec: LayerSpec, rng: &mut ChaCha8Rng) -> Self {
        let (nw, nb) = spec.param_counts();
        let (fan_in, fan_out) = spec.fans();
        let weight = if nw > 0 {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..nw).map(|_| T::of(rng.gen_range(-s..s))).collect()
        } else {
            Vec::new()
        };
        Self::with_params(spec, weight, vec![T::zero(); nb])
    }

    pub fn with_params(spec: LayerSpec, weight: Vec<T>, bias: Vec<T>) -> Self {
        let (nw, nb) = (weight.len(), bias.len());
        Self {
            spec,
            weight,
            bias,
            grad_weight: vec![T::zero(); nw],
            grad_bias: vec![T::zero(); nb],
            cache: None,
        }
    }

    pub fn has_params(&self) -> bool {
        !self.weight.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.iter_mut().for_each(|g| *g = T::zero());
        self.grad_bias.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn geom(&self, input_shape: &[usize]) -> ConvGeom {
        match self.spec {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => ConvGeom {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                in_len: input_shape[2],
                out_len: ConvGeom::conv_out_len(input_shape[2], kernel, stride, padding).unwrap_or(0),
            },
            // A transposed convolution is the adjoint of the convolution that
            // maps its output back onto its input.
            LayerSpec::Conv1dTranspose {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => ConvGeom {
                in_channels: out_channels,
                out_channels: in_channels,
                kernel,
                stride,
                padding,
                in_len: ConvGeom::transpose_out_len(input_shape[2], kernel, stride, padding).unwrap_or(0),
                out_len: input_shape[2],
            },
            _ => unreachable!("geometry requested for a non-convolutional layer"),
        }
    }

    /// Linear part of the layer (no bias) applied to `x`.
    fn linear(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let b = x.batch();
        let mut out_shape = vec![b];
        out_shape.extend(self.spec.output_shape(&x.shape()[1..])?);
        let mut y = Tensor::zeros(out_shape);
        match self.spec {
            LayerSpec::Dense { inputs, outputs } => {
                // y[b×out] = x[b×in] · Wᵀ
                gemm_nt(b, inputs, outputs, x.data(), &self.weight, y.data_mut());
            }
            LayerSpec::Conv1d { .. } => {
                let g = self.geom(x.shape());
                let mut cols = Vec::new();
                let (xn, yn) = (x.example_len(), y.example_len());
                for i in 0..b {
                    let yslice = &mut y.data_mut()[i * yn..(i + 1) * yn];
                    g.forward_add(&x.data()[i * xn..(i + 1) * xn], &self.weight, yslice, &mut cols);
                }
            }
            LayerSpec::Conv1dTranspose { .. } => {
                let g = self.geom(x.shape());
                let mut cols = Vec::new();
                let (xn, yn) = (x.example_len(), y.example_len());
                for i in 0..b {
                    let yslice = &mut y.data_mut()[i * yn..(i + 1) * yn];
                    g.backward_input_add(&x.data()[i * xn..(i + 1) * xn], &self.weight, yslice, &mut cols);
                }
            }
            _ => unreachable!(),
        }
        Ok(y)
    }

    fn add_bias(&self, y: &mut Tensor<T>) {
        let nb = self.bias.len();
        let per = y.example_len() / nb;
        for chunk in y.data_mut().chunks_mut(per * nb) {
            for (c, row) in chunk.chunks_mut(per).enumerate() {
                let bv = self.bias[c];
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    }

    /// Forward pass without touching the cache. Phase shuffle draws its
    /// shifts from `rng`; with no generator it is the identity.
    pub(crate) fn forward_uncached(
        &self,
        x: Tensor<T>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor<T>, Option<Cache<T>>), NnError> {
        match self.spec {
            LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } | LayerSpec::Conv1dTranspose { .. } => {
                let mut y = self.linear(&x)?;
                self.add_bias(&mut y);
                Ok((y, Some(Cache::Input(x))))
            }
            LayerSpec::LeakyRelu { slope } => {
                let s = T::of(slope);
                let y = x.map(|v| if v > T::zero() { v } else { v * s });
                Ok((y, Some(Cache::Input(x))))
            }
            LayerSpec::Tanh => {
                let y = x.map(|v| v.tanh());
                Ok((y.clone(), Some(Cache::Output(y))))
            }
            LayerSpec::Reshape { .. } => {
                let shape_in = x.shape().to_vec();
                let mut out_shape = vec![x.batch()];
                out_shape.extend(self.spec.output_shape(&shape_in[1..])?);
                Ok((x.reshape(out_shape)?, Some(Cache::InputShape(shape_in))))
            }
            LayerSpec::PhaseShuffle { radius } => {
                self.spec.output_shape(&x.shape()[1..])?;
                match rng {
                    Some(rng) if radius > 0 => {
                        let r = radius as isize;
                        let shifts: Vec<isize> = (0..x.batch()).map(|_| rng.gen_range(-r..=r)).collect();
                        Ok((phase_shuffle_apply(&x, &shifts), Some(Cache::Shifts(shifts))))
                    }
                    _ => Ok((x.clone(), Some(Cache::Shifts(vec![0; x.batch()])))),
                }
            }
        }
    }

    pub fn forward(&mut self, x: Tensor<T>, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor<T>, NnError> {
        let (y, cache) = self.forward_uncached(x, rng)?;
        self.cache = cache;
        Ok(y)
    }

    /// Input gradient only; parameter gradients are left untouched.
    pub fn backward_input(&self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::BackwardBeforeForward)?;
        match (&self.spec, cache) {
            (LayerSpec::Dense { inputs, outputs }, Cache::Input(x)) => {
                let mut dx = Tensor::zeros(x.shape().to_vec());
                gemm_nn(x.batch(), *outputs, *inputs, dy.data(), &self.weight, dx.data_mut());
                Ok(dx)
            }
            (LayerSpec::Conv1d { .. }, Cache::Input(x)) => {
                let g = self.geom(x.shape());
                let mut dx = Tensor::zeros(x.shape().to_vec());
                let (xn, yn) = (x.example_len(), dy.example_len());
                let mut cols = Vec::new();
                for i in 0..x.batch() {
                    let dslice = &mut dx.data_mut()[i * xn..(i + 1) * xn];
                    g.backward_input_add(&dy.data()[i * yn..(i + 1) * yn], &self.weight, dslice, &mut cols);
                }
                Ok(dx)
            }
            (LayerSpec::Conv1dTranspose { .. }, Cache::Input(x)) => {
                let g = self.geom(x.shape());
                let mut dx = Tensor::zeros(x.shape().to_vec());
                let (xn, yn) = (x.example_len(), dy.example_len());
                let mut cols = Vec::new();
                for i in 0..x.batch() {
                    let dslice = &mut dx.data_mut()[i * xn..(i + 1) * xn];
                    g.forward_add(&dy.data()[i * yn..(i + 1) * yn], &self.weight, dslice, &mut cols);
                }
                Ok(dx)
            }
            (LayerSpec::LeakyRelu { slope }, Cache::Input(x)) => {
                let s = T::of(*slope);
                let data = x
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&xv, &g)| if xv > T::zero() { g } else { g * s })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            (LayerSpec::Tanh, Cache::Output(y)) => {
                let data = y
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&yv, &g)| g * (T::one() - yv * yv))
                    .collect();
                Tensor::new(y.shape().to_vec(), data)
            }
            (LayerSpec::Reshape { .. }, Cache::InputShape(shape)) => dy.clone().reshape(shape.clone()),
            (LayerSpec::PhaseShuffle { .. }, Cache::Shifts(shifts)) => Ok(phase_shuffle_adjoint(dy, shifts)),
            _ => Err(NnError::BackwardBeforeForward),
        }
    }

    /// Accumulate parameter gradients as if `input` had been fed forward and
    /// `dy` arrived from above. For the bias, only `dy` matters.
    pub fn accumulate_param_grad(&mut self, input: &Tensor<T>, dy: &Tensor<T>, with_bias: bool) {
        match self.spec {
            LayerSpec::Dense { inputs, outputs } => {
                // dW[out×in] += dyᵀ · x
                gemm_tn(outputs, input.batch(), inputs, dy.data(), input.data(), &mut self.grad_weight);
            }
            LayerSpec::Conv1d { .. } => {
                let g = self.geom(input.shape());
                let (xn, yn) = (input.example_len(), dy.example_len());
                let mut cols = Vec::new();
                for i in 0..input.batch() {
                    g.backward_weight_add(
                        &input.data()[i * xn..(i + 1) * xn],
                        &dy.data()[i * yn..(i + 1) * yn],
                        &mut self.grad_weight,
                        &mut cols,
                    );
                }
            }
            LayerSpec::Conv1dTranspose { .. } => {
                let g = self.geom(input.shape());
                let (xn, yn) = (input.example_len(), dy.example_len());
                let mut cols = Vec::new();
                for i in 0..input.batch() {
                    g.backward_weight_add(
                        &dy.data()[i * yn..(i + 1) * yn],
                        &input.data()[i * xn..(i + 1) * xn],
                        &mut self.grad_weight,
                        &mut cols,
                    );
                }
            }
            _ => return,
        }
        if with_bias {
            let nb = self.grad_bias.len();
            let per = dy.example_len() / nb;
            for chunk in dy.data().chunks(per * nb) {
                for (c, row) in chunk.chunks(per).enumerate() {
                    let mut s = T::zero();
                    for &v in row {
                        s += v;
                    }
                    self.grad_bias[c] += s;
                }
            }
        }
    }

    pub(crate) fn accumulate_cached_param_grad(&mut self, dy: &Tensor<T>) -> Result<(), NnError> {
        match self.cache.take() {
            Some(Cache::Input(x)) => {
                self.accumulate_param_grad(&x, dy, true);
                self.cache = Some(Cache::Input(x));
                Ok(())
            }
            _ => Err(NnError::BackwardBeforeForward),
        }
    }

    /// Reverse-mode step: returns the input gradient and accumulates
    /// parameter gradients.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let dx = self.backward_input(dy)?;
        if self.has_params() {
            let input = match self.cache.take() {
                Some(Cache::Input(x)) => x,
                _ => return Err(NnError::BackwardBeforeForward),
            };
            self.accumulate_param_grad(&input, dy, true);
            self.cache = Some(Cache::Input(input));
        }
        Ok(dx)
    }

    /// Jacobian-vector product at the cached operating point.
    ///
    /// Only piecewise-linear layers are supported; the Jacobian of `tanh`
    /// depends on the operating point in a way second-order callers would
    /// also need to differentiate.
    pub fn jvp(&self, v: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::BackwardBeforeForward)?;
        match (&self.spec, cache) {
            (LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } | LayerSpec::Conv1dTranspose { .. }, _) => {
                self.linear(v)
            }
            (LayerSpec::LeakyRelu { slope }, Cache::Input(x)) => {
                let s = T::of(*slope);
                let data = x
                    .data()
                    .iter()
                    .zip(v.data())
                    .map(|(&xv, &g)| if xv > T::zero() { g } else { g * s })
                    .collect();
                Tensor::new(x.shape().to_vec(), data)
            }
            (LayerSpec::Reshape { .. }, _) => {
                let mut shape = vec![v.batch()];
                shape.extend(self.spec.output_shape(&v.shape()[1..])?);
                v.clone().reshape(shape)
            }
            (LayerSpec::PhaseShuffle { .. }, Cache::Shifts(shifts)) => Ok(phase_shuffle_apply(v, shifts)),
            (LayerSpec::Tanh, _) => Err(NnError::Unsupported(
                "second-order pass through tanh".to_string(),
            )),
            _ => Err(NnError::BackwardBeforeForward),
        }
    }
}
