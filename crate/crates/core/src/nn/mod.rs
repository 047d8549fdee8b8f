//! Sequential dense / 1-D convolutional networks with exact reverse-mode
//! gradients, Adam, and the adversarial losses used by the GAN.

mod adam;
pub mod checkpoint;
mod layer;
pub mod linalg;
mod loss;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layer::{phase_shuffle_apply, Layer, LayerSpec};
pub use loss::{
    categorical_cross_entropy, gradient_penalty, log_sum_exp, softmax, wgan_gp_critic_loss, CriticLoss,
};
pub use network::{validate_specs, Network};
pub use tensor::{Scalar, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shifts every channel of each example in a `[batch, channels, len]`
/// tensor by a uniform integer in `[-radius, radius]`, reflecting at the
/// edges.
pub fn phase_shuffle<T: Scalar>(input: &Tensor<T>, radius: usize, seed: u64) -> Result<Tensor<T>, NnError> {
    use rand::SeedableRng;
    let len = *input.shape().get(2).ok_or_else(|| NnError::Shape("phase shuffle needs [batch, channels, len]".into()))?;
    let mut layer = Layer::<T>::with_params(LayerSpec::PhaseShuffle { radius }, vec![], vec![]);
    if radius >= len {
        return Err(NnError::InvalidArgument(format!("radius {radius} must be below length {len}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    layer.forward(input.clone(), Some(&mut rng))
}

/// Convolution `[batch, in, len] ⋆ kernel[out, in, width] + bias`.
pub fn conv1d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>, NnError> {
    let (spec, w) = conv_spec(input, kernel, stride, padding, false)?;
    let layer = Layer::with_params(spec, w, bias.to_vec());
    check_bias(&layer, bias)?;
    Ok(layer.forward_uncached(input.clone(), None)?.0)
}

/// Transposed convolution; `kernel` is `[in, out, width]`.
pub fn conv1d_transpose_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>, NnError> {
    let (spec, w) = conv_spec(input, kernel, stride, padding, true)?;
    let layer = Layer::with_params(spec, w, bias.to_vec());
    check_bias(&layer, bias)?;
    Ok(layer.forward_uncached(input.clone(), None)?.0)
}

fn check_bias<T: Scalar>(layer: &Layer<T>, bias: &[T]) -> Result<(), NnError> {
    if layer.spec.param_counts().1 != bias.len() {
        return Err(NnError::Shape(format!("bias of length {} for {}", bias.len(), layer.spec)));
    }
    Ok(())
}

fn conv_spec<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: usize,
    transpose: bool,
) -> Result<(LayerSpec, Vec<T>), NnError> {
    let (ks, is) = (kernel.shape(), input.shape());
    if ks.len() != 3 || is.len() != 3 {
        return Err(NnError::Shape(format!("input {is:?} / kernel {ks:?} must both be rank 3")));
    }
    let spec = if transpose {
        LayerSpec::Conv1dTranspose {
            in_channels: ks[0],
            out_channels: ks[1],
            kernel: ks[2],
            stride,
            padding,
        }
    } else {
        LayerSpec::Conv1d {
            in_channels: ks[1],
            out_channels: ks[0],
            kernel: ks[2],
            stride,
            padding,
        }
    };
    spec.output_shape(&is[1..])?;
    Ok((spec, kernel.data().to_vec()))
}
