use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Mean over rows of `-log softmax(logits)[target]`, with its gradient.
pub fn categorical_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
) -> Result<(f64, Tensor<T>), NnError> {
    if logits.shape().len() != 2 || logits.batch() != targets.len() {
        return Err(NnError::Shape(format!(
            "logits {:?} vs {} targets",
            logits.shape(),
            targets.len()
        )));
    }
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    let mut grad = Tensor::zeros(vec![b, k]);
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        if t >= k {
            return Err(NnError::Shape(format!("target class {t} out of {k}")));
        }
        let row = &logits.data()[i * k..(i + 1) * k];
        let probs = softmax(row);
        let lse = log_sum_exp(row);
        total += lse - row[t].as_f64();
        let g = &mut grad.data_mut()[i * k..(i + 1) * k];
        for (j, (gv, p)) in g.iter_mut().zip(&probs).enumerate() {
            let onehot = if j == t { 1.0 } else { 0.0 };
            *gv = T::of((p - onehot) / b as f64);
        }
    }
    Ok((total / b as f64, grad))
}

pub fn log_sum_exp<T: Scalar>(row: &[T]) -> f64 {
    let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln()
}

pub fn softmax<T: Scalar>(row: &[T]) -> Vec<f64> {
    let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Critic objective terms from one evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticLoss {
    /// mean(critic(fake)) − mean(critic(real)) + penalty
    pub loss: f64,
    pub wasserstein: f64,
    pub penalty: f64,
}

fn check_pair<T: Scalar>(critic: &Network<T>, real: &Tensor<T>, fake: &Tensor<T>) -> Result<(), NnError> {
    if real.shape() != fake.shape() {
        return Err(NnError::Shape(format!(
            "real {:?} and fake {:?} batches differ",
            real.shape(),
            fake.shape()
        )));
    }
    if critic.output_shape() != [1] {
        return Err(NnError::Shape("critic must produce one score per example".into()));
    }
    Ok(())
}

/// `λ·mean((‖∇ₓ̂ critic(x̂)‖₂ − 1)²)` at `x̂ᵢ = αᵢ·realᵢ + (1 − αᵢ)·fakeᵢ`.
///
/// Parameter gradients of the penalty are accumulated into `critic`.
/// `rng` drives phase shuffle inside the critic.
pub fn gradient_penalty<T: Scalar>(
    critic: &mut Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    alphas: &[f64],
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, NnError> {
    check_pair(critic, real, fake)?;
    let b = real.batch();
    if alphas.len() != b {
        return Err(NnError::Shape(format!("{} mixing weights for batch {b}", alphas.len())));
    }
    let n = real.example_len();
    let mut mixed = Tensor::zeros(real.shape().to_vec());
    for i in 0..b {
        let (a, oa) = (T::of(alphas[i]), T::of(1.0 - alphas[i]));
        let dst = &mut mixed.data_mut()[i * n..(i + 1) * n];
        for ((d, &r), &f) in dst.iter_mut().zip(real.example(i)).zip(fake.example(i)) {
            *d = a * r + oa * f;
        }
    }
    critic.forward(mixed, Some(rng))?;
    let ones = Tensor::new(vec![b, 1], vec![T::one(); b])?;
    let (deltas, grad_x) = critic.input_gradient(&ones)?;
    if !grad_x.all_finite() {
        return Err(NnError::NonFinite("interpolate gradient".into()));
    }
    let mut penalty = 0.0;
    let mut cotangent = Tensor::zeros(grad_x.shape().to_vec());
    for i in 0..b {
        let g = grad_x.example(i);
        let norm = g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        penalty += (norm - 1.0) * (norm - 1.0);
        if norm > 0.0 {
            let scale = T::of(lambda * 2.0 * (norm - 1.0) / (norm * b as f64));
            let dst = &mut cotangent.data_mut()[i * n..(i + 1) * n];
            for (d, &gv) in dst.iter_mut().zip(g) {
                *d = scale * gv;
            }
        }
    }
    critic.accumulate_input_gradient_param_grad(&deltas, &cotangent)?;
    Ok(lambda * penalty / b as f64)
}

/// WGAN-GP critic loss; accumulates its parameter gradients into `critic`.
/// All randomness (mixing weights, phase shuffle) comes from `seed`.
pub fn wgan_gp_critic_loss<T: Scalar>(
    critic: &mut Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    lambda: f64,
    seed: u64,
) -> Result<CriticLoss, NnError> {
    check_pair(critic, real, fake)?;
    let b = real.batch();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphas: Vec<f64> = (0..b).map(|_| rng.gen::<f64>()).collect();

    let d_real = critic.forward(real.clone(), Some(&mut rng))?;
    let mean_real = d_real.data().iter().map(|v| v.as_f64()).sum::<f64>() / b as f64;
    critic.backward_params(&Tensor::new(vec![b, 1], vec![T::of(-1.0 / b as f64); b])?)?;

    let d_fake = critic.forward(fake.clone(), Some(&mut rng))?;
    let mean_fake = d_fake.data().iter().map(|v| v.as_f64()).sum::<f64>() / b as f64;
    critic.backward_params(&Tensor::new(vec![b, 1], vec![T::of(1.0 / b as f64); b])?)?;

    let penalty = if lambda != 0.0 {
        gradient_penalty(critic, real, fake, &alphas, lambda, &mut rng)?
    } else {
        0.0
    };
    let wasserstein = mean_fake - mean_real;
    let loss = wasserstein + penalty;
    if !loss.is_finite() {
        return Err(NnError::NonFinite("critic loss".into()));
    }
    Ok(CriticLoss {
        loss,
        wasserstein,
        penalty,
    })
}
