use super::network::Network;
use super::tensor::Scalar;
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, net: &Network<T>) -> Self {
        let zeros: Vec<Vec<T>> = net.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one bias-corrected Adam update from the accumulated gradients.
    /// A non-finite gradient aborts the step before anything is modified.
    pub fn step(&mut self, net: &mut Network<T>) -> Result<(), NnError> {
        let pairs = net.params_and_grads_mut();
        if pairs.len() != self.m.len()
            || pairs.iter().zip(&self.m).any(|((p, _), m)| p.len() != m.len())
        {
            return Err(NnError::Shape("optimizer state does not match network".into()));
        }
        if pairs.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Err(NnError::NonFinite("gradient".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (ob1, ob2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(c.lr / bc1);
        let inv_sqrt_bc2 = T::of(1.0 / bc2.sqrt());
        let eps = T::of(c.eps);
        for (((p, g), m), v) in pairs.into_iter().zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + ob1 * gi;
                v[i] = b2 * v[i] + ob2 * gi * gi;
                let denom = v[i].sqrt() * inv_sqrt_bc2 + eps;
                p[i] -= step_size * m[i] / denom;
            }
        }
        Ok(())
    }
}
