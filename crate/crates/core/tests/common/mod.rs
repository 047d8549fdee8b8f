//! Finite-difference gradient oracle shared by the nn tests and the
//! acceptance suite. Independent of the backward pass: it only ever
//! evaluates losses.
#![allow(dead_code)]

use nasalgan::nn::{categorical_cross_entropy, wgan_gp_critic_loss, LayerSpec, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely; relative error is
/// meaningless at round-off scale.
pub const FD_ABS_FLOOR: f64 = 1e-8;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= FD_ABS_FLOOR {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

#[derive(Debug, Default, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst: f64,
    pub worst_at: String,
}

impl FdReport {
    pub fn merge(&mut self, other: &FdReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        if other.worst > self.worst {
            self.worst = other.worst;
            self.worst_at = other.worst_at.clone();
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.worst <= FD_REL_TOL
    }
}

/// A loss over a network that can also fill in analytic gradients:
/// `eval(net, input, with_grad)` returns `(loss, input_gradient)`.
pub trait LossFn {
    fn eval(&self, net: &mut Network<f64>, input: &Tensor<f64>, with_grad: bool) -> (f64, Option<Tensor<f64>>);
}

/// `loss = Σ r ⊙ net(x)` for a fixed random projection `r`.
pub struct Projection {
    pub r: Vec<f64>,
    pub shuffle_seed: u64,
}

impl LossFn for Projection {
    fn eval(&self, net: &mut Network<f64>, input: &Tensor<f64>, with_grad: bool) -> (f64, Option<Tensor<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.shuffle_seed);
        let y = net.forward(input.clone(), Some(&mut rng)).unwrap();
        let loss = y.data().iter().zip(&self.r).map(|(a, b)| a * b).sum();
        if !with_grad {
            return (loss, None);
        }
        let dy = Tensor::new(y.shape().to_vec(), self.r.clone()).unwrap();
        let dx = net.backward(&dy).unwrap();
        (loss, Some(dx))
    }
}

/// Cross-entropy of the network's logits against fixed targets.
pub struct CrossEntropy {
    pub targets: Vec<usize>,
}

impl LossFn for CrossEntropy {
    fn eval(&self, net: &mut Network<f64>, input: &Tensor<f64>, with_grad: bool) -> (f64, Option<Tensor<f64>>) {
        let y = net.forward(input.clone(), None).unwrap();
        let (loss, g) = categorical_cross_entropy(&y, &self.targets).unwrap();
        if !with_grad {
            return (loss, None);
        }
        (loss, Some(net.backward(&g).unwrap()))
    }
}

/// WGAN-GP critic loss; `input` is the real batch, `fake` fixed.
pub struct CriticGp {
    pub fake: Tensor<f64>,
    pub lambda: f64,
    pub seed: u64,
}

impl LossFn for CriticGp {
    fn eval(&self, net: &mut Network<f64>, input: &Tensor<f64>, _with_grad: bool) -> (f64, Option<Tensor<f64>>) {
        let l = wgan_gp_critic_loss(net, input, &self.fake, self.lambda, self.seed).unwrap();
        (l.loss, None)
    }
}

fn param_count(net: &Network<f64>) -> usize {
    net.param_count()
}

/// Central differences for up to `max_coords` parameters (all when `None`)
/// and, when the loss yields one, the input gradient.
pub fn fd_check(
    net: &mut Network<f64>,
    input: &Tensor<f64>,
    loss: &dyn LossFn,
    max_coords: Option<usize>,
    coord_seed: u64,
    label: &str,
) -> FdReport {
    let mut report = FdReport::default();
    net.zero_grad();
    let (_, dx) = loss.eval(net, input, true);
    let base_pattern = net.activation_pattern();
    let n = param_count(net);
    let analytic: Vec<f64> = (0..n).map(|k| net.grad(k).unwrap()).collect();

    let mut coords: Vec<usize> = (0..n).collect();
    if let Some(m) = max_coords {
        if m < n {
            let mut rng = ChaCha8Rng::seed_from_u64(coord_seed);
            for i in 0..m {
                let j = rng.gen_range(i..n);
                coords.swap(i, j);
            }
            coords.truncate(m);
        }
    }

    for &k in &coords {
        let orig = *net.param_mut(k).unwrap();
        *net.param_mut(k).unwrap() = orig + FD_STEP;
        let (lp, _) = loss.eval(net, input, false);
        let pat_p = net.activation_pattern();
        *net.param_mut(k).unwrap() = orig - FD_STEP;
        let (lm, _) = loss.eval(net, input, false);
        let pat_m = net.activation_pattern();
        *net.param_mut(k).unwrap() = orig;
        if pat_p != base_pattern || pat_m != base_pattern {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        let e = rel_err(analytic[k], numeric);
        report.checked += 1;
        if e > report.worst {
            report.worst = e;
            report.worst_at = format!("{label}: param {k} analytic {} numeric {numeric}", analytic[k]);
        }
    }

    if let Some(dx) = dx {
        let mut x = input.clone();
        let m = x.len();
        let picks: Vec<usize> = match max_coords {
            Some(c) if c < m => {
                let mut rng = ChaCha8Rng::seed_from_u64(coord_seed ^ 0xABCD);
                (0..c).map(|_| rng.gen_range(0..m)).collect()
            }
            _ => (0..m).collect(),
        };
        for i in picks {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + FD_STEP;
            let (lp, _) = loss.eval(net, &x, false);
            let pat_p = net.activation_pattern();
            x.data_mut()[i] = orig - FD_STEP;
            let (lm, _) = loss.eval(net, &x, false);
            let pat_m = net.activation_pattern();
            x.data_mut()[i] = orig;
            if pat_p != base_pattern || pat_m != base_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let e = rel_err(dx.data()[i], numeric);
            report.checked += 1;
            if e > report.worst {
                report.worst = e;
                report.worst_at = format!("{label}: input {i} analytic {} numeric {numeric}", dx.data()[i]);
            }
        }
    }
    report
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn randomize_bias(net: &mut Network<f64>, rng: &mut ChaCha8Rng) {
    for l in &mut net.layers {
        for b in &mut l.bias {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
}

/// One randomized gradient-check case: a network, an input and a loss.
pub struct Case {
    pub label: String,
    pub net: Network<f64>,
    pub input: Tensor<f64>,
    pub loss: Box<dyn LossFn>,
}

fn projection_case(label: String, input_shape: Vec<usize>, specs: Vec<LayerSpec>, rng: &mut ChaCha8Rng) -> Case {
    let mut net = Network::<f64>::new(input_shape.clone(), specs, rng.gen()).unwrap();
    randomize_bias(&mut net, rng);
    let batch = rng.gen_range(1..=3);
    let mut shape = vec![batch];
    shape.extend(&input_shape);
    let input = random_tensor(rng, shape, 1.0);
    let out: usize = batch * net.output_shape().iter().product::<usize>();
    let r = (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Case {
        label,
        net,
        input,
        loss: Box::new(Projection {
            r,
            shuffle_seed: rng.gen(),
        }),
    }
}

/// Randomized single-layer case for the given kind index (0..7).
pub fn layer_case(kind: usize, rng: &mut ChaCha8Rng) -> Case {
    let c_in = rng.gen_range(1..=3);
    let c_out = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=5);
    let s = rng.gen_range(1..=3);
    let p = rng.gen_range(0..k);
    let len = rng.gen_range(k.max(2)..=k + 8);
    match kind {
        0 => {
            let i = rng.gen_range(1..=6);
            let o = rng.gen_range(1..=5);
            projection_case(format!("dense {i}->{o}"), vec![i], vec![LayerSpec::Dense { inputs: i, outputs: o }], rng)
        }
        1 => projection_case(
            format!("conv1d c{c_in}->{c_out} k{k} s{s} p{p} len{len}"),
            vec![c_in, len],
            vec![LayerSpec::Conv1d {
                in_channels: c_in,
                out_channels: c_out,
                kernel: k,
                stride: s,
                padding: p.min(k - 1),
            }],
            rng,
        ),
        2 => {
            let p = rng.gen_range(0..=(k.saturating_sub(1)) / 2);
            projection_case(
                format!("conv1d_transpose c{c_in}->{c_out} k{k} s{s} p{p} len{len}"),
                vec![c_in, len],
                vec![LayerSpec::Conv1dTranspose {
                    in_channels: c_in,
                    out_channels: c_out,
                    kernel: k,
                    stride: s,
                    padding: p,
                }],
                rng,
            )
        }
        3 => projection_case(
            "leaky_relu".into(),
            vec![c_in, len],
            vec![
                LayerSpec::Conv1d {
                    in_channels: c_in,
                    out_channels: c_out,
                    kernel: 1,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::LeakyRelu {
                    slope: rng.gen_range(0.0..0.5),
                },
            ],
            rng,
        ),
        4 => projection_case(
            "tanh".into(),
            vec![c_in, len],
            vec![
                LayerSpec::Conv1d {
                    in_channels: c_in,
                    out_channels: c_out,
                    kernel: 1,
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::Tanh,
            ],
            rng,
        ),
        5 => projection_case(
            "reshape".into(),
            vec![c_in, len],
            vec![
                LayerSpec::Reshape {
                    shape: vec![c_in * len],
                },
                LayerSpec::Dense {
                    inputs: c_in * len,
                    outputs: c_out,
                },
            ],
            rng,
        ),
        _ => {
            let radius = rng.gen_range(0..len.min(4));
            projection_case(
                format!("phase_shuffle r{radius}"),
                vec![c_in, len],
                vec![
                    LayerSpec::Conv1d {
                        in_channels: c_in,
                        out_channels: c_out,
                        kernel: 1,
                        stride: 1,
                        padding: 0,
                    },
                    LayerSpec::PhaseShuffle { radius },
                ],
                rng,
            )
        }
    }
}

pub fn cross_entropy_case(rng: &mut ChaCha8Rng) -> Case {
    let i = rng.gen_range(2..=6);
    let k = rng.gen_range(2..=5);
    let mut net = Network::<f64>::new(vec![i], vec![LayerSpec::Dense { inputs: i, outputs: k }], rng.gen()).unwrap();
    randomize_bias(&mut net, rng);
    let b = rng.gen_range(1..=4);
    let input = random_tensor(rng, vec![b, i], 1.5);
    let targets = (0..b).map(|_| rng.gen_range(0..k)).collect();
    Case {
        label: format!("cross_entropy {i}->{k}"),
        net,
        input,
        loss: Box::new(CrossEntropy { targets }),
    }
}

/// Small critic: conv → leaky → phase shuffle → conv → leaky → dense.
pub fn critic_specs(len: usize, ch: usize) -> (Vec<LayerSpec>, usize) {
    let l1 = (len + 2 - 4) / 2 + 1;
    let l2 = (l1 + 2 - 4) / 2 + 1;
    (
        vec![
            LayerSpec::Conv1d {
                in_channels: 1,
                out_channels: ch,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::PhaseShuffle { radius: 1 },
            LayerSpec::Conv1d {
                in_channels: ch,
                out_channels: ch,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::Reshape { shape: vec![ch * l2] },
            LayerSpec::Dense {
                inputs: ch * l2,
                outputs: 1,
            },
        ],
        l2,
    )
}

pub fn critic_gp_case(rng: &mut ChaCha8Rng) -> Case {
    let len = 4 * rng.gen_range(2..=4);
    let ch = rng.gen_range(1..=3);
    let (specs, _) = critic_specs(len, ch);
    let mut net = Network::<f64>::new(vec![1, len], specs, rng.gen()).unwrap();
    randomize_bias(&mut net, rng);
    let b = rng.gen_range(1..=3);
    let input = random_tensor(rng, vec![b, 1, len], 1.0);
    let fake = random_tensor(rng, vec![b, 1, len], 1.0);
    Case {
        label: format!("wgan_gp len{len} ch{ch}"),
        net,
        input,
        loss: Box::new(CriticGp {
            fake,
            lambda: 10.0,
            seed: rng.gen(),
        }),
    }
}

/// conv → leaky → transposed conv → tanh → dense.
pub fn composed_case(rng: &mut ChaCha8Rng) -> Case {
    let len = rng.gen_range(6..=10);
    let c = rng.gen_range(1..=3);
    let l1 = (len + 2 - 4) / 2 + 1;
    let l2 = (l1 - 1) * 2 + 4 - 2;
    projection_case(
        format!("composed len{len} c{c}"),
        vec![1, len],
        vec![
            LayerSpec::Conv1d {
                in_channels: 1,
                out_channels: c,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::Conv1dTranspose {
                in_channels: c,
                out_channels: 2,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
            LayerSpec::Tanh,
            LayerSpec::Reshape { shape: vec![2 * l2] },
            LayerSpec::Dense {
                inputs: 2 * l2,
                outputs: 3,
            },
        ],
        rng,
    )
}

/// Every case family, `per_family` randomized instances each.
pub fn all_cases(per_family: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    for _ in 0..per_family {
        for kind in 0..7 {
            cases.push(layer_case(kind, &mut rng));
        }
        cases.push(cross_entropy_case(&mut rng));
        cases.push(critic_gp_case(&mut rng));
        cases.push(composed_case(&mut rng));
    }
    cases
}

/// Plain nested-loop convolution used as an independent oracle.
pub fn naive_conv1d(x: &[f64], c_in: usize, len: usize, w: &[f64], c_out: usize, k: usize, stride: usize, pad: usize) -> Vec<f64> {
    let out_len = (len + 2 * pad - k) / stride + 1;
    let mut y = vec![0.0; c_out * out_len];
    for co in 0..c_out {
        for o in 0..out_len {
            let mut acc = 0.0;
            for ci in 0..c_in {
                for t in 0..k {
                    let pos = (o * stride + t) as isize - pad as isize;
                    if pos >= 0 && (pos as usize) < len {
                        acc += w[(co * c_in + ci) * k + t] * x[ci * len + pos as usize];
                    }
                }
            }
            y[co * out_len + o] = acc;
        }
    }
    y
}

pub mod oracles;
