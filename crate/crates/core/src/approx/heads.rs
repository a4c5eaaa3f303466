//! Policy heads and critics on top of [`Mlp`].

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, Trace};
use crate::env::{Action, ActionSpace};
use crate::rng::Rng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
/// Added inside `log(1 - tanh^2(u) + TANH_EPS)`.
pub const TANH_EPS: f64 = 1e-6;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax policy over a finite action set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalHead {
    pub net: Mlp,
}

impl CategoricalHead {
    pub fn probs(&self, state: &[f64]) -> Vec<f64> {
        softmax(&self.net.eval(state))
    }

    pub fn log_probs(&self, state: &[f64]) -> Vec<f64> {
        log_softmax(&self.net.eval(state))
    }

    /// Inverse-CDF sampling from a uniform draw.
    pub fn sample(&self, state: &[f64], rng: &mut Rng) -> (usize, f64) {
        let lp = self.log_probs(state);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, l) in lp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return (a, *l);
            }
        }
        let a = lp.len() - 1;
        (a, lp[a])
    }
}

/// Result of a reparameterized squashed-Gaussian draw, kept for backprop.
#[derive(Clone, Debug)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    /// Pre-squash value `mean + std * noise`.
    pub pre_tanh: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub noise: Vec<f64>,
    clamped: Vec<bool>,
    trace: Trace,
}

/// Tanh-squashed diagonal Gaussian scaled to `[low, high]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead {
    pub net: Mlp,
    pub low: f64,
    pub high: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl GaussianHead {
    pub fn new(net: Mlp, low: f64, high: f64) -> Self {
        assert_eq!(net.output_dim() % 2, 0, "gaussian head outputs mean and log-std");
        Self {
            net,
            low,
            high,
            log_std_min: -20.0,
            log_std_max: 2.0,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim() / 2
    }

    fn centre(&self) -> f64 {
        0.5 * (self.high + self.low)
    }

    fn half_range(&self) -> f64 {
        0.5 * (self.high - self.low)
    }

    fn split(&self, out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let d = self.action_dim();
        let mean = out[..d].to_vec();
        let mut clamped = vec![false; d];
        let log_std = out[d..]
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                if l < self.log_std_min || l > self.log_std_max {
                    clamped[i] = true;
                }
                l.clamp(self.log_std_min, self.log_std_max)
            })
            .collect();
        (mean, log_std, clamped)
    }

    pub fn draw_noise(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.action_dim()).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// `action = squash(mean + std * noise)` with its log-density, including
    /// the tanh Jacobian and the affine rescaling to the bounds.
    pub fn sample_with_noise(&self, state: &[f64], noise: &[f64]) -> SquashedSample {
        let trace = self.net.trace(state);
        let (mean, log_std, clamped) = self.split(trace.output());
        let (c, s) = (self.centre(), self.half_range());
        let d = mean.len();
        let mut action = Vec::with_capacity(d);
        let mut pre = Vec::with_capacity(d);
        let mut log_prob = -(d as f64) * s.ln();
        for i in 0..d {
            let u = mean[i] + log_std[i].exp() * noise[i];
            let t = u.tanh();
            pre.push(u);
            action.push(c + s * t);
            log_prob += -0.5 * noise[i] * noise[i] - log_std[i] - HALF_LN_2PI - (1.0 - t * t + TANH_EPS).ln();
        }
        SquashedSample {
            action,
            log_prob,
            pre_tanh: pre,
            mean,
            log_std,
            noise: noise.to_vec(),
            clamped,
            trace,
        }
    }

    pub fn sample(&self, state: &[f64], rng: &mut Rng) -> SquashedSample {
        let noise = self.draw_noise(rng);
        self.sample_with_noise(state, &noise)
    }

    /// Backprop of `g_action . action + g_log_prob * log_prob` into `grad`.
    pub fn backward_sample(&self, sample: &SquashedSample, g_action: &[f64], g_log_prob: f64, grad: &mut [f64]) {
        let zeros = vec![0.0; self.action_dim()];
        self.backward_general(sample, g_action, g_log_prob, &zeros, &zeros, grad);
    }

    /// As [`Self::backward_sample`], plus direct gradients on the
    /// (clamped) mean and log-std outputs.
    pub fn backward_general(
        &self,
        sample: &SquashedSample,
        g_action: &[f64],
        g_log_prob: f64,
        g_mean: &[f64],
        g_log_std: &[f64],
        grad: &mut [f64],
    ) {
        let d = self.action_dim();
        let s = self.half_range();
        let mut dout = vec![0.0; 2 * d];
        for i in 0..d {
            let t = sample.pre_tanh[i].tanh();
            let one_m = 1.0 - t * t;
            let du = g_action[i] * s * one_m + g_log_prob * (2.0 * t * one_m) / (one_m + TANH_EPS);
            dout[i] = du + g_mean[i];
            if !sample.clamped[i] {
                dout[d + i] = du * sample.log_std[i].exp() * sample.noise[i] - g_log_prob + g_log_std[i];
            }
        }
        self.net.backward(&sample.trace, &dout, grad);
    }

    fn unsquash(&self, action: &[f64]) -> Vec<f64> {
        let (c, s) = (self.centre(), self.half_range());
        action
            .iter()
            .map(|a| ((a - c) / s).clamp(-1.0 + 1e-6, 1.0 - 1e-6))
            .collect()
    }

    /// Log-density of a given in-bounds action.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        let out = self.net.eval(state);
        self.log_prob_from(&out, action)
    }

    fn log_prob_from(&self, out: &[f64], action: &[f64]) -> f64 {
        let (mean, log_std, _) = self.split(out);
        let t = self.unsquash(action);
        let mut lp = -(t.len() as f64) * self.half_range().ln();
        for i in 0..t.len() {
            let u = t[i].atanh();
            let z = (u - mean[i]) / log_std[i].exp();
            lp += -0.5 * z * z - log_std[i] - HALF_LN_2PI - (1.0 - t[i] * t[i] + TANH_EPS).ln();
        }
        lp
    }

    /// Clamped mean and log-std of the pre-squash Gaussian.
    pub fn mean_log_std(&self, state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mean, log_std, _) = self.split(&self.net.eval(state));
        (mean, log_std)
    }

    /// Accumulates `scale * d log pi(action|state) / d params` into `grad`.
    pub fn log_prob_grad(&self, state: &[f64], action: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let trace = self.net.trace(state);
        let (mean, log_std, clamped) = self.split(trace.output());
        let lp = self.log_prob_from(trace.output(), action);
        let t = self.unsquash(action);
        let d = t.len();
        let mut dout = vec![0.0; 2 * d];
        for i in 0..d {
            let sd = log_std[i].exp();
            let z = (t[i].atanh() - mean[i]) / sd;
            dout[i] = scale * z / sd;
            if !clamped[i] {
                dout[d + i] = scale * (z * z - 1.0);
            }
        }
        self.net.backward(&trace, &dout, grad);
        lp
    }

    pub fn mode(&self, state: &[f64]) -> Vec<f64> {
        let out = self.net.eval(state);
        let d = self.action_dim();
        out[..d]
            .iter()
            .map(|m| self.centre() + self.half_range() * m.tanh())
            .collect()
    }
}

/// A stochastic policy for either action kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolicyNet {
    Categorical(CategoricalHead),
    Gaussian(GaussianHead),
}

impl PolicyNet {
    pub fn new(space: &ActionSpace, state_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        match *space {
            ActionSpace::Discrete { n } => {
                let sizes = layer_sizes(state_dim, hidden, n);
                PolicyNet::Categorical(CategoricalHead {
                    net: Mlp::with_output_scale(&sizes, rng, Some(3e-3)),
                })
            }
            ActionSpace::Continuous { dim, low, high } => {
                let sizes = layer_sizes(state_dim, hidden, 2 * dim);
                PolicyNet::Gaussian(GaussianHead::new(Mlp::with_output_scale(&sizes, rng, Some(3e-3)), low, high))
            }
        }
    }

    /// Wraps an existing network as a policy for `space`.
    pub fn from_mlp(space: &ActionSpace, net: Mlp) -> Self {
        match *space {
            ActionSpace::Discrete { .. } => PolicyNet::Categorical(CategoricalHead { net }),
            ActionSpace::Continuous { low, high, .. } => PolicyNet::Gaussian(GaussianHead::new(net, low, high)),
        }
    }

    pub fn net(&self) -> &Mlp {
        match self {
            PolicyNet::Categorical(h) => &h.net,
            PolicyNet::Gaussian(h) => &h.net,
        }
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        match self {
            PolicyNet::Categorical(h) => &mut h.net,
            PolicyNet::Gaussian(h) => &mut h.net,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, PolicyNet::Categorical(_))
    }

    /// Action probabilities for discrete policies.
    pub fn probs(&self, state: &[f64]) -> Option<Vec<f64>> {
        match self {
            PolicyNet::Categorical(h) => Some(h.probs(state)),
            PolicyNet::Gaussian(_) => None,
        }
    }

    pub fn sample(&self, state: &[f64], rng: &mut Rng) -> (Action, f64) {
        match self {
            PolicyNet::Categorical(h) => {
                let (a, lp) = h.sample(state, rng);
                (Action::Discrete(a), lp)
            }
            PolicyNet::Gaussian(h) => {
                let s = h.sample(state, rng);
                (Action::Continuous(s.action), s.log_prob)
            }
        }
    }

    /// Greedy action: argmax probability or the squashed mean.
    pub fn mode(&self, state: &[f64]) -> Action {
        match self {
            PolicyNet::Categorical(h) => Action::Discrete(argmax(&h.net.eval(state))),
            PolicyNet::Gaussian(h) => Action::Continuous(h.mode(state)),
        }
    }

    pub fn log_prob(&self, state: &[f64], action: &Action) -> f64 {
        match self {
            PolicyNet::Categorical(h) => h.log_probs(state)[action.index()],
            PolicyNet::Gaussian(h) => h.log_prob(state, action.values()),
        }
    }

    /// Accumulates `scale * grad log pi(action|state)`; returns the log-prob.
    pub fn log_prob_grad(&self, state: &[f64], action: &Action, scale: f64, grad: &mut [f64]) -> f64 {
        match self {
            PolicyNet::Categorical(h) => {
                let trace = h.net.trace(state);
                let lp = log_softmax(trace.output());
                let a = action.index();
                let dout: Vec<f64> = lp
                    .iter()
                    .enumerate()
                    .map(|(i, l)| scale * (f64::from(u8::from(i == a)) - l.exp()))
                    .collect();
                h.net.backward(&trace, &dout, grad);
                lp[a]
            }
            PolicyNet::Gaussian(h) => h.log_prob_grad(state, action.values(), scale, grad),
        }
    }
}

/// `KL(N(mean, std) || N(ref_mean, ref_std))` for diagonal Gaussians with
/// its derivatives in `mean` and `log_std`.
pub fn gaussian_kl(mean: &[f64], log_std: &[f64], ref_mean: &[f64], ref_log_std: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let d = mean.len();
    let mut kl = 0.0;
    let mut d_mean = Vec::with_capacity(d);
    let mut d_log_std = Vec::with_capacity(d);
    for i in 0..d {
        let var_ratio = (2.0 * (log_std[i] - ref_log_std[i])).exp();
        let ref_var = (2.0 * ref_log_std[i]).exp();
        let diff = mean[i] - ref_mean[i];
        kl += ref_log_std[i] - log_std[i] + 0.5 * (var_ratio + diff * diff / ref_var) - 0.5;
        d_mean.push(diff / ref_var);
        d_log_std.push(var_ratio - 1.0);
    }
    (kl, d_mean, d_log_std)
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

/// State-action value network.
///
/// Discrete critics map a state to one value per action; continuous critics
/// take the concatenated state and action and return a single value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticNet {
    pub net: Mlp,
    pub discrete: bool,
}

impl CriticNet {
    pub fn new(space: &ActionSpace, state_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let (input, output) = match *space {
            ActionSpace::Discrete { n } => (state_dim, n),
            ActionSpace::Continuous { dim, .. } => (state_dim + dim, 1),
        };
        Self {
            net: Mlp::with_output_scale(&layer_sizes(input, hidden, output), rng, Some(3e-3)),
            discrete: space.is_discrete(),
        }
    }

    pub fn input(state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(state.len() + action.len());
        x.extend_from_slice(state);
        x.extend_from_slice(action);
        x
    }

    pub fn q(&self, state: &[f64], action: &Action) -> f64 {
        match action {
            Action::Discrete(a) => self.net.eval(state)[*a],
            Action::Continuous(v) => self.net.eval(&Self::input(state, v))[0],
        }
    }

    /// All action values (discrete critics only).
    pub fn q_all(&self, state: &[f64]) -> Vec<f64> {
        debug_assert!(self.discrete);
        self.net.eval(state)
    }

    /// Accumulates `dq * grad Q(state, action)`; returns `Q(state, action)`.
    pub fn q_grad(&self, state: &[f64], action: &Action, dq: f64, grad: &mut [f64]) -> f64 {
        match action {
            Action::Discrete(a) => {
                let t = self.net.trace(state);
                let q = t.output()[*a];
                let mut dout = vec![0.0; self.net.output_dim()];
                dout[*a] = dq;
                self.net.backward(&t, &dout, grad);
                q
            }
            Action::Continuous(v) => {
                let t = self.net.trace(&Self::input(state, v));
                let q = t.output()[0];
                self.net.backward(&t, &[dq], grad);
                q
            }
        }
    }

    /// `Q(state, action)` and `dQ/daction` for continuous critics.
    pub fn q_action_grad(&self, state: &[f64], action: &[f64]) -> (f64, Vec<f64>) {
        let t = self.net.trace(&Self::input(state, action));
        let q = t.output()[0];
        let mut scratch = vec![0.0; self.net.len()];
        let dx = self.net.backward(&t, &[1.0], &mut scratch);
        (q, dx[state.len()..].to_vec())
    }
}
