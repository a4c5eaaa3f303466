//! Fitted Q evaluation of a (possibly time-dependent) policy.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::TimedPolicy;
use crate::algos::losses::critic_regression;
use crate::approx::{Adam, AdamConfig, CriticNet};
use crate::data::Transition;
use crate::env::ActionSpace;
use crate::error::ensure_finite;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FqeConfig {
    pub hidden: Vec<usize>,
    /// Iterations between hard target syncs.
    pub sync_period: usize,
    /// Iterations run before the initial estimate.
    pub warm_start: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Action draws per start state for continuous estimates.
    pub estimate_samples: usize,
}

impl Default for FqeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            sync_period: 100,
            warm_start: 2_000,
            adam: AdamConfig::default(),
            batch_size: 64,
            estimate_samples: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FqeState {
    pub net: CriticNet,
    pub target: CriticNet,
    pub opt: Adam,
    pub sync_period: usize,
    pub batch_size: usize,
    pub estimate_samples: usize,
    pub iterations: u64,
}

impl FqeState {
    pub fn new(config: &FqeConfig, space: &ActionSpace, state_dim: usize, rng: &mut Rng) -> Result<Self> {
        if config.sync_period == 0 || config.batch_size == 0 || config.estimate_samples == 0 {
            return Err(Error::Config("evaluator periods and sizes must be positive".into()));
        }
        let net = CriticNet::new(space, state_dim, &config.hidden, rng);
        Ok(Self {
            opt: Adam::new(net.net.len(), config.adam),
            target: net.clone(),
            net,
            sync_period: config.sync_period,
            batch_size: config.batch_size,
            estimate_samples: config.estimate_samples,
            iterations: 0,
        })
    }

    /// Value of `policy` at `state` and step `t` under `net`: exact for
    /// discrete spaces, `draws` samples otherwise.
    fn policy_value(
        net: &CriticNet,
        policy: &dyn TimedPolicy,
        state: &[f64],
        t: usize,
        draws: usize,
        rng: &mut Rng,
    ) -> f64 {
        match policy.probs(state, t) {
            Some(p) => net.q_all(state).iter().zip(&p).map(|(q, p)| q * p).sum(),
            None => {
                (0..draws)
                    .map(|_| net.q(state, &policy.sample(state, t, rng)))
                    .sum::<f64>()
                    / draws as f64
            }
        }
    }
}

/// `k` minibatch regressions of `F(s, a)` toward `r + discount F_target(s', a')`
/// with `a'` drawn from `policy` at step `episode_step + 1`; the target is
/// copied from `F` every `sync_period` iterations.
pub fn fqe_train(
    fqe: &mut FqeState,
    data: &[Transition],
    policy: &dyn TimedPolicy,
    k: usize,
    rng: &mut Rng,
) -> Result<()> {
    if k == 0 {
        return Ok(());
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("evaluator has no data".into()));
    }
    let mut batch = Vec::with_capacity(fqe.batch_size);
    let mut targets = Vec::with_capacity(fqe.batch_size);
    for _ in 0..k {
        batch.clear();
        targets.clear();
        for _ in 0..fqe.batch_size {
            let tr = &data[rng.gen_range(0..data.len())];
            let y = if tr.discount == 0.0 {
                tr.reward
            } else {
                let t = tr.episode_step as usize + 1;
                let v = FqeState::policy_value(&fqe.target, policy, &tr.next_state, t, 1, rng);
                tr.reward + tr.discount * v
            };
            targets.push(ensure_finite(y, "evaluator target")?);
            batch.push(tr.clone());
        }
        let (_, grad) = critic_regression(&fqe.net, &batch, &targets);
        fqe.opt.step(fqe.net.net.params_mut(), &grad)?;
        fqe.iterations += 1;
        if fqe.iterations % fqe.sync_period as u64 == 0 {
            fqe.target.net.params_mut().copy_from_slice(fqe.net.net.params());
        }
    }
    Ok(())
}

/// Mean over start states of `F(s0, a)` with `a` from `policy` at step `t`.
pub fn fqe_estimate(
    fqe: &FqeState,
    start_states: &[Vec<f64>],
    policy: &dyn TimedPolicy,
    t: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if start_states.is_empty() {
        return Err(Error::InvalidArgument("no start states to average over".into()));
    }
    let total: f64 = start_states
        .iter()
        .map(|s| FqeState::policy_value(&fqe.net, policy, s, t, fqe.estimate_samples, rng))
        .sum();
    ensure_finite(total / start_states.len() as f64, "evaluator estimate")
}
