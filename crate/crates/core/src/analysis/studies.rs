//! Rollout-based diagnostics: evaluation, interpolation, value shift and
//! discounted-return estimates.

use crate::approx::PolicyNet;
use crate::data::normalized_return;
use crate::env::{Action, Env, Environment};
use crate::rng::{derive_seed, from_seed, Rng};
use crate::{Error, Result};

/// Undiscounted returns of `episodes` episodes on a copy of `env`. Episode
/// `i` always uses the same reset and policy randomness for a given `seed`.
pub fn evaluate(
    env: &Env,
    episodes: usize,
    seed: u64,
    mut policy: impl FnMut(&[f64], usize, &mut Rng) -> Action,
) -> Result<Vec<f64>> {
    let mut env = env.clone();
    (0..episodes)
        .map(|i| {
            let mut rng = from_seed(derive_seed(seed, "episode", i as u64));
            crate::env::rollout_return(&mut env, &mut rng, &mut policy)
        })
        .collect()
}

/// Mean normalized return of `policy`, acting greedily or by sampling.
pub fn evaluate_policy(env: &Env, policy: &PolicyNet, episodes: usize, seed: u64, greedy: bool) -> Result<f64> {
    if greedy {
        return evaluate_greedy(env, policy, episodes, seed);
    }
    let raw = evaluate(env, episodes, seed, |s, _, rng| policy.sample(s, rng).0)?;
    normalized_return(raw.iter().sum::<f64>() / raw.len().max(1) as f64, &env.spec().reference)
}

/// Mean normalized return of the greedy `policy`.
pub fn evaluate_greedy(env: &Env, policy: &PolicyNet, episodes: usize, seed: u64) -> Result<f64> {
    let raw = evaluate(env, episodes, seed, |s, _, _| policy.mode(s))?;
    let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
    normalized_return(mean, &env.spec().reference)
}

/// Greedy evaluation of `(1 - l) start + l end` for each `l` in `lambdas`.
pub fn linear_interp_eval(
    start: &PolicyNet,
    end: &PolicyNet,
    lambdas: &[f64],
    env: &Env,
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if start.net().sizes() != end.net().sizes() || start.is_discrete() != end.is_discrete() {
        return Err(Error::Shape(format!(
            "cannot interpolate {:?} and {:?}",
            start.net().sizes(),
            end.net().sizes()
        )));
    }
    crate::par::map(crate::par::Parallelism::Parallel, lambdas, |&l| {
        let mut p = start.clone();
        for (x, (a, b)) in p
            .net_mut()
            .params_mut()
            .iter_mut()
            .zip(start.net().params().iter().zip(end.net().params()))
        {
            *x = (1.0 - l) * a + l * b;
        }
        evaluate_greedy(env, &p, n_rollouts, seed)
    })
    .into_iter()
    .collect()
}

/// `n` equally spaced points covering `[0, 1]`.
pub fn lambda_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Mean discounted return over `n_rollouts` episodes truncated at `horizon` steps.
pub fn true_return_estimate(
    env: &Env,
    n_rollouts: usize,
    horizon: usize,
    gamma: f64,
    seed: u64,
    mut policy: impl FnMut(&[f64], &mut Rng) -> Action,
) -> Result<f64> {
    if n_rollouts == 0 {
        return Err(Error::InvalidArgument("need at least one rollout".into()));
    }
    let mut env = env.clone();
    let mut total = 0.0;
    for i in 0..n_rollouts {
        let mut rng = from_seed(derive_seed(seed, "discounted", i as u64));
        let mut state = env.reset(&mut rng);
        let mut discount = 1.0;
        for _ in 0..horizon {
            let step = env.step(&policy(&state, &mut rng))?;
            total += discount * step.reward;
            discount *= gamma;
            if step.terminal || step.timeout {
                break;
            }
            state = step.next_state;
        }
    }
    Ok(total / n_rollouts as f64)
}

/// `d = q0(s, a_x) - q0(s, a_0)` with `a_0 ~ pi_0` and `a_x ~ pi_x`. Both
/// draws at state `i` use the same seed, so identical policies give `d = 0`.
pub fn value_shift(
    q0: impl Fn(&[f64], &Action) -> f64,
    pi0: &PolicyNet,
    pix: &PolicyNet,
    states: &[Vec<f64>],
    seed: u64,
) -> Vec<f64> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let k = derive_seed(seed, "shift", i as u64);
            let (a0, _) = pi0.sample(s, &mut from_seed(k));
            let (ax, _) = pix.sample(s, &mut from_seed(k));
            q0(s, &ax) - q0(s, &a0)
        })
        .collect()
}
