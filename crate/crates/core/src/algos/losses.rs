//! Batch losses with analytic parameter gradients.
//!
//! Each function returns `(loss, d loss / d params)` for exactly one network
//! and treats every other input as a constant, so it can be checked against
//! finite differences in isolation.

use super::{reduce_index, ReduceMode};
use crate::approx::{gaussian_kl, log_softmax, logsumexp, softmax, CriticNet, Mlp, PolicyNet};
use crate::data::Transition;
use crate::env::Action;

/// Per-action values reduced across the ensemble, plus a constant offset.
pub fn reduced_q_all(critics: &[CriticNet], state: &[f64], mode: ReduceMode, offset: f64) -> Vec<f64> {
    let all: Vec<Vec<f64>> = critics.iter().map(|c| c.q_all(state)).collect();
    let n = all[0].len();
    let mut column = vec![0.0; all.len()];
    (0..n)
        .map(|a| {
            for (k, q) in all.iter().enumerate() {
                column[k] = q[a];
            }
            column[reduce_index(&column, mode)] + offset
        })
        .collect()
}

/// Reduced value of one continuous action and the index of the chosen member.
pub fn reduced_q(critics: &[CriticNet], state: &[f64], action: &Action, mode: ReduceMode) -> (f64, usize) {
    let qs: Vec<f64> = critics.iter().map(|c| c.q(state, action)).collect();
    let k = reduce_index(&qs, mode);
    (qs[k], k)
}

/// Trust-region term: a reference policy and its penalty weight.
#[derive(Clone, Copy)]
pub struct Trust<'a> {
    pub policy: &'a PolicyNet,
    pub alpha: f64,
}

/// Soft state value `E_a[Q(s,a) - tau log pi(a|s)] - alpha KL(pi || pi_ref)`.
///
/// Discrete policies use the exact expectation; continuous ones use the
/// single draw defined by `noise`.
#[allow(clippy::too_many_arguments)]
pub fn soft_state_value(
    policy: &PolicyNet,
    critics: &[CriticNet],
    state: &[f64],
    mode: ReduceMode,
    offset: f64,
    tau: f64,
    trust: Option<Trust<'_>>,
    noise: &[f64],
) -> f64 {
    match policy {
        PolicyNet::Categorical(h) => {
            let lp = h.log_probs(state);
            let lp_ref = trust.map(|t| match t.policy {
                PolicyNet::Categorical(r) => r.log_probs(state),
                PolicyNet::Gaussian(_) => unreachable!("trust policy kind mismatch"),
            });
            let q = reduced_q_all(critics, state, mode, offset);
            let mut v = 0.0;
            for a in 0..q.len() {
                let mut f = q[a] - tau * lp[a];
                if let (Some(t), Some(r)) = (trust, lp_ref.as_ref()) {
                    f -= t.alpha * (lp[a] - r[a]);
                }
                v += lp[a].exp() * f;
            }
            v
        }
        PolicyNet::Gaussian(h) => {
            let s = h.sample_with_noise(state, noise);
            let a = Action::Continuous(s.action.clone());
            let (q, _) = reduced_q(critics, state, &a, mode);
            let mut v = q + offset - tau * s.log_prob;
            if let Some(t) = trust {
                v -= t.alpha * trust_kl(h, t.policy, state);
            }
            v
        }
    }
}

/// Closed-form `KL(pi(.|s) || pi_ref(.|s))` of the pre-squash Gaussians,
/// equal to the KL of the squashed policies.
fn trust_kl(policy: &crate::approx::GaussianHead, reference: &PolicyNet, state: &[f64]) -> f64 {
    let PolicyNet::Gaussian(r) = reference else {
        unreachable!("trust policy kind mismatch")
    };
    let (m, ls) = policy.mean_log_std(state);
    let (rm, rls) = r.mean_log_std(state);
    gaussian_kl(&m, &ls, &rm, &rls).0
}

/// Mean squared error `mean (Q(s,a) - y)^2` for one critic.
pub fn critic_regression(critic: &CriticNet, batch: &[Transition], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; critic.net.len()];
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        // Forward once to get the error, then backprop 2 (q - y) / n.
        let q = critic.q(&t.state, &t.action);
        let e = q - y;
        loss += e * e / n;
        critic.q_grad(&t.state, &t.action, 2.0 * e / n, &mut grad);
    }
    (loss, grad)
}

/// Actions and proposal log-densities used by the continuous penalty.
#[derive(Clone, Debug)]
pub struct PenaltySamples {
    pub actions: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
}

/// `mean_s [logsumexp_a Q(s,a) - Q(s, a_data)]` for one critic.
///
/// Discrete critics use the exact logsumexp. Continuous critics use the
/// importance-weighted estimate `logsumexp_j (Q(s,a_j) - log q(a_j)) - log m`
/// over the proposal draws in `samples` (one entry per transition).
pub fn cql_penalty(critic: &CriticNet, batch: &[Transition], samples: Option<&[PenaltySamples]>) -> (f64, Vec<f64>) {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; critic.net.len()];
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        if critic.discrete {
            let trace = critic.net.trace(&t.state);
            let q = trace.output();
            let a = t.action.index();
            loss += (logsumexp(q) - q[a]) / n;
            let mut dout = softmax(q);
            dout[a] -= 1.0;
            for d in &mut dout {
                *d /= n;
            }
            critic.net.backward(&trace, &dout, &mut grad);
        } else {
            let ps = &samples.expect("continuous penalty needs proposal samples")[i];
            let m = ps.actions.len() as f64;
            let logits: Vec<f64> = ps
                .actions
                .iter()
                .zip(&ps.log_density)
                .map(|(a, ld)| critic.net.eval(&CriticNet::input(&t.state, a))[0] - ld)
                .collect();
            loss += (logsumexp(&logits) - m.ln()) / n;
            let w = softmax(&logits);
            for (a, wj) in ps.actions.iter().zip(&w) {
                critic.q_grad(&t.state, &Action::Continuous(a.clone()), wj / n, &mut grad);
            }
            loss -= critic.q_grad(&t.state, &t.action, -1.0 / n, &mut grad) / n;
        }
    }
    (loss, grad)
}

/// Soft actor loss `mean_s (E_a[tau log pi - Q] + alpha KL(pi || pi_ref))`.
///
/// Continuous policies are reparameterized through `noise` (one vector per
/// state); the gradient flows through the ensemble member selected at the
/// sampled action. Discrete policies use the exact expectation.
#[allow(clippy::too_many_arguments)]
pub fn soft_actor_loss(
    actor: &PolicyNet,
    critics: &[CriticNet],
    states: &[&[f64]],
    mode: ReduceMode,
    tau: f64,
    trust: Option<Trust<'_>>,
    noise: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    let n = states.len() as f64;
    let mut grad = vec![0.0; actor.net().len()];
    let mut loss = 0.0;
    match actor {
        PolicyNet::Categorical(h) => {
            for s in states {
                let trace = h.net.trace(s);
                let lp = log_softmax(trace.output());
                let q = reduced_q_all(critics, s, mode, 0.0);
                let lp_ref = trust.map(|t| t.policy.net().eval(s)).map(|z| log_softmax(&z));
                let f: Vec<f64> = (0..lp.len())
                    .map(|a| {
                        let mut f = tau * lp[a] - q[a];
                        if let (Some(t), Some(r)) = (trust, lp_ref.as_ref()) {
                            f += t.alpha * (lp[a] - r[a]);
                        }
                        f
                    })
                    .collect();
                let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
                let mean_f: f64 = p.iter().zip(&f).map(|(p, f)| p * f).sum();
                loss += mean_f / n;
                let dout: Vec<f64> = p.iter().zip(&f).map(|(p, f)| p * (f - mean_f) / n).collect();
                h.net.backward(&trace, &dout, &mut grad);
            }
        }
        PolicyNet::Gaussian(h) => {
            for (s, z) in states.iter().zip(noise) {
                let sample = h.sample_with_noise(s, z);
                let a = Action::Continuous(sample.action.clone());
                let (_, k) = reduced_q(critics, s, &a, mode);
                let (q, dq) = critics[k].q_action_grad(s, &sample.action);
                let mut l = tau * sample.log_prob - q;
                let g_action: Vec<f64> = dq.iter().map(|d| -d / n).collect();
                let d = sample.mean.len();
                let mut g_mean = vec![0.0; d];
                let mut g_log_std = vec![0.0; d];
                if let Some(t) = trust {
                    let PolicyNet::Gaussian(r) = t.policy else {
                        unreachable!("trust policy kind mismatch")
                    };
                    let (rm, rls) = r.mean_log_std(s);
                    let (kl, dm, dls) = gaussian_kl(&sample.mean, &sample.log_std, &rm, &rls);
                    l += t.alpha * kl;
                    for i in 0..d {
                        g_mean[i] = t.alpha * dm[i] / n;
                        g_log_std[i] = t.alpha * dls[i] / n;
                    }
                }
                loss += l / n;
                h.backward_general(&sample, &g_action, tau / n, &g_mean, &g_log_std, &mut grad);
            }
        }
    }
    (loss, grad)
}

/// Mean policy log-probability over `states`: exact `-entropy` for discrete
/// policies, the reparameterized draw for continuous ones.
pub fn mean_log_prob(actor: &PolicyNet, states: &[&[f64]], noise: &[Vec<f64>]) -> f64 {
    let n = states.len() as f64;
    match actor {
        PolicyNet::Categorical(h) => states
            .iter()
            .map(|s| {
                let lp = h.log_probs(s);
                lp.iter().map(|l| l.exp() * l).sum::<f64>()
            })
            .sum::<f64>()
            / n,
        PolicyNet::Gaussian(h) => states
            .iter()
            .zip(noise)
            .map(|(s, z)| h.sample_with_noise(s, z).log_prob)
            .sum::<f64>()
            / n,
    }
}

/// Temperature loss `-alpha (mean log pi + target)` and its derivative in log-alpha.
pub fn alpha_loss(log_alpha: f64, mean_log_pi: f64, target_entropy: f64) -> (f64, f64) {
    let l = -log_alpha.exp() * (mean_log_pi + target_entropy);
    (l, l)
}

/// `-mean w_i log pi(a_i|s_i)`; unit weights give behavior cloning.
pub fn weighted_nll(policy: &PolicyNet, batch: &[Transition], weights: Option<&[f64]>) -> (f64, Vec<f64>) {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; policy.net().len()];
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let lp = policy.log_prob_grad(&t.state, &t.action, -w / n, &mut grad);
        loss -= w * lp / n;
    }
    (loss, grad)
}

/// Asymmetric squared error `|rho - 1(u < 0)| u^2`.
pub fn expectile_loss(u: f64, rho: f64) -> f64 {
    let w = if u < 0.0 { 1.0 - rho } else { rho };
    w * u * u
}

/// `mean L(y - V(s))` for a scalar value network; `rho = 0.5` is half the MSE.
pub fn value_regression(value: &Mlp, states: &[&[f64]], targets: &[f64], rho: Option<f64>) -> (f64, Vec<f64>) {
    let n = states.len() as f64;
    let mut grad = vec![0.0; value.len()];
    let mut loss = 0.0;
    for (s, y) in states.iter().zip(targets) {
        let trace = value.trace(s);
        let u = y - trace.output()[0];
        let (l, dl_du) = match rho {
            Some(rho) => {
                let w = if u < 0.0 { 1.0 - rho } else { rho };
                (expectile_loss(u, rho), 2.0 * w * u)
            }
            None => (u * u, 2.0 * u),
        };
        loss += l / n;
        value.backward(&trace, &[-dl_du / n], &mut grad);
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::gradcheck::{finite_difference_check, random_coords};
    use crate::env::ActionSpace;
    use crate::rng::from_seed;
    use rand::Rng as _;

    const TOL: f64 = 1e-4;
    const H: f64 = 1e-5;

    fn discrete() -> ActionSpace {
        ActionSpace::Discrete { n: 3 }
    }

    fn continuous() -> ActionSpace {
        ActionSpace::Continuous { dim: 2, low: -1.0, high: 1.0 }
    }

    fn batch(space: &ActionSpace, n: usize, seed: u64) -> Vec<Transition> {
        let mut rng = from_seed(seed);
        (0..n)
            .map(|i| Transition {
                state: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: match space.sample_uniform(&mut rng) {
                    Action::Continuous(v) => Action::Continuous(v.iter().map(|x| x * 0.9).collect()),
                    a => a,
                },
                reward: rng.gen_range(-1.0..1.0),
                next_state: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                discount: if i % 3 == 0 { 0.0 } else { 0.9 },
                timeout: false,
                episode_step: i as u32,
            })
            .collect()
    }

    fn actor(space: &ActionSpace, seed: u64) -> PolicyNet {
        let mut rng = from_seed(seed);
        let mut p = PolicyNet::new(space, 4, &[8, 8], &mut rng);
        // Larger output weights so the gradients are not dominated by the floor.
        let net = crate::approx::Mlp::new(p.net().sizes(), &mut rng);
        *p.net_mut() = net;
        p
    }

    fn critic(space: &ActionSpace, seed: u64) -> CriticNet {
        let mut rng = from_seed(seed);
        let mut c = CriticNet::new(space, 4, &[8, 8], &mut rng);
        c.net = crate::approx::Mlp::new(c.net.sizes(), &mut rng);
        c
    }

    fn with_policy(p: &PolicyNet, params: &[f64]) -> PolicyNet {
        let mut q = p.clone();
        q.net_mut().params_mut().copy_from_slice(params);
        q
    }

    fn with_critic(c: &CriticNet, params: &[f64]) -> CriticNet {
        let mut q = c.clone();
        q.net.params_mut().copy_from_slice(params);
        q
    }

    fn check_policy<F: Fn(&PolicyNet) -> (f64, Vec<f64>)>(p: &PolicyNet, f: F) -> f64 {
        let (_, g) = f(p);
        let coords = random_coords(p.net().len(), 40, &mut from_seed(5));
        finite_difference_check(|x| f(&with_policy(p, x)).0, p.net().params(), &g, &coords, H)
    }

    fn check_critic<F: Fn(&CriticNet) -> (f64, Vec<f64>)>(c: &CriticNet, f: F) -> f64 {
        let (_, g) = f(c);
        let coords = random_coords(c.net.len(), 40, &mut from_seed(6));
        finite_difference_check(|x| f(&with_critic(c, x)).0, c.net.params(), &g, &coords, H)
    }

    fn noise(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = from_seed(seed);
        (0..n)
            .map(|_| (0..2).map(|_| rng.sample(rand_distr::StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn critic_regression_gradient() {
        for space in [discrete(), continuous()] {
            let b = batch(&space, 6, 1);
            let c = critic(&space, 2);
            let y: Vec<f64> = (0..6).map(|i| i as f64 * 0.3 - 1.0).collect();
            let err = check_critic(&c, |c| critic_regression(c, &b, &y));
            assert!(err < TOL, "{space:?}: {err}");
        }
    }

    #[test]
    fn cql_penalty_gradient_and_sign() {
        let b = batch(&discrete(), 6, 3);
        let c = critic(&discrete(), 4);
        let (p, _) = cql_penalty(&c, &b, None);
        assert!(p >= 0.0);
        assert!(check_critic(&c, |c| cql_penalty(c, &b, None)) < TOL);

        let space = continuous();
        let b = batch(&space, 4, 5);
        let c = critic(&space, 6);
        let mut rng = from_seed(7);
        let samples: Vec<PenaltySamples> = (0..4)
            .map(|_| PenaltySamples {
                actions: (0..5)
                    .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect(),
                log_density: vec![-(4.0f64).ln(); 5],
            })
            .collect();
        let err = check_critic(&c, |c| cql_penalty(c, &b, Some(&samples)));
        assert!(err < TOL, "{err}");
    }

    #[test]
    fn cql_penalty_uniform_q_is_log_actions() {
        let space = discrete();
        let mut c = CriticNet::new(&space, 4, &[8], &mut from_seed(1));
        c.net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let b = batch(&space, 5, 2);
        let (p, _) = cql_penalty(&c, &b, None);
        assert!((p - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn soft_actor_gradient_all_variants() {
        for space in [discrete(), continuous()] {
            let b = batch(&space, 5, 8);
            let states: Vec<&[f64]> = b.iter().map(|t| t.state.as_slice()).collect();
            let critics = vec![critic(&space, 9), critic(&space, 10)];
            let a = actor(&space, 11);
            let reference = actor(&space, 12);
            let z = noise(5, 13);
            for trust in [None, Some(Trust { policy: &reference, alpha: 0.7 })] {
                for mode in [ReduceMode::Min, ReduceMode::Median] {
                    let err = check_policy(&a, |p| soft_actor_loss(p, &critics, &states, mode, 0.3, trust, &z));
                    assert!(err < TOL, "{space:?} trust={} {mode:?}: {err}", trust.is_some());
                }
            }
        }
    }

    #[test]
    fn identical_trust_policy_adds_nothing() {
        for space in [discrete(), continuous()] {
            let b = batch(&space, 5, 8);
            let states: Vec<&[f64]> = b.iter().map(|t| t.state.as_slice()).collect();
            let critics = vec![critic(&space, 9)];
            let a = actor(&space, 11);
            let z = noise(5, 13);
            let plain = soft_actor_loss(&a, &critics, &states, ReduceMode::Min, 0.3, None, &z);
            let trust = Trust { policy: &a, alpha: 5.0 };
            let tr = soft_actor_loss(&a, &critics, &states, ReduceMode::Min, 0.3, Some(trust), &z);
            assert!((plain.0 - tr.0).abs() < 1e-12);
            for (x, y) in plain.1.iter().zip(&tr.1) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nll_gradients() {
        for space in [discrete(), continuous()] {
            let b = batch(&space, 6, 14);
            let a = actor(&space, 15);
            let w: Vec<f64> = (0..6).map(|i| 0.5 + i as f64).collect();
            assert!(check_policy(&a, |p| weighted_nll(p, &b, None)) < TOL);
            assert!(check_policy(&a, |p| weighted_nll(p, &b, Some(&w))) < TOL);
        }
    }

    #[test]
    fn value_gradients() {
        let mut rng = from_seed(16);
        let v = crate::approx::Mlp::new(&[4, 8, 8, 1], &mut rng);
        let states: Vec<Vec<f64>> = (0..7).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
        let y: Vec<f64> = (0..7).map(|i| (i as f64 - 3.0) * 0.4).collect();
        for rho in [None, Some(0.7), Some(0.9)] {
            let f = |p: &[f64]| value_regression(&v.with_params(p), &refs, &y, rho);
            let (_, g) = f(v.params());
            let coords = random_coords(v.len(), 40, &mut rng);
            let err = finite_difference_check(|p| f(p).0, v.params(), &g, &coords, H);
            assert!(err < TOL, "{rho:?}: {err}");
        }
    }

    #[test]
    fn alpha_gradient_signs() {
        let (_, g) = alpha_loss(0.0, -1.0, 1.0);
        assert_eq!(g, 0.0);
        // Entropy 0.5 below target 1 means mean log pi = -0.5: alpha should grow.
        let (_, g) = alpha_loss(0.0, -0.5, 1.0);
        assert!(g < 0.0);
        let (_, g) = alpha_loss(0.0, -2.0, 1.0);
        assert!(g > 0.0);
        let h = 1e-6;
        let f = |x: f64| alpha_loss(x, -0.3, 1.2).0;
        let numeric = (f(0.2 + h) - f(0.2 - h)) / (2.0 * h);
        assert!((numeric - alpha_loss(0.2, -0.3, 1.2).1).abs() < 1e-8);
    }

    #[test]
    fn expectile_examples() {
        assert!((expectile_loss(1.0, 0.7) - 0.7).abs() < 1e-15);
        assert!((expectile_loss(-1.0, 0.7) - 0.3).abs() < 1e-15);
        let mut rng = from_seed(17);
        for _ in 0..1000 {
            let u: f64 = rng.gen_range(-100.0..100.0);
            assert_eq!(expectile_loss(u, 0.5), 0.5 * u * u);
        }
    }

    #[test]
    fn discrete_soft_value_is_exact_expectation() {
        let space = discrete();
        let a = actor(&space, 20);
        let critics = vec![critic(&space, 21)];
        let s = [0.1, -0.2, 0.3, 0.4];
        let v = soft_state_value(&a, &critics, &s, ReduceMode::Min, 0.0, 0.5, None, &[]);
        let p = a.probs(&s).unwrap();
        let q = critics[0].q_all(&s);
        let want: f64 = (0..3).map(|i| p[i] * (q[i] - 0.5 * p[i].ln())).sum();
        assert!((v - want).abs() < 1e-12);
    }
}
