use super::*;
use crate::approx::{gaussian_kl, PolicyNet};
use crate::data::Transition;
use crate::env::{Action, ActionSpace, EnvSpec, ReferenceReturns};
use crate::rng::from_seed;
use rand::Rng as _;

fn spec(state_dim: usize, action_space: ActionSpace) -> EnvSpec {
    EnvSpec {
        name: "test".into(),
        state_dim,
        action_space,
        horizon: 10,
        gamma: 0.9,
        reference: ReferenceReturns {
            random_return: 0.0,
            expert_return: 1.0,
        },
    }
}

fn small(config: AgentConfig) -> AgentConfig {
    AgentConfig {
        hidden: vec![8],
        ..config
    }
}

fn random_batch(space: &ActionSpace, n: usize, discount: f64, seed: u64) -> Vec<Transition> {
    let mut rng = from_seed(seed);
    (0..n)
        .map(|i| Transition {
            state: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: space.sample_uniform(&mut rng),
            reward: rng.gen_range(-1.0..1.0),
            next_state: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            discount,
            timeout: false,
            episode_step: i as u32,
        })
        .collect()
}

fn constant_critic(c: &mut crate::approx::CriticNet, value: f64) {
    let n = c.net.output_dim();
    let p = c.net.params_mut();
    p.iter_mut().for_each(|x| *x = 0.0);
    let len = p.len();
    p[len - n..].iter_mut().for_each(|x| *x = value);
}

#[test]
fn sac_target_plug_in() {
    let space = ActionSpace::Discrete { n: 2 };
    let config = small(AgentConfig {
        ensemble: 1,
        ..Default::default()
    });
    let mut a = Agent::new(Algorithm::Sac, config, &spec(3, space.clone()), &[], &mut from_seed(1)).unwrap();
    a.log_alpha = f64::NEG_INFINITY;
    constant_critic(&mut a.targets[0], 2.0);
    let mut b = random_batch(&space, 1, 0.9, 2);
    b[0].reward = 1.0;
    let y = a.soft_targets(&b, None, &mut from_seed(3));
    assert!((y[0] - 2.8).abs() < 1e-12, "{y:?}");
}

#[test]
fn terminal_targets_equal_reward_for_every_algorithm() {
    for space in [ActionSpace::Discrete { n: 3 }, ActionSpace::Continuous { dim: 2, low: -1.0, high: 1.0 }] {
        let b = random_batch(&space, 8, 0.0, 4);
        for alg in [Algorithm::Sac, Algorithm::Inac, Algorithm::Iql, Algorithm::Cql, Algorithm::Proto, Algorithm::Pex] {
            let a = Agent::new(alg, small(AgentConfig::default()), &spec(3, space.clone()), &[], &mut from_seed(5)).unwrap();
            let y = if alg == Algorithm::Iql {
                a.iql_targets(&b).unwrap()
            } else {
                let trust = (alg == Algorithm::Proto).then_some(1.0);
                a.soft_targets(&b, trust, &mut from_seed(6))
            };
            for (t, y) in b.iter().zip(&y) {
                assert_eq!(t.reward, *y, "{alg:?}");
            }
        }
    }
}

#[test]
fn self_loop_critic_converges_to_geometric_sum() {
    let space = ActionSpace::Discrete { n: 1 };
    let config = AgentConfig {
        hidden: vec![8],
        ensemble: 1,
        polyak: 0.05,
        adam: crate::approx::AdamConfig {
            lr: 3e-3,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut a = Agent::new(Algorithm::Sac, config, &spec(1, space), &[], &mut from_seed(7)).unwrap();
    let t = Transition {
        state: vec![1.0],
        action: Action::Discrete(0),
        reward: 1.0,
        next_state: vec![1.0],
        discount: 0.9,
        timeout: false,
        episode_step: 0,
    };
    let batch = vec![t; 4];
    let mut rng = from_seed(8);
    for _ in 0..8000 {
        a.sac_update(&batch, &mut rng).unwrap();
    }
    let q = a.critics[0].q(&[1.0], &Action::Discrete(0));
    assert!((q - 10.0).abs() < 0.1, "{q}");
}

#[test]
fn alpha_moves_toward_target_entropy() {
    let space = ActionSpace::Discrete { n: 4 };
    let b = random_batch(&space, 8, 0.9, 9);
    let run = |target: f64| {
        let config = small(AgentConfig {
            auto_alpha: true,
            target_entropy: Some(target),
            ..Default::default()
        });
        let mut a = Agent::new(Algorithm::Sac, config, &spec(3, space.clone()), &[], &mut from_seed(10)).unwrap();
        // A zero actor is exactly uniform: entropy ln 4.
        a.actor.net_mut().params_mut().iter_mut().for_each(|p| *p = 0.0);
        let before = a.tau();
        let after = a.sac_alpha_update(&b, &mut from_seed(11)).unwrap();
        (before, after)
    };
    let ln4 = 4f64.ln();
    let (b0, a0) = run(ln4);
    assert_eq!(b0, a0);
    let (b1, a1) = run(2.0 * ln4);
    assert!(a1 > b1);
    let (b2, a2) = run(0.5 * ln4);
    assert!(a2 < b2 && a2 > 0.0);
}

#[test]
fn inac_weight_examples() {
    let space = ActionSpace::Discrete { n: 1 };
    let mut a = Agent::new(Algorithm::Inac, small(AgentConfig::default()), &spec(3, space.clone()), &[], &mut from_seed(12)).unwrap();
    for c in &mut a.critics {
        constant_critic(c, 0.0);
    }
    a.value.as_mut().unwrap().params_mut().iter_mut().for_each(|p| *p = 0.0);
    let b = random_batch(&space, 4, 0.9, 13);
    // Single action: pi_beta = 1 and Q = V, so every weight is exp(0).
    for w in a.inac_weights(&b).unwrap() {
        assert!((w - 1.0).abs() < 1e-12);
    }
    // With unit weights the actor loss is the plain negative log-likelihood.
    let (l, _) = losses::weighted_nll(&a.actor, &b, Some(&a.inac_weights(&b).unwrap()));
    let (nll, _) = losses::weighted_nll(&a.actor, &b, None);
    assert!((l - nll).abs() < 1e-12);

    let space = ActionSpace::Discrete { n: 2 };
    let mut a = Agent::new(Algorithm::Inac, small(AgentConfig::default()), &spec(3, space.clone()), &[], &mut from_seed(14)).unwrap();
    // Behavior logits (0, -1000): action 1 is essentially never taken.
    let beh = a.behavior.as_mut().unwrap().net_mut().params_mut();
    beh.iter_mut().for_each(|p| *p = 0.0);
    let len = beh.len();
    beh[len - 1] = -1000.0;
    let mut b = random_batch(&space, 3, 0.9, 15);
    b.iter_mut().for_each(|t| t.action = Action::Discrete(1));
    for w in a.inac_weights(&b).unwrap() {
        assert!((w - 5f64.exp()).abs() < 1e-9, "{w}");
    }
}

#[test]
fn inac_suppresses_out_of_dataset_actions() {
    let space = ActionSpace::Discrete { n: 2 };
    let config = small(AgentConfig {
        adam: crate::approx::AdamConfig {
            lr: 3e-3,
            ..Default::default()
        },
        ..Default::default()
    });
    let mut a = Agent::new(Algorithm::Inac, config, &spec(2, space), &[], &mut from_seed(16)).unwrap();
    let s0 = vec![1.0, 0.0];
    let s1 = vec![0.0, 1.0];
    let batch = vec![
        Transition {
            state: s0.clone(),
            action: Action::Discrete(0),
            reward: 0.0,
            next_state: s1.clone(),
            discount: 0.9,
            timeout: false,
            episode_step: 0,
        },
        Transition {
            state: s1.clone(),
            action: Action::Discrete(0),
            reward: 1.0,
            next_state: s0.clone(),
            discount: 0.0,
            timeout: false,
            episode_step: 1,
        },
    ];
    let mut rng = from_seed(17);
    for _ in 0..3000 {
        a.inac_update(&batch, &mut rng).unwrap();
    }
    for s in [&s0, &s1] {
        let p = a.actor.probs(s).unwrap();
        assert!(p[1] < 0.05, "{p:?}");
    }
}

#[test]
fn invalid_expectile_and_temperature_are_rejected() {
    let space = ActionSpace::Discrete { n: 2 };
    for rho in [0.0, 1.0, 1.5] {
        let config = small(AgentConfig {
            expectile: rho,
            ..Default::default()
        });
        assert!(Agent::new(Algorithm::Iql, config.clone(), &spec(3, space.clone()), &[], &mut from_seed(1)).is_err());
        let mut a = Agent::new(Algorithm::Iql, small(AgentConfig::default()), &spec(3, space.clone()), &[], &mut from_seed(1)).unwrap();
        a.config.expectile = rho;
        assert!(a.iql_update(&random_batch(&space, 4, 0.9, 2)).is_err());
    }
    let mut a = Agent::new(Algorithm::Inac, small(AgentConfig::default()), &spec(3, space.clone()), &[], &mut from_seed(1)).unwrap();
    a.log_alpha = f64::NEG_INFINITY;
    assert!(a.inac_update(&random_batch(&space, 4, 0.9, 2), &mut from_seed(3)).is_err());
}

fn paired(alg_a: Algorithm, alg_b: Algorithm, config: AgentConfig, space: &ActionSpace) -> (Agent, Agent) {
    let s = spec(3, space.clone());
    let a = Agent::new(alg_a, config.clone(), &s, &[], &mut from_seed(20)).unwrap();
    let b = Agent::new(alg_b, config, &s, &[], &mut from_seed(20)).unwrap();
    (a, b)
}

#[test]
fn zero_weight_penalty_matches_plain_update() {
    for space in [ActionSpace::Discrete { n: 3 }, ActionSpace::Continuous { dim: 2, low: -1.0, high: 1.0 }] {
        let config = small(AgentConfig {
            alpha_cql: 0.0,
            ..Default::default()
        });
        let (mut cql, mut sac) = paired(Algorithm::Cql, Algorithm::Sac, config, &space);
        let (mut r1, mut r2) = (from_seed(21), from_seed(21));
        for i in 0..5 {
            let b = random_batch(&space, 8, 0.9, 100 + i);
            cql.cql_update(&b, &mut r1).unwrap();
            sac.sac_update(&b, &mut r2).unwrap();
        }
        assert_eq!(cql.actor, sac.actor);
        assert_eq!(cql.critics, sac.critics);
    }
}

#[test]
fn penalty_is_nonnegative_on_discrete_batches() {
    let space = ActionSpace::Discrete { n: 4 };
    let mut a = Agent::new(Algorithm::Cql, small(AgentConfig::default()), &spec(3, space.clone()), &[], &mut from_seed(22)).unwrap();
    let mut rng = from_seed(23);
    for i in 0..20 {
        let b = random_batch(&space, 8, 0.9, 200 + i);
        let r = a.cql_update(&b, &mut rng).unwrap();
        assert!(r.penalty.unwrap() >= 0.0);
    }
}

#[test]
fn trust_region_reduces_to_plain_update() {
    let space = ActionSpace::Discrete { n: 3 };
    let cfg = small(AgentConfig::default());
    // Annealed to zero weight.
    let (mut p, mut s) = paired(Algorithm::Proto, Algorithm::Sac, cfg.clone(), &space);
    let (mut r1, mut r2) = (from_seed(24), from_seed(24));
    for i in 0..5 {
        let b = random_batch(&space, 8, 0.9, 300 + i);
        p.proto_update(&b, 1.0, &mut r1).unwrap();
        s.sac_update(&b, &mut r2).unwrap();
    }
    assert_eq!(p.actor, s.actor);
    assert_eq!(p.critics, s.critics);
    // Identical trust policy: the first step matches for any weight.
    for space in [space, ActionSpace::Continuous { dim: 2, low: -1.0, high: 1.0 }] {
        let (mut p, mut s) = paired(Algorithm::Proto, Algorithm::Sac, cfg.clone(), &space);
        let b = random_batch(&space, 8, 0.9, 400);
        p.proto_update(&b, 0.0, &mut from_seed(25)).unwrap();
        s.sac_update(&b, &mut from_seed(25)).unwrap();
        assert_eq!(p.critics, s.critics);
        for (x, y) in p.actor.net().params().iter().zip(s.actor.net().params()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

fn mean_kl(a: &PolicyNet, b: &PolicyNet, states: &[Vec<f64>]) -> f64 {
    let (PolicyNet::Gaussian(a), PolicyNet::Gaussian(b)) = (a, b) else {
        panic!("gaussian only")
    };
    states
        .iter()
        .map(|s| {
            let (m, l) = a.mean_log_std(s);
            let (rm, rl) = b.mean_log_std(s);
            gaussian_kl(&m, &l, &rm, &rl).0
        })
        .sum::<f64>()
        / states.len() as f64
}

#[test]
fn strong_trust_region_limits_policy_drift() {
    let space = ActionSpace::Continuous { dim: 2, low: -1.0, high: 1.0 };
    let drift = |alpha0: f64| {
        let cfg = small(AgentConfig {
            proto_alpha0: alpha0,
            proto_polyak: 1e-300,
            ..Default::default()
        });
        let mut a = Agent::new(Algorithm::Proto, cfg, &spec(3, space.clone()), &[], &mut from_seed(26)).unwrap();
        let mut rng = from_seed(27);
        for i in 0..100 {
            let b = random_batch(&space, 16, 0.9, 500 + i);
            a.proto_update(&b, 0.0, &mut rng).unwrap();
        }
        let states: Vec<Vec<f64>> = random_batch(&space, 64, 0.9, 999).into_iter().map(|t| t.state).collect();
        mean_kl(&a.actor, a.trust.as_ref().unwrap(), &states)
    };
    let free = drift(0.0);
    let held = drift(1e3);
    assert!(held < free, "held {held} free {free}");
}

#[test]
fn offline_anchor_is_never_trained() {
    let space = ActionSpace::Discrete { n: 3 };
    let mut a = Agent::new(Algorithm::Pex, small(AgentConfig::default()), &spec(3, space.clone()), &[], &mut from_seed(28)).unwrap();
    let before = a.anchor.clone().unwrap();
    let mut rng = from_seed(29);
    for i in 0..20 {
        a.update(Algorithm::Pex, &random_batch(&space, 8, 0.9, 600 + i), 0.0, &mut rng).unwrap();
    }
    assert_eq!(a.anchor.as_ref().unwrap().net().params(), before.net().params());
    assert_ne!(a.actor.net().params(), before.net().params());
}

#[test]
fn min_reduce_never_exceeds_median_targets() {
    for space in [ActionSpace::Discrete { n: 3 }, ActionSpace::Continuous { dim: 2, low: -1.0, high: 1.0 }] {
        let cfg = small(AgentConfig {
            ensemble: 5,
            ..Default::default()
        });
        let mut a = Agent::new(Algorithm::Sac, cfg, &spec(3, space.clone()), &[], &mut from_seed(30)).unwrap();
        let b = random_batch(&space, 32, 0.9, 31);
        a.config.reduce = ReduceMode::Median;
        let med = a.soft_targets(&b, None, &mut from_seed(32));
        a.config.reduce = ReduceMode::Min;
        let min = a.soft_targets(&b, None, &mut from_seed(32));
        for (lo, hi) in min.iter().zip(&med) {
            assert!(lo <= hi);
        }
    }
}

#[test]
fn boost_lasts_until_state_is_updated() {
    let space = ActionSpace::Discrete { n: 2 };
    let mut a = Agent::new(Algorithm::Sac, small(AgentConfig::default()), &spec(3, space.clone()), &[2], &mut from_seed(33)).unwrap();
    let boosted = [0.0, 0.0, 1.0];
    let plain = [1.0, 0.0, 0.0];
    assert_eq!(a.boost_offset(&boosted), 30.0);
    assert_eq!(a.boost_offset(&plain), 0.0);
    let mut b = random_batch(&space, 2, 0.9, 34);
    b.iter_mut().for_each(|t| t.state = plain.to_vec());
    b[0].next_state = boosted.to_vec();
    a.sac_update(&b, &mut from_seed(35)).unwrap();
    assert_eq!(a.boost_offset(&boosted), 30.0);
    b[1].state = boosted.to_vec();
    a.sac_update(&b, &mut from_seed(35)).unwrap();
    assert_eq!(a.boost_offset(&boosted), 0.0);
}

#[test]
fn updates_reject_empty_batches() {
    let space = ActionSpace::Discrete { n: 2 };
    for alg in [Algorithm::Sac, Algorithm::Inac, Algorithm::Iql, Algorithm::Cql, Algorithm::Proto] {
        let mut a = Agent::new(alg, small(AgentConfig::default()), &spec(3, space.clone()), &[], &mut from_seed(1)).unwrap();
        assert!(a.update(alg, &[], 0.0, &mut from_seed(2)).is_err());
    }
}
