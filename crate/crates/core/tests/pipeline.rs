use o2orl::algos::{load_checkpoint, save_checkpoint, Agent, Algorithm};
use o2orl::data::{generate_dataset, load_dataset, save_dataset, Dataset, Quality};
use o2orl::env::{ChainConfig, Env, EnvConfig, Environment, GridCliffConfig, PointReachConfig};
use o2orl::rng::{derive_seed, from_seed};
use o2orl::training::{finetune, train_offline, EvalConfig, FinetuneAlgorithm, FinetuneConfig, OfflineConfig};
use proptest::prelude::*;

fn chain() -> Env {
    EnvConfig::Chain(ChainConfig::default()).build().unwrap()
}

fn offline(steps: usize) -> OfflineConfig {
    serde_json::from_value(serde_json::json!({
        "algorithm": "inac",
        "steps": steps,
        "agent": {"hidden": [8]}
    }))
    .unwrap()
}

fn quiet_eval() -> EvalConfig {
    EvalConfig {
        episodes: 2,
        p0_episodes: 2,
        every_episodes: 3,
        offline_every: 0,
        ..Default::default()
    }
}

fn data(env: &Env, n: usize) -> Dataset {
    generate_dataset(&mut env.clone(), Quality::Medium, n, 3).unwrap()
}

#[test]
fn zero_step_checkpoint_is_the_initialization() {
    let env = chain();
    let ds = data(&env, 200);
    let config = offline(0);
    let (ck, curve) = train_offline(&env, &ds, &config, &quiet_eval(), 9).unwrap();
    assert!(curve.is_empty());
    let mut rng = from_seed(derive_seed(9, "offline-init", 0));
    let fresh = Agent::new(Algorithm::Inac, config.agent.clone(), env.spec(), &env.inflated_states(), &mut rng).unwrap();
    assert_eq!(ck.agent, fresh);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    save_checkpoint(&ck, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), ck);
}

#[test]
fn jump_start_records_carry_a_shrinking_guide_step() {
    let env = chain();
    let ds = data(&env, 400);
    let (ck, _) = train_offline(&env, &ds, &offline(200), &quiet_eval(), 1).unwrap();
    let horizon = env.spec().horizon as f64;
    for alg in [FinetuneAlgorithm::Ajs, FinetuneAlgorithm::Jsrl, FinetuneAlgorithm::JsrlFixed] {
        let config: FinetuneConfig = serde_json::from_value(serde_json::json!({
            "algorithm": alg,
            "budget_steps": 300,
            "fqe": {"hidden": [8], "warm_start": 100},
            "jump_start": {"j": 20, "schedule_episodes": 10}
        }))
        .unwrap();
        let out = finetune(&env, &ck, &ds, &config, &quiet_eval(), 2, "t").unwrap();
        let h: Vec<f64> = out.record.rows.iter().map(|r| r.h.expect("h column")).collect();
        assert!(h.len() > 1, "{alg:?}");
        assert!(h.iter().all(|&x| (0.0..=horizon).contains(&x)), "{alg:?}: {h:?}");
        assert!(h.windows(2).all(|w| w[1] <= w[0]), "{alg:?}: {h:?}");
        assert!(h.last().unwrap() < &horizon, "{alg:?} never handed off");
        assert!(out.guide.is_some());
    }
}

#[test]
fn plain_fine_tuning_has_no_guide_step() {
    let env = chain();
    let ds = data(&env, 300);
    let (ck, _) = train_offline(&env, &ds, &offline(50), &quiet_eval(), 1).unwrap();
    let config = FinetuneConfig {
        budget_steps: 100,
        ..Default::default()
    };
    let out = finetune(&env, &ck, &ds, &config, &quiet_eval(), 4, "t").unwrap();
    assert!(out.record.rows.iter().all(|r| r.h.is_none()));
    assert!(out.guide.is_none() && out.fqe.is_none());
}

#[test]
fn guide_patch_leaves_the_exploration_agent_alone() {
    let env = chain();
    let ds = data(&env, 300);
    let (ck, _) = train_offline(&env, &ds, &offline(50), &quiet_eval(), 1).unwrap();
    let config: FinetuneConfig = serde_json::from_value(serde_json::json!({
        "algorithm": "ajs",
        "budget_steps": 0,
        "agent": {"tau": 0.7},
        "jump_start": {"guide_agent": {"tau": 0.05}}
    }))
    .unwrap();
    let out = finetune(&env, &ck, &ds, &config, &quiet_eval(), 4, "t").unwrap();
    assert_eq!(out.agent.config.tau, 0.7);
    assert_eq!(out.guide.unwrap().config.tau, 0.05);
    assert_eq!(out.record.rows.len(), 1);
}

#[test]
fn sampled_and_greedy_evaluation_differ_only_in_action_choice() {
    let env = chain();
    let ds = data(&env, 300);
    let (ck, _) = train_offline(&env, &ds, &offline(100), &quiet_eval(), 1).unwrap();
    let config = FinetuneConfig {
        budget_steps: 0,
        ..Default::default()
    };
    let p0 = |greedy: bool| {
        let eval = EvalConfig {
            greedy,
            p0_episodes: 30,
            ..quiet_eval()
        };
        finetune(&env, &ck, &ds, &config, &eval, 5, "t").unwrap().record.p0().unwrap()
    };
    assert_eq!(p0(true), p0(true));
    assert_eq!(p0(false), p0(false));
    assert!(p0(true).is_finite() && p0(false).is_finite());
}

fn any_env() -> impl Strategy<Value = Env> {
    prop_oneof![
        Just(EnvConfig::GridCliff(GridCliffConfig::default())),
        Just(EnvConfig::PointReach(PointReachConfig::default())),
        Just(EnvConfig::Chain(ChainConfig::default())),
    ]
    .prop_map(|c| c.build().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_datasets_respect_episode_structure(
        env in any_env(),
        quality in prop_oneof![Just(Quality::Expert), Just(Quality::Medium), Just(Quality::Random)],
        n in 1usize..400,
        seed in any::<u64>(),
    ) {
        let ds = generate_dataset(&mut env.clone(), quality, n, seed).unwrap();
        let spec = env.spec();
        prop_assert_eq!(ds.transitions.len(), n);
        for t in &ds.transitions {
            prop_assert!(t.discount == 0.0 || t.discount == spec.gamma);
            prop_assert!((t.episode_step as usize) < spec.horizon);
            prop_assert!(!(t.timeout && t.discount == 0.0));
            prop_assert!(t.reward.is_finite());
        }
        for w in ds.transitions.windows(2) {
            let ended = w[0].discount == 0.0 || w[0].timeout;
            if ended {
                prop_assert_eq!(w[1].episode_step, 0);
            } else {
                prop_assert_eq!(w[1].episode_step, w[0].episode_step + 1);
                prop_assert_eq!(&w[1].state, &w[0].next_state);
            }
        }
    }

    #[test]
    fn datasets_round_trip_bit_exact(env in any_env(), n in 0usize..200, seed in any::<u64>()) {
        let ds = if n == 0 {
            let mut d = generate_dataset(&mut env.clone(), Quality::Random, 1, seed).unwrap();
            d.transitions.clear();
            d
        } else {
            generate_dataset(&mut env.clone(), Quality::Random, n, seed).unwrap()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        prop_assert_eq!(back.transitions.len(), ds.transitions.len());
        for (a, b) in back.transitions.iter().zip(&ds.transitions) {
            prop_assert!(a.state.iter().zip(&b.state).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert_eq!(a.reward.to_bits(), b.reward.to_bits());
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        o2orl::harness::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 2);
}
