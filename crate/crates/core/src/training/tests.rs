use super::*;
use crate::algos::{load_checkpoint, save_checkpoint};
use crate::data::{generate_dataset, Quality};
use crate::env::EnvConfig;

fn setup(offline: Algorithm) -> (Env, Dataset, Checkpoint) {
    let mut env = EnvConfig::GridCliff(Default::default()).build().unwrap();
    let dataset = generate_dataset(&mut env, Quality::Expert, 600, 5).unwrap();
    let config = OfflineConfig {
        algorithm: offline,
        steps: 200,
        agent: AgentConfig {
            hidden: vec![16],
            batch_size: 16,
            ..Default::default()
        },
    };
    let (ck, curve) = train_offline(&env, &dataset, &config, &eval(), 1).unwrap();
    assert_eq!(curve.iter().map(|c| c.0).collect::<Vec<_>>(), vec![100, 200]);
    (env, dataset, ck)
}

fn eval() -> EvalConfig {
    EvalConfig {
        every_episodes: 2,
        episodes: 2,
        p0_episodes: 3,
        offline_every: 100,
        ..Default::default()
    }
}

fn config(alg: FinetuneAlgorithm, budget: usize) -> FinetuneConfig {
    FinetuneConfig {
        algorithm: alg,
        budget_steps: budget,
        fqe: FqeConfig {
            hidden: vec![16],
            warm_start: 50,
            batch_size: 16,
            ..Default::default()
        },
        jump_start: JumpStartConfig {
            j: 20.0,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn zero_budget_keeps_only_the_initial_row() {
    let (env, data, ck) = setup(Algorithm::Inac);
    let out = finetune(&env, &ck, &data, &config(FinetuneAlgorithm::Sac, 0), &eval(), 3, "h").unwrap();
    assert_eq!(out.record.rows.len(), 1);
    assert!(out.record.p0().is_some());
    assert_eq!(out.updates, 0);
}

#[test]
fn every_algorithm_runs_within_budget() {
    let (env, data, inac) = setup(Algorithm::Inac);
    let iql = setup(Algorithm::Iql).2;
    for alg in [
        FinetuneAlgorithm::Sac,
        FinetuneAlgorithm::InacFt,
        FinetuneAlgorithm::IqlFt,
        FinetuneAlgorithm::Proto,
        FinetuneAlgorithm::Pex,
        FinetuneAlgorithm::Jsrl,
        FinetuneAlgorithm::JsrlFixed,
        FinetuneAlgorithm::Ajs,
    ] {
        let ck = if alg == FinetuneAlgorithm::IqlFt { &iql } else { &inac };
        let out = finetune(&env, ck, &data, &config(alg, 150), &eval(), 4, "h").unwrap();
        let rec = &out.record;
        assert_eq!(out.updates, 150, "{alg:?}");
        assert!(rec.rows.last().unwrap().step <= 150);
        assert_eq!(rec.columns.h, alg.is_jump_start());
        assert_eq!(rec.columns.values, alg == FinetuneAlgorithm::Ajs);
        let header = rec.to_csv().lines().next().unwrap().to_string();
        assert_eq!(header.contains(",h"), alg.is_jump_start(), "{header}");
    }
}

#[test]
fn ajs_guide_steps_never_grow() {
    let (env, data, ck) = setup(Algorithm::Inac);
    let out = finetune(&env, &ck, &data, &config(FinetuneAlgorithm::Ajs, 600), &eval(), 2, "h").unwrap();
    let hs: Vec<f64> = out.record.rows.iter().filter_map(|r| r.h).collect();
    assert!(hs.len() > 2);
    assert!(hs.windows(2).all(|w| w[1] <= w[0]));
    assert!(hs.iter().all(|&h| (0.0..=60.0).contains(&h)));
    let v_init = out.record.rows[0].v_init.unwrap();
    assert!(out.record.rows.iter().all(|r| r.v_init.map_or(true, |v| v == v_init)));
}

#[test]
fn runs_are_deterministic() {
    let (env, data, ck) = setup(Algorithm::Inac);
    let a = finetune(&env, &ck, &data, &config(FinetuneAlgorithm::Jsrl, 200), &eval(), 9, "h").unwrap();
    let b = finetune(&env, &ck, &data, &config(FinetuneAlgorithm::Jsrl, 200), &eval(), 9, "h").unwrap();
    assert_eq!(a.record, b.record);
    let c = finetune(&env, &ck, &data, &config(FinetuneAlgorithm::Jsrl, 200), &eval(), 10, "h").unwrap();
    assert_ne!(a.record.rows, c.record.rows);
}

#[test]
fn incompatible_checkpoints_are_refused() {
    let (env, data, iql) = setup(Algorithm::Iql);
    for alg in [FinetuneAlgorithm::Ajs, FinetuneAlgorithm::InacFt] {
        assert!(matches!(
            finetune(&env, &iql, &data, &config(alg, 10), &eval(), 1, "h"),
            Err(Error::Incompatible(_))
        ));
    }
    let mut c = config(FinetuneAlgorithm::Jsrl, 10);
    c.jump_start.guide_update = GuideUpdate::Inac;
    assert!(matches!(finetune(&env, &iql, &data, &c, &eval(), 1, "h"), Err(Error::Incompatible(_))));
    c.jump_start.guide_update = GuideUpdate::Iql;
    assert!(finetune(&env, &iql, &data, &c, &eval(), 1, "h").is_ok());
}

#[test]
fn overrides_cannot_change_structure() {
    let base = AgentConfig::default();
    let patched = patch_agent_config(&base, &serde_json::json!({"tau": 0.1})).unwrap();
    assert_eq!(patched.tau, 0.1);
    for bad in [
        serde_json::json!({"hidden": [8]}),
        serde_json::json!({"ensemble": 3}),
        serde_json::json!({"nope": 1}),
        serde_json::json!([1]),
    ] {
        assert!(matches!(patch_agent_config(&base, &bad), Err(Error::Config(_))), "{bad}");
    }
}

#[test]
fn pex_keeps_its_anchor() {
    let (env, data, ck) = setup(Algorithm::Inac);
    let out = finetune(&env, &ck, &data, &config(FinetuneAlgorithm::Pex, 100), &eval(), 1, "h").unwrap();
    assert_eq!(out.agent.anchor.as_ref().unwrap(), &ck.agent.actor);
}

#[test]
fn trained_checkpoint_round_trips() {
    let (_, _, ck) = setup(Algorithm::Cql);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ck");
    save_checkpoint(&ck, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap().agent.actor, ck.agent.actor);
}

#[test]
fn fixed_schedule_tracks_its_curve() {
    let (env, data, ck) = setup(Algorithm::Inac);
    let mut c = config(FinetuneAlgorithm::JsrlFixed, 400);
    c.jump_start.schedule_episodes = 4;
    let out = finetune(&env, &ck, &data, &c, &eval(), 1, "h").unwrap();
    let hs: Vec<f64> = out.record.rows.iter().filter_map(|r| r.h).collect();
    assert_eq!(hs[0], 60.0);
    assert!(hs.windows(2).all(|w| w[1] <= w[0]));
    if hs.len() > 6 {
        assert_eq!(*hs.last().unwrap(), 0.0);
    }
}
