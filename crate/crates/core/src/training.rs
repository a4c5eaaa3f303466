//! Offline training and the shared fine-tuning loop.

use serde::{Deserialize, Serialize};

use crate::algos::{pex_select_action, Agent, AgentConfig, Algorithm, Checkpoint};
use crate::analysis::{evaluate, evaluate_policy, Columns, RunRecord, RunRow};
use crate::approx::PolicyNet;
use crate::data::{normalized_return, Dataset, ReplayBuffer, Transition};
use crate::env::{Action, Env, Environment};
use crate::jumpstart::{
    ajs_episode_end, default_delta, fixed_schedule_h, fqe_estimate, fqe_train, jsrl_update_h, Composite, FqeConfig,
    FqeState, JumpStartState, Schedule, TimedPolicy,
};
use crate::rng::{derive_seed, from_seed, Rng};
use crate::{Error, Result};

/// Step index the episode loop hands to the composite policy for the first
/// action; guide control covers steps `FIRST_STEP..=floor(h)`.
pub const FIRST_STEP: usize = 1;

/// Periodic greedy evaluation during offline training: `(updates, normalized return)`.
pub type LearningCurve = Vec<(u64, f64)>;

/// Source series for degradation and improvement metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    #[default]
    Eval,
    Online,
}

/// Frozen-policy evaluation cadence for both phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Training episodes between fine-tuning evaluations (0 disables them).
    pub every_episodes: usize,
    pub episodes: usize,
    /// Episodes averaged for the pre-fine-tuning score.
    pub p0_episodes: usize,
    /// Updates between offline evaluations (0 disables the curve).
    pub offline_every: usize,
    pub metric_source: MetricSource,
    /// Act with the policy mode; otherwise sample as during training.
    pub greedy: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every_episodes: 10,
            episodes: 5,
            p0_episodes: 20,
            offline_every: 1_000,
            metric_source: MetricSource::Eval,
            greedy: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineConfig {
    pub algorithm: Algorithm,
    pub steps: usize,
    pub agent: AgentConfig,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Inac,
            steps: 20_000,
            agent: AgentConfig::default(),
        }
    }
}

/// Trains a fresh agent on `dataset` for `config.steps` updates.
pub fn train_offline(
    env: &Env,
    dataset: &Dataset,
    config: &OfflineConfig,
    eval: &EvalConfig,
    seed: u64,
) -> Result<(Checkpoint, LearningCurve)> {
    if dataset.transitions.is_empty() {
        return Err(Error::InvalidArgument("offline dataset is empty".into()));
    }
    let spec = env.spec();
    let mut init_rng = from_seed(derive_seed(seed, "offline-init", 0));
    let mut agent = Agent::new(config.algorithm, config.agent.clone(), spec, &env.inflated_states(), &mut init_rng)?;
    let buffer = ReplayBuffer::with_offline(&dataset.transitions, 0);
    let mut rng = from_seed(derive_seed(seed, "offline-train", 0));
    let eval_seed = derive_seed(seed, "offline-eval", 0);
    let mut curve = Vec::new();
    for step in 0..config.steps {
        let batch = buffer.sample(agent.config.batch_size, &mut rng)?;
        agent.update(config.algorithm, &batch, 0.0, &mut rng)?;
        if eval.offline_every > 0 && (step + 1) % eval.offline_every == 0 {
            curve.push(((step + 1) as u64, evaluate_policy(env, &agent.actor, eval.episodes.max(1), eval_seed, eval.greedy)?));
        }
    }
    Ok((
        Checkpoint {
            algorithm: config.algorithm,
            agent,
            extras: Vec::new(),
        },
        curve,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneAlgorithm {
    Sac,
    InacFt,
    IqlFt,
    Proto,
    Pex,
    Jsrl,
    JsrlFixed,
    Ajs,
}

impl FinetuneAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            FinetuneAlgorithm::Sac => "sac",
            FinetuneAlgorithm::InacFt => "inac_ft",
            FinetuneAlgorithm::IqlFt => "iql_ft",
            FinetuneAlgorithm::Proto => "proto",
            FinetuneAlgorithm::Pex => "pex",
            FinetuneAlgorithm::Jsrl => "jsrl",
            FinetuneAlgorithm::JsrlFixed => "jsrl_fixed",
            FinetuneAlgorithm::Ajs => "ajs",
        }
    }

    pub fn is_jump_start(self) -> bool {
        matches!(self, FinetuneAlgorithm::Jsrl | FinetuneAlgorithm::JsrlFixed | FinetuneAlgorithm::Ajs)
    }
}

/// Whether a jump-start guide keeps training, and with which rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GuideUpdate {
    #[default]
    Frozen,
    Inac,
    Iql,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpStartConfig {
    /// Reduction divisor: `delta = 2T / j`.
    pub j: f64,
    /// Explicit reduction, overriding `j`.
    pub delta: Option<f64>,
    pub epsilon: f64,
    pub window: usize,
    pub schedule: Schedule,
    pub kappa: f64,
    /// Episodes over which a fixed schedule runs.
    pub schedule_episodes: usize,
    /// Guide training for the windowed-return variant (the value-based
    /// variant always continues in-sample updates).
    pub guide_update: GuideUpdate,
    /// Patch for the guide's agent config, applied to the checkpoint's
    /// config (the fine-tuning `agent` patch does not reach the guide).
    pub guide_agent: serde_json::Value,
}

impl Default for JumpStartConfig {
    fn default() -> Self {
        Self {
            j: 100.0,
            delta: None,
            epsilon: 0.0,
            window: 5,
            schedule: Schedule::Linear,
            kappa: 0.5,
            schedule_episodes: 200,
            guide_update: GuideUpdate::Frozen,
            guide_agent: serde_json::Value::Object(Default::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub algorithm: FinetuneAlgorithm,
    pub budget_steps: usize,
    /// Optional cap on completed training episodes.
    pub max_episodes: Option<usize>,
    /// JSON patch applied to the checkpoint's agent config (structure fields
    /// must not change).
    pub agent: serde_json::Value,
    pub preload_offline: bool,
    pub jump_start: JumpStartConfig,
    pub fqe: FqeConfig,
    pub pex_temperature: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            algorithm: FinetuneAlgorithm::Sac,
            budget_steps: 10_000,
            max_episodes: None,
            agent: serde_json::Value::Object(Default::default()),
            preload_offline: true,
            jump_start: JumpStartConfig::default(),
            fqe: FqeConfig::default(),
            pex_temperature: 1.0,
        }
    }
}

/// Applies a JSON merge patch of `patch` onto `config`.
pub fn patch_agent_config(config: &AgentConfig, patch: &serde_json::Value) -> Result<AgentConfig> {
    let mut base = serde_json::to_value(config)?;
    match (base.as_object_mut(), patch) {
        (_, serde_json::Value::Null) => {}
        (Some(obj), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                if !obj.contains_key(k) {
                    return Err(Error::Config(format!("unknown agent field {k:?}")));
                }
                obj.insert(k.clone(), v.clone());
            }
        }
        _ => return Err(Error::Config("agent overrides must be a JSON object".into())),
    }
    let patched: AgentConfig = serde_json::from_value(base)?;
    if patched.hidden != config.hidden || patched.ensemble != config.ensemble {
        return Err(Error::Config("agent overrides cannot change network structure".into()));
    }
    patched.validate()?;
    Ok(patched)
}

/// Which checkpoint algorithms each fine-tuning algorithm accepts.
pub fn check_compatible(config: &FinetuneConfig, checkpoint: Algorithm) -> Result<()> {
    let needed = match config.algorithm {
        FinetuneAlgorithm::InacFt | FinetuneAlgorithm::Ajs => Some(Algorithm::Inac),
        FinetuneAlgorithm::IqlFt => Some(Algorithm::Iql),
        FinetuneAlgorithm::Jsrl | FinetuneAlgorithm::JsrlFixed => match config.jump_start.guide_update {
            GuideUpdate::Frozen => None,
            GuideUpdate::Inac => Some(Algorithm::Inac),
            GuideUpdate::Iql => Some(Algorithm::Iql),
        },
        _ => None,
    };
    match needed {
        Some(a) if a != checkpoint => Err(Error::Incompatible(format!(
            "{} needs a {} checkpoint, got {}",
            config.algorithm.name(),
            a.name(),
            checkpoint.name()
        ))),
        _ => Ok(()),
    }
}

/// Final state of a fine-tuning run.
#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub record: RunRecord,
    /// The agent whose actor was trained online (exploration agent for
    /// jump-start runs).
    pub agent: Agent,
    pub guide: Option<Agent>,
    pub fqe: Option<FqeState>,
    pub updates: u64,
}

/// Plain actor-critic agent built from a checkpoint's actor and critics.
/// Checkpoint agent with `patch` applied and fresh optimizers.
fn patched_agent(agent: &Agent, patch: &serde_json::Value) -> Result<Agent> {
    let mut a = agent.clone();
    a.config = patch_agent_config(&a.config, patch)?;
    a.log_alpha = a.config.tau.ln();
    if a.config.q_boost == 0.0 {
        a.boost = None;
    } else if let Some(boost) = a.boost.as_mut() {
        boost.amount = a.config.q_boost;
    }
    a.reset_optimizers();
    Ok(a)
}

fn soft_agent(base: &Agent) -> Agent {
    let mut a = base.clone();
    a.value = None;
    a.value_opt = None;
    a.behavior = None;
    a.behavior_opt = None;
    a.trust = None;
    a.anchor = None;
    a
}

struct Runner<'a> {
    config: &'a FinetuneConfig,
    agent: Agent,
    algorithm: Algorithm,
    guide: Option<(Agent, Option<Algorithm>)>,
    js: Option<JumpStartState>,
    fqe: Option<FqeState>,
    v_init: Option<f64>,
    start_states: Vec<Vec<f64>>,
}

impl Runner<'_> {
    fn guide_policy(&self) -> Option<&PolicyNet> {
        self.guide.as_ref().map(|(g, _)| &g.actor)
    }

    fn composite(&self, h: f64) -> Option<Composite<'_>> {
        self.guide_policy().map(|guide| Composite {
            guide,
            explore: &self.agent.actor,
            h,
        })
    }

    fn h(&self) -> f64 {
        self.js.as_ref().map_or(0.0, |j| j.h)
    }

    fn act(&self, state: &[f64], k: usize, rng: &mut Rng) -> Action {
        if let Some(c) = self.composite(self.h()) {
            return c.sample(state, FIRST_STEP + k, rng);
        }
        if let Some(anchor) = &self.agent.anchor {
            let q = |a: &Action| self.agent.q(state, a);
            return pex_select_action(anchor, &self.agent.actor, q, state, self.config.pex_temperature, rng).0;
        }
        self.agent.act(state, rng)
    }

    fn act_greedy(&self, state: &[f64], k: usize) -> Action {
        if let Some(c) = self.composite(self.h()) {
            return c.mode(state, FIRST_STEP + k);
        }
        if let Some(anchor) = &self.agent.anchor {
            let a_off = anchor.mode(state);
            let a_on = self.agent.actor.mode(state);
            return if self.agent.q(state, &a_off) >= self.agent.q(state, &a_on) {
                a_off
            } else {
                a_on
            };
        }
        self.agent.act_greedy(state)
    }

    fn evaluate(&self, env: &Env, episodes: usize, seed: u64, greedy: bool) -> Result<f64> {
        let raw = if greedy {
            evaluate(env, episodes, seed, |s, k, _| self.act_greedy(s, k))?
        } else {
            evaluate(env, episodes, seed, |s, k, rng| self.act(s, k, rng))?
        };
        normalized_return(raw.iter().sum::<f64>() / raw.len() as f64, &env.spec().reference)
    }

    fn estimate(&self, h: f64, rng: &mut Rng) -> Result<f64> {
        let fqe = self.fqe.as_ref().expect("estimate without evaluator");
        let c = self.composite(h).expect("estimate without guide");
        fqe_estimate(fqe, &self.start_states, &c, FIRST_STEP, rng)
    }

    fn train_fqe(&mut self, data: &[Transition], iterations: usize, rng: &mut Rng) -> Result<()> {
        let h = self.h();
        let mut fqe = self.fqe.take().expect("training without evaluator");
        let res = {
            let c = self.composite(h).expect("evaluator without guide");
            fqe_train(&mut fqe, data, &Shifted(c), iterations, rng)
        };
        self.fqe = Some(fqe);
        res
    }
}

/// Maps stored 0-based transition steps onto the loop's step numbering.
struct Shifted<'a>(Composite<'a>);

impl TimedPolicy for Shifted<'_> {
    fn probs(&self, state: &[f64], t: usize) -> Option<Vec<f64>> {
        self.0.probs(state, t + FIRST_STEP)
    }
    fn sample(&self, state: &[f64], t: usize, rng: &mut Rng) -> Action {
        self.0.sample(state, t + FIRST_STEP, rng)
    }
}

/// Fine-tunes from `checkpoint` for `config.budget_steps` environment steps
/// with one update per step for every trained agent.
pub fn finetune(
    env: &Env,
    checkpoint: &Checkpoint,
    dataset: &Dataset,
    config: &FinetuneConfig,
    eval: &EvalConfig,
    seed: u64,
    config_hash: &str,
) -> Result<FinetuneOutcome> {
    check_compatible(config, checkpoint.algorithm)?;
    let spec = env.spec().clone();
    if checkpoint.agent.state_dim != spec.state_dim || checkpoint.agent.space != spec.action_space {
        return Err(Error::Incompatible("checkpoint was trained on a different environment".into()));
    }
    let horizon = spec.horizon;
    let base = patched_agent(&checkpoint.agent, &config.agent)?;
    let mut init_rng = from_seed(derive_seed(seed, "finetune-init", 0));

    let alg = config.algorithm;
    let (agent, algorithm, guide) = match alg {
        FinetuneAlgorithm::Sac => (soft_agent(&base), Algorithm::Sac, None),
        FinetuneAlgorithm::InacFt => (base.clone(), Algorithm::Inac, None),
        FinetuneAlgorithm::IqlFt => (base.clone(), Algorithm::Iql, None),
        FinetuneAlgorithm::Proto => {
            let mut a = soft_agent(&base);
            a.trust = Some(a.actor.clone());
            (a, Algorithm::Proto, None)
        }
        FinetuneAlgorithm::Pex => {
            let mut a = soft_agent(&base);
            a.anchor = Some(a.actor.clone());
            a.actor = PolicyNet::new(&spec.action_space, spec.state_dim, &a.config.hidden, &mut init_rng);
            a.reset_optimizers();
            (a, Algorithm::Pex, None)
        }
        FinetuneAlgorithm::Jsrl | FinetuneAlgorithm::JsrlFixed | FinetuneAlgorithm::Ajs => {
            let rule = match (alg, config.jump_start.guide_update) {
                (FinetuneAlgorithm::Ajs, _) | (_, GuideUpdate::Inac) => Some(Algorithm::Inac),
                (_, GuideUpdate::Iql) => Some(Algorithm::Iql),
                (_, GuideUpdate::Frozen) => None,
            };
            let guide = patched_agent(&checkpoint.agent, &config.jump_start.guide_agent)?;
            (soft_agent(&base), Algorithm::Sac, Some((guide, rule)))
        }
    };

    let js = if alg.is_jump_start() {
        let delta = match config.jump_start.delta {
            Some(d) => d,
            None => default_delta(horizon, config.jump_start.j)?,
        };
        let epsilon = if alg == FinetuneAlgorithm::Ajs { 0.0 } else { config.jump_start.epsilon };
        let mut js = JumpStartState::new(horizon, delta, epsilon, config.jump_start.window)?;
        if alg == FinetuneAlgorithm::JsrlFixed {
            js.h = fixed_schedule_h(0, config.jump_start.schedule_episodes, config.jump_start.schedule, config.jump_start.kappa, horizon)?;
        }
        Some(js)
    } else {
        None
    };

    let online_budget = config.budget_steps;
    let mut buffer = if config.preload_offline {
        ReplayBuffer::with_offline(&dataset.transitions, online_budget)
    } else {
        ReplayBuffer::new(online_budget.max(1))
    };
    let fqe = (alg == FinetuneAlgorithm::Ajs)
        .then(|| FqeState::new(&config.fqe, &spec.action_space, spec.state_dim, &mut init_rng))
        .transpose()?;
    let mut runner = Runner {
        config,
        agent,
        algorithm,
        guide,
        js,
        fqe,
        v_init: None,
        start_states: dataset.start_states(),
    };

    let columns = Columns {
        h: alg.is_jump_start(),
        values: alg == FinetuneAlgorithm::Ajs,
    };
    let mut record = RunRecord::new(alg.name(), seed, config_hash, columns);
    let mut rng = from_seed(derive_seed(seed, "finetune", 0));
    let mut fqe_rng = from_seed(derive_seed(seed, "evaluator", 0));
    let eval_seed = derive_seed(seed, "eval", 0);

    if runner.fqe.is_some() {
        if runner.start_states.is_empty() {
            return Err(Error::MissingInput("dataset has no episode starts".into()));
        }
        if buffer.is_empty() {
            return Err(Error::MissingInput("evaluator warm start needs offline data".into()));
        }
        runner.train_fqe(buffer.transitions(), config.fqe.warm_start, &mut fqe_rng)?;
        runner.v_init = Some(runner.estimate(horizon as f64, &mut fqe_rng)?);
    }

    let p0 = runner.evaluate(env, eval.p0_episodes.max(1), derive_seed(eval_seed, "p0", 0), eval.greedy)?;
    record.rows.push(RunRow {
        eval_return_norm: Some(p0),
        h: runner.js.as_ref().map(|j| j.h),
        v_init: runner.v_init,
        ..Default::default()
    });

    let mut env = env.clone();
    let mut steps = 0usize;
    let mut updates = 0u64;
    let mut episode = 0u64;
    while steps < config.budget_steps && config.max_episodes.map_or(true, |m| (episode as usize) < m) {
        let mut state = env.reset(&mut rng);
        let h_used = runner.js.as_ref().map(|j| j.h);
        let mut total = 0.0;
        let mut finished = false;
        for k in 0.. {
            let action = runner.act(&state, k, &mut rng);
            let result = env.step(&action)?;
            total += result.reward;
            buffer.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: result.reward,
                next_state: result.next_state.clone(),
                discount: if result.terminal { 0.0 } else { spec.gamma },
                timeout: result.timeout,
                episode_step: k as u32,
            });
            steps += 1;
            let frac = steps as f64 / config.budget_steps as f64;
            let batch = buffer.sample(runner.agent.config.batch_size, &mut rng)?;
            runner.agent.update(runner.algorithm, &batch, frac, &mut rng)?;
            if let Some((g, Some(rule))) = runner.guide.as_mut() {
                let batch = buffer.sample(g.config.batch_size, &mut rng)?;
                g.update(*rule, &batch, frac, &mut rng)?;
            }
            updates += 1;
            if runner.fqe.is_some() && steps % horizon == 0 {
                runner.train_fqe(buffer.transitions(), horizon, &mut fqe_rng)?;
            }
            if result.terminal || result.timeout {
                finished = true;
                break;
            }
            if steps >= config.budget_steps {
                break;
            }
            state = result.next_state;
        }
        if !finished {
            break;
        }
        episode += 1;
        let norm = normalized_return(total, &spec.reference)?;
        let mut v_ft = None;
        match alg {
            FinetuneAlgorithm::Jsrl => {
                jsrl_update_h(runner.js.as_mut().unwrap(), norm);
            }
            FinetuneAlgorithm::JsrlFixed => {
                let js = runner.js.as_mut().unwrap();
                let jc = &config.jump_start;
                js.episodes += 1;
                js.h = js.h.min(fixed_schedule_h(js.episodes, jc.schedule_episodes, jc.schedule, jc.kappa, horizon)?);
            }
            FinetuneAlgorithm::Ajs => {
                let v = runner.estimate(runner.h(), &mut fqe_rng)?;
                ajs_episode_end(runner.js.as_mut().unwrap(), v, runner.v_init.unwrap());
                v_ft = Some(v);
            }
            _ => {}
        }
        let score = if eval.every_episodes > 0 && episode % eval.every_episodes as u64 == 0 {
            Some(runner.evaluate(&env, eval.episodes.max(1), derive_seed(eval_seed, "periodic", episode), eval.greedy)?)
        } else {
            None
        };
        record.rows.push(RunRow {
            step: steps as u64,
            episode,
            return_raw: Some(total),
            return_norm: Some(norm),
            eval_return_norm: score,
            h: h_used,
            v_ft,
            v_init: if columns.values { runner.v_init } else { None },
        });
    }
    record.validate(Some(horizon))?;
    Ok(FinetuneOutcome {
        record,
        agent: runner.agent,
        guide: runner.guide.map(|(g, _)| g),
        fqe: runner.fqe,
        updates,
    })
}

/// Fine-tuning metric inputs from a record: `p0` and the configured series.
pub fn metric_series(record: &RunRecord, source: MetricSource) -> Option<(f64, Vec<(f64, f64)>)> {
    let p0 = record.p0()?;
    let series = match source {
        MetricSource::Eval => record.eval_series(),
        MetricSource::Online => record.online_series(),
    };
    Some((p0, series))
}

#[cfg(test)]
mod tests;
