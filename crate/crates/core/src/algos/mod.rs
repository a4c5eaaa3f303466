//! Offline and fine-tuning agents.
//!
//! One [`Agent`] type carries every network the algorithms need; each
//! algorithm is an update method over a sampled batch. Discrete-action
//! variants take exact expectations over the action set wherever a
//! continuous variant would sample.

mod checkpoint;
mod cql;
mod inac;
mod iql;
pub mod losses;
mod pex;
mod proto;
mod sac;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use cql::cql_penalty;
pub use iql::expectile_loss;
pub use pex::pex_select_action;

use serde::{Deserialize, Serialize};

use crate::approx::{Adam, AdamConfig, CriticNet, Mlp, PolicyNet};
use crate::env::{Action, ActionSpace, EnvSpec};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReduceMode {
    #[default]
    Min,
    /// Lower median for even ensemble sizes.
    Median,
}

/// Index of the ensemble member selected by `mode`.
pub fn reduce_index(values: &[f64], mode: ReduceMode) -> usize {
    match mode {
        ReduceMode::Min => {
            let mut best = 0;
            for (i, v) in values.iter().enumerate() {
                if *v < values[best] {
                    best = i;
                }
            }
            best
        }
        ReduceMode::Median => {
            let mut idx: Vec<usize> = (0..values.len()).collect();
            idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            idx[(values.len() - 1) / 2]
        }
    }
}

pub fn ensemble_reduce(values: &[f64], mode: ReduceMode) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot reduce an empty ensemble".into()));
    }
    Ok(values[reduce_index(values, mode)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sac,
    Inac,
    Iql,
    Cql,
    Proto,
    Pex,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sac => "sac",
            Algorithm::Inac => "inac",
            Algorithm::Iql => "iql",
            Algorithm::Cql => "cql",
            Algorithm::Proto => "proto",
            Algorithm::Pex => "pex",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "sac" => Algorithm::Sac,
            "inac" => Algorithm::Inac,
            "iql" => Algorithm::Iql,
            "cql" => Algorithm::Cql,
            "proto" => Algorithm::Proto,
            "pex" => Algorithm::Pex,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub ensemble: usize,
    pub reduce: ReduceMode,
    /// Entropy temperature (initial value when `auto_alpha`).
    pub tau: f64,
    pub auto_alpha: bool,
    /// Overrides the default target entropy of the temperature update.
    pub target_entropy: Option<f64>,
    pub polyak: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Clamp on the InAC actor-weight exponent.
    pub w_max_log: f64,
    /// Clamp on the IQL advantage weight.
    pub exp_adv_max: f64,
    pub expectile: f64,
    pub alpha_cql: f64,
    pub cql_samples: usize,
    pub proto_alpha0: f64,
    pub proto_polyak: f64,
    /// Optimistic offset on critic outputs at not-yet-updated region states.
    pub q_boost: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            ensemble: 2,
            reduce: ReduceMode::Min,
            tau: 0.33,
            auto_alpha: false,
            target_entropy: None,
            polyak: 0.005,
            adam: AdamConfig::default(),
            batch_size: 64,
            w_max_log: 5.0,
            exp_adv_max: 100.0,
            expectile: 0.7,
            alpha_cql: 1.0,
            cql_samples: 10,
            proto_alpha0: 1.0,
            proto_polyak: 0.005,
            q_boost: 30.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.expectile > 0.0 && self.expectile < 1.0) {
            return Err(Error::Config(format!("expectile {} outside (0, 1)", self.expectile)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(Error::Config("polyak rate outside (0, 1]".into()));
        }
        Ok(())
    }
}

/// Optimistic critic offset for states that no critic update has touched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueBoost {
    pub amount: f64,
    /// One-hot indices of the boosted states.
    pub states: Vec<usize>,
    pub touched: Vec<bool>,
}

impl ValueBoost {
    fn slot(&self, state: &[f64]) -> Option<usize> {
        self.states.iter().position(|&i| state.get(i).is_some_and(|&x| x > 0.5))
    }

    pub fn offset(&self, state: &[f64]) -> f64 {
        match self.slot(state) {
            Some(k) if !self.touched[k] => self.amount,
            _ => 0.0,
        }
    }

    pub fn touch(&mut self, state: &[f64]) {
        if let Some(k) = self.slot(state) {
            self.touched[k] = true;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub critic: f64,
    pub actor: f64,
    pub value: Option<f64>,
    pub behavior: Option<f64>,
    pub penalty: Option<f64>,
    pub alpha: Option<f64>,
    pub mean_q: f64,
}

impl UpdateReport {
    pub fn check(self) -> Result<Self> {
        let all = [
            Some(self.critic),
            Some(self.actor),
            self.value,
            self.behavior,
            self.penalty,
            self.alpha,
            Some(self.mean_q),
        ];
        if all.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("update report {self:?}")));
        }
        Ok(self)
    }
}

/// Networks and optimizer state for one algorithm instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub config: AgentConfig,
    pub space: ActionSpace,
    pub state_dim: usize,
    pub actor: PolicyNet,
    pub actor_opt: Adam,
    pub critics: Vec<CriticNet>,
    pub critic_opts: Vec<Adam>,
    pub targets: Vec<CriticNet>,
    pub value: Option<Mlp>,
    pub value_opt: Option<Adam>,
    pub behavior: Option<PolicyNet>,
    pub behavior_opt: Option<Adam>,
    /// Slowly moving policy copy for the trust-region penalty.
    pub trust: Option<PolicyNet>,
    /// Frozen offline actor kept in the policy set (never trained).
    pub anchor: Option<PolicyNet>,
    pub log_alpha: f64,
    pub alpha_opt: Adam,
    pub boost: Option<ValueBoost>,
}

impl Agent {
    /// Fresh agent with the networks `algorithm` needs.
    pub fn new(
        algorithm: Algorithm,
        config: AgentConfig,
        spec: &EnvSpec,
        boosted_states: &[usize],
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let space = spec.action_space.clone();
        let sd = spec.state_dim;
        let actor = PolicyNet::new(&space, sd, &config.hidden, rng);
        let critics: Vec<CriticNet> = (0..config.ensemble)
            .map(|_| CriticNet::new(&space, sd, &config.hidden, rng))
            .collect();
        let needs_value = matches!(algorithm, Algorithm::Inac | Algorithm::Iql);
        let value = needs_value.then(|| {
            Mlp::with_output_scale(&crate::approx::layer_sizes(sd, &config.hidden, 1), rng, Some(3e-3))
        });
        let behavior = (algorithm == Algorithm::Inac).then(|| PolicyNet::new(&space, sd, &config.hidden, rng));
        let boost = (config.q_boost != 0.0 && !boosted_states.is_empty()).then(|| ValueBoost {
            amount: config.q_boost,
            states: boosted_states.to_vec(),
            touched: vec![false; boosted_states.len()],
        });
        let mut agent = Self {
            actor_opt: Adam::new(actor.net().len(), config.adam),
            critic_opts: critics.iter().map(|c| Adam::new(c.net.len(), config.adam)).collect(),
            targets: critics.clone(),
            value_opt: value.as_ref().map(|v| Adam::new(v.len(), config.adam)),
            behavior_opt: behavior.as_ref().map(|b| Adam::new(b.net().len(), config.adam)),
            alpha_opt: Adam::new(1, config.adam),
            log_alpha: config.tau.ln(),
            trust: None,
            anchor: None,
            actor,
            critics,
            value,
            behavior,
            boost,
            space,
            state_dim: sd,
            config,
        };
        match algorithm {
            Algorithm::Proto => agent.trust = Some(agent.actor.clone()),
            Algorithm::Pex => agent.anchor = Some(agent.actor.clone()),
            _ => {}
        }
        Ok(agent)
    }

    pub fn tau(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Resets every optimizer to step 0 (fine-tuning starts fresh moments).
    pub fn reset_optimizers(&mut self) {
        let cfg = self.config.adam;
        self.actor_opt = Adam::new(self.actor.net().len(), cfg);
        self.critic_opts = self.critics.iter().map(|c| Adam::new(c.net.len(), cfg)).collect();
        self.value_opt = self.value.as_ref().map(|v| Adam::new(v.len(), cfg));
        self.behavior_opt = self.behavior.as_ref().map(|b| Adam::new(b.net().len(), cfg));
        self.alpha_opt = Adam::new(1, cfg);
    }

    pub fn target_entropy(&self) -> f64 {
        self.config.target_entropy.unwrap_or(match self.space {
            ActionSpace::Discrete { n } => 0.5 * (n as f64).ln(),
            ActionSpace::Continuous { dim, .. } => -(dim as f64),
        })
    }

    pub fn boost_offset(&self, state: &[f64]) -> f64 {
        self.boost.as_ref().map_or(0.0, |b| b.offset(state))
    }

    pub(crate) fn touch(&mut self, batch: &[crate::data::Transition]) {
        if let Some(b) = self.boost.as_mut() {
            for t in batch {
                b.touch(&t.state);
            }
        }
    }

    /// Reduced online-critic value of `(state, action)` including any boost.
    pub fn q(&self, state: &[f64], action: &Action) -> f64 {
        let qs: Vec<f64> = self.critics.iter().map(|c| c.q(state, action)).collect();
        qs[reduce_index(&qs, self.config.reduce)] + self.boost_offset(state)
    }

    /// Reduced online-critic values of every action (discrete only).
    pub fn q_all(&self, state: &[f64]) -> Vec<f64> {
        losses::reduced_q_all(&self.critics, state, self.config.reduce, self.boost_offset(state))
    }

    pub fn act(&self, state: &[f64], rng: &mut Rng) -> Action {
        self.actor.sample(state, rng).0
    }

    pub fn act_greedy(&self, state: &[f64]) -> Action {
        self.actor.mode(state)
    }

    /// Runs the update rule of `algorithm` on one batch. `anneal_fraction`
    /// is the elapsed share of the fine-tuning budget (trust-region only).
    pub fn update(
        &mut self,
        algorithm: Algorithm,
        batch: &[crate::data::Transition],
        anneal_fraction: f64,
        rng: &mut Rng,
    ) -> Result<UpdateReport> {
        match algorithm {
            Algorithm::Sac | Algorithm::Pex => self.sac_update(batch, rng),
            Algorithm::Inac => self.inac_update(batch, rng),
            Algorithm::Iql => self.iql_update(batch),
            Algorithm::Cql => self.cql_update(batch, rng),
            Algorithm::Proto => self.proto_update(batch, anneal_fraction, rng),
        }
    }

    fn polyak_targets(&mut self) -> Result<()> {
        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            crate::approx::polyak_update(t.net.params_mut(), c.net.params(), self.config.polyak)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod behavior_tests;
