//! Small chain MDP with a terminal goal at the right end.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{reference_returns, Action, ActionSpace, EnvSpec, Environment, StepResult, TabularMdp};
use crate::rng::{from_seed, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_states: usize,
    /// Probability that a move fails and the agent stays put.
    pub slip: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_states: 4,
            slip: 0.0,
            step_reward: -0.1,
            goal_reward: 1.0,
            horizon: 20,
            gamma: 0.9,
        }
    }
}

/// Actions: 0 moves left, 1 moves right. The last state is terminal.
#[derive(Clone, Debug)]
pub struct ChainMdp {
    config: ChainConfig,
    spec: EnvSpec,
    mdp: TabularMdp,
    position: usize,
    elapsed: usize,
    rng: Rng,
}

impl ChainMdp {
    pub fn new(config: ChainConfig) -> Result<Self> {
        if config.n_states < 2 {
            return Err(Error::Config("chain needs at least 2 states".into()));
        }
        if !(0.0..1.0).contains(&config.slip) {
            return Err(Error::Config("slip must lie in [0, 1)".into()));
        }
        if config.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let mdp = Self::tabular(&config)?;
        let mut env = Self {
            spec: EnvSpec {
                name: "chain".into(),
                state_dim: config.n_states,
                action_space: ActionSpace::Discrete { n: 2 },
                horizon: config.horizon,
                gamma: config.gamma,
                reference: super::ReferenceReturns {
                    random_return: 0.0,
                    expert_return: 1.0,
                },
            },
            mdp,
            position: 0,
            elapsed: 0,
            rng: from_seed(0),
            config,
        };
        env.spec.reference = reference_returns(&env)?;
        Ok(env)
    }

    fn tabular(c: &ChainConfig) -> Result<TabularMdp> {
        let n = c.n_states;
        let mut mdp = TabularMdp::zeros(n, 2, c.gamma)?;
        let goal = n - 1;
        mdp.terminal[goal] = true;
        for s in 0..n {
            for a in 0..2 {
                if s == goal {
                    mdp.set(s, a, s, 1.0, 0.0);
                    continue;
                }
                let target = if a == 0 { s.saturating_sub(1) } else { s + 1 };
                let reward = |to: usize| if to == goal { c.goal_reward } else { c.step_reward };
                if target == s {
                    mdp.set(s, a, s, 1.0, reward(s));
                } else {
                    mdp.set(s, a, target, 1.0 - c.slip, reward(target));
                    mdp.set(s, a, s, c.slip, reward(s));
                }
            }
        }
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn encode(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.config.n_states];
        v[s] = 1.0;
        v
    }

    pub fn decode(state: &[f64]) -> usize {
        state.iter().position(|&x| x > 0.5).unwrap_or(0)
    }
}

impl Environment for ChainMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.position = 0;
        self.elapsed = 0;
        self.rng = from_seed(rng.gen());
        self.encode(0)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let a = self.spec.action_space.validate(action)?.index();
        let u: f64 = self.rng.gen();
        let s = self.position;
        let n = self.config.n_states;
        let mut acc = 0.0;
        let mut next = s;
        for to in 0..n {
            acc += self.mdp.prob(s, a, to);
            if u < acc {
                next = to;
                break;
            }
        }
        let reward = self.mdp.reward(s, a, next);
        self.position = next;
        self.elapsed += 1;
        let terminal = self.mdp.terminal[next];
        Ok(StepResult {
            next_state: self.encode(next),
            reward,
            terminal,
            timeout: !terminal && self.elapsed >= self.config.horizon,
        })
    }

    fn expert_action(&self, _state: &[f64], _rng: &mut Rng) -> Option<Action> {
        Some(Action::Discrete(1))
    }

    fn elapsed(&self) -> usize {
        self.elapsed
    }
}
