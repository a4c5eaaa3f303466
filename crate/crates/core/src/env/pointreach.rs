//! Continuous 2-D reaching task on the square `[-1, 1]^2`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{reference_returns, Action, ActionSpace, EnvSpec, Environment, StepResult};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointReachConfig {
    pub goal: [f64; 2],
    /// Half-width of the uniform start box around the origin.
    pub start_spread: f64,
    pub step_size: f64,
    /// Distance normalizer in the reward `-distance / scale`.
    pub scale: f64,
    /// Episodes end (terminal) once within this distance; 0 disables it.
    pub success_radius: f64,
    /// Per-dimension magnitude of the scripted expert's action.
    pub expert_speed: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for PointReachConfig {
    fn default() -> Self {
        Self {
            goal: [0.8, 0.8],
            start_spread: 0.1,
            step_size: 0.05,
            scale: 8f64.sqrt(),
            success_radius: 0.05,
            expert_speed: 0.8,
            horizon: 200,
            gamma: 0.99,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PointReach {
    config: PointReachConfig,
    spec: EnvSpec,
    position: [f64; 2],
    elapsed: usize,
}

impl PointReach {
    pub fn new(config: PointReachConfig) -> Result<Self> {
        if config.scale <= 0.0 {
            return Err(Error::Config("scale must be positive".into()));
        }
        if config.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&config.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", config.gamma)));
        }
        let mut env = Self {
            spec: EnvSpec {
                name: "point_reach".into(),
                state_dim: 2,
                action_space: ActionSpace::Continuous {
                    dim: 2,
                    low: -1.0,
                    high: 1.0,
                },
                horizon: config.horizon,
                gamma: config.gamma,
                reference: super::ReferenceReturns {
                    random_return: 0.0,
                    expert_return: 1.0,
                },
            },
            position: [0.0; 2],
            elapsed: 0,
            config,
        };
        env.spec.reference = reference_returns(&env)?;
        Ok(env)
    }

    pub fn config(&self) -> &PointReachConfig {
        &self.config
    }

    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let dx = p[0] - self.config.goal[0];
        let dy = p[1] - self.config.goal[1];
        (dx * dx + dy * dy).sqrt()
    }

    /// Places the agent at `p`, keeping the step counter.
    pub fn set_position(&mut self, p: [f64; 2]) {
        self.position = p;
    }
}

impl Environment for PointReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        let w = self.config.start_spread;
        self.position = if w > 0.0 {
            [rng.gen_range(-w..w), rng.gen_range(-w..w)]
        } else {
            [0.0, 0.0]
        };
        self.elapsed = 0;
        self.position.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let a = self.spec.action_space.validate(action)?;
        let a = a.values();
        for (p, da) in self.position.iter_mut().zip(a) {
            *p = (*p + self.config.step_size * da).clamp(-1.0, 1.0);
        }
        self.elapsed += 1;
        let d = self.distance(self.position);
        let terminal = self.config.success_radius > 0.0 && d < self.config.success_radius;
        Ok(StepResult {
            next_state: self.position.to_vec(),
            reward: -d / self.config.scale,
            terminal,
            timeout: !terminal && self.elapsed >= self.config.horizon,
        })
    }

    fn expert_action(&self, state: &[f64], _rng: &mut Rng) -> Option<Action> {
        let v = self.config.expert_speed;
        Some(Action::Continuous(
            state
                .iter()
                .zip(self.config.goal)
                .map(|(x, g)| ((g - x) / self.config.step_size).clamp(-v, v))
                .collect(),
        ))
    }

    fn elapsed(&self) -> usize {
        self.elapsed
    }
}
