//! Environments and the exact dynamic-programming oracle.

mod chain;
mod gridcliff;
mod pointreach;
mod tabular;

pub use chain::{ChainConfig, ChainMdp};
pub use gridcliff::{Cell, GridCliff, GridCliffConfig};
pub use pointreach::{PointReach, PointReachConfig};
pub use tabular::{exact_policy_value, TabularMdp};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::{from_seed, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    Continuous { dim: usize, low: f64, high: f64 },
}

impl ActionSpace {
    /// Width of the action when encoded as a real vector.
    pub fn width(&self) -> usize {
        match *self {
            ActionSpace::Discrete { .. } => 1,
            ActionSpace::Continuous { dim, .. } => dim,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete { .. })
    }

    pub fn sample_uniform(&self, rng: &mut Rng) -> Action {
        match *self {
            ActionSpace::Discrete { n } => Action::Discrete(rng.gen_range(0..n)),
            ActionSpace::Continuous { dim, low, high } => {
                Action::Continuous((0..dim).map(|_| rng.gen_range(low..high)).collect())
            }
        }
    }

    /// Checks an action against the space. Continuous actions are clipped.
    pub fn validate(&self, action: &Action) -> Result<Action> {
        match (self, action) {
            (ActionSpace::Discrete { n }, Action::Discrete(a)) => {
                if a < n {
                    Ok(action.clone())
                } else {
                    Err(Error::InvalidAction(format!("index {a} out of range 0..{n}")))
                }
            }
            (ActionSpace::Continuous { dim, low, high }, Action::Continuous(v)) => {
                if v.len() != *dim {
                    return Err(Error::InvalidAction(format!(
                        "expected {dim} components, got {}",
                        v.len()
                    )));
                }
                if let Some(x) = v.iter().find(|x| !x.is_finite()) {
                    return Err(Error::InvalidAction(format!("non-finite component {x}")));
                }
                Ok(Action::Continuous(v.iter().map(|x| x.clamp(*low, *high)).collect()))
            }
            _ => Err(Error::InvalidAction(format!(
                "action {action:?} does not match space {self:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> usize {
        match self {
            Action::Discrete(a) => *a,
            Action::Continuous(_) => panic!("continuous action has no index"),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Action::Continuous(v) => v,
            Action::Discrete(_) => panic!("discrete action has no components"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReturns {
    pub random_return: f64,
    pub expert_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub horizon: usize,
    pub gamma: f64,
    pub reference: ReferenceReturns,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Environment termination; the stored discount becomes 0.
    pub terminal: bool,
    /// Horizon cut; the stored discount stays gamma.
    pub timeout: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<StepResult>;
    /// Scripted controller used for dataset generation and reference returns.
    fn expert_action(&self, state: &[f64], rng: &mut Rng) -> Option<Action>;
    /// Steps taken in the current episode.
    fn elapsed(&self) -> usize;
}

/// Resets `env` with a generator seeded from `seed`.
pub fn env_reset(env: &mut dyn Environment, seed: u64) -> Vec<f64> {
    env.reset(&mut from_seed(seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvConfig {
    GridCliff(#[serde(default)] GridCliffConfig),
    PointReach(#[serde(default)] PointReachConfig),
    Chain(#[serde(default)] ChainConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Result<Env> {
        Ok(match self {
            EnvConfig::GridCliff(c) => Env::GridCliff(GridCliff::new(c.clone())?),
            EnvConfig::PointReach(c) => Env::PointReach(PointReach::new(c.clone())?),
            EnvConfig::Chain(c) => Env::Chain(ChainMdp::new(c.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::GridCliff(_) => "grid_cliff",
            EnvConfig::PointReach(_) => "point_reach",
            EnvConfig::Chain(_) => "chain",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Env {
    GridCliff(GridCliff),
    PointReach(PointReach),
    Chain(ChainMdp),
}

impl Env {
    fn inner(&self) -> &dyn Environment {
        match self {
            Env::GridCliff(e) => e,
            Env::PointReach(e) => e,
            Env::Chain(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            Env::GridCliff(e) => e,
            Env::PointReach(e) => e,
            Env::Chain(e) => e,
        }
    }

    /// One-hot indices that belong to the off-dataset region, if any.
    pub fn inflated_states(&self) -> Vec<usize> {
        match self {
            Env::GridCliff(g) => g.inflated_indices(),
            _ => Vec::new(),
        }
    }
}

impl Environment for Env {
    fn spec(&self) -> &EnvSpec {
        self.inner().spec()
    }
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.inner_mut().reset(rng)
    }
    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.inner_mut().step(action)
    }
    fn expert_action(&self, state: &[f64], rng: &mut Rng) -> Option<Action> {
        self.inner().expert_action(state, rng)
    }
    fn elapsed(&self) -> usize {
        self.inner().elapsed()
    }
}

/// Undiscounted return of one episode under `policy`.
pub fn rollout_return(
    env: &mut dyn Environment,
    rng: &mut Rng,
    mut policy: impl FnMut(&[f64], usize, &mut Rng) -> Action,
) -> Result<f64> {
    let mut state = env.reset(rng);
    let mut total = 0.0;
    for t in 0.. {
        let action = policy(&state, t, rng);
        let step = env.step(&action)?;
        total += step.reward;
        if step.terminal || step.timeout {
            break;
        }
        state = step.next_state;
    }
    Ok(total)
}

const REFERENCE_EPISODES: usize = 100;
const REFERENCE_SEED: u64 = 0x05EE_D0F2_E7;

/// Mean returns of the uniform-random and scripted-expert controllers.
pub(crate) fn reference_returns<E: Environment + Clone>(env: &E) -> Result<ReferenceReturns> {
    let space = env.spec().action_space.clone();
    let oracle = env.clone();
    let mut runner = env.clone();
    let mut rng = from_seed(REFERENCE_SEED);
    let mut random = 0.0;
    for _ in 0..REFERENCE_EPISODES {
        random += rollout_return(&mut runner, &mut rng, |_, _, r| space.sample_uniform(r))?;
    }
    let mut expert = 0.0;
    for _ in 0..REFERENCE_EPISODES {
        expert += rollout_return(&mut runner, &mut rng, |s, _, r| {
            oracle
                .expert_action(s, r)
                .unwrap_or_else(|| space.sample_uniform(r))
        })?;
    }
    let n = REFERENCE_EPISODES as f64;
    let refs = ReferenceReturns {
        random_return: random / n,
        expert_return: expert / n,
    };
    if refs.expert_return <= refs.random_return {
        return Err(Error::InvalidArgument(format!(
            "expert return {} does not exceed random return {}",
            refs.expert_return, refs.random_return
        )));
    }
    Ok(refs)
}
