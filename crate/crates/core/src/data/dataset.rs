use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Transition;
use crate::env::{Action, ActionSpace, Env, Environment, ReferenceReturns};
use crate::rng::{derive_seed, from_seed, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quality {
    Expert,
    Medium,
    MediumExpert,
    Random,
}

impl Quality {
    pub fn tag(self) -> u8 {
        match self {
            Quality::Expert => 0,
            Quality::Medium => 1,
            Quality::MediumExpert => 2,
            Quality::Random => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Quality::Expert,
            1 => Quality::Medium,
            2 => Quality::MediumExpert,
            3 => Quality::Random,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Quality::Expert => "expert",
            Quality::Medium => "medium",
            Quality::MediumExpert => "medium-expert",
            Quality::Random => "random",
        }
    }

    fn behavior(self) -> &'static str {
        match self {
            Quality::Expert => "scripted expert with small action noise",
            Quality::Medium => "per step: noisy expert with probability 0.5, else uniform random",
            Quality::MediumExpert => "concatenation of equal-size expert and medium datasets",
            Quality::Random => "uniform random actions",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub env: String,
    pub quality: Quality,
    pub behavior: String,
    pub size: usize,
    pub state_dim: usize,
    pub action_space: ActionSpace,
    pub reference: ReferenceReturns,
    pub seed: u64,
    /// Mean undiscounted return of the episodes completed during generation.
    pub behavior_return: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    /// States at which episodes begin (`episode_step == 0`).
    pub fn start_states(&self) -> Vec<Vec<f64>> {
        self.transitions
            .iter()
            .filter(|t| t.episode_step == 0)
            .map(|t| t.state.clone())
            .collect()
    }
}

/// Standard deviation of expert action noise as a fraction of the range.
const EXPERT_NOISE_FRACTION: f64 = 0.05;
/// Probability of a uniform action for the discrete noisy expert.
const DISCRETE_EXPERT_EPSILON: f64 = 0.05;
const MEDIUM_EXPERT_PROB: f64 = 0.5;

fn noisy_expert(env: &Env, state: &[f64], rng: &mut Rng) -> Result<Action> {
    let space = &env.spec().action_space;
    let expert = env
        .expert_action(state, rng)
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no expert controller", env.spec().name)))?;
    Ok(match (space, expert) {
        (ActionSpace::Discrete { .. }, a) => {
            if rng.gen::<f64>() < DISCRETE_EXPERT_EPSILON {
                space.sample_uniform(rng)
            } else {
                a
            }
        }
        (ActionSpace::Continuous { low, high, .. }, Action::Continuous(v)) => {
            let sd = EXPERT_NOISE_FRACTION * (high - low);
            Action::Continuous(
                v.into_iter()
                    .map(|x| (x + sd * rng.sample::<f64, _>(StandardNormal)).clamp(*low, *high))
                    .collect(),
            )
        }
        (_, a) => a,
    })
}

fn behavior_action(env: &Env, quality: Quality, state: &[f64], rng: &mut Rng) -> Result<Action> {
    match quality {
        Quality::Random => Ok(env.spec().action_space.sample_uniform(rng)),
        Quality::Expert => noisy_expert(env, state, rng),
        Quality::Medium | Quality::MediumExpert => {
            if rng.gen::<f64>() < MEDIUM_EXPERT_PROB {
                noisy_expert(env, state, rng)
            } else {
                Ok(env.spec().action_space.sample_uniform(rng))
            }
        }
    }
}

/// Rolls out `quality`'s behavior policy until exactly `n` transitions are
/// collected. On environments with an off-dataset region, any episode that
/// enters the region is discarded whole.
fn collect(env: &mut Env, quality: Quality, n: usize, seed: u64) -> Result<(Vec<Transition>, Vec<f64>)> {
    let region = env.inflated_states();
    let mut rng = from_seed(seed);
    let gamma = env.spec().gamma;
    let mut out = Vec::with_capacity(n);
    let mut returns = Vec::new();
    let mut rejected = 0usize;
    while out.len() < n {
        let mut state = env.reset(&mut rng);
        let mut episode = Vec::new();
        let mut total = 0.0;
        let mut entered = false;
        loop {
            let action = behavior_action(env, quality, &state, &mut rng)?;
            let step = env.step(&action)?;
            if !region.is_empty() && region.iter().any(|&i| step.next_state[i] > 0.5) {
                entered = true;
                break;
            }
            total += step.reward;
            episode.push(Transition {
                state: state.clone(),
                action,
                reward: step.reward,
                next_state: step.next_state.clone(),
                discount: if step.terminal { 0.0 } else { gamma },
                timeout: step.timeout,
                episode_step: (env.elapsed() - 1) as u32,
            });
            if step.terminal || step.timeout {
                break;
            }
            state = step.next_state;
        }
        if entered {
            rejected += 1;
            if rejected > 1000 * (n + 1) {
                return Err(Error::InvalidArgument(
                    "behavior policy almost never avoids the inflated region".into(),
                ));
            }
            continue;
        }
        returns.push(total);
        let room = n - out.len();
        episode.truncate(room);
        out.extend(episode);
    }
    Ok((out, returns))
}

/// Generates an offline dataset of exactly `n_transitions` rows.
pub fn generate_dataset(env: &mut Env, quality: Quality, n_transitions: usize, seed: u64) -> Result<Dataset> {
    if quality != Quality::Random {
        let mut probe = from_seed(0);
        let s = env.reset(&mut probe);
        if env.expert_action(&s, &mut probe).is_none() {
            return Err(Error::InvalidArgument(format!(
                "{} has no expert controller for quality {}",
                env.spec().name,
                quality.name()
            )));
        }
    }
    let (transitions, returns) = match quality {
        Quality::MediumExpert => {
            let half = n_transitions / 2;
            let (mut a, mut ra) = collect(env, Quality::Expert, half, derive_seed(seed, "expert-half", 0))?;
            let (b, rb) = collect(env, Quality::Medium, n_transitions - half, derive_seed(seed, "medium-half", 0))?;
            a.extend(b);
            ra.extend(rb);
            (a, ra)
        }
        q => collect(env, q, n_transitions, seed)?,
    };
    let spec = env.spec();
    let behavior_return = if returns.is_empty() {
        None
    } else {
        Some(returns.iter().sum::<f64>() / returns.len() as f64)
    };
    Ok(Dataset {
        meta: DatasetMeta {
            env: spec.name.clone(),
            quality,
            behavior: quality.behavior().into(),
            size: transitions.len(),
            state_dim: spec.state_dim,
            action_space: spec.action_space.clone(),
            reference: spec.reference,
            seed,
            behavior_return,
        },
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, GridCliffConfig, PointReachConfig};

    #[test]
    fn exact_size_and_discounts() {
        let mut env = EnvConfig::PointReach(PointReachConfig::default()).build().unwrap();
        let d = generate_dataset(&mut env, Quality::Medium, 1000, 3).unwrap();
        assert_eq!(d.transitions.len(), 1000);
        assert_eq!(d.meta.size, 1000);
        for t in &d.transitions {
            assert!(t.discount == 0.0 || t.discount == 0.99);
            assert!((t.episode_step as usize) < 200);
            if t.timeout {
                assert_eq!(t.discount, 0.99);
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut env = EnvConfig::PointReach(PointReachConfig::default()).build().unwrap();
        let a = generate_dataset(&mut env, Quality::Expert, 500, 11).unwrap();
        let b = generate_dataset(&mut env, Quality::Expert, 500, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gridcliff_data_avoids_region() {
        let mut env = EnvConfig::GridCliff(GridCliffConfig::default()).build().unwrap();
        let region = env.inflated_states();
        for q in [Quality::Expert, Quality::Medium, Quality::Random] {
            let d = generate_dataset(&mut env, q, 2000, 5).unwrap();
            for t in &d.transitions {
                assert!(region.iter().all(|&i| t.next_state[i] < 0.5 && t.state[i] < 0.5));
            }
        }
    }

    #[test]
    fn medium_expert_concatenates() {
        let mut env = EnvConfig::GridCliff(GridCliffConfig::default()).build().unwrap();
        let d = generate_dataset(&mut env, Quality::MediumExpert, 301, 5).unwrap();
        assert_eq!(d.transitions.len(), 301);
        assert_eq!(d.meta.quality, Quality::MediumExpert);
    }

    // Rollout evaluation of the behavior policies behind each quality.
    #[test]
    fn quality_ordering_on_point_reach() {
        let mut env = EnvConfig::PointReach(PointReachConfig::default()).build().unwrap();
        let refs = env.spec().reference;
        let mut score = |q| {
            let d = generate_dataset(&mut env, q, 20_000, 21).unwrap();
            crate::data::normalized_return(d.meta.behavior_return.unwrap(), &refs).unwrap()
        };
        let (e, m, r) = (score(Quality::Expert), score(Quality::Medium), score(Quality::Random));
        assert!(e > m && m > r, "expert {e}, medium {m}, random {r}");
    }
}
