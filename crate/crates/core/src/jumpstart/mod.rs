//! Jump-start scheduling: the composite guide/exploration policy, windowed
//! return and fixed schedules, fitted Q evaluation and the automatic
//! value-based hand-off.

mod fqe;

pub use fqe::{fqe_estimate, fqe_train, FqeConfig, FqeState};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::approx::PolicyNet;
use crate::env::Action;
use crate::rng::Rng;
use crate::{Error, Result};

/// A policy whose action may depend on the step index within the episode.
pub trait TimedPolicy: Sync {
    /// Exact action probabilities, for discrete spaces.
    fn probs(&self, state: &[f64], t: usize) -> Option<Vec<f64>>;
    fn sample(&self, state: &[f64], t: usize, rng: &mut Rng) -> Action;
}

impl TimedPolicy for PolicyNet {
    fn probs(&self, state: &[f64], _t: usize) -> Option<Vec<f64>> {
        PolicyNet::probs(self, state)
    }
    fn sample(&self, state: &[f64], _t: usize, rng: &mut Rng) -> Action {
        PolicyNet::sample(self, state, rng).0
    }
}

/// Guide policy up to and including step `floor(h)`, exploration after.
#[derive(Clone, Copy)]
pub struct Composite<'a> {
    pub guide: &'a PolicyNet,
    pub explore: &'a PolicyNet,
    pub h: f64,
}

impl Composite<'_> {
    pub fn uses_guide(&self, t: usize) -> bool {
        uses_guide(t, self.h)
    }

    pub fn active(&self, t: usize) -> &PolicyNet {
        if self.uses_guide(t) {
            self.guide
        } else {
            self.explore
        }
    }

    pub fn mode(&self, state: &[f64], t: usize) -> Action {
        self.active(t).mode(state)
    }
}

impl TimedPolicy for Composite<'_> {
    fn probs(&self, state: &[f64], t: usize) -> Option<Vec<f64>> {
        self.active(t).probs(state)
    }
    fn sample(&self, state: &[f64], t: usize, rng: &mut Rng) -> Action {
        js_policy(self, state, t, rng)
    }
}

/// The switch test `t > floor(h)`, negated.
pub fn uses_guide(t: usize, h: f64) -> bool {
    (t as f64) <= h.floor()
}

/// Exploration action when `t > floor(h)`, otherwise a guide action.
pub fn js_policy(composite: &Composite<'_>, state: &[f64], t: usize, rng: &mut Rng) -> Action {
    composite.active(t).sample(state, rng).0
}

/// Reduction per successful episode, `2T / j`.
pub fn default_delta(horizon: usize, j: f64) -> Result<f64> {
    if !(j > 0.0) {
        return Err(Error::Config(format!("reduction divisor must be positive, got {j}")));
    }
    Ok(2.0 * horizon as f64 / j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpStartState {
    pub h: f64,
    pub delta: f64,
    pub horizon: usize,
    pub epsilon: f64,
    pub window_size: usize,
    pub window: VecDeque<f64>,
    /// Best window mean so far (`-inf` before the first episode).
    pub best: f64,
    pub episodes: usize,
}

impl JumpStartState {
    /// Starts with the guide in control of the whole episode.
    pub fn new(horizon: usize, delta: f64, epsilon: f64, window_size: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Config(format!("guide-step reduction must be positive, got {delta}")));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!("tolerance must be non-negative, got {epsilon}")));
        }
        if window_size == 0 {
            return Err(Error::Config("return window must hold at least one episode".into()));
        }
        Ok(Self {
            h: horizon as f64,
            delta,
            horizon,
            epsilon,
            window_size,
            window: VecDeque::with_capacity(window_size),
            best: f64::NEG_INFINITY,
            episodes: 0,
        })
    }

    fn reduce(&mut self) {
        self.h = (self.h - self.delta).max(0.0);
    }
}

/// Windowed-return rule: shrink `h` when the window mean is within the
/// tolerance of the best mean seen. The threshold is `best - eps |best|`,
/// which equals `(1 - eps) best` for non-negative returns.
pub fn jsrl_update_h(js: &mut JumpStartState, latest_return: f64) -> f64 {
    if js.window.len() == js.window_size {
        js.window.pop_front();
    }
    js.window.push_back(latest_return);
    js.episodes += 1;
    let mean = js.window.iter().sum::<f64>() / js.window.len() as f64;
    let threshold = js.best - js.epsilon * js.best.abs();
    if js.best == f64::NEG_INFINITY || mean >= threshold {
        js.reduce();
    }
    js.best = js.best.max(mean);
    js.h
}

/// Value-based rule: shrink `h` iff the estimate at the current guide step
/// is at least the initial estimate.
pub fn ajs_episode_end(js: &mut JumpStartState, v_ft: f64, v_init: f64) -> f64 {
    js.episodes += 1;
    if v_ft >= v_init {
        js.reduce();
    }
    js.h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Sigmoid,
    Linear,
    RevExp,
}

/// Guide step after `episode_index` of `total_episodes` episodes under a
/// fixed schedule: `round(T (1 - f(u / kappa)))` with `u` the elapsed share.
pub fn fixed_schedule_h(
    episode_index: usize,
    total_episodes: usize,
    schedule: Schedule,
    kappa: f64,
    horizon: usize,
) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Config(format!("schedule rate must be positive, got {kappa}")));
    }
    if total_episodes == 0 {
        return Err(Error::Config("schedule needs at least one episode".into()));
    }
    let u = (episode_index.min(total_episodes)) as f64 / total_episodes as f64;
    let x = u / kappa;
    let f = match schedule {
        Schedule::Linear => x.min(1.0),
        Schedule::Sigmoid => 1.0 / (1.0 + (-10.0 * (x - 0.5)).exp()),
        Schedule::RevExp => (1.0 - (-5.0 * x).exp()).min(1.0),
    };
    Ok((horizon as f64 * (1.0 - f)).round())
}
