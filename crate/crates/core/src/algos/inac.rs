//! In-sample actor-critic.

use super::losses;
use super::{Agent, UpdateReport};
use crate::data::Transition;
use crate::rng::Rng;
use crate::{Error, Result};

impl Agent {
    /// Actor weights `exp(min((Q(s,a) - V(s)) / tau - log pi_beta(a|s), w_max_log))`.
    pub fn inac_weights(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        let value = self.value.as_ref().ok_or_else(|| missing("value network"))?;
        let behavior = self.behavior.as_ref().ok_or_else(|| missing("behavior network"))?;
        let tau = self.tau();
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
        }
        Ok(batch
            .iter()
            .map(|t| {
                let q = self.q(&t.state, &t.action);
                let v = value.eval(&t.state)[0];
                let lb = behavior.log_prob(&t.state, &t.action);
                ((q - v) / tau - lb).min(self.config.w_max_log).exp()
            })
            .collect())
    }

    /// Behavior cloning, value regression, critic regression and the
    /// weighted actor step, in that order. Offline training and fine-tuning
    /// run the same update on different data.
    pub fn inac_update(&mut self, batch: &[Transition], rng: &mut Rng) -> Result<UpdateReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if self.value.is_none() || self.behavior.is_none() {
            return Err(missing("value and behavior networks"));
        }
        self.touch(batch);
        let tau = self.tau();
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
        }

        let behavior = {
            let net = self.behavior.as_mut().unwrap();
            let (loss, grad) = losses::weighted_nll(net, batch, None);
            self.behavior_opt.as_mut().unwrap().step(net.net_mut().params_mut(), &grad)?;
            loss
        };

        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let noise = self.draw_noise(batch.len(), rng);
        let value_targets: Vec<f64> = states
            .iter()
            .zip(&noise)
            .map(|(s, z)| {
                losses::soft_state_value(
                    &self.actor,
                    &self.critics,
                    s,
                    self.config.reduce,
                    self.boost_offset(s),
                    tau,
                    None,
                    z,
                )
            })
            .collect();
        let value = {
            let net = self.value.as_mut().unwrap();
            let (loss, grad) = losses::value_regression(net, &states, &value_targets, None);
            self.value_opt.as_mut().unwrap().step(net.params_mut(), &grad)?;
            loss
        };

        let targets = self.soft_targets(batch, None, rng);
        let (critic, _) = self.critic_step(batch, &targets, None)?;

        let weights = self.inac_weights(batch)?;
        let (actor, grad) = losses::weighted_nll(&self.actor, batch, Some(&weights));
        self.actor_opt.step(self.actor.net_mut().params_mut(), &grad)?;

        self.polyak_targets()?;
        UpdateReport {
            critic,
            actor,
            value: Some(value),
            behavior: Some(behavior),
            mean_q: self.batch_mean_q(batch),
            ..Default::default()
        }
        .check()
    }
}

pub(crate) fn missing(what: &str) -> Error {
    Error::InvalidArgument(format!("agent has no {what}"))
}
