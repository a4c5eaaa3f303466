//! Implicit Q-learning.

pub use super::losses::expectile_loss;

use super::inac::missing;
use super::losses::{self, reduced_q};
use super::{Agent, UpdateReport};
use crate::data::Transition;
use crate::{Error, Result};

impl Agent {
    /// Reduced target-critic value of a dataset action.
    fn target_q(&self, t: &Transition) -> f64 {
        reduced_q(&self.targets, &t.state, &t.action, self.config.reduce).0 + self.boost_offset(&t.state)
    }

    /// Critic targets `r + discount * V(s')`.
    pub fn iql_targets(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        let v = self.value.as_ref().ok_or_else(|| missing("value network"))?;
        Ok(batch
            .iter()
            .map(|t| {
                if t.discount == 0.0 {
                    t.reward
                } else {
                    t.reward + t.discount * v.eval(&t.next_state)[0]
                }
            })
            .collect())
    }

    /// Expectile value regression against target critics at dataset
    /// actions, critic regression to `r + discount * V(s')`, then the
    /// advantage-weighted actor step.
    pub fn iql_update(&mut self, batch: &[Transition]) -> Result<UpdateReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let rho = self.config.expectile;
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidArgument(format!("expectile {rho} outside (0, 1)")));
        }
        if self.value.is_none() {
            return Err(missing("value network"));
        }
        self.touch(batch);
        let tau = self.tau();

        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let tq: Vec<f64> = batch.iter().map(|t| self.target_q(t)).collect();
        let value = {
            let net = self.value.as_mut().unwrap();
            let (loss, grad) = losses::value_regression(net, &states, &tq, Some(rho));
            self.value_opt.as_mut().unwrap().step(net.params_mut(), &grad)?;
            loss
        };

        let targets = self.iql_targets(batch)?;
        let v = self.value.as_ref().unwrap();
        let weights: Vec<f64> = batch
            .iter()
            .zip(&tq)
            .map(|(t, q)| ((q - v.eval(&t.state)[0]) / tau).exp().min(self.config.exp_adv_max))
            .collect();
        let (critic, _) = self.critic_step(batch, &targets, None)?;

        let (actor, grad) = losses::weighted_nll(&self.actor, batch, Some(&weights));
        self.actor_opt.step(self.actor.net_mut().params_mut(), &grad)?;

        self.polyak_targets()?;
        UpdateReport {
            critic,
            actor,
            value: Some(value),
            mean_q: self.batch_mean_q(batch),
            ..Default::default()
        }
        .check()
    }
}
