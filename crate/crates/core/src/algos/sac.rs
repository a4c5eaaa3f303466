//! Soft actor-critic and the shared soft update used by CQL and PROTO.

use rand_distr::StandardNormal;
use rand::Rng as _;

use super::losses::{self, PenaltySamples, Trust};
use super::{Agent, UpdateReport};
use crate::approx::PolicyNet;
use crate::data::Transition;
use crate::env::ActionSpace;
use crate::rng::Rng;
use crate::{Error, Result};

/// Optional terms layered on the plain soft update.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct SoftExtras {
    /// Conservative penalty weight.
    pub cql: Option<f64>,
    /// Trust-region penalty weight.
    pub proto: Option<f64>,
}

impl Agent {
    /// One reparameterization noise vector per state (empty for discrete).
    pub(crate) fn draw_noise(&self, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        let d = match self.space {
            ActionSpace::Discrete { .. } => 0,
            ActionSpace::Continuous { dim, .. } => dim,
        };
        (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    fn trust_term(&self, alpha: Option<f64>) -> Option<Trust<'_>> {
        alpha.map(|alpha| Trust {
            policy: self.trust.as_ref().expect("trust-region update without a trust policy"),
            alpha,
        })
    }

    /// Soft bootstrap targets `r + discount * V_soft(s')` from the target critics.
    pub fn soft_targets(&self, batch: &[Transition], trust_alpha: Option<f64>, rng: &mut Rng) -> Vec<f64> {
        let tau = self.tau();
        let trust = self.trust_term(trust_alpha);
        let noise = self.draw_noise(batch.len(), rng);
        batch
            .iter()
            .zip(&noise)
            .map(|(t, z)| {
                if t.discount == 0.0 {
                    return t.reward;
                }
                let v = losses::soft_state_value(
                    &self.actor,
                    &self.targets,
                    &t.next_state,
                    self.config.reduce,
                    self.boost_offset(&t.next_state),
                    tau,
                    trust,
                    z,
                );
                t.reward + t.discount * v
            })
            .collect()
    }

    fn penalty_samples(&self, batch: &[Transition], rng: &mut Rng) -> Option<Vec<PenaltySamples>> {
        let ActionSpace::Continuous { dim, low, high } = self.space else {
            return None;
        };
        let PolicyNet::Gaussian(head) = &self.actor else {
            unreachable!("continuous space with a categorical actor")
        };
        let m = self.config.cql_samples.max(1);
        let uniform_ld = -(dim as f64) * (high - low).ln();
        Some(
            batch
                .iter()
                .map(|t| {
                    let mut actions = Vec::with_capacity(2 * m);
                    let mut log_density = Vec::with_capacity(2 * m);
                    for _ in 0..m {
                        actions.push((0..dim).map(|_| rng.gen_range(low..high)).collect());
                        log_density.push(uniform_ld);
                    }
                    for _ in 0..m {
                        let s = head.sample(&t.state, rng);
                        actions.push(s.action);
                        log_density.push(s.log_prob);
                    }
                    PenaltySamples { actions, log_density }
                })
                .collect(),
        )
    }

    /// Regresses every critic toward `targets`, optionally adding the
    /// conservative penalty. Returns (mean loss, mean penalty).
    pub(crate) fn critic_step(
        &mut self,
        batch: &[Transition],
        targets: &[f64],
        cql: Option<(f64, Option<&[PenaltySamples]>)>,
    ) -> Result<(f64, Option<f64>)> {
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFinite("critic target".into()));
        }
        let k = self.critics.len() as f64;
        let mut total = 0.0;
        let mut penalty_total = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            let (mut loss, mut grad) = losses::critic_regression(critic, batch, targets);
            if let Some((w, samples)) = cql.filter(|(w, _)| *w != 0.0) {
                let (p, g) = losses::cql_penalty(critic, batch, samples);
                penalty_total += p;
                loss += w * p;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += w * b;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("critic loss {loss}")));
            }
            total += loss;
            opt.step(critic.net.params_mut(), &grad)?;
        }
        Ok((total / k, cql.map(|_| penalty_total / k)))
    }

    pub(crate) fn soft_actor_step(&mut self, batch: &[Transition], trust_alpha: Option<f64>, rng: &mut Rng) -> Result<f64> {
        let noise = self.draw_noise(batch.len(), rng);
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let (loss, grad) = losses::soft_actor_loss(
            &self.actor,
            &self.critics,
            &states,
            self.config.reduce,
            self.tau(),
            self.trust_term(trust_alpha),
            &noise,
        );
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("actor loss {loss}")));
        }
        self.actor_opt.step(self.actor.net_mut().params_mut(), &grad)?;
        Ok(loss)
    }

    /// One dual step on log-alpha toward the target entropy; returns alpha.
    pub fn sac_alpha_update(&mut self, batch: &[Transition], rng: &mut Rng) -> Result<f64> {
        let noise = self.draw_noise(batch.len(), rng);
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let mean_lp = losses::mean_log_prob(&self.actor, &states, &noise);
        let (_, g) = losses::alpha_loss(self.log_alpha, mean_lp, self.target_entropy());
        let mut p = [self.log_alpha];
        self.alpha_opt.step(&mut p, &[g])?;
        self.log_alpha = p[0];
        Ok(self.tau())
    }

    pub(crate) fn batch_mean_q(&self, batch: &[Transition]) -> f64 {
        batch.iter().map(|t| self.q(&t.state, &t.action)).sum::<f64>() / batch.len() as f64
    }

    pub(crate) fn soft_update(&mut self, batch: &[Transition], extras: SoftExtras, rng: &mut Rng) -> Result<UpdateReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        self.touch(batch);
        let targets = self.soft_targets(batch, extras.proto, rng);
        let samples = match extras.cql {
            Some(w) if w != 0.0 => self.penalty_samples(batch, rng),
            _ => None,
        };
        let cql = extras.cql.map(|w| (w, samples.as_deref()));
        let (critic, penalty) = self.critic_step(batch, &targets, cql)?;
        let actor = self.soft_actor_step(batch, extras.proto, rng)?;
        let alpha = if self.config.auto_alpha {
            Some(self.sac_alpha_update(batch, rng)?)
        } else {
            None
        };
        self.polyak_targets()?;
        UpdateReport {
            critic,
            actor,
            penalty,
            alpha,
            mean_q: self.batch_mean_q(batch),
            ..Default::default()
        }
        .check()
    }

    pub fn sac_update(&mut self, batch: &[Transition], rng: &mut Rng) -> Result<UpdateReport> {
        self.soft_update(batch, SoftExtras::default(), rng)
    }
}
