//! Soft update with an annealed trust-region penalty.

use super::inac::missing;
use super::sac::SoftExtras;
use super::{Agent, UpdateReport};
use crate::approx::polyak_update;
use crate::data::Transition;
use crate::rng::Rng;
use crate::Result;

impl Agent {
    /// Penalty weight `alpha0 * (1 - fraction)`.
    pub fn proto_alpha(&self, anneal_fraction: f64) -> f64 {
        self.config.proto_alpha0 * (1.0 - anneal_fraction.clamp(0.0, 1.0))
    }

    /// Soft update with `alpha * KL(pi || pi_trust)` subtracted in the critic
    /// target and added to the actor loss; the trust policy then trails the
    /// actor by polyak averaging.
    pub fn proto_update(&mut self, batch: &[Transition], anneal_fraction: f64, rng: &mut Rng) -> Result<UpdateReport> {
        if self.trust.is_none() {
            return Err(missing("trust-region policy"));
        }
        let extras = SoftExtras {
            proto: Some(self.proto_alpha(anneal_fraction)),
            ..Default::default()
        };
        let report = self.soft_update(batch, extras, rng)?;
        let trust = self.trust.as_mut().unwrap();
        polyak_update(trust.net_mut().params_mut(), self.actor.net().params(), self.config.proto_polyak)?;
        Ok(report)
    }
}
