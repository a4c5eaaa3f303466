//! Conservative Q-learning on top of the soft update.

pub use super::losses::cql_penalty;

use super::sac::SoftExtras;
use super::{Agent, UpdateReport};
use crate::data::Transition;
use crate::rng::Rng;
use crate::Result;

impl Agent {
    /// Soft update with `alpha_cql * penalty` added to every critic's loss.
    pub fn cql_update(&mut self, batch: &[Transition], rng: &mut Rng) -> Result<UpdateReport> {
        let extras = SoftExtras {
            cql: Some(self.config.alpha_cql),
            ..Default::default()
        };
        self.soft_update(batch, extras, rng)
    }
}
