use rand::Rng as _;

use super::Transition;
use crate::rng::Rng;
use crate::{Error, Result};

/// Replay buffer whose leading offline rows are never evicted.
///
/// Once full, online pushes overwrite the oldest online row. Sizing the
/// capacity as offline size plus the online step budget means nothing is
/// ever evicted.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    offline_len: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            offline_len: 0,
            cursor: 0,
        }
    }

    /// Buffer preloaded with `offline` and room for `online_budget` pushes.
    pub fn with_offline(offline: &[Transition], online_budget: usize) -> Self {
        let mut buf = Self::new(offline.len() + online_budget);
        buf.items.extend_from_slice(offline);
        buf.offline_len = offline.len();
        buf
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn offline_len(&self) -> usize {
        self.offline_len
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.items
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity.max(self.offline_len + 1) {
            self.items.push(t);
            return;
        }
        let online = self.items.len() - self.offline_len;
        let slot = self.offline_len + self.cursor % online;
        self.items[slot] = t;
        self.cursor = (self.cursor + 1) % online;
    }

    /// Uniform draws with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
        if self.items.is_empty() {
            return Err(Error::InvalidArgument("cannot sample from an empty buffer".into()));
        }
        let n = self.items.len();
        Ok((0..batch_size).map(|_| self.items[rng.gen_range(0..n)].clone()).collect())
    }
}
