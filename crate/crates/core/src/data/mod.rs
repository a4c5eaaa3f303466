//! Transitions, replay storage, offline dataset generation and persistence.

mod buffer;
mod dataset;
pub(crate) mod io;

pub use buffer::ReplayBuffer;
pub use dataset::{generate_dataset, Dataset, DatasetMeta, Quality};
pub use io::{load_dataset, save_dataset, DATASET_MAGIC, DATASET_VERSION};

use serde::{Deserialize, Serialize};

use crate::env::{Action, ReferenceReturns};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// `gamma` for non-terminal transitions (including timeouts), 0 for terminal ones.
    pub discount: f64,
    pub timeout: bool,
    /// 0-based index of this transition within its episode.
    pub episode_step: u32,
}

/// `(raw - random) / (expert - random)`.
pub fn normalized_return(raw: f64, reference: &ReferenceReturns) -> Result<f64> {
    let span = reference.expert_return - reference.random_return;
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "degenerate normalization bounds {reference:?}"
        )));
    }
    Ok((raw - reference.random_return) / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn refs(random: f64, expert: f64) -> ReferenceReturns {
        ReferenceReturns {
            random_return: random,
            expert_return: expert,
        }
    }

    #[test]
    fn normalization_endpoints() {
        let r = refs(-10.0, 90.0);
        assert_eq!(normalized_return(-10.0, &r).unwrap(), 0.0);
        assert_eq!(normalized_return(90.0, &r).unwrap(), 1.0);
        assert_eq!(normalized_return(40.0, &r).unwrap(), 0.5);
        assert!(normalized_return(0.0, &refs(1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn normalization_preserves_order(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let r = refs(-50.0, 20.0);
            let (na, nb) = (normalized_return(a, &r).unwrap(), normalized_return(b, &r).unwrap());
            if a < b { prop_assert!(na < nb); }
        }
    }
}
