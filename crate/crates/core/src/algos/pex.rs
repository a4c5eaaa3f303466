//! Policy-set action selection.

use rand::Rng as _;

use crate::approx::PolicyNet;
use crate::env::Action;
use crate::rng::Rng;

/// Probability of keeping the offline proposal: `softmax([q_off, q_on] / T)[0]`.
/// A non-positive temperature selects the argmax (ties go offline).
pub fn pex_offline_probability(q_off: f64, q_on: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return if q_off >= q_on { 1.0 } else { 0.0 };
    }
    let z = (q_on - q_off) / temperature;
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Draws one proposal from each policy and picks between them by their
/// values. Returns the action and whether the offline proposal was taken.
pub fn pex_select_action(
    offline: &PolicyNet,
    online: &PolicyNet,
    q: impl Fn(&Action) -> f64,
    state: &[f64],
    temperature: f64,
    rng: &mut Rng,
) -> (Action, bool) {
    let (a_off, _) = offline.sample(state, rng);
    let (a_on, _) = online.sample(state, rng);
    let p = pex_offline_probability(q(&a_off), q(&a_on), temperature);
    let u: f64 = rng.gen();
    if u < p {
        (a_off, true)
    } else {
        (a_on, false)
    }
}
