//! Small differentiable function-approximation stack.
//!
//! Everything is `f64` and allocation-light; networks are plain multilayer
//! perceptrons with ReLU hidden layers and a linear output, differentiated
//! by hand-written reverse mode.

mod adam;
pub mod gradcheck;
mod heads;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use heads::{argmax, gaussian_kl, layer_sizes, log_softmax, logsumexp, softmax, TANH_EPS, CategoricalHead, CriticNet, GaussianHead, PolicyNet, SquashedSample};
pub use mlp::{Mlp, Trace};

use crate::{Error, Result};

/// Evaluates a scalar loss with its analytic gradient and rejects non-finite
/// losses. The loss closure receives the parameter vector.
pub fn grad<F>(loss: F, params: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (value, g) = loss(params);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss = {value}")));
    }
    if g.len() != params.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} parameters",
            g.len(),
            params.len()
        )));
    }
    Ok(g)
}

/// `target <- (1 - rate) * target + rate * online`.
pub fn polyak_update(target: &mut [f64], online: &[f64], rate: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::Shape(format!(
            "target has {} entries, online {}",
            target.len(),
            online.len()
        )));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidArgument(format!("polyak rate {rate} outside (0, 1]")));
    }
    if rate == 1.0 {
        target.copy_from_slice(online);
    } else {
        for (t, o) in target.iter_mut().zip(online) {
            *t = (1.0 - rate) * *t + rate * o;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyak_basic() {
        let mut t = vec![0.0; 3];
        polyak_update(&mut t, &[1.0; 3], 0.005).unwrap();
        assert!(t.iter().all(|&x| (x - 0.005).abs() < 1e-15));
        polyak_update(&mut t, &[2.0, 3.0, 4.0], 1.0).unwrap();
        assert_eq!(t, vec![2.0, 3.0, 4.0]);
        assert!(polyak_update(&mut t, &[1.0], 0.5).is_err());
        assert!(polyak_update(&mut t, &[1.0; 3], 0.0).is_err());
    }

    #[test]
    fn polyak_halves_gap_every_ln2_over_rate_steps() {
        let rate = 0.01;
        let mut t = vec![0.0];
        let steps = (std::f64::consts::LN_2 / rate).round() as usize;
        for _ in 0..steps {
            polyak_update(&mut t, &[1.0], rate).unwrap();
        }
        let gap = 1.0 - t[0];
        assert!((gap - 0.5).abs() < 0.01, "gap {gap}");
    }

    #[test]
    fn grad_of_half_square_norm_is_identity() {
        let p = vec![1.5, -2.0, 0.25];
        let g = grad(|x| (0.5 * x.iter().map(|v| v * v).sum::<f64>(), x.to_vec()), &p).unwrap();
        assert_eq!(g, p);
        assert!(grad(|_| (f64::NAN, vec![0.0; 3]), &p).is_err());
    }
}
