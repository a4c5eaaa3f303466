//! Central finite-difference gradient checking.

use rand::seq::index::sample;

use crate::rng::Rng;

/// Relative error floor: components whose magnitudes are both below this are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Max relative error between `analytic` and central differences of `f` on
/// the given coordinates.
pub fn finite_difference_check<F>(f: F, params: &[f64], analytic: &[f64], coords: &[usize], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Up to `n` distinct coordinates drawn uniformly from `0..len`.
pub fn random_coords(len: usize, n: usize, rng: &mut Rng) -> Vec<usize> {
    sample(rng, len, n.min(len)).into_vec()
}
