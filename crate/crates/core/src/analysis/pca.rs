//! Two-component principal component projection.

use nalgebra::DMatrix;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pca2 {
    pub components: [Vec<f64>; 2],
    /// Variance along each component (eigenvalues of the covariance).
    pub variances: [f64; 2],
    pub projections: Vec<[f64; 2]>,
}

/// Centers `points` and projects them onto the top two right singular
/// vectors of the centered data. Each component's sign is fixed so that its
/// largest-magnitude entry is positive.
pub fn pca2(points: &[Vec<f64>]) -> Result<Pca2> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("projection needs at least 3 points, got {n}")));
    }
    let d = points[0].len();
    if d < 2 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("points must share a dimension of at least 2".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    if !(centered.norm_squared() > 0.0) {
        return Err(Error::InvalidArgument("points have zero variance".into()));
    }
    let svd = centered.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");
    let scale = (n - 1) as f64;
    let mut components: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut variances = [0.0; 2];
    for k in 0..2 {
        if k < svd.singular_values.len() {
            let mut v: Vec<f64> = vt.row(k).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            variances[k] = svd.singular_values[k].powi(2) / scale;
            components[k] = v;
        }
    }
    let projections = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let dot = |v: &[f64]| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    Ok(Pca2 {
        components,
        variances,
        projections,
    })
}
