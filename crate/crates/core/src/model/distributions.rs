//! Sampling and log-density primitives used by the Gibbs sweep.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::ModelError;

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Inverse-gamma draw with shape `a` and rate `b` (density x^-(a+1) e^{-b/x}).
pub fn sample_inverse_gamma<R: Rng>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("gamma parameters");
    1.0 / g.sample(rng)
}

/// Inverse-Wishart draw via Bartlett decomposition of the precision.
///
/// Convention: X ~ IW(df, scale) has mean scale / (df - d - 1) and
/// X^{-1} ~ Wishart(df, scale^{-1}).
pub fn sample_inverse_wishart<R: Rng>(
    rng: &mut R,
    df: f64,
    scale: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ModelError> {
    let d = scale.nrows();
    debug_assert!(df > (d - 1) as f64);
    let scale_inv = Cholesky::new(scale.clone())
        .ok_or(ModelError::NotPositiveDefinite)?
        .inverse();
    let l = Cholesky::new(scale_inv)
        .ok_or(ModelError::NotPositiveDefinite)?
        .unpack();
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(df - i as f64).expect("chi-squared df");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = &l * a;
    let w = &la * la.transpose();
    let x = Cholesky::new(w + DMatrix::identity(d, d) * super::SIGMA_JITTER)
        .ok_or(ModelError::NotPositiveDefinite)?
        .inverse();
    // enforce exact symmetry
    Ok(0.5 * (&x + x.transpose()))
}

/// Draw from N(mean, precision^{-1}) given the precision matrix.
pub fn sample_mvn_prec<R: Rng>(
    rng: &mut R,
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
) -> Result<DVector<f64>, ModelError> {
    let chol = Cholesky::new(precision.clone()).ok_or(ModelError::NotPositiveDefinite)?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let shift = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(ModelError::NotPositiveDefinite)?;
    Ok(mean + shift)
}

pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

/// Log density of N(mean, sigma) at x.
pub fn ln_mvn(x: &DVector<f64>, mean: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64, ModelError> {
    let d = x.len() as f64;
    let chol = Cholesky::new(sigma.clone()).ok_or(ModelError::NotPositiveDefinite)?;
    let ln_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let diff = x - mean;
    let solved = chol.solve(&diff);
    let quad = diff.dot(&solved);
    Ok(-0.5 * (d * LN_2PI + ln_det + quad))
}

/// Log density of IG(shape, rate) at x.
pub fn ln_inverse_gamma(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

fn ln_multivariate_gamma(d: usize, a: f64) -> f64 {
    let d_f = d as f64;
    d_f * (d_f - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (0..d).map(|i| ln_gamma(a - i as f64 / 2.0)).sum::<f64>()
}

/// Log density of IW(df, scale) at x.
pub fn ln_inverse_wishart(
    x: &DMatrix<f64>,
    df: f64,
    scale: &DMatrix<f64>,
) -> Result<f64, ModelError> {
    let d = x.nrows();
    let d_f = d as f64;
    let chol_x = Cholesky::new(x.clone()).ok_or(ModelError::NotPositiveDefinite)?;
    let chol_s = Cholesky::new(scale.clone()).ok_or(ModelError::NotPositiveDefinite)?;
    let ln_det_x = 2.0 * chol_x.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ln_det_s = 2.0 * chol_s.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let x_inv = chol_x.inverse();
    let trace = (scale * x_inv).trace();
    Ok(0.5 * df * ln_det_s
        - 0.5 * df * d_f * std::f64::consts::LN_2
        - ln_multivariate_gamma(d, 0.5 * df)
        - 0.5 * (df + d_f + 1.0) * ln_det_x
        - 0.5 * trace)
}
