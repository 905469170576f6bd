//! Conditional draws of the noise variance and the linear coefficients.
//!
//! Given the latent surfaces, the model is an ordinary linear regression
//! y = W b + eps with flat priors on b and log tau^2. Under tempering with
//! delta the joint conditional factorizes as
//!
//!   delta ||y - W b_hat||^2 / tau^2  ~  chi^2 with delta s~ - dim(b) df,
//!   b | tau^2  ~  N(b_hat, (tau^2 / delta) (W'W)^{-1}).

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Result, VcgpError};
use crate::linalg::{ridge_chol, standard_normal_vec, CholFactor};

/// Least-squares summary of one design: b_hat, the factored normal matrix,
/// and the residual sum of squares.
pub struct RegressionFit {
    pub b_hat: Array1<f64>,
    pub gram_chol: CholFactor,
    pub ssr: f64,
    /// Ridge the normal matrix needed (0 when W has full column rank).
    pub ridge: f64,
}

pub fn solve_regression(w: &Array2<f64>, y: &Array1<f64>) -> Result<RegressionFit> {
    if w.nrows() != y.len() {
        return Err(VcgpError::Dim(format!(
            "design has {} rows, response has {}",
            w.nrows(),
            y.len()
        )));
    }
    if w.nrows() < w.ncols() {
        return Err(VcgpError::Invalid(format!(
            "underdetermined regression: {} rows for {} coefficients",
            w.nrows(),
            w.ncols()
        )));
    }
    let gram = w.t().dot(w);
    let (gram_chol, ridge) = ridge_chol(&gram)?;
    if ridge > 0.0 {
        tracing::warn!(ridge, "rank-deficient design; normal matrix ridged");
    }
    let b_hat = gram_chol.solve_vec(&w.t().dot(y));
    let resid = y - &w.dot(&b_hat);
    let ssr = resid.dot(&resid);
    Ok(RegressionFit {
        b_hat,
        gram_chol,
        ssr,
        ridge,
    })
}

/// tau^2 = delta * ssr / chi^2_df with df = delta * s~ - n_coef.
pub fn draw_tau2<R: Rng>(
    ssr: f64,
    s_tilde: usize,
    n_coef: usize,
    delta: f64,
    rng: &mut R,
) -> Result<f64> {
    let df = delta * s_tilde as f64 - n_coef as f64;
    if df <= 0.0 {
        return Err(VcgpError::Invalid(format!(
            "noise draw needs positive degrees of freedom, got {df} \
             (delta {delta}, components {s_tilde}, coefficients {n_coef})"
        )));
    }
    let mut scaled = delta * ssr;
    if !(scaled.is_finite()) {
        return Err(VcgpError::Numeric(format!("residual sum of squares {ssr}")));
    }
    if scaled <= 0.0 {
        // exact interpolation: keep the draw proper instead of collapsing to 0
        tracing::warn!("zero residual sum of squares; flooring the scale");
        scaled = 1e-12;
    }
    let chi2 = Gamma::new(0.5 * df, 2.0)
        .map_err(|e| VcgpError::Numeric(format!("chi-square sampler: {e}")))?
        .sample(rng);
    Ok(scaled / chi2)
}

/// b = b_hat + sqrt(tau^2 / delta) L^{-T} z, covariance (tau^2/delta)(W'W)^{-1}.
pub fn draw_b<R: Rng>(fit: &RegressionFit, tau2: f64, delta: f64, rng: &mut R) -> Array1<f64> {
    let z = standard_normal_vec(fit.b_hat.len(), rng);
    let scaled = fit.gram_chol.solve_upper_vec(&z) * (tau2 / delta).sqrt();
    &fit.b_hat + &scaled
}
