//! Posterior-predictive draws at held-out index points.
//!
//! Each iteration extends the latent surfaces to the prediction points by
//! conditioning on the current training-point values, converts them to
//! varying coefficients, and draws responses through the observation noise.
//! Dense chains condition on the full training covariance; low-rank chains
//! condition through the inducing set with an exact block at the new points,
//! matching the approximation used for the likelihood.

use ndarray::prelude::*;
use rand::Rng;

use super::factors::CoefFactor;
use crate::error::{Result, VcgpError};
use crate::kernels::{KernelParams, PairwiseTable};
use crate::linalg::{standard_normal_vec, CholFactor};
use crate::model::{beta_from_state, Dataset, IndexPoint};

/// Where to predict and with what regressors: one design block of shape
/// (replicates x p) per prediction point. May be empty (inference only).
#[derive(Debug, Clone)]
pub struct PredictTarget {
    pub points: Vec<IndexPoint>,
    pub x: Vec<Array2<f64>>,
}

impl PredictTarget {
    pub fn new(points: Vec<IndexPoint>, x: Vec<Array2<f64>>) -> Self {
        PredictTarget { points, x }
    }

    pub fn empty() -> Self {
        PredictTarget {
            points: Vec::new(),
            x: Vec::new(),
        }
    }

    /// Reuse a dataset's points and designs (its responses are ignored).
    pub fn from_dataset(data: &Dataset) -> Self {
        PredictTarget {
            points: data.points().to_vec(),
            x: data
                .observations
                .iter()
                .map(|o| o.x.clone())
                .collect(),
        }
    }

    pub fn l(&self) -> usize {
        self.points.len()
    }

    pub fn total_components(&self) -> usize {
        self.x.iter().map(Array2::nrows).sum()
    }

    /// Replicate counts per point.
    pub fn replicates(&self) -> Vec<usize> {
        self.x.iter().map(Array2::nrows).collect()
    }

    pub fn validate(&self, d: usize, p: usize) -> Result<()> {
        if self.points.len() != self.x.len() {
            return Err(VcgpError::Dim(format!(
                "{} prediction points but {} design blocks",
                self.points.len(),
                self.x.len()
            )));
        }
        for (i, pt) in self.points.iter().enumerate() {
            if pt.dim() != d {
                return Err(VcgpError::Dim(format!(
                    "prediction point {i} has {} coordinates, expected {d}",
                    pt.dim()
                )));
            }
            if self.x[i].ncols() != p {
                return Err(VcgpError::Dim(format!(
                    "design block {i} has {} columns, expected {p}",
                    self.x[i].ncols()
                )));
            }
            if self.x[i].nrows() == 0 {
                return Err(VcgpError::Invalid(format!(
                    "design block {i} has no replicates"
                )));
            }
            if self.x[i].iter().any(|v| !v.is_finite()) {
                return Err(VcgpError::Invalid(format!(
                    "design block {i} holds a non-finite value"
                )));
            }
        }
        Ok(())
    }
}

/// Geometry between the conditioning set and the prediction points, cached
/// once per chain. For dense chains the rows are the training points; for
/// low-rank chains they are the inducing points.
pub struct PredictContext {
    cross_table: Option<PairwiseTable>,
    star_table: Option<PairwiseTable>,
}

impl PredictContext {
    pub fn build(rows: &[IndexPoint], stars: &[IndexPoint], spacetime: bool) -> Self {
        if stars.is_empty() {
            return PredictContext {
                cross_table: None,
                star_table: None,
            };
        }
        PredictContext {
            cross_table: Some(PairwiseTable::build(rows, stars, spacetime)),
            star_table: Some(PairwiseTable::build(stars, stars, spacetime)),
        }
    }

    pub fn l(&self) -> usize {
        self.star_table.as_ref().map_or(0, |t| t.shape().0)
    }
}

/// Conditional moments of the latent surfaces at the prediction points,
/// one (mean, covariance) pair per coefficient.
pub fn predict_conditional(
    factors: &[CoefFactor],
    pctx: &PredictContext,
    thetas: &[KernelParams],
    nu: &Array2<f64>,
) -> Result<Vec<(Array1<f64>, Array2<f64>)>> {
    let q = factors.len();
    let mut out = Vec::with_capacity(q);
    if pctx.l() == 0 {
        return Ok(out);
    }
    let cross_table = pctx.cross_table.as_ref().expect("nonempty context");
    let star_table = pctx.star_table.as_ref().expect("nonempty context");
    for a in 0..q {
        let cross = cross_table.correlations(&thetas[a]);
        let star = star_table.correlations(&thetas[a]);
        let nu_a = nu.column(a).to_owned();
        out.push(match &factors[a] {
            CoefFactor::Dense(corr) => {
                let mean = cross.t().dot(&corr.solve_vec(&nu_a));
                let cov = &star - &cross.t().dot(&corr.solve_mat(&cross));
                (mean, cov)
            }
            CoefFactor::LowRank(f) => f.conditional_at(&cross, &star, &nu_a)?,
        });
    }
    Ok(out)
}

/// Draw the latent surfaces at the prediction points: an l x q matrix.
/// Consumes l normals per coefficient, in coefficient order.
pub(crate) fn predict_latents<R: Rng>(
    factors: &[CoefFactor],
    pctx: &PredictContext,
    thetas: &[KernelParams],
    nu: &Array2<f64>,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let l = pctx.l();
    let q = factors.len();
    let mut out = Array2::zeros((l, q));
    if l == 0 {
        return Ok(out);
    }
    for (a, (mean, cov)) in predict_conditional(factors, pctx, thetas, nu)?
        .into_iter()
        .enumerate()
    {
        let chol = CholFactor::with_jitter(&cov).map_err(|e| {
            VcgpError::Numeric(format!("predictive covariance for coefficient {a}: {e}"))
        })?;
        let draw = mean + chol.mul_lower(&standard_normal_vec(l, rng));
        out.column_mut(a).assign(&draw);
    }
    Ok(out)
}

/// Varying coefficients at the prediction points, flattened point-major:
/// entry j*p + c is coefficient c at point j.
pub(crate) fn coefficients_at(
    alpha: &Array1<f64>,
    gamma: &Array2<f64>,
    nu_star: &Array2<f64>,
) -> Array1<f64> {
    let (l, _) = nu_star.dim();
    let p = alpha.len();
    let mut out = Array1::zeros(l * p);
    for j in 0..l {
        let beta = beta_from_state(alpha, gamma, nu_star.row(j));
        out.slice_mut(s![j * p..(j + 1) * p]).assign(&beta);
    }
    out
}

/// Responses through the noise: one normal per replicate, point-major.
pub(crate) fn draw_responses<R: Rng>(
    target: &PredictTarget,
    beta_flat: &Array1<f64>,
    tau2: f64,
    rng: &mut R,
) -> Array1<f64> {
    let p = if target.l() == 0 {
        0
    } else {
        beta_flat.len() / target.l()
    };
    let mut out = Array1::zeros(target.total_components());
    let sd = tau2.sqrt();
    let mut row = 0;
    for (j, x) in target.x.iter().enumerate() {
        let beta = beta_flat.slice(s![j * p..(j + 1) * p]).to_owned();
        let mean = x.dot(&beta);
        for r in 0..x.nrows() {
            out[row] = mean[r] + sd * crate::linalg::standard_normal_scalar(rng);
            row += 1;
        }
    }
    out
}
