//! Elliptical slice sampling against an auxiliary Gaussian.
//!
//! The move targets pi(z) proportional to f(z) N(z; 0, scale^2 I): draw an
//! auxiliary point from the Gaussian, pick a level under f at the current
//! state, and shrink an angular bracket on the ellipse through both points
//! until a proposal clears the level. Each accepted state is a valid sample
//! whatever f is, as long as f is evaluable at the current state; the caller
//! folds any mismatch between the auxiliary Gaussian and the true prior into
//! f itself.
//!
//! `logf` returns None where the target cannot be evaluated (a failed
//! factorization at an extreme parameter); such proposals are treated as
//! lying outside the slice and the bracket shrinks past them.

use rand::Rng;
use std::f64::consts::TAU;

use crate::error::{Result, VcgpError};

/// Shrinkage converges geometrically, so this bound is never reached by a
/// correct target; it guards against an f that rejects its own current state.
const MAX_EVALS: u32 = 1000;

pub fn elliptical_slice<R, F>(
    current: &[f64],
    prior_scale: f64,
    mut logf: F,
    rng: &mut R,
) -> Result<(Vec<f64>, u32)>
where
    R: Rng,
    F: FnMut(&[f64]) -> Option<f64>,
{
    if !(prior_scale.is_finite() && prior_scale > 0.0) {
        return Err(VcgpError::Invalid(format!(
            "auxiliary scale {prior_scale} must be positive"
        )));
    }
    let f0 = logf(current).ok_or_else(|| {
        VcgpError::Numeric("slice target is not evaluable at the current state".into())
    })?;
    if !f0.is_finite() {
        return Err(VcgpError::Numeric(format!(
            "slice target {f0} at the current state"
        )));
    }
    let dim = current.len();
    let aux: Vec<f64> = (0..dim)
        .map(|_| prior_scale * crate::linalg::standard_normal_scalar(rng))
        .collect();
    let level = f0 + rng.gen::<f64>().ln();

    let mut phi = rng.gen::<f64>() * TAU;
    let (mut lo, mut hi) = (phi - TAU, phi);
    let mut evals = 0u32;
    loop {
        let (c, s) = (phi.cos(), phi.sin());
        let proposal: Vec<f64> = current
            .iter()
            .zip(&aux)
            .map(|(z, w)| z * c + w * s)
            .collect();
        evals += 1;
        if let Some(v) = logf(&proposal) {
            if v > level {
                return Ok((proposal, evals));
            }
        }
        if evals >= MAX_EVALS {
            return Err(VcgpError::Numeric(
                "slice bracket collapsed without acceptance".into(),
            ));
        }
        if phi < 0.0 {
            lo = phi;
        } else {
            hi = phi;
        }
        phi = lo + rng.gen::<f64>() * (hi - lo);
    }
}
