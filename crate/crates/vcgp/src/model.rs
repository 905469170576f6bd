//! Data model: index points, observations, datasets, and the mixed-model
//! parameterization of the varying-coefficient regression.
//!
//! The response at index point u_i is y(u_i) = X(u_i) beta(u_i) + eps with
//! eps ~ N(0, tau2 I). The first q regression coefficients vary over the
//! index space through beta_v(u) = alpha_v + Gamma nu(u), where nu stacks q
//! independent unit-variance Gaussian processes; the remaining p-q
//! coefficients are constant. Z(u) denotes the first q columns of X(u).

use ndarray::prelude::*;

use crate::error::{Result, VcgpError};
use crate::kernels::{KernelConfig, KernelFamily};

/// A point in the [0,1]^d index space. For spatiotemporal kernels the last
/// coordinate is time and the leading ones are space.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPoint {
    pub coords: Vec<f64>,
}

impl IndexPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        IndexPoint { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Euclidean distance over all coordinates.
    pub fn euclid(&self, other: &IndexPoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Euclidean distance over the spatial block (all but the last coordinate).
    pub fn spatial_dist(&self, other: &IndexPoint) -> f64 {
        let k = self.coords.len() - 1;
        self.coords[..k]
            .iter()
            .zip(&other.coords[..k])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Absolute temporal lag (last coordinate).
    pub fn time_lag(&self, other: &IndexPoint) -> f64 {
        (self.coords[self.coords.len() - 1] - other.coords[other.coords.len() - 1]).abs()
    }
}

/// All response components recorded at one index point: y is length s_i and
/// x is the s_i x p design block X(u_i).
#[derive(Debug, Clone)]
pub struct Observation {
    pub point: IndexPoint,
    pub y: Array1<f64>,
    pub x: Array2<f64>,
}

impl Observation {
    /// Number of response components at this point.
    pub fn s(&self) -> usize {
        self.y.len()
    }

    /// Z(u_i): the first q columns of X(u_i).
    pub fn z(&self, q: usize) -> ArrayView2<'_, f64> {
        self.x.slice(s![.., ..q])
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub p: usize,
    pub q: usize,
    pub d: usize,
}

impl Dataset {
    /// Number of index points.
    pub fn n(&self) -> usize {
        self.observations.len()
    }

    /// Total number of scalar response components (s-tilde).
    pub fn total_components(&self) -> usize {
        self.observations.iter().map(|o| o.s()).sum()
    }

    pub fn points(&self) -> Vec<IndexPoint> {
        self.observations.iter().map(|o| o.point.clone()).collect()
    }

    /// All responses stacked in observation order.
    pub fn stacked_y(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.total_components());
        let mut at = 0;
        for obs in &self.observations {
            out.slice_mut(s![at..at + obs.s()]).assign(&obs.y);
            at += obs.s();
        }
        out
    }

    /// Row offset of each observation block in the stacked response, plus the
    /// total length as a final sentinel.
    pub fn component_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.n() + 1);
        let mut at = 0;
        for obs in &self.observations {
            offsets.push(at);
            at += obs.s();
        }
        offsets.push(at);
        offsets
    }

    /// New dataset holding clones of the observations at `indices`.
    pub fn take(&self, indices: &[usize]) -> Result<Dataset> {
        let mut observations = Vec::with_capacity(indices.len());
        for &i in indices {
            let obs = self.observations.get(i).ok_or_else(|| {
                VcgpError::Invalid(format!("subset index {i} out of range (n = {})", self.n()))
            })?;
            observations.push(obs.clone());
        }
        Ok(Dataset {
            observations,
            p: self.p,
            q: self.q,
            d: self.d,
        })
    }

    /// Structural validation: dimension consistency and index coordinates
    /// inside the unit cube.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 || self.d == 0 {
            return Err(VcgpError::Invalid(
                "dataset dimensions p, q, d must all be positive".into(),
            ));
        }
        if self.q > self.p {
            return Err(VcgpError::Invalid(format!(
                "q = {} varying coefficients exceed p = {} regressors",
                self.q, self.p
            )));
        }
        if self.observations.is_empty() {
            return Err(VcgpError::Invalid("dataset has no observations".into()));
        }
        for (i, obs) in self.observations.iter().enumerate() {
            if obs.point.dim() != self.d {
                return Err(VcgpError::Dim(format!(
                    "observation {i}: index point has {} coordinates, expected d = {}",
                    obs.point.dim(),
                    self.d
                )));
            }
            for (j, c) in obs.point.coords.iter().enumerate() {
                if !(0.0..=1.0).contains(c) || !c.is_finite() {
                    return Err(VcgpError::Invalid(format!(
                        "observation {i}: coordinate {j} = {c} outside [0,1]"
                    )));
                }
            }
            if obs.s() == 0 {
                return Err(VcgpError::Invalid(format!(
                    "observation {i} has no response components"
                )));
            }
            if obs.x.nrows() != obs.s() || obs.x.ncols() != self.p {
                return Err(VcgpError::Dim(format!(
                    "observation {i}: design block is {}x{}, expected {}x{}",
                    obs.x.nrows(),
                    obs.x.ncols(),
                    obs.s(),
                    self.p
                )));
            }
            if obs.y.iter().chain(obs.x.iter()).any(|v| !v.is_finite()) {
                return Err(VcgpError::Invalid(format!(
                    "observation {i} contains non-finite values"
                )));
            }
        }
        Ok(())
    }
}

/// Model structure shared by every chain run on a dataset.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub p: usize,
    pub q: usize,
    pub d: usize,
    /// Correlation function and prior box per varying coefficient (length q).
    pub kernels: Vec<KernelConfig>,
    /// Likelihood tempering power; 1 for full-data runs, n/m for subsets.
    pub delta: f64,
    /// Low-rank latent approximation; None runs the dense path.
    pub fitc_rank: Option<usize>,
    /// Select inducing points on a regular grid instead of a seeded subsample.
    pub fitc_grid: bool,
}

impl ModelSpec {
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        data.validate()?;
        if self.p != data.p || self.q != data.q || self.d != data.d {
            return Err(VcgpError::Dim(format!(
                "model ({}, {}, {}) and dataset ({}, {}, {}) disagree on (p, q, d)",
                self.p, self.q, self.d, data.p, data.q, data.d
            )));
        }
        if self.kernels.len() != self.q {
            return Err(VcgpError::Invalid(format!(
                "{} kernel configs for q = {} varying coefficients",
                self.kernels.len(),
                self.q
            )));
        }
        for (a, k) in self.kernels.iter().enumerate() {
            k.validate()
                .map_err(|e| VcgpError::Invalid(format!("kernel {a}: {e}")))?;
            if k.family == KernelFamily::Gneiting && self.d != 3 {
                return Err(VcgpError::Invalid(format!(
                    "kernel {a}: the spatiotemporal family requires d = 3, got d = {}",
                    self.d
                )));
            }
        }
        if !(self.delta >= 1.0) || !self.delta.is_finite() {
            return Err(VcgpError::Invalid(format!(
                "tempering power delta = {} must be finite and >= 1",
                self.delta
            )));
        }
        if let Some(r) = self.fitc_rank {
            if r == 0 || r > data.n() {
                return Err(VcgpError::Invalid(format!(
                    "inducing rank {r} outside 1..={}",
                    data.n()
                )));
            }
        }
        Ok(())
    }
}

/// Sampled model parameters.
#[derive(Debug, Clone)]
pub struct ParamState {
    pub alpha: Array1<f64>,
    /// q x q loading matrix applied to the latent processes.
    pub gamma: Array2<f64>,
    pub tau2: f64,
    pub theta: Vec<crate::kernels::KernelParams>,
}

/// Latent process values at the training points: column a holds nu_a.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub nu: Array2<f64>,
}

impl LatentState {
    pub fn zeros(n: usize, q: usize) -> Self {
        LatentState {
            nu: Array2::zeros((n, q)),
        }
    }
}

/// Stack b = (alpha, gamma columns) in the ordering the design matrix uses.
pub fn pack_b(alpha: &Array1<f64>, gamma: &Array2<f64>) -> Array1<f64> {
    let p = alpha.len();
    let q = gamma.ncols();
    let mut b = Array1::zeros(p + q * q);
    b.slice_mut(s![..p]).assign(alpha);
    for a in 0..q {
        b.slice_mut(s![p + a * q..p + (a + 1) * q])
            .assign(&gamma.column(a));
    }
    b
}

/// Inverse of [`pack_b`].
pub fn unpack_b(b: &Array1<f64>, p: usize, q: usize) -> (Array1<f64>, Array2<f64>) {
    let alpha = b.slice(s![..p]).to_owned();
    let mut gamma = Array2::zeros((q, q));
    for a in 0..q {
        gamma
            .column_mut(a)
            .assign(&b.slice(s![p + a * q..p + (a + 1) * q]));
    }
    (alpha, gamma)
}

/// Assemble the regression design W for the joint (alpha, gamma) update. The
/// block row for observation i is [X(u_i) | nu(u_i)' (x) Z(u_i)], so each
/// column group a of the Kronecker part is nu_a(u_i) * Z(u_i), matching the
/// column-wise vectorization of Gamma in [`pack_b`].
pub fn build_design_w(data: &Dataset, nu: &Array2<f64>) -> Result<Array2<f64>> {
    let q = data.q;
    let p = data.p;
    if nu.nrows() != data.n() || nu.ncols() != q {
        return Err(VcgpError::Dim(format!(
            "latent matrix is {}x{}, expected {}x{}",
            nu.nrows(),
            nu.ncols(),
            data.n(),
            q
        )));
    }
    let st = data.total_components();
    let mut w = Array2::zeros((st, p + q * q));
    let mut row = 0;
    for (i, obs) in data.observations.iter().enumerate() {
        let s = obs.s();
        w.slice_mut(s![row..row + s, ..p]).assign(&obs.x);
        let z = obs.z(q);
        for a in 0..q {
            let scale = nu[[i, a]];
            let mut block = w.slice_mut(s![row..row + s, p + a * q..p + (a + 1) * q]);
            block.assign(&z);
            block *= scale;
        }
        row += s;
    }
    Ok(w)
}

/// Coefficient vector at a point: varying part alpha_v + Gamma nu(u), constant
/// part copied from alpha.
pub fn beta_from_state(alpha: &Array1<f64>, gamma: &Array2<f64>, nu_at_point: ArrayView1<f64>) -> Array1<f64> {
    let q = gamma.ncols();
    let mut beta = alpha.clone();
    let varying = gamma.dot(&nu_at_point);
    beta.slice_mut(s![..q]).add_assign(&varying);
    beta
}

/// Noise-free mean response X(u) beta(u).
pub fn mean_response(obs: &Observation, beta: &Array1<f64>) -> Array1<f64> {
    obs.x.dot(beta)
}

use std::ops::AddAssign;
