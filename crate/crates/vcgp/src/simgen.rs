//! Synthetic data with exactly known coefficient surfaces.
//!
//! One call produces a training set, a held-out test set, and the truth that
//! generated both, so error metrics never have to re-derive the target.
//!
//! The draw order inside a generation stream is fixed and documented here,
//! which makes every dataset a pure function of its seed:
//!
//! 1. index points, training first then test, two uniforms each;
//! 2. design matrices, one standard normal per observation row and column;
//! 3. the q x q loading matrix, entries uniform on (0, 3), row-major;
//! 4. per coefficient a = 1..q, one joint process draw over all train and
//!    test points (exponential correlation with decay a, dense Cholesky);
//! 5. observation noise, one normal per response component.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, VcgpError};
use crate::kernels::{build_corr_matrix, KernelFamily, KernelParams};
use crate::model::{beta_from_state, Dataset, IndexPoint, Observation};
use crate::streams::{derive_rng, Domain};

/// Largest train + test point count the dense joint draw will attempt;
/// one correlation matrix of this order is the peak allocation.
pub const DEFAULT_DENSE_CAP: usize = 5000;

const P: usize = 3;
const Q: usize = 3;
const D: usize = 2;
const REPLICATES_PER_POINT: usize = 2;
const ALPHA0: [f64; 3] = [-2.0, 2.0, -2.0];
const TAU2_0: f64 = 0.1;

/// Everything the generator used, kept for exact-truth evaluation.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub alpha0: Array1<f64>,
    pub gamma0: Array2<f64>,
    pub tau2_0: f64,
    /// Decay of the process behind each coefficient.
    pub phi0: Vec<f64>,
    /// Process values at all indices, training rows first; n_plus x q.
    pub nu0: Array2<f64>,
    /// Coefficient vectors at all indices, training rows first; n_plus x p.
    pub beta0: Array2<f64>,
    pub n_train: usize,
    pub seed: u64,
}

impl SimTruth {
    pub fn beta_train(&self) -> ArrayView2<'_, f64> {
        self.beta0.slice(s![..self.n_train, ..])
    }

    pub fn beta_test(&self) -> ArrayView2<'_, f64> {
        self.beta0.slice(s![self.n_train.., ..])
    }
}

/// Generate one train/test pair with the stock cap on the joint draw.
pub fn generate_simulation(n: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset, SimTruth)> {
    generate_simulation_with_cap(n, n_test, seed, DEFAULT_DENSE_CAP)
}

/// Generate with an explicit cap on the dense joint draw.
pub fn generate_simulation_with_cap(
    n: usize,
    n_test: usize,
    seed: u64,
    dense_cap: usize,
) -> Result<(Dataset, Dataset, SimTruth)> {
    if n == 0 || n_test == 0 {
        return Err(VcgpError::Invalid(
            "need at least one training and one test index".into(),
        ));
    }
    let n_plus = n + n_test;
    if n_plus > dense_cap {
        return Err(VcgpError::Invalid(format!(
            "{n_plus} indices exceed the dense joint-draw cap {dense_cap}"
        )));
    }
    let mut rng = derive_rng(seed, Domain::Simulation, 0);

    let points: Vec<IndexPoint> = (0..n_plus)
        .map(|_| IndexPoint::new(vec![rng.gen::<f64>(), rng.gen::<f64>()]))
        .collect();

    let designs: Vec<Array2<f64>> = (0..n_plus)
        .map(|_| {
            Array2::from_shape_fn((REPLICATES_PER_POINT, P), |_| {
                StandardNormal.sample(&mut rng)
            })
        })
        .collect();

    let gamma0 = Array2::from_shape_fn((Q, Q), |_| rng.gen::<f64>() * 3.0);

    let phi0: Vec<f64> = (1..=Q).map(|a| a as f64).collect();
    let mut nu0 = Array2::zeros((n_plus, Q));
    for a in 0..Q {
        let params = KernelParams::from_values(KernelFamily::Exponential, &[phi0[a]])?;
        let corr = build_corr_matrix(&points, &params)?;
        nu0.column_mut(a).assign(&corr.sample_prior(&mut rng));
    }

    let alpha0 = Array1::from_vec(ALPHA0.to_vec());
    let mut beta0 = Array2::zeros((n_plus, P));
    for i in 0..n_plus {
        beta0
            .row_mut(i)
            .assign(&beta_from_state(&alpha0, &gamma0, nu0.row(i)));
    }

    let noise_sd = TAU2_0.sqrt();
    let mut observations = Vec::with_capacity(n_plus);
    for i in 0..n_plus {
        let x = designs[i].clone();
        let mean = x.dot(&beta0.row(i).to_owned());
        let y = mean.mapv(|m| {
            let z: f64 = StandardNormal.sample(&mut rng);
            m + noise_sd * z
        });
        observations.push(Observation {
            point: points[i].clone(),
            y,
            x,
        });
    }
    let test_observations = observations.split_off(n);

    let train = Dataset {
        observations,
        p: P,
        q: Q,
        d: D,
    };
    let test = Dataset {
        observations: test_observations,
        p: P,
        q: Q,
        d: D,
    };
    train.validate()?;
    test.validate()?;

    let truth = SimTruth {
        alpha0,
        gamma0,
        tau2_0: TAU2_0,
        phi0,
        nu0,
        beta0,
        n_train: n,
        seed,
    };
    Ok((train, test, truth))
}

/// Deterministic per-replicate seeds fanned out from one base seed.
pub fn replicate_seeds(base_seed: u64, n_replicates: usize) -> Result<Vec<u64>> {
    if n_replicates == 0 {
        return Err(VcgpError::Invalid("need at least one replicate".into()));
    }
    Ok((0..n_replicates)
        .map(|r| derive_rng(base_seed, Domain::Simulation, r as u64 + 1).gen::<u64>())
        .collect())
}
