//! Per-coefficient correlation operators and the assembler that builds them.
//!
//! Every latent coefficient surface carries its own kernel parameters but all
//! share the same index points, so the assembler caches the pairwise lag
//! tables once and re-evaluates kernels against them each time parameters
//! move. Depending on configuration a coefficient is backed by a dense
//! factorization or by the low-rank inducing-point approximation; the
//! `CoefFactor` enum gives the sampler one interface over both.

use ndarray::prelude::*;
use rand::Rng;

use crate::error::{Result, VcgpError};
use crate::kernels::{
    select_inducing_grid, select_inducing_random, CorrMatrix, FitcFactor, KernelParams,
    PairwiseTable,
};
use crate::model::IndexPoint;

#[derive(Debug, Clone)]
pub enum CoefFactor {
    Dense(CorrMatrix),
    LowRank(FitcFactor),
}

impl CoefFactor {
    pub fn n(&self) -> usize {
        match self {
            CoefFactor::Dense(m) => m.dim(),
            CoefFactor::LowRank(f) => f.n(),
        }
    }

    pub fn logdet(&self) -> f64 {
        match self {
            CoefFactor::Dense(m) => m.logdet(),
            CoefFactor::LowRank(f) => f.logdet(),
        }
    }

    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        match self {
            CoefFactor::Dense(m) => m.solve_vec(b),
            CoefFactor::LowRank(f) => f.solve_vec(b),
        }
    }

    pub fn solve_mat(&self, b: &Array2<f64>) -> Array2<f64> {
        match self {
            CoefFactor::Dense(m) => m.solve_mat(b),
            CoefFactor::LowRank(f) => {
                let mut out = Array2::zeros(b.dim());
                for (j, col) in b.columns().into_iter().enumerate() {
                    out.column_mut(j).assign(&f.solve_vec(&col.to_owned()));
                }
                out
            }
        }
    }

    pub fn quad_form(&self, v: &Array1<f64>) -> f64 {
        match self {
            CoefFactor::Dense(m) => m.quad_form(v),
            CoefFactor::LowRank(f) => f.quad_form(v),
        }
    }

    /// The implied prior covariance applied to x.
    pub fn matvec(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            CoefFactor::Dense(m) => m.matvec(x),
            CoefFactor::LowRank(f) => f.matvec(x),
        }
    }

    pub fn sample_prior<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        match self {
            CoefFactor::Dense(m) => m.sample_prior(rng),
            CoefFactor::LowRank(f) => f.sample_prior(rng),
        }
    }

    pub fn as_dense(&self) -> Option<&CorrMatrix> {
        match self {
            CoefFactor::Dense(m) => Some(m),
            CoefFactor::LowRank(_) => None,
        }
    }

    pub fn as_low_rank(&self) -> Option<&FitcFactor> {
        match self {
            CoefFactor::LowRank(f) => Some(f),
            CoefFactor::Dense(_) => None,
        }
    }

    /// Dense materialization of the implied prior covariance. Small-problem
    /// oracles only; never called on the sampling path.
    pub fn dense_prior(&self) -> Array2<f64> {
        match self {
            CoefFactor::Dense(m) => m.effective(),
            CoefFactor::LowRank(f) => f.reconstruct(),
        }
    }
}

struct LowRankContext {
    indices: Vec<usize>,
    points: Vec<IndexPoint>,
    inducing_table: PairwiseTable,
    cross_table: PairwiseTable,
}

/// Geometry cache for one point set; builds a fresh factor for any kernel
/// parameter value without touching the points again.
pub struct CorrAssembler {
    points: Vec<IndexPoint>,
    train_table: PairwiseTable,
    low_rank: Option<LowRankContext>,
}

impl CorrAssembler {
    /// `spacetime` must be true when any coefficient uses the spatiotemporal
    /// kernel. `fitc_rank` switches every coefficient to the low-rank
    /// backing; `grid` selects inducing points on a regular grid instead of
    /// the seeded random subset.
    pub fn new(
        points: Vec<IndexPoint>,
        spacetime: bool,
        fitc_rank: Option<usize>,
        grid: bool,
        seed: u64,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(VcgpError::Invalid("assembler over zero points".into()));
        }
        let train_table = PairwiseTable::build(&points, &points, spacetime);
        let low_rank = match fitc_rank {
            None => None,
            Some(rank) => {
                let indices = if grid {
                    select_inducing_grid(&points, rank)?
                } else {
                    select_inducing_random(points.len(), rank, seed)?
                };
                let ind_points: Vec<IndexPoint> =
                    indices.iter().map(|&i| points[i].clone()).collect();
                let inducing_table = PairwiseTable::build(&ind_points, &ind_points, spacetime);
                let cross_table = PairwiseTable::build(&ind_points, &points, spacetime);
                Some(LowRankContext {
                    indices,
                    points: ind_points,
                    inducing_table,
                    cross_table,
                })
            }
        };
        Ok(CorrAssembler {
            points,
            train_table,
            low_rank,
        })
    }

    pub fn points(&self) -> &[IndexPoint] {
        &self.points
    }

    pub fn is_low_rank(&self) -> bool {
        self.low_rank.is_some()
    }

    pub fn inducing_points(&self) -> Option<&[IndexPoint]> {
        self.low_rank.as_ref().map(|c| c.points.as_slice())
    }

    pub fn build(&self, params: &KernelParams) -> Result<CoefFactor> {
        match &self.low_rank {
            None => Ok(CoefFactor::Dense(CorrMatrix::from_entries(
                self.train_table.correlations(params),
            )?)),
            Some(ctx) => Ok(CoefFactor::LowRank(FitcFactor::from_tables(
                &ctx.inducing_table,
                &ctx.cross_table,
                ctx.indices.clone(),
                ctx.points.clone(),
                params,
            )?)),
        }
    }

    pub fn build_all(&self, thetas: &[KernelParams]) -> Result<Vec<CoefFactor>> {
        thetas.iter().map(|t| self.build(t)).collect()
    }
}
