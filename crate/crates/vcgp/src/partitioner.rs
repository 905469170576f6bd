//! Random partitioning of a dataset into equal-size subsets for distributed
//! sampling.
//!
//! Subsets are drawn without replacement inside each subset and independently
//! across subsets, so one observation may appear in several subsets (or in
//! none). Every subset keeps its indices sorted ascending; together with the
//! per-subset derived streams this makes the plan a pure function of
//! (n, k, m, seed).

use crate::error::{Result, VcgpError};
use crate::model::Dataset;
use crate::streams::{derive_rng, Domain};

/// Index plan for one distributed run: `subsets[j]` holds the (sorted) row
/// indices of subset j in the original dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPlan {
    pub n: usize,
    pub subsets: Vec<Vec<usize>>,
}

impl SubsetPlan {
    pub fn k(&self) -> usize {
        self.subsets.len()
    }

    pub fn m(&self) -> usize {
        self.subsets.first().map_or(0, Vec::len)
    }
}

/// Draw `k` subsets of `m` observation indices each from `0..n`.
pub fn make_subsets(n: usize, k: usize, m: usize, seed: u64) -> Result<SubsetPlan> {
    if k == 0 {
        return Err(VcgpError::Invalid("subset count k must be positive".into()));
    }
    if m == 0 {
        return Err(VcgpError::Invalid("subset size m must be positive".into()));
    }
    if m > n {
        return Err(VcgpError::Invalid(format!(
            "subset size {m} exceeds dataset size {n}"
        )));
    }
    let subsets = (0..k)
        .map(|j| {
            let mut rng = derive_rng(seed, Domain::Partition, j as u64);
            let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    Ok(SubsetPlan { n, subsets })
}

/// Materialize subset `j` of the plan as its own dataset.
pub fn extract_subset(data: &Dataset, plan: &SubsetPlan, j: usize) -> Result<Dataset> {
    if plan.n != data.n() {
        return Err(VcgpError::Dim(format!(
            "plan built for n={}, dataset has n={}",
            plan.n,
            data.n()
        )));
    }
    let subset = plan
        .subsets
        .get(j)
        .ok_or_else(|| VcgpError::Invalid(format!("subset index {j} out of 0..{}", plan.k())))?;
    data.take(subset)
}
