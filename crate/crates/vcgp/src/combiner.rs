//! Recombination of subset draws into one approximate posterior.
//!
//! Every method consumes the per-subset draw stores and emits either a new
//! set of draws or averaged quantile curves:
//!
//! * `Amc`: moment-align each subset to the pooled mean and pooled covariance
//!   (average of subset means, average of subset covariances).
//! * `Dpmc`: recenter each subset on the pooled mean, covariances untouched.
//! * `Wasp`: align to the Wasserstein barycenter of the subset Gaussians,
//!   computed by fixed-point iteration on the covariance.
//! * `Pie`: average the subset empirical quantile functions dimension by
//!   dimension; output is quantile curves, not draws.
//! * `Cmc`: precision-weighted consensus of paired draws across subsets.
//!
//! Prediction-point coefficients and responses are combined jointly (or per
//! prediction point, see `BlockPolicy`); the log noise variance is always
//! combined as its own scalar dimension.

use ndarray::prelude::*;

use crate::error::{Result, VcgpError};
use crate::linalg::{
    frobenius_distance, ridge_chol, spd_inv_sqrt, spd_sqrt, symmetrized,
};
use crate::sampler::DrawStore;

/// Spectral floor for covariance roots: an empirical covariance from finitely
/// many draws can be singular, a floored root keeps the alignment maps finite.
const EIGEN_FLOOR: f64 = 1e-12;
/// Barycenter fixed-point stopping rule (Frobenius distance between sweeps).
const WASP_TOL: f64 = 1e-8;
const WASP_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMethod {
    Amc,
    Dpmc,
    Wasp,
    Pie,
    Cmc,
}

impl CombineMethod {
    pub fn name(self) -> &'static str {
        match self {
            CombineMethod::Amc => "amc",
            CombineMethod::Dpmc => "dpmc",
            CombineMethod::Wasp => "wasp",
            CombineMethod::Pie => "pie",
            CombineMethod::Cmc => "cmc",
        }
    }

    pub fn all() -> [CombineMethod; 5] {
        [
            CombineMethod::Amc,
            CombineMethod::Dpmc,
            CombineMethod::Wasp,
            CombineMethod::Pie,
            CombineMethod::Cmc,
        ]
    }
}

impl std::str::FromStr for CombineMethod {
    type Err = VcgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "amc" => Ok(CombineMethod::Amc),
            "dpmc" => Ok(CombineMethod::Dpmc),
            "wasp" => Ok(CombineMethod::Wasp),
            "pie" => Ok(CombineMethod::Pie),
            "cmc" => Ok(CombineMethod::Cmc),
            other => Err(VcgpError::Config(format!(
                "unknown combination method '{other}' (amc, dpmc, wasp, pie, cmc)"
            ))),
        }
    }
}

/// How to group the prediction-point dimensions for moment estimation.
/// `Auto` combines everything jointly when the draw count supports the
/// covariance (dimension at most half the draws per subset) and falls back to
/// one block per prediction point otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockPolicy {
    Auto,
    Joint,
    PerTestPoint,
}

impl std::str::FromStr for BlockPolicy {
    type Err = VcgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(BlockPolicy::Auto),
            "joint" => Ok(BlockPolicy::Joint),
            "per-point" | "per_point" | "pertestpoint" => Ok(BlockPolicy::PerTestPoint),
            other => Err(VcgpError::Config(format!(
                "unknown block policy '{other}' (auto, joint, per-point)"
            ))),
        }
    }
}

/// Combined draws, laid out like a single subset store.
#[derive(Debug, Clone)]
pub struct CombinedDraws {
    pub method: CombineMethod,
    pub beta: Array2<f64>,
    pub y: Array2<f64>,
    pub log_tau2: Array1<f64>,
    /// Largest fixed-point iteration count over all barycenter blocks.
    pub wasp_iterations: Option<usize>,
}

/// Averaged quantile curves on the standard probability grid.
#[derive(Debug, Clone)]
pub struct QuantileSummary {
    pub probs: Vec<f64>,
    pub beta: Array2<f64>,
    pub y: Array2<f64>,
    pub log_tau2: Array1<f64>,
}

#[derive(Debug, Clone)]
pub enum CombineOutput {
    Draws(CombinedDraws),
    Quantiles(QuantileSummary),
}

impl CombineOutput {
    pub fn as_draws(&self) -> Option<&CombinedDraws> {
        match self {
            CombineOutput::Draws(d) => Some(d),
            CombineOutput::Quantiles(_) => None,
        }
    }

    pub fn as_quantiles(&self) -> Option<&QuantileSummary> {
        match self {
            CombineOutput::Quantiles(q) => Some(q),
            CombineOutput::Draws(_) => None,
        }
    }
}

/// Sample mean and covariance with divisor T.
pub fn subset_moments(draws: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let t = draws.nrows().max(1) as f64;
    let d = draws.ncols();
    let mut mean = Array1::zeros(d);
    for row in draws.rows() {
        mean += &row;
    }
    mean /= t;
    let mut centered = draws.to_owned();
    for mut row in centered.rows_mut() {
        row -= &mean;
    }
    let cov = centered.t().dot(&centered) / t;
    (mean, cov)
}

/// The probability grid every quantile curve is evaluated on:
/// 0.005, 0.010, ..., 0.995.
pub fn pie_grid() -> Vec<f64> {
    (1..=199).map(|i| i as f64 * 0.005).collect()
}

/// Linear-interpolation sample quantile (the common "type 7" rule) on an
/// ascending slice.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fixed-point iteration for the barycenter covariance:
/// S <- S^{-1/2} ((1/k) sum_j (S^{1/2} C_j S^{1/2})^{1/2})^2 S^{-1/2},
/// started at the average covariance. Returns the covariance and the number
/// of sweeps taken; hitting the cap logs a warning instead of failing.
pub fn wasserstein_barycenter(covs: &[Array2<f64>]) -> Result<(Array2<f64>, usize)> {
    if covs.is_empty() {
        return Err(VcgpError::Invalid("barycenter of zero covariances".into()));
    }
    let d = covs[0].nrows();
    if covs.iter().any(|c| c.dim() != (d, d)) {
        return Err(VcgpError::Dim("covariance shapes differ".into()));
    }
    let k = covs.len() as f64;
    let mut s = Array2::<f64>::zeros((d, d));
    for c in covs {
        s += c;
    }
    s /= k;
    for iter in 1..=WASP_MAX_ITERS {
        let s_half = spd_sqrt(&s, EIGEN_FLOOR)?;
        let s_inv_half = spd_inv_sqrt(&s, EIGEN_FLOOR)?;
        let mut inner = Array2::<f64>::zeros((d, d));
        for c in covs {
            let m = s_half.dot(c).dot(&s_half);
            inner += &spd_sqrt(&m, EIGEN_FLOOR)?;
        }
        inner /= k;
        let next = symmetrized(&s_inv_half.dot(&inner).dot(&inner).dot(&s_inv_half));
        let diff = frobenius_distance(&next, &s);
        s = next;
        if diff < WASP_TOL {
            return Ok((s, iter));
        }
    }
    tracing::warn!("barycenter fixed point hit the {WASP_MAX_ITERS}-sweep cap");
    Ok((s, WASP_MAX_ITERS))
}

/// Combine one block of dimensions. Input: one T x d matrix per subset.
/// Output rows are subset-major (subset 0's mapped draws first) for the
/// alignment methods, and T paired rows for the consensus method.
pub(crate) fn combine_matrix_block(
    subsets: &[Array2<f64>],
    method: CombineMethod,
) -> Result<(Array2<f64>, Option<usize>)> {
    let k = subsets.len();
    if k == 0 {
        return Err(VcgpError::Invalid("no subsets to combine".into()));
    }
    let t = subsets[0].nrows();
    let d = subsets[0].ncols();
    if subsets.iter().any(|s| s.dim() != (t, d)) {
        return Err(VcgpError::Dim("subset draw shapes differ".into()));
    }
    let moments: Vec<(Array1<f64>, Array2<f64>)> = subsets
        .iter()
        .map(|s| subset_moments(s.view()))
        .collect();
    let mut mean_bar = Array1::zeros(d);
    for (m, _) in &moments {
        mean_bar += m;
    }
    mean_bar /= k as f64;

    let align = |maps: Option<Vec<Array2<f64>>>| -> Array2<f64> {
        let mut out = Array2::zeros((k * t, d));
        for (j, sub) in subsets.iter().enumerate() {
            for tt in 0..t {
                let centered = &sub.row(tt) - &moments[j].0;
                let mapped = match &maps {
                    Some(a) => a[j].dot(&centered),
                    None => centered,
                };
                out.row_mut(j * t + tt).assign(&(&mapped + &mean_bar));
            }
        }
        out
    };

    match method {
        CombineMethod::Dpmc => Ok((align(None), None)),
        CombineMethod::Amc => {
            let mut cov_bar = Array2::zeros((d, d));
            for (_, c) in &moments {
                cov_bar += c;
            }
            cov_bar /= k as f64;
            let bar_half = spd_sqrt(&cov_bar, EIGEN_FLOOR)?;
            let maps: Vec<Array2<f64>> = moments
                .iter()
                .map(|(_, c)| Ok(bar_half.dot(&spd_inv_sqrt(c, EIGEN_FLOOR)?)))
                .collect::<Result<_>>()?;
            Ok((align(Some(maps)), None))
        }
        CombineMethod::Wasp => {
            let covs: Vec<Array2<f64>> = moments.iter().map(|(_, c)| c.clone()).collect();
            let (s, iters) = wasserstein_barycenter(&covs)?;
            let s_half = spd_sqrt(&s, EIGEN_FLOOR)?;
            let maps: Vec<Array2<f64>> = moments
                .iter()
                .map(|(_, c)| Ok(s_half.dot(&spd_inv_sqrt(c, EIGEN_FLOOR)?)))
                .collect::<Result<_>>()?;
            Ok((align(Some(maps)), Some(iters)))
        }
        CombineMethod::Cmc => {
            let eye = Array2::eye(d);
            let precisions: Vec<Array2<f64>> = moments
                .iter()
                .map(|(_, c)| {
                    let (chol, _) = ridge_chol(c)?;
                    Ok(chol.solve_mat(&eye))
                })
                .collect::<Result<_>>()?;
            let mut total = Array2::<f64>::zeros((d, d));
            for p in &precisions {
                total += p;
            }
            let (total_chol, _) = ridge_chol(&total)?;
            let mut out = Array2::zeros((t, d));
            for tt in 0..t {
                let mut acc = Array1::<f64>::zeros(d);
                for (j, sub) in subsets.iter().enumerate() {
                    acc += &precisions[j].dot(&sub.row(tt).to_owned());
                }
                out.row_mut(tt).assign(&total_chol.solve_vec(&acc));
            }
            Ok((out, None))
        }
        CombineMethod::Pie => Err(VcgpError::Invalid(
            "quantile averaging does not produce draws".into(),
        )),
    }
}

/// Per-dimension averaged quantile curves over the standard grid.
fn pie_columns(subsets: &[Array2<f64>]) -> Array2<f64> {
    let probs = pie_grid();
    let d = subsets.first().map_or(0, Array2::ncols);
    let mut out = Array2::zeros((probs.len(), d));
    for c in 0..d {
        for sub in subsets {
            let mut col: Vec<f64> = sub.column(c).to_vec();
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (pi, p) in probs.iter().enumerate() {
                out[[pi, c]] += quantile_type7(&col, *p);
            }
        }
    }
    out /= subsets.len() as f64;
    out
}

fn validate_stores(stores: &[DrawStore]) -> Result<()> {
    let first = stores
        .first()
        .ok_or_else(|| VcgpError::Invalid("no subset draws to combine".into()))?;
    if first.t() == 0 {
        return Err(VcgpError::Invalid("subset stores hold no draws".into()));
    }
    for s in &stores[1..] {
        if s.t() != first.t() {
            return Err(VcgpError::Dim(format!(
                "subset {} holds {} draws, subset {} holds {}",
                s.subset_id,
                s.t(),
                first.subset_id,
                first.t()
            )));
        }
        if s.p != first.p
            || s.test_points != first.test_points
            || s.replicates != first.replicates
        {
            return Err(VcgpError::Invalid(format!(
                "subset {} disagrees with subset {} on the prediction layout",
                s.subset_id, first.subset_id
            )));
        }
    }
    Ok(())
}

/// Combine subset draw stores. All stores must share the prediction layout
/// and draw count.
pub fn combine(
    stores: &[DrawStore],
    method: CombineMethod,
    policy: BlockPolicy,
) -> Result<CombineOutput> {
    validate_stores(stores)?;
    let first = &stores[0];
    let t = first.t();
    let lp = first.beta.ncols();
    let comps = first.y.ncols();
    let dim = lp + comps;

    let joints: Vec<Array2<f64>> = stores
        .iter()
        .map(|s| {
            let mut m = Array2::zeros((t, dim));
            m.slice_mut(s![.., ..lp]).assign(&s.beta);
            m.slice_mut(s![.., lp..]).assign(&s.y);
            m
        })
        .collect();
    let tau_cols: Vec<Array2<f64>> = stores
        .iter()
        .map(|s| {
            Array2::from_shape_fn((t, 1), |(r, _)| s.log_tau2[r])
        })
        .collect();

    if method == CombineMethod::Pie {
        let joint_q = pie_columns(&joints);
        let tau_q = pie_columns(&tau_cols);
        return Ok(CombineOutput::Quantiles(QuantileSummary {
            probs: pie_grid(),
            beta: joint_q.slice(s![.., ..lp]).to_owned(),
            y: joint_q.slice(s![.., lp..]).to_owned(),
            log_tau2: tau_q.column(0).to_owned(),
        }));
    }

    let blocks: Vec<Vec<usize>> = match policy {
        BlockPolicy::Joint => vec![(0..dim).collect()],
        BlockPolicy::PerTestPoint => per_point_blocks(first, lp),
        BlockPolicy::Auto => {
            if 2 * dim <= t {
                vec![(0..dim).collect()]
            } else {
                per_point_blocks(first, lp)
            }
        }
    };

    let t_out = if method == CombineMethod::Cmc {
        t
    } else {
        stores.len() * t
    };
    let mut out = Array2::zeros((t_out, dim));
    let mut wasp_iterations: Option<usize> = None;
    for cols in &blocks {
        let subs: Vec<Array2<f64>> = joints.iter().map(|m| take_cols(m, cols)).collect();
        let (res, iters) = combine_matrix_block(&subs, method)?;
        put_cols(&mut out, cols, &res);
        if let Some(i) = iters {
            wasp_iterations = Some(wasp_iterations.map_or(i, |w| w.max(i)));
        }
    }
    let (tau_out, tau_iters) = combine_matrix_block(&tau_cols, method)?;
    if let Some(i) = tau_iters {
        wasp_iterations = Some(wasp_iterations.map_or(i, |w| w.max(i)));
    }

    Ok(CombineOutput::Draws(CombinedDraws {
        method,
        beta: out.slice(s![.., ..lp]).to_owned(),
        y: out.slice(s![.., lp..]).to_owned(),
        log_tau2: tau_out.column(0).to_owned(),
        wasp_iterations,
    }))
}

fn per_point_blocks(store: &DrawStore, lp: usize) -> Vec<Vec<usize>> {
    let offsets = store.y_offsets();
    (0..store.l())
        .map(|j| {
            let mut cols: Vec<usize> = store.beta_cols(j).collect();
            cols.extend((offsets[j]..offsets[j + 1]).map(|c| lp + c));
            cols
        })
        .collect()
}

fn take_cols(m: &Array2<f64>, cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), cols.len()), |(r, c)| m[[r, cols[c]]])
}

fn put_cols(dst: &mut Array2<f64>, cols: &[usize], src: &Array2<f64>) {
    for (c, &col) in cols.iter().enumerate() {
        dst.column_mut(col).assign(&src.column(c));
    }
}
