//! Correlation functions over the index space, their parameter transforms,
//! and dense/low-rank correlation matrix builders.
//!
//! Two stationary families are supported: the exponential kernel
//! exp(-phi ||u - u'||) for any index dimension, and a spatiotemporal kernel
//! for d = 3 (two spatial coordinates plus time) with nonseparable
//! space-time interaction:
//!
//!   rho(u, u') = (psi dt^2 + 1)^(-kappa) exp(-phi ||dh|| / (psi dt^2 + 1)^(kappa/2))
//!
//! Kernel parameters carry box priors; sampling happens on the logit-
//! transformed scale, so the transform pair and its log-Jacobian live here
//! next to the kernels themselves.

use ndarray::prelude::*;
use rand::Rng;

use crate::error::{Result, VcgpError};
use crate::linalg::{standard_normal_vec, CholFactor};
use crate::model::IndexPoint;
use crate::streams::{derive_rng, Domain};

/// Floor for the low-rank diagonal correction. A training point that
/// coincides with an inducing point has exactly zero residual variance;
/// the Woodbury inner matrix carries 1/d_i, so the floor bounds its
/// conditioning. 1e-6 keeps solves near machine precision while the implied
/// diagonal nugget stays far below the low-rank approximation error.
const DIAG_CORRECTION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Exponential,
    Gneiting,
}

impl KernelFamily {
    /// Number of scalar parameters.
    pub fn arity(self) -> usize {
        match self {
            KernelFamily::Exponential => 1,
            KernelFamily::Gneiting => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Exponential => "exponential",
            KernelFamily::Gneiting => "gneiting",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = VcgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exponential" => Ok(KernelFamily::Exponential),
            "gneiting" => Ok(KernelFamily::Gneiting),
            other => Err(VcgpError::Config(format!(
                "unknown kernel family '{other}' (expected exponential or gneiting)"
            ))),
        }
    }
}

/// Kernel parameters; the variant fixes the family.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelParams {
    Exponential { phi: f64 },
    Gneiting { phi: f64, psi: f64, kappa: f64 },
}

impl KernelParams {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelParams::Exponential { .. } => KernelFamily::Exponential,
            KernelParams::Gneiting { .. } => KernelFamily::Gneiting,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            KernelParams::Exponential { phi } => vec![*phi],
            KernelParams::Gneiting { phi, psi, kappa } => vec![*phi, *psi, *kappa],
        }
    }

    pub fn from_values(family: KernelFamily, values: &[f64]) -> Result<Self> {
        if values.len() != family.arity() {
            return Err(VcgpError::Dim(format!(
                "{} parameters for family {} (arity {})",
                values.len(),
                family.name(),
                family.arity()
            )));
        }
        Ok(match family {
            KernelFamily::Exponential => KernelParams::Exponential { phi: values[0] },
            KernelFamily::Gneiting => KernelParams::Gneiting {
                phi: values[0],
                psi: values[1],
                kappa: values[2],
            },
        })
    }
}

/// Open box (lower, upper) for one scalar kernel parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorRange {
    pub lower: f64,
    pub upper: f64,
}

impl PriorRange {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower <= 0.0 || upper <= lower {
            return Err(VcgpError::Invalid(format!(
                "prior range ({lower}, {upper}) must satisfy 0 < lower < upper"
            )));
        }
        Ok(PriorRange { lower, upper })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains_strictly(&self, v: f64) -> bool {
        v > self.lower && v < self.upper
    }
}

/// Family plus one prior box per parameter.
#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub ranges: Vec<PriorRange>,
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ranges.len() != self.family.arity() {
            return Err(VcgpError::Invalid(format!(
                "{} prior ranges for family {} (arity {})",
                self.ranges.len(),
                self.family.name(),
                self.family.arity()
            )));
        }
        for r in &self.ranges {
            PriorRange::new(r.lower, r.upper)?;
        }
        if self.family == KernelFamily::Gneiting && self.ranges[2].upper > 1.0 {
            return Err(VcgpError::Invalid(format!(
                "space-time interaction exponent must stay within (0, 1]; upper bound {} given",
                self.ranges[2].upper
            )));
        }
        Ok(())
    }

    /// Parameters at the prior-box midpoints (chain initialization).
    pub fn midpoint_params(&self) -> KernelParams {
        let values: Vec<f64> = self.ranges.iter().map(PriorRange::midpoint).collect();
        KernelParams::from_values(self.family, &values).expect("arity checked")
    }
}

pub fn eval_exponential(a: &IndexPoint, b: &IndexPoint, phi: f64) -> f64 {
    (-phi * a.euclid(b)).exp()
}

pub fn eval_gneiting(a: &IndexPoint, b: &IndexPoint, phi: f64, psi: f64, kappa: f64) -> f64 {
    debug_assert_eq!(a.dim(), 3);
    debug_assert_eq!(b.dim(), 3);
    let dt = a.time_lag(b);
    let dh = a.spatial_dist(b);
    gneiting_from_lags(dh, dt * dt, phi, psi, kappa)
}

fn gneiting_from_lags(space: f64, time_sq: f64, phi: f64, psi: f64, kappa: f64) -> f64 {
    let denom = psi * time_sq + 1.0;
    denom.powf(-kappa) * (-phi * space / denom.powf(0.5 * kappa)).exp()
}

pub fn eval_kernel(a: &IndexPoint, b: &IndexPoint, params: &KernelParams) -> f64 {
    match params {
        KernelParams::Exponential { phi } => eval_exponential(a, b, *phi),
        KernelParams::Gneiting { phi, psi, kappa } => eval_gneiting(a, b, *phi, *psi, *kappa),
    }
}

/// Precomputed lags between two point sets. Kernel parameters change every
/// sampler iteration while the geometry never does, so chains build these
/// tables once and re-evaluate kernels from them.
#[derive(Debug, Clone)]
pub struct PairwiseTable {
    /// Full-coordinate Euclidean distances (exponential family).
    euclid: Array2<f64>,
    /// Spatial distances and squared temporal lags (spatiotemporal family).
    space: Option<Array2<f64>>,
    time_sq: Option<Array2<f64>>,
}

impl PairwiseTable {
    pub fn build(rows: &[IndexPoint], cols: &[IndexPoint], spacetime: bool) -> Self {
        let euclid = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
            rows[i].euclid(&cols[j])
        });
        let (space, time_sq) = if spacetime {
            let sp = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
                rows[i].spatial_dist(&cols[j])
            });
            let ts = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
                let dt = rows[i].time_lag(&cols[j]);
                dt * dt
            });
            (Some(sp), Some(ts))
        } else {
            (None, None)
        };
        PairwiseTable {
            euclid,
            space,
            time_sq,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.euclid.nrows(), self.euclid.ncols())
    }

    /// Kernel values over the whole table.
    pub fn correlations(&self, params: &KernelParams) -> Array2<f64> {
        match params {
            KernelParams::Exponential { phi } => self.euclid.mapv(|d| (-phi * d).exp()),
            KernelParams::Gneiting { phi, psi, kappa } => {
                let space = self
                    .space
                    .as_ref()
                    .expect("table built without spatiotemporal lags");
                let time_sq = self.time_sq.as_ref().expect("spatiotemporal lags");
                let mut out = Array2::zeros(self.shape());
                for ((i, j), v) in out.indexed_iter_mut() {
                    *v = gneiting_from_lags(space[[i, j]], time_sq[[i, j]], *phi, *psi, *kappa);
                }
                out
            }
        }
    }
}

/// Dense correlation matrix over one point set: raw kernel entries plus the
/// factorization of (entries + jitter I). All solves, log-determinants and
/// prior draws go through the jittered matrix, so one consistent SPD operator
/// backs every use.
#[derive(Debug, Clone)]
pub struct CorrMatrix {
    entries: Array2<f64>,
    factor: CholFactor,
}

impl CorrMatrix {
    pub fn from_entries(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(VcgpError::Dim(format!(
                "correlation matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.nrows() == 0 {
            return Err(VcgpError::Invalid(
                "correlation matrix over zero points".into(),
            ));
        }
        let factor = CholFactor::with_jitter(&entries)?;
        Ok(CorrMatrix { entries, factor })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Raw kernel values (unit diagonal, no jitter).
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Diagonal regularization the factorization actually needed (usually 0).
    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    /// The operative SPD matrix: entries + jitter I.
    pub fn effective(&self) -> Array2<f64> {
        let mut out = self.entries.clone();
        if self.jitter() > 0.0 {
            for i in 0..out.nrows() {
                out[[i, i]] += self.jitter();
            }
        }
        out
    }

    pub fn logdet(&self) -> f64 {
        self.factor.logdet()
    }

    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        self.factor.solve_vec(b)
    }

    pub fn solve_mat(&self, b: &Array2<f64>) -> Array2<f64> {
        self.factor.solve_mat(b)
    }

    pub fn quad_form(&self, b: &Array1<f64>) -> f64 {
        self.factor.quad_form(b)
    }

    pub fn factor(&self) -> &CholFactor {
        &self.factor
    }

    /// (entries + jitter I) x.
    pub fn matvec(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut out = self.entries.dot(x);
        if self.jitter() > 0.0 {
            out.scaled_add(self.jitter(), x);
        }
        out
    }

    /// One draw from N(0, entries + jitter I).
    pub fn sample_prior<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        self.factor.sample(rng)
    }
}

/// Correlation matrix over `points`; jitter is added only if the exact
/// factorization fails, escalating per the crate policy.
pub fn build_corr_matrix(points: &[IndexPoint], params: &KernelParams) -> Result<CorrMatrix> {
    if points.is_empty() {
        return Err(VcgpError::Invalid(
            "correlation matrix over zero points".into(),
        ));
    }
    validate_points_for(params.family(), points)?;
    let table = PairwiseTable::build(points, points, params.family() == KernelFamily::Gneiting);
    CorrMatrix::from_entries(table.correlations(params))
}

/// Rectangular cross-correlation block between two point sets.
pub fn build_cross_corr(
    rows: &[IndexPoint],
    cols: &[IndexPoint],
    params: &KernelParams,
) -> Result<Array2<f64>> {
    validate_points_for(params.family(), rows)?;
    validate_points_for(params.family(), cols)?;
    let table = PairwiseTable::build(rows, cols, params.family() == KernelFamily::Gneiting);
    Ok(table.correlations(params))
}

fn validate_points_for(family: KernelFamily, points: &[IndexPoint]) -> Result<()> {
    if family == KernelFamily::Gneiting {
        if let Some(pt) = points.iter().find(|pt| pt.dim() != 3) {
            return Err(VcgpError::Dim(format!(
                "spatiotemporal kernel requires 3 coordinates, point has {}",
                pt.dim()
            )));
        }
    }
    Ok(())
}

// --- box-to-line transform -------------------------------------------------

/// Map theta in the open box (lower, upper) to the real line:
/// z = log((theta - lower) / (upper - theta)).
pub fn to_unconstrained(theta: f64, range: &PriorRange) -> Result<f64> {
    if !range.contains_strictly(theta) {
        return Err(VcgpError::Invalid(format!(
            "parameter {theta} not strictly inside ({}, {})",
            range.lower, range.upper
        )));
    }
    Ok(((theta - range.lower) / (range.upper - theta)).ln())
}

/// Inverse of [`to_unconstrained`]; any finite z lands strictly inside the box.
pub fn from_unconstrained(z: f64, range: &PriorRange) -> f64 {
    debug_assert!(z.is_finite());
    range.lower + (range.upper - range.lower) / (1.0 + (-z).exp())
}

/// log |d theta / d z| = log(upper - lower) + z - 2 log(1 + e^z),
/// evaluated stably on both tails.
pub fn unconstrained_log_jacobian(z: f64, range: &PriorRange) -> f64 {
    (range.upper - range.lower).ln() + z - 2.0 * softplus(z)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Stack a parameter set onto the unconstrained scale.
pub fn params_to_unconstrained(params: &KernelParams, ranges: &[PriorRange]) -> Result<Vec<f64>> {
    let values = params.values();
    if values.len() != ranges.len() {
        return Err(VcgpError::Dim(format!(
            "{} parameters but {} prior ranges",
            values.len(),
            ranges.len()
        )));
    }
    values
        .iter()
        .zip(ranges)
        .map(|(v, r)| to_unconstrained(*v, r))
        .collect()
}

/// Inverse of [`params_to_unconstrained`].
pub fn params_from_unconstrained(
    family: KernelFamily,
    z: &[f64],
    ranges: &[PriorRange],
) -> Result<KernelParams> {
    if z.len() != ranges.len() || z.len() != family.arity() {
        return Err(VcgpError::Dim(format!(
            "{} unconstrained values for family {} with {} ranges",
            z.len(),
            family.name(),
            ranges.len()
        )));
    }
    let values: Vec<f64> = z
        .iter()
        .zip(ranges)
        .map(|(zi, r)| from_unconstrained(*zi, r))
        .collect();
    KernelParams::from_values(family, &values)
}

// --- low-rank approximation -------------------------------------------------

/// Low-rank plus diagonal representation of a correlation matrix through a
/// set of inducing points: R ~ Q + D with Q the projection through the
/// inducing block and D = diag(1 - Q_ii) restoring the exact unit diagonal.
/// Solves and log-determinants run through the Woodbury identity and the
/// matrix determinant lemma; nothing n x n is ever formed.
#[derive(Debug, Clone)]
pub struct FitcFactor {
    inducing_indices: Vec<usize>,
    inducing_points: Vec<IndexPoint>,
    inducing_chol: CholFactor,
    /// r x n whitened cross block A = L_rr^{-1} K_rn, so Q = A' A.
    a: Array2<f64>,
    /// d_i = max(1 - q_ii, floor).
    diag_correction: Array1<f64>,
    dinv: Array1<f64>,
    /// Factor of M = I_r + A D^{-1} A'.
    woodbury: CholFactor,
    logdet: f64,
}

impl FitcFactor {
    /// Build the factor for `points` through the inducing subset at
    /// `inducing_indices` (indices into `points`, strictly increasing).
    pub fn build(
        points: &[IndexPoint],
        inducing_indices: &[usize],
        params: &KernelParams,
    ) -> Result<Self> {
        let inducing: Vec<IndexPoint> = inducing_indices
            .iter()
            .map(|&i| {
                points
                    .get(i)
                    .cloned()
                    .ok_or_else(|| VcgpError::Invalid(format!("inducing index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        let spacetime = params.family() == KernelFamily::Gneiting;
        let cross = PairwiseTable::build(&inducing, points, spacetime);
        let ind = PairwiseTable::build(&inducing, &inducing, spacetime);
        Self::from_tables(&ind, &cross, inducing_indices.to_vec(), inducing, params)
    }

    /// Fast path for samplers that cache the lag tables across parameter
    /// updates. `cross` must be (r x n) between inducing rows and all points.
    pub fn from_tables(
        inducing_table: &PairwiseTable,
        cross_table: &PairwiseTable,
        inducing_indices: Vec<usize>,
        inducing_points: Vec<IndexPoint>,
        params: &KernelParams,
    ) -> Result<Self> {
        let (r, n) = cross_table.shape();
        if r == 0 || n == 0 {
            return Err(VcgpError::Invalid(
                "low-rank factor needs at least one inducing and one data point".into(),
            ));
        }
        if inducing_table.shape() != (r, r) {
            return Err(VcgpError::Dim(format!(
                "inducing table is {:?}, cross table has {r} rows",
                inducing_table.shape()
            )));
        }
        let k_rr = inducing_table.correlations(params);
        let inducing_chol = CholFactor::with_jitter(&k_rr).map_err(|e| {
            VcgpError::Numeric(format!("inducing correlation block is too degenerate: {e}"))
        })?;
        let k_rn = cross_table.correlations(params);
        let a = inducing_chol.solve_lower_mat(&k_rn);

        let mut diag_correction = Array1::zeros(n);
        for i in 0..n {
            let qii = a.column(i).dot(&a.column(i));
            diag_correction[i] = (1.0 - qii).max(DIAG_CORRECTION_FLOOR);
        }
        let dinv = diag_correction.mapv(|d| 1.0 / d);

        // M = I + A D^{-1} A'
        let ad = &a * &dinv.view().insert_axis(Axis(0));
        let mut m = ad.dot(&a.t());
        for i in 0..r {
            m[[i, i]] += 1.0;
        }
        let woodbury = CholFactor::new(&m)
            .map_err(|e| VcgpError::Numeric(format!("low-rank inner factorization failed: {e}")))?;

        let logdet = diag_correction.mapv(f64::ln).sum() + woodbury.logdet();

        Ok(FitcFactor {
            inducing_indices,
            inducing_points,
            inducing_chol,
            a,
            diag_correction,
            dinv,
            woodbury,
            logdet,
        })
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn inducing_indices(&self) -> &[usize] {
        &self.inducing_indices
    }

    pub fn inducing_points(&self) -> &[IndexPoint] {
        &self.inducing_points
    }

    pub fn diag_correction(&self) -> &Array1<f64> {
        &self.diag_correction
    }

    /// Whitened cross block A = L_rr^{-1} K_rn (r x n); Q = A' A.
    pub fn whitened_cross(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn jitter(&self) -> f64 {
        self.inducing_chol.jitter()
    }

    /// log det(Q + D) via the determinant lemma.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// (Q + D) x without forming Q.
    pub fn matvec(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut out = self.a.t().dot(&self.a.dot(x));
        out += &(&self.diag_correction * x);
        out
    }

    /// (Q + D)^{-1} b via Woodbury.
    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        let db = &self.dinv * b;
        let inner = self.woodbury.solve_vec(&self.a.dot(&db));
        &db - &(&self.dinv * &self.a.t().dot(&inner))
    }

    /// b' (Q + D)^{-1} b.
    pub fn quad_form(&self, b: &Array1<f64>) -> f64 {
        b.dot(&self.solve_vec(b))
    }

    /// One draw from N(0, Q + D): project r whitened inducing normals up and
    /// add independent diagonal noise. Consumes r + n standard normals.
    pub fn sample_prior<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        let zr = standard_normal_vec(self.rank(), rng);
        let zn = standard_normal_vec(self.n(), rng);
        self.a.t().dot(&zr) + &(self.diag_correction.mapv(f64::sqrt) * &zn)
    }

    /// Dense Q + D, for tests and small-problem oracles.
    pub fn reconstruct(&self) -> Array2<f64> {
        let mut out = self.a.t().dot(&self.a);
        for i in 0..self.n() {
            out[[i, i]] += self.diag_correction[i];
        }
        out
    }

    /// Conditional law of the process at new points given values `nu` at the
    /// training points, under the low-rank joint (cross-covariance runs
    /// through the inducing set; the new-point block is exact).
    ///
    /// `k_star_inducing` is r x l between inducing and new points,
    /// `k_star_star` the exact l x l block at the new points.
    pub fn conditional_at(
        &self,
        k_star_inducing: &Array2<f64>,
        k_star_star: &Array2<f64>,
        nu: &Array1<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>)> {
        if k_star_inducing.nrows() != self.rank() {
            return Err(VcgpError::Dim(format!(
                "cross block has {} rows, rank is {}",
                k_star_inducing.nrows(),
                self.rank()
            )));
        }
        if nu.len() != self.n() {
            return Err(VcgpError::Dim(format!(
                "conditioning vector length {} != {}",
                nu.len(),
                self.n()
            )));
        }
        let a_star = self.inducing_chol.solve_lower_mat(k_star_inducing);
        let t = self.woodbury.solve_mat(&a_star);
        // info vector A D^{-1} nu
        let info = self.a.dot(&(&self.dinv * nu));
        let mean = t.t().dot(&info);
        // cov = K** - A*' A* + A*' M^{-1} A*
        let mut cov = k_star_star - &a_star.t().dot(&a_star);
        cov += &a_star.t().dot(&t);
        Ok((mean, cov))
    }
}

/// Uniform without-replacement inducing subset, sorted ascending. The stream
/// is keyed by (seed, Inducing domain) so selection is independent of every
/// other random consumer.
pub fn select_inducing_random(n: usize, rank: usize, seed: u64) -> Result<Vec<usize>> {
    if rank == 0 || rank > n {
        return Err(VcgpError::Invalid(format!(
            "inducing rank {rank} outside 1..={n}"
        )));
    }
    let mut rng = derive_rng(seed, Domain::Inducing, 0);
    let mut picked = rand::seq::index::sample(&mut rng, n, rank).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Regular-grid inducing selection: lay ceil(rank^(1/d)) nodes per axis over
/// the unit cube and snap each node to its nearest data point. Duplicate
/// snaps collapse, so the result may hold fewer than `rank` indices.
pub fn select_inducing_grid(points: &[IndexPoint], rank: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if rank == 0 || rank > n {
        return Err(VcgpError::Invalid(format!(
            "inducing rank {rank} outside 1..={n}"
        )));
    }
    let d = points[0].dim();
    let per_axis = (rank as f64).powf(1.0 / d as f64).ceil() as usize;
    let per_axis = per_axis.max(1);
    let mut nodes: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for prefix in &nodes {
            for g in 0..per_axis {
                let mut coords = prefix.clone();
                // cell centers
                coords.push((g as f64 + 0.5) / per_axis as f64);
                next.push(coords);
            }
        }
        nodes = next;
    }
    let mut chosen: Vec<usize> = Vec::new();
    for node in nodes.iter().take(rank.max(nodes.len()).min(nodes.len())) {
        let target = IndexPoint::new(node.clone());
        let nearest = (0..n)
            .min_by(|&i, &j| {
                points[i]
                    .euclid(&target)
                    .partial_cmp(&points[j].euclid(&target))
                    .unwrap()
            })
            .unwrap();
        chosen.push(nearest);
    }
    chosen.sort_unstable();
    chosen.dedup();
    if chosen.len() > rank {
        chosen.truncate(rank);
    }
    Ok(chosen)
}

/// Build a low-rank factor for `points`, selecting inducing points by seeded
/// subsample (default) or regular grid.
pub fn fitc_approx(
    points: &[IndexPoint],
    params: &KernelParams,
    rank: usize,
    grid: bool,
    seed: u64,
) -> Result<FitcFactor> {
    let indices = if grid {
        select_inducing_grid(points, rank)?
    } else {
        select_inducing_random(points.len(), rank, seed)?
    };
    FitcFactor::build(points, &indices, params)
}
