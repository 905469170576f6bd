//! Dense linear-algebra helpers shared across the crate.
//!
//! Everything here wraps LAPACK through ndarray-linalg. BLAS is pinned to a
//! single thread the first time a factorization is requested: parallelism in
//! this crate happens at the chain level, and letting the BLAS thread pool
//! float would make output bytes depend on the machine.

use ndarray::prelude::*;
use ndarray_linalg::{Cholesky, Eigh, SolveTriangular, UPLO};
use rand::Rng;
use rand_distr::StandardNormal;
use std::sync::Once;

use crate::error::{Result, VcgpError};

/// Escalating diagonal regularization: first attempt is exact, then jitter
/// starts here and multiplies by [`JITTER_FACTOR`] up to [`JITTER_CAP`].
pub const JITTER_INITIAL: f64 = 1e-10;
pub const JITTER_FACTOR: f64 = 10.0;
pub const JITTER_CAP: f64 = 1e-4;

static BLAS_THREADS: Once = Once::new();

/// Force single-threaded BLAS before the library first touches LAPACK.
///
/// OpenBLAS consults these variables when it initializes its thread pool, so
/// this must run before the first BLAS call in the process; every entry point
/// of this crate calls it.
pub fn ensure_single_threaded_blas() {
    BLAS_THREADS.call_once(|| {
        std::env::set_var("OPENBLAS_NUM_THREADS", "1");
        std::env::set_var("OMP_NUM_THREADS", "1");
        std::env::set_var("GOTO_NUM_THREADS", "1");
    });
}

/// Lower Cholesky factor of an SPD matrix, with the transpose cached so both
/// forward and backward substitutions run on contiguous storage.
#[derive(Debug, Clone)]
pub struct CholFactor {
    lower: Array2<f64>,
    upper: Array2<f64>,
    jitter: f64,
    logdet: f64,
}

impl CholFactor {
    /// Factor `a` exactly; fails if LAPACK reports a non-positive pivot.
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        Self::build(a, 0.0)
    }

    /// Factor `a`, escalating diagonal jitter on failure per the crate policy.
    /// Returns the factor with the jitter that was actually applied.
    pub fn with_jitter(a: &Array2<f64>) -> Result<Self> {
        match Self::build(a, 0.0) {
            Ok(f) => Ok(f),
            Err(_) => {
                let mut jitter = JITTER_INITIAL;
                loop {
                    match Self::build(a, jitter) {
                        Ok(f) => return Ok(f),
                        Err(e) => {
                            if jitter >= JITTER_CAP {
                                return Err(e);
                            }
                            jitter *= JITTER_FACTOR;
                        }
                    }
                }
            }
        }
    }

    fn build(a: &Array2<f64>, jitter: f64) -> Result<Self> {
        ensure_single_threaded_blas();
        if a.nrows() != a.ncols() {
            return Err(VcgpError::Dim(format!(
                "cholesky of non-square {}x{} matrix",
                a.nrows(),
                a.ncols()
            )));
        }
        let mut work = a.clone();
        if jitter > 0.0 {
            for i in 0..work.nrows() {
                work[[i, i]] += jitter;
            }
        }
        let lower = work.cholesky(UPLO::Lower).map_err(|e| {
            VcgpError::Numeric(format!(
                "cholesky factorization failed (dim {}, jitter {:e}): {e}",
                a.nrows(),
                jitter
            ))
        })?;
        let logdet = 2.0 * lower.diag().iter().map(|v| v.ln()).sum::<f64>();
        let upper = lower.t().to_owned();
        Ok(CholFactor {
            lower,
            upper,
            jitter,
            logdet,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Jitter that was added to the diagonal before factoring (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// log det of the (jittered) matrix.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    /// L^{-1} b.
    pub fn solve_lower_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        self.lower
            .solve_triangular(UPLO::Lower, ndarray_linalg::Diag::NonUnit, b)
            .expect("triangular solve")
    }

    /// L^{-T} b.
    pub fn solve_upper_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        self.upper
            .solve_triangular(UPLO::Upper, ndarray_linalg::Diag::NonUnit, b)
            .expect("triangular solve")
    }

    /// A^{-1} b via the two substitutions.
    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        self.solve_upper_vec(&self.solve_lower_vec(b))
    }

    /// L^{-1} B column-wise.
    pub fn solve_lower_mat(&self, b: &Array2<f64>) -> Array2<f64> {
        self.lower
            .solve_triangular(UPLO::Lower, ndarray_linalg::Diag::NonUnit, b)
            .expect("triangular solve")
    }

    /// A^{-1} B column-wise.
    pub fn solve_mat(&self, b: &Array2<f64>) -> Array2<f64> {
        let half = self.solve_lower_mat(b);
        self.upper
            .solve_triangular(UPLO::Upper, ndarray_linalg::Diag::NonUnit, &half)
            .expect("triangular solve")
    }

    /// b' A^{-1} b = ||L^{-1} b||^2.
    pub fn quad_form(&self, b: &Array1<f64>) -> f64 {
        let half = self.solve_lower_vec(b);
        half.dot(&half)
    }

    /// L z, which maps iid standard normals to N(0, A).
    pub fn mul_lower(&self, z: &Array1<f64>) -> Array1<f64> {
        self.lower.dot(z)
    }

    /// One draw from N(0, A).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        self.mul_lower(&standard_normal_vec(self.dim(), rng))
    }
}

/// Factor a normal-equations matrix, escalating a trace-scaled ridge on
/// failure: ridge starts at 1e-10 * trace/dim and multiplies by 10 up to
/// 1e-4 * trace/dim. Returns the factor and the absolute ridge applied.
pub fn ridge_chol(a: &Array2<f64>) -> Result<(CholFactor, f64)> {
    let scale = a.diag().sum() / a.nrows().max(1) as f64;
    match CholFactor::new(a) {
        Ok(f) => Ok((f, 0.0)),
        Err(_) => {
            let mut rel = JITTER_INITIAL;
            loop {
                let ridge = rel * scale;
                let mut work = a.clone();
                for i in 0..work.nrows() {
                    work[[i, i]] += ridge;
                }
                match CholFactor::new(&work) {
                    Ok(f) => return Ok((f, ridge)),
                    Err(e) => {
                        if rel >= JITTER_CAP {
                            return Err(e);
                        }
                        rel *= JITTER_FACTOR;
                    }
                }
            }
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues floored at `floor`.
/// Input is symmetrized first to shed accumulated asymmetry.
pub fn sym_eig_floored(a: &Array2<f64>, floor: f64) -> Result<(Array1<f64>, Array2<f64>)> {
    ensure_single_threaded_blas();
    let sym = symmetrized(a);
    let (mut vals, vecs) = sym.eigh(UPLO::Lower).map_err(|e| {
        VcgpError::Numeric(format!(
            "symmetric eigendecomposition failed (dim {}): {e}",
            a.nrows()
        ))
    })?;
    vals.mapv_inplace(|v| v.max(floor));
    Ok((vals, vecs))
}

fn apply_spectral<F: Fn(f64) -> f64>(a: &Array2<f64>, floor: f64, f: F) -> Result<Array2<f64>> {
    let (vals, vecs) = sym_eig_floored(a, floor)?;
    let scaled = &vecs * &vals.mapv(f).insert_axis(Axis(0));
    Ok(scaled.dot(&vecs.t()))
}

/// Symmetric PSD square root with spectral floor.
pub fn spd_sqrt(a: &Array2<f64>, floor: f64) -> Result<Array2<f64>> {
    apply_spectral(a, floor, f64::sqrt)
}

/// Symmetric PSD inverse square root with spectral floor.
pub fn spd_inv_sqrt(a: &Array2<f64>, floor: f64) -> Result<Array2<f64>> {
    apply_spectral(a, floor, |v| 1.0 / v.sqrt())
}

/// (A + A')/2.
pub fn symmetrized(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

pub fn frobenius_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

/// Vector of iid N(0,1) draws.
pub fn standard_normal_vec<R: Rng>(n: usize, rng: &mut R) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// One N(0,1) draw.
pub fn standard_normal_scalar<R: Rng>(rng: &mut R) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn spd_fixture(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let g = Array2::from_shape_fn((n, n), |_| rng.sample::<f64, _>(StandardNormal));
        g.dot(&g.t()) + Array2::<f64>::eye(n) * (n as f64)
    }

    #[test]
    fn cholesky_solves_match_direct_inverse() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let f = CholFactor::new(&a).unwrap();
        let b = array![1.0, -2.0, 0.5];
        let x = f.solve_vec(&b);
        let back = a.dot(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-12);
        }
        // log det against the 3x3 determinant expansion
        let det: f64 = 4.0 * (3.0 * 2.0 - 0.2 * 0.2) - 1.0 * (1.0 * 2.0 - 0.2 * 0.5)
            + 0.5 * (1.0 * 0.2 - 3.0 * 0.5);
        assert_abs_diff_eq!(f.logdet(), det.ln(), epsilon = 1e-12);
        assert_eq!(f.jitter(), 0.0);
    }

    #[test]
    fn quad_form_matches_solve() {
        let a = spd_fixture(8, 1);
        let f = CholFactor::new(&a).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let b = standard_normal_vec(8, &mut rng);
        assert_abs_diff_eq!(f.quad_form(&b), b.dot(&f.solve_vec(&b)), epsilon = 1e-10);
    }

    #[test]
    fn jitter_escalates_on_singular_input() {
        // rank-1 matrix: exact factorization must fail, jittered must succeed
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(CholFactor::new(&a).is_err());
        let f = CholFactor::with_jitter(&a).unwrap();
        assert!(f.jitter() > 0.0);
        assert!(f.jitter() <= JITTER_CAP);
    }

    #[test]
    fn spd_roots_invert_each_other() {
        let a = spd_fixture(6, 3);
        let s = spd_sqrt(&a, 1e-12).unwrap();
        let si = spd_inv_sqrt(&a, 1e-12).unwrap();
        let prod = s.dot(&si);
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[[i, j]], expect, epsilon = 1e-9);
            }
        }
        // sqrt squared recovers the input
        let s2 = s.dot(&s);
        for (x, y) in s2.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn ridge_applies_on_rank_deficient_normal_matrix() {
        let mut a = Array2::<f64>::zeros((3, 3));
        a[[0, 0]] = 2.0;
        a[[1, 1]] = 2.0;
        // third row/col identically zero: singular
        let (f, ridge) = ridge_chol(&a).unwrap();
        assert!(ridge > 0.0);
        assert_eq!(f.dim(), 3);
    }

    #[test]
    fn solve_mat_consistent_with_vec() {
        let a = spd_fixture(5, 4);
        let f = CholFactor::new(&a).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let b = Array2::from_shape_fn((5, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let x = f.solve_mat(&b);
        for j in 0..3 {
            let xv = f.solve_vec(&b.column(j).to_owned());
            for i in 0..5 {
                assert_abs_diff_eq!(x[[i, j]], xv[i], epsilon = 1e-11);
            }
        }
    }
}
