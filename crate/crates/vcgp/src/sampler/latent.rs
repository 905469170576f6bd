//! Exact conditional draws of the latent coefficient surfaces.
//!
//! Given coefficients, noise level and kernel parameters, the latent vector
//! stacked over coefficients is jointly Gaussian with the residual
//! r = y - X alpha. The draw uses the decomposition trick: sample
//! (nu', eps') from the prior, form the synthetic residual they imply, and
//! correct with R H' C^{-1} (r - r'), where C is the marginal residual
//! covariance. One factorization of C (or its low-rank Woodbury form) is
//! shared across all coefficients. The output is an exact draw from the
//! conditional; `latent_conditional` produces its closed-form moments for
//! small-problem verification.
//!
//! Tempering scales the likelihood by delta, which enters here solely as the
//! effective noise variance tau^2 / delta.

use ndarray::prelude::*;
use rand::Rng;

use super::factors::CoefFactor;
use super::ChainData;
use crate::error::{Result, VcgpError};
use crate::linalg::{standard_normal_vec, CholFactor};

/// Borrowed view of everything the latent draw needs.
pub struct LatentInputs<'a> {
    pub ctx: &'a ChainData,
    pub factors: &'a [CoefFactor],
    pub alpha: &'a Array1<f64>,
    pub gamma: &'a Array2<f64>,
    pub tau2: f64,
    pub delta: f64,
}

impl<'a> LatentInputs<'a> {
    fn noise_var(&self) -> Result<f64> {
        let s2 = self.tau2 / self.delta;
        if !s2.is_finite() || s2 <= 0.0 {
            return Err(VcgpError::Numeric(format!(
                "effective noise variance {s2} (tau2 {}, delta {})",
                self.tau2, self.delta
            )));
        }
        Ok(s2)
    }

    fn check_shapes(&self) -> Result<()> {
        let (n, q) = (self.ctx.n(), self.ctx.q);
        if self.factors.len() != q {
            return Err(VcgpError::Dim(format!(
                "{} factors for {q} coefficients",
                self.factors.len()
            )));
        }
        if self.factors.iter().any(|f| f.n() != n) {
            return Err(VcgpError::Dim("factor size != point count".into()));
        }
        if self.alpha.len() != self.ctx.p || self.gamma.dim() != (q, q) {
            return Err(VcgpError::Dim("coefficient shapes".into()));
        }
        Ok(())
    }
}

/// One exact draw of the n x q latent matrix. Consumes, in order: one prior
/// draw per coefficient, then the stacked noise normals.
pub fn impute_latents<R: Rng>(inp: &LatentInputs, rng: &mut R) -> Result<Array2<f64>> {
    inp.check_shapes()?;
    let (n, q) = (inp.ctx.n(), inp.ctx.q);
    let mut nu_prime = Array2::zeros((n, q));
    for a in 0..q {
        nu_prime.column_mut(a).assign(&inp.factors[a].sample_prior(rng));
    }
    let sigma = inp.noise_var()?.sqrt();
    let mut eps = standard_normal_vec(inp.ctx.s_tilde(), rng);
    eps *= sigma;
    impute_from_draws(inp, &nu_prime, &eps)
}

/// The deterministic core of the draw: an affine map of (nu', eps').
/// Zero inputs yield the conditional mean exactly.
pub fn impute_from_draws(
    inp: &LatentInputs,
    nu_prime: &Array2<f64>,
    eps_prime: &Array1<f64>,
) -> Result<Array2<f64>> {
    inp.check_shapes()?;
    let (n, q, st) = (inp.ctx.n(), inp.ctx.q, inp.ctx.s_tilde());
    if nu_prime.dim() != (n, q) || eps_prime.len() != st {
        return Err(VcgpError::Dim("prior draw shapes".into()));
    }
    let loadings = inp.ctx.z.dot(inp.gamma);
    let mut resid = &inp.ctx.y - &inp.ctx.x.dot(inp.alpha);
    resid -= eps_prime;
    for a in 0..q {
        let push = apply_h(inp.ctx, loadings.column(a), nu_prime.column(a));
        resid -= &push;
    }
    let cov = LatentCov::build(inp.ctx, inp.factors, &loadings, inp.noise_var()?)?;
    let w = cov.solve_vec(&resid);
    let mut out = nu_prime.clone();
    for a in 0..q {
        let pulled = apply_h_t(inp.ctx, loadings.column(a), &w);
        let correction = inp.factors[a].matvec(&pulled);
        let mut col = out.column_mut(a);
        col += &correction;
    }
    Ok(out)
}

/// (H_a nu)[c] = nu[site(c)] * g[c]: push one latent surface onto the stacked
/// response scale through its loading vector.
fn apply_h(ctx: &ChainData, g: ArrayView1<f64>, nu_a: ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(ctx.s_tilde());
    for c in 0..ctx.s_tilde() {
        out[c] = g[c] * nu_a[ctx.site[c]];
    }
    out
}

/// Adjoint of `apply_h`: accumulate stacked weights back onto sites.
fn apply_h_t(ctx: &ChainData, g: ArrayView1<f64>, w: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(ctx.n());
    for c in 0..ctx.s_tilde() {
        out[ctx.site[c]] += g[c] * w[c];
    }
    out
}

/// Residual covariance C = sum_a H_a R_a H_a' + sigma^2 I, held in whichever
/// form matches the coefficient factors.
enum LatentCov {
    Dense(CholFactor),
    LowRank(WoodburyCov),
}

impl LatentCov {
    fn build(
        ctx: &ChainData,
        factors: &[CoefFactor],
        loadings: &Array2<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        let all_dense = factors.iter().all(|f| f.as_dense().is_some());
        let all_low_rank = factors.iter().all(|f| f.as_low_rank().is_some());
        if all_dense {
            let c = assemble_dense(ctx, factors, loadings, sigma2);
            Ok(LatentCov::Dense(CholFactor::with_jitter(&c)?))
        } else if all_low_rank {
            Ok(LatentCov::LowRank(WoodburyCov::build(
                ctx, factors, loadings, sigma2,
            )?))
        } else {
            Err(VcgpError::Invalid(
                "coefficient factors mix dense and low-rank backings".into(),
            ))
        }
    }

    fn solve_vec(&self, v: &Array1<f64>) -> Array1<f64> {
        match self {
            LatentCov::Dense(f) => f.solve_vec(v),
            LatentCov::LowRank(w) => w.solve_vec(v),
        }
    }
}

fn assemble_dense(
    ctx: &ChainData,
    factors: &[CoefFactor],
    loadings: &Array2<f64>,
    sigma2: f64,
) -> Array2<f64> {
    let (n, st) = (ctx.n(), ctx.s_tilde());
    let mut c = Array2::zeros((st, st));
    for (a, factor) in factors.iter().enumerate() {
        let corr = factor.as_dense().expect("dense branch");
        let ent = corr.entries();
        let jit = corr.jitter();
        let g = loadings.column(a);
        for i in 0..n {
            for j in 0..n {
                let mut rij = ent[[i, j]];
                if i == j {
                    rij += jit;
                }
                for ci in ctx.site_range(i) {
                    let gi = g[ci] * rij;
                    for cj in ctx.site_range(j) {
                        c[[ci, cj]] += gi * g[cj];
                    }
                }
            }
        }
    }
    for d in 0..st {
        c[[d, d]] += sigma2;
    }
    c
}

/// C = B + V V' with B block-diagonal by site and V the stacked whitened
/// cross blocks; solves run through B^{-1} and the (q r) x (q r) core.
struct WoodburyCov {
    block: BlockDiagChol,
    v: Array2<f64>,
    inner: CholFactor,
}

impl WoodburyCov {
    fn build(
        ctx: &ChainData,
        factors: &[CoefFactor],
        loadings: &Array2<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        let (n, st) = (ctx.n(), ctx.s_tilde());
        // B: per-site sigma^2 I + sum_a d_a(i) g_a g_a'
        let mut site_factors = Vec::with_capacity(n);
        for i in 0..n {
            let range = ctx.site_range(i);
            let si = range.len();
            let mut block = Array2::eye(si) * sigma2;
            for (a, factor) in factors.iter().enumerate() {
                let f = factor.as_low_rank().expect("low-rank branch");
                let d = f.diag_correction()[i];
                for (bi, ci) in range.clone().enumerate() {
                    let gi = loadings[[ci, a]];
                    for (bj, cj) in range.clone().enumerate() {
                        block[[bi, bj]] += d * gi * loadings[[cj, a]];
                    }
                }
            }
            site_factors.push(CholFactor::with_jitter(&block)?);
        }
        let block = BlockDiagChol {
            offsets: ctx.offsets.clone(),
            factors: site_factors,
        };

        let total_rank: usize = factors
            .iter()
            .map(|f| f.as_low_rank().expect("low-rank branch").rank())
            .sum();
        let mut v = Array2::zeros((st, total_rank));
        let mut col = 0;
        for (a, factor) in factors.iter().enumerate() {
            let f = factor.as_low_rank().expect("low-rank branch");
            let aw = f.whitened_cross();
            let r = f.rank();
            for i in 0..n {
                for ci in ctx.site_range(i) {
                    let g = loadings[[ci, a]];
                    for k in 0..r {
                        v[[ci, col + k]] = g * aw[[k, i]];
                    }
                }
            }
            col += r;
        }

        let binv_v = block.solve_mat(&v);
        let mut m = v.t().dot(&binv_v);
        for d in 0..total_rank {
            m[[d, d]] += 1.0;
        }
        let inner = CholFactor::with_jitter(&m)?;
        Ok(WoodburyCov { block, v, inner })
    }

    fn solve_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        let bx = self.block.solve_vec(x);
        let u = self.v.t().dot(&bx);
        let t = self.inner.solve_vec(&u);
        &bx - &self.block.solve_vec(&self.v.dot(&t))
    }
}

struct BlockDiagChol {
    offsets: Vec<usize>,
    factors: Vec<CholFactor>,
}

impl BlockDiagChol {
    fn solve_vec(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(x.len());
        for (i, f) in self.factors.iter().enumerate() {
            let range = self.offsets[i]..self.offsets[i + 1];
            let piece = x.slice(s![range.clone()]).to_owned();
            out.slice_mut(s![range]).assign(&f.solve_vec(&piece));
        }
        out
    }

    fn solve_mat(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        for (i, f) in self.factors.iter().enumerate() {
            let range = self.offsets[i]..self.offsets[i + 1];
            let piece = x.slice(s![range.clone(), ..]).to_owned();
            out.slice_mut(s![range, ..]).assign(&f.solve_mat(&piece));
        }
        out
    }
}

/// Closed-form conditional moments of the stacked latent vector
/// (coefficient-major: entry a*n + i is surface a at point i). Builds dense
/// (nq) x (nq) matrices; small problems only.
pub fn latent_conditional(inp: &LatentInputs) -> Result<(Array1<f64>, Array2<f64>)> {
    inp.check_shapes()?;
    let (n, q, st) = (inp.ctx.n(), inp.ctx.q, inp.ctx.s_tilde());
    let nq = n * q;
    let loadings = inp.ctx.z.dot(inp.gamma);
    let resid = &inp.ctx.y - &inp.ctx.x.dot(inp.alpha);
    let sigma2 = inp.noise_var()?;

    let mut u = Array2::zeros((st, nq));
    for a in 0..q {
        for c in 0..st {
            u[[c, a * n + inp.ctx.site[c]]] = loadings[[c, a]];
        }
    }
    let mut prior = Array2::zeros((nq, nq));
    for (a, f) in inp.factors.iter().enumerate() {
        prior
            .slice_mut(s![a * n..(a + 1) * n, a * n..(a + 1) * n])
            .assign(&f.dense_prior());
    }
    let mut c = u.dot(&prior).dot(&u.t());
    for d in 0..st {
        c[[d, d]] += sigma2;
    }
    let c_chol = CholFactor::with_jitter(&c)?;
    let k = prior.dot(&u.t());
    let mu = k.dot(&c_chol.solve_vec(&resid));
    let sigma = &prior - &k.dot(&c_chol.solve_mat(&k.t().to_owned()));
    Ok((mu, symmetrize(sigma)))
}

fn symmetrize(m: Array2<f64>) -> Array2<f64> {
    let mt = m.t().to_owned();
    (m + mt) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelParams;
    use crate::model::{Dataset, Observation};
    use crate::model::IndexPoint;
    use crate::sampler::factors::CorrAssembler;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn toy_context(n: usize, s: usize, p: usize, q: usize, seed: u64) -> ChainData {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let observations: Vec<Observation> = (0..n)
            .map(|_| Observation {
                point: IndexPoint::new(vec![rng.gen(), rng.gen()]),
                y: Array1::from_shape_fn(s, |_| rng.gen::<f64>() * 2.0 - 1.0),
                x: Array2::from_shape_fn((s, p), |_| rng.gen::<f64>() * 2.0 - 1.0),
            })
            .collect();
        let data = Dataset {
            observations,
            p,
            q,
            d: 2,
        };
        ChainData::from_dataset(&data)
    }

    fn toy_inputs<'a>(
        ctx: &'a ChainData,
        factors: &'a [CoefFactor],
        alpha: &'a Array1<f64>,
        gamma: &'a Array2<f64>,
    ) -> LatentInputs<'a> {
        LatentInputs {
            ctx,
            factors,
            alpha,
            gamma,
            tau2: 0.3,
            delta: 2.0,
        }
    }

    fn dense_factors(ctx: &ChainData, q: usize) -> Vec<CoefFactor> {
        let asm = CorrAssembler::new(ctx.points.clone(), false, None, false, 0).unwrap();
        (0..q)
            .map(|a| {
                asm.build(&KernelParams::Exponential {
                    phi: 0.8 + 0.5 * a as f64,
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_draws_reproduce_the_conditional_mean() {
        let ctx = toy_context(5, 2, 3, 2, 11);
        let factors = dense_factors(&ctx, 2);
        let alpha = array![0.4, -0.2, 1.0];
        let gamma = array![[1.0, 0.3], [-0.5, 0.8]];
        let inp = toy_inputs(&ctx, &factors, &alpha, &gamma);
        let (mu, _) = latent_conditional(&inp).unwrap();
        let out = impute_from_draws(
            &inp,
            &Array2::zeros((5, 2)),
            &Array1::zeros(ctx.s_tilde()),
        )
        .unwrap();
        for a in 0..2 {
            for i in 0..5 {
                assert_abs_diff_eq!(out[[i, a]], mu[a * 5 + i], epsilon = 1e-10);
            }
        }
    }

    /// The draw is affine in (nu', eps'); probing it with basis vectors
    /// recovers the full output covariance without Monte Carlo.
    fn probe_covariance(inp: &LatentInputs, n: usize, q: usize, st: usize) -> Array2<f64> {
        let nq = n * q;
        let zero = impute_from_draws(inp, &Array2::zeros((n, q)), &Array1::zeros(st)).unwrap();
        let flatten = |m: &Array2<f64>| -> Array1<f64> {
            let mut v = Array1::zeros(nq);
            for a in 0..q {
                for i in 0..n {
                    v[a * n + i] = m[[i, a]];
                }
            }
            v
        };
        let zero_flat = flatten(&zero);
        // columns of the map applied to nu' basis vectors
        let mut m_nu = Array2::zeros((nq, nq));
        for a in 0..q {
            for i in 0..n {
                let mut e = Array2::zeros((n, q));
                e[[i, a]] = 1.0;
                let out = impute_from_draws(inp, &e, &Array1::zeros(st)).unwrap();
                let col = flatten(&out) - &zero_flat;
                m_nu.column_mut(a * n + i).assign(&col);
            }
        }
        let mut m_eps = Array2::zeros((nq, st));
        for c in 0..st {
            let mut e = Array1::zeros(st);
            e[c] = 1.0;
            let out = impute_from_draws(inp, &Array2::zeros((n, q)), &e).unwrap();
            let col = flatten(&out) - &zero_flat;
            m_eps.column_mut(c).assign(&col);
        }
        let mut prior = Array2::zeros((nq, nq));
        for (a, f) in inp.factors.iter().enumerate() {
            prior
                .slice_mut(s![a * n..(a + 1) * n, a * n..(a + 1) * n])
                .assign(&f.dense_prior());
        }
        let sigma2 = inp.tau2 / inp.delta;
        m_nu.dot(&prior).dot(&m_nu.t()) + m_eps.dot(&m_eps.t()) * sigma2
    }

    #[test]
    fn probed_output_covariance_matches_closed_form() {
        let ctx = toy_context(4, 2, 3, 2, 19);
        let factors = dense_factors(&ctx, 2);
        let alpha = array![0.1, 0.0, -0.7];
        let gamma = array![[0.9, -0.2], [0.4, 1.1]];
        let inp = toy_inputs(&ctx, &factors, &alpha, &gamma);
        let (_, sigma) = latent_conditional(&inp).unwrap();
        let probed = probe_covariance(&inp, 4, 2, ctx.s_tilde());
        for (a, b) in probed.iter().zip(sigma.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn low_rank_path_agrees_with_its_own_closed_form() {
        let ctx = toy_context(8, 2, 3, 2, 23);
        let asm = CorrAssembler::new(ctx.points.clone(), false, Some(4), false, 7).unwrap();
        let factors: Vec<CoefFactor> = (0..2)
            .map(|a| {
                asm.build(&KernelParams::Exponential {
                    phi: 1.0 + a as f64,
                })
                .unwrap()
            })
            .collect();
        let alpha = array![0.2, -0.4, 0.6];
        let gamma = array![[1.2, 0.1], [-0.3, 0.7]];
        let inp = toy_inputs(&ctx, &factors, &alpha, &gamma);
        let (mu, sigma) = latent_conditional(&inp).unwrap();
        let zero = impute_from_draws(
            &inp,
            &Array2::zeros((8, 2)),
            &Array1::zeros(ctx.s_tilde()),
        )
        .unwrap();
        for a in 0..2 {
            for i in 0..8 {
                assert_abs_diff_eq!(zero[[i, a]], mu[a * 8 + i], epsilon = 1e-8);
            }
        }
        let probed = probe_covariance(&inp, 8, 2, ctx.s_tilde());
        for (x, y) in probed.iter().zip(sigma.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
    }

    #[test]
    fn monte_carlo_mean_approaches_the_conditional_mean() {
        let ctx = toy_context(4, 1, 2, 1, 31);
        let factors = dense_factors(&ctx, 1);
        let alpha = array![0.3, -0.1];
        let gamma = array![[1.0]];
        let inp = toy_inputs(&ctx, &factors, &alpha, &gamma);
        let (mu, sigma) = latent_conditional(&inp).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let t = 4000;
        let mut acc = Array1::<f64>::zeros(4);
        for _ in 0..t {
            let draw = impute_latents(&inp, &mut rng).unwrap();
            for i in 0..4 {
                acc[i] += draw[[i, 0]];
            }
        }
        acc /= t as f64;
        for i in 0..4 {
            let se = (sigma[[i, i]] / t as f64).sqrt();
            assert!(
                (acc[i] - mu[i]).abs() < 5.0 * se + 1e-12,
                "coordinate {i}: mc mean {} vs {} (se {se})",
                acc[i],
                mu[i]
            );
        }
    }
}
