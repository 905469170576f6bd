//! The per-subset Markov chain.
//!
//! Each iteration performs, in order: an exact conditional draw of the
//! latent coefficient surfaces, conjugate draws of the noise variance and
//! linear coefficients, an elliptical slice move on the kernel parameters,
//! and a posterior-predictive draw at the prediction points. Tempering by
//! delta raises the likelihood to a power so that a subset chain approximates
//! the geometry of the full-data posterior.
//!
//! Every random decision flows from one counter RNG derived from
//! (seed, chain stream); two runs with equal inputs produce bitwise equal
//! draws.

pub mod factors;
pub mod latent;
pub mod predict;
pub mod regression;
pub mod slice;

use std::cell::RefCell;
use std::ops::Range;
use std::time::Instant;

use ndarray::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::error::{Result, VcgpError};
use crate::kernels::{
    params_from_unconstrained, params_to_unconstrained, unconstrained_log_jacobian, KernelConfig,
    KernelFamily, KernelParams,
};
use crate::linalg::{ensure_single_threaded_blas, ridge_chol};
use crate::model::{build_design_w, unpack_b, Dataset, IndexPoint, ModelSpec};
use crate::streams::{derive_rng, Domain};
use factors::{CoefFactor, CorrAssembler};
use latent::LatentInputs;
use predict::{PredictContext, PredictTarget};
use regression::{draw_b, draw_tau2, solve_regression};
use slice::elliptical_slice;

/// Stacked, contiguous copies of the dataset pieces the sampler touches every
/// iteration.
pub struct ChainData {
    pub points: Vec<IndexPoint>,
    /// s~ x p stacked design.
    pub x: Array2<f64>,
    /// s~ x q leading design columns.
    pub z: Array2<f64>,
    pub y: Array1<f64>,
    /// Index point of each stacked component.
    pub site: Vec<usize>,
    /// Component offsets per point, with a final sentinel.
    pub offsets: Vec<usize>,
    pub p: usize,
    pub q: usize,
}

impl ChainData {
    pub fn from_dataset(data: &Dataset) -> Self {
        let st = data.total_components();
        let offsets = data.component_offsets();
        let mut x = Array2::zeros((st, data.p));
        let mut site = vec![0usize; st];
        for (i, obs) in data.observations.iter().enumerate() {
            for (r, row) in obs.x.rows().into_iter().enumerate() {
                let c = offsets[i] + r;
                x.row_mut(c).assign(&row);
                site[c] = i;
            }
        }
        let z = x.slice(s![.., ..data.q]).to_owned();
        ChainData {
            points: data.points(),
            x,
            z,
            y: data.stacked_y(),
            site,
            offsets,
            p: data.p,
            q: data.q,
        }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn s_tilde(&self) -> usize {
        self.y.len()
    }

    pub fn site_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// Schedule and switches for one chain.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub rng_seed: u64,
    /// Stream index separating chains that share a seed (the subset index).
    pub chain_stream: u64,
    /// Scale of the auxiliary Gaussian behind the kernel-parameter move.
    pub ess_prior_scale: f64,
    pub update_latents: bool,
    pub update_theta: bool,
    /// One joint slice move over all kernel parameters versus one move per
    /// coefficient.
    pub joint_ess: bool,
}

impl ChainConfig {
    pub fn new(n_iterations: usize, burn_in: usize, thin: usize, rng_seed: u64) -> Self {
        ChainConfig {
            n_iterations,
            burn_in,
            thin,
            rng_seed,
            chain_stream: 0,
            ess_prior_scale: 2.0,
            update_latents: true,
            update_theta: true,
            joint_ess: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 || self.burn_in >= self.n_iterations {
            return Err(VcgpError::Config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(VcgpError::Config("thinning must be at least 1".into()));
        }
        if !(self.ess_prior_scale.is_finite() && self.ess_prior_scale > 0.0) {
            return Err(VcgpError::Config(format!(
                "slice auxiliary scale {} must be positive",
                self.ess_prior_scale
            )));
        }
        Ok(())
    }

    /// Number of stored draws under the keep rule.
    pub fn kept_draws(&self) -> usize {
        (self.n_iterations - self.burn_in - 1) / self.thin + 1
    }

    pub fn keeps(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in) % self.thin == 0
    }
}

/// State drawn in one iteration.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub tau2: f64,
    /// Stacked (alpha, Gamma columns).
    pub b: Array1<f64>,
    /// Varying coefficients at the prediction points, point-major.
    pub beta_star: Array1<f64>,
    /// Response draws at the prediction points, point-major.
    pub y_star: Array1<f64>,
}

pub struct Chain {
    data: Dataset,
    spec: ModelSpec,
    cfg: ChainConfig,
    target: PredictTarget,
    ctx: ChainData,
    assembler: CorrAssembler,
    pctx: PredictContext,
    rng: ChaCha12Rng,
    alpha: Array1<f64>,
    gamma: Array2<f64>,
    tau2: f64,
    theta: Vec<KernelParams>,
    z_theta: Vec<f64>,
    nu: Array2<f64>,
    factors: Vec<CoefFactor>,
    ess_evals: u64,
}

impl Chain {
    pub fn new(
        data: Dataset,
        spec: ModelSpec,
        target: PredictTarget,
        cfg: ChainConfig,
    ) -> Result<Chain> {
        ensure_single_threaded_blas();
        cfg.validate()?;
        spec.validate(&data)?;
        target.validate(spec.d, spec.p)?;

        let ctx = ChainData::from_dataset(&data);
        let spacetime = spec
            .kernels
            .iter()
            .any(|k| k.family == KernelFamily::Gneiting);
        let assembler = CorrAssembler::new(
            ctx.points.clone(),
            spacetime,
            spec.fitc_rank,
            spec.fitc_grid,
            cfg.rng_seed,
        )?;
        let rows: Vec<IndexPoint> = match assembler.inducing_points() {
            Some(ind) => ind.to_vec(),
            None => ctx.points.clone(),
        };
        let pctx = PredictContext::build(&rows, &target.points, spacetime);

        let theta: Vec<KernelParams> =
            spec.kernels.iter().map(KernelConfig::midpoint_params).collect();
        let z_theta = pack_unconstrained(&spec.kernels, &theta)?;
        let factors = assembler.build_all(&theta)?;

        // plain least squares on the shared part seeds alpha and tau2
        let gram = ctx.x.t().dot(&ctx.x);
        let (gram_chol, _) = ridge_chol(&gram)?;
        let alpha = gram_chol.solve_vec(&ctx.x.t().dot(&ctx.y));
        let resid = &ctx.y - &ctx.x.dot(&alpha);
        let tau2 = (resid.dot(&resid) / resid.len() as f64).max(1e-6);
        let gamma = Array2::eye(spec.q);
        let nu = Array2::zeros((ctx.n(), spec.q));
        let rng = derive_rng(cfg.rng_seed, Domain::Chain, cfg.chain_stream);

        Ok(Chain {
            data,
            spec,
            cfg,
            target,
            ctx,
            assembler,
            pctx,
            rng,
            alpha,
            gamma,
            tau2,
            theta,
            z_theta,
            nu,
            factors,
            ess_evals: 0,
        })
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    pub fn gamma(&self) -> &Array2<f64> {
        &self.gamma
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn theta(&self) -> &[KernelParams] {
        &self.theta
    }

    pub fn latents(&self) -> &Array2<f64> {
        &self.nu
    }

    pub fn ess_evaluations(&self) -> u64 {
        self.ess_evals
    }

    /// Overwrite the latent surfaces (warm starts; fixed-latent studies).
    pub fn set_latents(&mut self, nu: Array2<f64>) -> Result<()> {
        if nu.dim() != (self.ctx.n(), self.spec.q) {
            return Err(VcgpError::Dim(format!(
                "latent matrix is {:?}, chain needs ({}, {})",
                nu.dim(),
                self.ctx.n(),
                self.spec.q
            )));
        }
        if nu.iter().any(|v| !v.is_finite()) {
            return Err(VcgpError::Invalid("non-finite latent value".into()));
        }
        self.nu = nu;
        Ok(())
    }

    /// One full sweep over all component updates.
    pub fn step(&mut self) -> Result<IterRecord> {
        if self.cfg.update_latents {
            let inputs = LatentInputs {
                ctx: &self.ctx,
                factors: &self.factors,
                alpha: &self.alpha,
                gamma: &self.gamma,
                tau2: self.tau2,
                delta: self.spec.delta,
            };
            let nu = latent::impute_latents(&inputs, &mut self.rng)?;
            self.nu = nu;
        }

        let w = build_design_w(&self.data, &self.nu)?;
        let fit = solve_regression(&w, &self.ctx.y)?;
        let n_coef = self.spec.p + self.spec.q * self.spec.q;
        self.tau2 = draw_tau2(
            fit.ssr,
            self.ctx.s_tilde(),
            n_coef,
            self.spec.delta,
            &mut self.rng,
        )?;
        let b = draw_b(&fit, self.tau2, self.spec.delta, &mut self.rng);
        let (alpha, gamma) = unpack_b(&b, self.spec.p, self.spec.q);
        self.alpha = alpha;
        self.gamma = gamma;

        if self.cfg.update_theta {
            self.step_theta()?;
        }

        let (beta_star, y_star) = self.predict_draw()?;
        Ok(IterRecord {
            tau2: self.tau2,
            b,
            beta_star,
            y_star,
        })
    }

    /// Slice move on the kernel parameters alone; exposed so targeted studies
    /// can drive this component update in isolation.
    pub fn step_theta(&mut self) -> Result<u32> {
        if self.cfg.joint_ess {
            let all: Vec<usize> = (0..self.spec.q).collect();
            self.slice_block(&all, 0, self.z_theta.len())
        } else {
            let mut total = 0;
            let mut off = 0;
            for a in 0..self.spec.q {
                let ar = self.spec.kernels[a].family.arity();
                total += self.slice_block(&[a], off, off + ar)?;
                off += ar;
            }
            Ok(total)
        }
    }

    /// One elliptical slice move over the unconstrained parameters of the
    /// coefficients in `which`, occupying z_theta[z_lo..z_hi].
    fn slice_block(&mut self, which: &[usize], z_lo: usize, z_hi: usize) -> Result<u32> {
        let kernels: Vec<KernelConfig> = which
            .iter()
            .map(|&a| self.spec.kernels[a].clone())
            .collect();
        let nu = self.nu.clone();
        let delta = self.spec.delta;
        let scale = self.cfg.ess_prior_scale;
        let assembler = &self.assembler;
        let cols: Vec<usize> = which.to_vec();

        type Cached = (Vec<f64>, Vec<CoefFactor>, Vec<KernelParams>);
        let cache: RefCell<Option<Cached>> = RefCell::new(None);
        let logf = |z: &[f64]| -> Option<f64> {
            let mut lp = 0.0;
            let mut factors = Vec::with_capacity(kernels.len());
            let mut thetas = Vec::with_capacity(kernels.len());
            let mut off = 0;
            for (k, kc) in kernels.iter().enumerate() {
                let ar = kc.family.arity();
                let za = &z[off..off + ar];
                off += ar;
                let params = params_from_unconstrained(kc.family, za, &kc.ranges).ok()?;
                let factor = assembler.build(&params).ok()?;
                let logdet = factor.logdet();
                let quad = factor.quad_form(&nu.column(cols[k]).to_owned());
                if !(logdet.is_finite() && quad.is_finite()) {
                    return None;
                }
                lp += delta * (-0.5 * logdet - 0.5 * quad);
                for (j, zj) in za.iter().enumerate() {
                    lp += unconstrained_log_jacobian(*zj, &kc.ranges[j]);
                }
                factors.push(factor);
                thetas.push(params);
            }
            // divide out the auxiliary Gaussian the slice move conditions on
            lp += z.iter().map(|v| v * v).sum::<f64>() / (2.0 * scale * scale);
            if !lp.is_finite() {
                return None;
            }
            *cache.borrow_mut() = Some((z.to_vec(), factors, thetas));
            Some(lp)
        };

        let current = self.z_theta[z_lo..z_hi].to_vec();
        let (z_new, evals) = elliptical_slice(&current, scale, logf, &mut self.rng)?;
        self.ess_evals += u64::from(evals);

        let (factors, thetas) = match cache.into_inner() {
            Some((zc, f, t)) if zc == z_new => (f, t),
            _ => {
                // cache missed (cannot happen with the current move); rebuild
                let mut f = Vec::new();
                let mut t = Vec::new();
                let mut off = 0;
                for kc in &kernels {
                    let ar = kc.family.arity();
                    let params =
                        params_from_unconstrained(kc.family, &z_new[off..off + ar], &kc.ranges)?;
                    f.push(self.assembler.build(&params)?);
                    t.push(params);
                    off += ar;
                }
                (f, t)
            }
        };
        self.z_theta[z_lo..z_hi].copy_from_slice(&z_new);
        for (k, &a) in which.iter().enumerate() {
            self.factors[a] = factors[k].clone();
            self.theta[a] = thetas[k].clone();
        }
        Ok(evals)
    }

    fn predict_draw(&mut self) -> Result<(Array1<f64>, Array1<f64>)> {
        let nu_star = predict::predict_latents(
            &self.factors,
            &self.pctx,
            &self.theta,
            &self.nu,
            &mut self.rng,
        )?;
        let beta = predict::coefficients_at(&self.alpha, &self.gamma, &nu_star);
        let y = predict::draw_responses(&self.target, &beta, self.tau2, &mut self.rng);
        Ok((beta, y))
    }
}

fn pack_unconstrained(kernels: &[KernelConfig], thetas: &[KernelParams]) -> Result<Vec<f64>> {
    let mut z = Vec::new();
    for (kc, th) in kernels.iter().zip(thetas) {
        z.extend(params_to_unconstrained(th, &kc.ranges)?);
    }
    Ok(z)
}

/// Saved draws of one chain. Rows are kept iterations; beta columns are
/// point-major blocks of p coefficients; y columns follow the prediction
/// replicate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    pub subset_id: usize,
    pub p: usize,
    pub test_points: Vec<IndexPoint>,
    /// Replicate count per prediction point.
    pub replicates: Vec<usize>,
    pub beta: Array2<f64>,
    pub y: Array2<f64>,
    pub log_tau2: Array1<f64>,
}

impl DrawStore {
    pub fn t(&self) -> usize {
        self.log_tau2.len()
    }

    pub fn l(&self) -> usize {
        self.test_points.len()
    }

    /// Column range of prediction point j in `beta`.
    pub fn beta_cols(&self, j: usize) -> Range<usize> {
        j * self.p..(j + 1) * self.p
    }

    /// Column offsets per prediction point in `y`, with a final sentinel.
    pub fn y_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.replicates.len() + 1);
        let mut at = 0;
        for &s in &self.replicates {
            out.push(at);
            at += s;
        }
        out.push(at);
        out
    }
}

/// Timing and effort counters for one chain run.
#[derive(Debug, Clone, Copy)]
pub struct RunStats {
    pub wall_seconds: f64,
    pub ess_evaluations: u64,
}

/// Run one chain to completion and collect its kept draws.
pub fn run_chain(
    data: Dataset,
    spec: ModelSpec,
    target: PredictTarget,
    cfg: ChainConfig,
    subset_id: usize,
) -> Result<(DrawStore, RunStats)> {
    let start = Instant::now();
    let p = spec.p;
    let mut chain = Chain::new(data, spec, target.clone(), cfg.clone())?;
    let t = cfg.kept_draws();
    let l = target.l();
    let mut beta = Array2::zeros((t, l * p));
    let mut y = Array2::zeros((t, target.total_components()));
    let mut log_tau2 = Array1::zeros(t);
    let mut row = 0;
    for iter in 0..cfg.n_iterations {
        let rec = chain.step()?;
        if cfg.keeps(iter) {
            beta.row_mut(row).assign(&rec.beta_star);
            y.row_mut(row).assign(&rec.y_star);
            log_tau2[row] = rec.tau2.ln();
            row += 1;
        }
    }
    debug_assert_eq!(row, t);
    let store = DrawStore {
        subset_id,
        p,
        test_points: target.points,
        replicates: target.x.iter().map(|x| x.nrows()).collect(),
        beta,
        y,
        log_tau2,
    };
    let stats = RunStats {
        wall_seconds: start.elapsed().as_secs_f64(),
        ess_evaluations: chain.ess_evaluations(),
    };
    Ok((store, stats))
}
