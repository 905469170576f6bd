//! End-to-end pipelines behind the command-line verbs.
//!
//! A fit writes a self-contained run directory: the subset plan, one draw
//! table per chain, combined outputs, deterministic metric files, and a
//! manifest of seeds and content hashes written last. Wall-clock timings go
//! to a sibling `<dir>.timings.kv` file so the run directory itself is a
//! pure function of configuration and seeds, whatever the worker count.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::prelude::*;

use crate::combiner::{combine, CombineMethod, CombineOutput, QuantileSummary};
use crate::diagnostics::{
    computational_efficiency, coverage_and_length, coverage_from_intervals, ess_total,
    mse_per_point, MetricReport,
};
use crate::error::{Result, VcgpError};
use crate::model::{Dataset, ModelSpec};
use crate::partitioner::{extract_subset, make_subsets};
use crate::runner::config::RunConfig;
use crate::runner::io;
use crate::sampler::predict::PredictTarget;
use crate::sampler::{run_chain, DrawStore, RunStats};
use crate::simgen::{generate_simulation, SimTruth};

/// Create the output directory, refusing to reuse one that has content.
fn prepare_out_dir(path: &Path) -> Result<()> {
    if path.exists() {
        let mut entries = std::fs::read_dir(path)
            .map_err(|e| io::io_at(path, e))?;
        if entries.next().is_some() {
            return Err(VcgpError::Invalid(format!(
                "output directory {} already has content",
                path.display()
            )));
        }
        return Ok(());
    }
    std::fs::create_dir_all(path)
        .map_err(|e| io::io_at(path, e))
}

fn build_spec(cfg: &RunConfig, data: &Dataset, delta: f64) -> Result<ModelSpec> {
    let spec = ModelSpec {
        p: data.p,
        q: data.q,
        d: data.d,
        kernels: cfg.kernel_configs(data.q)?,
        delta,
        fitc_rank: cfg.fitc_rank,
        fitc_grid: cfg.fitc_grid,
    };
    spec.validate(data)?;
    Ok(spec)
}

/// Prediction target plus the held-out responses (for predictive metrics).
fn load_target(cfg: &RunConfig) -> Result<(PredictTarget, Option<Array1<f64>>)> {
    match &cfg.test_dataset {
        Some(path) => {
            let test = io::ingest_dataset(path)?;
            let y = test.stacked_y();
            Ok((PredictTarget::from_dataset(&test), Some(y)))
        }
        None => Ok((PredictTarget::empty(), None)),
    }
}

/// Generate a simulated train/test/truth triple into the output directory.
pub fn simulate_run(cfg: &RunConfig) -> Result<PathBuf> {
    let n = cfg
        .n
        .ok_or_else(|| VcgpError::Config("simulate requires n".into()))?;
    let n_test = cfg
        .n_test
        .ok_or_else(|| VcgpError::Config("simulate requires n_test".into()))?;
    let out = cfg.require_out()?;
    prepare_out_dir(out)?;
    let (train, test, truth) = generate_simulation(n, n_test, cfg.seed)?;
    io::write_dataset(&out.join("train.txt"), &train)?;
    io::write_dataset(&out.join("test.txt"), &test)?;
    io::write_truth(&out.join("truth.txt"), &truth)?;
    Ok(out.to_path_buf())
}

/// Single full-data chain with no likelihood tempering.
pub fn run_full(cfg: &RunConfig) -> Result<PathBuf> {
    let data = io::ingest_dataset(cfg.require_dataset()?)?;
    let (target, y_actual) = load_target(cfg)?;
    let spec = build_spec(cfg, &data, 1.0)?;
    let chain_cfg = cfg.chain_config()?;
    let out = cfg.require_out()?;
    prepare_out_dir(out)?;

    let n = data.n();
    let (store, stats) = run_chain(data, spec, target, chain_cfg, 0)?;
    io::write_store(out, "full", &store, &[])?;

    let mut timings = MetricReport::default();
    timings.push("full_wall_seconds", stats.wall_seconds);
    timings.push("full_ess_evaluations", stats.ess_evaluations as f64);
    let hours = stats.wall_seconds / 3600.0;
    append_metrics_and_efficiency(out, "full", &store, cfg, y_actual.as_ref(), hours, &mut timings)?;

    io::write_manifest(
        out,
        &[
            ("mode".into(), "full".into()),
            ("seed".into(), cfg.seed.to_string()),
            ("n".into(), n.to_string()),
        ],
    )?;
    std::fs::write(io::timings_path(out), timings.to_kv())
        ?;
    Ok(out.to_path_buf())
}

/// Subset fan-out, per-subset chains under tempering n/m, then combination.
pub fn run_distributed(cfg: &RunConfig) -> Result<PathBuf> {
    let data = io::ingest_dataset(cfg.require_dataset()?)?;
    let n = data.n();
    let (m, k) = cfg.validate_distributed(n)?;
    let (target, y_actual) = load_target(cfg)?;
    let delta = n as f64 / m as f64;
    let spec = build_spec(cfg, &data, delta)?;
    let chain_cfg = cfg.chain_config()?;
    let out = cfg.require_out()?;
    prepare_out_dir(out)?;

    let plan = make_subsets(n, k, m, cfg.seed)?;
    io::write_plan(out, &plan, cfg.seed)?;

    let results: Mutex<Vec<Option<Result<(DrawStore, RunStats)>>>> =
        Mutex::new((0..k).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = cfg.workers.min(k).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                if j >= k {
                    break;
                }
                let res = extract_subset(&data, &plan, j).and_then(|subset| {
                    let mut cc = chain_cfg.clone();
                    cc.chain_stream = j as u64;
                    run_chain(subset, spec.clone(), target.clone(), cc, j)
                });
                results.lock().unwrap()[j] = Some(res);
            });
        }
    });

    let mut stores: Vec<DrawStore> = Vec::with_capacity(k);
    let mut stats: Vec<RunStats> = Vec::with_capacity(k);
    let mut failure: Option<(usize, VcgpError)> = None;
    for (j, slot) in results.into_inner().unwrap().into_iter().enumerate() {
        match slot.expect("worker pool covered every subset") {
            Ok((store, stat)) => {
                // partial outputs stay on disk even if a later subset failed
                io::write_store(out, &format!("subset_{j}"), &store, &[])?;
                stores.push(store);
                stats.push(stat);
            }
            Err(e) => {
                if failure.is_none() {
                    failure = Some((j, e));
                }
            }
        }
    }
    if let Some((j, e)) = failure {
        return Err(VcgpError::Invalid(format!("subset {j} failed: {e}")));
    }

    let mut timings = MetricReport::default();
    let mut max_wall: f64 = 0.0;
    for (j, stat) in stats.iter().enumerate() {
        timings.push(&format!("subset_{j}_wall_seconds"), stat.wall_seconds);
        max_wall = max_wall.max(stat.wall_seconds);
    }
    timings.push("subset_max_wall_seconds", max_wall);

    let combine_start = std::time::Instant::now();
    let outputs = combine_all(&stores, cfg)?;
    let combine_seconds = combine_start.elapsed().as_secs_f64();
    timings.push("combine_seconds", combine_seconds);
    let hours = (max_wall + combine_seconds) / 3600.0;

    for (method, output) in &outputs {
        write_combined_output(out, output, &stores[0])?;
        match output {
            CombineOutput::Draws(d) => {
                let stem = format!("combined_{}", method.name());
                let store = combined_as_store(d, &stores[0]);
                append_metrics_and_efficiency(
                    out,
                    &stem,
                    &store,
                    cfg,
                    y_actual.as_ref(),
                    hours,
                    &mut timings,
                )?;
            }
            CombineOutput::Quantiles(q) => {
                if let Some(truth) = load_truth(cfg)? {
                    let report = metrics_for_quantiles(q, stores[0].p, &truth, y_actual.as_ref())?;
                    std::fs::write(out.join("metrics_pie.kv"), report.to_kv())
                        ?;
                }
            }
        }
    }

    io::write_manifest(
        out,
        &[
            ("mode".into(), "distributed".into()),
            ("seed".into(), cfg.seed.to_string()),
            ("n".into(), n.to_string()),
            ("m".into(), m.to_string()),
            ("k".into(), k.to_string()),
        ],
    )?;
    std::fs::write(io::timings_path(out), timings.to_kv())
        ?;
    Ok(out.to_path_buf())
}

fn combine_all(
    stores: &[DrawStore],
    cfg: &RunConfig,
) -> Result<Vec<(CombineMethod, CombineOutput)>> {
    let mut outputs = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        outputs.push((*method, combine(stores, *method, cfg.block_policy)?));
    }
    Ok(outputs)
}

fn write_combined_output(dir: &Path, output: &CombineOutput, layout: &DrawStore) -> Result<()> {
    match output {
        CombineOutput::Draws(d) => io::write_combined(dir, d, layout),
        CombineOutput::Quantiles(q) => io::write_quantiles(dir, q, layout),
    }
}

fn combined_as_store(d: &crate::combiner::CombinedDraws, layout: &DrawStore) -> DrawStore {
    DrawStore {
        subset_id: 0,
        p: layout.p,
        test_points: layout.test_points.clone(),
        replicates: layout.replicates.clone(),
        beta: d.beta.clone(),
        y: d.y.clone(),
        log_tau2: d.log_tau2.clone(),
    }
}

fn load_truth(cfg: &RunConfig) -> Result<Option<SimTruth>> {
    match &cfg.truth {
        Some(path) => Ok(Some(io::read_truth(path)?)),
        None => Ok(None),
    }
}

/// Deterministic metrics into the run directory (when truth is available)
/// and the time-dependent efficiency figure into the timing report.
fn append_metrics_and_efficiency(
    dir: &Path,
    stem: &str,
    store: &DrawStore,
    cfg: &RunConfig,
    y_actual: Option<&Array1<f64>>,
    hours: f64,
    timings: &mut MetricReport,
) -> Result<()> {
    let ess = if store.t() >= 4 {
        Some(store_ess_total(store)?)
    } else {
        None
    };
    if let Some(ess) = ess {
        if hours > 0.0 {
            timings.push(
                &format!("efficiency_{stem}"),
                computational_efficiency(ess, hours)?,
            );
        }
    }
    if let Some(truth) = load_truth(cfg)? {
        let mut report = metrics_for_draws(store, &truth, y_actual)?;
        if let Some(ess) = ess {
            report.push("ess_total", ess);
        }
        std::fs::write(dir.join(format!("metrics_{stem}.kv")), report.to_kv())
            ?;
    }
    Ok(())
}

/// Aggregate sampling effort over every stored scalar quantity: all
/// coefficient columns, all response columns, and the noise variance.
pub fn store_ess_total(store: &DrawStore) -> Result<f64> {
    let mut total = ess_total(store.beta.view())?;
    if store.y.ncols() > 0 {
        total += ess_total(store.y.view())?;
    }
    total += crate::diagnostics::effective_sample_size(store.log_tau2.view())?;
    Ok(total)
}

/// True coefficient values at the test points, flattened point-major to
/// match draw-table columns.
fn truth_beta_flat(truth: &SimTruth, l: usize, p: usize) -> Result<Array1<f64>> {
    let beta_test = truth.beta_test();
    if beta_test.nrows() != l || beta_test.ncols() != p {
        return Err(VcgpError::Dim(format!(
            "truth covers {} test points with {} coefficients, draws have {l} and {p}",
            beta_test.nrows(),
            beta_test.ncols()
        )));
    }
    Ok(Array1::from_iter(beta_test.iter().cloned()))
}

/// Metric set for a draw table: coefficient error and coverage against the
/// truth, predictive error and coverage against held-out responses, and the
/// noise-variance interval.
pub fn metrics_for_draws(
    store: &DrawStore,
    truth: &SimTruth,
    y_actual: Option<&Array1<f64>>,
) -> Result<MetricReport> {
    let mut report = MetricReport::default();
    report.push("draws", store.t() as f64);
    let l = store.l();
    if l > 0 {
        let beta0 = truth_beta_flat(truth, l, store.p)?;
        let beta_mean = column_means(&store.beta);
        report.push("mse_beta", mse_per_point(beta_mean.view(), beta0.view(), l)?);
        let cov = coverage_and_length(store.beta.view(), beta0.view(), 0.95)?;
        report.push("coverage_beta", cov.coverage);
        report.push("ci_length_beta", cov.mean_length);
        if let Some(y0) = y_actual {
            if y0.len() != store.y.ncols() {
                return Err(VcgpError::Dim(format!(
                    "{} held-out responses vs {} response columns",
                    y0.len(),
                    store.y.ncols()
                )));
            }
            let y_mean = column_means(&store.y);
            report.push("mspe", mse_per_point(y_mean.view(), y0.view(), l)?);
            let cov = coverage_and_length(store.y.view(), y0.view(), 0.95)?;
            report.push("coverage_y", cov.coverage);
            report.push("ci_length_y", cov.mean_length);
        }
    }
    let (lo, hi) = crate::diagnostics::equal_tailed_interval(store.log_tau2.view(), 0.95)?;
    let (tau_lo, tau_hi) = (lo.exp(), hi.exp());
    let tau_mean = store.log_tau2.mapv(f64::exp).mean().unwrap_or(f64::NAN);
    report.push("tau2_mean", tau_mean);
    report.push("tau2_lo", tau_lo);
    report.push("tau2_hi", tau_hi);
    report.push(
        "tau2_covered",
        f64::from(u8::from(tau_lo <= truth.tau2_0 && truth.tau2_0 <= tau_hi)),
    );
    Ok(report)
}

/// Metric set for averaged quantile curves: medians stand in for point
/// estimates, the 2.5% and 97.5% rows for interval endpoints.
pub fn metrics_for_quantiles(
    q: &QuantileSummary,
    p: usize,
    truth: &SimTruth,
    y_actual: Option<&Array1<f64>>,
) -> Result<MetricReport> {
    let row_for = |prob: f64| -> Result<usize> {
        q.probs
            .iter()
            .position(|v| (v - prob).abs() < 1e-9)
            .ok_or_else(|| {
                VcgpError::Invalid(format!("probability {prob} not on the quantile grid"))
            })
    };
    let median = row_for(0.5)?;
    let lo = row_for(0.025)?;
    let hi = row_for(0.975)?;
    let mut report = MetricReport::default();
    let lp = q.beta.ncols();
    if lp > 0 {
        if lp % p != 0 {
            return Err(VcgpError::Dim(format!(
                "{lp} coefficient columns not divisible by p={p}"
            )));
        }
        let lpts = lp / p;
        let beta0 = truth_beta_flat(truth, lpts, p)?;
        report.push("mse_beta", mse_per_point(q.beta.row(median), beta0.view(), lpts)?);
        let cov = coverage_from_intervals(q.beta.row(lo), q.beta.row(hi), beta0.view())?;
        report.push("coverage_beta", cov.coverage);
        report.push("ci_length_beta", cov.mean_length);
        if let Some(y0) = y_actual {
            if y0.len() != q.y.ncols() {
                return Err(VcgpError::Dim(format!(
                    "{} held-out responses vs {} response columns",
                    y0.len(),
                    q.y.ncols()
                )));
            }
            report.push("mspe", mse_per_point(q.y.row(median), y0.view(), lpts)?);
            let cov = coverage_from_intervals(q.y.row(lo), q.y.row(hi), y0.view())?;
            report.push("coverage_y", cov.coverage);
            report.push("ci_length_y", cov.mean_length);
        }
    }
    let (tau_lo, tau_hi) = (q.log_tau2[lo].exp(), q.log_tau2[hi].exp());
    report.push("tau2_median", q.log_tau2[median].exp());
    report.push("tau2_lo", tau_lo);
    report.push("tau2_hi", tau_hi);
    report.push(
        "tau2_covered",
        f64::from(u8::from(tau_lo <= truth.tau2_0 && truth.tau2_0 <= tau_hi)),
    );
    Ok(report)
}

fn column_means(m: &Array2<f64>) -> Array1<f64> {
    let t = m.nrows().max(1) as f64;
    let mut out = Array1::zeros(m.ncols());
    for row in m.rows() {
        out += &row;
    }
    out / t
}

/// Re-run combination over the subset draws already in a run directory.
pub fn combine_run(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.require_run()?;
    let ids = io::list_subset_ids(dir)?;
    if ids.is_empty() {
        return Err(VcgpError::Invalid(format!(
            "no subset draws in {}",
            dir.display()
        )));
    }
    let mut stores = Vec::with_capacity(ids.len());
    for id in &ids {
        let (store, _) = io::read_store(dir, &format!("subset_{id}"))?;
        stores.push(store);
    }
    stores.sort_by_key(|s| s.subset_id);
    for (_, output) in combine_all(&stores, cfg)? {
        write_combined_output(dir, &output, &stores[0])?;
    }
    rewrite_manifest(dir)?;
    Ok(())
}

/// Compute metric files for every draw table in a run directory.
pub fn metrics_run(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.require_run()?;
    let truth_path = cfg
        .truth
        .as_deref()
        .ok_or_else(|| VcgpError::Config("metrics requires truth=...".into()))?;
    let truth = io::read_truth(truth_path)?;
    let y_actual = match &cfg.test_dataset {
        Some(path) => Some(io::ingest_dataset(path)?.stacked_y()),
        None => None,
    };
    let mut wrote = 0;
    for stem in table_stems(dir)? {
        let (store, _) = io::read_store(dir, &stem)?;
        let mut report = metrics_for_draws(&store, &truth, y_actual.as_ref())?;
        if store.t() >= 4 {
            report.push("ess_total", store_ess_total(&store)?);
        }
        std::fs::write(dir.join(format!("metrics_{stem}.kv")), report.to_kv())
            ?;
        wrote += 1;
    }
    if dir.join("combined_pie.quantiles").exists() {
        let (q, p, _, _) = io::read_quantiles(dir)?;
        let report = metrics_for_quantiles(&q, p, &truth, y_actual.as_ref())?;
        std::fs::write(dir.join("metrics_pie.kv"), report.to_kv())
            ?;
        wrote += 1;
    }
    if wrote == 0 {
        return Err(VcgpError::Invalid(format!(
            "no draw tables in {}",
            dir.display()
        )));
    }
    rewrite_manifest(dir)?;
    Ok(())
}

/// Draw-table stems present in a run directory: the full-data table plus
/// subset and combined tables.
fn table_stems(dir: &Path) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    if dir.join("full.meta").exists() {
        stems.push("full".to_string());
    }
    for id in io::list_subset_ids(dir)? {
        stems.push(format!("subset_{id}"));
    }
    for method in CombineMethod::all() {
        let stem = format!("combined_{}", method.name());
        if dir.join(format!("{stem}.meta")).exists() {
            stems.push(stem);
        }
    }
    Ok(stems)
}

/// Preserve a manifest's header pairs while refreshing its file hashes.
fn rewrite_manifest(dir: &Path) -> Result<()> {
    let manifest = dir.join("manifest.kv");
    let mut header: Vec<(String, String)> = Vec::new();
    if manifest.exists() {
        let text = std::fs::read_to_string(&manifest)
            ?;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("file_") {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
    }
    io::write_manifest(dir, &header)
}

/// Human-readable collation of a run directory.
pub fn report_run(cfg: &RunConfig) -> Result<String> {
    let dir = cfg.require_run()?;
    let mut out = String::new();
    out.push_str(&format!("run {}\n", dir.display()));
    let manifest = dir.join("manifest.kv");
    if manifest.exists() {
        let text = std::fs::read_to_string(&manifest)
            ?;
        let mut files = 0;
        for line in text.lines() {
            let line = line.trim();
            if line.starts_with("file_") {
                files += 1;
            } else if !line.is_empty() && !line.starts_with('#') {
                out.push_str(&format!("  {line}\n"));
            }
        }
        out.push_str(&format!("  files: {files}\n"));
    } else {
        out.push_str("  (no manifest)\n");
    }
    let mut metric_files: Vec<String> = Vec::new();
    for entry in
        std::fs::read_dir(dir).map_err(|e| io::io_at(dir, e))?
    {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("metrics_") && name.ends_with(".kv") {
            metric_files.push(name);
        }
    }
    metric_files.sort();
    for name in metric_files {
        let text = std::fs::read_to_string(dir.join(&name))
            ?;
        out.push_str(&format!("[{}]\n", name.trim_end_matches(".kv")));
        for line in text.lines() {
            out.push_str(&format!("  {line}\n"));
        }
    }
    let timings = io::timings_path(dir);
    if timings.exists() {
        let text =
            std::fs::read_to_string(&timings)?;
        out.push_str("[timings]\n");
        for line in text.lines() {
            out.push_str(&format!("  {line}\n"));
        }
    }
    Ok(out)
}
