//! Error metrics, interval coverage, and chain-efficiency summaries.

use ndarray::prelude::*;

use crate::combiner::quantile_type7;
use crate::error::{Result, VcgpError};

/// Mean squared difference between two equally long vectors.
pub fn mean_squared_error(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(VcgpError::Dim(format!(
            "length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(VcgpError::Invalid("empty vectors".into()));
    }
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// Squared-error total divided by the number of index points: per-point
/// component errors accumulate rather than average, so a bivariate response
/// counts both coordinates at each point.
pub fn mse_per_point(est: ArrayView1<f64>, truth: ArrayView1<f64>, points: usize) -> Result<f64> {
    if points == 0 {
        return Err(VcgpError::Invalid("no index points".into()));
    }
    let mean = mean_squared_error(est, truth)?;
    Ok(mean * est.len() as f64 / points as f64)
}

/// Empirical coverage and mean width of equal-tailed credible intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSummary {
    pub coverage: f64,
    pub mean_length: f64,
}

/// Equal-tailed interval bounds for one sequence of draws.
pub fn equal_tailed_interval(draws: ArrayView1<f64>, level: f64) -> Result<(f64, f64)> {
    if draws.len() < 2 {
        return Err(VcgpError::Invalid("need at least two draws".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(VcgpError::Invalid(format!("level {level} outside (0, 1)")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Ok((
        quantile_type7(&sorted, alpha),
        quantile_type7(&sorted, 1.0 - alpha),
    ))
}

/// Coverage of the true values by per-dimension equal-tailed intervals built
/// from draw columns.
pub fn coverage_and_length(
    draws: ArrayView2<f64>,
    truth: ArrayView1<f64>,
    level: f64,
) -> Result<IntervalSummary> {
    if draws.ncols() != truth.len() {
        return Err(VcgpError::Dim(format!(
            "{} draw columns vs {} true values",
            draws.ncols(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(VcgpError::Invalid("no dimensions to cover".into()));
    }
    let mut lo = Array1::zeros(truth.len());
    let mut hi = Array1::zeros(truth.len());
    for (c, (l, h)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
        let (a, b) = equal_tailed_interval(draws.column(c), level)?;
        *l = a;
        *h = b;
    }
    coverage_from_intervals(lo.view(), hi.view(), truth)
}

/// Coverage given precomputed interval endpoints (quantile-curve outputs).
pub fn coverage_from_intervals(
    lo: ArrayView1<f64>,
    hi: ArrayView1<f64>,
    truth: ArrayView1<f64>,
) -> Result<IntervalSummary> {
    let d = truth.len();
    if lo.len() != d || hi.len() != d {
        return Err(VcgpError::Dim(format!(
            "interval lengths {}/{} vs {} true values",
            lo.len(),
            hi.len(),
            d
        )));
    }
    if d == 0 {
        return Err(VcgpError::Invalid("no dimensions to cover".into()));
    }
    let mut covered = 0usize;
    let mut length = 0.0;
    for i in 0..d {
        if lo[i] > hi[i] {
            return Err(VcgpError::Invalid(format!(
                "interval {i} has lower bound above upper bound"
            )));
        }
        if lo[i] <= truth[i] && truth[i] <= hi[i] {
            covered += 1;
        }
        length += hi[i] - lo[i];
    }
    Ok(IntervalSummary {
        coverage: covered as f64 / d as f64,
        mean_length: length / d as f64,
    })
}

/// Effective sample size of one chain by the initial-positive-pair rule:
/// sum autocorrelations in lag pairs (0,1), (2,3), ... while the pair sums
/// stay positive, then T / max(tau, 1). A constant chain has no information
/// and reports zero. Autocovariances are computed lag by lag, so well-mixed
/// chains stop after a handful of passes.
pub fn effective_sample_size(chain: ArrayView1<f64>) -> Result<f64> {
    let t = chain.len();
    if t < 4 {
        return Err(VcgpError::Invalid(format!(
            "need at least 4 draws for an effective size, got {t}"
        )));
    }
    let mean = chain.sum() / t as f64;
    let centered: Vec<f64> = chain.iter().map(|v| v - mean).collect();
    let gamma = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..t - lag {
            acc += centered[i] * centered[i + lag];
        }
        acc / t as f64
    };
    let g0 = gamma(0);
    if g0 <= 0.0 || !g0.is_finite() {
        tracing::warn!("constant or degenerate chain, effective size set to 0");
        return Ok(0.0);
    }
    let mut acc = 0.0;
    let mut lag = 0;
    while lag + 1 < t {
        let pair = (gamma(lag) + gamma(lag + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        acc += pair;
        lag += 2;
    }
    let tau = (2.0 * acc - 1.0).max(1.0);
    Ok(t as f64 / tau)
}

/// Sum of per-column effective sizes of a draw matrix.
pub fn ess_total(draws: ArrayView2<f64>) -> Result<f64> {
    let mut total = 0.0;
    for c in draws.columns() {
        total += effective_sample_size(c)?;
    }
    Ok(total)
}

/// log2 of the total effective size per hour of wall time.
pub fn computational_efficiency(ess_total: f64, hours: f64) -> Result<f64> {
    if !(hours > 0.0) {
        return Err(VcgpError::Invalid(format!(
            "nonpositive wall time {hours} hours"
        )));
    }
    Ok(ess_total.max(1.0).log2() / hours)
}

/// Ordered key/value metric collection with a flat text form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub entries: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn push(&mut self, key: &str, value: f64) {
        self.entries.push((key.to_string(), value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k}={v:.10e}\n"));
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut report = MetricReport::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                VcgpError::Format(format!("line {}: expected key=value", i + 1))
            })?;
            let value: f64 = v.trim().parse().map_err(|_| {
                VcgpError::Format(format!("line {}: bad number '{}'", i + 1, v.trim()))
            })?;
            report.push(k.trim(), value);
        }
        Ok(report)
    }
}
