//! Text persistence for datasets, draws, quantile curves, and run manifests.
//!
//! All floats are written as `{:.16e}`, which round-trips every f64 exactly,
//! so a rerun with the same seeds reproduces every output byte.
//!
//! Dataset format: a header line `# vcgp dataset d=.. p=.. q=..`, then one
//! record per response component: the d index coordinates, the observation
//! id, the component index within the observation, the response value, and
//! the p covariates. Rows sharing an observation id form one observation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::prelude::*;
use sha2::{Digest, Sha256};

use crate::combiner::{CombinedDraws, QuantileSummary};
use crate::error::{Result, VcgpError};
use crate::model::{Dataset, IndexPoint, Observation};
use crate::partitioner::SubsetPlan;
use crate::sampler::DrawStore;
use crate::simgen::SimTruth;

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f(token: &str, line: usize) -> Result<f64> {
    token
        .parse()
        .map_err(|_| VcgpError::Format(format!("line {line}: bad number '{token}'")))
}

fn parse_u(token: &str, line: usize) -> Result<usize> {
    token
        .parse()
        .map_err(|_| VcgpError::Format(format!("line {line}: bad integer '{token}'")))
}

/// Attach the offending path to an io error, keeping its kind.
pub(crate) fn io_at(path: &Path, e: std::io::Error) -> VcgpError {
    VcgpError::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_at(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_at(path, e))
}

/// Key=value pairs embedded in a header block, insertion order kept out of
/// the parse (BTreeMap; writers emit a fixed order anyway).
fn parse_kv_line(line: &str, lineno: usize) -> Result<(String, String)> {
    let (k, v) = line.split_once('=').ok_or_else(|| {
        VcgpError::Format(format!("line {lineno}: expected key=value, got '{line}'"))
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn csv_f(values: &str, lineno: usize) -> Result<Vec<f64>> {
    if values.trim().is_empty() {
        return Ok(Vec::new());
    }
    values
        .split(',')
        .map(|t| parse_f(t.trim(), lineno))
        .collect()
}

fn csv_u(values: &str, lineno: usize) -> Result<Vec<usize>> {
    if values.trim().is_empty() {
        return Ok(Vec::new());
    }
    values
        .split(',')
        .map(|t| parse_u(t.trim(), lineno))
        .collect()
}

// ---------------------------------------------------------------- datasets

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = String::new();
    writeln!(
        out,
        "# vcgp dataset d={} p={} q={}",
        data.d, data.p, data.q
    )
    .unwrap();
    for (id, obs) in data.observations.iter().enumerate() {
        for c in 0..obs.s() {
            let mut row: Vec<String> = obs.point.coords.iter().map(|u| fmt_f(*u)).collect();
            row.push(id.to_string());
            row.push(c.to_string());
            row.push(fmt_f(obs.y[c]));
            row.extend(obs.x.row(c).iter().map(|x| fmt_f(*x)));
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    write_file(path, &out)
}

pub fn ingest_dataset(path: &Path) -> Result<Dataset> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    let (d, p, q) = loop {
        let (i, raw) = lines
            .next()
            .ok_or_else(|| VcgpError::Format("missing dataset header".into()))?;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let rest = line.strip_prefix("# vcgp dataset").ok_or_else(|| {
            VcgpError::Format(format!("line {}: expected '# vcgp dataset' header", i + 1))
        })?;
        let mut d = None;
        let mut p = None;
        let mut q = None;
        for part in rest.split_whitespace() {
            let (k, v) = parse_kv_line(part, i + 1)?;
            match k.as_str() {
                "d" => d = Some(parse_u(&v, i + 1)?),
                "p" => p = Some(parse_u(&v, i + 1)?),
                "q" => q = Some(parse_u(&v, i + 1)?),
                other => {
                    return Err(VcgpError::Format(format!(
                        "line {}: unknown header field '{other}'",
                        i + 1
                    )))
                }
            }
        }
        match (d, p, q) {
            (Some(d), Some(p), Some(q)) => break (d, p, q),
            _ => {
                return Err(VcgpError::Format(format!(
                    "line {}: header must set d, p and q",
                    i + 1
                )))
            }
        }
    };

    let mut observations: Vec<Observation> = Vec::new();
    let mut rows: Vec<(Vec<f64>, f64, Vec<f64>)> = Vec::new();
    let mut current_id: Option<usize> = None;

    let flush = |rows: &mut Vec<(Vec<f64>, f64, Vec<f64>)>,
                     observations: &mut Vec<Observation>| {
        if rows.is_empty() {
            return;
        }
        let s = rows.len();
        let coords = rows[0].0.clone();
        let y = Array1::from_iter(rows.iter().map(|r| r.1));
        let mut x = Array2::zeros((s, p));
        for (r, row) in rows.iter().enumerate() {
            x.row_mut(r).assign(&Array1::from_vec(row.2.clone()));
        }
        observations.push(Observation {
            point: IndexPoint::new(coords),
            y,
            x,
        });
        rows.clear();
    };

    for (i, raw) in lines {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != d + 3 + p {
            return Err(VcgpError::Format(format!(
                "line {lineno}: expected {} fields, found {}",
                d + 3 + p,
                tokens.len()
            )));
        }
        let coords: Vec<f64> = tokens[..d]
            .iter()
            .map(|t| parse_f(t, lineno))
            .collect::<Result<_>>()?;
        for u in &coords {
            if !(0.0..=1.0).contains(u) {
                return Err(VcgpError::Format(format!(
                    "line {lineno}: index coordinate {u} outside [0, 1]"
                )));
            }
        }
        let id = parse_u(tokens[d], lineno)?;
        let comp = parse_u(tokens[d + 1], lineno)?;
        let y = parse_f(tokens[d + 2], lineno)?;
        let x: Vec<f64> = tokens[d + 3..]
            .iter()
            .map(|t| parse_f(t, lineno))
            .collect::<Result<_>>()?;

        match current_id {
            Some(cur) if id == cur => {
                if comp != rows.len() {
                    return Err(VcgpError::Format(format!(
                        "line {lineno}: component index {comp} out of order (expected {})",
                        rows.len()
                    )));
                }
                if rows[0].0 != coords {
                    return Err(VcgpError::Format(format!(
                        "line {lineno}: coordinates differ within observation {id}"
                    )));
                }
            }
            Some(cur) if id == cur + 1 => {
                flush(&mut rows, &mut observations);
                current_id = Some(id);
                if comp != 0 {
                    return Err(VcgpError::Format(format!(
                        "line {lineno}: observation {id} must start at component 0"
                    )));
                }
            }
            Some(cur) => {
                return Err(VcgpError::Format(format!(
                    "line {lineno}: observation id {id} does not follow {cur}"
                )));
            }
            None => {
                if id != 0 || comp != 0 {
                    return Err(VcgpError::Format(format!(
                        "line {lineno}: records must start at observation 0, component 0"
                    )));
                }
                current_id = Some(0);
            }
        }
        rows.push((coords, y, x));
    }
    flush(&mut rows, &mut observations);

    if observations.is_empty() {
        return Err(VcgpError::Format("no observations".into()));
    }
    let data = Dataset {
        observations,
        p,
        q,
        d,
    };
    data.validate()?;
    Ok(data)
}

// ------------------------------------------------------------------- truth

pub fn write_truth(path: &Path, truth: &SimTruth) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# vcgp truth").unwrap();
    writeln!(out, "seed={}", truth.seed).unwrap();
    writeln!(out, "n_train={}", truth.n_train).unwrap();
    writeln!(out, "tau2_0={}", fmt_f(truth.tau2_0)).unwrap();
    let csv = |v: &[f64]| v.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(",");
    writeln!(out, "alpha0={}", csv(truth.alpha0.as_slice().unwrap())).unwrap();
    writeln!(out, "phi0={}", csv(&truth.phi0)).unwrap();
    writeln!(out, "gamma0={}", csv(truth.gamma0.as_slice().unwrap())).unwrap();
    writeln!(out, "[nu0]").unwrap();
    for row in truth.nu0.rows() {
        writeln!(out, "{}", row.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(" ")).unwrap();
    }
    writeln!(out, "[beta0]").unwrap();
    for row in truth.beta0.rows() {
        writeln!(out, "{}", row.iter().map(|v| fmt_f(*v)).collect::<Vec<_>>().join(" ")).unwrap();
    }
    write_file(path, &out)
}

pub fn read_truth(path: &Path) -> Result<SimTruth> {
    let text = read_file(path)?;
    let mut seed = None;
    let mut n_train = None;
    let mut tau2_0 = None;
    let mut alpha0 = None;
    let mut phi0 = None;
    let mut gamma0_flat: Option<Vec<f64>> = None;
    let mut nu_rows: Vec<Vec<f64>> = Vec::new();
    let mut beta_rows: Vec<Vec<f64>> = Vec::new();
    let mut section = 0; // 0 header, 1 nu0, 2 beta0

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[nu0]" => {
                section = 1;
                continue;
            }
            "[beta0]" => {
                section = 2;
                continue;
            }
            _ => {}
        }
        match section {
            0 => {
                let (k, v) = parse_kv_line(line, lineno)?;
                match k.as_str() {
                    "seed" => seed = Some(parse_u(&v, lineno)? as u64),
                    "n_train" => n_train = Some(parse_u(&v, lineno)?),
                    "tau2_0" => tau2_0 = Some(parse_f(&v, lineno)?),
                    "alpha0" => alpha0 = Some(csv_f(&v, lineno)?),
                    "phi0" => phi0 = Some(csv_f(&v, lineno)?),
                    "gamma0" => gamma0_flat = Some(csv_f(&v, lineno)?),
                    other => {
                        return Err(VcgpError::Format(format!(
                            "line {lineno}: unknown truth field '{other}'"
                        )))
                    }
                }
            }
            1 => nu_rows.push(
                line.split_whitespace()
                    .map(|t| parse_f(t, lineno))
                    .collect::<Result<_>>()?,
            ),
            _ => beta_rows.push(
                line.split_whitespace()
                    .map(|t| parse_f(t, lineno))
                    .collect::<Result<_>>()?,
            ),
        }
    }

    let missing = |what: &str| VcgpError::Format(format!("truth file lacks {what}"));
    let alpha0 = Array1::from_vec(alpha0.ok_or_else(|| missing("alpha0"))?);
    let phi0 = phi0.ok_or_else(|| missing("phi0"))?;
    let gamma0_flat = gamma0_flat.ok_or_else(|| missing("gamma0"))?;
    let q = phi0.len();
    if gamma0_flat.len() != q * q {
        return Err(VcgpError::Format(format!(
            "gamma0 holds {} entries, expected {}",
            gamma0_flat.len(),
            q * q
        )));
    }
    let gamma0 = Array2::from_shape_vec((q, q), gamma0_flat).unwrap();
    let to_matrix = |rows: Vec<Vec<f64>>, what: &str| -> Result<Array2<f64>> {
        if rows.is_empty() {
            return Err(missing(what));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(VcgpError::Format(format!("ragged {what} block")));
        }
        Ok(Array2::from_shape_vec(
            (rows.len(), cols),
            rows.into_iter().flatten().collect(),
        )
        .unwrap())
    };
    let nu0 = to_matrix(nu_rows, "nu0")?;
    let beta0 = to_matrix(beta_rows, "beta0")?;
    Ok(SimTruth {
        alpha0,
        gamma0,
        tau2_0: tau2_0.ok_or_else(|| missing("tau2_0"))?,
        phi0,
        nu0,
        beta0,
        n_train: n_train.ok_or_else(|| missing("n_train"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

// ------------------------------------------------------------- draw stores

/// Write a draw table (subset, full-data, or combined) under `stem`.
/// Rows are draws: log tau2 first, then the coefficient columns, then the
/// response columns. Extra meta pairs record method details.
pub fn write_store(
    dir: &Path,
    stem: &str,
    store: &DrawStore,
    extras: &[(&str, String)],
) -> Result<()> {
    let mut meta = String::new();
    writeln!(meta, "# vcgp draws meta").unwrap();
    writeln!(meta, "subset_id={}", store.subset_id).unwrap();
    writeln!(meta, "p={}", store.p).unwrap();
    writeln!(meta, "t={}", store.t()).unwrap();
    writeln!(meta, "l={}", store.l()).unwrap();
    writeln!(
        meta,
        "replicates={}",
        store
            .replicates
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    )
    .unwrap();
    for (k, v) in extras {
        writeln!(meta, "{k}={v}").unwrap();
    }
    for (j, pt) in store.test_points.iter().enumerate() {
        writeln!(
            meta,
            "point_{j}={}",
            pt.coords.iter().map(|u| fmt_f(*u)).collect::<Vec<_>>().join(" ")
        )
        .unwrap();
    }
    write_file(&dir.join(format!("{stem}.meta")), &meta)?;

    let mut out = String::new();
    let (t, bc, yc) = (store.t(), store.beta.ncols(), store.y.ncols());
    writeln!(out, "# vcgp draws t={t} beta_cols={bc} y_cols={yc}").unwrap();
    for r in 0..t {
        let mut row = Vec::with_capacity(1 + bc + yc);
        row.push(fmt_f(store.log_tau2[r]));
        row.extend(store.beta.row(r).iter().map(|v| fmt_f(*v)));
        row.extend(store.y.row(r).iter().map(|v| fmt_f(*v)));
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    write_file(&dir.join(format!("{stem}.draws")), &out)
}

/// Read a draw table written by `write_store`; returns the store plus any
/// extra meta pairs.
pub fn read_store(dir: &Path, stem: &str) -> Result<(DrawStore, BTreeMap<String, String>)> {
    let meta_text = read_file(&dir.join(format!("{stem}.meta")))?;
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    let mut points: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, raw) in meta_text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = parse_kv_line(line, i + 1)?;
        if let Some(idx) = k.strip_prefix("point_") {
            let j = parse_u(idx, i + 1)?;
            let coords = v
                .split_whitespace()
                .map(|t| parse_f(t, i + 1))
                .collect::<Result<_>>()?;
            points.push((j, coords));
        } else {
            fields.insert(k, v);
        }
    }
    let need = |key: &str| -> Result<String> {
        fields
            .get(key)
            .cloned()
            .ok_or_else(|| VcgpError::Format(format!("{stem}.meta lacks '{key}'")))
    };
    let subset_id = parse_u(&need("subset_id")?, 0)?;
    let p = parse_u(&need("p")?, 0)?;
    let t = parse_u(&need("t")?, 0)?;
    let l = parse_u(&need("l")?, 0)?;
    let replicates = csv_u(&need("replicates")?, 0)?;
    if replicates.len() != l || points.len() != l {
        return Err(VcgpError::Format(format!(
            "{stem}.meta: {} replicate entries and {} points for l={l}",
            replicates.len(),
            points.len()
        )));
    }
    points.sort_by_key(|(j, _)| *j);
    if points.iter().enumerate().any(|(want, (j, _))| want != *j) {
        return Err(VcgpError::Format(format!(
            "{stem}.meta: point indices not consecutive"
        )));
    }
    let test_points: Vec<IndexPoint> = points
        .into_iter()
        .map(|(_, coords)| IndexPoint::new(coords))
        .collect();

    let draws_text = read_file(&dir.join(format!("{stem}.draws")))?;
    let bc = l * p;
    let yc: usize = replicates.iter().sum();
    let mut beta = Array2::zeros((t, bc));
    let mut y = Array2::zeros((t, yc));
    let mut log_tau2 = Array1::zeros(t);
    let mut r = 0usize;
    for (i, raw) in draws_text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if r >= t {
            return Err(VcgpError::Format(format!(
                "line {lineno}: more than the declared {t} draw rows"
            )));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 1 + bc + yc {
            return Err(VcgpError::Format(format!(
                "line {lineno}: expected {} fields, found {}",
                1 + bc + yc,
                tokens.len()
            )));
        }
        log_tau2[r] = parse_f(tokens[0], lineno)?;
        for c in 0..bc {
            beta[[r, c]] = parse_f(tokens[1 + c], lineno)?;
        }
        for c in 0..yc {
            y[[r, c]] = parse_f(tokens[1 + bc + c], lineno)?;
        }
        r += 1;
    }
    if r != t {
        return Err(VcgpError::Format(format!(
            "{stem}.draws holds {r} rows, meta declares {t}"
        )));
    }
    let store = DrawStore {
        subset_id,
        p,
        test_points,
        replicates,
        beta,
        y,
        log_tau2,
    };
    let extras = fields
        .into_iter()
        .filter(|(k, _)| {
            !matches!(k.as_str(), "subset_id" | "p" | "t" | "l" | "replicates")
        })
        .collect();
    Ok((store, extras))
}

/// Subset ids present in a run directory, ascending.
pub fn list_subset_ids(dir: &Path) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| io_at(dir, e))?;
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(rest) = name.strip_prefix("subset_") {
            if let Some(id) = rest.strip_suffix(".meta") {
                ids.push(parse_u(id, 0)?);
            }
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

// -------------------------------------------------------- combined outputs

/// Persist combined draws under `combined_<method>`.
pub fn write_combined(dir: &Path, combined: &CombinedDraws, layout: &DrawStore) -> Result<()> {
    let store = DrawStore {
        subset_id: 0,
        p: layout.p,
        test_points: layout.test_points.clone(),
        replicates: layout.replicates.clone(),
        beta: combined.beta.clone(),
        y: combined.y.clone(),
        log_tau2: combined.log_tau2.clone(),
    };
    let mut extras = vec![("method", combined.method.name().to_string())];
    if let Some(iters) = combined.wasp_iterations {
        extras.push(("wasp_iterations", iters.to_string()));
    }
    write_store(dir, &format!("combined_{}", combined.method.name()), &store, &extras)
}

/// Persist averaged quantile curves under `combined_pie.quantiles`.
pub fn write_quantiles(dir: &Path, q: &QuantileSummary, layout: &DrawStore) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# vcgp quantiles").unwrap();
    writeln!(out, "p={}", layout.p).unwrap();
    writeln!(out, "l={}", layout.l()).unwrap();
    writeln!(
        out,
        "replicates={}",
        layout
            .replicates
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    )
    .unwrap();
    for (j, pt) in layout.test_points.iter().enumerate() {
        writeln!(
            out,
            "point_{j}={}",
            pt.coords.iter().map(|u| fmt_f(*u)).collect::<Vec<_>>().join(" ")
        )
        .unwrap();
    }
    writeln!(out, "[rows]").unwrap();
    for (i, prob) in q.probs.iter().enumerate() {
        let mut row = Vec::with_capacity(2 + q.beta.ncols() + q.y.ncols());
        row.push(fmt_f(*prob));
        row.extend(q.beta.row(i).iter().map(|v| fmt_f(*v)));
        row.extend(q.y.row(i).iter().map(|v| fmt_f(*v)));
        row.push(fmt_f(q.log_tau2[i]));
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    write_file(&dir.join("combined_pie.quantiles"), &out)
}

/// Read quantile curves plus the layout needed to interpret the columns:
/// (summary, p, test points, replicates).
pub fn read_quantiles(
    dir: &Path,
) -> Result<(QuantileSummary, usize, Vec<IndexPoint>, Vec<usize>)> {
    let text = read_file(&dir.join("combined_pie.quantiles"))?;
    let mut p = None;
    let mut l = None;
    let mut replicates: Option<Vec<usize>> = None;
    let mut points: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut in_rows = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[rows]" {
            in_rows = true;
            continue;
        }
        if in_rows {
            rows.push(
                line.split_whitespace()
                    .map(|t| parse_f(t, lineno))
                    .collect::<Result<_>>()?,
            );
            continue;
        }
        let (k, v) = parse_kv_line(line, lineno)?;
        if let Some(idx) = k.strip_prefix("point_") {
            points.push((
                parse_u(idx, lineno)?,
                v.split_whitespace()
                    .map(|t| parse_f(t, lineno))
                    .collect::<Result<_>>()?,
            ));
        } else {
            match k.as_str() {
                "p" => p = Some(parse_u(&v, lineno)?),
                "l" => l = Some(parse_u(&v, lineno)?),
                "replicates" => replicates = Some(csv_u(&v, lineno)?),
                other => {
                    return Err(VcgpError::Format(format!(
                        "line {lineno}: unknown quantile field '{other}'"
                    )))
                }
            }
        }
    }
    let p = p.ok_or_else(|| VcgpError::Format("quantile file lacks p".into()))?;
    let l = l.ok_or_else(|| VcgpError::Format("quantile file lacks l".into()))?;
    let replicates =
        replicates.ok_or_else(|| VcgpError::Format("quantile file lacks replicates".into()))?;
    points.sort_by_key(|(j, _)| *j);
    let test_points: Vec<IndexPoint> = points
        .into_iter()
        .map(|(_, coords)| IndexPoint::new(coords))
        .collect();
    if test_points.len() != l || replicates.len() != l {
        return Err(VcgpError::Format("quantile layout inconsistent".into()));
    }
    let bc = l * p;
    let yc: usize = replicates.iter().sum();
    let want = 2 + bc + yc;
    let nrows = rows.len();
    let mut probs = Vec::with_capacity(nrows);
    let mut beta = Array2::zeros((nrows, bc));
    let mut y = Array2::zeros((nrows, yc));
    let mut log_tau2 = Array1::zeros(nrows);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != want {
            return Err(VcgpError::Format(format!(
                "quantile row {r}: expected {want} fields, found {}",
                row.len()
            )));
        }
        probs.push(row[0]);
        for c in 0..bc {
            beta[[r, c]] = row[1 + c];
        }
        for c in 0..yc {
            y[[r, c]] = row[1 + bc + c];
        }
        log_tau2[r] = row[1 + bc + yc];
    }
    Ok((
        QuantileSummary {
            probs,
            beta,
            y,
            log_tau2,
        },
        p,
        test_points,
        replicates,
    ))
}

// ------------------------------------------------------- plan and manifest

pub fn write_plan(dir: &Path, plan: &SubsetPlan, seed: u64) -> Result<()> {
    let mut out = String::new();
    writeln!(
        out,
        "# vcgp plan n={} k={} m={} seed={seed}",
        plan.n,
        plan.k(),
        plan.m()
    )
    .unwrap();
    for (j, subset) in plan.subsets.iter().enumerate() {
        writeln!(
            out,
            "subset {j}: {}",
            subset
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        )
        .unwrap();
    }
    write_file(&dir.join("plan.txt"), &out)
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| io_at(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Hash every file in the run directory (sorted, manifest excluded) and
/// write `manifest.kv` last, after the header pairs.
pub fn write_manifest(dir: &Path, header: &[(String, String)]) -> Result<()> {
    let mut names: Vec<String> = Vec::new();
    let entries = std::fs::read_dir(dir)
        .map_err(|e| io_at(dir, e))?;
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "manifest.kv" {
            continue;
        }
        if entry
            .file_type()
            ?
            .is_file()
        {
            names.push(name);
        }
    }
    names.sort();
    let mut out = String::new();
    writeln!(out, "# vcgp manifest").unwrap();
    for (k, v) in header {
        writeln!(out, "{k}={v}").unwrap();
    }
    for name in names {
        writeln!(out, "file_{name}={}", sha256_hex(&dir.join(&name))?).unwrap();
    }
    write_file(&dir.join("manifest.kv"), &out)
}

/// Wall-clock records live next to, not inside, the run directory so reruns
/// of the same configuration stay byte-identical.
pub fn timings_path(run_dir: &Path) -> PathBuf {
    let name = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    run_dir.with_file_name(format!("{name}.timings.kv"))
}
