//! Persistence: delimited text tables and key-value sidecars.
//!
//! Reference tables are written as comma-delimited text with a header row
//! `theta_<name>,...,s_<name>,...` and one draw per row. Floats use the
//! shortest decimal representation that round-trips exactly, so re-reading a
//! file reproduces the table bit for bit. Each table carries a metadata
//! sidecar at `<path>.meta` in a `key: value` format recording the format
//! tag, model id, seed and row count. Adjusted samples persist the same way
//! (parameter columns only) with a provenance sidecar.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::regress::AdjustedSample;
use crate::table::ReferenceTable;

pub const TABLE_FORMAT: &str = "abclin.table/1";
pub const SAMPLE_FORMAT: &str = "abclin.sample/1";
pub const BLIN_FORMAT: &str = "abclin.blin/1";

/// Sidecar metadata for a reference table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableMeta {
    pub model: String,
    pub seed: u64,
    pub n: usize,
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    os.into()
}

/// Write `key: value` lines.
pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        writeln!(text, "{k}: {v}").expect("string write");
    }
    fs::write(path, text)?;
    Ok(())
}

/// Read `key: value` lines; blank lines and `#` comments are skipped.
/// Repeated keys keep every occurrence in order.
pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| format_error(path, format!("line {}: missing ':'", lineno + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn kv_map(pairs: &[(String, String)]) -> HashMap<&str, &str> {
    pairs
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect()
}

/// Persist a table and its metadata sidecar (`<path>.meta`).
pub fn write_table(table: &ReferenceTable, path: &Path, model_id: &str) -> Result<()> {
    let mut text = String::new();
    let header: Vec<String> = table
        .param_names()
        .iter()
        .map(|n| format!("theta_{n}"))
        .chain(table.stat_names().iter().map(|n| format!("s_{n}")))
        .collect();
    writeln!(text, "{}", header.join(",")).expect("string write");
    for i in 0..table.n() {
        let mut row: Vec<String> = Vec::with_capacity(table.param_dim() + table.stat_dim());
        for j in 0..table.param_dim() {
            row.push(table.params()[(i, j)].to_string());
        }
        for j in 0..table.stat_dim() {
            row.push(table.stats()[(i, j)].to_string());
        }
        writeln!(text, "{}", row.join(",")).expect("string write");
    }
    fs::write(path, text)?;

    write_kv(
        &meta_path(path),
        &[
            ("format".into(), TABLE_FORMAT.into()),
            ("model".into(), model_id.into()),
            ("seed".into(), table.seed().to_string()),
            ("n".into(), table.n().to_string()),
        ],
    )
}

/// Read a table and its sidecar back.
pub fn read_table(path: &Path) -> Result<(ReferenceTable, TableMeta)> {
    let meta = read_table_meta(path)?;

    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_error(path, "empty file"))?;
    let mut param_names = Vec::new();
    let mut stat_names = Vec::new();
    for col in header.split(',') {
        if let Some(name) = col.strip_prefix("theta_") {
            if !stat_names.is_empty() {
                return Err(format_error(path, "theta_ column after s_ columns"));
            }
            param_names.push(name.to_string());
        } else if let Some(name) = col.strip_prefix("s_") {
            stat_names.push(name.to_string());
        } else {
            return Err(format_error(
                path,
                format!("column '{col}' lacks theta_/s_ prefix"),
            ));
        }
    }
    let (p, d) = (param_names.len(), stat_names.len());
    let mut values: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in line.split(',') {
            let v: f64 = tok.parse().map_err(|_| {
                format_error(path, format!("line {}: bad number '{tok}'", lineno + 2))
            })?;
            values.push(v);
            count += 1;
        }
        if count != p + d {
            return Err(format_error(
                path,
                format!("line {}: {count} fields, expected {}", lineno + 2, p + d),
            ));
        }
        n += 1;
    }
    if n != meta.n {
        return Err(format_error(
            path,
            format!("sidecar says n = {}, file has {n} rows", meta.n),
        ));
    }
    let params = DMatrix::from_fn(n, p, |i, j| values[i * (p + d) + j]);
    let stats = DMatrix::from_fn(n, d, |i, j| values[i * (p + d) + p + j]);
    let table = ReferenceTable::from_parts(params, stats, meta.seed, param_names, stat_names)?;
    Ok((table, meta))
}

/// Read just the metadata sidecar of a table.
pub fn read_table_meta(path: &Path) -> Result<TableMeta> {
    let side = meta_path(path);
    let pairs = read_kv(&side)?;
    let map = kv_map(&pairs);
    if map.get("format") != Some(&TABLE_FORMAT) {
        return Err(format_error(
            &side,
            format!("format tag is not {TABLE_FORMAT}"),
        ));
    }
    let get = |key: &str| -> Result<&str> {
        map.get(key)
            .copied()
            .ok_or_else(|| format_error(&side, format!("missing key '{key}'")))
    };
    Ok(TableMeta {
        model: get("model")?.to_string(),
        seed: get("seed")?
            .parse()
            .map_err(|_| format_error(&side, "seed is not an integer"))?,
        n: get("n")?
            .parse()
            .map_err(|_| format_error(&side, "n is not an integer"))?,
    })
}

/// Provenance recorded next to a persisted sample.
#[derive(Debug, Clone, Default)]
pub struct SampleMeta {
    pub method: String,
    pub source_table: String,
    pub keep: usize,
    pub kernel: String,
    pub epsilon: f64,
    pub ridge: f64,
}

/// Persist adjusted draws (parameter columns only) plus provenance sidecar.
pub fn write_sample(
    sample: &AdjustedSample,
    param_names: &[String],
    path: &Path,
    meta: &SampleMeta,
) -> Result<()> {
    if param_names.len() != sample.param_dim() {
        return Err(Error::invalid(
            "sample write: wrong number of parameter names",
        ));
    }
    let mut text = String::new();
    let header: Vec<String> = param_names.iter().map(|n| format!("theta_{n}")).collect();
    writeln!(text, "{}", header.join(",")).expect("string write");
    for i in 0..sample.n_rows() {
        let row: Vec<String> = (0..sample.param_dim())
            .map(|j| sample.values[(i, j)].to_string())
            .collect();
        writeln!(text, "{}", row.join(",")).expect("string write");
    }
    fs::write(path, text)?;

    let mut pairs: Vec<(String, String)> = vec![
        ("format".into(), SAMPLE_FORMAT.into()),
        ("method".into(), meta.method.clone()),
        ("adjustment".into(), sample.adjustment.name().into()),
        ("source_table".into(), meta.source_table.clone()),
        ("n".into(), sample.n_rows().to_string()),
        ("keep".into(), meta.keep.to_string()),
        ("kernel".into(), meta.kernel.clone()),
        ("epsilon".into(), meta.epsilon.to_string()),
        ("ridge".into(), meta.ridge.to_string()),
        (
            "replaced_params".into(),
            sample
                .replaced_params
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        (
            "out_of_support".into(),
            sample.out_of_support.len().to_string(),
        ),
    ];
    for w in &sample.warnings {
        pairs.push(("warning".into(), w.clone()));
    }
    write_kv(&meta_path(path), &pairs)
}

/// Values, parameter names and sidecar pairs of a persisted sample.
pub type SampleData = (DMatrix<f64>, Vec<String>, Vec<(String, String)>);

/// Read a persisted sample: values, parameter names, and the sidecar pairs.
pub fn read_sample(path: &Path) -> Result<SampleData> {
    let pairs = read_kv(&meta_path(path))?;
    let map = kv_map(&pairs);
    if map.get("format") != Some(&SAMPLE_FORMAT) {
        return Err(format_error(
            path,
            format!("format tag is not {SAMPLE_FORMAT}"),
        ));
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_error(path, "empty file"))?;
    let names: Vec<String> = header
        .split(',')
        .map(|col| {
            col.strip_prefix("theta_")
                .map(str::to_string)
                .ok_or_else(|| format_error(path, format!("column '{col}' lacks theta_ prefix")))
        })
        .collect::<Result<_>>()?;
    let p = names.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        for tok in line.split(',') {
            values.push(tok.parse::<f64>().map_err(|_| {
                format_error(path, format!("line {}: bad number '{tok}'", lineno + 2))
            })?);
        }
        n += 1;
    }
    if values.len() != n * p {
        return Err(format_error(path, "ragged rows"));
    }
    Ok((
        DMatrix::from_fn(n, p, |i, j| values[i * p + j]),
        names,
        pairs,
    ))
}

/// Write a Bayes linear summary as a key-value report: adjusted means,
/// standard deviations, and the correlation matrix row by row.
pub fn write_blin_report(
    summary: &crate::blin::BayesLinearSummary,
    param_names: &[String],
    path: &Path,
) -> Result<()> {
    let p = summary.adjusted_mean.len();
    if param_names.len() != p {
        return Err(Error::invalid(
            "report write: wrong number of parameter names",
        ));
    }
    let join = |vals: Vec<String>| vals.join(",");
    let sds: Vec<f64> = (0..p)
        .map(|j| summary.adjusted_var[(j, j)].max(0.0).sqrt())
        .collect();
    let mut pairs: Vec<(String, String)> = vec![
        ("format".into(), BLIN_FORMAT.into()),
        ("params".into(), param_names.join(",")),
        (
            "s_obs".into(),
            join(summary.s_obs.iter().map(|v| v.to_string()).collect()),
        ),
        (
            "adjusted_mean".into(),
            join(
                summary
                    .adjusted_mean
                    .iter()
                    .map(|v| v.to_string())
                    .collect(),
            ),
        ),
        (
            "adjusted_sd".into(),
            join(sds.iter().map(|v| v.to_string()).collect()),
        ),
    ];
    for a in 0..p {
        let row: Vec<String> = (0..p)
            .map(|b| {
                let denom = sds[a] * sds[b];
                let r = if denom > 0.0 {
                    summary.adjusted_var[(a, b)] / denom
                } else {
                    0.0
                };
                r.to_string()
            })
            .collect();
        pairs.push((format!("corr_{}", param_names[a]), join(row)));
    }
    write_kv(path, &pairs)
}
