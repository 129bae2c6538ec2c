//! On-disk formats. Matrices are headerless CSV, tables are TSV with a
//! header row, manifests and models are JSON. Floats are written in the
//! shortest form that parses back to the same value, so every format
//! round-trips byte for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use sdncmv_core::ensemble::EnsembleModel;
use sdncmv_core::evalmetrics::PrPoint;
use sdncmv_core::synthgen::{GroundTruth, ScenarioConfig};
use sdncmv_core::{CohortDataset, EdgeIndexMap, FeatureTable, Label, SubjectMatrix};

use crate::config::RunConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| anyhow!("writing {}: {}", path.display(), e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().with_context(|| format!("bad number {s:?} in {what}"))
}

/// Builds delimited text in memory with the given separator.
fn table_bytes(sep: u8, header: Option<&[String]>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(sep)
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

fn write_tsv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    write_atomic(path, &table_bytes(b'\t', Some(&header), rows)?)
}

/// Header and rows of a TSV file.
pub fn read_tsv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("reading {}", path.display()))?;
    Ok((header, rows))
}

pub fn matrix_csv(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    table_bytes(b',', None, m.row_iter().map(|r| r.iter().map(|&v| fmt(v)).collect()))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, &matrix_csv(m)?)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        rows.push(rec.iter().map(|s| parse_f64(s, &path.display().to_string())).collect::<Result<_>>()?);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    ensure!(rows.iter().all(|r| r.len() == ncols), "ragged matrix in {}", path.display());
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub label: Label,
    /// Matrix file relative to the dataset directory.
    pub path: String,
    pub confounders: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub subjects: Vec<SubjectRecord>,
    pub seed: Option<u64>,
    pub scenario: Option<ScenarioConfig>,
}

pub fn write_dataset(dir: &Path, data: &CohortDataset, seed: Option<u64>, scenario: Option<&ScenarioConfig>) -> Result<()> {
    let (p, q) = data.dims().ok_or_else(|| anyhow!("empty dataset"))?;
    let mut subjects = Vec::with_capacity(data.len());
    for (k, s) in data.subjects().iter().enumerate() {
        let rel = format!("matrices/{}.csv", s.id());
        write_matrix(&dir.join(&rel), s.data())?;
        subjects.push(SubjectRecord {
            id: s.id().to_string(),
            label: s.label(),
            path: rel,
            confounders: data.confounders().get(k).cloned().unwrap_or_default(),
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        p,
        q,
        m: data.n_confounders(),
        subjects,
        seed,
        scenario: scenario.copied(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(CohortDataset, DatasetManifest)> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_FILE))?;
    ensure!(
        manifest.format_version == FORMAT_VERSION,
        "unsupported dataset format version {}",
        manifest.format_version
    );
    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    let mut confounders = Vec::with_capacity(manifest.subjects.len());
    for rec in &manifest.subjects {
        let m = read_matrix(&dir.join(&rec.path))?;
        ensure!(
            (m.nrows(), m.ncols()) == (manifest.p, manifest.q),
            "{}: expected {}x{} matrix, found {}x{}",
            rec.path,
            manifest.p,
            manifest.q,
            m.nrows(),
            m.ncols()
        );
        ensure!(rec.confounders.len() == manifest.m, "{}: expected {} confounders", rec.id, manifest.m);
        subjects.push(SubjectMatrix::new(rec.id.clone(), rec.label, m)?);
        confounders.push(rec.confounders.clone());
    }
    let confounders = if manifest.m == 0 { Vec::new() } else { confounders };
    Ok((CohortDataset::new(subjects, confounders)?, manifest))
}

/// Differential edges as 1-based `i j delta` rows.
pub fn write_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    write_tsv(
        path,
        &["i", "j", "delta"],
        truth
            .edges()
            .iter()
            .map(|&(i, j, d)| vec![(i + 1).to_string(), (j + 1).to_string(), fmt(d)]),
    )
}

/// 0-based (i, j, delta) with i < j.
pub fn read_truth(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let (header, rows) = read_tsv(path)?;
    ensure!(header == ["i", "j", "delta"], "{}: expected header i j delta", path.display());
    rows.iter()
        .map(|r| {
            ensure!(r.len() == 3, "{}: expected 3 columns", path.display());
            let i: usize = r[0].parse()?;
            let j: usize = r[1].parse()?;
            ensure!(i >= 1 && i < j, "{}: invalid edge ({i}, {j})", path.display());
            Ok((i - 1, j - 1, parse_f64(&r[2], "truth")?))
        })
        .collect()
}

pub fn feature_header(map: &EdgeIndexMap, m: usize) -> Vec<String> {
    let mut h = vec!["id".to_string(), "label".to_string()];
    h.extend((1..=m).map(|c| format!("conf_{c}")));
    h.extend(map.pairs().map(|(i, j)| format!("w_{}_{}", i + 1, j + 1)));
    h
}

pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let header = feature_header(table.edge_map(), table.n_confounders());
    let rows = (0..table.len()).map(|k| {
        let mut r = vec![table.ids()[k].clone(), table.labels()[k].as_u8().to_string()];
        r.extend(table.confounder_row(k).into_iter().map(fmt));
        r.extend(table.edge_row(k).into_iter().map(fmt));
        r
    });
    write_atomic(path, &table_bytes(b'\t', Some(&header), rows)?)
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let (header, rows) = read_tsv(path)?;
    ensure!(header.len() >= 2 && header[0] == "id" && header[1] == "label", "{}: bad header", path.display());
    let m = header.iter().filter(|h| h.starts_with("conf_")).count();
    let d = header.len() - 2 - m;
    let map = EdgeIndexMap::from_edge_count(d)?;
    ensure!(header == feature_header(&map, m), "{}: unexpected column names", path.display());
    let n = rows.len();
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut conf = DMatrix::zeros(n, m);
    let mut edges = DMatrix::zeros(n, d);
    for (k, r) in rows.iter().enumerate() {
        ensure!(r.len() == header.len(), "{}: row {} has {} columns", path.display(), k + 1, r.len());
        ids.push(r[0].clone());
        let l: u8 = r[1].parse().with_context(|| format!("bad label {:?}", r[1]))?;
        labels.push(Label::try_from(l).map_err(anyhow::Error::msg)?);
        for c in 0..m {
            conf[(k, c)] = parse_f64(&r[2 + c], "features")?;
        }
        for c in 0..d {
            edges[(k, c)] = parse_f64(&r[2 + m + c], "features")?;
        }
    }
    Ok(FeatureTable::new(ids, labels, conf, edges)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLogRow {
    pub id: String,
    pub ok: bool,
    pub lambda: Option<f64>,
    pub density: Option<f64>,
    pub attainable: Option<bool>,
    pub message: String,
}

pub fn write_feature_log(path: &Path, rows: &[FeatureLogRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    write_tsv(
        path,
        &["id", "status", "lambda", "density", "attainable", "message"],
        rows.iter().map(|r| {
            vec![
                r.id.clone(),
                if r.ok { "ok" } else { "failed" }.to_string(),
                opt(r.lambda),
                opt(r.density),
                r.attainable.map(|a| a.to_string()).unwrap_or_default(),
                r.message.clone(),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub config: RunConfig,
    pub ensemble: EnsembleModel,
}

pub fn write_model(path: &Path, model: &ModelArtifact) -> Result<()> {
    write_json(path, model)
}

pub fn read_model(path: &Path) -> Result<ModelArtifact> {
    let m: ModelArtifact = read_json(path)?;
    if m.format_version != FORMAT_VERSION {
        bail!("unsupported model format version {}", m.format_version);
    }
    Ok(m)
}

/// 1-based `i j count` rows.
pub fn write_edges(path: &Path, edges: &[(usize, usize, usize)]) -> Result<()> {
    write_tsv(
        path,
        &["i", "j", "count"],
        edges
            .iter()
            .map(|&(i, j, c)| vec![(i + 1).to_string(), (j + 1).to_string(), c.to_string()]),
    )
}

pub fn write_scree(path: &Path, scree: &[(usize, usize)]) -> Result<()> {
    write_tsv(
        path,
        &["tau", "edges"],
        scree.iter().map(|&(t, e)| vec![t.to_string(), e.to_string()]),
    )
}

pub fn write_pr_curve(path: &Path, points: &[PrPoint]) -> Result<()> {
    write_tsv(
        path,
        &["tau", "recall", "precision"],
        points
            .iter()
            .map(|p| vec![p.tau.to_string(), fmt(p.recall), fmt(p.precision)]),
    )
}

pub fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    write_tsv(path, header, rows)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_json(path, value)
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path)
}

pub fn float(x: f64) -> String {
    fmt(x)
}

pub fn dataset_dir(base: &Path, split: &str) -> PathBuf {
    base.join(split)
}
