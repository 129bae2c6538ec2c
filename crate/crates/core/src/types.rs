//! Shared domain types and the canonical edge ordering.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Group membership. `Case` is the disease group and encodes as 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Control = 0,
    Case = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Control),
            1 => Ok(Label::Case),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// One subject's p×q observation: rows are regions, columns are time points.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectMatrix {
    id: String,
    label: Label,
    data: DMatrix<f64>,
}

impl SubjectMatrix {
    pub fn new(id: impl Into<String>, label: Label, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return domain(format!("need at least 2 regions, got {}", data.nrows()));
        }
        if data.ncols() < 3 {
            return domain(format!("need at least 3 time points, got {}", data.ncols()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return domain("subject matrix contains non-finite entries");
        }
        Ok(Self {
            id: id.into(),
            label,
            data,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Number of regions.
    pub fn p(&self) -> usize {
        self.data.nrows()
    }

    /// Number of time points.
    pub fn q(&self) -> usize {
        self.data.ncols()
    }
}

/// A cohort of subjects with optional confounders (one vector per subject).
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    subjects: Vec<SubjectMatrix>,
    confounders: Vec<Vec<f64>>,
}

impl CohortDataset {
    /// Builds a cohort. Pass an empty `confounders` to mean "no confounders".
    pub fn new(subjects: Vec<SubjectMatrix>, confounders: Vec<Vec<f64>>) -> Result<Self> {
        let confounders = if confounders.is_empty() {
            vec![Vec::new(); subjects.len()]
        } else {
            confounders
        };
        if confounders.len() != subjects.len() {
            return Err(Error::Dimension(format!(
                "{} confounder vectors for {} subjects",
                confounders.len(),
                subjects.len()
            )));
        }
        if let Some(first) = subjects.first() {
            let (p, q) = (first.p(), first.q());
            if let Some(bad) = subjects.iter().find(|s| s.p() != p || s.q() != q) {
                return Err(Error::Dimension(format!(
                    "subject {} is {}x{}, expected {p}x{q}",
                    bad.id(),
                    bad.p(),
                    bad.q()
                )));
            }
        }
        let m = confounders.first().map_or(0, Vec::len);
        if confounders.iter().any(|c| c.len() != m) {
            return Err(Error::Dimension("confounder vectors differ in length".into()));
        }
        Ok(Self {
            subjects,
            confounders,
        })
    }

    pub fn subjects(&self) -> &[SubjectMatrix] {
        &self.subjects
    }

    pub fn confounders(&self) -> &[Vec<f64>] {
        &self.confounders
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.subjects.iter().map(SubjectMatrix::label).collect()
    }

    /// Count of case (label 1) subjects.
    pub fn n1(&self) -> usize {
        self.subjects.iter().filter(|s| s.label() == Label::Case).count()
    }

    /// Count of control (label 0) subjects.
    pub fn n2(&self) -> usize {
        self.len() - self.n1()
    }

    pub fn n_confounders(&self) -> usize {
        self.confounders.first().map_or(0, Vec::len)
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.subjects.first().map(|s| (s.p(), s.q()))
    }
}

/// Column-stacked upper-triangle ordering of the region pairs (i, j), i < j.
///
/// For p = 4 the order is (1,2),(1,3),(2,3),(1,4),(2,4),(3,4). Indices here
/// are 0-based; [`edge_index`] is the 1-based user-facing entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeIndexMap {
    p: usize,
}

impl EdgeIndexMap {
    pub fn new(p: usize) -> Self {
        Self { p }
    }

    /// Recovers p from an edge count d = p(p−1)/2.
    pub fn from_edge_count(d: usize) -> Result<Self> {
        let p = ((1.0 + (1.0 + 8.0 * d as f64).sqrt()) / 2.0).round() as usize;
        if p * p.saturating_sub(1) / 2 != d {
            return domain(format!("{d} is not a triangular edge count"));
        }
        Ok(Self::new(p))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.p * self.p.saturating_sub(1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of the 0-based pair (i, j), i < j.
    pub fn index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= j || j >= self.p {
            return domain(format!("invalid pair ({i},{j}) for p={}", self.p));
        }
        Ok(j * (j - 1) / 2 + i)
    }

    /// 0-based pair at flat index k.
    pub fn pair(&self, k: usize) -> Result<(usize, usize)> {
        if k >= self.len() {
            return domain(format!("edge index {k} out of range for p={}", self.p));
        }
        // largest j with j(j-1)/2 <= k
        let mut j = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0) as usize;
        while j * (j - 1) / 2 > k {
            j -= 1;
        }
        while (j + 1) * j / 2 <= k {
            j += 1;
        }
        Ok((k - j * (j - 1) / 2, j))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.p).flat_map(|j| (0..j).map(move |i| (i, j)))
    }

    /// Reads the strict upper triangle of `m` in canonical order.
    pub fn vectorize(&self, m: &DMatrix<f64>) -> Vec<f64> {
        self.pairs().map(|(i, j)| m[(i, j)]).collect()
    }
}

/// 1-based region pair to 0-based flat index.
pub fn edge_index(i: usize, j: usize, p: usize) -> Result<usize> {
    if i == 0 || j == 0 {
        return domain("regions are 1-based");
    }
    EdgeIndexMap::new(p).index(i - 1, j - 1)
}

/// Sparse symmetric precision estimate with the λ that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    omega: DMatrix<f64>,
    lambda: f64,
    density: f64,
}

/// Magnitudes at or below this are exact zeros for support and density.
pub const ZERO_THRESHOLD: f64 = 1e-8;

impl PrecisionEstimate {
    /// Validates symmetry and diagonal positivity and records the density.
    pub fn new(omega: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let p = omega.nrows();
        if omega.ncols() != p {
            return Err(Error::Dimension("precision matrix must be square".into()));
        }
        for i in 0..p {
            if omega[(i, i)] <= 0.0 || !omega[(i, i)].is_finite() {
                return Err(Error::Numeric(format!(
                    "precision diagonal {i} is {} (must be positive)",
                    omega[(i, i)]
                )));
            }
            for j in 0..i {
                if omega[(i, j)] != omega[(j, i)] {
                    return Err(Error::Numeric("precision matrix is not symmetric".into()));
                }
            }
        }
        let density = off_diagonal_density(&omega);
        Ok(Self {
            omega,
            lambda,
            density,
        })
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Fraction of nonzero off-diagonal entries.
    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn p(&self) -> usize {
        self.omega.nrows()
    }
}

pub(crate) fn off_diagonal_density(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    if p < 2 {
        return 0.0;
    }
    let nnz = (0..p)
        .flat_map(|j| (0..p).map(move |i| (i, j)))
        .filter(|&(i, j)| i != j && m[(i, j)].abs() > ZERO_THRESHOLD)
        .count();
    nnz as f64 / (p * (p - 1)) as f64
}

/// Fisher-transformed partial correlations in [`EdgeIndexMap`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatureVector {
    values: Vec<f64>,
}

impl EdgeFeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        EdgeIndexMap::from_edge_count(values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("edge features must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// Subject-by-edge design: one row per subject with label, confounders
/// and edge features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    ids: Vec<String>,
    labels: Vec<Label>,
    confounders: DMatrix<f64>,
    edges: DMatrix<f64>,
    map: EdgeIndexMap,
}

impl FeatureTable {
    /// `confounders` is n×M (M may be 0), `edges` is n×p(p−1)/2.
    pub fn new(ids: Vec<String>, labels: Vec<Label>, confounders: DMatrix<f64>, edges: DMatrix<f64>) -> Result<Self> {
        let n = ids.len();
        if labels.len() != n || confounders.nrows() != n || edges.nrows() != n {
            return Err(Error::Dimension(format!(
                "{n} ids, {} labels, {} confounder rows, {} feature rows",
                labels.len(),
                confounders.nrows(),
                edges.nrows()
            )));
        }
        let map = EdgeIndexMap::from_edge_count(edges.ncols())?;
        if edges.iter().chain(confounders.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature table contains non-finite values".into()));
        }
        Ok(Self {
            ids,
            labels,
            confounders,
            edges,
            map,
        })
    }

    pub fn from_rows(
        ids: Vec<String>,
        labels: Vec<Label>,
        confounders: &[Vec<f64>],
        features: &[EdgeFeatureVector],
    ) -> Result<Self> {
        let n = ids.len();
        if features.len() != n || (!confounders.is_empty() && confounders.len() != n) {
            return Err(Error::Dimension("row counts differ".into()));
        }
        let d = features.first().map_or(0, |f| f.len());
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::Dimension("feature vectors differ in length".into()));
        }
        let m = confounders.first().map_or(0, |c| c.len());
        if confounders.iter().any(|c| c.len() != m) {
            return Err(Error::Dimension("confounder vectors differ in length".into()));
        }
        let edges = DMatrix::from_fn(n, d, |k, c| features[k].values()[c]);
        let conf = DMatrix::from_fn(n, m, |k, c| confounders[k][c]);
        Self::new(ids, labels, conf, edges)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn confounders(&self) -> &DMatrix<f64> {
        &self.confounders
    }

    pub fn edges(&self) -> &DMatrix<f64> {
        &self.edges
    }

    pub fn edge_map(&self) -> &EdgeIndexMap {
        &self.map
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_confounders(&self) -> usize {
        self.confounders.ncols()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.ncols()
    }

    pub fn confounder_row(&self, k: usize) -> Vec<f64> {
        self.confounders.row(k).iter().copied().collect()
    }

    pub fn edge_row(&self, k: usize) -> Vec<f64> {
        self.edges.row(k).iter().copied().collect()
    }
}
