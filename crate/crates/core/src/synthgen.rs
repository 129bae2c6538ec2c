//! Synthetic matrix-normal cohorts with a known differential network.
//!
//! A block-structured spatial graph (hub stars or small-world rings) fixes
//! the support of a base precision matrix for each group; the control
//! group's base flips the sign of every off-diagonal entry in a few blocks,
//! and each subject perturbs its group's base. Temporal covariances are
//! shared within a group.

use std::ops::Range;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::seed::{rng_from, stream};
use crate::types::{CohortDataset, EdgeIndexMap, Label, SubjectMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Hub,
    SmallWorld,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialGraph {
    p: usize,
    adjacency: Vec<bool>,
    kind: GraphKind,
    blocks: Vec<Range<usize>>,
}

impl SpatialGraph {
    fn empty(p: usize, kind: GraphKind, blocks: Vec<Range<usize>>) -> Self {
        Self {
            p,
            adjacency: vec![false; p * p],
            kind,
            blocks,
        }
    }

    fn set(&mut self, i: usize, j: usize, on: bool) {
        debug_assert_ne!(i, j);
        self.adjacency[i * self.p + j] = on;
        self.adjacency[j * self.p + i] = on;
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.p + j]
    }

    /// Edges as 0-based (i, j), i < j, in canonical edge order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        EdgeIndexMap::new(self.p)
            .pairs()
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a).count() / 2
    }

    pub fn block_of(&self, node: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&node))
    }
}

/// Equal-size blocks, remainder added to the final block.
fn partition(p: usize, n_blocks: usize) -> Result<Vec<Range<usize>>> {
    if n_blocks == 0 || n_blocks > p {
        return domain(format!("cannot split {p} nodes into {n_blocks} blocks"));
    }
    let size = p / n_blocks;
    Ok((0..n_blocks)
        .map(|b| {
            let start = b * size;
            let end = if b + 1 == n_blocks { p } else { start + size };
            start..end
        })
        .collect())
}

/// Disjoint stars: the first node of each block is its hub.
pub fn gen_hub_graph(p: usize, n_blocks: usize) -> Result<SpatialGraph> {
    let blocks = partition(p, n_blocks)?;
    let mut g = SpatialGraph::empty(p, GraphKind::Hub, blocks.clone());
    for b in blocks {
        for leaf in b.start + 1..b.end {
            g.set(b.start, leaf, true);
        }
    }
    Ok(g)
}

/// Disjoint Watts–Strogatz rings (neighbor radius 1), rewired within block.
pub fn gen_small_world_graph<R: Rng + ?Sized>(
    p: usize,
    n_subgraphs: usize,
    rewire_prob: f64,
    rng: &mut R,
) -> Result<SpatialGraph> {
    if !(0.0..=1.0).contains(&rewire_prob) {
        return domain(format!("rewire probability {rewire_prob} outside [0,1]"));
    }
    let blocks = partition(p, n_subgraphs)?;
    if let Some(b) = blocks.iter().find(|b| b.len() < 3) {
        return domain(format!("small-world block of size {} (need >= 3)", b.len()));
    }
    let mut g = SpatialGraph::empty(p, GraphKind::SmallWorld, blocks.clone());
    for b in &blocks {
        let s = b.len();
        let ring: Vec<(usize, usize)> = (0..s).map(|k| (b.start + k, b.start + (k + 1) % s)).collect();
        for &(u, v) in &ring {
            g.set(u, v, true);
        }
        for &(u, v) in &ring {
            if !g.has_edge(u, v) || !rng.random_bool(rewire_prob) {
                continue;
            }
            let options: Vec<usize> = b.clone().filter(|&w| w != u && !g.has_edge(u, w)).collect();
            if options.is_empty() {
                continue;
            }
            let w = options[rng.random_range(0..options.len())];
            g.set(u, v, false);
            g.set(u, w, true);
        }
    }
    Ok(g)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Ω ← Ω + (|λ_min(Ω)| + offset)·I.
pub fn pd_shift(m: &mut DMatrix<f64>, offset: f64) {
    let shift = min_eigenvalue(m).abs() + offset;
    for i in 0..m.nrows() {
        m[(i, i)] += shift;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    p: usize,
    /// Differential edges (0-based, canonical order) with Δ = Ω_case − Ω_control.
    edges: Vec<(usize, usize, f64)>,
    pub flipped_blocks: Vec<usize>,
    pub omega_case: DMatrix<f64>,
    pub omega_control: DMatrix<f64>,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Flat edge indices of the differential support, ascending.
    pub fn support(&self) -> Vec<usize> {
        let map = EdgeIndexMap::new(self.p);
        self.edges
            .iter()
            .map(|&(i, j, _)| map.index(i, j).expect("truth edge in range"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseSettings {
    pub fill_low: f64,
    pub fill_high: f64,
    pub flipped_blocks: usize,
    pub pd_offset: f64,
}

impl Default for BaseSettings {
    fn default() -> Self {
        Self {
            fill_low: 1.0,
            fill_high: 2.0,
            flipped_blocks: 2,
            pd_offset: 0.5,
        }
    }
}

/// Case and control base precisions and their differential support.
pub fn gen_base_precisions<R: Rng + ?Sized>(
    graph: &SpatialGraph,
    settings: &BaseSettings,
    rng: &mut R,
) -> Result<GroundTruth> {
    let n_blocks = graph.blocks().len();
    if settings.flipped_blocks == 0 || n_blocks < settings.flipped_blocks.max(2) {
        return domain(format!(
            "need at least {} blocks to flip {}, graph has {n_blocks}",
            settings.flipped_blocks.max(2),
            settings.flipped_blocks
        ));
    }
    if !(settings.fill_low > 0.0 && settings.fill_high >= settings.fill_low) {
        return domain("fill support must satisfy 0 < low <= high");
    }
    let p = graph.p();
    let mut case = DMatrix::zeros(p, p);
    for (i, j) in graph.edges() {
        let magnitude = rng.random_range(settings.fill_low..=settings.fill_high);
        let v = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        case[(i, j)] = v;
        case[(j, i)] = v;
    }
    let mut flipped: Vec<usize> = sample(rng, n_blocks, settings.flipped_blocks).into_vec();
    flipped.sort_unstable();
    let mut control = case.clone();
    for &b in &flipped {
        let r = graph.blocks()[b].clone();
        for i in r.clone() {
            for j in r.clone() {
                if i != j {
                    control[(i, j)] = -control[(i, j)];
                }
            }
        }
    }
    pd_shift(&mut case, settings.pd_offset);
    pd_shift(&mut control, settings.pd_offset);

    let edges = graph
        .edges()
        .into_iter()
        .filter(|&(i, _)| flipped.contains(&graph.block_of(i).expect("node in a block")))
        .map(|(i, j)| (i, j, case[(i, j)] - control[(i, j)]))
        .collect();
    Ok(GroundTruth {
        p,
        edges,
        flipped_blocks: flipped,
        omega_case: case,
        omega_control: control,
    })
}

/// Base plus a symmetric N(0, variance) perturbation on the base's
/// off-diagonal support, re-shifted if it is no longer safely PD.
pub fn gen_individual_precision<R: Rng + ?Sized>(
    base: &DMatrix<f64>,
    perturb_var: f64,
    pd_offset: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(perturb_var >= 0.0) {
        return domain(format!("perturbation variance {perturb_var} is negative"));
    }
    let p = base.nrows();
    let mut out = base.clone();
    if perturb_var == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, perturb_var.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    for j in 0..p {
        for i in 0..j {
            if base[(i, j)] != 0.0 {
                let v = base[(i, j)] + normal.sample(rng);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
    }
    if min_eigenvalue(&out) <= 1e-3 {
        pd_shift(&mut out, pd_offset);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "lowercase")]
pub enum TemporalKind {
    /// σ_ij = ρ^|i−j|
    Ar(f64),
    /// σ_ij = 1/(|i−j| + 1) within the bandwidth, else 0
    Bc(usize),
}

pub fn gen_temporal_cov(kind: TemporalKind, q: usize) -> Result<DMatrix<f64>> {
    if q == 0 {
        return domain("q must be positive");
    }
    match kind {
        TemporalKind::Ar(rho) => {
            if !(rho > 0.0 && rho < 1.0) {
                return domain(format!("AR parameter {rho} outside (0,1)"));
            }
            Ok(DMatrix::from_fn(q, q, |i, j| rho.powi(i.abs_diff(j) as i32)))
        }
        TemporalKind::Bc(band) => Ok(DMatrix::from_fn(q, q, |i, j| {
            let lag = i.abs_diff(j);
            if lag <= band {
                1.0 / (lag as f64 + 1.0)
            } else {
                0.0
            }
        })),
    }
}

/// Matrix-normal sampler with zero mean and covariance Σ_T ⊗ Σ_S.
#[derive(Debug, Clone)]
pub struct MatrixNormal {
    spatial_factor: DMatrix<f64>,
    temporal_factor_t: DMatrix<f64>,
}

impl MatrixNormal {
    pub fn new(temporal: &DMatrix<f64>, spatial: &DMatrix<f64>) -> Result<Self> {
        let chol = |m: &DMatrix<f64>, what: &str| {
            m.clone()
                .cholesky()
                .map(|c| c.l())
                .ok_or_else(|| Error::Numeric(format!("{what} covariance is not positive definite")))
        };
        Ok(Self {
            spatial_factor: chol(spatial, "spatial")?,
            temporal_factor_t: chol(temporal, "temporal")?.transpose(),
        })
    }

    /// A·Z·Bᵀ with A·Aᵀ = Σ_S, B·Bᵀ = Σ_T and Z iid standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let p = self.spatial_factor.nrows();
        let q = self.temporal_factor_t.nrows();
        let z = DMatrix::from_fn(p, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.spatial_factor * z * &self.temporal_factor_t
    }
}

pub fn sample_matrix_normal<R: Rng + ?Sized>(
    temporal: &DMatrix<f64>,
    spatial: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    Ok(MatrixNormal::new(temporal, spatial)?.sample(rng))
}

/// Every constant of the simulation design. Defaults: hub graphs with 5
/// blocks, small worlds of 10 rings rewired with probability 0.05.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: u8,
    pub p: usize,
    pub q: usize,
    pub n1: usize,
    pub n2: usize,
    pub n1_test: usize,
    pub n2_test: usize,
    pub hub_blocks: usize,
    pub small_world_subgraphs: usize,
    pub rewire_prob: f64,
    pub ar_case: f64,
    pub ar_control: f64,
    pub bc_case: usize,
    pub bc_control: usize,
    pub base: BaseSettings,
    pub perturb_var: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: 1,
            p: 100,
            q: 50,
            n1: 30,
            n2: 30,
            n1_test: 30,
            n2_test: 30,
            hub_blocks: 5,
            small_world_subgraphs: 10,
            rewire_prob: 0.05,
            ar_case: 0.4,
            ar_control: 0.5,
            bc_case: 4,
            bc_control: 6,
            base: BaseSettings::default(),
            perturb_var: 0.02,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn graph_kind(&self) -> GraphKind {
        match self.scenario {
            1 | 3 => GraphKind::Hub,
            _ => GraphKind::SmallWorld,
        }
    }

    /// (case, control) temporal structures.
    pub fn temporal_kinds(&self) -> (TemporalKind, TemporalKind) {
        match self.scenario {
            1 | 2 => (TemporalKind::Ar(self.ar_case), TemporalKind::Ar(self.ar_control)),
            _ => (TemporalKind::Bc(self.bc_case), TemporalKind::Bc(self.bc_control)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.scenario) {
            return domain(format!("scenario must be 1-4, got {}", self.scenario));
        }
        if self.p < 2 || self.q < 3 {
            return domain(format!("need p >= 2 and q >= 3, got p={} q={}", self.p, self.q));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return domain("training groups must be nonempty");
        }
        if !(0.0..=1.0).contains(&self.rewire_prob) {
            return domain("rewire probability outside [0,1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub train: CohortDataset,
    pub test: CohortDataset,
    pub truth: GroundTruth,
    pub graph: SpatialGraph,
}

struct SubjectSpec {
    id: String,
    label: Label,
    split: u64,
    index: u64,
}

fn subject_specs(split: &str, split_id: u64, n_case: usize, n_control: usize) -> Vec<SubjectSpec> {
    let case = (0..n_case).map(|k| SubjectSpec {
        id: format!("{split}_case_{:04}", k + 1),
        label: Label::Case,
        split: split_id,
        index: k as u64,
    });
    let control = (0..n_control).map(|k| SubjectSpec {
        id: format!("{split}_control_{:04}", k + 1),
        label: Label::Control,
        split: split_id,
        index: k as u64,
    });
    case.chain(control).collect()
}

fn symmetric_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("precision matrix is not positive definite".into()))?
        .inverse();
    for j in 0..inv.ncols() {
        for i in 0..j {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Ok(inv)
}

/// Builds the full train/test cohorts for one scenario; a pure function of
/// the configuration (including its seed).
pub fn gen_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let graph = match config.graph_kind() {
        GraphKind::Hub => gen_hub_graph(config.p, config.hub_blocks)?,
        GraphKind::SmallWorld => gen_small_world_graph(
            config.p,
            config.small_world_subgraphs,
            config.rewire_prob,
            &mut rng_from(config.seed, &[stream::GRAPH]),
        )?,
    };
    let truth = gen_base_precisions(&graph, &config.base, &mut rng_from(config.seed, &[stream::BASE]))?;
    let (case_kind, control_kind) = config.temporal_kinds();
    let temporal_case = gen_temporal_cov(case_kind, config.q)?;
    let temporal_control = gen_temporal_cov(control_kind, config.q)?;

    let draw = |spec: &SubjectSpec| -> Result<SubjectMatrix> {
        let group = spec.label.as_u8() as u64;
        let mut rng = rng_from(config.seed, &[stream::SUBJECT, spec.split, group, spec.index]);
        let (base, temporal) = match spec.label {
            Label::Case => (&truth.omega_case, &temporal_case),
            Label::Control => (&truth.omega_control, &temporal_control),
        };
        let omega = gen_individual_precision(base, config.perturb_var, config.base.pd_offset, &mut rng)?;
        let spatial = symmetric_inverse(&omega)?;
        let x = sample_matrix_normal(temporal, &spatial, &mut rng)?;
        SubjectMatrix::new(spec.id.clone(), spec.label, x)
    };
    let build = |specs: Vec<SubjectSpec>| -> Result<CohortDataset> {
        let subjects = specs.par_iter().map(draw).collect::<Result<Vec<_>>>()?;
        CohortDataset::new(subjects, Vec::new())
    };
    let train = build(subject_specs("train", 0, config.n1, config.n2))?;
    let test = build(subject_specs("test", 1, config.n1_test, config.n2_test))?;
    Ok(Scenario {
        train,
        test,
        truth,
        graph,
    })
}
