//! Per-subject network strengths: sample covariance, CLIME precision
//! estimation tuned to a target density, partial correlations and
//! Fisher-transformed edge features.

mod simplex;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use simplex::ClimeColumnSolver;

use crate::error::{domain, Error, Result};
use crate::types::{
    CohortDataset, EdgeFeatureVector, EdgeIndexMap, FeatureTable, PrecisionEstimate, SubjectMatrix, ZERO_THRESHOLD,
};

/// Fisher inputs are clamped to ±(1 − FISHER_CLAMP).
pub const FISHER_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimeSettings {
    /// Target off-diagonal density φ of the estimated precision matrix.
    pub target_density: f64,
    /// Accepted distance between achieved density and φ.
    pub density_band: f64,
    /// Feasibility slack on ‖Σβ − e_i‖∞ ≤ λ.
    pub lp_tolerance: f64,
    pub max_bisection_steps: usize,
    /// Overrides the default bisection bracket `[lp_tolerance, λ_hi]`.
    pub lambda_bounds: Option<(f64, f64)>,
}

impl Default for ClimeSettings {
    fn default() -> Self {
        Self {
            target_density: 0.5,
            density_band: 0.05,
            lp_tolerance: 1e-7,
            max_bisection_steps: 30,
            lambda_bounds: None,
        }
    }
}

impl ClimeSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_density > 0.0 && self.target_density < 1.0) {
            return domain(format!("target density must be in (0,1), got {}", self.target_density));
        }
        if !(self.lp_tolerance > 0.0) || !(self.density_band > 0.0) {
            return domain("tolerances must be positive");
        }
        if let Some((lo, hi)) = self.lambda_bounds {
            if !(lo > 0.0 && hi > lo) {
                return domain(format!("invalid lambda bounds ({lo}, {hi})"));
            }
        }
        Ok(())
    }
}

/// Spatial sample covariance over the time columns, divisor q − 1.
pub fn sample_cov(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = x.ncols();
    if q < 2 {
        return domain(format!("sample covariance needs q >= 2, got {q}"));
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut s = &centered * centered.transpose() / (q as f64 - 1.0);
    // exact symmetry
    for j in 0..s.ncols() {
        for i in 0..j {
            let v = s[(i, j)];
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

fn check_square(sigma: &DMatrix<f64>) -> Result<usize> {
    if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "covariance must be square, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    Ok(sigma.nrows())
}

/// One CLIME column: `min ‖β‖₁ s.t. ‖Σβ − e_i‖∞ ≤ λ`. `column` is 0-based.
pub fn clime_column(sigma: &DMatrix<f64>, column: usize, lambda: f64, lp_tolerance: f64) -> Result<DVector<f64>> {
    let p = check_square(sigma)?;
    if column >= p {
        return domain(format!("column {column} out of range for p={p}"));
    }
    ClimeColumnSolver::new(sigma, column).solve(lambda, lp_tolerance)
}

/// Takes the smaller-magnitude entry of each symmetric pair; on ties the
/// upper (row < column) entry wins. Magnitudes at or below the zero
/// threshold become exact zeros.
pub fn symmetrize_min_magnitude(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let p = raw.nrows();
    let mut out = raw.clone();
    for j in 0..p {
        for i in 0..j {
            let (upper, lower) = (raw[(i, j)], raw[(j, i)]);
            let mut v = if upper.abs() <= lower.abs() { upper } else { lower };
            if v.abs() <= ZERO_THRESHOLD {
                v = 0.0;
            }
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Column solvers for one covariance matrix, reused across λ values.
#[derive(Debug, Clone)]
pub struct ClimeProblem {
    solvers: Vec<ClimeColumnSolver>,
    lp_tolerance: f64,
}

/// Raw (column-wise) and symmetrized CLIME solutions at one λ.
#[derive(Debug, Clone)]
pub struct ClimeSolution {
    pub raw: DMatrix<f64>,
    pub estimate: PrecisionEstimate,
}

impl ClimeProblem {
    pub fn new(sigma: &DMatrix<f64>, lp_tolerance: f64) -> Result<Self> {
        let p = check_square(sigma)?;
        Ok(Self {
            solvers: (0..p).map(|i| ClimeColumnSolver::new(sigma, i)).collect(),
            lp_tolerance,
        })
    }

    pub fn solve(&mut self, lambda: f64) -> Result<ClimeSolution> {
        let tol = self.lp_tolerance;
        let columns: Vec<Result<DVector<f64>>> = self
            .solvers
            .par_iter_mut()
            .map(|s| s.solve(lambda, tol))
            .collect();
        let p = self.solvers.len();
        let mut raw = DMatrix::zeros(p, p);
        for (i, col) in columns.into_iter().enumerate() {
            raw.set_column(i, &col?);
        }
        let estimate = PrecisionEstimate::new(symmetrize_min_magnitude(&raw), lambda)?;
        Ok(ClimeSolution { raw, estimate })
    }
}

/// Full CLIME estimate at a fixed λ.
pub fn clime(sigma: &DMatrix<f64>, lambda: f64, lp_tolerance: f64) -> Result<PrecisionEstimate> {
    Ok(ClimeProblem::new(sigma, lp_tolerance)?.solve(lambda)?.estimate)
}

#[derive(Debug, Clone)]
pub struct DensTuning {
    pub lambda: f64,
    pub estimate: PrecisionEstimate,
    /// Whether the achieved density is within the band around the target.
    pub attainable: bool,
    /// Every λ tried, with its density (None when the estimate failed).
    pub visited: Vec<(f64, Option<f64>)>,
}

/// Default upper end of the λ bracket: max_i Σ_ii, capped below 1 (at λ ≥ 1
/// the zero vector is feasible and the diagonal vanishes).
pub fn default_lambda_upper(sigma: &DMatrix<f64>) -> f64 {
    let max_diag = sigma.diagonal().iter().copied().fold(0.0, f64::max);
    max_diag.min(1.0 - 1e-6)
}

/// Bisects λ (geometrically) until the estimated density is within the
/// band around the target; returns the closest density visited.
pub fn tune_lambda_dens(sigma: &DMatrix<f64>, settings: &ClimeSettings) -> Result<DensTuning> {
    settings.validate()?;
    let mut problem = ClimeProblem::new(sigma, settings.lp_tolerance)?;
    let (mut lo, mut hi) = settings
        .lambda_bounds
        .unwrap_or((settings.lp_tolerance, default_lambda_upper(sigma)));
    if hi <= lo {
        hi = lo * 2.0;
    }
    let target = settings.target_density;
    let within = |d: f64| (d - target).abs() <= settings.density_band;

    let mut visited = Vec::new();
    let mut best: Option<(f64, PrecisionEstimate)> = None;
    let mut last_err: Option<Error> = None;

    let mut consider = |lambda: f64,
                        outcome: Result<ClimeSolution>,
                        visited: &mut Vec<(f64, Option<f64>)>,
                        best: &mut Option<(f64, PrecisionEstimate)>|
     -> Option<f64> {
        match outcome {
            Ok(sol) => {
                let d = sol.estimate.density();
                visited.push((lambda, Some(d)));
                let closer = best
                    .as_ref()
                    .is_none_or(|(_, b)| (d - target).abs() < (b.density() - target).abs());
                if closer {
                    *best = Some((lambda, sol.estimate));
                }
                Some(d)
            }
            Err(e) => {
                visited.push((lambda, None));
                last_err = Some(e);
                None
            }
        }
    };

    let top = problem.solve(hi);
    let top_infeasible = matches!(top, Err(Error::Infeasible { .. }));
    let top_density = consider(hi, top, &mut visited, &mut best);
    let done = top_density.is_some_and(within);
    if !done {
        if top_infeasible {
            // Nothing smaller can be feasible.
            lo = hi;
        }
        for _ in 0..settings.max_bisection_steps {
            if lo >= hi {
                break;
            }
            let mid = (lo * hi).sqrt();
            let outcome = problem.solve(mid);
            let infeasible = matches!(outcome, Err(Error::Infeasible { .. }));
            match consider(mid, outcome, &mut visited, &mut best) {
                Some(d) if within(d) => break,
                Some(d) if d > target => lo = mid,
                Some(_) => hi = mid,
                None if infeasible => lo = mid,
                // a vanished diagonal means λ is too large
                None => hi = mid,
            }
        }
    }

    match best {
        Some((lambda, estimate)) => Ok(DensTuning {
            lambda,
            attainable: within(estimate.density()),
            estimate,
            visited,
        }),
        None => Err(last_err.unwrap_or_else(|| Error::Numeric("no lambda evaluated".into()))),
    }
}

/// Scaled precision R = D^{-1/2} Ω D^{-1/2} (no sign flip).
pub fn partial_corr(omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = check_square(omega)?;
    let d: Vec<f64> = (0..p).map(|i| omega[(i, i)]).collect();
    if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Numeric(format!("nonpositive diagonal at {i}")));
    }
    let inv_sqrt: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            omega[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
        }
    }))
}

/// ½ ln((1 + r)/(1 − r)) with r clamped to keep the value finite.
pub fn fisher_transform(r: f64) -> f64 {
    let bound = 1.0 - FISHER_CLAMP;
    let a = r.abs().min(bound);
    (0.5 * ((1.0 + a) / (1.0 - a)).ln()).copysign(r)
}

pub fn fisher_features(r: &DMatrix<f64>, map: &EdgeIndexMap) -> Result<EdgeFeatureVector> {
    if r.nrows() != map.p() || r.ncols() != map.p() {
        return Err(Error::Dimension(format!(
            "partial correlation is {}x{}, map expects p={}",
            r.nrows(),
            r.ncols(),
            map.p()
        )));
    }
    EdgeFeatureVector::new(map.pairs().map(|(i, j)| fisher_transform(r[(i, j)])).collect())
}

#[derive(Debug, Clone)]
pub struct SubjectFeatures {
    pub features: EdgeFeatureVector,
    pub tuning: DensTuning,
}

impl SubjectFeatures {
    pub fn estimate(&self) -> &PrecisionEstimate {
        &self.tuning.estimate
    }
}

/// sample_cov → density-tuned CLIME → partial correlation → Fisher features.
pub fn subject_features(subject: &SubjectMatrix, settings: &ClimeSettings) -> Result<SubjectFeatures> {
    let sigma = sample_cov(subject.data())?;
    let tuning = tune_lambda_dens(&sigma, settings)?;
    let r = partial_corr(tuning.estimate.omega())?;
    let features = fisher_features(&r, &EdgeIndexMap::new(subject.p()))?;
    Ok(SubjectFeatures { features, tuning })
}

/// Features for every subject of a cohort, computed in parallel. Failures
/// stay per subject so callers can report them and carry on.
pub fn cohort_features(dataset: &CohortDataset, settings: &ClimeSettings) -> Vec<Result<SubjectFeatures>> {
    dataset
        .subjects()
        .par_iter()
        .map(|s| subject_features(s, settings))
        .collect()
}

/// Assembles a feature table, failing on the first subject error.
pub fn feature_table(dataset: &CohortDataset, features: &[Result<SubjectFeatures>]) -> Result<FeatureTable> {
    let rows: Vec<EdgeFeatureVector> = dataset
        .subjects()
        .iter()
        .zip(features)
        .map(|(s, f)| match f {
            Ok(f) => Ok(f.features.clone()),
            Err(e) => Err(Error::Numeric(format!("subject {}: {e}", s.id()))),
        })
        .collect::<Result<_>>()?;
    FeatureTable::from_rows(
        dataset.subjects().iter().map(|s| s.id().to_string()).collect(),
        dataset.labels(),
        dataset.confounders(),
        &rows,
    )
}
