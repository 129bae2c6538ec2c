//! Elastic-net penalized logistic regression with unpenalized confounders.
//!
//! Objective (no ½ on the ridge term):
//!
//! ```text
//! (1/n) Σ_k [ log(1 + e^{s_k}) − z_k s_k ] + λ(α‖β‖₁ + (1 − α)‖β‖₂²),
//! s_k = b₀ + ηᵀQ_k + βᵀW_k
//! ```
//!
//! Solved by iteratively reweighted least squares with cyclic coordinate
//! descent on the quadratic model and step-halving on the true objective,
//! so the objective never increases across outer iterations. Inputs are
//! centered when an intercept is fitted; that is an exact
//! reparametrization, so coefficients come back on the original scale and
//! the penalty is on the original β.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::seed::Rng;
use rand::seq::SliceRandom;

/// Smallest α used when computing λ_max for a pure ridge fit.
const ALPHA_FLOOR: f64 = 1e-3;
const WEIGHT_FLOOR: f64 = 1e-5;
const PROB_CLIP: f64 = 1e-10;

/// Training design: confounders Q (n×M), features W (n×d), labels z ∈ {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct PlrData {
    q: DMatrix<f64>,
    w: DMatrix<f64>,
    z: Vec<f64>,
    feature_index: Vec<usize>,
}

impl PlrData {
    pub fn new(q: DMatrix<f64>, w: DMatrix<f64>, z: Vec<f64>) -> Result<Self> {
        let d = w.ncols();
        Self::with_feature_index(q, w, z, (0..d).collect())
    }

    /// `feature_index[c]` names the edge behind column c of W.
    pub fn with_feature_index(q: DMatrix<f64>, w: DMatrix<f64>, z: Vec<f64>, feature_index: Vec<usize>) -> Result<Self> {
        let n = z.len();
        if w.nrows() != n || q.nrows() != n {
            return Err(Error::Dimension(format!(
                "{n} labels, {} feature rows, {} confounder rows",
                w.nrows(),
                q.nrows()
            )));
        }
        if feature_index.len() != w.ncols() {
            return Err(Error::Dimension("feature index length differs from feature count".into()));
        }
        if z.iter().any(|&v| v != 0.0 && v != 1.0) {
            return domain("labels must be 0 or 1");
        }
        if w.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return domain("design contains non-finite values");
        }
        Ok(Self { q, w, z, feature_index })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn n_features(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_confounders(&self) -> usize {
        self.q.ncols()
    }

    pub fn labels(&self) -> &[f64] {
        &self.z
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn confounders(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn feature_index(&self) -> &[usize] {
        &self.feature_index
    }

    /// Rows in the given order; repeats allowed (bootstrap samples).
    pub fn rows(&self, idx: &[usize]) -> Self {
        Self {
            q: self.q.select_rows(idx),
            w: self.w.select_rows(idx),
            z: idx.iter().map(|&i| self.z[i]).collect(),
            feature_index: self.feature_index.clone(),
        }
    }

    /// Keeps the given columns of W (positions into the current columns).
    pub fn columns(&self, cols: &[usize]) -> Self {
        Self {
            q: self.q.clone(),
            w: self.w.select_columns(cols),
            z: self.z.clone(),
            feature_index: cols.iter().map(|&c| self.feature_index[c]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlrModel {
    pub intercept: f64,
    pub eta: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub alpha: f64,
    pub fit_intercept: bool,
    pub feature_index: Vec<usize>,
}

impl PlrModel {
    pub fn zero(data: &PlrData, lambda: f64, alpha: f64, fit_intercept: bool) -> Self {
        Self {
            intercept: 0.0,
            eta: vec![0.0; data.n_confounders()],
            beta: vec![0.0; data.n_features()],
            lambda,
            alpha,
            fit_intercept,
            feature_index: data.feature_index.clone(),
        }
    }

    /// Edge indices with nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.feature_index
            .iter()
            .zip(&self.beta)
            .filter(|(_, &b)| b != 0.0)
            .map(|(&k, _)| k)
            .collect()
    }

    pub fn linear_score(&self, q: &[f64], w: &[f64]) -> Result<f64> {
        if q.len() != self.eta.len() || w.len() != self.beta.len() {
            return Err(Error::Dimension(format!(
                "model expects {} confounders and {} features, got {} and {}",
                self.eta.len(),
                self.beta.len(),
                q.len(),
                w.len()
            )));
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        Ok(self.intercept + dot(&self.eta, q) + dot(&self.beta, w))
    }

    /// P(Z = 1) for one design row (columns as in training).
    pub fn predict_proba(&self, q: &[f64], w: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.linear_score(q, w)?))
    }

    /// P(Z = 1) from a full edge-feature vector, using `feature_index`.
    pub fn predict_proba_full(&self, q: &[f64], edges: &[f64]) -> Result<f64> {
        let w: Vec<f64> = self
            .feature_index
            .iter()
            .map(|&k| {
                edges
                    .get(k)
                    .copied()
                    .ok_or_else(|| Error::Dimension(format!("edge {k} missing from feature vector")))
            })
            .collect::<Result<_>>()?;
        self.predict_proba(q, &w)
    }
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^s) without overflow.
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn check_model(model: &PlrModel, data: &PlrData) -> Result<()> {
    if model.eta.len() != data.n_confounders() || model.beta.len() != data.n_features() {
        return Err(Error::Dimension(format!(
            "model has {} confounders / {} features, data has {} / {}",
            model.eta.len(),
            model.beta.len(),
            data.n_confounders(),
            data.n_features()
        )));
    }
    Ok(())
}

fn linear_predictor(model: &PlrModel, data: &PlrData) -> DVector<f64> {
    let mut s = &data.w * DVector::from_column_slice(&model.beta);
    if data.n_confounders() > 0 {
        s += &data.q * DVector::from_column_slice(&model.eta);
    }
    s.add_scalar_mut(model.intercept);
    s
}

pub fn penalty(beta: &[f64], lambda: f64, alpha: f64) -> f64 {
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let l2: f64 = beta.iter().map(|b| b * b).sum();
    lambda * (alpha * l1 + (1.0 - alpha) * l2)
}

/// Mean negative log-likelihood (the smooth part of the objective).
pub fn smooth_loss(model: &PlrModel, data: &PlrData) -> Result<f64> {
    check_model(model, data)?;
    let s = linear_predictor(model, data);
    let n = data.n() as f64;
    Ok(s.iter().zip(&data.z).map(|(&s, &z)| softplus(s) - z * s).sum::<f64>() / n)
}

pub fn plr_objective(model: &PlrModel, data: &PlrData) -> Result<f64> {
    Ok(smooth_loss(model, data)? + penalty(&model.beta, model.lambda, model.alpha))
}

/// Gradient of the smooth part: (intercept, η, β).
pub fn smooth_gradient(model: &PlrModel, data: &PlrData) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_model(model, data)?;
    let n = data.n() as f64;
    let s = linear_predictor(model, data);
    let resid = DVector::from_iterator(data.n(), s.iter().zip(&data.z).map(|(&s, &z)| sigmoid(s) - z));
    let g0 = resid.sum() / n;
    let geta = (data.q.tr_mul(&resid) / n).iter().copied().collect();
    let gbeta = (data.w.tr_mul(&resid) / n).iter().copied().collect();
    Ok((g0, geta, gbeta))
}

/// Largest violation of the subgradient optimality conditions.
pub fn kkt_violation(model: &PlrModel, data: &PlrData) -> Result<f64> {
    let (g0, geta, gbeta) = smooth_gradient(model, data)?;
    let (lam, alpha) = (model.lambda, model.alpha);
    let mut worst: f64 = if model.fit_intercept { g0.abs() } else { 0.0 };
    for g in geta {
        worst = worst.max(g.abs());
    }
    for (g, &b) in gbeta.iter().zip(&model.beta) {
        let v = if b == 0.0 {
            (g.abs() - lam * alpha).max(0.0)
        } else {
            (g + 2.0 * lam * (1.0 - alpha) * b + lam * alpha * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    Ok(worst)
}

/// argmin_x ½a(x − b)² + λα|x| + λ(1 − α)x².
pub fn elastic_net_threshold(a: f64, b: f64, lambda: f64, alpha: f64) -> f64 {
    let shrunk = (a * b).abs() - lambda * alpha;
    if shrunk <= 0.0 {
        0.0
    } else {
        b.signum() * shrunk / (a + 2.0 * lambda * (1.0 - alpha))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlrFitSettings {
    /// Outer (reweighting) iterations.
    pub max_iterations: usize,
    /// Coordinate descent sweeps per outer iteration.
    pub max_inner_sweeps: usize,
    /// Convergence threshold on the largest coefficient change.
    pub tolerance: f64,
    pub path_length: usize,
    pub lambda_min_ratio: f64,
    pub alpha_grid: Vec<f64>,
    pub cv_folds: usize,
    pub fit_intercept: bool,
}

impl Default for PlrFitSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            max_inner_sweeps: 10_000,
            tolerance: 1e-7,
            path_length: 50,
            lambda_min_ratio: 0.01,
            alpha_grid: vec![0.5, 0.75, 1.0],
            cv_folds: 5,
            fit_intercept: true,
        }
    }
}

impl PlrFitSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.max_inner_sweeps == 0 || self.path_length == 0 || self.cv_folds < 2 {
            return domain("iteration counts and path length must be positive, folds >= 2");
        }
        if !(self.tolerance > 0.0) || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return domain("tolerance must be positive and lambda_min_ratio in (0,1)");
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return domain("alpha grid must be nonempty with values in [0,1]");
        }
        Ok(())
    }
}

/// Per-outer-iteration objective values of one fit.
#[derive(Debug, Clone, Default)]
pub struct FitTrace {
    pub objectives: Vec<f64>,
}

struct Centered {
    w: DMatrix<f64>,
    q: DMatrix<f64>,
    w_mean: Vec<f64>,
    q_mean: Vec<f64>,
}

impl Centered {
    fn new(data: &PlrData, center: bool) -> Self {
        let mean = |m: &DMatrix<f64>| -> Vec<f64> {
            if center && m.nrows() > 0 {
                m.column_iter().map(|c| c.mean()).collect()
            } else {
                vec![0.0; m.ncols()]
            }
        };
        let shift = |m: &DMatrix<f64>, mu: &[f64]| {
            let mut out = m.clone();
            for (mut col, &mu) in out.column_iter_mut().zip(mu) {
                col.add_scalar_mut(-mu);
            }
            out
        };
        let (w_mean, q_mean) = (mean(&data.w), mean(&data.q));
        Self {
            w: shift(&data.w, &w_mean),
            q: shift(&data.q, &q_mean),
            w_mean,
            q_mean,
        }
    }

    /// Intercept in centered coordinates ↔ original coordinates.
    fn offset(&self, eta: &[f64], beta: &[f64]) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        dot(&self.q_mean, eta) + dot(&self.w_mean, beta)
    }
}

struct Coefs {
    b0: f64,
    eta: Vec<f64>,
    beta: Vec<f64>,
}

impl Coefs {
    fn max_diff(&self, other: &Coefs) -> f64 {
        let mut m = (self.b0 - other.b0).abs();
        for (a, b) in self.eta.iter().zip(&other.eta).chain(self.beta.iter().zip(&other.beta)) {
            m = m.max((a - b).abs());
        }
        m
    }

    fn lerp(&self, other: &Coefs, t: f64) -> Coefs {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
        Coefs {
            b0: self.b0 + t * (other.b0 - self.b0),
            eta: mix(&self.eta, &other.eta),
            beta: mix(&self.beta, &other.beta),
        }
    }
}

struct Solver<'a> {
    c: Centered,
    z: &'a [f64],
    n: f64,
    lambda: f64,
    alpha: f64,
    fit_intercept: bool,
}

impl Solver<'_> {
    fn predictor(&self, x: &Coefs) -> DVector<f64> {
        let mut s = &self.c.w * DVector::from_column_slice(&x.beta);
        if !x.eta.is_empty() {
            s += &self.c.q * DVector::from_column_slice(&x.eta);
        }
        s.add_scalar_mut(x.b0);
        s
    }

    fn objective(&self, x: &Coefs) -> f64 {
        let s = self.predictor(x);
        s.iter().zip(self.z).map(|(&s, &z)| softplus(s) - z * s).sum::<f64>() / self.n
            + penalty(&x.beta, self.lambda, self.alpha)
    }

    /// Coordinate descent on the weighted quadratic model around `x`.
    fn quadratic_step(&self, x: &Coefs, max_sweeps: usize, tol: f64) -> Coefs {
        let n = self.z.len();
        let s = self.predictor(x);
        let mut wts = vec![0.0; n];
        let mut r = vec![0.0; n];
        for k in 0..n {
            let p = sigmoid(s[k]);
            let w = (p * (1.0 - p)).max(WEIGHT_FLOOR);
            wts[k] = w;
            r[k] = (self.z[k] - p) / w;
        }
        let mut out = Coefs {
            b0: x.b0,
            eta: x.eta.clone(),
            beta: x.beta.clone(),
        };
        let d = out.beta.len();
        let curv = |col: &[f64]| col.iter().zip(&wts).map(|(x, w)| w * x * x).sum::<f64>() / self.n;
        let a_beta: Vec<f64> = (0..d).map(|j| curv(self.c.w.column(j).as_slice())).collect();
        let a_eta: Vec<f64> = (0..out.eta.len()).map(|m| curv(self.c.q.column(m).as_slice())).collect();
        let a0 = wts.iter().sum::<f64>() / self.n;

        let update_unpenalized = |col: Option<&[f64]>, a: f64, value: &mut f64, r: &mut [f64]| -> f64 {
            if a <= 0.0 {
                return 0.0;
            }
            let g = match col {
                Some(col) => col.iter().zip(r.iter()).zip(&wts).map(|((x, r), w)| w * x * r).sum::<f64>(),
                None => r.iter().zip(&wts).map(|(r, w)| w * r).sum::<f64>(),
            } / self.n;
            let delta = g / a;
            if delta != 0.0 {
                *value += delta;
                match col {
                    Some(col) => r.iter_mut().zip(col).for_each(|(r, x)| *r -= delta * x),
                    None => r.iter_mut().for_each(|r| *r -= delta),
                }
            }
            delta.abs()
        };
        let update_beta = |j: usize, beta: &mut [f64], r: &mut [f64]| -> f64 {
            let a = a_beta[j];
            if a <= 0.0 {
                return 0.0;
            }
            let col = self.c.w.column(j);
            let col = col.as_slice();
            let g = col.iter().zip(r.iter()).zip(&wts).map(|((x, r), w)| w * x * r).sum::<f64>() / self.n;
            let old = beta[j];
            let new = elastic_net_threshold(a, old + g / a, self.lambda, self.alpha);
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                r.iter_mut().zip(col).for_each(|(r, x)| *r -= delta * x);
            }
            delta.abs()
        };

        let mut sweeps = 0;
        loop {
            // full sweep
            let mut change = 0.0f64;
            if self.fit_intercept {
                change = change.max(update_unpenalized(None, a0, &mut out.b0, &mut r));
            }
            for m in 0..out.eta.len() {
                let col = self.c.q.column(m);
                change = change.max(update_unpenalized(Some(col.as_slice()), a_eta[m], &mut out.eta[m], &mut r));
            }
            for j in 0..d {
                change = change.max(update_beta(j, &mut out.beta, &mut r));
            }
            sweeps += 1;
            if change < tol || sweeps >= max_sweeps {
                break;
            }
            // active-set sweeps
            let active: Vec<usize> = (0..d).filter(|&j| out.beta[j] != 0.0).collect();
            loop {
                let mut change = 0.0f64;
                if self.fit_intercept {
                    change = change.max(update_unpenalized(None, a0, &mut out.b0, &mut r));
                }
                for m in 0..out.eta.len() {
                    let col = self.c.q.column(m);
                    change = change.max(update_unpenalized(Some(col.as_slice()), a_eta[m], &mut out.eta[m], &mut r));
                }
                for &j in &active {
                    change = change.max(update_beta(j, &mut out.beta, &mut r));
                }
                sweeps += 1;
                if change < tol || sweeps >= max_sweeps {
                    break;
                }
            }
            if sweeps >= max_sweeps {
                break;
            }
        }
        out
    }
}

fn fit_from(
    data: &PlrData,
    lambda: f64,
    alpha: f64,
    settings: &PlrFitSettings,
    start: Option<&PlrModel>,
    trace: Option<&mut FitTrace>,
) -> Result<PlrModel> {
    if !(lambda >= 0.0) || !(0.0..=1.0).contains(&alpha) {
        return domain(format!("invalid lambda {lambda} or alpha {alpha}"));
    }
    if data.n() < 2 {
        return domain("need at least 2 observations");
    }
    let fit_intercept = settings.fit_intercept;
    let c = Centered::new(data, fit_intercept);
    let mut x = match start {
        Some(m) => {
            check_model(m, data)?;
            Coefs {
                b0: if fit_intercept { m.intercept + c.offset(&m.eta, &m.beta) } else { 0.0 },
                eta: m.eta.clone(),
                beta: m.beta.clone(),
            }
        }
        None => Coefs {
            b0: 0.0,
            eta: vec![0.0; data.n_confounders()],
            beta: vec![0.0; data.n_features()],
        },
    };
    let solver = Solver {
        c,
        z: &data.z,
        n: data.n() as f64,
        lambda,
        alpha,
        fit_intercept,
    };
    let mut trace = trace;
    let mut obj = solver.objective(&x);
    if let Some(t) = trace.as_deref_mut() {
        t.objectives.push(obj);
    }
    let inner_tol = settings.tolerance * 0.1;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        iterations += 1;
        let proposal = solver.quadratic_step(&x, settings.max_inner_sweeps, inner_tol);
        let mut candidate = proposal;
        let mut cand_obj = solver.objective(&candidate);
        let mut t = 1.0;
        while cand_obj > obj && t > 1e-10 {
            t *= 0.5;
            candidate = x.lerp(&candidate, 0.5);
            cand_obj = solver.objective(&candidate);
        }
        if cand_obj > obj {
            // no descent direction left at this precision
            converged = true;
            break;
        }
        let change = x.max_diff(&candidate);
        x = candidate;
        obj = cand_obj;
        if let Some(t) = trace.as_deref_mut() {
            t.objectives.push(obj);
        }
        if change < settings.tolerance {
            converged = true;
            break;
        }
    }

    let b0 = if fit_intercept { x.b0 - solver.c.offset(&x.eta, &x.beta) } else { 0.0 };
    let model = PlrModel {
        intercept: b0,
        eta: x.eta,
        beta: x.beta,
        lambda,
        alpha,
        fit_intercept,
        feature_index: data.feature_index.clone(),
    };
    if !converged {
        let mut last = vec![model.intercept];
        last.extend(&model.eta);
        last.extend(&model.beta);
        return Err(Error::NotConverged {
            iterations,
            max_kkt_violation: kkt_violation(&model, data)?,
            last_coefficients: last,
        });
    }
    Ok(model)
}

fn check_both_labels(data: &PlrData) -> Result<()> {
    let ones = data.z.iter().filter(|&&z| z == 1.0).count();
    if ones == 0 || ones == data.n() {
        return domain("both labels must be present");
    }
    Ok(())
}

/// Fits the model at one (λ, α).
pub fn fit_plr(data: &PlrData, lambda: f64, alpha: f64, settings: &PlrFitSettings) -> Result<PlrModel> {
    settings.validate()?;
    check_both_labels(data)?;
    fit_from(data, lambda, alpha, settings, None, None)
}

/// As [`fit_plr`], recording the objective after every outer iteration.
pub fn fit_plr_traced(
    data: &PlrData,
    lambda: f64,
    alpha: f64,
    settings: &PlrFitSettings,
) -> Result<(PlrModel, FitTrace)> {
    settings.validate()?;
    check_both_labels(data)?;
    let mut trace = FitTrace::default();
    let model = fit_from(data, lambda, alpha, settings, None, Some(&mut trace))?;
    Ok((model, trace))
}

/// Smallest λ at which β = 0 satisfies the optimality conditions.
pub fn lambda_max(data: &PlrData, alpha: f64, settings: &PlrFitSettings) -> Result<f64> {
    let reduced = data.columns(&[]);
    let base = fit_from(&reduced, 0.0, alpha, settings, None, None)?;
    let full = PlrModel {
        beta: vec![0.0; data.n_features()],
        feature_index: data.feature_index.clone(),
        ..base
    };
    let (_, _, g) = smooth_gradient(&full, data)?;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(gmax / alpha.max(ALPHA_FLOOR))
}

/// Descending log-spaced λ values from λ_max.
pub fn lambda_path(lambda_max: f64, length: usize, min_ratio: f64) -> Vec<f64> {
    if length == 1 {
        return vec![lambda_max];
    }
    (0..length)
        .map(|l| lambda_max * min_ratio.powf(l as f64 / (length - 1) as f64))
        .collect()
}

/// Fits every λ in order, each warm-started from the previous solution.
pub fn fit_path(data: &PlrData, lambdas: &[f64], alpha: f64, settings: &PlrFitSettings) -> Result<Vec<PlrModel>> {
    let mut out: Vec<PlrModel> = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let model = fit_from(data, lam, alpha, settings, out.last(), None)?;
        out.push(model);
    }
    Ok(out)
}

/// Binomial deviance of a model on a dataset, summed over observations.
pub fn deviance(model: &PlrModel, data: &PlrData) -> Result<f64> {
    check_model(model, data)?;
    let s = linear_predictor(model, data);
    Ok(s.iter()
        .zip(&data.z)
        .map(|(&s, &z)| {
            let p = sigmoid(s).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            -2.0 * (z * p.ln() + (1.0 - z) * (1.0 - p).ln())
        })
        .sum())
}

/// Stratified fold ids: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[f64], k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let mut folds = vec![0; labels.len()];
    for class in [1.0, 0.0] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return domain(format!(
                "class {class} has {} members, fewer than {k} folds",
                idx.len()
            ));
        }
        idx.shuffle(rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda: f64,
    pub alpha: f64,
    pub model: PlrModel,
    /// Mean held-out deviance per (α index, λ index).
    pub cv_deviance: Vec<Vec<f64>>,
    pub lambdas: Vec<Vec<f64>>,
}

/// Grid search over α × λ path by stratified K-fold held-out deviance,
/// then a refit on all data at the selected pair.
pub fn cv_tune(data: &PlrData, settings: &PlrFitSettings, rng: &mut Rng) -> Result<CvResult> {
    settings.validate()?;
    check_both_labels(data)?;
    let k = settings.cv_folds;
    let folds = stratified_folds(&data.z, k, rng)?;
    let split: Vec<(PlrData, PlrData)> = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..data.n()).filter(|&i| folds[i] != f).collect();
            let held: Vec<usize> = (0..data.n()).filter(|&i| folds[i] == f).collect();
            (data.rows(&train), data.rows(&held))
        })
        .collect();

    let paths: Vec<Vec<f64>> = settings
        .alpha_grid
        .iter()
        .map(|&a| {
            lambda_max(data, a, settings).map(|lm| lambda_path(lm, settings.path_length, settings.lambda_min_ratio))
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..paths.len()).flat_map(|a| (0..k).map(move |f| (a, f))).collect();
    let fold_dev: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(a, f)| {
            let (train, held) = &split[f];
            let models = fit_path(train, &paths[a], settings.alpha_grid[a], settings)?;
            models.iter().map(|m| deviance(m, held)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let n = data.n() as f64;
    let mut cv_deviance = vec![vec![0.0; settings.path_length]; paths.len()];
    for (&(a, _), dev) in cells.iter().zip(&fold_dev) {
        for (acc, d) in cv_deviance[a].iter_mut().zip(dev) {
            *acc += d / n;
        }
    }
    let mut best = (0, 0, f64::INFINITY);
    for (a, row) in cv_deviance.iter().enumerate() {
        for (l, &v) in row.iter().enumerate() {
            if v < best.2 {
                best = (a, l, v);
            }
        }
    }
    let (a, l, _) = best;
    let alpha = settings.alpha_grid[a];
    let model = fit_path(data, &paths[a][..=l], alpha, settings)?
        .pop()
        .expect("path is nonempty");
    Ok(CvResult {
        lambda: paths[a][l],
        alpha,
        model,
        cv_deviance,
        lambdas: paths,
    })
}

#[cfg(test)]
mod tests;
