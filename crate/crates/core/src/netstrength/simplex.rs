//! Dense simplex for one CLIME column.
//!
//! The column program `min ‖β‖₁ s.t. ‖Σβ − e_i‖∞ ≤ λ` is solved through its
//! dual
//!
//! ```text
//! max  (y − z)_i − λ·1ᵀ(y + z)
//! s.t. Σ(y − z) ≤ 1,  −Σ(y − z) ≤ 1,  y, z ≥ 0
//! ```
//!
//! whose origin is always feasible, so there is no phase one. β is read off
//! the shadow prices of the two constraint blocks. λ only enters the cost
//! row, and the cost row is kept as two parts (constant and λ-coefficient),
//! so an optimal basis for one λ is a feasible warm start for any other.
//!
//! Columns of `z` are the negatives of the columns of `y` (also after any
//! sequence of pivots), so only the `y` and slack columns are stored.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-11;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Y(usize),
    Z(usize),
    Slack(usize),
}

#[derive(Debug, Clone)]
pub struct ClimeColumnSolver {
    sigma: DMatrix<f64>,
    column: usize,
    p: usize,
    /// Row-major tableau, 2p rows by 3p stored columns (y columns then slacks).
    tab: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<Var>,
    /// c_Bᵀ T for the constant cost part, per stored column.
    g: Vec<f64>,
    /// c_Bᵀ T for the λ-coefficient cost part, per stored column.
    h: Vec<f64>,
}

impl ClimeColumnSolver {
    pub fn new(sigma: &DMatrix<f64>, column: usize) -> Self {
        let p = sigma.nrows();
        assert!(column < p, "column {column} out of range");
        let mut s = Self {
            sigma: sigma.clone(),
            column,
            p,
            tab: Vec::new(),
            rhs: Vec::new(),
            basis: Vec::new(),
            g: Vec::new(),
            h: Vec::new(),
        };
        s.cold_start();
        s
    }

    fn m(&self) -> usize {
        2 * self.p
    }

    fn width(&self) -> usize {
        3 * self.p
    }

    /// Original constraint column for a stored column index.
    fn original_column(&self, stored: usize) -> Vec<f64> {
        let p = self.p;
        let mut col = vec![0.0; 2 * p];
        if stored < p {
            for r in 0..p {
                col[r] = self.sigma[(r, stored)];
                col[p + r] = -self.sigma[(r, stored)];
            }
        } else {
            col[stored - p] = 1.0;
        }
        col
    }

    fn cold_start(&mut self) {
        let (m, w, p) = (self.m(), self.width(), self.p);
        self.tab = vec![0.0; m * w];
        for stored in 0..w {
            let col = self.original_column(stored);
            for r in 0..m {
                self.tab[r * w + stored] = col[r];
            }
        }
        self.rhs = vec![1.0; m];
        self.basis = (0..m).map(Var::Slack).collect();
        self.g = vec![0.0; w];
        self.h = vec![0.0; w];
        debug_assert_eq!(w, 3 * p);
    }

    fn costs(&self, var: Var) -> (f64, f64) {
        let delta = |j: usize| if j == self.column { 1.0 } else { 0.0 };
        match var {
            Var::Y(j) => (delta(j), 1.0),
            Var::Z(j) => (-delta(j), 1.0),
            Var::Slack(_) => (0.0, 0.0),
        }
    }

    /// Reduced cost split into (constant, λ-coefficient) parts: d = d0 − λ·d1.
    fn reduced_cost_parts(&self, var: Var) -> (f64, f64) {
        let (c0, c1) = self.costs(var);
        let (g, h) = match var {
            Var::Y(j) => (self.g[j], self.h[j]),
            Var::Z(j) => (-self.g[j], -self.h[j]),
            Var::Slack(r) => (self.g[self.p + r], self.h[self.p + r]),
        };
        (g - c0, h - c1)
    }

    fn reduced_cost(&self, var: Var, lambda: f64) -> f64 {
        let (d0, d1) = self.reduced_cost_parts(var);
        d0 - lambda * d1
    }

    fn stored_index(&self, var: Var) -> (usize, f64) {
        match var {
            Var::Y(j) => (j, 1.0),
            Var::Z(j) => (j, -1.0),
            Var::Slack(r) => (self.p + r, 1.0),
        }
    }

    fn tableau_entry(&self, row: usize, var: Var) -> f64 {
        let (c, sign) = self.stored_index(var);
        sign * self.tab[row * self.width() + c]
    }

    fn var_rank(&self, var: Var) -> usize {
        match var {
            Var::Y(j) => j,
            Var::Z(j) => self.p + j,
            Var::Slack(r) => 2 * self.p + r,
        }
    }

    fn candidates(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.p)
            .flat_map(|j| [Var::Y(j), Var::Z(j)])
            .chain((0..self.m()).map(Var::Slack))
    }

    fn pivot(&mut self, row: usize, var: Var, lambda_parts: (f64, f64)) {
        let w = self.width();
        let m = self.m();
        let piv = self.tableau_entry(row, var);
        let inv = 1.0 / piv;
        for c in 0..w {
            self.tab[row * w + c] *= inv;
        }
        self.rhs[row] *= inv;
        let (entering_col, sign) = self.stored_index(var);
        let (src_start, src_end) = (row * w, row * w + w);
        let pivot_row: Vec<f64> = self.tab[src_start..src_end].to_vec();
        let pivot_rhs = self.rhs[row];
        for r in 0..m {
            if r == row {
                continue;
            }
            let factor = sign * self.tab[r * w + entering_col];
            if factor == 0.0 {
                continue;
            }
            let dst = &mut self.tab[r * w..r * w + w];
            for (d, s) in dst.iter_mut().zip(&pivot_row) {
                *d -= factor * s;
            }
            self.rhs[r] -= factor * pivot_rhs;
            if self.rhs[r] < 0.0 && self.rhs[r] > -1e-12 {
                self.rhs[r] = 0.0;
            }
        }
        let (d0, d1) = lambda_parts;
        for c in 0..w {
            self.g[c] -= d0 * pivot_row[c];
            self.h[c] -= d1 * pivot_row[c];
        }
        self.basis[row] = var;
    }

    /// Rebuilds the tableau from the current basis by a fresh factorization.
    /// Falls back to the slack basis if the basis is singular or infeasible.
    fn refactor(&mut self) {
        let (m, w) = (self.m(), self.width());
        let mut b = DMatrix::zeros(m, m);
        for (r, &var) in self.basis.iter().enumerate() {
            let (c, sign) = self.stored_index(var);
            let col = self.original_column(c);
            for k in 0..m {
                b[(k, r)] = sign * col[k];
            }
        }
        let lu = b.lu();
        let mut a = DMatrix::zeros(m, w);
        for c in 0..w {
            let col = self.original_column(c);
            for k in 0..m {
                a[(k, c)] = col[k];
            }
        }
        let (Some(t), Some(rhs)) = (lu.solve(&a), lu.solve(&DVector::from_element(m, 1.0))) else {
            self.cold_start();
            return;
        };
        if rhs.iter().any(|&v| v < -1e-9) {
            self.cold_start();
            return;
        }
        for r in 0..m {
            for c in 0..w {
                self.tab[r * w + c] = t[(r, c)];
            }
            self.rhs[r] = rhs[r].max(0.0);
        }
        for c in 0..w {
            let (mut g, mut h) = (0.0, 0.0);
            for (r, &var) in self.basis.iter().enumerate() {
                let (c0, c1) = self.costs(var);
                g += c0 * t[(r, c)];
                h += c1 * t[(r, c)];
            }
            self.g[c] = g;
            self.h[c] = h;
        }
    }

    fn iterate(&mut self, lambda: f64) -> Result<()> {
        let m = self.m();
        let max_iter = 50 * (m + self.width());
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate_run > DEGENERATE_SWITCH;
            let mut entering: Option<(Var, f64)> = None;
            for var in self.candidates() {
                let d = self.reduced_cost(var, lambda);
                if d < -COST_TOL {
                    match entering {
                        None => entering = Some((var, d)),
                        Some((_, best)) if !bland && d < best => entering = Some((var, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((var, _)) = entering else {
                return Ok(());
            };

            let col_scale = (0..m)
                .map(|r| self.tableau_entry(r, var).abs())
                .fold(0.0, f64::max);
            let tol = PIVOT_TOL * col_scale.max(1.0);
            let mut leave: Option<(usize, f64, f64)> = None;
            for r in 0..m {
                let a = self.tableau_entry(r, var);
                if a > tol {
                    let ratio = self.rhs[r] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, best, best_a)) => {
                            if ratio < best - 1e-12 {
                                true
                            } else if ratio <= best + 1e-12 {
                                if bland {
                                    self.var_rank(self.basis[r]) < self.var_rank(self.basis[lr])
                                } else {
                                    a > best_a
                                }
                            } else {
                                false
                            }
                        }
                    };
                    if better {
                        leave = Some((r, ratio, a));
                    }
                }
            }
            let Some((row, ratio, _)) = leave else {
                return Err(self.unbounded_error(var, lambda));
            };
            degenerate_run = if ratio <= 1e-12 { degenerate_run + 1 } else { 0 };
            let parts = self.reduced_cost_parts(var);
            self.pivot(row, var, parts);
        }
        Err(Error::Numeric(format!(
            "simplex iteration limit reached for column {}",
            self.column
        )))
    }

    /// The dual is unbounded along the ray of `var`; for any λ' below
    /// c0·ray / c1·ray it stays unbounded, which lower-bounds the feasible λ.
    fn unbounded_error(&self, var: Var, lambda: f64) -> Error {
        let (mut num, mut den) = {
            let (c0, c1) = self.costs(var);
            (c0, c1)
        };
        for (r, &bv) in self.basis.iter().enumerate() {
            let step = -self.tableau_entry(r, var);
            let (c0, c1) = self.costs(bv);
            num += c0 * step;
            den += c1 * step;
        }
        let estimate = if den > 0.0 { (num / den).max(lambda) } else { lambda };
        Error::Infeasible {
            column: self.column,
            lambda,
            min_feasible_lambda: estimate,
        }
    }

    /// Shadow prices of the current basis, solved directly from Bᵀπ = c_B.
    fn polished_duals(&self, lambda: f64) -> Option<DVector<f64>> {
        let m = self.m();
        let mut bt = DMatrix::zeros(m, m);
        let mut cb = DVector::zeros(m);
        for (r, &var) in self.basis.iter().enumerate() {
            let (c, sign) = self.stored_index(var);
            let col = self.original_column(c);
            for k in 0..m {
                bt[(r, k)] = sign * col[k];
            }
            let (c0, c1) = self.costs(var);
            cb[r] = c0 - lambda * c1;
        }
        bt.lu().solve(&cb)
    }

    fn tableau_duals(&self, lambda: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            (0..self.m()).map(|r| self.reduced_cost(Var::Slack(r), lambda)),
        )
    }

    fn beta_from_duals(&self, pi: &DVector<f64>) -> DVector<f64> {
        let p = self.p;
        DVector::from_iterator(p, (0..p).map(|k| pi[k].max(0.0) - pi[p + k].max(0.0)))
    }

    /// ‖Σβ − e_i‖∞.
    pub fn residual(&self, beta: &DVector<f64>) -> f64 {
        let r = &self.sigma * beta;
        r.iter()
            .enumerate()
            .map(|(k, v)| (v - if k == self.column { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    fn extract(&self, lambda: f64, feas_tol: f64) -> Option<DVector<f64>> {
        let limit = lambda + feas_tol;
        let mut best: Option<(DVector<f64>, f64)> = None;
        let polished = self.polished_duals(lambda).map(|pi| self.beta_from_duals(&pi));
        let raw = self.beta_from_duals(&self.tableau_duals(lambda));
        for beta in polished.into_iter().chain(std::iter::once(raw)) {
            let res = self.residual(&beta);
            if res <= limit && best.as_ref().is_none_or(|(_, r)| res < *r) {
                best = Some((beta, res));
            }
        }
        best.map(|(b, _)| b)
    }

    /// Solves the column program at `lambda`, warm-starting from the last basis.
    pub fn solve(&mut self, lambda: f64, feas_tol: f64) -> Result<DVector<f64>> {
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
        }
        self.iterate(lambda)?;
        if let Some(beta) = self.extract(lambda, feas_tol) {
            return Ok(beta);
        }
        self.refactor();
        self.iterate(lambda)?;
        if let Some(beta) = self.extract(lambda, feas_tol) {
            return Ok(beta);
        }
        self.cold_start();
        self.iterate(lambda)?;
        self.extract(lambda, feas_tol).ok_or_else(|| {
            Error::Numeric(format!(
                "CLIME column {} could not meet the feasibility tolerance at lambda={lambda:e}",
                self.column
            ))
        })
    }
}
