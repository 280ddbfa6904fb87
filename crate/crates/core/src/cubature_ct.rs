//! Continuous-time Markov cubature: a rate matrix `L` on points `x_1..x_M`
//! with `HG = LH`, where `H_ij = h_j(x_i)`.
//!
//! Row `i` of `HG = LH` says that `row_i(HG)` is a nonnegative combination
//! of the differences `row_j(H) - row_i(H)`, so each row is an independent
//! cone-membership problem.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::GeneratorMatrix;
use crate::linalg::{cone_membership, expm, inf_norm, rank, vec_inf_norm};
use crate::polynomials::{eval_basis, MonomialBasis};
use crate::tolerance::Tolerances;
use crate::{Matrix, Vector};

/// `H_ij = h_j(points_i)`.
pub fn build_h(points: &[Vec<f64>], basis: &MonomialBasis) -> Result<Matrix> {
    let mut h = Matrix::zeros(points.len(), basis.len());
    for (i, x) in points.iter().enumerate() {
        h.set_row(i, &eval_basis(x, basis)?.transpose());
    }
    Ok(h)
}

#[derive(Clone, Debug)]
pub struct CtRule {
    pub points: Vec<Vec<f64>>,
    pub basis: MonomialBasis,
    pub l: Matrix,
    pub h: Matrix,
    /// `||HG - LH||_inf` at construction.
    pub residual: f64,
}

impl CtRule {
    /// Checks that `l` is a rate matrix: nonnegative off-diagonal, zero
    /// row sums within `1e-10 (1 + |L_ii|)`.
    pub fn validate_rates(&self) -> Result<()> {
        validate_rate_matrix(&self.l)
    }
}

pub fn validate_rate_matrix(l: &Matrix) -> Result<()> {
    if l.nrows() != l.ncols() {
        return Err(Error::InvalidChain("rate matrix is not square".into()));
    }
    for i in 0..l.nrows() {
        for j in 0..l.ncols() {
            if i != j && l[(i, j)] < 0.0 {
                return Err(Error::InvalidChain(format!(
                    "negative off-diagonal rate L[{i}][{j}] = {}",
                    l[(i, j)]
                )));
            }
        }
        let sum: f64 = l.row(i).iter().sum();
        if sum.abs() > 1e-10 * (1.0 + l[(i, i)].abs()) {
            return Err(Error::InvalidChain(format!("row {i} of L sums to {sum}")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct RowDiagnostic {
    pub feasible: bool,
    pub residual: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug)]
pub struct CtCheck {
    pub rule: Option<CtRule>,
    pub rows: Vec<RowDiagnostic>,
    pub rank_h: usize,
}

impl CtCheck {
    pub fn feasible(&self) -> bool {
        self.rule.is_some()
    }
}

/// Row-wise cone tests on precomputed `H` and `HG`. Returns `L` when every
/// row is feasible.
pub fn check_ct_matrices(
    h: &Matrix,
    hg: &Matrix,
    tol: &Tolerances,
) -> (Option<Matrix>, Vec<RowDiagnostic>) {
    let m = h.nrows();
    let rows: Vec<Vector> = (0..m).map(|i| h.row(i).transpose()).collect();
    let results: Vec<_> = (0..m)
        .into_par_iter()
        .map(|i| {
            let v = hg.row(i).transpose();
            let gens: Vec<Vector> = (0..m)
                .filter(|&j| j != i)
                .map(|j| &rows[j] - &rows[i])
                .collect();
            let eps = tol.cone * (1.0 + vec_inf_norm(&v));
            (cone_membership(&v, &gens, eps), eps)
        })
        .collect();

    let diagnostics: Vec<RowDiagnostic> = results
        .iter()
        .map(|(r, eps)| RowDiagnostic {
            feasible: r.feasible,
            residual: r.residual,
            threshold: *eps,
        })
        .collect();
    if !results.iter().all(|(r, _)| r.feasible) {
        return (None, diagnostics);
    }
    let mut l = Matrix::zeros(m, m);
    for (i, (r, _)) in results.iter().enumerate() {
        let others = (0..m).filter(|&j| j != i);
        let mut total = 0.0;
        for (j, &c) in others.zip(&r.coefficients) {
            l[(i, j)] = c;
            total += c;
        }
        l[(i, i)] = -total;
    }
    (Some(l), diagnostics)
}

/// Tests whether `points` carry an `n`-Markov cubature rule for `g`.
/// Infeasibility is a result, not an error.
pub fn check_ct(g: &GeneratorMatrix, points: &[Vec<f64>], tol: &Tolerances) -> Result<CtCheck> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("at least one point is required".into()));
    }
    let h = build_h(points, &g.basis)?;
    let hg = &h * &g.g;
    let rank_h = rank(&h, tol.rank);
    let (l, rows) = check_ct_matrices(&h, &hg, tol);
    let rule = l.map(|l| {
        let residual = inf_norm(&(&hg - &l * &h));
        CtRule {
            points: points.to_vec(),
            basis: g.basis.clone(),
            l,
            h,
            residual,
        }
    });
    Ok(CtCheck { rule, rows, rank_h })
}

/// `H G H^-1` for `M = N_n` points with invertible `H`. Its off-diagonal
/// signs decide feasibility through the Lagrange basis.
pub fn lagrange_check(g: &GeneratorMatrix, points: &[Vec<f64>]) -> Result<Matrix> {
    if points.len() != g.len() {
        return Err(Error::InvalidArgument(format!(
            "lagrange_check needs a square H: {} points for a basis of size {}",
            points.len(),
            g.len()
        )));
    }
    let h = build_h(points, &g.basis)?;
    let h_inv = h
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("H in lagrange_check"))?;
    Ok(&h * &g.g * h_inv)
}

#[derive(Clone, Debug, Serialize)]
pub struct CtTimeReport {
    pub t: f64,
    /// `||H e^{tG} - e^{tL} H||_inf`.
    pub residual: f64,
    /// Largest `|row sum - 1|` of `e^{tL}`.
    pub row_sum_deviation: f64,
    pub min_entry: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CtReport {
    pub times: Vec<CtTimeReport>,
    pub max_residual: f64,
    pub max_row_sum_deviation: f64,
}

impl CtReport {
    pub fn passed(&self, residual_tol: f64) -> bool {
        self.max_residual <= residual_tol
            && self.max_row_sum_deviation <= 1e-9
            && self.times.iter().all(|t| t.min_entry >= -1e-9)
    }
}

pub fn verify_ct(rule: &CtRule, g: &GeneratorMatrix, times: &[f64]) -> Result<CtReport> {
    if rule.h.ncols() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: rule.h.ncols(),
        });
    }
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
        }
        let egt = expm(&(&g.g * t))?;
        let elt = expm(&(&rule.l * t))?;
        let residual = inf_norm(&(&rule.h * egt - &elt * &rule.h));
        let row_sum_deviation = elt
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let min_entry = elt.iter().cloned().fold(f64::INFINITY, f64::min);
        out.push(CtTimeReport {
            t,
            residual,
            row_sum_deviation,
            min_entry,
        });
    }
    Ok(CtReport {
        max_residual: out.iter().map(|r| r.residual).fold(0.0, f64::max),
        max_row_sum_deviation: out.iter().map(|r| r.row_sum_deviation).fold(0.0, f64::max),
        times: out,
    })
}

/// Scans `m`-point subsets of a candidate grid in lexicographic order and
/// returns the first feasible rule, trying at most `limit` subsets.
pub fn grid_scan(
    g: &GeneratorMatrix,
    grid: &[Vec<f64>],
    m: usize,
    limit: usize,
    tol: &Tolerances,
) -> Result<Option<CtRule>> {
    if m == 0 || m > grid.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot choose {m} points from a grid of {}",
            grid.len()
        )));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    for _ in 0..limit {
        let pts: Vec<Vec<f64>> = idx.iter().map(|&i| grid[i].clone()).collect();
        if let Some(rule) = check_ct(g, &pts, tol)?.rule {
            return Ok(Some(rule));
        }
        // next combination
        let mut k = m;
        while k > 0 && idx[k - 1] == grid.len() - m + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for j in k..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(None)
}
