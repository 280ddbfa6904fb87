//! Lawson–Hanson nonnegative least squares and the cone-membership test
//! built on it.

use serde::{Deserialize, Serialize};

use crate::{Matrix, Vector};

/// Solution of `min ||A c - b||_2` subject to `c >= 0`.
#[derive(Clone, Debug)]
pub struct Nnls {
    pub x: Vector,
    /// Euclidean residual norm.
    pub residual: f64,
    pub iterations: usize,
}

/// Lawson–Hanson active-set NNLS.
pub fn nnls(a: &Matrix, b: &Vector) -> Nnls {
    let (m, n) = a.shape();
    assert_eq!(m, b.len(), "nnls: row count mismatch");
    let mut x = Vector::zeros(n);
    if n == 0 {
        return Nnls {
            x,
            residual: b.norm(),
            iterations: 0,
        };
    }

    let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let tol = 10.0 * f64::EPSILON * scale * (m.max(n) as f64) * (1.0 + b.amax());
    let mut passive = vec![false; n];
    // Columns whose entry was immediately undone; skipped until another
    // column enters successfully.
    let mut blocked = vec![false; n];
    let max_outer = 5 * n + 20;
    let mut iterations = 0;

    let mut w = a.tr_mul(&(b - a * &x));
    for _ in 0..max_outer {
        iterations += 1;
        let cand = (0..n)
            .filter(|&j| !passive[j] && !blocked[j])
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
        let Some(t) = cand else { break };
        if w[t] <= tol {
            break;
        }
        passive[t] = true;

        let mut entered_dropped = false;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let z = solve_passive(a, b, &idx);
            if idx.iter().zip(z.iter()).all(|(_, &zj)| zj > 0.0) {
                for (&j, &zj) in idx.iter().zip(z.iter()) {
                    x[j] = zj;
                }
                break;
            }
            // Step back toward the previous feasible point.
            let mut alpha = f64::INFINITY;
            for (&j, &zj) in idx.iter().zip(z.iter()) {
                if zj <= 0.0 {
                    let denom = x[j] - zj;
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (&j, &zj) in idx.iter().zip(z.iter()) {
                x[j] += alpha * (zj - x[j]);
            }
            let floor = f64::EPSILON * x.amax().max(1.0);
            for &j in &idx {
                if x[j] <= floor {
                    x[j] = 0.0;
                    passive[j] = false;
                    if j == t {
                        entered_dropped = true;
                    }
                }
            }
            if !passive.iter().any(|&p| p) || entered_dropped {
                break;
            }
        }
        w = a.tr_mul(&(b - a * &x));
        if entered_dropped {
            blocked[t] = true;
        } else {
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }
    let residual = (b - a * &x).norm();
    Nnls {
        x,
        residual,
        iterations,
    }
}

fn solve_passive(a: &Matrix, b: &Vector, idx: &[usize]) -> Vector {
    let cols: Vec<_> = idx.iter().map(|&j| a.column(j).into_owned()).collect();
    let sub = Matrix::from_columns(&cols);
    let svd = sub.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, 1e-13 * smax.max(1e-300))
        .expect("SVD computed with U and V")
}

/// Outcome of testing whether `v` lies in the cone spanned by generators.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeMembershipResult {
    pub feasible: bool,
    /// Nonnegative combination coefficients, one per generator.
    pub coefficients: Vec<f64>,
    /// `||v - sum_j c_j g_j||_inf` at the NNLS optimum.
    pub residual: f64,
}

/// Tests whether `v` is a nonnegative combination of `generators`, with
/// feasibility decided by `||v - sum c_j g_j||_inf <= eps`.
pub fn cone_membership(v: &Vector, generators: &[Vector], eps: f64) -> ConeMembershipResult {
    if v.iter().all(|&x| x == 0.0) {
        return ConeMembershipResult {
            feasible: true,
            coefficients: vec![0.0; generators.len()],
            residual: 0.0,
        };
    }
    if generators.is_empty() {
        let residual = v.amax();
        return ConeMembershipResult {
            feasible: residual <= eps,
            coefficients: Vec::new(),
            residual,
        };
    }
    for g in generators {
        assert_eq!(g.len(), v.len(), "cone_membership: generator length mismatch");
    }
    let a = Matrix::from_columns(generators);
    let sol = nnls(&a, v);
    let residual = (v - &a * &sol.x).amax();
    ConeMembershipResult {
        feasible: residual <= eps,
        coefficients: sol.x.iter().cloned().collect(),
        residual,
    }
}
