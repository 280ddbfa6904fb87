//! Discrete-time Markov cubature on the grid `{l delta}`: a stochastic
//! matrix `Q` with `H e^{delta G} = Q H`, on points that carry a positive
//! cubature of the long-run moments.

use rayon::prelude::*;
use serde::Serialize;

use crate::cubature_ct::build_h;
use crate::error::{Error, Result};
use crate::generator::{build_g, GeneratorMatrix, ProcessSpec};
use crate::linalg::{cone_membership, expm, inf_norm, nnls, null_space, rank, vec_inf_norm};
use crate::moments::{asymptotic, check_assumptions, multi_time_moment};
use crate::polynomials::{MonomialBasis, Polynomial};
use crate::tolerance::Tolerances;
use crate::{Matrix, Vector};

/// Positive weights on points matching a moment vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StaticCubature {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl StaticCubature {
    /// `max_j |sum_i w_i h_j(x_i) - mu_j|`.
    pub fn moment_error(&self, mu: &Vector, basis: &MonomialBasis) -> Result<f64> {
        let h = build_h(&self.points, basis)?;
        let w = Vector::from_column_slice(&self.weights);
        Ok(vec_inf_norm(&(h.tr_mul(&w) - mu)))
    }
}

/// Gauss rule with `m` nodes from the moments `mu_0..mu_{2m-1}` of a
/// positive measure on the line (Golub–Welsch).
pub fn gauss_points_1d(mu: &[f64], m: usize, tol: &Tolerances) -> Result<StaticCubature> {
    if m == 0 {
        return Err(Error::InvalidArgument("a Gauss rule needs at least one node".into()));
    }
    if mu.len() < 2 * m {
        return Err(Error::InvalidArgument(format!(
            "{m} Gauss nodes need moments up to order {}, got {}",
            2 * m - 1,
            mu.len()
        )));
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("moment vector"));
    }
    // Cholesky of the m x m Hankel matrix, extended by the column
    // (mu_m..mu_{2m-1}) so that only moments below 2m are needed.
    let hankel = Matrix::from_fn(m, m, |i, j| mu[i + j]);
    let not_pd = || Error::NotRepresentable {
        residual: f64::NAN,
        tolerance: tol.rank,
    };
    let chol = hankel.clone().cholesky().ok_or_else(not_pd)?;
    let lower = chol.l();
    let scale = (0..m).map(|i| hankel[(i, i)]).fold(0.0, f64::max);
    if (0..m).any(|i| lower[(i, i)] * lower[(i, i)] <= tol.rank * scale) {
        return Err(not_pd());
    }
    let extra = Vector::from_fn(m, |i, _| mu[i + m]);
    let last = lower.solve_lower_triangular(&extra).ok_or_else(not_pd)?;
    let r = |i: usize, j: usize| if j == m { last[i] } else { lower[(j, i)] };

    let mut jacobi = Matrix::zeros(m, m);
    for j in 0..m {
        let prev = if j == 0 { 0.0 } else { r(j - 1, j) / r(j - 1, j - 1) };
        jacobi[(j, j)] = r(j, j + 1) / r(j, j) - prev;
        if j + 1 < m {
            let b = r(j + 1, j + 1) / r(j, j);
            jacobi[(j, j + 1)] = b;
            jacobi[(j + 1, j)] = b;
        }
    }
    let eig = jacobi.symmetric_eigen();
    let mut nodes: Vec<(f64, f64)> = (0..m)
        .map(|k| (eig.eigenvalues[k], mu[0] * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let rule = StaticCubature {
        points: nodes.iter().map(|&(x, _)| vec![x]).collect(),
        weights: nodes.iter().map(|&(_, w)| w).collect(),
    };
    let target = Vector::from_column_slice(&mu[..2 * m]);
    let basis = crate::polynomials::basis_indices(1, 2 * m - 1)?;
    let err = rule.moment_error(&target, &basis)?;
    let bound = tol.a3_for(vec_inf_norm(&target));
    if !(err <= bound) || rule.weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::NotRepresentable {
            residual: err,
            tolerance: bound,
        });
    }
    Ok(rule)
}

/// Gauss rule for the long-run moments of a one-dimensional spec. The
/// generator is built at degree `max(n, 2m - 1)` so that enough moments
/// are available.
pub fn gauss_for_spec(
    spec: &ProcessSpec,
    n: usize,
    m: usize,
    tol: &Tolerances,
) -> Result<StaticCubature> {
    if spec.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "Gauss rules need d = 1, got d = {}",
            spec.dim()
        )));
    }
    let g = build_g(spec, n.max(2 * m - 1))?;
    let asym = asymptotic(&g, tol)?;
    let mu = asym.mu.ok_or_else(|| Error::AssumptionViolated {
        assumption: "A2",
        detail: asym.diagnostic.clone(),
        eigenvalues: asym.check.eigenvalues.clone(),
    })?;
    gauss_points_1d(mu.as_slice(), m, tol)
}

/// Positive weights over a subset of `candidates` reproducing `mu`, with at
/// most `rank H` points (NNLS, then Caratheodory pruning).
pub fn tchakaloff_select(
    mu: &Vector,
    candidates: &[Vec<f64>],
    basis: &MonomialBasis,
    tol: &Tolerances,
) -> Result<StaticCubature> {
    if mu.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: mu.len(),
        });
    }
    let h = build_h(candidates, basis)?;
    let rk = rank(&h, tol.rank);
    if rk != basis.len() {
        return Err(Error::RankDeficient {
            rank: rk,
            required: basis.len(),
        });
    }
    let ht = h.transpose();
    let sol = nnls(&ht, mu);
    let bound = tol.a3_for(vec_inf_norm(mu));
    let fit = vec_inf_norm(&(&ht * &sol.x - mu));
    if !(fit <= bound) {
        return Err(Error::NotRepresentable {
            residual: fit,
            tolerance: bound,
        });
    }

    let mut w = sol.x;
    let floor = 1e-14 * w.amax().max(f64::MIN_POSITIVE);
    loop {
        let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > floor).collect();
        let sub = ht.select_columns(&support);
        let kernel = null_space(&sub, tol.rank);
        if kernel.ncols() == 0 {
            for i in 0..w.len() {
                if !support.contains(&i) {
                    w[i] = 0.0;
                }
            }
            break;
        }
        let mut z = kernel.column(0).into_owned();
        if z.max() <= 0.0 {
            z = -z;
        }
        // Largest step keeping w >= 0; it zeroes at least one weight.
        let (pos, theta) = support
            .iter()
            .enumerate()
            .filter(|(k, _)| z[*k] > 0.0)
            .map(|(k, &i)| (k, w[i] / z[k]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("kernel vector has a positive entry");
        for (k, &i) in support.iter().enumerate() {
            w[i] -= theta * z[k];
        }
        w[support[pos]] = 0.0;
    }

    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > floor).collect();
    let rule = StaticCubature {
        points: keep.iter().map(|&i| candidates[i].clone()).collect(),
        weights: keep.iter().map(|&i| w[i]).collect(),
    };
    let err = rule.moment_error(mu, basis)?;
    if !(err <= bound) {
        return Err(Error::NotRepresentable {
            residual: err,
            tolerance: bound,
        });
    }
    Ok(rule)
}

/// `Q` with `H e^{delta G} = Q H` and `Q >= 0`, if one exists. Each row is
/// a cone-membership test of `row_i(H e^{delta G})` against the rows of
/// `H`. Row sums are checked, never renormalized.
pub fn q_at(g: &GeneratorMatrix, h: &Matrix, delta: f64, tol: &Tolerances) -> Result<Option<Matrix>> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {delta}")));
    }
    if h.ncols() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            got: h.ncols(),
        });
    }
    let rk = rank(h, tol.rank);
    if rk != g.len() {
        return Err(Error::RankDeficient {
            rank: rk,
            required: g.len(),
        });
    }
    let target = h * expm(&(&g.g * delta))?;
    let m = h.nrows();
    let rows: Vec<Vector> = (0..m).map(|i| h.row(i).transpose()).collect();
    let solved: Vec<_> = (0..m)
        .into_par_iter()
        .map(|i| {
            let v = target.row(i).transpose();
            let eps = tol.cone * (1.0 + vec_inf_norm(&v));
            cone_membership(&v, &rows, eps)
        })
        .collect();
    if solved.iter().any(|r| !r.feasible) {
        return Ok(None);
    }
    let mut q = Matrix::zeros(m, m);
    for (i, r) in solved.iter().enumerate() {
        for (j, &c) in r.coefficients.iter().enumerate() {
            q[(i, j)] = c;
        }
        let sum: f64 = q.row(i).sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidChain(format!(
                "row {i} of Q sums to {sum}; H probably lacks the constant column"
            )));
        }
    }
    Ok(Some(q))
}

/// Outcome of [`find_delta`].
#[derive(Clone, Debug, Serialize)]
pub struct DeltaSearch {
    pub delta: f64,
    #[serde(skip)]
    pub q: Matrix,
    pub min_entry: f64,
    pub residual: f64,
    pub doublings: usize,
    pub bisections: usize,
}

const MAX_DOUBLINGS: usize = 60;
const BISECTION_WIDTH: f64 = 1e-3;

struct Probe {
    q: Matrix,
    min_entry: f64,
    residual: f64,
}

fn probe(g: &GeneratorMatrix, h: &Matrix, delta: f64, tol: &Tolerances) -> Result<Option<Probe>> {
    let Some(q) = q_at(g, h, delta, tol)? else {
        return Ok(None);
    };
    let residual = inf_norm(&(h * expm(&(&g.g * delta))? - &q * h));
    Ok(Some(Probe {
        min_entry: q.min(),
        q,
        residual,
    }))
}

fn accepted(p: &Option<Probe>, tol: &Tolerances) -> bool {
    matches!(p, Some(p) if p.min_entry >= tol.pos && p.residual <= tol.dt)
}

/// Smallest probed `delta` (to within `1e-3`) at which `Q` exists with all
/// entries at least `tol.pos`. Doubles from `delta_init`, then bisects the
/// last bracket.
pub fn find_delta(
    g: &GeneratorMatrix,
    h: &Matrix,
    delta_init: f64,
    tol: &Tolerances,
) -> Result<DeltaSearch> {
    if !(delta_init.is_finite() && delta_init > 0.0) {
        return Err(Error::InvalidArgument(format!("delta_init must be positive, got {delta_init}")));
    }
    let check = check_assumptions(g, tol)?;
    if !check.a2 {
        return Err(Error::AssumptionViolated {
            assumption: "A2",
            detail: check.describe(),
            eigenvalues: check.eigenvalues,
        });
    }

    let mut delta = delta_init;
    let mut best_min = f64::NEG_INFINITY;
    let mut doublings = 0;
    let found = loop {
        let p = probe(g, h, delta, tol)?;
        if let Some(p) = &p {
            best_min = best_min.max(p.min_entry);
        }
        if accepted(&p, tol) {
            break p.unwrap();
        }
        if doublings == MAX_DOUBLINGS {
            return Err(Error::SearchExhausted {
                steps: MAX_DOUBLINGS,
                detail: format!(
                    "no delta up to {delta:.3e} gives Q with entries >= {:e}; largest min entry seen {best_min:.3e}",
                    tol.pos
                ),
            });
        }
        delta *= 2.0;
        doublings += 1;
    };

    let mut hi = (delta, found);
    let mut bisections = 0;
    if doublings > 0 {
        let mut lo = delta / 2.0;
        while hi.0 - lo > BISECTION_WIDTH {
            let mid = 0.5 * (lo + hi.0);
            let p = probe(g, h, mid, tol)?;
            bisections += 1;
            if accepted(&p, tol) {
                hi = (mid, p.unwrap());
            } else {
                lo = mid;
            }
        }
    }
    let (delta, p) = hi;
    Ok(DeltaSearch {
        delta,
        q: p.q,
        min_entry: p.min_entry,
        residual: p.residual,
        doublings,
        bisections,
    })
}

#[derive(Clone, Debug)]
pub struct DtRule {
    pub points: Vec<Vec<f64>>,
    pub basis: MonomialBasis,
    pub delta: f64,
    pub q: Matrix,
    pub h: Matrix,
    /// `||H e^{delta G} - QH||_inf`.
    pub residual: f64,
}

/// Runs [`find_delta`] on `points` and packages the result.
pub fn discrete_rule(
    g: &GeneratorMatrix,
    points: &[Vec<f64>],
    delta_init: f64,
    tol: &Tolerances,
) -> Result<DtRule> {
    let h = build_h(points, &g.basis)?;
    let found = find_delta(g, &h, delta_init, tol)?;
    Ok(DtRule {
        points: points.to_vec(),
        basis: g.basis.clone(),
        delta: found.delta,
        q: found.q,
        h,
        residual: found.residual,
    })
}

pub fn validate_stochastic(q: &Matrix) -> Result<()> {
    if q.nrows() != q.ncols() {
        return Err(Error::InvalidChain("transition matrix is not square".into()));
    }
    for i in 0..q.nrows() {
        if let Some(j) = (0..q.ncols()).find(|&j| !(q[(i, j)] >= 0.0)) {
            return Err(Error::InvalidChain(format!("Q[{i}][{j}] = {} is negative", q[(i, j)])));
        }
        let sum: f64 = q.row(i).sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidChain(format!("row {i} of Q sums to {sum}")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct DtReport {
    /// `||H e^{l delta G} - Q^l H||_inf` for `l = 1..l_max`.
    pub residuals: Vec<f64>,
    pub min_entry: f64,
    pub row_sum_deviation: f64,
    /// Largest error of the chain's two-time moment at `(delta, 2 delta)`
    /// over all starting points.
    pub two_time_error: f64,
    pub passed: bool,
}

/// Power residuals up to `l_max` (bound `l tol.dt`) and a two-time check.
pub fn verify_dt(rule: &DtRule, g: &GeneratorMatrix, l_max: usize, tol: &Tolerances) -> Result<DtReport> {
    if l_max == 0 {
        return Err(Error::InvalidArgument("l_max must be at least 1".into()));
    }
    let m = rule.points.len();
    if rule.q.shape() != (m, m) || rule.h.shape() != (m, g.len()) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: rule.q.nrows(),
        });
    }
    let step = expm(&(&g.g * rule.delta))?;
    let mut lhs = rule.h.clone();
    let mut rhs = rule.h.clone();
    let mut residuals = Vec::with_capacity(l_max);
    for _ in 0..l_max {
        lhs = &lhs * &step;
        rhs = &rule.q * &rhs;
        residuals.push(inf_norm(&(&lhs - &rhs)));
    }
    let row_sum_deviation = (0..m)
        .map(|i| (rule.q.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);

    // p = q = x_1 when products stay in degree n, else q = 1.
    let d = g.dim();
    let p = Polynomial::var(d, 0);
    let qp = if g.n >= 2 { p.clone() } else { Polynomial::constant(d, 1.0) };
    let mut two_time_error: f64 = 0.0;
    let qv: Vec<f64> = rule.points.iter().map(|x| qp.eval(x)).collect();
    let pv = Vector::from_iterator(m, rule.points.iter().map(|x| p.eval(x)));
    let inner = &rule.q * pv;
    for i in 0..m {
        let chain: f64 = (0..m).map(|k| rule.q[(i, k)] * qv[k] * inner[k]).sum();
        let exact = multi_time_moment(
            g,
            &rule.points[i],
            &[(rule.delta, qp.clone()), (2.0 * rule.delta, p.clone())],
        )?;
        two_time_error = two_time_error.max((chain - exact).abs() / (1.0 + exact.abs()));
    }

    let passed = residuals
        .iter()
        .enumerate()
        .all(|(l, &r)| r <= (l + 1) as f64 * tol.dt)
        && rule.q.min() >= 0.0
        && row_sum_deviation <= 1e-10
        && two_time_error <= 1e-6;
    Ok(DtReport {
        residuals,
        min_entry: rule.q.min(),
        row_sum_deviation,
        two_time_error,
        passed,
    })
}
