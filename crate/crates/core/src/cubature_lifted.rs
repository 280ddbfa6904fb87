//! Lifted Markov cubature: chains on points of `R^{N_n}` whose mean flow
//! solves `z' = G^T z`, built block by block from the real Jordan form of
//! `G^T`, and their representation as signed measures on base points.
//!
//! With `G^T = V J V^-1` and lifted points `S = P V^T`, the condition
//! `SG = LS` becomes `P J^T = L P`: every point `p_i` (in Jordan
//! coordinates) must satisfy `J p_i = sum_j L_ij (p_j - p_i)` with
//! nonnegative rates. Each Jordan block gets its own point cloud.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cubature_ct::{build_h, validate_rate_matrix};
use crate::error::{Error, Result};
use crate::generator::GeneratorMatrix;
use crate::linalg::{
    cone_membership, expm, inf_norm, pinv, rank, spectral, BlockKind, JordanBlock, SpectralInfo,
};
use crate::moments::check_assumptions;
use crate::polynomials::{MonomialBasis, Polynomial};
use crate::tolerance::Tolerances;
use crate::{Matrix, Vector};

/// Smallest `m >= 3` with `pi (m + 2) / (2m) <= phi`, for `phi` in
/// `(pi/2, pi]`.
pub fn polygon_order(phi: f64) -> Result<usize> {
    if !(phi > PI / 2.0 && phi <= PI) {
        return Err(Error::InvalidArgument(format!(
            "polygon angle must lie in (pi/2, pi], got {phi}"
        )));
    }
    let ok = |m: usize| PI * (m as f64 + 2.0) / (2.0 * m as f64) <= phi;
    let mut m = ((2.0 * PI / (2.0 * phi - PI)).ceil() as usize).max(3);
    while !ok(m) {
        m += 1;
    }
    while m > 3 && ok(m - 1) {
        m -= 1;
    }
    Ok(m)
}

/// Where a lifted point came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Index into the Jordan block list.
    pub block: usize,
    /// `canonical`, `hypercube`, `polygon` or `product`.
    pub construction: String,
    /// Canonical index, hypercube sign bits (1 = negative), polygon vertex,
    /// or product vertex indices from the outermost polygon inwards.
    pub vertex: Vec<usize>,
}

/// Points of one Jordan block, in block coordinates, with their rates.
#[derive(Clone, Debug)]
pub struct BlockPoints {
    pub points: Vec<Vector>,
    pub rates: Matrix,
    pub construction: &'static str,
    pub vertices: Vec<Vec<usize>>,
}

fn hypercube(lambda: f64, s: usize, nilpotent: bool) -> Result<BlockPoints> {
    if !(lambda < 0.0) {
        return Err(Error::Lift(format!(
            "real block with eigenvalue {lambda} has no hypercube construction"
        )));
    }
    if s > 20 {
        return Err(Error::Lift(format!("real Jordan chain of length {s} is too long")));
    }
    let c = if nilpotent { 1.0 } else { 0.0 };
    let mut u = vec![1.0; s];
    for j in 1..s {
        u[j] = if nilpotent { u[j - 1] * lambda.abs() / 2.0 } else { 1.0 };
    }
    let count = 1usize << s;
    let vertex = |f: usize| -> Vector {
        Vector::from_fn(s, |j, _| if f >> j & 1 == 1 { -u[j] } else { u[j] })
    };
    let points: Vec<Vector> = (0..count).map(vertex).collect();
    let mut rates = Matrix::zeros(count, count);
    for f in 0..count {
        let p = &points[f];
        for j in 0..s {
            let next = if j + 1 < s { c * p[j + 1] } else { 0.0 };
            let ju = lambda * p[j] + next;
            let w = ju.abs() / (2.0 * u[j]);
            let g = f ^ (1 << j);
            rates[(f, g)] = w;
            rates[(f, f)] -= w;
        }
    }
    let vertices = (0..count)
        .map(|f| (0..s).map(|j| f >> j & 1).collect())
        .collect();
    Ok(BlockPoints {
        points,
        rates,
        construction: "hypercube",
        vertices,
    })
}

fn polygon(m: usize, radius: f64) -> Vec<Vector> {
    (0..m)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / m as f64;
            Vector::from_vec(vec![radius * th.cos(), radius * th.sin()])
        })
        .collect()
}

/// Rates at polygon vertex `k` for the drift `target`, by cone membership
/// against the outgoing differences.
fn vertex_rates(
    verts: &[Vector],
    k: usize,
    target: &Vector,
    tol: &Tolerances,
) -> Option<Vec<(usize, f64)>> {
    let others: Vec<usize> = (0..verts.len()).filter(|&j| j != k).collect();
    let gens: Vec<Vector> = others.iter().map(|&j| &verts[j] - &verts[k]).collect();
    let eps = tol.cone * (1.0 + target.amax());
    let r = cone_membership(target, &gens, eps);
    r.feasible
        .then(|| others.into_iter().zip(r.coefficients).collect())
}

const MAX_DOUBLINGS: usize = 40;

fn complex_points(a: f64, b: f64, s: usize, tol: &Tolerances) -> Result<BlockPoints> {
    let phi = b.abs().atan2(a);
    if !(phi > PI / 2.0) {
        return Err(Error::Lift(format!(
            "complex block {a}+{b}i has no polygon construction (real part must be negative)"
        )));
    }
    let cmat = Matrix::from_row_slice(2, 2, &[a, b, -b, a]);
    let m = polygon_order(phi)?;
    let base = polygon(m, 1.0);
    let mut rates = Matrix::zeros(m, m);
    for k in 0..m {
        let target = &cmat * &base[k];
        let w = vertex_rates(&base, k, &target, tol).ok_or_else(|| {
            Error::Lift(format!("polygon vertex {k} of {m} fails the cone test"))
        })?;
        for (j, c) in w {
            rates[(k, j)] = c;
            rates[(k, k)] -= c;
        }
    }
    let mut inner = BlockPoints {
        points: base,
        rates,
        construction: "polygon",
        vertices: (0..m).map(|k| vec![k]).collect(),
    };

    // Each further chain level adds an outer polygon, paired with every
    // point of the inner cloud: J (u; q) = (C u + q_top; J_inner q).
    let outer_m = m + 1;
    for level in 1..s {
        let mut radius = 1.0;
        let mut found = None;
        for _ in 0..=MAX_DOUBLINGS {
            let outer = polygon(outer_m, radius);
            let mut outer_rates = Vec::with_capacity(inner.points.len());
            let mut ok = true;
            'q: for q in &inner.points {
                let shift = Vector::from_vec(vec![q[0], q[1]]);
                let mut per_vertex = Vec::with_capacity(outer_m);
                for k in 0..outer_m {
                    let target = &cmat * &outer[k] + &shift;
                    match vertex_rates(&outer, k, &target, tol) {
                        Some(w) => per_vertex.push(w),
                        None => {
                            ok = false;
                            break 'q;
                        }
                    }
                }
                outer_rates.push(per_vertex);
            }
            if ok {
                found = Some((outer, outer_rates));
                break;
            }
            radius *= 2.0;
        }
        let (outer, outer_rates) = found.ok_or_else(|| {
            Error::Lift(format!(
                "outer polygon at chain level {level} still fails after {MAX_DOUBLINGS} radius doublings"
            ))
        })?;

        let ni = inner.points.len();
        let total = outer_m * ni;
        let idx = |k: usize, qi: usize| k * ni + qi;
        let mut points = Vec::with_capacity(total);
        let mut vertices = Vec::with_capacity(total);
        let mut rates = Matrix::zeros(total, total);
        for k in 0..outer_m {
            for qi in 0..ni {
                let mut p = Vector::zeros(2 + inner.points[qi].len());
                p.rows_mut(0, 2).copy_from(&outer[k]);
                p.rows_mut(2, inner.points[qi].len()).copy_from(&inner.points[qi]);
                points.push(p);
                let mut v = vec![k];
                v.extend(&inner.vertices[qi]);
                vertices.push(v);
                let me = idx(k, qi);
                for &(j, c) in &outer_rates[qi][k] {
                    rates[(me, idx(j, qi))] += c;
                    rates[(me, me)] -= c;
                }
                for qj in 0..ni {
                    if qj != qi {
                        let c = inner.rates[(qi, qj)];
                        rates[(me, idx(k, qj))] += c;
                        rates[(me, me)] -= c;
                    }
                }
            }
        }
        inner = BlockPoints {
            points,
            rates,
            construction: "product",
            vertices,
        };
    }
    Ok(inner)
}

/// Point cloud and rates for one Jordan block, in block coordinates.
pub fn block_points(block: &JordanBlock, tol: &Tolerances) -> Result<BlockPoints> {
    match block.kind {
        BlockKind::Zero => {
            let l = block.size;
            Ok(BlockPoints {
                points: (0..l).map(|k| Vector::from_fn(l, |i, _| (i == k) as u8 as f64)).collect(),
                rates: Matrix::zeros(l, l),
                construction: "canonical",
                vertices: (0..l).map(|k| vec![k]).collect(),
            })
        }
        BlockKind::Real { lambda } => hypercube(lambda, block.size, block.nilpotent),
        BlockKind::Complex { a, b } => complex_points(a, b, block.chain_len(), tol),
    }
}

/// `(S, L)` with `SG = LS`, `rank S = N_n` and `L` a rate matrix.
#[derive(Clone, Debug)]
pub struct LiftedRule {
    pub basis: MonomialBasis,
    pub s: Matrix,
    pub l: Matrix,
    pub provenance: Vec<Provenance>,
    /// `||SG - LS||_inf`.
    pub residual: f64,
}

impl LiftedRule {
    /// Re-checks the rule invariants against `g`.
    pub fn verify(&self, g: &GeneratorMatrix, tol: &Tolerances) -> Result<f64> {
        let n = g.len();
        if self.s.ncols() != n || self.s.nrows() != self.l.nrows() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.s.ncols(),
            });
        }
        validate_rate_matrix(&self.l)?;
        let residual = inf_norm(&(&self.s * &g.g - &self.l * &self.s));
        let bound = tol.lift_for(g.inf_norm());
        if !(residual <= bound) {
            return Err(Error::Lift(format!(
                "||SG - LS||_inf = {residual:.3e} exceeds {bound:.3e}"
            )));
        }
        let r = rank(&self.s, tol.rank);
        if r != n {
            return Err(Error::RankDeficient { rank: r, required: n });
        }
        Ok(residual)
    }
}

/// Lifted rule from the automatically computed real Jordan form of `G^T`.
pub fn lift(g: &GeneratorMatrix, tol: &Tolerances) -> Result<LiftedRule> {
    let check = check_assumptions(g, tol)?;
    if !check.a1 {
        return Err(Error::AssumptionViolated {
            assumption: "A1",
            detail: check.describe(),
            eigenvalues: check.eigenvalues,
        });
    }
    let info = spectral(&g.g.transpose(), tol)?;
    lift_with_spectral(g, &info, tol)
}

/// Lifted rule from a given decomposition `G^T = V J V^-1` (for instance a
/// Jordan override).
pub fn lift_with_spectral(
    g: &GeneratorMatrix,
    info: &SpectralInfo,
    tol: &Tolerances,
) -> Result<LiftedRule> {
    let n = g.len();
    if info.v.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: info.v.nrows(),
        });
    }
    let clouds: Vec<BlockPoints> = info
        .blocks
        .iter()
        .map(|b| block_points(b, tol))
        .collect::<Result<_>>()?;
    let r: usize = clouds.iter().map(|c| c.points.len()).sum();
    let mut p = Matrix::zeros(r, n);
    let mut l = Matrix::zeros(r, r);
    let mut provenance = Vec::with_capacity(r);
    let mut row = 0;
    for (bi, (block, cloud)) in info.blocks.iter().zip(&clouds).enumerate() {
        let k = cloud.points.len();
        for (i, pt) in cloud.points.iter().enumerate() {
            p.view_mut((row + i, block.start), (1, block.size))
                .copy_from(&pt.transpose());
            provenance.push(Provenance {
                block: bi,
                construction: cloud.construction.to_string(),
                vertex: cloud.vertices[i].clone(),
            });
        }
        l.view_mut((row, row), (k, k)).copy_from(&cloud.rates);
        row += k;
    }
    // Exact zero row sums.
    for i in 0..r {
        let off: f64 = (0..r).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        l[(i, i)] = -off;
    }
    let s = p * info.v.transpose();
    let mut rule = LiftedRule {
        basis: g.basis.clone(),
        s,
        l,
        provenance,
        residual: 0.0,
    };
    rule.residual = rule.verify(g, tol)?;
    Ok(rule)
}

/// Lifted rule viewed as signed measures on base points: `S = S~ H`,
/// `A S~ = I`.
#[derive(Clone, Debug)]
pub struct SignedMeasureRule {
    pub points: Vec<Vec<f64>>,
    pub basis: MonomialBasis,
    pub h: Matrix,
    pub s_tilde: Matrix,
    pub a: Matrix,
}

/// Greedy choice of `count` linearly independent rows.
fn independent_rows(s: &Matrix, count: usize, tol: f64) -> Vec<usize> {
    let scale = s.row_iter().map(|r| r.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut basis: Vec<Vector> = Vec::new();
    let mut chosen = Vec::new();
    for i in 0..s.nrows() {
        if chosen.len() == count {
            break;
        }
        let mut v = s.row(i).transpose();
        for q in &basis {
            v -= q * q.dot(&v);
        }
        let nv = v.norm();
        if nv > tol * scale {
            basis.push(v / nv);
            chosen.push(i);
        }
    }
    chosen
}

pub fn to_signed_measures(
    rule: &LiftedRule,
    points: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<SignedMeasureRule> {
    let n = rule.basis.len();
    let m = points.len();
    let r = rule.s.nrows();
    if m > r {
        return Err(Error::InvalidArgument(format!(
            "{m} base points exceed the {r} lifted points"
        )));
    }
    let h = build_h(points, &rule.basis)?;
    let rk = rank(&h, tol.rank);
    if rk != n {
        return Err(Error::RankDeficient { rank: rk, required: n });
    }

    // Particular solutions w_i = pinv(H^T) s_i lie in range(H); kernel
    // vectors of H^T are added to M - N further rows so that S~ has rank M.
    let ht_pinv = pinv(&h.transpose(), tol.rank);
    let mut s_tilde = &rule.s * ht_pinv.transpose();
    let kernel = crate::linalg::null_space(&h.transpose(), tol.rank);
    let picked = independent_rows(&rule.s, n, 1e-8);
    if picked.len() < n {
        return Err(Error::RankDeficient {
            rank: picked.len(),
            required: n,
        });
    }
    let spare: Vec<usize> = (0..r).filter(|i| !picked.contains(i)).collect();
    if spare.len() < kernel.ncols() {
        return Err(Error::InvalidArgument(
            "not enough lifted points to absorb the kernel of H^T".into(),
        ));
    }
    for (k, &i) in spare.iter().take(kernel.ncols()).enumerate() {
        let mut row = s_tilde.row_mut(i);
        row += kernel.column(k).transpose();
    }

    let rs = rank(&s_tilde, tol.rank);
    if rs != m {
        return Err(Error::RankDeficient { rank: rs, required: m });
    }
    let fit = inf_norm(&(&s_tilde * &h - &rule.s));
    let bound = tol.lift_for(inf_norm(&rule.s));
    if !(fit <= bound) {
        return Err(Error::NotRepresentable {
            residual: fit,
            tolerance: bound,
        });
    }
    let a = pinv(&s_tilde, tol.rank);
    Ok(SignedMeasureRule {
        points: points.to_vec(),
        basis: rule.basis.clone(),
        h,
        s_tilde,
        a,
    })
}

/// `W(t) = A e^{tL} S~`: rows sum to one, entries may be negative.
pub fn weights_matrix(smr: &SignedMeasureRule, l: &Matrix, t: f64) -> Result<Matrix> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    if l.nrows() != smr.s_tilde.nrows() {
        return Err(Error::DimensionMismatch {
            expected: smr.s_tilde.nrows(),
            got: l.nrows(),
        });
    }
    Ok(&smr.a * expm(&(l * t))? * &smr.s_tilde)
}

/// `E_{x_i}[q(X_s) p(X_t)] ~ sum_{l,m} p(x_m) q(x_l) W(t-s)_{lm} W(s)_{il}`.
pub fn two_time_expectation(
    smr: &SignedMeasureRule,
    l: &Matrix,
    p: &Polynomial,
    q: &Polynomial,
    s: f64,
    t: f64,
    i: usize,
) -> Result<f64> {
    if !(s <= t) {
        return Err(Error::InvalidArgument(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let m = smr.points.len();
    if i >= m {
        return Err(Error::InvalidArgument(format!("base point index {i} out of range")));
    }
    let w_ts = weights_matrix(smr, l, t - s)?;
    let w_s = weights_matrix(smr, l, s)?;
    let pv = Vector::from_iterator(m, smr.points.iter().map(|x| p.eval(x)));
    let qv = Vector::from_iterator(m, smr.points.iter().map(|x| q.eval(x)));
    let inner = &w_ts * pv;
    Ok((0..m).map(|k| w_s[(i, k)] * qv[k] * inner[k]).sum())
}
