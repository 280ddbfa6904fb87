//! Numerical real Jordan structure.
//!
//! Eigenvalues come from the real Schur form (per diagonal block when the
//! matrix is exactly block triangular, as generator matrices are). Each
//! eigenvalue cluster is handled inside its generalized eigenspace: the
//! restricted nilpotent part is split into Jordan chains by rank decisions on
//! its powers, and complex chains are turned into real column pairs.

use nalgebra::{ComplexField, DMatrix, DVector, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{column_basis, inf_norm, spectral_norm};
use crate::error::{Error, Result};
use crate::tolerance::Tolerances;
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BlockKind {
    /// Diagonal zero block.
    Zero,
    Real { lambda: f64 },
    /// `[[a, b], [-b, a]]` acting on a `(Re w, Im w)` column pair, `b > 0`.
    Complex { a: f64, b: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JordanBlock {
    #[serde(flatten)]
    pub kind: BlockKind,
    /// Number of rows/columns the block occupies.
    pub size: usize,
    /// Whether the superdiagonal carries ones (a chain longer than one).
    pub nilpotent: bool,
    /// First column of the block in `V`.
    pub start: usize,
}

impl JordanBlock {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.size
    }

    /// Chain length: the number of scalar or 2x2 diagonal entries.
    pub fn chain_len(&self) -> usize {
        match self.kind {
            BlockKind::Complex { .. } => self.size / 2,
            _ => self.size,
        }
    }
}

/// User-supplied block for the Jordan override. Real and complex blocks
/// describe a single chain; a zero block is diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BlockSpec {
    Zero { size: usize },
    Real { lambda: f64, size: usize },
    Complex { a: f64, b: f64, size: usize },
}

#[derive(Clone, Debug)]
pub struct SpectralInfo {
    pub eigenvalues: Vec<Complex64>,
    pub blocks: Vec<JordanBlock>,
    pub v: Matrix,
    pub v_inv: Matrix,
    /// `||V J V^-1 - M||_inf`.
    pub residual: f64,
}

impl SpectralInfo {
    pub fn j(&self) -> Matrix {
        real_jordan_matrix(&self.blocks, self.v.nrows())
    }

    pub fn zero_multiplicity(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| match b.kind {
                BlockKind::Zero => true,
                BlockKind::Real { lambda } => lambda == 0.0,
                _ => false,
            })
            .map(|b| b.size)
            .sum()
    }
}

/// Assembles the block-diagonal real Jordan matrix.
pub fn real_jordan_matrix(blocks: &[JordanBlock], n: usize) -> Matrix {
    let mut j = Matrix::zeros(n, n);
    for b in blocks {
        let s = b.start;
        match b.kind {
            BlockKind::Zero => {}
            BlockKind::Real { lambda } => {
                for k in 0..b.size {
                    j[(s + k, s + k)] = lambda;
                    if b.nilpotent && k + 1 < b.size {
                        j[(s + k, s + k + 1)] = 1.0;
                    }
                }
            }
            BlockKind::Complex { a, b: im } => {
                for k in 0..b.size / 2 {
                    let r = s + 2 * k;
                    j[(r, r)] = a;
                    j[(r, r + 1)] = im;
                    j[(r + 1, r)] = -im;
                    j[(r + 1, r + 1)] = a;
                    if b.nilpotent && k + 1 < b.size / 2 {
                        j[(r, r + 2)] = 1.0;
                        j[(r + 1, r + 3)] = 1.0;
                    }
                }
            }
        }
    }
    j
}

/// Eigenvalues, splitting off diagonal blocks when `m` is exactly block
/// upper or block lower triangular.
pub(crate) fn eigenvalues(m: &Matrix) -> Vec<Complex64> {
    let n = m.nrows();
    let upper: Vec<usize> = (1..n)
        .filter(|&k| (k..n).all(|i| (0..k).all(|j| m[(i, j)] == 0.0)))
        .collect();
    let lower: Vec<usize> = (1..n)
        .filter(|&k| (0..k).all(|i| (k..n).all(|j| m[(i, j)] == 0.0)))
        .collect();
    let mut splits = if upper.len() >= lower.len() { upper } else { lower };
    splits.insert(0, 0);
    splits.push(n);
    let mut out = Vec::with_capacity(n);
    for w in splits.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a == 1 {
            out.push(Complex64::new(m[(a, a)], 0.0));
        } else {
            let block = m.view((a, a), (b - a, b - a)).into_owned();
            out.extend(block.complex_eigenvalues().iter().cloned());
        }
    }
    out
}

struct Cluster {
    center: Complex64,
    multiplicity: usize,
}

fn cluster(eigs: &[Complex64], tau: f64) -> Vec<Cluster> {
    let n = eigs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if (eigs[i] - eigs[j]).norm() <= tau {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_of[r] == usize::MAX {
            root_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_of[r]].push(i);
    }
    groups
        .into_iter()
        .map(|g| {
            let sum: Complex64 = g.iter().map(|&i| eigs[i]).sum();
            Cluster {
                center: sum / g.len() as f64,
                multiplicity: g.len(),
            }
        })
        .collect()
}

/// Right singular vectors of `a` whose singular values are `<= thr`
/// (absolute threshold).
fn null_space_abs<T>(a: &DMatrix<T>, thr: f64) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let n = a.ncols();
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::<T>::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= thr)
        .map(|i| v_t.row(i).adjoint())
        .collect();
    if cols.is_empty() {
        DMatrix::<T>::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// The `k` right singular vectors with smallest singular values.
fn smallest_right_vectors<T>(a: &DMatrix<T>, k: usize) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let n = a.ncols();
    let svd = SVD::new(a.clone(), false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap());
    let cols: Vec<_> = order.iter().take(k).map(|&i| v_t.row(i).adjoint()).collect();
    if cols.is_empty() {
        DMatrix::<T>::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn hcat<T>(parts: &[&DMatrix<T>], nrows: usize) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let cols: Vec<DVector<T>> = parts
        .iter()
        .flat_map(|p| p.column_iter().map(|c| c.into_owned()))
        .collect();
    if cols.is_empty() {
        DMatrix::<T>::zeros(nrows, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Jordan chains `[w_1, ..., w_k]` of `m` at `lambda`, with
/// `(m - lambda) w_1 = 0` and `(m - lambda) w_{j+1} = w_j`.
fn chains<T>(
    m: &DMatrix<T>,
    lambda: T,
    mult: usize,
    rel_thr: f64,
) -> Result<Vec<Vec<DVector<T>>>>
where
    T: ComplexField<RealField = f64>,
{
    let n = m.nrows();
    let b = m - DMatrix::<T>::identity(n, n) * lambda;
    let nb = SVD::new(b.clone(), false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    if nb == 0.0 {
        let id = DMatrix::<T>::identity(n, n);
        return Ok((0..n).map(|i| vec![id.column(i).into_owned()]).collect());
    }

    // Orthonormal basis of the generalized eigenspace.
    let bn = &b * T::from_real(1.0 / nb);
    let mut p = bn.clone();
    for _ in 1..mult {
        p = &p * &bn;
    }
    let x = smallest_right_vectors(&p, mult);
    let t = x.adjoint() * &b * &x;
    let tn = &t * T::from_real(1.0 / nb);

    // Kernel dimensions of powers of the restricted nilpotent part.
    let mut kernels: Vec<DMatrix<T>> = vec![DMatrix::<T>::zeros(mult, 0)];
    let mut power = DMatrix::<T>::identity(mult, mult);
    loop {
        power = &power * &tn;
        let k = null_space_abs(&power, rel_thr);
        let full = k.ncols() >= mult || kernels.len() > mult;
        kernels.push(if full {
            DMatrix::<T>::identity(mult, mult)
        } else {
            k
        });
        if full {
            break;
        }
    }
    let p_max = kernels.len() - 1;
    let dims: Vec<usize> = kernels.iter().map(|k| k.ncols()).collect();

    // Tops of chains, longest first.
    let mut tops: Vec<(DVector<T>, usize)> = Vec::new();
    for k in (1..=p_max).rev() {
        let next = if k < p_max { dims[k + 1] } else { dims[k] };
        let new_count = (2 * dims[k]).saturating_sub(dims[k - 1] + next);
        if new_count == 0 {
            continue;
        }
        let images: Vec<DVector<T>> = tops
            .iter()
            .map(|(v, len)| {
                let mut w = v.clone();
                for _ in 0..(len - k) {
                    w = &t * w;
                }
                w
            })
            .collect();
        let img = if images.is_empty() {
            DMatrix::<T>::zeros(mult, 0)
        } else {
            DMatrix::from_columns(&images)
        };
        let q = column_basis(&hcat(&[&kernels[k - 1], &img], mult), 1e-10);
        let kk = &kernels[k];
        let proj = kk - &q * (q.adjoint() * kk);
        let fresh = column_basis(&proj, 1e-8);
        if fresh.ncols() < new_count {
            return Err(Error::Spectral {
                reason: format!(
                    "could not complete Jordan chains of length {k} (needed {new_count}, found {})",
                    fresh.ncols()
                ),
                residual: f64::NAN,
                tolerance: rel_thr,
            });
        }
        for c in 0..new_count {
            tops.push((fresh.column(c).into_owned(), k));
        }
    }

    let mut out = Vec::with_capacity(tops.len());
    for (v, len) in tops {
        let mut chain = vec![DVector::<T>::zeros(mult); len];
        chain[len - 1] = v;
        for j in (0..len - 1).rev() {
            chain[j] = &t * &chain[j + 1];
        }
        out.push(chain.into_iter().map(|w| &x * w).collect());
    }
    Ok(out)
}

/// Real Jordan decomposition `M = V J V^-1` with zero blocks first.
pub fn spectral(m: &Matrix, tol: &Tolerances) -> Result<SpectralInfo> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectral input"));
    }
    let norm2 = spectral_norm(m);
    let tau = tol.cluster_for(norm2);
    let raw = eigenvalues(m);
    let mut clusters = cluster(&raw, tau);
    for c in &mut clusters {
        if c.center.im.abs() <= tau {
            c.center.im = 0.0;
        }
        if c.center.norm() <= tau {
            c.center = Complex64::new(0.0, 0.0);
        }
    }
    clusters.retain(|c| c.center.im >= 0.0);
    clusters.sort_by(|a, b| {
        let za = a.center.norm() == 0.0;
        let zb = b.center.norm() == 0.0;
        zb.cmp(&za)
            .then(b.center.re.partial_cmp(&a.center.re).unwrap())
            .then(a.center.im.partial_cmp(&b.center.im).unwrap())
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    let mut blocks = Vec::new();
    let mut zero_simple: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut zero_chains: Vec<Vec<nalgebra::DVector<f64>>> = Vec::new();
    let mut rest: Vec<(BlockKind, Vec<nalgebra::DVector<f64>>)> = Vec::new();

    for c in &clusters {
        let rel_thr = (tol.rank).max(10.0 * tau / norm2.max(f64::MIN_POSITIVE));
        if c.center.im == 0.0 {
            let lambda = c.center.re;
            for _ in 0..c.multiplicity {
                eigenvalues.push(Complex64::new(lambda, 0.0));
            }
            let ch = chains(m, lambda, c.multiplicity, rel_thr)?;
            for chain in ch {
                if lambda == 0.0 {
                    if chain.len() == 1 {
                        zero_simple.extend(chain);
                    } else {
                        zero_chains.push(chain);
                    }
                } else {
                    rest.push((BlockKind::Real { lambda }, chain));
                }
            }
        } else {
            for _ in 0..c.multiplicity {
                eigenvalues.push(c.center);
                eigenvalues.push(c.center.conj());
            }
            let mc = m.map(|v| Complex64::new(v, 0.0));
            let ch = chains(&mc, c.center, c.multiplicity, rel_thr)?;
            for chain in ch {
                let real_cols = chain
                    .iter()
                    .flat_map(|w| [w.map(|z| z.re), w.map(|z| z.im)])
                    .collect();
                rest.push((
                    BlockKind::Complex {
                        a: c.center.re,
                        b: c.center.im,
                    },
                    real_cols,
                ));
            }
        }
    }

    if !zero_simple.is_empty() {
        blocks.push(JordanBlock {
            kind: BlockKind::Zero,
            size: zero_simple.len(),
            nilpotent: false,
            start: cols.len(),
        });
        cols.extend(zero_simple);
    }
    for chain in zero_chains {
        blocks.push(JordanBlock {
            kind: BlockKind::Real { lambda: 0.0 },
            size: chain.len(),
            nilpotent: true,
            start: cols.len(),
        });
        cols.extend(chain);
    }
    for (kind, chain) in rest {
        let size = chain.len();
        let chain_len = match kind {
            BlockKind::Complex { .. } => size / 2,
            _ => size,
        };
        blocks.push(JordanBlock {
            kind,
            size,
            nilpotent: chain_len > 1,
            start: cols.len(),
        });
        cols.extend(chain);
    }
    if cols.len() != n {
        return Err(Error::Spectral {
            reason: format!("recovered {} of {n} basis vectors", cols.len()),
            residual: f64::NAN,
            tolerance: tol.recon,
        });
    }
    let v = if n == 0 {
        Matrix::zeros(0, 0)
    } else {
        Matrix::from_columns(&cols)
    };
    finish(m, eigenvalues, blocks, v, tol)
}

/// Accepts a caller-supplied block structure and `V`, verifying the
/// reconstruction.
pub fn spectral_with_structure(
    m: &Matrix,
    specs: &[BlockSpec],
    v: Matrix,
    tol: &Tolerances,
) -> Result<SpectralInfo> {
    let n = m.nrows();
    if v.nrows() != n || v.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.nrows().max(v.ncols()),
        });
    }
    let mut blocks = Vec::with_capacity(specs.len());
    let mut eigenvalues = Vec::with_capacity(n);
    let mut start = 0;
    for s in specs {
        let (kind, size) = match *s {
            BlockSpec::Zero { size } => (BlockKind::Zero, size),
            BlockSpec::Real { lambda, size } => (BlockKind::Real { lambda }, size),
            BlockSpec::Complex { a, b, size } => {
                if size % 2 != 0 || b <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "complex override blocks need even size and b > 0".into(),
                    ));
                }
                (BlockKind::Complex { a, b }, size)
            }
        };
        if size == 0 {
            return Err(Error::InvalidArgument("override block of size 0".into()));
        }
        match kind {
            BlockKind::Zero => eigenvalues.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), size)),
            BlockKind::Real { lambda } => {
                eigenvalues.extend(std::iter::repeat_n(Complex64::new(lambda, 0.0), size))
            }
            BlockKind::Complex { a, b } => {
                for _ in 0..size / 2 {
                    eigenvalues.push(Complex64::new(a, b));
                    eigenvalues.push(Complex64::new(a, -b));
                }
            }
        }
        let chain_len = if let BlockKind::Complex { .. } = kind {
            size / 2
        } else {
            size
        };
        blocks.push(JordanBlock {
            kind,
            size,
            nilpotent: !matches!(kind, BlockKind::Zero) && chain_len > 1,
            start,
        });
        start += size;
    }
    if start != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: start,
        });
    }
    // Keep zero blocks first, as the automatic path does.
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by_key(|&i| !matches!(blocks[i].kind, BlockKind::Zero));
    let mut sorted = Vec::with_capacity(blocks.len());
    let mut cols = Vec::with_capacity(n);
    let mut pos = 0;
    for i in order {
        let b = &blocks[i];
        cols.extend(b.columns().map(|c| v.column(c).into_owned()));
        sorted.push(JordanBlock {
            start: pos,
            ..b.clone()
        });
        pos += b.size;
    }
    let v = if n == 0 { v } else { Matrix::from_columns(&cols) };
    finish(m, eigenvalues, sorted, v, tol)
}

fn finish(
    m: &Matrix,
    eigenvalues: Vec<Complex64>,
    blocks: Vec<JordanBlock>,
    v: Matrix,
    tol: &Tolerances,
) -> Result<SpectralInfo> {
    let n = m.nrows();
    let v_inv = v.clone().try_inverse().ok_or(Error::Spectral {
        reason: "eigenvector matrix V is singular".into(),
        residual: f64::INFINITY,
        tolerance: tol.recon,
    })?;
    let j = real_jordan_matrix(&blocks, n);
    let residual = inf_norm(&(&v * j * &v_inv - m));
    let bound = tol.recon * inf_norm(m).max(if n == 0 { 0.0 } else { 1e-300 });
    if !(residual <= bound || (inf_norm(m) == 0.0 && residual <= tol.recon)) {
        return Err(Error::Spectral {
            reason: "reconstruction V J V^-1 does not match the input".into(),
            residual,
            tolerance: bound,
        });
    }
    Ok(SpectralInfo {
        eigenvalues,
        blocks,
        v,
        v_inv,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn diagonal() {
        let m = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, -1.0, -2.0]));
        let s = spectral(&m, &tol()).unwrap();
        assert_eq!(s.blocks.len(), 3);
        assert_eq!(s.blocks[0].kind, BlockKind::Zero);
        assert_eq!(s.blocks[0].size, 1);
        assert_eq!(s.blocks[1].kind, BlockKind::Real { lambda: -1.0 });
        assert_eq!(s.blocks[2].kind, BlockKind::Real { lambda: -2.0 });
    }

    #[test]
    fn nilpotent_two_block() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let s = spectral(&m, &tol()).unwrap();
        assert_eq!(s.blocks.len(), 1);
        let b = &s.blocks[0];
        assert_eq!(b.kind, BlockKind::Real { lambda: 0.0 });
        assert_eq!(b.size, 2);
        assert!(b.nilpotent);
        assert_eq!(s.zero_multiplicity(), 2);
    }

    #[test]
    fn complex_pair() {
        let m = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        let s = spectral(&m, &tol()).unwrap();
        assert_eq!(s.blocks.len(), 1);
        match s.blocks[0].kind {
            BlockKind::Complex { a, b } => {
                assert!((a + 1.0).abs() < 1e-12);
                assert!((b - 2.0).abs() < 1e-12);
            }
            ref k => panic!("expected a complex block, got {k:?}"),
        }
        assert_eq!(s.blocks[0].size, 2);
    }

    #[test]
    fn zero_matrix_is_one_zero_block() {
        let s = spectral(&Matrix::zeros(2, 2), &tol()).unwrap();
        assert_eq!(s.blocks.len(), 1);
        assert_eq!(s.blocks[0].kind, BlockKind::Zero);
        assert_eq!(s.blocks[0].size, 2);
    }

    #[test]
    fn defective_complex_block() {
        // Real Jordan form of a size-2 chain at -0.5 +- 1.5i, conjugated by a
        // fixed well-conditioned matrix.
        let j = real_jordan_matrix(
            &[JordanBlock {
                kind: BlockKind::Complex { a: -0.5, b: 1.5 },
                size: 4,
                nilpotent: true,
                start: 0,
            }],
            4,
        );
        let p = Matrix::from_row_slice(
            4,
            4,
            &[2.0, 1.0, 0.0, 0.5, 0.0, 1.0, 0.3, 0.0, 0.1, 0.0, 1.0, 0.2, 0.0, 0.4, 0.0, 1.0],
        );
        let m = &p * j * p.clone().try_inverse().unwrap();
        let s = spectral(&m, &tol()).unwrap();
        assert_eq!(s.blocks.len(), 1);
        assert_eq!(s.blocks[0].size, 4);
        assert!(s.blocks[0].nilpotent);
    }

    #[test]
    fn jordan_override() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let specs = [BlockSpec::Real { lambda: 0.0, size: 2 }];
        let s = spectral_with_structure(&m, &specs, Matrix::identity(2, 2), &tol()).unwrap();
        assert!(s.residual < 1e-15);
        let bad = spectral_with_structure(
            &m,
            &[BlockSpec::Zero { size: 2 }],
            Matrix::identity(2, 2),
            &tol(),
        );
        assert!(matches!(bad, Err(Error::Spectral { .. })));
    }

    #[test]
    fn override_json_shape() {
        let specs: Vec<BlockSpec> = serde_json::from_str(
            r#"[{"kind":"zero","size":1},{"kind":"real","lambda":-1.0,"size":1},{"kind":"complex","a":-1.0,"b":2.0,"size":2}]"#,
        )
        .unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[2], BlockSpec::Complex { a: -1.0, b: 2.0, size: 2 });
    }

    proptest! {
        #[test]
        fn reconstruction_of_random_matrices(e in proptest::collection::vec(-2.0f64..2.0, 25)) {
            let m = Matrix::from_row_slice(5, 5, &e);
            let s = spectral(&m, &tol()).unwrap();
            let r = &s.v * s.j() * &s.v_inv - &m;
            prop_assert!(inf_norm(&r) <= 1e-6 * inf_norm(&m));
            let total: usize = s.blocks.iter().map(|b| b.size).sum();
            prop_assert_eq!(total, 5);
        }
    }
}
