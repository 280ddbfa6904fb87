//! Dense numerical kernels: matrix exponential, real Jordan structure,
//! rank decisions and cone membership.

mod cone;
mod expm;
mod spectral;

pub use cone::{cone_membership, nnls, ConeMembershipResult, Nnls};
pub use expm::expm;
pub(crate) use spectral::eigenvalues;
pub use spectral::{
    real_jordan_matrix, spectral, spectral_with_structure, BlockKind, BlockSpec, JordanBlock,
    SpectralInfo,
};

use nalgebra::{ComplexField, DMatrix, SVD};

use crate::{Matrix, Vector};

/// Rank as the number of singular values above `tau * sigma_max`.
pub fn rank(m: &Matrix, tau: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tau * smax).count()
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

pub fn vec_inf_norm(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Orthonormal basis of the right null space, using the relative threshold
/// `tau * sigma_max`. A zero matrix has the whole space as null space.
pub(crate) fn null_space<T>(a: &DMatrix<T>, tau: f64) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let n = a.ncols();
    // Pad with zero rows so the SVD yields a full set of right vectors.
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::<T>::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= tau * smax)
        .map(|i| v_t.row(i).adjoint())
        .collect();
    if cols.is_empty() {
        DMatrix::<T>::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column span, singular values above
/// `tau * sigma_max`, ordered by decreasing singular value.
pub(crate) fn column_basis<T>(a: &DMatrix<T>, tau: f64) -> DMatrix<T>
where
    T: ComplexField<RealField = f64>,
{
    let m = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::<T>::zeros(m, 0);
    }
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.expect("requested U");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..sv.len()).filter(|&i| smax > 0.0 && sv[i] > tau * smax).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    let cols: Vec<_> = order.iter().map(|&i| u.column(i).into_owned()).collect();
    if cols.is_empty() {
        DMatrix::<T>::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Moore–Penrose pseudo-inverse.
pub fn pinv(m: &Matrix, tau: f64) -> Matrix {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.pseudo_inverse(tau * smax.max(f64::MIN_POSITIVE))
        .expect("SVD computed with U and V")
}

/// Row-major conversion for serialization.
pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> crate::Result<Matrix> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != nc) {
        return Err(crate::Error::DimensionMismatch {
            expected: nc,
            got: bad.len(),
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(crate::Error::NonFinite("matrix"));
    }
    Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&Matrix::identity(4, 4), 1e-10), 4);
        let u = Vector::from_vec(vec![1.0, 2.0, -1.0]);
        let v = Vector::from_vec(vec![0.5, 3.0]);
        assert_eq!(rank(&(&u * v.transpose()), 1e-10), 1);
        assert_eq!(rank(&Matrix::zeros(3, 3), 1e-10), 0);
        // Vandermonde at three distinct points
        let pts = [-1.0, 0.5, 2.0];
        let h = Matrix::from_fn(3, 3, |i, j| f64::powi(pts[i], j as i32));
        assert_eq!(rank(&h, 1e-10), 3);
    }

    #[test]
    fn null_space_of_nilpotent() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let k = null_space(&a, 1e-10);
        assert_eq!(k.ncols(), 1);
        assert!((k[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert_eq!(null_space(&(&a * &a), 1e-10).ncols(), 2);
    }

    proptest! {
        #[test]
        fn rank_permutation_invariant(entries in proptest::collection::vec(-3.0f64..3.0, 12),
                                      zero_row in 0usize..4, seed in 0u64..1000) {
            let mut m = Matrix::from_row_slice(4, 3, &entries);
            // force some structure so ranks below full occur
            if seed % 2 == 0 {
                let r = m.row(0).into_owned();
                m.set_row(zero_row, &(r * 2.0));
            }
            let r0 = rank(&m, 1e-10);
            let mut perm: Vec<usize> = (0..4).collect();
            perm.rotate_left((seed % 4) as usize);
            let p = Matrix::from_fn(4, 3, |i, j| m[(perm[i], (j + seed as usize) % 3)]);
            prop_assert_eq!(rank(&p, 1e-10), r0);
        }
    }
}
