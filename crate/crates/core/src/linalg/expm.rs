//! Matrix exponential via scaling-and-squaring with the diagonal Padé(13)
//! approximant.

use crate::error::{Error, Result};
use crate::Matrix;

// Padé(13) numerator coefficients b_0..b_13.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which Padé(13) reaches double precision.
const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Computes `e^M` for a square matrix with finite entries.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("expm input"));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let norm = one_norm(m);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m * 2f64.powi(-s);

    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or(Error::Singular("Padé denominator in expm"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Classical RK4 on Y' = M Y, Y(0) = I, as an independent oracle.
    fn rk4_exp(m: &Matrix, t: f64, steps: usize) -> Matrix {
        let n = m.nrows();
        let h = t / steps as f64;
        let mut y = Matrix::identity(n, n);
        for _ in 0..steps {
            let k1 = m * &y;
            let k2 = m * (&y + &k1 * (h / 2.0));
            let k3 = m * (&y + &k2 * (h / 2.0));
            let k4 = m * (&y + &k3 * h);
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        y
    }

    #[test]
    fn zero_gives_identity() {
        let e = expm(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(e, Matrix::identity(3, 3));
    }

    #[test]
    fn pearson_first_order_generator() {
        // G_1 for kappa = 1, theta = 0.5
        let g = Matrix::from_row_slice(2, 2, &[0.0, 0.5, 0.0, -1.0]);
        let e = expm(&g).unwrap();
        let ode = rk4_exp(&g, 1.0, 2000);
        assert!((e - &ode).abs().max() < 1e-12);
        assert!((ode[(0, 1)] - 0.31606).abs() < 5e-6);
        assert!((ode[(1, 1)] - 0.36788).abs() < 5e-6);
        assert_eq!(ode[(1, 0)], 0.0);
    }

    #[test]
    fn large_norm_uses_squaring() {
        let g = Matrix::from_row_slice(2, 2, &[-20.0, 3.0, 1.0, -15.0]);
        let e = expm(&g).unwrap();
        let ode = rk4_exp(&g, 1.0, 20000);
        assert!((e - ode).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(expm(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn triangular_stays_triangular() {
        let g = Matrix::from_row_slice(3, 3, &[0.0, 0.5, 1.0, 0.0, -1.0, 1.0, 0.0, 0.0, -2.0]);
        let e = expm(&(g * 0.7)).unwrap();
        assert_eq!(e[(1, 0)], 0.0);
        assert_eq!(e[(2, 0)], 0.0);
        assert_eq!(e[(2, 1)], 0.0);
        assert!((e[(1, 1)] - (-0.7f64).exp()).abs() < 1e-14);
        assert!((e[(2, 2)] - (-1.4f64).exp()).abs() < 1e-14);
    }

    fn stable_matrix() -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, 16).prop_map(|v| {
            let mut m = Matrix::from_row_slice(4, 4, &v);
            for i in 0..4 {
                m[(i, i)] -= 3.0;
            }
            m
        })
    }

    proptest! {
        #[test]
        fn semigroup_law(m in stable_matrix(), s in 0.01f64..2.0, t in 0.01f64..2.0) {
            let lhs = expm(&(&m * (s + t))).unwrap();
            let rhs = expm(&(&m * s)).unwrap() * expm(&(&m * t)).unwrap();
            let scale = lhs.abs().max().max(1e-300);
            prop_assert!((lhs - rhs).abs().max() <= 1e-10 * scale);
        }
    }
}
