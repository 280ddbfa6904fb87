//! Fixtures shared by the benchmarks.

use polycube::{Matrix, Polynomial, ProcessSpec};

/// Ornstein–Uhlenbeck process `dX = (0.5 - X) dt + dW`.
pub fn ou() -> ProcessSpec {
    ProcessSpec::pearson(1.0, 0.5, 1.0, 0.0, 0.0)
}

/// A two-dimensional process with rotating drift and constant diffusion.
pub fn rotating() -> ProcessSpec {
    let p = |terms: &[(&[u32], f64)]| {
        Polynomial::from_terms(2, terms.iter().map(|(a, c)| (a.to_vec(), *c))).unwrap()
    };
    ProcessSpec::new(
        vec![
            p(&[(&[1, 0], -0.5), (&[0, 1], 1.0)]),
            p(&[(&[1, 0], -1.0), (&[0, 1], -0.5)]),
        ],
        vec![
            vec![p(&[(&[0, 0], 0.4)]), p(&[(&[0, 0], 0.1)])],
            vec![p(&[(&[0, 0], 0.1)]), p(&[(&[0, 0], 0.3)])],
        ],
    )
    .unwrap()
}

/// Deterministic dense matrix with entries in `[-1, 1]`.
pub fn dense(rows: usize, cols: usize, salt: u64) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| {
        let mut z = (i as u64 * 7919 + j as u64 * 104_729 + salt).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z ^= z >> 31;
        (z % 2001) as f64 / 1000.0 - 1.0
    })
}
