//! Markov cubature rules for polynomial diffusions.
//!
//! A polynomial diffusion maps each space of polynomials of degree at most
//! `n` into itself, so its conditional moments reduce to a matrix
//! exponential `H_n(x)^T exp(tG) p`. This crate builds that generator matrix
//! and uses it to construct finite-state Markov chains that reproduce those
//! moments:
//!
//! * [`cubature_ct`]: continuous-time rules `(points, L)` with `HG = LH`,
//!   checked row by row as cone-membership problems.
//! * [`cubature_lifted`]: lifted rules `(S, L)` with `SG = LS`, built from the
//!   real Jordan form of `G^T`, plus their signed-measure representation and
//!   weight matrices `W(t)`.
//! * [`cubature_dt`]: discrete-time rules `(points, delta, Q)` with
//!   `H exp(delta G) = Q H`, seeded from asymptotic-moment cubatures.
//! * [`simulate`]: Euler–Maruyama and CTMC/DTMC ensembles for Monte Carlo
//!   cross-checks.

pub mod cubature_ct;
pub mod cubature_dt;
pub mod cubature_lifted;
pub mod error;
pub mod generator;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod polynomials;
pub mod simulate;
pub mod tolerance;

pub use cubature_ct::{build_h, check_ct, lagrange_check, verify_ct, CtCheck, CtReport, CtRule};
pub use cubature_dt::{
    discrete_rule, find_delta, gauss_for_spec, gauss_points_1d, q_at, tchakaloff_select,
    verify_dt, DeltaSearch, DtReport, DtRule, StaticCubature,
};
pub use cubature_lifted::{
    lift, polygon_order, to_signed_measures, two_time_expectation, weights_matrix, LiftedRule,
    Provenance, SignedMeasureRule,
};
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use generator::{apply_generator, build_g, carre_du_champ, GeneratorMatrix, ProcessSpec};
pub use linalg::{cone_membership, expm, rank, spectral, ConeMembershipResult, SpectralInfo};
pub use moments::{
    asymptotic, check_a1, check_a2, check_assumptions, moment, multi_time_moment, AsymptoticMoments,
};
pub use simulate::{compare_moments, simulate_ctmc, simulate_dtmc, simulate_sde, SimConfig, SimReport};
pub use polynomials::{basis_indices, eval_basis, MonomialBasis, MultiIndex, Polynomial};
pub use tolerance::Tolerances;

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
