//! Conditional moments `E_x[p(X_t)] = H_n(x)^T e^{tG} p`, multi-time
//! moments, and the long-run limit of `e^{tG}`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::generator::GeneratorMatrix;
use crate::linalg::{expm, rank, spectral, spectral_norm, vec_inf_norm, BlockKind, SpectralInfo};
use crate::polynomials::{eval_basis, multiply, Polynomial};
use crate::tolerance::Tolerances;
use crate::{Matrix, Vector};

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// `H_n(x)^T e^{tG} p`.
pub fn moment(g: &GeneratorMatrix, x: &[f64], p: &Polynomial, t: f64) -> Result<f64> {
    check_time(t)?;
    let h = eval_basis(x, &g.basis)?;
    let coords = g.basis.to_coordinates(p)?;
    if t == 0.0 {
        return Ok(h.dot(&coords));
    }
    Ok(h.dot(&(expm(&(&g.g * t))? * coords)))
}

/// `E_x[p_1(X_{t_1}) ... p_l(X_{t_l})]` for ascending times, by backward
/// recursion: `r <- p_i * (e^{(t_{i+1} - t_i) G} r)`.
pub fn multi_time_moment(
    g: &GeneratorMatrix,
    x: &[f64],
    schedule: &[(f64, Polynomial)],
) -> Result<f64> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty schedule".into()));
    }
    for (t, _) in schedule {
        check_time(*t)?;
    }
    if schedule.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::InvalidArgument("schedule times must be ascending".into()));
    }
    let basis = &g.basis;
    let l = schedule.len();
    let mut r = schedule[l - 1].1.clone();
    if r.degree() > g.n {
        return Err(Error::ScheduleDegreeOverflow {
            step: l - 1,
            degree: r.degree(),
            max: g.n,
        });
    }
    for i in (0..l - 1).rev() {
        let dt = schedule[i + 1].0 - schedule[i].0;
        let coords = expm(&(&g.g * dt))? * basis.to_coordinates(&r)?;
        let propagated = basis.from_coordinates(&coords)?;
        r = multiply(&schedule[i].1, &propagated)?;
        if r.degree() > g.n {
            return Err(Error::ScheduleDegreeOverflow {
                step: i,
                degree: r.degree(),
                max: g.n,
            });
        }
    }
    moment(g, x, &r, schedule[0].0)
}

/// Eigenvalue diagnostics behind Assumptions A1 and A2.
#[derive(Clone, Debug)]
pub struct AssumptionCheck {
    pub a1: bool,
    pub a2: bool,
    pub eigenvalues: Vec<Complex64>,
    /// Total multiplicity of eigenvalues within the clustering radius of 0.
    pub zero_multiplicity: usize,
    /// Nonzero eigenvalues with real part `>= -tau_cluster`.
    pub offending: Vec<Complex64>,
    /// `dim ker G == dim ker G^2`.
    pub zero_semisimple: bool,
}

impl AssumptionCheck {
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if !self.offending.is_empty() {
            parts.push(format!(
                "nonzero eigenvalues without negative real part: {}",
                fmt_eigs(&self.offending)
            ));
        }
        if !self.zero_semisimple {
            parts.push("eigenvalue 0 is defective (dim ker G != dim ker G^2)".to_string());
        }
        if self.a1 && !self.a2 {
            parts.push(format!("eigenvalue 0 has multiplicity {}", self.zero_multiplicity));
        }
        parts.join("; ")
    }
}

pub(crate) fn fmt_eigs(e: &[Complex64]) -> String {
    let items: Vec<String> = e
        .iter()
        .map(|z| {
            if z.im == 0.0 {
                format!("{:.6e}", z.re)
            } else {
                format!("{:.6e}{:+.6e}i", z.re, z.im)
            }
        })
        .collect();
    format!("[{}]", items.join(", "))
}

pub fn check_assumptions(g: &GeneratorMatrix, tol: &Tolerances) -> Result<AssumptionCheck> {
    let m = &g.g;
    let tau = tol.cluster_for(spectral_norm(m));
    let eigenvalues = crate::linalg::eigenvalues(m);
    let zero_multiplicity = eigenvalues.iter().filter(|z| z.norm() <= tau).count();
    let offending: Vec<Complex64> = eigenvalues
        .iter()
        .filter(|z| z.norm() > tau && z.re >= -tau)
        .cloned()
        .collect();
    let n = m.nrows();
    let ker1 = n - rank(m, tol.rank);
    let ker2 = n - rank(&(m * m), tol.rank);
    let zero_semisimple = ker1 == ker2 && ker1 == zero_multiplicity;
    let a1 = offending.is_empty() && zero_semisimple;
    let a2 = a1 && zero_multiplicity == 1;
    Ok(AssumptionCheck {
        a1,
        a2,
        eigenvalues,
        zero_multiplicity,
        offending,
        zero_semisimple,
    })
}

/// Assumption A1: `e^{tG}` converges as `t -> infinity`.
pub fn check_a1(g: &GeneratorMatrix, tol: &Tolerances) -> Result<bool> {
    Ok(check_assumptions(g, tol)?.a1)
}

/// Assumption A2: A1 and 0 is a simple eigenvalue.
pub fn check_a2(g: &GeneratorMatrix, tol: &Tolerances) -> Result<bool> {
    Ok(check_assumptions(g, tol)?.a2)
}

#[derive(Clone, Debug)]
pub struct AsymptoticMoments {
    pub a1_holds: bool,
    pub a2_holds: bool,
    /// `lim e^{tG}`, present iff A1 holds.
    pub limit_matrix: Option<Matrix>,
    /// Long-run moments of the basis monomials, present iff A2 holds.
    pub mu: Option<Vector>,
    pub check: AssumptionCheck,
    pub spectral: Option<SpectralInfo>,
    /// Empty when A2 holds.
    pub diagnostic: String,
}

impl AsymptoticMoments {
    /// `lim_t E_x[h_j(X_t)]` for all `j`, available whenever A1 holds.
    pub fn limit_at(&self, g: &GeneratorMatrix, x: &[f64]) -> Result<Option<Vector>> {
        match &self.limit_matrix {
            None => Ok(None),
            Some(lim) => Ok(Some(lim.tr_mul(&eval_basis(x, &g.basis)?))),
        }
    }
}

const MU_SAMPLES: usize = 5;

pub fn asymptotic(g: &GeneratorMatrix, tol: &Tolerances) -> Result<AsymptoticMoments> {
    let check = check_assumptions(g, tol)?;
    if !check.a1 {
        return Ok(AsymptoticMoments {
            a1_holds: false,
            a2_holds: false,
            limit_matrix: None,
            mu: None,
            diagnostic: check.describe(),
            check,
            spectral: None,
        });
    }
    let info = spectral(&g.g, tol)?;
    let zero_cols: Vec<usize> = info
        .blocks
        .iter()
        .filter(|b| matches!(b.kind, BlockKind::Zero))
        .flat_map(|b| b.columns())
        .collect();
    if zero_cols.len() != check.zero_multiplicity {
        return Err(Error::Spectral {
            reason: format!(
                "zero block of size {} but eigenvalue 0 has multiplicity {}",
                zero_cols.len(),
                check.zero_multiplicity
            ),
            residual: info.residual,
            tolerance: tol.recon,
        });
    }
    let n = g.g.nrows();
    let mut limit = Matrix::zeros(n, n);
    for &c in &zero_cols {
        limit += info.v.column(c) * info.v_inv.row(c);
    }

    let mut mu = None;
    if check.a2 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let samples: Vec<Vector> = (0..MU_SAMPLES)
            .map(|_| {
                let x: Vec<f64> = (0..g.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                eval_basis(&x, &g.basis).map(|h| limit.tr_mul(&h))
            })
            .collect::<Result<_>>()?;
        let mean = samples.iter().fold(Vector::zeros(n), |acc, s| acc + s) / MU_SAMPLES as f64;
        let spread = samples
            .iter()
            .map(|s| vec_inf_norm(&(s - &mean)))
            .fold(0.0, f64::max);
        let bound = 1e-8 * (1.0 + vec_inf_norm(&mean));
        if spread >= bound {
            return Err(Error::Spectral {
                reason: "long-run moments depend on the starting point although 0 is simple"
                    .into(),
                residual: spread,
                tolerance: bound,
            });
        }
        mu = Some(mean);
    }
    Ok(AsymptoticMoments {
        a1_holds: true,
        a2_holds: check.a2,
        limit_matrix: Some(limit),
        mu,
        diagnostic: if check.a2 { String::new() } else { check.describe() },
        check,
        spectral: Some(info),
    })
}
