//! Polynomial diffusions `Gp = b . grad p + 1/2 sum_ij a_ij d_i d_j p` and
//! their generator matrices on `Pol_n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::polynomials::{basis_indices, multiply, MonomialBasis, Polynomial};
use crate::Matrix;

/// Drift `b` (degree <= 1 per component) and symmetric diffusion matrix `a`
/// (degree <= 2 per entry) of a polynomial diffusion on `E ⊆ R^d`.
///
/// Degree bounds are not enforced here: a spec that violates them is
/// representable and is rejected by [`build_g`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ProcessSpec {
    d: usize,
    drift: Vec<Polynomial>,
    diffusion: Vec<Vec<Polynomial>>,
    constraints: Vec<Polynomial>,
    bbox: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    d: usize,
    drift: Vec<Polynomial>,
    diffusion: Vec<Vec<Polynomial>>,
    #[serde(default)]
    constraints: Vec<Polynomial>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    bbox: Option<Vec<[f64; 2]>>,
}

impl TryFrom<RawSpec> for ProcessSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let mut spec = ProcessSpec::new(raw.drift, raw.diffusion)?;
        if spec.d != raw.d {
            return Err(Error::DimensionMismatch {
                expected: raw.d,
                got: spec.d,
            });
        }
        spec = spec.with_constraints(raw.constraints)?;
        if let Some(b) = raw.bbox {
            spec = spec.with_box(b)?;
        }
        Ok(spec)
    }
}

impl From<ProcessSpec> for RawSpec {
    fn from(s: ProcessSpec) -> Self {
        RawSpec {
            d: s.d,
            drift: s.drift,
            diffusion: s.diffusion,
            constraints: s.constraints,
            bbox: Some(s.bbox),
        }
    }
}

const DEFAULT_BOX: [f64; 2] = [-5.0, 5.0];

impl ProcessSpec {
    pub fn new(drift: Vec<Polynomial>, diffusion: Vec<Vec<Polynomial>>) -> Result<Self> {
        let d = drift.len();
        if d == 0 {
            return Err(Error::InvalidArgument("drift must have at least one component".into()));
        }
        if diffusion.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: diffusion.len(),
            });
        }
        for row in &diffusion {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
        }
        for p in drift.iter().chain(diffusion.iter().flatten()) {
            if p.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.dim(),
                });
            }
        }
        for i in 0..d {
            for j in 0..i {
                let diff = &diffusion[i][j] - &diffusion[j][i];
                if !diff.is_zero() {
                    return Err(Error::InvalidArgument(format!(
                        "diffusion matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(ProcessSpec {
            d,
            drift,
            diffusion,
            constraints: Vec::new(),
            bbox: vec![DEFAULT_BOX; d],
        })
    }

    /// One-dimensional family with `b = kappa (theta - x)` and
    /// `a = kappa (alpha + a x + A x^2)`.
    pub fn pearson(kappa: f64, theta: f64, alpha: f64, a: f64, big_a: f64) -> Self {
        let drift = Polynomial::univariate(&[kappa * theta, -kappa]);
        let diff = Polynomial::univariate(&[kappa * alpha, kappa * a, kappa * big_a]);
        ProcessSpec::new(vec![drift], vec![vec![diff]]).expect("valid 1-d spec")
    }

    /// State space `{x : q(x) >= 0 for all q}`, used for sampling only.
    pub fn with_constraints(mut self, constraints: Vec<Polynomial>) -> Result<Self> {
        if let Some(q) = constraints.iter().find(|q| q.dim() != self.d) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: q.dim(),
            });
        }
        self.constraints = constraints;
        Ok(self)
    }

    /// Bounding box for sampling, one `[lo, hi]` pair per coordinate.
    pub fn with_box(mut self, bbox: Vec<[f64; 2]>) -> Result<Self> {
        if bbox.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: bbox.len(),
            });
        }
        if bbox.iter().any(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(Error::InvalidArgument("box bounds must be finite with lo < hi".into()));
        }
        self.bbox = bbox;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn drift(&self) -> &[Polynomial] {
        &self.drift
    }

    pub fn diffusion(&self) -> &[Vec<Polynomial>] {
        &self.diffusion
    }

    pub fn constraints(&self) -> &[Polynomial] {
        &self.constraints
    }

    pub fn bounding_box(&self) -> &[[f64; 2]] {
        &self.bbox
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        self.drift.iter().map(|b| b.eval(x)).collect()
    }

    pub fn diffusion_at(&self, x: &[f64]) -> Matrix {
        Matrix::from_fn(self.d, self.d, |i, j| self.diffusion[i][j].eval(x))
    }

    pub fn in_state_space(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|q| q.eval(x) >= 0.0)
    }

    /// Up to `count` points drawn uniformly from the bounding box and kept
    /// when they satisfy the constraints. Gives up after `50 * count` draws.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut draws = 0;
        while out.len() < count && draws < 50 * count.max(1) {
            draws += 1;
            let x: Vec<f64> = self
                .bbox
                .iter()
                .map(|&[lo, hi]| rng.random_range(lo..hi))
                .collect();
            if self.in_state_space(&x) {
                out.push(x);
            }
        }
        out
    }

    /// Samples `E` and records where `a(x)` fails to be PSD or the carré du
    /// champ of a coordinate is negative. A report, never an error.
    pub fn validity_report(&self, samples: usize, seed: u64) -> ValidityReport {
        let pts = self.sample_points(samples, seed);
        let mut min_eig = f64::INFINITY;
        let mut psd_violations = 0;
        let mut gamma_violations = 0;
        let gammas: Vec<Polynomial> = (0..self.d)
            .filter_map(|i| carre_du_champ(self, &Polynomial::var(self.d, i)).ok())
            .collect();
        for x in &pts {
            let a = self.diffusion_at(x);
            let scale = 1.0 + inf_norm(&a);
            let e = a.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
            min_eig = min_eig.min(e);
            if e < -1e-12 * scale {
                psd_violations += 1;
            }
            if gammas.iter().any(|g| g.eval(x) < -1e-12 * scale) {
                gamma_violations += 1;
            }
        }
        ValidityReport {
            samples: pts.len(),
            psd_violations,
            gamma_violations,
            min_eigenvalue: if pts.is_empty() { f64::NAN } else { min_eig },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    pub samples: usize,
    pub psd_violations: usize,
    pub gamma_violations: usize,
    pub min_eigenvalue: f64,
}

impl ValidityReport {
    pub fn ok(&self) -> bool {
        self.psd_violations == 0 && self.gamma_violations == 0
    }
}

fn check_dim(spec: &ProcessSpec, p: &Polynomial) -> Result<()> {
    if p.dim() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: p.dim(),
        });
    }
    Ok(())
}

/// `Gp = b . grad p + 1/2 sum_ij a_ij d_i d_j p`.
pub fn apply_generator(spec: &ProcessSpec, p: &Polynomial) -> Result<Polynomial> {
    check_dim(spec, p)?;
    let d = spec.d;
    let mut out = Polynomial::zero(d);
    let grads: Vec<Polynomial> = (0..d).map(|i| p.derivative(i)).collect();
    for i in 0..d {
        out = &out + &multiply(&spec.drift[i], &grads[i])?;
    }
    for i in 0..d {
        for j in 0..d {
            let dij = grads[i].derivative(j);
            if !dij.is_zero() {
                out = &out + &multiply(&spec.diffusion[i][j], &dij)?.scale(0.5);
            }
        }
    }
    Ok(out)
}

/// `Gamma p = G(p^2) - 2 p Gp`. Cancellation residue below `1e-14` times
/// the largest intermediate coefficient is dropped.
pub fn carre_du_champ(spec: &ProcessSpec, p: &Polynomial) -> Result<Polynomial> {
    check_dim(spec, p)?;
    let gp2 = apply_generator(spec, &multiply(p, p)?)?;
    let pgp = multiply(p, &apply_generator(spec, p)?)?.scale(2.0);
    let scale = gp2
        .terms()
        .chain(pgp.terms())
        .map(|(_, c)| c.abs())
        .fold(0.0, f64::max);
    Ok((&gp2 - &pgp).prune(1e-14 * scale))
}

/// Smallest degree `k <= n` at which some basis monomial `h` of degree `k`
/// has `deg Gh > k`.
pub fn first_violation(spec: &ProcessSpec, n: usize) -> Option<usize> {
    let basis = basis_indices(spec.d, n).ok()?;
    basis
        .indices()
        .iter()
        .filter_map(|alpha| {
            let h = Polynomial::monomial(alpha.clone(), 1.0);
            let gh = apply_generator(spec, &h).ok()?;
            (gh.degree() > alpha.degree()).then_some(alpha.degree())
        })
        .min()
}

/// Whether `deg Gh <= deg h` for every basis monomial of degree `<= n`.
pub fn check_polynomial_property(spec: &ProcessSpec, n: usize) -> bool {
    first_violation(spec, n).is_none()
}

/// Matrix of the generator on `Pol_n`: column `k` holds the coordinates of
/// `G h_k`, so the generator acts on the basis map as `G^T H_n(x)`.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    pub n: usize,
    pub basis: MonomialBasis,
    pub g: Matrix,
}

impl GeneratorMatrix {
    /// Wraps a precomputed matrix, checking its size against the basis.
    pub fn from_matrix(basis: MonomialBasis, g: Matrix) -> Result<Self> {
        let n = basis.len();
        if g.nrows() != n || g.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.nrows().max(g.ncols()),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator matrix"));
        }
        Ok(GeneratorMatrix {
            n: basis.degree(),
            basis,
            g,
        })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.g)
    }

    /// The leading block acting on `Pol_k`, `k <= n`.
    pub fn leading(&self, k: usize) -> Result<GeneratorMatrix> {
        if k > self.n {
            return Err(Error::DegreeOverflow {
                degree: k,
                max: self.n,
            });
        }
        let basis = basis_indices(self.dim(), k)?;
        let m = basis.len();
        Ok(GeneratorMatrix {
            n: k,
            g: self.g.view((0, 0), (m, m)).into_owned(),
            basis,
        })
    }
}

pub fn build_g(spec: &ProcessSpec, n: usize) -> Result<GeneratorMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("basis degree n must be at least 1".into()));
    }
    if let Some(degree) = first_violation(spec, n) {
        return Err(Error::NotPolynomialPreserving { degree });
    }
    let basis = basis_indices(spec.d, n)?;
    let size = basis.len();
    let mut g = Matrix::zeros(size, size);
    for k in 0..size {
        let gh = apply_generator(spec, &basis.monomial(k))?;
        g.set_column(k, &basis.to_coordinates(&gh)?);
    }
    Ok(GeneratorMatrix { n, basis, g })
}
