//! Sparse multivariate polynomials over `f64` and the graded-lexicographic
//! monomial basis of `Pol_n(R^d)`.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::Vector;

/// Exponent vector of a monomial `x^alpha`.
///
/// Ordered graded-lexicographically: total degree first, then the exponent
/// vectors compared lexicographically, so `(0,1) < (1,0) < (0,2) < (1,1)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    /// The multi-index of the coordinate function `x_i`.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Evaluates `x^alpha`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A polynomial on `R^d` with `f64` coefficients. Zero coefficients are
/// never stored; the zero polynomial has degree 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Polynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::monomial(MultiIndex::zero(dim), c)
    }

    /// The coordinate function `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        Self::monomial(MultiIndex::unit(dim, i), 1.0)
    }

    pub fn monomial(alpha: MultiIndex, c: f64) -> Self {
        let mut p = Polynomial::zero(alpha.dim());
        p.add_term(alpha, c);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs. Repeated
    /// exponents are summed.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Polynomial::zero(dim);
        for (alpha, c) in terms {
            if alpha.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: alpha.len(),
                });
            }
            if !c.is_finite() {
                return Err(Error::NonFinite("polynomial coefficient"));
            }
            p.add_term(MultiIndex(alpha), c);
        }
        Ok(p)
    }

    /// Univariate polynomial from ascending coefficients `c0 + c1 x + ...`.
    pub fn univariate(coeffs: &[f64]) -> Self {
        let mut p = Polynomial::zero(1);
        for (k, &c) in coeffs.iter().enumerate() {
            p.add_term(MultiIndex(vec![k as u32]), c);
        }
        p
    }

    fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        debug_assert_eq!(alpha.dim(), self.dim);
        match self.terms.entry(alpha) {
            Entry::Vacant(v) => {
                if c != 0.0 {
                    v.insert(c);
                }
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(k, &v)| (k, v))
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.terms.iter().map(|(a, &c)| c * a.eval(x)).sum()
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        if s != 0.0 {
            for (a, &c) in &self.terms {
                out.add_term(a.clone(), c * s);
            }
        }
        out
    }

    /// Partial derivative with respect to `x_i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        for (a, &c) in &self.terms {
            let e = a.0[i];
            if e > 0 {
                let mut b = a.0.clone();
                b[i] -= 1;
                out.add_term(MultiIndex(b), c * e as f64);
            }
        }
        out
    }

    /// Drops coefficients with magnitude at most `tol`.
    pub fn prune(&self, tol: f64) -> Polynomial {
        Polynomial {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(a, &c)| (a.clone(), c))
                .collect(),
        }
    }

    fn check_dim(&self, other: &Polynomial) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }
}

/// Exact coefficient convolution `p * q`.
pub fn multiply(p: &Polynomial, q: &Polynomial) -> Result<Polynomial> {
    p.check_dim(q)?;
    let mut out = Polynomial::zero(p.dim);
    for (a, &c) in &p.terms {
        for (b, &e) in &q.terms {
            out.add_term(a.plus(b), c * e);
        }
    }
    Ok(out)
}

impl Add for &Polynomial {
    type Output = Polynomial;

    /// Panics on dimension mismatch.
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.dim, rhs.dim, "polynomial dimension mismatch");
        let mut out = self.clone();
        for (a, &c) in &rhs.terms {
            out.add_term(a.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;

    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;

    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;

    /// Panics on dimension mismatch; use [`multiply`] for a fallible product.
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        multiply(self, rhs).expect("polynomial dimension mismatch")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (a, &c) in &self.terms {
            let factors: Vec<String> = a
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(i, &e)| if e == 1 { format!("x{}", i + 1) } else { format!("x{}^{e}", i + 1) })
                .collect();
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            match (first, sign) {
                (true, "-") => write!(f, "-")?,
                (true, _) => {}
                (false, s) => write!(f, " {s} ")?,
            }
            first = false;
            if factors.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{mag}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    alpha: Vec<u32>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct PolynomialRepr {
    d: usize,
    terms: Vec<TermRepr>,
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolynomialRepr {
            d: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(a, &c)| TermRepr {
                    alpha: a.0.clone(),
                    c,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PolynomialRepr::deserialize(d)?;
        Polynomial::from_terms(repr.d, repr.terms.into_iter().map(|t| (t.alpha, t.c)))
            .map_err(serde::de::Error::custom)
    }
}

/// The monomials of degree at most `n` in `d` variables, graded-lex ordered
/// with the constant monomial first.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    d: usize,
    n: usize,
    indices: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
}

impl PartialEq for MonomialBasis {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.n == other.n
    }
}

impl MonomialBasis {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    /// `N_n = binomial(d + n, n)`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.position.get(alpha).copied()
    }

    /// The basis monomial `h_k` as a polynomial.
    pub fn monomial(&self, k: usize) -> Polynomial {
        Polynomial::monomial(self.indices[k].clone(), 1.0)
    }

    /// Number of basis elements of degree at most `k`.
    pub fn count_up_to(&self, k: usize) -> usize {
        self.indices.iter().take_while(|a| a.degree() <= k).count()
    }

    /// Coordinates of `p` in this basis.
    pub fn to_coordinates(&self, p: &Polynomial) -> Result<Vector> {
        if p.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: p.dim(),
            });
        }
        if p.degree() > self.n {
            return Err(Error::DegreeOverflow {
                degree: p.degree(),
                max: self.n,
            });
        }
        let mut v = Vector::zeros(self.len());
        for (a, c) in p.terms() {
            v[self.position[a]] = c;
        }
        Ok(v)
    }

    /// Inverse of [`MonomialBasis::to_coordinates`].
    pub fn from_coordinates(&self, coords: &Vector) -> Result<Polynomial> {
        if coords.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: coords.len(),
            });
        }
        let mut p = Polynomial::zero(self.d);
        for (a, &c) in self.indices.iter().zip(coords.iter()) {
            if c != 0.0 {
                p.add_term(a.clone(), c);
            }
        }
        Ok(p)
    }
}

/// Enumerates the graded-lex basis of `Pol_n(R^d)`.
pub fn basis_indices(d: usize, n: usize) -> Result<MonomialBasis> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension d must be at least 1".into()));
    }
    let mut indices = Vec::new();
    for deg in 0..=n {
        let mut current = vec![0u32; d];
        compositions(deg as u32, 0, &mut current, &mut indices);
    }
    let position = indices
        .iter()
        .enumerate()
        .map(|(i, a)| (a.clone(), i))
        .collect();
    Ok(MonomialBasis {
        d,
        n,
        indices,
        position,
    })
}

// Lexicographically ascending compositions of `remaining` into the slots
// `slot..d` of `current`.
fn compositions(remaining: u32, slot: usize, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    let d = current.len();
    if slot == d - 1 {
        current[slot] = remaining;
        out.push(MultiIndex(current.clone()));
        return;
    }
    for e in 0..=remaining {
        current[slot] = e;
        compositions(remaining - e, slot + 1, current, out);
    }
    current[slot] = 0;
}

/// `H_n(x) = (h_1(x), ..., h_N(x))`.
pub fn eval_basis(x: &[f64], basis: &MonomialBasis) -> Result<Vector> {
    if x.len() != basis.d {
        return Err(Error::DimensionMismatch {
            expected: basis.d,
            got: x.len(),
        });
    }
    // powers[i][e] = x_i^e
    let powers: Vec<Vec<f64>> = x
        .iter()
        .map(|&xi| {
            let mut row = Vec::with_capacity(basis.n + 1);
            let mut acc = 1.0;
            for _ in 0..=basis.n {
                row.push(acc);
                acc *= xi;
            }
            row
        })
        .collect();
    Ok(Vector::from_iterator(
        basis.len(),
        basis.indices.iter().map(|a| {
            a.0.iter()
                .enumerate()
                .map(|(i, &e)| powers[i][e as usize])
                .product::<f64>()
        }),
    ))
}

/// Number of monomials of degree at most `n` in `d` variables.
pub fn basis_size(d: usize, n: usize) -> usize {
    // binomial(d + n, n), computed incrementally to stay exact.
    (1..=n).fold(1usize, |acc, k| acc * (d + k) / k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn display() {
        let p = Polynomial::from_terms(2, [(vec![0, 0], 1.5), (vec![1, 0], 1.0), (vec![0, 2], -2.0)]).unwrap();
        assert_eq!(p.to_string(), "1.5 + x1 - 2*x2^2");
        assert_eq!(Polynomial::var(1, 0).scale(-1.0).to_string(), "-x1");
        assert_eq!(Polynomial::zero(1).to_string(), "0");
    }

    #[test]
    fn basis_small_cases() {
        let b = basis_indices(1, 2).unwrap();
        assert_eq!(b.indices(), &[idx(&[0]), idx(&[1]), idx(&[2])]);

        let b = basis_indices(2, 2).unwrap();
        assert_eq!(
            b.indices(),
            &[
                idx(&[0, 0]),
                idx(&[0, 1]),
                idx(&[1, 0]),
                idx(&[0, 2]),
                idx(&[1, 1]),
                idx(&[2, 0])
            ]
        );
    }

    #[test]
    fn basis_sizes_match_direct_count() {
        // direct count of exponent vectors with sum <= n
        for d in 1..=4usize {
            for n in 0..=5usize {
                let mut count = 0;
                let bound = (n + 1).pow(d as u32);
                for code in 0..bound {
                    let mut c = code;
                    let mut s = 0;
                    for _ in 0..d {
                        s += c % (n + 1);
                        c /= n + 1;
                    }
                    if s <= n {
                        count += 1;
                    }
                }
                let b = basis_indices(d, n).unwrap();
                assert_eq!(b.len(), count, "d={d} n={n}");
                assert_eq!(basis_size(d, n), count);
            }
        }
        assert_eq!(basis_indices(3, 4).unwrap().len(), 35);
    }

    #[test]
    fn basis_rejects_zero_dimension() {
        assert!(basis_indices(0, 2).is_err());
    }

    #[test]
    fn eval_basis_examples() {
        let b = basis_indices(1, 2).unwrap();
        assert_eq!(eval_basis(&[2.0], &b).unwrap().as_slice(), &[1.0, 2.0, 4.0]);

        let b = basis_indices(2, 2).unwrap();
        assert_eq!(
            eval_basis(&[1.0, 2.0], &b).unwrap().as_slice(),
            &[1.0, 2.0, 1.0, 4.0, 2.0, 1.0]
        );
        let z = eval_basis(&[0.0, 0.0], &b).unwrap();
        assert_eq!(z[0], 1.0);
        assert!(z.iter().skip(1).all(|&v| v == 0.0));

        assert!(eval_basis(&[1.0], &b).is_err());
    }

    #[test]
    fn coordinates_examples() {
        let b = basis_indices(1, 2).unwrap();
        let p = Polynomial::univariate(&[3.0, 0.0, 1.0]);
        assert_eq!(b.to_coordinates(&p).unwrap().as_slice(), &[3.0, 0.0, 1.0]);
        assert_eq!(
            b.to_coordinates(&Polynomial::zero(1)).unwrap().as_slice(),
            &[0.0, 0.0, 0.0]
        );
        let cubic = Polynomial::univariate(&[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            b.to_coordinates(&cubic),
            Err(Error::DegreeOverflow { degree: 3, max: 2 })
        ));
    }

    #[test]
    fn multiply_examples() {
        let x = Polynomial::var(1, 0);
        assert_eq!(&x * &x, Polynomial::univariate(&[0.0, 0.0, 1.0]));
        let a = Polynomial::univariate(&[1.0, 1.0]);
        let b = Polynomial::univariate(&[1.0, -1.0]);
        assert_eq!(&a * &b, Polynomial::univariate(&[1.0, 0.0, -1.0]));
        assert!(multiply(&a, &Polynomial::var(2, 0)).is_err());
    }

    #[test]
    fn zero_polynomial_has_degree_zero() {
        let p = Polynomial::univariate(&[0.0, 2.0]);
        let q = &p - &p;
        assert!(q.is_zero());
        assert_eq!(q.degree(), 0);
    }

    #[test]
    fn json_schema() {
        let p = Polynomial::from_terms(2, [(vec![1, 0], 2.5), (vec![0, 0], -1.0)]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"d":2,"terms":[{"alpha":[0,0],"c":-1.0},{"alpha":[1,0],"c":2.5}]}"#
        );
        let back: Polynomial = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Polynomial>(r#"{"d":2,"terms":[{"alpha":[1],"c":1}]}"#)
            .is_err());
    }

    fn sparse_poly(d: usize, n: usize) -> impl Strategy<Value = Polynomial> {
        let b = basis_indices(d, n).unwrap();
        let len = b.len();
        proptest::collection::vec((0..len, -5.0f64..5.0), 0..6).prop_map(move |terms| {
            let mut p = Polynomial::zero(d);
            for (k, c) in terms {
                p = &p + &b.monomial(k).scale(c);
            }
            p
        })
    }

    proptest! {
        #[test]
        fn coordinates_round_trip(p in sparse_poly(2, 3), x in proptest::collection::vec(-2.0f64..2.0, 2)) {
            let b = basis_indices(2, 3).unwrap();
            let c = b.to_coordinates(&p).unwrap();
            prop_assert_eq!(b.from_coordinates(&c).unwrap(), p.clone());
            let h = eval_basis(&x, &b).unwrap();
            let lhs = h.dot(&c);
            let rhs = p.eval(&x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn product_matches_pointwise(p in sparse_poly(2, 3), q in sparse_poly(2, 3),
                                     pts in proptest::collection::vec(proptest::collection::vec(-1.5f64..1.5, 2), 20)) {
            let r = multiply(&p, &q).unwrap();
            if !p.is_zero() && !q.is_zero() {
                prop_assert!(r.degree() <= p.degree() + q.degree());
            }
            for x in &pts {
                let want = p.eval(x) * q.eval(x);
                let scale: f64 = p.terms().map(|(_, c)| c.abs()).sum::<f64>()
                    * q.terms().map(|(_, c)| c.abs()).sum::<f64>();
                prop_assert!((r.eval(x) - want).abs() <= 1e-12 * (1.0 + scale) * 10.0);
            }
        }

        #[test]
        fn graded_order_respects_degree(d in 1usize..4, n in 0usize..5) {
            let b = basis_indices(d, n).unwrap();
            prop_assert!(b.indices()[0].degree() == 0);
            for w in b.indices().windows(2) {
                prop_assert!(w[0] < w[1]);
                prop_assert!(w[0].degree() <= w[1].degree());
            }
        }
    }
}
