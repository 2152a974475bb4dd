//! Sparse multivariate polynomials, graded-lex monomial bases and the
//! Gram-matrix index maps used to turn SOS constraints into linear
//! equalities on PSD matrices.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of variables supported.
pub const MAX_VARS: usize = 4;

/// Exponent tuple `(b_1, ..., b_z)` of the monomial `x_1^b_1 ... x_z^b_z`.
///
/// Ordering is graded lexicographic: lower total degree first, then larger
/// exponents on earlier variables first (`1, x, y, x^2, xy, y^2, ...`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial {
    exponents: Vec<u32>,
}

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn one(dimension: usize) -> Self {
        Self { exponents: vec![0; dimension] }
    }

    /// The monomial `x_var`.
    pub fn variable(dimension: usize, var: usize) -> Self {
        let mut exponents = vec![0; dimension];
        exponents[var] = 1;
        Self { exponents }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn dimension(&self) -> usize {
        self.exponents.len()
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.dimension(), other.dimension());
        Monomial {
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exponents.cmp(&self.exponents))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; MAX_VARS] = ["x", "y", "z", "w"];
        if self.degree() == 0 {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            let name = NAMES.get(i).copied().unwrap_or("v");
            if e == 1 {
                write!(f, "{name}")?;
            } else {
                write!(f, "{name}^{e}")?;
            }
        }
        Ok(())
    }
}

/// All monomials in `dimension` variables of degree at most `degree`, in
/// graded-lex order. Its length is `C(dimension + degree, degree)`.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    dimension: usize,
    degree: u32,
    monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
}

impl MonomialBasis {
    pub fn new(dimension: usize, degree: u32) -> Result<Self> {
        if dimension == 0 || dimension > MAX_VARS {
            return Err(Error::InvalidInput(format!(
                "monomial basis dimension must be in 1..={MAX_VARS}, got {dimension}"
            )));
        }
        let mut monomials = Vec::new();
        for d in 0..=degree {
            let mut current = vec![0u32; dimension];
            push_exponents_of_degree(&mut current, 0, d, &mut monomials);
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Ok(Self { dimension, degree, monomials, index })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn index_of(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Values of every basis monomial at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.monomials.iter().map(|m| m.evaluate(x)).collect()
    }
}

// Exponents in descending lexicographic order for a fixed total degree.
fn push_exponents_of_degree(current: &mut [u32], var: usize, remaining: u32, out: &mut Vec<Monomial>) {
    if var + 1 == current.len() {
        current[var] = remaining;
        out.push(Monomial::new(current.to_vec()));
        current[var] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[var] = e;
        push_exponents_of_degree(current, var + 1, remaining - e, out);
    }
    current[var] = 0;
}

/// `C(n, k)` for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Sparse real polynomial in a fixed number of variables. Zero coefficients
/// are never stored, so the representation is canonical.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    dimension: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(dimension: usize) -> Self {
        Self { dimension, terms: BTreeMap::new() }
    }

    pub fn constant(dimension: usize, c: f64) -> Self {
        let mut p = Self::zero(dimension);
        p.add_term(Monomial::one(dimension), c);
        p
    }

    /// The polynomial `x_var`.
    pub fn variable(dimension: usize, var: usize) -> Self {
        let mut p = Self::zero(dimension);
        p.add_term(Monomial::variable(dimension, var), 1.0);
        p
    }

    /// `c0 + sum_i linear[i] * x_i`.
    pub fn affine(c0: f64, linear: &[f64]) -> Self {
        let dimension = linear.len();
        let mut p = Self::constant(dimension, c0);
        for (i, &a) in linear.iter().enumerate() {
            p.add_term(Monomial::variable(dimension, i), a);
        }
        p
    }

    pub fn from_terms<I>(dimension: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Self::zero(dimension);
        for (m, c) in terms {
            if m.dimension() != dimension {
                return Err(Error::InvalidInput(format!(
                    "monomial {m} has {} exponents, expected {dimension}",
                    m.dimension()
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite coefficient on {m}")));
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    /// Inverse of [`Polynomial::coef_vector`].
    pub fn from_coefficients(basis: &MonomialBasis, coefs: &[f64]) -> Self {
        assert_eq!(basis.len(), coefs.len());
        let mut p = Self::zero(basis.dimension());
        for (m, &c) in basis.monomials().iter().zip(coefs) {
            p.add_term(m.clone(), c);
        }
        p
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.dimension(), self.dimension);
        if c == 0.0 {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(v) => {
                *v += c;
                if *v == 0.0 {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.dimension, other.dimension, "polynomial dimension mismatch");
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.dimension);
        for (m, c) in self.terms() {
            out.add_term(m.clone(), s * c);
        }
        out
    }

    /// Exact symbolic product.
    pub fn multiply(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.dimension, other.dimension, "polynomial dimension mismatch");
        let mut out = Polynomial::zero(self.dimension);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dimension, "point dimension mismatch");
        self.terms().map(|(m, c)| c * m.evaluate(x)).sum()
    }

    /// Dense coefficient vector `c` with `self = c^T [x]` in `basis`.
    pub fn coef_vector(&self, basis: &MonomialBasis) -> Result<Vec<f64>> {
        if basis.dimension() != self.dimension {
            return Err(Error::InvalidInput(format!(
                "basis has {} variables, polynomial has {}",
                basis.dimension(),
                self.dimension
            )));
        }
        if !self.is_zero() && self.degree() > basis.degree() {
            return Err(Error::DegreeOverflow {
                degree: self.degree(),
                max: basis.degree(),
            });
        }
        let mut out = vec![0.0; basis.len()];
        for (m, c) in self.terms() {
            let i = basis.index_of(m).expect("monomial within basis degree");
            out[i] = c;
        }
        Ok(out)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*{m}")?;
        }
        Ok(())
    }
}

/// One `{exponents, coef}` record of the JSON polynomial encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub exponents: Vec<u32>,
    pub coef: f64,
}

impl Polynomial {
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms()
            .map(|(m, c)| TermRecord { exponents: m.exponents().to_vec(), coef: c })
            .collect()
    }

    pub fn from_records(dimension: usize, records: &[TermRecord]) -> Result<Self> {
        Self::from_terms(
            dimension,
            records
                .iter()
                .map(|r| (Monomial::new(r.exponents.clone()), r.coef)),
        )
    }
}

/// For a half-degree basis `[x]_d`, lists which `(row, col)` positions of a
/// symmetric Gram matrix multiply out to each monomial of `[x]_{2d}`.
///
/// With `X` symmetric, the coefficient of monomial `l` in `[x]_d^T X [x]_d`
/// is `sum over (a, b) in entries(l) of X[a, b]`.
#[derive(Clone, Debug)]
pub struct GramIndexMap {
    half_basis: MonomialBasis,
    full_basis: MonomialBasis,
    entries: Vec<Vec<(usize, usize)>>,
}

impl GramIndexMap {
    pub fn new(half_basis: &MonomialBasis) -> Self {
        let full_basis = MonomialBasis::new(half_basis.dimension(), 2 * half_basis.degree())
            .expect("dimension already validated");
        let mut entries = vec![Vec::new(); full_basis.len()];
        let mons = half_basis.monomials();
        for (a, ma) in mons.iter().enumerate() {
            for (b, mb) in mons.iter().enumerate() {
                let l = full_basis.index_of(&ma.mul(mb)).expect("product within 2d");
                entries[l].push((a, b));
            }
        }
        Self { half_basis: half_basis.clone(), full_basis, entries }
    }

    pub fn half_basis(&self) -> &MonomialBasis {
        &self.half_basis
    }

    pub fn full_basis(&self) -> &MonomialBasis {
        &self.full_basis
    }

    /// Positions contributing to monomial index `l` of the full basis.
    pub fn entries(&self, l: usize) -> &[(usize, usize)] {
        &self.entries[l]
    }

    /// Coefficients (in the full basis) of `[x]^T X [x]` for a row-major
    /// symmetric `X` of side `half_basis.len()`.
    pub fn coefficients_of(&self, gram: &[f64]) -> Vec<f64> {
        let n = self.half_basis.len();
        assert_eq!(gram.len(), n * n);
        self.entries
            .iter()
            .map(|pos| pos.iter().map(|&(a, b)| gram[a * n + b]).sum())
            .collect()
    }

    pub fn polynomial_of(&self, gram: &[f64]) -> Polynomial {
        Polynomial::from_coefficients(&self.full_basis, &self.coefficients_of(gram))
    }
}

/// `C(z + d, d)`, the number of monomials of degree at most `d` in `z`
/// variables.
pub fn basis_len(dimension: usize, degree: u32) -> usize {
    binomial(dimension + degree as usize, degree as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f0() -> Polynomial {
        let b = MonomialBasis::new(2, 2).unwrap();
        Polynomial::from_coefficients(&b, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    }

    #[test]
    fn basis_orders_graded_lex() {
        let b = MonomialBasis::new(3, 1).unwrap();
        let names: Vec<String> = b.monomials().iter().map(|m| m.to_string()).collect();
        assert_eq!(names, ["1", "x", "y", "z"]);
        assert_eq!(MonomialBasis::new(3, 2).unwrap().len(), 10);
        let b = MonomialBasis::new(1, 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.monomials()[0].degree(), 0);
        let b = MonomialBasis::new(2, 2).unwrap();
        let exps: Vec<Vec<u32>> = b.monomials().iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(exps, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
    }

    #[test]
    fn basis_size_matches_binomial() {
        for z in 1..=4 {
            for d in 0..=4 {
                let b = MonomialBasis::new(z, d).unwrap();
                assert_eq!(b.len(), binomial(z + d as usize, d as usize), "z={z} d={d}");
                assert_eq!(b.monomials()[0].degree(), 0);
                for w in b.monomials().windows(2) {
                    assert!(w[0] < w[1]);
                }
            }
        }
        assert!(MonomialBasis::new(0, 2).is_err());
        assert!(MonomialBasis::new(5, 2).is_err());
    }

    #[test]
    fn coef_vector_examples() {
        let b = MonomialBasis::new(2, 2).unwrap();
        assert_eq!(f0().coef_vector(&b).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(Polynomial::zero(2).coef_vector(&b).unwrap(), vec![0.0; 6]);
        let b1 = MonomialBasis::new(1, 2).unwrap();
        let x2 = Polynomial::variable(1, 0).multiply(&Polynomial::variable(1, 0));
        assert_eq!(x2.coef_vector(&b1).unwrap(), vec![0.0, 0.0, 1.0]);
        let b_small = MonomialBasis::new(2, 1).unwrap();
        assert!(matches!(f0().coef_vector(&b_small), Err(Error::DegreeOverflow { .. })));
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(f0().evaluate(&[0.0, 0.0]), 1.0);
        assert_eq!(f0().evaluate(&[1.0, 1.0]), 21.0);
    }

    #[test]
    fn evaluate_matches_naive_term_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = MonomialBasis::new(3, 3).unwrap();
        let coefs: Vec<f64> = (0..b.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = Polynomial::from_coefficients(&b, &coefs);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let mut naive = 0.0;
            for (m, c) in b.monomials().iter().zip(&coefs) {
                let mut v = *c;
                for (i, &e) in m.exponents().iter().enumerate() {
                    for _ in 0..e {
                        v *= x[i];
                    }
                }
                naive += v;
            }
            assert!((p.evaluate(&x) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn multiply_examples() {
        let x = Polynomial::variable(1, 0);
        let one = Polynomial::constant(1, 1.0);
        let prod = one.add(&x).multiply(&one.sub(&x));
        let expected = one.sub(&x.multiply(&x));
        assert_eq!(prod, expected);
        assert_eq!(prod.num_terms(), 2);
        assert_eq!(x.multiply(&x).coefficient(&Monomial::new(vec![2])), 1.0);

        let p = Polynomial::affine(1.0, &[1.0, 1.0]);
        let sq = p.multiply(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pt = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let v = 1.0 + pt[0] + pt[1];
            assert!((sq.evaluate(&pt) - v * v).abs() < 1e-12);
        }
    }

    #[test]
    fn cancellation_keeps_canonical_form() {
        let x = Polynomial::variable(2, 0);
        let d = x.sub(&x);
        assert!(d.is_zero());
        assert_eq!(d, Polynomial::zero(2));
    }

    #[test]
    fn gram_map_on_univariate_linear_basis() {
        let b = MonomialBasis::new(1, 1).unwrap();
        let g = GramIndexMap::new(&b);
        assert_eq!(g.entries(0), &[(0, 0)]);
        assert_eq!(g.entries(1), &[(0, 1), (1, 0)]);
        assert_eq!(g.entries(2), &[(1, 1)]);
        let sigma = g.polynomial_of(&[1.0, 0.0, 0.0, 1.0]);
        let x = Polynomial::variable(1, 0);
        assert_eq!(sigma, Polynomial::constant(1, 1.0).add(&x.multiply(&x)));
    }

    #[test]
    fn gram_map_matches_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = MonomialBasis::new(3, 1).unwrap();
        let g = GramIndexMap::new(&b);
        let n = b.len();
        let mut x = vec![0.0; n * n];
        for a in 0..n {
            for c in a..n {
                let v = rng.gen_range(-1.0..1.0);
                x[a * n + c] = v;
                x[c * n + a] = v;
            }
        }
        let sigma = g.polynomial_of(&x);
        for _ in 0..50 {
            let pt: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let v = b.evaluate(&pt);
            let mut quad = 0.0;
            for a in 0..n {
                for c in 0..n {
                    quad += v[a] * x[a * n + c] * v[c];
                }
            }
            assert!((sigma.evaluate(&pt) - quad).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_map_positions_partition_upper_triangle() {
        for (z, d) in [(2, 1), (3, 1), (3, 2), (2, 2)] {
            let b = MonomialBasis::new(z, d).unwrap();
            let g = GramIndexMap::new(&b);
            let n = b.len();
            let mut seen = vec![0usize; n * n];
            let mut total = 0;
            for l in 0..g.full_basis().len() {
                for &(r, c) in g.entries(l) {
                    seen[r * n + c] += 1;
                    total += 1;
                }
            }
            assert_eq!(total, n * n);
            assert!(seen.iter().all(|&s| s == 1));
        }
    }

    #[test]
    fn records_round_trip() {
        let p = f0();
        let back = Polynomial::from_records(2, &p.to_records()).unwrap();
        assert_eq!(p, back);
        let bad = [TermRecord { exponents: vec![1, 0, 0], coef: 1.0 }];
        assert!(Polynomial::from_records(2, &bad).is_err());
    }
}
