//! Sparse bivariate polynomials over the Gaussian rationals.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gaussian::GaussianRational;
use super::AlgebraError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
}

/// Exponent pair `(i, j)` for `x^i y^j`. Map order is lex with `x` leading.
pub type Monomial = (u32, u32);

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct BivariatePolynomial {
    terms: BTreeMap<Monomial, GaussianRational>,
}

impl BivariatePolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(GaussianRational::one())
    }

    pub fn constant(c: GaussianRational) -> Self {
        Self::monomial(c, 0, 0)
    }

    pub fn monomial(c: GaussianRational, i: u32, j: u32) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert((i, j), c);
        }
        Self { terms }
    }

    pub fn x() -> Self {
        Self::monomial(GaussianRational::one(), 1, 0)
    }

    pub fn y() -> Self {
        Self::monomial(GaussianRational::one(), 0, 1)
    }

    pub fn var(v: Var) -> Self {
        match v {
            Var::X => Self::x(),
            Var::Y => Self::y(),
        }
    }

    /// Builds from integer triples `(coeff, i, j)`; repeated monomials add up.
    pub fn from_int_terms(terms: &[(i64, u32, u32)]) -> Self {
        let mut p = Self::zero();
        for &(c, i, j) in terms {
            p.add_term((i, j), &GaussianRational::from_int(c));
        }
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, GaussianRational)>>(it: I) -> Self {
        let mut p = Self::zero();
        for (m, c) in it {
            p.add_term(m, &c);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: &GaussianRational) {
        if c.is_zero() {
            return;
        }
        let remove = match self.terms.get_mut(&m) {
            Some(v) => {
                *v += c;
                v.is_zero()
            }
            None => {
                self.terms.insert(m, c.clone());
                false
            }
        };
        if remove {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &GaussianRational)> {
        self.terms.iter()
    }

    pub fn coeff(&self, i: u32, j: u32) -> GaussianRational {
        self.terms.get(&(i, j)).cloned().unwrap_or_else(GaussianRational::zero)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|&(i, j)| i == 0 && j == 0)
    }

    pub fn constant_term(&self) -> GaussianRational {
        self.coeff(0, 0)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|&(i, j)| i + j).max()
    }

    pub fn degree_in(&self, v: Var) -> Option<u32> {
        self.terms
            .keys()
            .map(|&(i, j)| if v == Var::X { i } else { j })
            .max()
    }

    /// Lex-leading term (largest `x` power, then largest `y` power).
    pub fn lead(&self) -> Option<(Monomial, &GaussianRational)> {
        self.terms.iter().next_back().map(|(m, c)| (*m, c))
    }

    /// Largest power of `v` dividing the polynomial; `None` for zero.
    pub fn valuation(&self, v: Var) -> Option<u32> {
        self.terms
            .keys()
            .map(|&(i, j)| if v == Var::X { i } else { j })
            .min()
    }

    /// Exponents of the largest monomial dividing every term.
    pub fn monomial_content(&self) -> Monomial {
        (
            self.valuation(Var::X).unwrap_or(0),
            self.valuation(Var::Y).unwrap_or(0),
        )
    }

    /// Divides by `x^a y^b`; panics if some term is not divisible.
    pub fn shift_down(&self, a: u32, b: u32) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(&(i, j), c)| ((i - a, j - b), c.clone()))
                .collect(),
        }
    }

    pub fn shift_up(&self, a: u32, b: u32) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(&(i, j), c)| ((i + a, j + b), c.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, c: &GaussianRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(m, v)| (*m, v * c)).collect(),
        }
    }

    /// Scales so the lex-leading coefficient is 1; returns the factor removed.
    pub fn make_monic(&self) -> (Self, GaussianRational) {
        match self.lead() {
            None => (Self::zero(), GaussianRational::one()),
            Some((_, c)) => {
                let c = c.clone();
                (self.scale(&c.inv().expect("nonzero lead")), c)
            }
        }
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn partial(&self, v: Var) -> Self {
        let mut out = Self::zero();
        for (&(i, j), c) in &self.terms {
            let (k, m) = match v {
                Var::X if i > 0 => (i, (i - 1, j)),
                Var::Y if j > 0 => (j, (i, j - 1)),
                _ => continue,
            };
            out.add_term(m, &(c * &GaussianRational::from_int(k as i64)));
        }
        out
    }

    /// Exact quotient `a / b` if `b` divides `a`, by lex division on the lead term.
    pub fn divide_exact(&self, b: &Self) -> Result<Option<Self>, AlgebraError> {
        let (lb, cb) = b.lead().ok_or(AlgebraError::DivisionByZero)?;
        let inv_cb = cb.inv().expect("nonzero lead");
        if b.terms.len() == 1 {
            // Monomial divisor: termwise.
            let mut q = Self::zero();
            for (&(i, j), c) in &self.terms {
                if i < lb.0 || j < lb.1 {
                    return Ok(None);
                }
                q.terms.insert((i - lb.0, j - lb.1), c * &inv_cb);
            }
            return Ok(Some(q));
        }
        let mut r = self.clone();
        let mut q = Self::zero();
        while let Some((la, ca)) = r.lead() {
            if la.0 < lb.0 || la.1 < lb.1 {
                return Ok(None);
            }
            let m = (la.0 - lb.0, la.1 - lb.1);
            let c = ca * &inv_cb;
            for (&(i, j), cbt) in &b.terms {
                r.add_term((i + m.0, j + m.1), &-(cbt * &c));
            }
            q.add_term(m, &c);
        }
        Ok(Some(q))
    }

    pub fn divides(&self, a: &Self) -> bool {
        matches!(a.divide_exact(self), Ok(Some(_)))
    }

    /// Substitutes `x ↦ sx`, `y ↦ sy` exactly.
    pub fn compose(&self, sx: &Self, sy: &Self) -> Self {
        let dx = self.degree_in(Var::X).unwrap_or(0);
        let dy = self.degree_in(Var::Y).unwrap_or(0);
        let xp = powers(sx, dx);
        let yp = powers(sy, dy);
        let mut out = Self::zero();
        for (&(i, j), c) in &self.terms {
            let t = &xp[i as usize] * &yp[j as usize];
            for (m, v) in &t.terms {
                out.add_term(*m, &(v * c));
            }
        }
        out
    }

    /// Translation `p(x + a, y + b)`.
    pub fn translate(&self, a: &GaussianRational, b: &GaussianRational) -> Self {
        let sx = &Self::x() + &Self::constant(a.clone());
        let sy = &Self::y() + &Self::constant(b.clone());
        self.compose(&sx, &sy)
    }

    pub fn eval_exact(&self, x: &GaussianRational, y: &GaussianRational) -> GaussianRational {
        let mut acc = GaussianRational::zero();
        for (&(i, j), c) in &self.terms {
            acc += &(&(c * &x.pow(i)) * &y.pow(j));
        }
        acc
    }

    pub fn eval(&self, x: Complex64, y: Complex64) -> Complex64 {
        CompiledPoly::new(self).eval(x, y)
    }

    /// Coefficients as a polynomial in `v` whose entries are univariate in the other variable.
    pub fn coefficients_in(&self, v: Var) -> Vec<super::UniPoly> {
        let deg = self.degree_in(v).unwrap_or(0) as usize;
        let mut rows: Vec<BTreeMap<u32, GaussianRational>> = vec![BTreeMap::new(); deg + 1];
        for (&(i, j), c) in &self.terms {
            let (k, other) = if v == Var::X { (i, j) } else { (j, i) };
            rows[k as usize].insert(other, c.clone());
        }
        rows.into_iter()
            .map(|r| super::UniPoly::from_sparse(r.into_iter()))
            .collect()
    }

    /// Restricts `v = value` exactly, giving a univariate polynomial in the other variable.
    pub fn restrict(&self, v: Var, value: &GaussianRational) -> super::UniPoly {
        let mut acc: BTreeMap<u32, GaussianRational> = BTreeMap::new();
        for (&(i, j), c) in &self.terms {
            let (k, other) = if v == Var::X { (i, j) } else { (j, i) };
            let t = c * &value.pow(k);
            let e = acc.entry(other).or_insert_with(GaussianRational::zero);
            *e += &t;
        }
        super::UniPoly::from_sparse(acc.into_iter())
    }

    pub fn to_c64_terms(&self) -> Vec<(Monomial, Complex64)> {
        self.terms.iter().map(|(m, c)| (*m, c.to_c64())).collect()
    }
}

fn powers(p: &BivariatePolynomial, n: u32) -> Vec<BivariatePolynomial> {
    let mut v = Vec::with_capacity(n as usize + 1);
    v.push(BivariatePolynomial::one());
    for k in 1..=n as usize {
        let next = &v[k - 1] * p;
        v.push(next);
    }
    v
}

impl<'a> Add<&'a BivariatePolynomial> for &'a BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn add(self, rhs: &BivariatePolynomial) -> BivariatePolynomial {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(*m, c);
        }
        out
    }
}

impl<'a> Sub<&'a BivariatePolynomial> for &'a BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn sub(self, rhs: &BivariatePolynomial) -> BivariatePolynomial {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(*m, &-c);
        }
        out
    }
}

impl<'a> Mul<&'a BivariatePolynomial> for &'a BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn mul(self, rhs: &BivariatePolynomial) -> BivariatePolynomial {
        let mut acc: BTreeMap<Monomial, GaussianRational> = BTreeMap::new();
        for (&(i, j), a) in &self.terms {
            for (&(k, l), b) in &rhs.terms {
                let e = acc.entry((i + k, j + l)).or_insert_with(GaussianRational::zero);
                *e += &(a * b);
            }
        }
        acc.retain(|_, c| !c.is_zero());
        BivariatePolynomial { terms: acc }
    }
}

impl Neg for &BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn neg(self) -> BivariatePolynomial {
        BivariatePolynomial {
            terms: self.terms.iter().map(|(m, c)| (*m, -c)).collect(),
        }
    }
}

impl Add for BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn add(self, rhs: Self) -> Self {
        &self + &rhs
    }
}

impl Sub for BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn sub(self, rhs: Self) -> Self {
        &self - &rhs
    }
}

impl Mul for BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn mul(self, rhs: Self) -> Self {
        &self * &rhs
    }
}

impl Neg for BivariatePolynomial {
    type Output = BivariatePolynomial;
    fn neg(self) -> Self {
        -&self
    }
}

impl fmt::Display for BivariatePolynomial {
    /// Descending lex order, e.g. `x^2*y + (1+2*i)*x - 3/2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(i, j), c) in self.terms.iter().rev() {
            let mono = match (i, j) {
                (0, 0) => String::new(),
                _ => {
                    let mut parts = Vec::new();
                    if i > 0 {
                        parts.push(if i == 1 { "x".to_string() } else { format!("x^{i}") });
                    }
                    if j > 0 {
                        parts.push(if j == 1 { "y".to_string() } else { format!("y^{j}") });
                    }
                    parts.join("*")
                }
            };
            let (neg, mag) = if c.is_real() && c.re < num_rational::BigRational::from_integer(0.into()) {
                (true, -c)
            } else {
                (false, c.clone())
            };
            let coeff = if !mag.is_real() {
                format!("({mag})")
            } else {
                mag.to_string()
            };
            let body = if mono.is_empty() {
                coeff
            } else if mag.is_one() {
                mono
            } else {
                format!("{coeff}*{mono}")
            };
            if first {
                write!(f, "{}{}", if neg { "-" } else { "" }, body)?;
                first = false;
            } else {
                write!(f, " {} {}", if neg { "-" } else { "+" }, body)?;
            }
        }
        Ok(())
    }
}

/// Double-precision Horner evaluator, nested as a polynomial in `x` with `y`-polynomial rows.
#[derive(Clone, Debug, Default)]
pub struct CompiledPoly {
    rows: Vec<(u32, Vec<(u32, Complex64)>)>,
}

impl CompiledPoly {
    pub fn new(p: &BivariatePolynomial) -> Self {
        let mut rows: Vec<(u32, Vec<(u32, Complex64)>)> = Vec::new();
        for (&(i, j), c) in p.terms.iter().rev() {
            match rows.last_mut() {
                Some((ri, row)) if *ri == i => row.push((j, c.to_c64())),
                _ => rows.push((i, vec![(j, c.to_c64())])),
            }
        }
        Self { rows }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.is_empty()
    }

    fn eval_row(row: &[(u32, Complex64)], y: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut prev = row[0].0;
        for &(j, c) in row {
            acc = acc * y.powu(prev - j) + c;
            prev = j;
        }
        acc * y.powu(prev)
    }

    pub fn eval(&self, x: Complex64, y: Complex64) -> Complex64 {
        if self.rows.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let mut acc = Complex64::new(0.0, 0.0);
        let mut prev = self.rows[0].0;
        for (i, row) in &self.rows {
            acc = acc * x.powu(prev - i) + Self::eval_row(row, y);
            prev = *i;
        }
        acc * x.powu(prev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(t: &[(i64, u32, u32)]) -> BivariatePolynomial {
        BivariatePolynomial::from_int_terms(t)
    }

    #[test]
    fn arithmetic_examples() {
        let a = p(&[(1, 1, 0), (1, 0, 1)]);
        let b = p(&[(1, 1, 0), (-1, 0, 1)]);
        assert_eq!(&a + &b, p(&[(2, 1, 0)]));
        assert_eq!(&BivariatePolynomial::x() * &BivariatePolynomial::y(), p(&[(1, 1, 1)]));
        let c = BivariatePolynomial::monomial(GaussianRational::from_parts((1, 2), (1, 1)), 1, 0);
        let d = p(&[(2, 1, 0)]);
        let want = BivariatePolynomial::monomial(GaussianRational::from_parts((1, 1), (2, 1)), 2, 0);
        assert_eq!(&c * &d, want);
    }

    #[test]
    fn exact_division_examples() {
        let a = p(&[(1, 2, 1), (1, 1, 2)]);
        let b = p(&[(1, 1, 1)]);
        assert_eq!(a.divide_exact(&b).unwrap(), Some(p(&[(1, 1, 0), (1, 0, 1)])));
        let a = p(&[(1, 2, 0), (1, 0, 2)]);
        assert_eq!(a.divide_exact(&BivariatePolynomial::x()).unwrap(), None);
        let xy = p(&[(1, 1, 0), (-1, 0, 1)]);
        let x21 = p(&[(1, 2, 0), (1, 0, 0)]);
        assert_eq!((&xy * &x21).divide_exact(&xy).unwrap(), Some(x21));
        assert!(a.divide_exact(&BivariatePolynomial::zero()).is_err());
    }

    #[test]
    fn partial_examples() {
        assert_eq!(p(&[(1, 2, 1)]).partial(Var::X), p(&[(2, 1, 1)]));
        assert!(p(&[(7, 0, 0)]).partial(Var::Y).is_zero());
        assert_eq!(p(&[(1, 3, 0), (1, 1, 2)]).partial(Var::Y), p(&[(2, 1, 1)]));
    }

    #[test]
    fn horner_matches_naive() {
        let a = p(&[(3, 4, 1), (-2, 0, 5), (1, 2, 2), (7, 0, 0), (1, 1, 0)]);
        let x = Complex64::new(0.3, -1.1);
        let y = Complex64::new(-0.7, 0.4);
        let naive: Complex64 = a
            .to_c64_terms()
            .iter()
            .map(|&((i, j), c)| c * x.powu(i) * y.powu(j))
            .sum();
        assert!((a.eval(x, y) - naive).norm() < 1e-12);
    }

    #[test]
    fn display_round_shape() {
        let a = p(&[(1, 2, 1), (-3, 1, 0), (5, 0, 0)]);
        assert_eq!(a.to_string(), "x^2*y - 3*x + 5");
    }

    #[test]
    fn compose_blowup_substitution() {
        // y = t x applied to x dy - y dx coefficient y: y -> t x, with t written as y.
        let y = BivariatePolynomial::y();
        let tx = &BivariatePolynomial::x() * &BivariatePolynomial::y();
        assert_eq!(y.compose(&BivariatePolynomial::x(), &tx), tx);
    }
}
