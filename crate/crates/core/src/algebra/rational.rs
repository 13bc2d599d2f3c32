//! Rational functions `num / den` in two variables.

use std::fmt;

use num_complex::Complex64;

use super::gaussian::GaussianRational;
use super::poly::{BivariatePolynomial, CompiledPoly, Var};
use super::AlgebraError;

#[derive(Clone, Debug)]
pub struct RationalFunction {
    num: BivariatePolynomial,
    den: BivariatePolynomial,
}

impl PartialEq for RationalFunction {
    /// Cross-multiplication equality.
    fn eq(&self, o: &Self) -> bool {
        if self.num == o.num && self.den == o.den {
            return true;
        }
        &self.num * &o.den == &o.num * &self.den
    }
}

impl Eq for RationalFunction {}

impl From<BivariatePolynomial> for RationalFunction {
    fn from(p: BivariatePolynomial) -> Self {
        Self {
            num: p,
            den: BivariatePolynomial::one(),
        }
    }
}

impl RationalFunction {
    pub fn new(num: BivariatePolynomial, den: BivariatePolynomial) -> Result<Self, AlgebraError> {
        if den.is_zero() {
            return Err(AlgebraError::DivisionByZero);
        }
        Ok(Self::reduce(num, den))
    }

    pub fn zero() -> Self {
        BivariatePolynomial::zero().into()
    }

    pub fn one() -> Self {
        BivariatePolynomial::one().into()
    }

    pub fn constant(c: GaussianRational) -> Self {
        BivariatePolynomial::constant(c).into()
    }

    pub fn numerator(&self) -> &BivariatePolynomial {
        &self.num
    }

    pub fn denominator(&self) -> &BivariatePolynomial {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_constant()
    }

    /// Polynomial value when the denominator is a constant.
    pub fn as_polynomial(&self) -> Option<BivariatePolynomial> {
        if !self.is_polynomial() {
            return None;
        }
        let inv = self.den.constant_term().inv()?;
        Some(self.num.scale(&inv))
    }

    /// Best-effort normalization: monomial content, exact one-sided division,
    /// and a monic denominator.
    fn reduce(num: BivariatePolynomial, den: BivariatePolynomial) -> Self {
        if num.is_zero() {
            return Self::zero();
        }
        let (nx, ny) = num.monomial_content();
        let (dx, dy) = den.monomial_content();
        let (cx, cy) = (nx.min(dx), ny.min(dy));
        let (mut num, mut den) = if cx > 0 || cy > 0 {
            (num.shift_down(cx, cy), den.shift_down(cx, cy))
        } else {
            (num, den)
        };
        if !den.is_constant() {
            if let Ok(Some(q)) = num.divide_exact(&den) {
                num = q;
                den = BivariatePolynomial::one();
            } else if !num.is_constant() {
                if let Ok(Some(q)) = den.divide_exact(&num) {
                    den = q;
                    num = BivariatePolynomial::one();
                }
            }
        }
        let (den_m, c) = den.make_monic();
        let num = num.scale(&c.inv().expect("nonzero"));
        Self { num, den: den_m }
    }

    pub fn add(&self, o: &Self) -> Self {
        if self.den == o.den {
            return Self::reduce(&self.num + &o.num, self.den.clone());
        }
        Self::reduce(
            &(&self.num * &o.den) + &(&o.num * &self.den),
            &self.den * &o.den,
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        Self {
            num: -&self.num,
            den: self.den.clone(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self::reduce(&self.num * &o.num, &self.den * &o.den)
    }

    pub fn mul_poly(&self, p: &BivariatePolynomial) -> Self {
        Self::reduce(&self.num * p, self.den.clone())
    }

    pub fn scale(&self, c: &GaussianRational) -> Self {
        Self {
            num: self.num.scale(c),
            den: self.den.clone(),
        }
    }

    pub fn inv(&self) -> Result<Self, AlgebraError> {
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn div(&self, o: &Self) -> Result<Self, AlgebraError> {
        if o.is_zero() {
            return Err(AlgebraError::DivisionByZero);
        }
        Ok(Self::reduce(&self.num * &o.den, &self.den * &o.num))
    }

    /// Quotient rule `(n' d - n d') / d²`.
    pub fn partial(&self, v: Var) -> Self {
        if self.den.is_constant() {
            return Self::reduce(self.num.partial(v), self.den.clone());
        }
        let top = &(&self.num.partial(v) * &self.den) - &(&self.num * &self.den.partial(v));
        Self::reduce(top, &self.den * &self.den)
    }

    /// Order along `v = 0`: valuation of the numerator minus that of the denominator.
    pub fn valuation(&self, v: Var) -> Option<i64> {
        let n = self.num.valuation(v)? as i64;
        let d = self.den.valuation(v).unwrap_or(0) as i64;
        Some(n - d)
    }

    /// Multiplies by `v^k` for a signed `k`.
    pub fn shift(&self, v: Var, k: i64) -> Self {
        let m = |p: &BivariatePolynomial, e: u32| match v {
            Var::X => p.shift_up(e, 0),
            Var::Y => p.shift_up(0, e),
        };
        if k >= 0 {
            Self::reduce(m(&self.num, k as u32), self.den.clone())
        } else {
            Self::reduce(self.num.clone(), m(&self.den, (-k) as u32))
        }
    }

    pub fn compose(&self, sx: &BivariatePolynomial, sy: &BivariatePolynomial) -> Self {
        Self::reduce(self.num.compose(sx, sy), self.den.compose(sx, sy))
    }

    pub fn translate(&self, a: &GaussianRational, b: &GaussianRational) -> Self {
        Self::reduce(self.num.translate(a, b), self.den.translate(a, b))
    }

    pub fn eval(&self, x: Complex64, y: Complex64, pole_tol: f64) -> Result<Complex64, AlgebraError> {
        CompiledRational::new(self).eval(x, y, pole_tol)
    }
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_constant() && self.den.constant_term().is_one() {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({}) / ({})", self.num, self.den)
        }
    }
}

/// Double-precision evaluator for a rational function.
#[derive(Clone, Debug, Default)]
pub struct CompiledRational {
    num: CompiledPoly,
    den: CompiledPoly,
}

impl CompiledRational {
    pub fn new(r: &RationalFunction) -> Self {
        Self {
            num: CompiledPoly::new(&r.num),
            den: CompiledPoly::new(&r.den),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn eval(&self, x: Complex64, y: Complex64, pole_tol: f64) -> Result<Complex64, AlgebraError> {
        let d = self.den.eval(x, y);
        if d.norm() <= pole_tol {
            return Err(AlgebraError::NearPole {
                denominator_norm: d.norm(),
            });
        }
        Ok(self.num.eval(x, y) / d)
    }

    pub fn numerator(&self) -> &CompiledPoly {
        &self.num
    }

    pub fn denominator(&self) -> &CompiledPoly {
        &self.den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    fn p(t: &[(i64, u32, u32)]) -> BivariatePolynomial {
        BivariatePolynomial::from_int_terms(t)
    }

    #[test]
    fn evaluate_examples() {
        let f = RationalFunction::new(p(&[(1, 1, 0)]), p(&[(1, 0, 1)])).unwrap();
        assert!((f.eval(C::new(2.0, 0.0), C::new(1.0, 0.0), 1e-12).unwrap() - 2.0).norm() < 1e-15);
        let g = RationalFunction::new(p(&[(1, 0, 0)]), p(&[(1, 1, 0)])).unwrap();
        assert!(matches!(
            g.eval(C::new(0.0, 0.0), C::new(1.0, 0.0), 1e-12),
            Err(AlgebraError::NearPole { .. })
        ));
        let i = GaussianRational::i();
        let num = &p(&[(1, 1, 0)]) + &BivariatePolynomial::monomial(i.clone(), 0, 1);
        let den = &p(&[(1, 1, 0)]) - &BivariatePolynomial::monomial(i, 0, 1);
        let h = RationalFunction::new(num, den).unwrap();
        let v = h.eval(C::new(1.0, 0.0), C::new(1.0, 0.0), 1e-12).unwrap();
        assert!((v - C::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn reduction_removes_detected_factors() {
        let xy = p(&[(1, 1, 0), (-1, 0, 1)]);
        let f = RationalFunction::new(&xy * &p(&[(1, 2, 0), (1, 0, 0)]), xy.clone()).unwrap();
        assert!(f.is_polynomial());
        let g = RationalFunction::new(p(&[(3, 2, 1)]), p(&[(6, 1, 3)])).unwrap();
        assert_eq!(g.numerator(), &p(&[(1, 1, 0)]).scale(&GaussianRational::from_ratio(1, 2)));
        assert_eq!(g.denominator(), &p(&[(1, 0, 2)]));
    }

    #[test]
    fn quotient_rule() {
        // d/dx (1/x) = -1/x^2
        let f = RationalFunction::new(p(&[(1, 0, 0)]), p(&[(1, 1, 0)])).unwrap();
        let want = RationalFunction::new(p(&[(-1, 0, 0)]), p(&[(1, 2, 0)])).unwrap();
        assert_eq!(f.partial(Var::X), want);
    }

    #[test]
    fn valuation_signed() {
        let f = RationalFunction::new(p(&[(1, 2, 0), (1, 3, 1)]), p(&[(1, 5, 0), (1, 5, 1)])).unwrap();
        assert_eq!(f.valuation(Var::X), Some(-3));
    }
}
