//! Exact arithmetic over `ℚ(i)` in one and two variables.

mod gaussian;
mod poly;
mod rational;
mod univariate;

pub use gaussian::{rat_to_f64, GaussianRational};
pub use poly::{BivariatePolynomial, CompiledPoly, Monomial, Var};
pub use rational::{CompiledRational, RationalFunction};
pub use univariate::{complex_roots, exact_candidate, horner, UniPoly, UniRoot};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("division by the zero polynomial")]
    DivisionByZero,
    #[error("evaluation near a pole (|denominator| = {denominator_norm:e})")]
    NearPole { denominator_norm: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolyOp {
    Add,
    Sub,
    Mul,
}

pub fn poly_arith(a: &BivariatePolynomial, b: &BivariatePolynomial, op: PolyOp) -> BivariatePolynomial {
    match op {
        PolyOp::Add => a + b,
        PolyOp::Sub => a - b,
        PolyOp::Mul => a * b,
    }
}

/// Resultant with respect to `y`, as a univariate polynomial in `x`.
///
/// Sylvester determinant evaluated by fraction-free Bareiss elimination.
pub fn resultant_y(a: &BivariatePolynomial, b: &BivariatePolynomial) -> UniPoly {
    if a.is_zero() || b.is_zero() {
        return UniPoly::zero();
    }
    let ca = a.coefficients_in(Var::Y);
    let cb = b.coefficients_in(Var::Y);
    let m = ca.len() - 1;
    let n = cb.len() - 1;
    let size = m + n;
    if size == 0 {
        return UniPoly::constant(GaussianRational::one());
    }
    let mut mat = vec![vec![UniPoly::zero(); size]; size];
    for r in 0..n {
        for (k, c) in ca.iter().enumerate() {
            mat[r][r + m - k] = c.clone();
        }
    }
    for r in 0..m {
        for (k, c) in cb.iter().enumerate() {
            mat[n + r][r + n - k] = c.clone();
        }
    }
    bareiss_det(mat)
}

fn bareiss_det(mut m: Vec<Vec<UniPoly>>) -> UniPoly {
    let n = m.len();
    let mut negate = false;
    let mut prev = UniPoly::constant(GaussianRational::one());
    for k in 0..n.saturating_sub(1) {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(i) => {
                    m.swap(k, i);
                    negate = !negate;
                }
                None => return UniPoly::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = m[i][j].mul(&m[k][k]).sub(&m[i][k].mul(&m[k][j]));
                m[i][j] = t.divide_exact(&prev).expect("Bareiss division is exact");
            }
        }
        prev = m[k][k].clone();
    }
    let d = m[n - 1][n - 1].clone();
    if negate {
        d.neg()
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resultant_of_lines() {
        // y - x and y + x - 2 meet at x = 1.
        let a = BivariatePolynomial::from_int_terms(&[(1, 0, 1), (-1, 1, 0)]);
        let b = BivariatePolynomial::from_int_terms(&[(1, 0, 1), (1, 1, 0), (-2, 0, 0)]);
        let r = resultant_y(&a, &b).monic();
        let want = UniPoly::new(vec![GaussianRational::from_int(-1), GaussianRational::one()]);
        assert_eq!(r, want);
    }

    #[test]
    fn resultant_circle_line() {
        // x^2 + y^2 - 1 and y: roots x = ±1.
        let a = BivariatePolynomial::from_int_terms(&[(1, 2, 0), (1, 0, 2), (-1, 0, 0)]);
        let b = BivariatePolynomial::y();
        let r = resultant_y(&a, &b).monic();
        let want = UniPoly::new(vec![
            GaussianRational::from_int(-1),
            GaussianRational::zero(),
            GaussianRational::one(),
        ]);
        assert_eq!(r, want);
    }

    #[test]
    fn resultant_common_factor_vanishes() {
        let f = BivariatePolynomial::from_int_terms(&[(1, 0, 1), (-1, 1, 0)]);
        let a = &f * &BivariatePolynomial::x();
        let b = &f * &BivariatePolynomial::from_int_terms(&[(1, 0, 1), (3, 0, 0)]);
        assert!(resultant_y(&a, &b).is_zero());
    }
}

/// Exact values serialize as their canonical text and parse back on input.
mod serde_text {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{BivariatePolynomial, GaussianRational, RationalFunction};
    use crate::forms::syntax::{parse_coefficient, parse_expression};

    impl Serialize for GaussianRational {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&self.to_string())
        }
    }

    impl<'de> Deserialize<'de> for GaussianRational {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            let text = String::deserialize(d)?;
            parse_coefficient(&text).map_err(D::Error::custom)
        }
    }

    impl Serialize for BivariatePolynomial {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&self.to_string())
        }
    }

    impl<'de> Deserialize<'de> for BivariatePolynomial {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            let text = String::deserialize(d)?;
            parse_expression(&text)
                .map_err(D::Error::custom)?
                .as_polynomial()
                .ok_or_else(|| D::Error::custom("expected a polynomial"))
        }
    }

    impl Serialize for RationalFunction {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&self.to_string())
        }
    }

    impl<'de> Deserialize<'de> for RationalFunction {
        fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            let text = String::deserialize(d)?;
            parse_expression(&text).map_err(D::Error::custom)
        }
    }
}
