//! Meromorphic 1-forms `ω = P dx + Q dy`, the foliated form `Ω₁`, invariance and divisors.

pub mod syntax;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    AlgebraError, BivariatePolynomial, CompiledPoly, CompiledRational, GaussianRational, RationalFunction, Var,
};
use crate::numeric::{c64, C64};
use crate::ode::{integrate, StepControl};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("both coefficients of the form vanish identically")]
    ZeroForm,
    #[error("curve polynomial is constant")]
    ConstantCurve,
    #[error("component {poly}: {reason}")]
    InvalidComponent { poly: String, reason: String },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Syntax(#[from] syntax::SyntaxError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeromorphicOneForm {
    coeff_dx: RationalFunction,
    coeff_dy: RationalFunction,
    not_closed: bool,
}

impl MeromorphicOneForm {
    pub fn new(p: RationalFunction, q: RationalFunction) -> Result<Self, FormError> {
        if p.is_zero() && q.is_zero() {
            return Err(FormError::ZeroForm);
        }
        let d = q.partial(Var::X).sub(&p.partial(Var::Y));
        Ok(Self {
            coeff_dx: p,
            coeff_dy: q,
            not_closed: !d.is_zero(),
        })
    }

    pub fn from_polys(p: BivariatePolynomial, q: BivariatePolynomial) -> Result<Self, FormError> {
        Self::new(p.into(), q.into())
    }

    pub fn parse(text: &str) -> Result<Self, FormError> {
        let (p, q) = syntax::parse_form_coefficients(text)?;
        Self::new(p, q)
    }

    pub fn p(&self) -> &RationalFunction {
        &self.coeff_dx
    }

    pub fn q(&self) -> &RationalFunction {
        &self.coeff_dy
    }

    pub fn is_closed(&self) -> bool {
        !self.not_closed
    }

    /// `∂Q/∂x − ∂P/∂y`, the coefficient of `dω = D dx∧dy`.
    pub fn d_coefficient(&self) -> RationalFunction {
        self.coeff_dy.partial(Var::X).sub(&self.coeff_dx.partial(Var::Y))
    }

    pub fn scale_by(&self, h: &RationalFunction) -> Result<Self, FormError> {
        Self::new(self.coeff_dx.mul(h), self.coeff_dy.mul(h))
    }

    /// Polynomial pair `(A, B)` proportional to `(P, Q)` with detected common factors removed.
    /// `A dx + B dy` defines the same foliation with isolated singularities when saturated.
    pub fn foliation_pair(&self) -> (BivariatePolynomial, BivariatePolynomial) {
        let (pn, pd) = (self.coeff_dx.numerator(), self.coeff_dx.denominator());
        let (qn, qd) = (self.coeff_dy.numerator(), self.coeff_dy.denominator());
        let (a, b) = if pd == qd {
            (pn.clone(), qn.clone())
        } else if let Ok(Some(k)) = qd.divide_exact(pd) {
            (pn * &k, qn.clone())
        } else if let Ok(Some(k)) = pd.divide_exact(qd) {
            (pn.clone(), qn * &k)
        } else {
            (pn * qd, qn * pd)
        };
        saturate(a, b, &[])
    }

    pub fn to_text(&self) -> String {
        format!("({}) dx + ({}) dy", self.coeff_dx, self.coeff_dy)
    }
}

/// Removes common monomial content, constants, and exact one-sided factors,
/// plus any of the `hints` dividing both entries.
pub fn saturate(
    a: BivariatePolynomial,
    b: BivariatePolynomial,
    hints: &[BivariatePolynomial],
) -> (BivariatePolynomial, BivariatePolynomial) {
    if a.is_zero() {
        return (a, BivariatePolynomial::one());
    }
    if b.is_zero() {
        return (BivariatePolynomial::one(), b);
    }
    let (ax, ay) = a.monomial_content();
    let (bx, by) = b.monomial_content();
    let (cx, cy) = (ax.min(bx), ay.min(by));
    let (mut a, mut b) = (a.shift_down(cx, cy), b.shift_down(cx, cy));
    if let Ok(Some(k)) = b.divide_exact(&a) {
        return (BivariatePolynomial::one(), k.make_monic().0);
    }
    if let Ok(Some(k)) = a.divide_exact(&b) {
        return (k.make_monic().0, BivariatePolynomial::one());
    }
    for h in hints.iter().filter(|h| !h.is_constant()) {
        loop {
            match (a.divide_exact(h), b.divide_exact(h)) {
                (Ok(Some(qa)), Ok(Some(qb))) => {
                    a = qa;
                    b = qb;
                }
                _ => break,
            }
        }
    }
    let scale = a.lead().map(|(_, c)| c.clone()).unwrap();
    let inv = scale.inv().unwrap();
    (a.scale(&inv), b.scale(&inv))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gauge {
    /// `g = 0`, `f = −D/Q`.
    DxOnly,
    /// `f = 0`, `g = D/P`.
    DyOnly,
    /// Closed form, `Ω₁ = 0`.
    Zero,
}

/// `Ω₁ = f dx + g dy` with `dω = ω ∧ Ω₁`, defined modulo multiples of `ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoliatedFormRepresentative {
    pub coeff_dx: RationalFunction,
    pub coeff_dy: RationalFunction,
    pub gauge_note: Gauge,
}

impl FoliatedFormRepresentative {
    /// `P·g − Q·f − (∂Q/∂x − ∂P/∂y)`; the zero function for a valid representative.
    pub fn identity_defect(&self, w: &MeromorphicOneForm) -> RationalFunction {
        w.p()
            .mul(&self.coeff_dy)
            .sub(&w.q().mul(&self.coeff_dx))
            .sub(&w.d_coefficient())
    }
}

pub fn compute_omega1(w: &MeromorphicOneForm) -> Result<FoliatedFormRepresentative, FormError> {
    let d = w.d_coefficient();
    if d.is_zero() {
        return Ok(FoliatedFormRepresentative {
            coeff_dx: RationalFunction::zero(),
            coeff_dy: RationalFunction::zero(),
            gauge_note: Gauge::Zero,
        });
    }
    if !w.q().is_zero() {
        Ok(FoliatedFormRepresentative {
            coeff_dx: d.div(w.q())?.neg(),
            coeff_dy: RationalFunction::zero(),
            gauge_note: Gauge::DxOnly,
        })
    } else if !w.p().is_zero() {
        Ok(FoliatedFormRepresentative {
            coeff_dx: RationalFunction::zero(),
            coeff_dy: d.div(w.p())?,
            gauge_note: Gauge::DyOnly,
        })
    } else {
        Err(FormError::ZeroForm)
    }
}

/// `{C = 0}` is invariant when `C` divides `Y(C)` for the tangent field of the
/// foliation saturated along `C`.
pub fn curve_invariant(w: &MeromorphicOneForm, c: &BivariatePolynomial) -> Result<bool, FormError> {
    if c.is_constant() {
        return Err(FormError::ConstantCurve);
    }
    let (a, b) = w.foliation_pair();
    let (a, b) = saturate(a, b, std::slice::from_ref(c));
    let yc = &(&b * &c.partial(Var::X)) - &(&a * &c.partial(Var::Y));
    Ok(c.divides(&yc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorComponent {
    pub defining_poly: BivariatePolynomial,
    /// Positive in `(ω)₀`, negative in `(ω)_∞`.
    pub multiplicity: i64,
    pub invariant_flag: bool,
}

impl DivisorComponent {
    /// Builds a component with the invariance flag computed from `w`.
    pub fn detect(w: &MeromorphicOneForm, poly: BivariatePolynomial, multiplicity: i64) -> Result<Self, FormError> {
        let invariant_flag = curve_invariant(w, &poly)?;
        Ok(Self {
            defining_poly: poly,
            multiplicity,
            invariant_flag,
        })
    }
}

/// Number of times `c` divides `p` (0 for `p = 0`).
fn multiplicity_in(p: &BivariatePolynomial, c: &BivariatePolynomial) -> i64 {
    if p.is_zero() {
        return i64::MAX;
    }
    let mut k = 0;
    let mut cur = p.clone();
    while let Ok(Some(q)) = cur.divide_exact(c) {
        cur = q;
        k += 1;
    }
    k
}

fn order_of(f: &RationalFunction, c: &BivariatePolynomial) -> Option<i64> {
    if f.is_zero() {
        return None;
    }
    Some(multiplicity_in(f.numerator(), c) - multiplicity_in(f.denominator(), c))
}

/// Order of `ω` along `{C = 0}`: the smaller of the orders of `P` and `Q`.
pub fn order_along(w: &MeromorphicOneForm, c: &BivariatePolynomial) -> i64 {
    match (order_of(w.p(), c), order_of(w.q(), c)) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DivisorSplit {
    pub zero_fol: Vec<DivisorComponent>,
    pub zero_perp: Vec<DivisorComponent>,
    pub pole_fol: Vec<DivisorComponent>,
    pub pole_perp: Vec<DivisorComponent>,
}

pub fn split_divisors(w: &MeromorphicOneForm, components: &[DivisorComponent]) -> Result<DivisorSplit, FormError> {
    let mut out = DivisorSplit::default();
    for comp in components {
        let name = comp.defining_poly.to_string();
        if comp.defining_poly.is_constant() {
            return Err(FormError::InvalidComponent {
                poly: name,
                reason: "constant polynomial".into(),
            });
        }
        if comp.multiplicity == 0 {
            return Err(FormError::InvalidComponent {
                poly: name,
                reason: "multiplicity must be nonzero".into(),
            });
        }
        let ord = order_along(w, &comp.defining_poly);
        if ord != comp.multiplicity {
            return Err(FormError::InvalidComponent {
                poly: name,
                reason: format!("stated multiplicity {} but the form has order {}", comp.multiplicity, ord),
            });
        }
        let inv = curve_invariant(w, &comp.defining_poly)?;
        if inv != comp.invariant_flag {
            return Err(FormError::InvalidComponent {
                poly: name,
                reason: format!("invariant_flag {} disagrees with the tangency test", comp.invariant_flag),
            });
        }
        let bucket = match (comp.multiplicity > 0, inv) {
            (true, true) => &mut out.zero_fol,
            (true, false) => &mut out.zero_perp,
            (false, true) => &mut out.pole_fol,
            (false, false) => &mut out.pole_perp,
        };
        bucket.push(comp.clone());
    }
    Ok(out)
}

/// Double-precision evaluator for a form, its saturated tangent field and `Ω₁`.
#[derive(Clone, Debug)]
pub struct CompiledForm {
    pub p: CompiledRational,
    pub q: CompiledRational,
    /// Saturated pair `A dx + B dy`; the tangent field is `Y = (B, −A)`.
    pub a: CompiledPoly,
    pub b: CompiledPoly,
    pub f: CompiledRational,
    pub g: CompiledRational,
    pub pole_tol: f64,
}

impl CompiledForm {
    pub fn new(w: &MeromorphicOneForm, omega1: &FoliatedFormRepresentative) -> Self {
        let (a, b) = w.foliation_pair();
        Self {
            p: CompiledRational::new(w.p()),
            q: CompiledRational::new(w.q()),
            a: CompiledPoly::new(&a),
            b: CompiledPoly::new(&b),
            f: CompiledRational::new(&omega1.coeff_dx),
            g: CompiledRational::new(&omega1.coeff_dy),
            pole_tol: 1e-300,
        }
    }

    pub fn from_form(w: &MeromorphicOneForm) -> Result<Self, FormError> {
        Ok(Self::new(w, &compute_omega1(w)?))
    }

    pub fn tangent(&self, x: C64, y: C64) -> [C64; 2] {
        [self.b.eval(x, y), -self.a.eval(x, y)]
    }

    /// `Ω₁(v)` at `(x, y)`.
    pub fn omega1(&self, x: C64, y: C64, v: [C64; 2]) -> Result<C64, AlgebraError> {
        let mut acc = c64(0.0, 0.0);
        if !self.f.is_zero() {
            acc += self.f.eval(x, y, self.pole_tol)? * v[0];
        }
        if !self.g.is_zero() {
            acc += self.g.eval(x, y, self.pole_tol)? * v[1];
        }
        Ok(acc)
    }

    /// `ω(v)` at `(x, y)`.
    pub fn omega(&self, x: C64, y: C64, v: [C64; 2]) -> Result<C64, AlgebraError> {
        let mut acc = c64(0.0, 0.0);
        if !self.p.is_zero() {
            acc += self.p.eval(x, y, self.pole_tol)? * v[0];
        }
        if !self.q.is_zero() {
            acc += self.q.eval(x, y, self.pole_tol)? * v[1];
        }
        Ok(acc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafPoleData {
    pub pole_order: i64,
    pub residue: C64,
    /// Gaussian-rational value of the residue when it rationalizes cleanly.
    pub residue_exact: Option<GaussianRational>,
}

/// Pole order and residue of `ω₁` restricted to the leaf through `p`, by
/// contour integration around `p` inside the leaf.
pub fn leafwise_pole_data(
    w: &MeromorphicOneForm,
    omega1: &FoliatedFormRepresentative,
    component: &DivisorComponent,
    p: [C64; 2],
    radius: f64,
) -> Result<LeafPoleData, FormError> {
    if component.invariant_flag {
        return Err(FormError::Precondition("component is invariant".into()));
    }
    let cf = CompiledForm::new(w, omega1);
    let [yx, yy] = cf.tangent(p[0], p[1]);
    if yx.norm().max(yy.norm()) < 1e-12 {
        return Err(FormError::Precondition("point is singular for the foliation".into()));
    }
    let on_c = CompiledPoly::new(&component.defining_poly).eval(p[0], p[1]).norm();
    if on_c > 1e-8 {
        return Err(FormError::Precondition(format!("point is off the component (|C(p)| = {on_c:e})")));
    }
    // Parametrize the leaf as a graph over the coordinate with larger tangent component.
    let over_x = yx.norm() >= yy.norm();
    const MOMENTS: usize = 4;
    let rhs = |theta: f64, s: &[C64]| -> Result<Vec<C64>, AlgebraError> {
        let e = C64::from_polar(1.0, theta);
        let dz = c64(0.0, radius) * e;
        let (x, y, dx, dy) = if over_x {
            let x = p[0] + radius * e;
            let y = s[0];
            let slope = -cf.a.eval(x, y) / cf.b.eval(x, y);
            (x, y, dz, slope * dz)
        } else {
            let y = p[1] + radius * e;
            let x = s[0];
            let slope = -cf.b.eval(x, y) / cf.a.eval(x, y);
            (x, y, slope * dz, dz)
        };
        let val = cf.omega1(x, y, [dx, dy])?;
        let mut out = vec![if over_x { dy } else { dx }];
        let z = radius * e;
        let mut zj = c64(1.0, 0.0);
        for _ in 0..MOMENTS {
            out.push(zj * val);
            zj *= z;
        }
        Ok(out)
    };
    let mut y0 = vec![if over_x { p[1] } else { p[0] }];
    y0.extend(std::iter::repeat(c64(0.0, 0.0)).take(MOMENTS));
    let ctl = StepControl {
        rtol: 1e-13,
        atol: 1e-15,
        h_init: 1e-3,
        h_max: 0.05,
        ..StepControl::default()
    };
    let out = integrate(rhs, 0.0, TAU, &y0, &ctl).map_err(|e| FormError::Precondition(format!("{e:?}")))?;
    let two_pi_i = c64(0.0, TAU);
    let laurent: Vec<C64> = out[1..].iter().map(|m| m / two_pi_i).collect();
    let scale = laurent[0].norm() / radius + 1e-300;
    let mut pole_order = 0;
    for (j, a) in laurent.iter().enumerate() {
        if a.norm() / radius.powi(j as i32 + 1) > 1e-7 * scale {
            pole_order = j as i64 + 1;
        }
    }
    let residue = laurent[0];
    let residue_exact = crate::algebra::exact_candidate(residue)
        .filter(|e| (e.to_c64() - residue).norm() < 1e-8 * (1.0 + residue.norm()));
    Ok(LeafPoleData {
        pole_order,
        residue,
        residue_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(s: &str) -> MeromorphicOneForm {
        MeromorphicOneForm::parse(s).unwrap()
    }

    fn poly(s: &str) -> BivariatePolynomial {
        syntax::parse_expression(s).unwrap().as_polynomial().unwrap()
    }

    #[test]
    fn omega1_of_x_dy() {
        let w = form("x dy");
        let o = compute_omega1(&w).unwrap();
        assert_eq!(o.coeff_dx, syntax::parse_expression("-1/x").unwrap());
        assert!(o.coeff_dy.is_zero());
        assert!(o.identity_defect(&w).is_zero());
    }

    #[test]
    fn closed_form_has_zero_representative() {
        let w = form("dy");
        assert!(w.is_closed());
        let o = compute_omega1(&w).unwrap();
        assert!(o.coeff_dx.is_zero() && o.coeff_dy.is_zero());
    }

    #[test]
    fn siegel_restriction() {
        // 2u dv + v du with x = u, y = v; restriction of Ω₁ to {v = 0} is −du/(2u).
        let w = form("2x dy + y dx");
        let o = compute_omega1(&w).unwrap();
        let restricted = o.coeff_dx.compose(&BivariatePolynomial::x(), &BivariatePolynomial::zero());
        assert_eq!(restricted, syntax::parse_expression("-1/(2x)").unwrap());
    }

    #[test]
    fn invariance_examples() {
        assert!(curve_invariant(&form("3x dy - 2y dx"), &poly("x")).unwrap());
        assert!(curve_invariant(&form("x dy - y dx"), &poly("x - y")).unwrap());
        assert!(!curve_invariant(&form("dy"), &poly("x")).unwrap());
        // Leaves y = const cross {x = 0}; the factor x of ω is saturated away.
        assert!(!curve_invariant(&form("x dy"), &poly("x")).unwrap());
        assert!(curve_invariant(&form("x dy"), &poly("y")).unwrap());
        assert!(curve_invariant(&form("dy"), &BivariatePolynomial::one()).is_err());
    }

    #[test]
    fn split_examples() {
        let w = form("y*(x dy - y dx)");
        let c = DivisorComponent::detect(&w, poly("y"), 1).unwrap();
        assert!(c.invariant_flag);
        let s = split_divisors(&w, &[c]).unwrap();
        assert_eq!(s.zero_fol.len(), 1);
        let w = form("x dy");
        let c = DivisorComponent::detect(&w, poly("x"), 1).unwrap();
        let s = split_divisors(&w, &[c]).unwrap();
        assert_eq!(s.zero_perp.len(), 1);
        assert_eq!(split_divisors(&w, &[]).unwrap(), DivisorSplit::default());
        let bad = DivisorComponent {
            defining_poly: poly("x"),
            multiplicity: 2,
            invariant_flag: false,
        };
        assert!(matches!(split_divisors(&w, &[bad]), Err(FormError::InvalidComponent { .. })));
    }

    #[test]
    fn pole_orders_of_monomial_models() {
        for m in 1..=3i64 {
            let w = form(&format!("x^{m} dy"));
            let o = compute_omega1(&w).unwrap();
            let c = DivisorComponent::detect(&w, poly("x"), m).unwrap();
            let d = leafwise_pole_data(&w, &o, &c, [c64(0.0, 0.0), c64(5.0, 0.0)], 0.1).unwrap();
            assert_eq!(d.pole_order, 1);
            assert!((d.residue - c64(-(m as f64), 0.0)).norm() < 1e-9);
            assert_eq!(d.residue_exact, Some(GaussianRational::from_int(-m)));
        }
    }

    #[test]
    fn gauges_agree_on_tangent_vectors() {
        let w = form("(x^2 + y) dx + (x*y - 3) dy");
        let o = compute_omega1(&w).unwrap();
        let d = w.d_coefficient();
        let alt = FoliatedFormRepresentative {
            coeff_dx: RationalFunction::zero(),
            coeff_dy: d.div(w.p()).unwrap(),
            gauge_note: Gauge::DyOnly,
        };
        assert!(alt.identity_defect(&w).is_zero());
        let c1 = CompiledForm::new(&w, &o);
        let c2 = CompiledForm::new(&w, &alt);
        for &(x, y) in &[(0.3, -0.7), (1.2, 0.4), (-0.5, 2.0)] {
            let (x, y) = (c64(x, 0.1), c64(y, -0.2));
            let t = c1.tangent(x, y);
            let a = c1.omega1(x, y, t).unwrap();
            let b = c2.omega1(x, y, t).unwrap();
            assert!((a - b).norm() < 1e-10 * a.norm());
        }
    }
}
