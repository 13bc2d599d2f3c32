//! Location and classification of foliation singularities.
//!
//! Eigenvalues are those of the linear part of the tangent field
//! `Y = B ∂x − A ∂y` where `A dx + B dy` is the saturated polynomial form.
//! With this convention a Siegel point has a negative real eigenvalue ratio.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    complex_roots, horner, BivariatePolynomial, CompiledPoly, GaussianRational, UniRoot, Var,
};
use crate::forms::MeromorphicOneForm;
use crate::numeric::{rationalize, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingularityError {
    #[error("P and Q share a common factor (resultant vanishes identically); remove it first: {hint}")]
    CommonFactor { hint: String },
    #[error("eigenvalue ratio is not a positive integer")]
    NotResonant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyTag {
    Hyperbolic,
    Siegel,
    SaddleNode,
    IrrationalFocus,
    PoincareDulac,
    DicriticalLinear,
    Degenerate,
    /// Integer ratio `n`, not yet split by jet inspection.
    Resonant { n: u32 },
}

impl TaxonomyTag {
    /// Reduced in the sense of Seidenberg.
    pub fn is_reduced(self) -> bool {
        matches!(
            self,
            TaxonomyTag::Hyperbolic | TaxonomyTag::Siegel | TaxonomyTag::SaddleNode | TaxonomyTag::IrrationalFocus
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TaxonomyTag::Hyperbolic => "hyperbolic",
            TaxonomyTag::Siegel => "siegel",
            TaxonomyTag::SaddleNode => "saddle_node",
            TaxonomyTag::IrrationalFocus => "irrational_focus",
            TaxonomyTag::PoincareDulac => "poincare_dulac",
            TaxonomyTag::DicriticalLinear => "dicritical_linear",
            TaxonomyTag::Degenerate => "degenerate",
            TaxonomyTag::Resonant { .. } => "resonant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Exact { x: GaussianRational, y: GaussianRational },
    Numeric { x: C64, y: C64, residual: f64 },
}

impl Location {
    pub fn value(&self) -> (C64, C64) {
        match self {
            Location::Exact { x, y } => (x.to_c64(), y.to_c64()),
            Location::Numeric { x, y, .. } => (*x, *y),
        }
    }

    pub fn exact(&self) -> Option<(&GaussianRational, &GaussianRational)> {
        match self {
            Location::Exact { x, y } => Some((x, y)),
            Location::Numeric { .. } => None,
        }
    }

    pub fn residual(&self) -> f64 {
        match self {
            Location::Exact { .. } => 0.0,
            Location::Numeric { residual, .. } => *residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityRecord {
    pub location: Location,
    /// Linear part of `Y`, row-major.
    pub linear_part: [[C64; 2]; 2],
    /// Ordered with `|λ₁| ≥ |λ₂|`.
    pub eigenvalues: [C64; 2],
    pub quotient_class: TaxonomyTag,
    pub order: u32,
    /// Set when a resonant split had to fall back to floating point.
    #[serde(default)]
    pub tolerance_based: bool,
}

/// Rectangle in `ℂ²` given by bounds on real and imaginary parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_re: (f64, f64),
    pub x_im: (f64, f64),
    pub y_re: (f64, f64),
    pub y_im: (f64, f64),
}

impl Region {
    pub fn square(r: f64) -> Self {
        Self {
            x_re: (-r, r),
            x_im: (-r, r),
            y_re: (-r, r),
            y_im: (-r, r),
        }
    }

    pub fn contains(&self, x: C64, y: C64) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo - 1e-12 && v <= hi + 1e-12;
        inside(x.re, self.x_re) && inside(x.im, self.x_im) && inside(y.re, self.y_re) && inside(y.im, self.y_im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityControls {
    pub residual_tol: f64,
    pub newton_iters: usize,
    pub dedupe_tol: f64,
    pub eigen_tol: f64,
    pub rational_bound: i64,
}

impl Default for SingularityControls {
    fn default() -> Self {
        Self {
            residual_tol: 1e-10,
            newton_iters: 60,
            dedupe_tol: 1e-8,
            eigen_tol: 1e-9,
            rational_bound: 64,
        }
    }
}

pub fn find_singularities(
    w: &MeromorphicOneForm,
    region: &Region,
    ctl: &SingularityControls,
) -> Result<Vec<SingularityRecord>, SingularityError> {
    let (a, b) = w.foliation_pair();
    let points = common_zeros(&a, &b, ctl)?;
    let mut out = Vec::new();
    for loc in points {
        let (x, y) = loc.value();
        if region.contains(x, y) {
            out.push(record_at(&a, &b, loc, ctl));
        }
    }
    Ok(out)
}

/// Builds the record for a known singular point of the saturated pair.
pub fn record_at(
    a: &BivariatePolynomial,
    b: &BivariatePolynomial,
    location: Location,
    ctl: &SingularityControls,
) -> SingularityRecord {
    let (x, y) = location.value();
    let lin = match location.exact() {
        Some((ex, ey)) => exact_linear_part(a, b, ex, ey).map(|r| r.map(|c| c.to_c64())),
        None => numeric_linear_part(a, b, x, y),
    };
    let eigenvalues = eigenvalues(&lin);
    let order = jet_order(a, b, &location, ctl.residual_tol.max(1e-9));
    let mut record = SingularityRecord {
        location,
        linear_part: lin,
        eigenvalues,
        quotient_class: classify(eigenvalues, ctl.eigen_tol, ctl.rational_bound),
        order,
        tolerance_based: false,
    };
    if let TaxonomyTag::Resonant { .. } = record.quotient_class {
        if let Ok(split) = resonant_split_pair(a, b, &record, ctl) {
            record.quotient_class = split.tag;
            record.tolerance_based = split.tolerance_based;
        }
    }
    record
}

/// Common zeros of two polynomials, deduplicated; exact where detectable.
pub fn common_zeros(
    a: &BivariatePolynomial,
    b: &BivariatePolynomial,
    ctl: &SingularityControls,
) -> Result<Vec<Location>, SingularityError> {
    if a.is_zero() || b.is_zero() || a.is_constant() || b.is_constant() {
        return Ok(Vec::new());
    }
    let res = crate::algebra::resultant_y(a, b);
    if res.is_zero() {
        return Err(SingularityError::CommonFactor {
            hint: format!("gcd({a}, {b}) is nontrivial"),
        });
    }
    let newton = Newton::new(a, b);
    let mut found: Vec<Location> = Vec::new();
    for root in res.roots() {
        let candidates = match root {
            UniRoot::Exact(x0) => exact_fibre(a, b, &x0)?
                .into_iter()
                .map(|yr| match yr {
                    UniRoot::Exact(y0) => Location::Exact { x: x0.clone(), y: y0 },
                    UniRoot::Numeric(y0) => newton.polish(x0.to_c64(), y0, ctl),
                })
                .collect::<Vec<_>>(),
            UniRoot::Numeric(x0) => numeric_fibre(a, b, x0)
                .into_iter()
                .map(|y0| newton.polish(x0, y0, ctl))
                .collect(),
        };
        for loc in candidates {
            if loc.residual() > ctl.residual_tol {
                continue;
            }
            let (x, y) = loc.value();
            let dup = found.iter().any(|f| {
                let (fx, fy) = f.value();
                (fx - x).norm() + (fy - y).norm() < ctl.dedupe_tol
            });
            if !dup {
                found.push(loc);
            }
        }
    }
    Ok(found)
}

fn exact_fibre(
    a: &BivariatePolynomial,
    b: &BivariatePolynomial,
    x0: &GaussianRational,
) -> Result<Vec<UniRoot>, SingularityError> {
    let ga = a.restrict(Var::X, x0);
    let gb = b.restrict(Var::X, x0);
    let g = match (ga.is_zero(), gb.is_zero()) {
        (true, true) => {
            return Err(SingularityError::CommonFactor {
                hint: format!("x - ({x0}) divides both coefficients"),
            })
        }
        (true, false) => gb,
        (false, true) => ga,
        (false, false) => ga.gcd(&gb),
    };
    if g.degree().unwrap_or(0) == 0 {
        return Ok(Vec::new());
    }
    Ok(g.roots())
}

/// Coefficients in `y` at `x = x0`, with cancellation to round-off zeroed.
fn fibre_coeffs(p: &BivariatePolynomial, x0: C64) -> Vec<C64> {
    let r = C64::new(x0.norm(), 0.0);
    let mut c: Vec<C64> = p
        .coefficients_in(Var::Y)
        .iter()
        .map(|u| {
            let coeffs = u.to_c64();
            let mags: Vec<C64> = coeffs.iter().map(|z| C64::new(z.norm(), 0.0)).collect();
            let v = horner(&coeffs, x0);
            if v.norm() <= 1e-10 * horner(&mags, r).re {
                C64::new(0.0, 0.0)
            } else {
                v
            }
        })
        .collect();
    while c.last().is_some_and(|z| z.norm() == 0.0) {
        c.pop();
    }
    c
}

fn numeric_fibre(a: &BivariatePolynomial, b: &BivariatePolynomial, x0: C64) -> Vec<C64> {
    let ca = fibre_coeffs(a, x0);
    let cb = fibre_coeffs(b, x0);
    let pick = match (ca.len(), cb.len()) {
        (0, _) => cb,
        (_, 0) => ca,
        (la, lb) if la <= lb => ca,
        _ => cb,
    };
    if pick.len() < 2 {
        return Vec::new();
    }
    complex_roots(&pick)
}

struct Newton {
    a: CompiledPoly,
    b: CompiledPoly,
    ax: CompiledPoly,
    ay: CompiledPoly,
    bx: CompiledPoly,
    by: CompiledPoly,
}

impl Newton {
    fn new(a: &BivariatePolynomial, b: &BivariatePolynomial) -> Self {
        Self {
            a: CompiledPoly::new(a),
            b: CompiledPoly::new(b),
            ax: CompiledPoly::new(&a.partial(Var::X)),
            ay: CompiledPoly::new(&a.partial(Var::Y)),
            bx: CompiledPoly::new(&b.partial(Var::X)),
            by: CompiledPoly::new(&b.partial(Var::Y)),
        }
    }

    fn residual(&self, x: C64, y: C64) -> f64 {
        self.a.eval(x, y).norm().max(self.b.eval(x, y).norm())
    }

    fn polish(&self, mut x: C64, mut y: C64, ctl: &SingularityControls) -> Location {
        let mut best = (x, y, self.residual(x, y));
        for _ in 0..ctl.newton_iters {
            let (fa, fb) = (self.a.eval(x, y), self.b.eval(x, y));
            let (j00, j01) = (self.ax.eval(x, y), self.ay.eval(x, y));
            let (j10, j11) = (self.bx.eval(x, y), self.by.eval(x, y));
            let det = j00 * j11 - j01 * j10;
            if det.norm() < 1e-300 {
                break;
            }
            let dx = (fa * j11 - fb * j01) / det;
            let dy = (j00 * fb - j10 * fa) / det;
            x -= dx;
            y -= dy;
            let r = self.residual(x, y);
            if r < best.2 {
                best = (x, y, r);
            }
            if dx.norm() + dy.norm() < 1e-15 * (1.0 + x.norm() + y.norm()) {
                break;
            }
        }
        Location::Numeric {
            x: best.0,
            y: best.1,
            residual: best.2,
        }
    }
}

/// Linear part of `Y = B ∂x − A ∂y` at an exact point.
pub fn exact_linear_part(
    a: &BivariatePolynomial,
    b: &BivariatePolynomial,
    x: &GaussianRational,
    y: &GaussianRational,
) -> [[GaussianRational; 2]; 2] {
    let d = |p: &BivariatePolynomial, v: Var| p.partial(v).eval_exact(x, y);
    [
        [d(b, Var::X), d(b, Var::Y)],
        [-d(a, Var::X), -d(a, Var::Y)],
    ]
}

pub fn numeric_linear_part(a: &BivariatePolynomial, b: &BivariatePolynomial, x: C64, y: C64) -> [[C64; 2]; 2] {
    let d = |p: &BivariatePolynomial, v: Var| p.partial(v).eval(x, y);
    [[d(b, Var::X), d(b, Var::Y)], [-d(a, Var::X), -d(a, Var::Y)]]
}

/// Eigenvalues ordered by decreasing modulus.
pub fn eigenvalues(m: &[[C64; 2]; 2]) -> [C64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    let (mut l1, mut l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    // Recompute the small root from the product to avoid cancellation.
    if l1.norm() < l2.norm() {
        std::mem::swap(&mut l1, &mut l2);
    }
    if l1.norm() > 0.0 {
        l2 = det / l1;
    }
    [l1, l2]
}

pub fn classify(eigs: [C64; 2], tol: f64, rational_bound: i64) -> TaxonomyTag {
    let [mut l1, mut l2] = eigs;
    if l1.norm() < l2.norm() {
        std::mem::swap(&mut l1, &mut l2);
    }
    if l1.norm() < tol {
        return TaxonomyTag::Degenerate;
    }
    if l2.norm() < tol * l1.norm() {
        return TaxonomyTag::SaddleNode;
    }
    let q = l1 / l2;
    if q.im.abs() > tol * q.norm() {
        return TaxonomyTag::Hyperbolic;
    }
    if q.re < 0.0 {
        return TaxonomyTag::Siegel;
    }
    match rationalize(q.re, rational_bound, tol * q.re.max(1.0)) {
        Some((n, 1)) => TaxonomyTag::Resonant { n: n as u32 },
        // Non-resonant rational node: linearizable, every leaf is a separatrix.
        Some(_) => TaxonomyTag::DicriticalLinear,
        None => TaxonomyTag::IrrationalFocus,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResonantSplit {
    pub tag: TaxonomyTag,
    pub tolerance_based: bool,
}

pub fn resonant_split(
    w: &MeromorphicOneForm,
    s: &SingularityRecord,
    ctl: &SingularityControls,
) -> Result<ResonantSplit, SingularityError> {
    let (a, b) = w.foliation_pair();
    resonant_split_pair(&a, &b, s, ctl)
}

fn resonant_split_pair(
    a: &BivariatePolynomial,
    b: &BivariatePolynomial,
    s: &SingularityRecord,
    ctl: &SingularityControls,
) -> Result<ResonantSplit, SingularityError> {
    let n = match classify(s.eigenvalues, ctl.eigen_tol, ctl.rational_bound) {
        TaxonomyTag::Resonant { n } => n,
        _ => return Err(SingularityError::NotResonant),
    };
    if let Some((x0, y0)) = s.location.exact() {
        let lin = exact_linear_part(a, b, x0, y0);
        let ta = a.translate(x0, y0);
        let tb = b.translate(x0, y0);
        let y1 = Jet::from_poly(&tb, n, |c| c.clone());
        let y2 = Jet::from_poly(&ta, n, |c| -c);
        if let Some(dicritical) = obstruction_vanishes(lin, [y1, y2], n, 0.0) {
            return Ok(ResonantSplit {
                tag: split_tag(dicritical),
                tolerance_based: false,
            });
        }
    }
    let (x0, y0) = s.location.value();
    let y1 = numeric_jet(b, x0, y0, n, 1.0);
    let y2 = numeric_jet(a, x0, y0, n, -1.0);
    let scale = s.eigenvalues[0].norm().max(1.0);
    let dicritical = obstruction_vanishes(s.linear_part, [y1, y2], n, 1e-7 * scale).unwrap_or(false);
    Ok(ResonantSplit {
        tag: split_tag(dicritical),
        tolerance_based: true,
    })
}

fn split_tag(dicritical: bool) -> TaxonomyTag {
    if dicritical {
        TaxonomyTag::DicriticalLinear
    } else {
        TaxonomyTag::PoincareDulac
    }
}

/// Order of the first nonzero jet of `(A, B)` at the point.
pub fn jet_order(a: &BivariatePolynomial, b: &BivariatePolynomial, loc: &Location, tol: f64) -> u32 {
    let min_deg = |p: &BivariatePolynomial| p.terms().map(|((i, j), _)| i + j).min();
    match loc.exact() {
        Some((x, y)) => [a.translate(x, y), b.translate(x, y)]
            .iter()
            .filter_map(min_deg)
            .min()
            .unwrap_or(0),
        None => {
            let (x, y) = loc.value();
            let top = a.degree().unwrap_or(0).max(b.degree().unwrap_or(0));
            let ja = numeric_jet(a, x, y, top, 1.0);
            let jb = numeric_jet(b, x, y, top, 1.0);
            let scale = ja.max_norm().max(jb.max_norm()).max(1.0);
            (0..=top)
                .find(|&k| ja.has_degree(k, tol * scale) || jb.has_degree(k, tol * scale))
                .unwrap_or(0)
        }
    }
}

/// Field operations shared by the exact and floating normal-form passes.
trait Scalar: Clone + std::fmt::Debug {
    fn zero() -> Self;
    fn from_int(n: i64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Option<Self>;
    fn negligible(&self, tol: f64) -> bool;
}

impl Scalar for GaussianRational {
    fn zero() -> Self {
        GaussianRational::zero()
    }
    fn from_int(n: i64) -> Self {
        GaussianRational::from_int(n)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Option<Self> {
        self.checked_div(o)
    }
    fn negligible(&self, _tol: f64) -> bool {
        self.is_zero()
    }
}

impl Scalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn from_int(n: i64) -> Self {
        C64::new(n as f64, 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Option<Self> {
        (o.norm() > 0.0).then(|| self / o)
    }
    fn negligible(&self, tol: f64) -> bool {
        self.norm() <= tol
    }
}

/// Truncated power series in two variables, degrees `≤ cap`.
#[derive(Clone, Debug)]
struct Jet<T> {
    cap: u32,
    terms: BTreeMap<(u32, u32), T>,
}

impl<T: Scalar> Jet<T> {
    fn zero(cap: u32) -> Self {
        Self {
            cap,
            terms: BTreeMap::new(),
        }
    }

    fn from_poly(p: &BivariatePolynomial, cap: u32, f: impl Fn(&GaussianRational) -> T) -> Self {
        let mut j = Self::zero(cap);
        for (&(i, k), c) in p.terms() {
            if i + k <= cap {
                j.terms.insert((i, k), f(c));
            }
        }
        j
    }

    fn monomial(cap: u32, m: (u32, u32), c: T) -> Self {
        let mut j = Self::zero(cap);
        if m.0 + m.1 <= cap {
            j.terms.insert(m, c);
        }
        j
    }

    fn constant(cap: u32, c: T) -> Self {
        Self::monomial(cap, (0, 0), c)
    }

    fn coeff(&self, m: (u32, u32)) -> T {
        self.terms.get(&m).cloned().unwrap_or_else(T::zero)
    }

    fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            let v = r.coeff(*m).add(c);
            r.terms.insert(*m, v);
        }
        r
    }

    fn sub(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for (m, c) in &o.terms {
            let v = r.coeff(*m).sub(c);
            r.terms.insert(*m, v);
        }
        r
    }

    fn scale(&self, c: &T) -> Self {
        Self {
            cap: self.cap,
            terms: self.terms.iter().map(|(m, v)| (*m, v.mul(c))).collect(),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let mut r = Self::zero(self.cap);
        for (&(i1, j1), c1) in &self.terms {
            for (&(i2, j2), c2) in &o.terms {
                let m = (i1 + i2, j1 + j2);
                if m.0 + m.1 <= self.cap {
                    let v = r.coeff(m).add(&c1.mul(c2));
                    r.terms.insert(m, v);
                }
            }
        }
        r
    }

    fn partial(&self, v: Var) -> Self {
        let mut r = Self::zero(self.cap);
        for (&(i, j), c) in &self.terms {
            match v {
                Var::X if i > 0 => {
                    r.terms.insert((i - 1, j), c.mul(&T::from_int(i as i64)));
                }
                Var::Y if j > 0 => {
                    r.terms.insert((i, j - 1), c.mul(&T::from_int(j as i64)));
                }
                _ => {}
            }
        }
        r
    }

    /// Substitutes `x ↦ sx`, `y ↦ sy` (both without constant term).
    fn compose(&self, sx: &Self, sy: &Self) -> Self {
        let cap = self.cap as usize;
        let powers = |s: &Self| {
            let mut p = vec![Self::constant(self.cap, T::from_int(1))];
            for k in 1..=cap {
                let next = p[k - 1].mul(s);
                p.push(next);
            }
            p
        };
        let (px, py) = (powers(sx), powers(sy));
        let mut r = Self::zero(self.cap);
        for (&(i, j), c) in &self.terms {
            r = r.add(&px[i as usize].mul(&py[j as usize]).scale(c));
        }
        r
    }

    fn max_norm(&self) -> f64
    where
        T: Into<C64> + Copy,
    {
        self.terms.values().map(|&c| c.into().norm()).fold(0.0, f64::max)
    }

    fn has_degree(&self, k: u32, tol: f64) -> bool {
        self.terms
            .iter()
            .any(|(&(i, j), c)| i + j == k && !c.negligible(tol))
    }
}

/// Taylor coefficients of `sign·p` at `(x0, y0)` up to degree `cap`.
fn numeric_jet(p: &BivariatePolynomial, x0: C64, y0: C64, cap: u32, sign: f64) -> Jet<C64> {
    let mut j = Jet::zero(cap);
    for ((a, b), c) in p.to_c64_terms() {
        for i in 0..=a {
            for k in 0..=b {
                if i + k > cap {
                    continue;
                }
                let w = binom(a, i) * binom(b, k);
                let v = c * w * x0.powu(a - i) * y0.powu(b - k) * sign;
                let cur = j.coeff((i, k));
                j.terms.insert((i, k), cur + v);
            }
        }
    }
    j
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Returns `Some(true)` when the resonant obstruction vanishes (dicritical),
/// `Some(false)` when it does not, `None` when the exact eigenvalue ratio is
/// not exactly `n`.
fn obstruction_vanishes<T: Scalar>(lin: [[T; 2]; 2], field: [Jet<T>; 2], n: u32, tol: f64) -> Option<bool> {
    let [[a, b], [c, d]] = lin;
    let tr = a.add(&d);
    let det = a.mul(&d).sub(&b.mul(&c));
    let mu2 = tr.div(&T::from_int(n as i64 + 1))?;
    let mu1 = mu2.mul(&T::from_int(n as i64));
    if tol == 0.0 && !mu1.mul(&mu2).sub(&det).negligible(0.0) {
        return None;
    }
    if mu2.negligible(tol) {
        return None;
    }
    if n == 1 {
        return Some(b.negligible(tol) && c.negligible(tol) && a.sub(&d).negligible(tol));
    }
    let cap = n;
    let kernel = |mu: &T| {
        let (m00, m01, m10, m11) = (a.sub(mu), b.clone(), c.clone(), d.sub(mu));
        let zero = T::zero();
        let v = (m01.clone(), zero.sub(&m00));
        if !(v.0.negligible(tol) && v.1.negligible(tol)) {
            v
        } else {
            (m11, zero.sub(&m10))
        }
    };
    let v1 = kernel(&mu1);
    let v2 = kernel(&mu2);
    let tdet = v1.0.mul(&v2.1).sub(&v2.0.mul(&v1.1));
    if tdet.negligible(tol) {
        return None;
    }
    let lin_x = Jet::monomial(cap, (1, 0), v1.0.clone()).add(&Jet::monomial(cap, (0, 1), v2.0.clone()));
    let lin_y = Jet::monomial(cap, (1, 0), v1.1.clone()).add(&Jet::monomial(cap, (0, 1), v2.1.clone()));
    let f1 = field[0].compose(&lin_x, &lin_y);
    let f2 = field[1].compose(&lin_x, &lin_y);
    // T⁻¹ = adj(T) / det(T), then normalize the smaller eigenvalue to 1.
    let s = tdet.mul(&mu2);
    let inv = |t: &T| t.div(&s).expect("nonzero");
    let mut y = [
        f1.scale(&inv(&v2.1)).sub(&f2.scale(&inv(&v2.0))),
        f2.scale(&inv(&v1.0)).sub(&f1.scale(&inv(&v1.1))),
    ];
    let lam = [T::from_int(n as i64), T::from_int(1)];
    for k in 2..n {
        let mut h = [Jet::zero(cap), Jet::zero(cap)];
        for comp in 0..2 {
            for (&(i, j), coef) in &y[comp].terms {
                if i + j != k || coef.negligible(tol) {
                    continue;
                }
                let divisor = T::from_int(i as i64 * n as i64 + j as i64).sub(&lam[comp]);
                let eta = coef.div(&divisor)?;
                h[comp].terms.insert((i, j), eta);
            }
        }
        y = change_coordinates(&y, &h, cap);
    }
    Some(y[0].coeff((0, n)).negligible(tol))
}

/// Field in coordinates `z` where `w = z + h(z)`.
fn change_coordinates<T: Scalar>(y: &[Jet<T>; 2], h: &[Jet<T>; 2], cap: u32) -> [Jet<T>; 2] {
    let one = Jet::constant(cap, T::from_int(1));
    let zx = Jet::monomial(cap, (1, 0), T::from_int(1)).add(&h[0]);
    let zy = Jet::monomial(cap, (0, 1), T::from_int(1)).add(&h[1]);
    let g = [y[0].compose(&zx, &zy), y[1].compose(&zx, &zy)];
    let m00 = one.add(&h[0].partial(Var::X));
    let m01 = h[0].partial(Var::Y);
    let m10 = h[1].partial(Var::X);
    let m11 = one.add(&h[1].partial(Var::Y));
    let u = m00.mul(&m11).sub(&m01.mul(&m10)).sub(&one);
    let mut inv_det = one.clone();
    let mut term = one.clone();
    let neg_u = Jet::zero(cap).sub(&u);
    for _ in 0..cap {
        term = term.mul(&neg_u);
        inv_det = inv_det.add(&term);
    }
    [
        m11.mul(&g[0]).sub(&m01.mul(&g[1])).mul(&inv_det),
        m00.mul(&g[1]).sub(&m10.mul(&g[0])).mul(&inv_det),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(text: &str) -> MeromorphicOneForm {
        MeromorphicOneForm::parse(text).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn radial_point_is_exact_and_dicritical() {
        let s = find_singularities(&form("x dy - y dx"), &Region::square(2.0), &Default::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert!(matches!(s[0].location, Location::Exact { .. }));
        assert_eq!(s[0].quotient_class, TaxonomyTag::DicriticalLinear);
        assert_eq!(s[0].order, 1);
    }

    #[test]
    fn nonsingular_form_has_no_points() {
        let s = find_singularities(&form("dy"), &Region::square(2.0), &Default::default()).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn two_points_on_axis() {
        let w = form("(x^2 - 1) dy - y dx");
        let s = find_singularities(&w, &Region::square(2.0), &Default::default()).unwrap();
        assert_eq!(s.len(), 2);
        let mut xs: Vec<f64> = s.iter().map(|r| r.location.value().0.re).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 1.0).abs() < 1e-12 && (xs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_points_polished() {
        // x^2 = 2 gives irrational abscissae.
        let w = form("(x^2 - 2) dy - (y - x) dx");
        let s = find_singularities(&w, &Region::square(3.0), &Default::default()).unwrap();
        assert_eq!(s.len(), 2);
        for r in &s {
            assert!(r.location.residual() < 1e-10);
            assert!((r.location.value().0.norm() - 2f64.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn common_factor_reported() {
        let w = MeromorphicOneForm::from_polys(
            BivariatePolynomial::from_int_terms(&[(1, 1, 1), (-1, 0, 2), (1, 1, 0), (-1, 0, 1)]),
            BivariatePolynomial::from_int_terms(&[(1, 2, 0), (-1, 1, 1), (2, 1, 0), (-2, 0, 1)]),
        )
        .unwrap();
        let err = find_singularities(&w, &Region::square(2.0), &Default::default());
        assert!(matches!(err, Err(SingularityError::CommonFactor { .. })));
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify([c(1.0, 0.0), c(0.0, 2.0)], 1e-9, 64), TaxonomyTag::Hyperbolic);
        assert_eq!(classify([c(1.0, 0.0), c(-2.0, 0.0)], 1e-9, 64), TaxonomyTag::Siegel);
        assert_eq!(classify([c(2f64.sqrt(), 0.0), c(1.0, 0.0)], 1e-9, 64), TaxonomyTag::IrrationalFocus);
        assert_eq!(classify([c(0.0, 0.0), c(3.0, 0.0)], 1e-9, 64), TaxonomyTag::SaddleNode);
        assert_eq!(classify([c(0.0, 0.0), c(0.0, 0.0)], 1e-9, 64), TaxonomyTag::Degenerate);
        assert_eq!(classify([c(1.0, 0.0), c(3.0, 0.0)], 1e-9, 64), TaxonomyTag::Resonant { n: 3 });
    }

    #[test]
    fn resonant_split_examples() {
        let ctl = SingularityControls::default();
        for (text, want) in [
            ("x dy - y dx", TaxonomyTag::DicriticalLinear),
            ("(x + y) dy - y dx", TaxonomyTag::PoincareDulac),
            ("2*x dy - y dx", TaxonomyTag::DicriticalLinear),
            ("(2*x + y^2) dy - y dx", TaxonomyTag::PoincareDulac),
            ("(3*x + y^3) dy - y dx", TaxonomyTag::PoincareDulac),
        ] {
            let w = form(text);
            let s = find_singularities(&w, &Region::square(1.0), &ctl).unwrap();
            let origin: Vec<_> = s.iter().filter(|r| r.location.value().0.norm() < 1e-12).collect();
            assert_eq!(origin[0].quotient_class, want, "{text}");
            assert!(!origin[0].tolerance_based);
        }
    }

    #[test]
    fn removable_lower_terms_do_not_obstruct() {
        // x ↦ x + y² conjugates 3x dy − y dx into a form with quadratic terms.
        let w = form("(3*x - y^2) dy - y dx");
        let s = find_singularities(&w, &Region::square(0.5), &Default::default()).unwrap();
        assert_eq!(s[0].quotient_class, TaxonomyTag::DicriticalLinear);
    }

    #[test]
    fn non_diagonal_linear_part() {
        // Node 2:1 written in coordinates where the linear part is a Jordan-free
        // but non-diagonal matrix; the y² term survives as the obstruction.
        let pd = form("-y dx + (2*x + y + y^2) dy");
        let lin = form("-y dx + (2*x + y) dy");
        let ctl = SingularityControls::default();
        let s = find_singularities(&pd, &Region::square(0.5), &ctl).unwrap();
        assert_eq!(s[0].quotient_class, TaxonomyTag::PoincareDulac);
        let s = find_singularities(&lin, &Region::square(0.5), &ctl).unwrap();
        assert_eq!(s[0].quotient_class, TaxonomyTag::DicriticalLinear);
    }

    #[test]
    fn numeric_point_split_is_flagged() {
        // Two smooth transverse separatrices at (√2, 0), ratio 4.
        let w = form("-(x*y/2) dx + (x^2 - 2) dy");
        let s = find_singularities(&w, &Region::square(2.0), &Default::default()).unwrap();
        let r = s.iter().find(|r| (r.location.value().0 - c(2f64.sqrt(), 0.0)).norm() < 1e-9).unwrap();
        assert_eq!(r.quotient_class, TaxonomyTag::DicriticalLinear);
        assert!(r.tolerance_based);
    }
}
