//! Dulac transforms at Siegel corners and their compositions along chains of
//! invariant divisor components.
//!
//! A corner is written `ω = u^a v^b (λ₁ u dv + λ₂ v du)` with `λ₁, λ₂ > 0`,
//! oriented so that trajectories arrive near `{v = 0}` through the section
//! `{u = ε₁}` and leave near `{u = 0}` through `{v = ε₂′}`. The orientation
//! condition is `K = λ₁(1+a) − λ₂(1+b) > 0`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Var;
use crate::holonomy::{transport, LeafPath, PathPiece, TransportControls};
use crate::leafflow::{trace_until, LeafField, SiegelModel, TerminalEvent, TrajectoryControls};
use crate::numeric::{c64, linear_fit, unwrap_angle, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DulacError {
    #[error("v = 0 lies on the separatrix; the transform is undefined there")]
    OnSeparatrix,
    #[error("angle {angle} leaves the sheet (|angle| must be below 2π on a ramified branch)")]
    Sector { angle: f64 },
    #[error("|v| = {modulus} is outside the in-section radius {radius}")]
    OutsideSection { modulus: f64, radius: f64 },
    #[error("eigenvalues must be positive, got λ₁ = {lambda1}, λ₂ = {lambda2}")]
    Eigenvalues { lambda1: f64, lambda2: f64 },
    #[error("numeric passage failed: {0}")]
    Numeric(String),
    #[error("{corner}: orientation inequality {inequality} fails ({value})")]
    Orientation { corner: String, inequality: String, value: f64 },
    #[error("{corner}: divisor order mismatch, expected {expected}, found {found}")]
    OrderMismatch { corner: String, expected: i64, found: i64 },
    #[error("chain needs divisor orders for {expected} components, found {found}")]
    ChainShape { expected: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiegelCornerData {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Order of `{u = 0}` in the divisor of `ω`.
    pub a: i64,
    /// Order of `{v = 0}` in the divisor of `ω`.
    pub b: i64,
    /// In-section `{u = ε₁}`.
    pub eps_in: f64,
    /// Out-section `{v = ε₂′}`.
    pub eps_out: f64,
}

impl SiegelCornerData {
    pub fn new(lambda1: f64, lambda2: f64, a: i64, b: i64) -> Self {
        Self { lambda1, lambda2, a, b, eps_in: 0.1, eps_out: 0.1 }
    }

    pub fn k(&self) -> f64 {
        self.lambda1 * (1 + self.a) as f64 - self.lambda2 * (1 + self.b) as f64
    }

    /// Exponent `λ₁/λ₂` of the transform.
    pub fn exponent(&self) -> f64 {
        self.lambda1 / self.lambda2
    }

    pub fn model(&self) -> SiegelModel {
        SiegelModel::new(self.lambda1, self.lambda2, self.a, self.b)
    }

    fn check(&self) -> Result<(), DulacError> {
        if self.lambda1 > 0.0 && self.lambda2 > 0.0 && self.lambda1.is_finite() && self.lambda2.is_finite() {
            Ok(())
        } else {
            Err(DulacError::Eigenvalues { lambda1: self.lambda1, lambda2: self.lambda2 })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DulacMode {
    /// Closed form from the first integral `u^{λ₂} v^{λ₁}`.
    LinearModel,
    /// `ℋ` trajectory from the in-section to `|v| = ε₂′`, then leaf
    /// transport along that circle to the section point.
    Numeric,
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() < 1e-12 * x.abs().max(1.0)
}

/// Dulac transform of the in-section point `(ε₁, v)` on the principal branch.
pub fn dulac_map(corner: &SiegelCornerData, v: C64, mode: DulacMode) -> Result<C64, DulacError> {
    dulac_map_polar(corner, v.norm(), v.arg(), mode)
}

/// As [`dulac_map`] for `v = r·e^{i·angle}` with the branch fixed by `angle`.
pub fn dulac_map_polar(corner: &SiegelCornerData, r: f64, angle: f64, mode: DulacMode) -> Result<C64, DulacError> {
    corner.check()?;
    if r == 0.0 {
        return Err(DulacError::OnSeparatrix);
    }
    if r >= corner.eps_in {
        return Err(DulacError::OutsideSection { modulus: r, radius: corner.eps_in });
    }
    if angle.abs() >= TAU && !is_integer(corner.exponent()) {
        return Err(DulacError::Sector { angle });
    }
    match mode {
        DulacMode::LinearModel => {
            let e = corner.exponent();
            // (v/ε₂′)^{λ₁/λ₂} on the branch of `angle`.
            Ok(C64::from_polar(corner.eps_in * (r / corner.eps_out).powf(e), angle * e))
        }
        DulacMode::Numeric => numeric_passage(&corner.model(), corner, r, angle),
    }
}

/// Numeric Dulac passage for any leaf field with a Siegel corner at the
/// origin whose separatrices are the axes.
pub fn numeric_passage<F: LeafField + ?Sized>(
    field: &F,
    corner: &SiegelCornerData,
    r: f64,
    angle: f64,
) -> Result<C64, DulacError> {
    let start = [c64(corner.eps_in, 0.0), C64::from_polar(r, angle)];
    let ctl = TrajectoryControls {
        rtol: 1e-12,
        atol: 1e-300,
        step_init: r * 1e-2,
        step_max: corner.eps_out * 0.05,
        length_budget: 100.0 * (corner.eps_in + corner.eps_out),
        singular_radius: 1e-300,
        divisor_radius: 1e-300,
        region_bound: 10.0 * (corner.eps_in + corner.eps_out),
        ..TrajectoryControls::default()
    };
    let eps_out = corner.eps_out;
    let tree = trace_until(field, start, &[], &ctl, &|p| p[1].norm() >= eps_out)
        .map_err(|e| DulacError::Numeric(e.to_string()))?;
    let seg = tree.root();
    if seg.terminal_event != TerminalEvent::ReachedSection {
        return Err(DulacError::Numeric(format!("trajectory ended with {}", seg.terminal_event.name())));
    }
    // Unwrapped argument of v along the trajectory.
    let mut arg = angle;
    for p in &seg.points[1..] {
        arg = unwrap_angle(arg, p[1].arg());
    }
    let hit = *seg.points.last().unwrap();
    // Return to |v| = ε₂′ radially, then around the circle to v = ε₂′.
    let path = LeafPath {
        coordinate: Var::Y,
        start: hit[1],
        pieces: vec![
            PathPiece::Line { to: C64::from_polar(eps_out, arg) },
            PathPiece::Arc { center: c64(0.0, 0.0), sweep: -arg },
        ],
    };
    let tctl = TransportControls { atol: 1e-300, ..TransportControls::default() };
    let end = transport(field, hit, &path, &tctl).map_err(|e| DulacError::Numeric(e.to_string()))?;
    Ok(end.end[0])
}

/// Opening of the sector on which the transform is injective:
/// `2π·min(1, λ₂/λ₁)·(1 − margin)`.
pub fn injectivity_sector(corner: &SiegelCornerData, margin: f64) -> f64 {
    TAU * (corner.lambda2 / corner.lambda1).min(1.0) * (1.0 - margin)
}

/// Smallest distance between images of a polar grid in the sector
/// `|arg v| < angle/2`, `r ∈ [r_min, r_max]`.
pub fn min_output_separation(
    corner: &SiegelCornerData,
    angle: f64,
    r_min: f64,
    r_max: f64,
    n: usize,
) -> Result<f64, DulacError> {
    let side = (n as f64).sqrt().ceil() as usize;
    let mut pts = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let r = r_min * (r_max / r_min).powf(i as f64 / (side - 1).max(1) as f64);
            let t = -angle / 2.0 + angle * j as f64 / (side - 1).max(1) as f64;
            pts.push(dulac_map_polar(corner, r, t, DulacMode::LinearModel)?);
        }
    }
    Ok((0..pts.len())
        .into_par_iter()
        .map(|i| {
            pts[i + 1..]
                .iter()
                .map(|q| (pts[i] - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min))
}

/// A chain `P₀ → p₁ → … → p_k → P₁` along components `D₁, …, D_{k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DulacChainSpec {
    pub entry: SiegelCornerData,
    pub corners: Vec<SiegelCornerData>,
    pub exit: SiegelCornerData,
    /// Order of each component `D_i` in the divisor of `ω`.
    pub divisor_orders: Vec<i64>,
    /// Sheet of the fractional powers, in whole turns of the input argument.
    #[serde(default)]
    pub branch_turns: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DulacExponent {
    pub lambda: f64,
    /// `λ = 1`: the transform is asymptotically flat.
    pub flat_flag: bool,
    /// Every corner satisfies the orientation condition strictly.
    pub strict: bool,
    /// `λ₂/λ₁` at each corner, in order.
    pub factors: Vec<f64>,
}

impl DulacChainSpec {
    pub fn all_corners(&self) -> Vec<(String, SiegelCornerData)> {
        let mut out = vec![("entry".to_string(), self.entry)];
        out.extend(self.corners.iter().enumerate().map(|(i, c)| (format!("corner {}", i + 1), *c)));
        out.push(("exit".to_string(), self.exit));
        out
    }

    /// Orientation and divisor bookkeeping. Returns `true` when every
    /// orientation inequality is strict.
    pub fn validate(&self) -> Result<bool, DulacError> {
        let comps = self.corners.len() + 1;
        if self.divisor_orders.len() != comps {
            return Err(DulacError::ChainShape { expected: comps, found: self.divisor_orders.len() });
        }
        let all = self.all_corners();
        let last = all.len() - 1;
        let mut strict = true;
        for (i, (name, c)) in all.iter().enumerate() {
            c.check()?;
            // Arrival divisor {v = 0} and departure divisor {u = 0}.
            let arrive = if i == 0 { 0 } else { self.divisor_orders[i - 1] };
            let leave = if i == last { 0 } else { self.divisor_orders[i] };
            if c.b != arrive {
                return Err(DulacError::OrderMismatch { corner: name.clone(), expected: arrive, found: c.b });
            }
            if c.a != leave {
                return Err(DulacError::OrderMismatch { corner: name.clone(), expected: leave, found: c.a });
            }
            let k = c.k();
            let scale = c.lambda1 * (1 + c.a).abs() as f64 + c.lambda2 * (1 + c.b).abs() as f64;
            if k.abs() <= 1e-12 * scale.max(1.0) {
                strict = false;
            } else if k < 0.0 {
                return Err(DulacError::Orientation {
                    corner: name.clone(),
                    inequality: format!("{}·(1+{}) − {}·(1+{}) ≥ 0", c.lambda1, c.a, c.lambda2, c.b),
                    value: k,
                });
            }
        }
        Ok(strict)
    }
}

/// Exponent `λ = Π λ₂/λ₁` of the generalized transform, `‖GDul(v)‖ ~ ‖v‖^{1/λ}`.
pub fn gdul_exponent(chain: &DulacChainSpec) -> Result<DulacExponent, DulacError> {
    let strict = chain.validate()?;
    let factors: Vec<f64> = chain.all_corners().iter().map(|(_, c)| c.lambda2 / c.lambda1).collect();
    let lambda: f64 = factors.iter().product();
    Ok(DulacExponent { lambda, flat_flag: (lambda - 1.0).abs() < 1e-12, strict, factors })
}

/// Composition of the linear-model transforms along the chain; the
/// connecting holonomies along the components are taken to be the identity.
pub fn gdul_map(chain: &DulacChainSpec, v: C64) -> Result<C64, DulacError> {
    chain.validate()?;
    let mut r = v.norm();
    let mut angle = v.arg() + TAU * chain.branch_turns as f64;
    for (_, c) in chain.all_corners() {
        let out = dulac_map_polar(&c, r, angle, DulacMode::LinearModel)?;
        r = out.norm();
        angle *= c.exponent();
    }
    Ok(C64::from_polar(r, angle))
}

/// Log-log slope of `|f(v)|` against `|v|` over `n` log-spaced real inputs.
pub fn loglog_slope<G: Fn(C64) -> Result<C64, DulacError>>(f: G, r_min: f64, r_max: f64, n: usize) -> Result<f64, DulacError> {
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for j in 0..n {
        let r = r_min * (r_max / r_min).powf(j as f64 / (n - 1) as f64);
        xs.push(r.ln());
        ys.push(f(c64(r, 0.0))?.norm().ln());
    }
    Ok(linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN))
}

fn corner(l1: f64, l2: f64, a: i64, b: i64) -> SiegelCornerData {
    SiegelCornerData::new(l1, l2, a, b)
}

/// Chains satisfying the orientation conditions strictly.
pub fn corpus_chains() -> Vec<DulacChainSpec> {
    let chain = |entry, corners: Vec<SiegelCornerData>, exit, orders: Vec<i64>| DulacChainSpec {
        entry,
        corners,
        exit,
        divisor_orders: orders,
        branch_turns: 0,
    };
    vec![
        // One component, λ₁⁰ = 3, λ₂⁰ = λ₂¹ = 1, λ₁¹ = 1/2.
        chain(corner(3.0, 1.0, 0, 0), vec![], corner(1.0, 0.5, 0, 0), vec![0]),
        chain(corner(2.0, 1.0, 0, 0), vec![], corner(1.0, 0.75, 0, 0), vec![0]),
        chain(corner(1.0, 1.5, 1, 0), vec![], corner(2.0, 0.8, 0, 1), vec![1]),
        chain(corner(1.0, 2.0, 2, 0), vec![], corner(3.5, 1.0, 0, 2), vec![2]),
        chain(corner(3.0, 1.0, 0, 0), vec![corner(1.5, 1.0, 0, 0)], corner(1.0, 0.5, 0, 0), vec![0, 0]),
        chain(corner(1.0, 1.0, 1, 0), vec![corner(2.0, 1.0, 1, 1)], corner(3.0, 1.0, 0, 1), vec![1, 1]),
        chain(corner(2.0, 1.0, 1, 0), vec![corner(2.0, 2.5, 2, 1)], corner(4.0, 1.0, 0, 2), vec![1, 2]),
        chain(
            corner(1.5, 1.0, 0, 0),
            vec![corner(1.2, 1.0, 0, 0), corner(1.0, 0.9, 0, 0)],
            corner(1.0, 0.7, 0, 0),
            vec![0, 0, 0],
        ),
        chain(
            corner(1.0, 1.0, 1, 0),
            vec![corner(1.0, 1.0, 2, 1), corner(4.0, 2.0, 1, 2)],
            corner(3.0, 1.0, 0, 1),
            vec![1, 2, 1],
        ),
        chain(
            corner(std::f64::consts::PI, 1.0, 0, 0),
            vec![corner(std::f64::consts::E, 2.0, 0, 0)],
            corner(1.0, 0.5f64.sqrt(), 0, 0),
            vec![0, 0],
        ),
    ]
}

/// A chain of holomorphic corners (`K = 0` everywhere), for which `λ = 1`.
pub fn flat_chain() -> DulacChainSpec {
    DulacChainSpec {
        entry: corner(1.0, 1.0, 0, 0),
        corners: vec![corner(1.0, 2.0, 1, 0)],
        exit: corner(2.0, 1.0, 0, 1),
        divisor_orders: vec![0, 1],
        branch_turns: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_example() {
        let c = SiegelCornerData::new(2.0, 1.0, 0, 0);
        let u = dulac_map(&c, c64(0.01, 0.0), DulacMode::LinearModel).unwrap();
        assert!((u - c64(1e-3, 0.0)).norm() < 1e-15);
        assert!(matches!(dulac_map(&c, c64(0.0, 0.0), DulacMode::LinearModel), Err(DulacError::OnSeparatrix)));
        let eq = SiegelCornerData::new(1.5, 1.5, 0, 0);
        let s = loglog_slope(|v| dulac_map(&eq, v, DulacMode::LinearModel), 1e-4, 1e-2, 9).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_matches_linear() {
        for (l1, l2) in [(2.0, 1.0), (3.0, 2.0), (311.0, 99.0)] {
            let c = SiegelCornerData::new(l1, l2, 0, 0);
            for v in [c64(1e-2, 0.0), C64::from_polar(1e-2, 0.7)] {
                let a = dulac_map(&c, v, DulacMode::LinearModel).unwrap();
                let b = dulac_map(&c, v, DulacMode::Numeric).unwrap();
                assert!((a - b).norm() < 1e-4 * a.norm(), "{l1}/{l2}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn sector_errors_on_ramified_branch() {
        let c = SiegelCornerData::new(3.0, 2.0, 0, 0);
        assert!(matches!(dulac_map_polar(&c, 0.01, 7.0, DulacMode::LinearModel), Err(DulacError::Sector { .. })));
        let integral = SiegelCornerData::new(2.0, 1.0, 0, 0);
        assert!(dulac_map_polar(&integral, 0.01, 7.0, DulacMode::LinearModel).is_ok());
    }

    #[test]
    fn injectivity_sectors() {
        let m = 1e-2;
        assert!((injectivity_sector(&SiegelCornerData::new(2.0, 1.0, 0, 0), m) - std::f64::consts::PI * 0.99).abs() < 1e-12);
        assert!((injectivity_sector(&SiegelCornerData::new(1.0, 2.0, 0, 0), m) - TAU * 0.99).abs() < 1e-12);
        assert!((injectivity_sector(&SiegelCornerData::new(1.0, 1.0, 0, 0), m) - TAU * 0.99).abs() < 1e-12);
        let c = SiegelCornerData::new(2.0, 1.0, 0, 0);
        let sep = min_output_separation(&c, injectivity_sector(&c, m), 1e-3, 1e-2, 1000).unwrap();
        assert!(sep > 0.0);
    }

    #[test]
    fn corpus_chains_contract() {
        for chain in corpus_chains() {
            let e = gdul_exponent(&chain).unwrap();
            assert!(e.strict && e.lambda < 1.0 && !e.flat_flag, "{chain:?}");
            let s = loglog_slope(|v| gdul_map(&chain, v), 1e-4, 1e-3, 9).unwrap();
            assert!((s * e.lambda - 1.0).abs() < 1e-2);
            for r in [1e-3, 1e-4, 1e-5] {
                assert!(gdul_map(&chain, c64(r, 0.0)).unwrap().norm() < r);
            }
        }
    }

    #[test]
    fn flat_chain_flagged() {
        let e = gdul_exponent(&flat_chain()).unwrap();
        assert!(e.flat_flag && !e.strict);
        let s = loglog_slope(|v| gdul_map(&flat_chain(), v), 1e-4, 1e-3, 9).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orientation_violation_named() {
        // Exit corner with K = 1 − 2 < 0.
        let bad = DulacChainSpec {
            entry: corner(3.0, 1.0, 0, 0),
            corners: vec![],
            exit: corner(1.0, 2.0, 0, 0),
            divisor_orders: vec![0],
            branch_turns: 0,
        };
        match gdul_exponent(&bad) {
            Err(DulacError::Orientation { corner, .. }) => assert_eq!(corner, "exit"),
            other => panic!("{other:?}"),
        }
        let mismatch = DulacChainSpec { divisor_orders: vec![1], ..bad };
        assert!(matches!(gdul_exponent(&mismatch), Err(DulacError::OrderMismatch { .. })));
    }
}
