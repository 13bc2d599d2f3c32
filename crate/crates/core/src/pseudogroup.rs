//! Renormalization dynamics on a transverse disc.
//!
//! A germ `g(z) = e^{2πiα} z + …` is conjugated by the ramified power map
//! `f(z) = z^λ` to `hₙ = f⁻ⁿ ∘ g ∘ fⁿ`. The maps `hₙ` approach the rotations
//! `z ↦ e^{2πiα/λⁿ} z`, and iterating them approximates any rotation. The
//! module also checks the radial equation for invariant densities and the
//! derivative of the four-leg commutator of two imaginary flows.
//!
//! Fractional powers are tracked in logarithmic coordinates: a point carries
//! `log z` on the determination fixed by its sector and branch, so iterates of
//! `hₙ` may wander around the origin without silently switching branches.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{c64, linear_fit, C64};
use crate::ode::{integrate, StepControl};

pub const DEFAULT_ORDER: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PseudogroupError {
    #[error("invalid germ: {0}")]
    InvalidGerm(String),
    #[error("invalid power map: {0}")]
    InvalidMap(String),
    #[error("|z| = {modulus} is outside the admissible disc of radius {tau}")]
    OutOfDomain { modulus: f64, tau: f64 },
    #[error("argument {arg} leaves the sector centred at {base} with opening {opening}")]
    BranchCrossing { arg: f64, base: f64, opening: f64 },
    #[error("n = {n} is too small; the smallest admissible level is {minimal}")]
    NTooSmall { n: u32, minimal: u32 },
    #[error("density is not positive at r = {r}")]
    InvalidDensity { r: f64 },
    #[error("flow left the domain: {0}")]
    FlowEscape(String),
    #[error("could not close the commutator loop at p (residual {residual:e})")]
    NoClosure { residual: f64 },
}

type Result<T> = std::result::Result<T, PseudogroupError>;

/// Truncated power series `Σ c_k z^k`, `k = 0..=N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticGerm {
    pub coefficients: Vec<C64>,
    /// Radius of a disc on which the series is trusted.
    pub radius_hint: f64,
}

impl AnalyticGerm {
    pub fn new(coefficients: Vec<C64>, radius_hint: f64) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(PseudogroupError::InvalidGerm("no coefficients".into()));
        }
        if !(radius_hint > 0.0 && radius_hint.is_finite()) {
            return Err(PseudogroupError::InvalidGerm(format!("radius hint {radius_hint}")));
        }
        if coefficients.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(PseudogroupError::InvalidGerm("non-finite coefficient".into()));
        }
        Ok(Self { coefficients, radius_hint })
    }

    /// `z ↦ e^{2πiα} z` truncated at `order`.
    pub fn rotation(alpha: f64, order: usize) -> Self {
        let mut c = vec![c64(0.0, 0.0); order.max(1) + 1];
        c[1] = C64::from_polar(1.0, TAU * alpha);
        Self { coefficients: c, radius_hint: 1.0 }
    }

    /// The identity germ `z`.
    pub fn identity(order: usize) -> Self {
        Self::rotation(0.0, order)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficient(&self, k: usize) -> C64 {
        self.coefficients.get(k).copied().unwrap_or(c64(0.0, 0.0))
    }

    pub fn eval(&self, z: C64) -> C64 {
        self.coefficients.iter().rev().fold(c64(0.0, 0.0), |acc, c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        let n = self.order();
        let mut c: Vec<C64> = (1..=n).map(|k| self.coefficients[k] * k as f64).collect();
        c.push(c64(0.0, 0.0));
        Self { coefficients: c, radius_hint: self.radius_hint }
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut c = self.coefficients.clone();
        c.resize(order + 1, c64(0.0, 0.0));
        Self { coefficients: c, radius_hint: self.radius_hint }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.order().max(other.order());
        let c = (0..=n).map(|k| self.coefficient(k) + other.coefficient(k)).collect();
        Self { coefficients: c, radius_hint: self.radius_hint.min(other.radius_hint) }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|c| c * s).collect(),
            radius_hint: self.radius_hint,
        }
    }

    /// Product truncated at the order of `self`.
    pub fn mul(&self, other: &Self) -> Self {
        let n = self.order();
        let mut c = vec![c64(0.0, 0.0); n + 1];
        for (i, a) in self.coefficients.iter().enumerate() {
            if a.norm() == 0.0 {
                continue;
            }
            for j in 0..=(n - i) {
                c[i + j] += a * other.coefficient(j);
            }
        }
        Self { coefficients: c, radius_hint: self.radius_hint.min(other.radius_hint) }
    }

    /// `self ∘ inner`, truncated at the order of `self`. Needs `inner(0) = 0`.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        if inner.coefficient(0).norm() != 0.0 {
            return Err(PseudogroupError::InvalidGerm("inner germ must fix 0".into()));
        }
        let n = self.order();
        let inner = inner.truncate(n);
        let mut acc = Self {
            coefficients: vec![c64(0.0, 0.0); n + 1],
            radius_hint: inner.radius_hint,
        };
        for c in self.coefficients.iter().rev() {
            acc = acc.mul(&inner);
            acc.coefficients[0] += c;
        }
        acc.radius_hint = self.radius_hint.min(inner.radius_hint);
        Ok(acc)
    }

    /// Compositional inverse, for germs with `c₀ = 0` and `c₁ ≠ 0`.
    pub fn inverse(&self) -> Result<Self> {
        let c1 = self.coefficient(1);
        if self.coefficient(0).norm() != 0.0 || c1.norm() == 0.0 {
            return Err(PseudogroupError::InvalidGerm("not invertible at 0".into()));
        }
        let n = self.order();
        let mut h = Self::identity(n).scale(c1.inv());
        let id = Self::identity(n);
        // Each pass fixes one more coefficient.
        for _ in 0..n {
            let r = self.compose(&h)?;
            let err = r.add(&id.scale(c64(-1.0, 0.0)));
            if err.coefficients.iter().all(|c| c.norm() == 0.0) {
                break;
            }
            h = h.add(&err.scale(-c1.inv()));
        }
        Ok(h)
    }

    /// `(1 + self)^e` for `self(0) = 0`, from `(1+s) P′ = e s′ P`.
    pub fn pow1p(&self, e: f64) -> Result<Self> {
        if self.coefficient(0).norm() != 0.0 {
            return Err(PseudogroupError::InvalidGerm("pow1p needs s(0) = 0".into()));
        }
        let n = self.order();
        let mut p = vec![c64(0.0, 0.0); n + 1];
        p[0] = c64(1.0, 0.0);
        for k in 1..=n {
            let mut acc = c64(0.0, 0.0);
            for j in 1..=k {
                acc += self.coefficients[j] * p[k - j] * (e * j as f64 - (k - j) as f64);
            }
            p[k] = acc / k as f64;
        }
        Ok(Self { coefficients: p, radius_hint: self.radius_hint })
    }

    /// `C = Σ_{k≥2} |c_k| R^{k−2}`, so that `|g(z) − c₁z| ≤ C|z|²` on `|z| ≤ R`.
    pub fn coefficient_bound(&self) -> f64 {
        let r = self.radius_hint;
        self.coefficients
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, c)| c.norm() * r.powi(k as i32 - 2))
            .sum()
    }

    /// Geometric estimate of the dropped tail `Σ_{k>N} |c_k| R^k`, read off
    /// the last four coefficients. Infinite when they do not decay.
    pub fn truncation_tail(&self) -> f64 {
        let n = self.order();
        let r = self.radius_hint;
        let last = self.coefficients[n].norm();
        let q = (n.saturating_sub(3).max(1)..=n)
            .map(|k| self.coefficients[k].norm().powf(1.0 / k as f64) * r)
            .fold(0.0, f64::max);
        if q == 0.0 {
            return 0.0;
        }
        if q >= 1.0 {
            return f64::INFINITY;
        }
        last * r.powi(n as i32) * q / (1.0 - q)
    }

    /// `α ∈ [0, 1)` with `c₁ = |c₁| e^{2πiα}`.
    pub fn rotation_number(&self) -> f64 {
        (self.coefficient(1).arg() / TAU).rem_euclid(1.0)
    }

    /// `ρ(w) = (g(w) − c₁w)/(c₁w)`, evaluated without cancellation for tiny `w`.
    fn relative_remainder(&self, w: C64) -> C64 {
        let c1 = self.coefficient(1);
        let tail = self.coefficients[2.min(self.order() + 1)..]
            .iter()
            .rev()
            .fold(c64(0.0, 0.0), |acc, c| acc * w + c);
        tail * w / c1
    }

    fn check_unimodular(&self) -> Result<()> {
        let c1 = self.coefficient(1);
        if self.coefficient(0).norm() != 0.0 || (c1.norm() - 1.0).abs() > 1e-12 {
            return Err(PseudogroupError::InvalidGerm(
                "need g(0) = 0 and a unimodular linear part".into(),
            ));
        }
        Ok(())
    }
}

/// Admissible radius: `τ = min(R, 1/(2C), 1)`. On `|z| < τ` the relative
/// remainder of `g` stays below `1/2` at every level.
pub fn admissible_tau(g: &AnalyticGerm) -> f64 {
    let c = g.coefficient_bound();
    let mut tau = g.radius_hint.min(1.0);
    if c > 0.0 {
        tau = tau.min(0.5 / c);
    }
    tau
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub base: f64,
    pub opening: f64,
}

/// `f(z) = z^λ` on a sector of opening `< 2π/λ`, with the determination of
/// `log z` shifted by `2π·branch`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamifiedPowerMap {
    pub lambda: f64,
    pub sector: Sector,
    pub branch: i64,
}

impl RamifiedPowerMap {
    pub fn new(lambda: f64, sector: Sector, branch: i64) -> Result<Self> {
        if !(lambda > 1.0 && lambda.is_finite()) {
            return Err(PseudogroupError::InvalidMap(format!("lambda = {lambda} must exceed 1")));
        }
        if !(sector.opening > 0.0 && sector.opening < TAU / lambda) {
            return Err(PseudogroupError::InvalidMap(format!(
                "opening {} must lie in (0, 2π/λ)",
                sector.opening
            )));
        }
        Ok(Self { lambda, sector, branch })
    }

    /// Sector centred on the positive axis with opening `fill · 2π/λ`.
    pub fn centred(lambda: f64, fill: f64) -> Result<Self> {
        Self::new(lambda, Sector { base: 0.0, opening: fill * TAU / lambda }, 0)
    }

    /// `log z` on the stored determination.
    pub fn log(&self, z: C64) -> Result<C64> {
        let rel = (z.arg() - self.sector.base + PI).rem_euclid(TAU) - PI;
        if z.norm() == 0.0 || rel.abs() > 0.5 * self.sector.opening {
            return Err(PseudogroupError::BranchCrossing {
                arg: z.arg(),
                base: self.sector.base,
                opening: self.sector.opening,
            });
        }
        Ok(c64(z.norm().ln(), self.sector.base + rel + TAU * self.branch as f64))
    }

    pub fn apply(&self, z: C64) -> Result<C64> {
        Ok((self.log(z)? * self.lambda).exp())
    }

    /// `f⁻¹(w)`, defined when `w` lies in the image sector.
    pub fn inverse(&self, w: C64) -> Result<C64> {
        let centre = self.lambda * (self.sector.base + TAU * self.branch as f64);
        let half = 0.5 * self.lambda * self.sector.opening;
        let rel = (w.arg() - centre + PI).rem_euclid(TAU) - PI;
        if w.norm() == 0.0 || rel.abs() > half {
            return Err(PseudogroupError::BranchCrossing {
                arg: w.arg(),
                base: centre,
                opening: 2.0 * half,
            });
        }
        Ok((c64(w.norm().ln(), centre + rel) / self.lambda).exp())
    }

    /// Sample points `r e^{iφ}` with `φ` spread over the open sector.
    pub fn sector_points(&self, radii: &[f64], n_angles: usize) -> Vec<C64> {
        let mut out = Vec::with_capacity(radii.len() * n_angles);
        for &r in radii {
            for j in 0..n_angles {
                let s = (j as f64 + 0.5) / n_angles as f64 - 0.5;
                out.push(C64::from_polar(r, self.sector.base + 0.98 * s * self.sector.opening));
            }
        }
        out
    }
}

fn log1p_c(z: C64) -> C64 {
    if z.norm() < 1e-3 {
        // Alternating series; eight terms reach roundoff at this size.
        let mut term = z;
        let mut acc = c64(0.0, 0.0);
        for k in 1..=8 {
            acc += term / k as f64 * if k % 2 == 1 { 1.0 } else { -1.0 };
            term *= z;
        }
        acc
    } else {
        (c64(1.0, 0.0) + z).ln()
    }
}

fn expm1_c(z: C64) -> C64 {
    let s = (0.5 * z.im).sin();
    c64(z.re.exp_m1() * z.im.cos() - 2.0 * s * s, z.re.exp() * z.im.sin())
}

fn lambda_pow(lambda: f64, n: u32) -> f64 {
    lambda.powi(n as i32)
}

/// One application of `hₙ` in logarithmic coordinates:
/// `log hₙ(z) = log z + (log c₁ + log(1 + ρ(z^{λⁿ})))/λⁿ`.
fn hn_log_step(f: &RamifiedPowerMap, g: &AnalyticGerm, n: u32, ell: C64) -> (C64, C64) {
    let ln = lambda_pow(f.lambda, n);
    let w = (ell * ln).exp();
    let log_c1 = c64(g.coefficient(1).norm().ln(), TAU * g.rotation_number());
    let l = log1p_c(g.relative_remainder(w));
    (ell + (log_c1 + l) / ln, l / ln)
}

fn check_domain(z: C64, tau: f64) -> Result<()> {
    if z.norm() >= tau {
        return Err(PseudogroupError::OutOfDomain { modulus: z.norm(), tau });
    }
    Ok(())
}

/// `hₙ(z) = f⁻ⁿ ∘ g ∘ fⁿ(z)`, with `f⁻ⁿ` the determination continuing the
/// branch of `z`.
pub fn conjugate_hn(f: &RamifiedPowerMap, g: &AnalyticGerm, n: u32, z: C64) -> Result<C64> {
    g.check_unimodular()?;
    check_domain(z, admissible_tau(g))?;
    let ell = f.log(z)?;
    Ok(hn_log_step(f, g, n, ell).0.exp())
}

/// `|hₙ(z) − e^{2πiα/λⁿ} z|`, computed from the logarithmic remainder so that
/// deviations far below `|z|·ε_mach` are resolved.
pub fn hn_deviation(f: &RamifiedPowerMap, g: &AnalyticGerm, n: u32, z: C64) -> Result<f64> {
    g.check_unimodular()?;
    check_domain(z, admissible_tau(g))?;
    let ell = f.log(z)?;
    let (_, l) = hn_log_step(f, g, n, ell);
    let lin = (g.coefficient(1).norm().ln() / lambda_pow(f.lambda, n)).exp();
    Ok(lin * z.norm() * expm1_c(l).norm())
}

/// `ln` of the bound `(2C/λⁿ)|z|^{λ^{2n−1}}`.
pub fn ln_stated_bound(c: f64, lambda: f64, n: u32, modulus: f64) -> f64 {
    (2.0 * c / lambda_pow(lambda, n)).ln() + lambda.powf(2.0 * n as f64 - 1.0) * modulus.ln()
}

/// `ln` of `(2C/λⁿ)|z|^{1+λⁿ}`, which follows from `|ρ(w)| ≤ C|w|` and
/// `|(1+ρ)^{1/k} − 1| ≤ 2|ρ|/k` on `|ρ| < 1/2`.
pub fn ln_sharp_bound(c: f64, lambda: f64, n: u32, modulus: f64) -> f64 {
    let ln = lambda_pow(lambda, n);
    (2.0 * c / ln).ln() + (1.0 + ln) * modulus.ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub n: u32,
    pub z: C64,
    pub deviation: f64,
    pub ln_deviation: f64,
    pub ln_stated: f64,
    pub ln_sharp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub alpha: f64,
    pub c: f64,
    pub tau: f64,
    pub truncation_tail: f64,
    pub samples: usize,
    /// Samples where the deviation exceeds `(2C/λⁿ)|z|^{λ^{2n−1}}`.
    pub stated_violations: Vec<BoundSample>,
    /// Samples where the deviation exceeds `(2C/λⁿ)|z|^{1+λⁿ}`.
    pub sharp_violations: Vec<BoundSample>,
    /// `sup |hₙ − e^{2πiα/λⁿ} id|` over the samples, per level.
    pub sup_deviation: Vec<(u32, f64)>,
}

impl BoundReport {
    pub fn stated_holds(&self) -> bool {
        self.stated_violations.is_empty()
    }
}

/// Roundoff slack allowed when comparing against a bound.
pub const BOUND_SLACK: f64 = 1e-12;

/// Samples `hₙ` on `|z| ≤ τ` for each level in `levels` and compares the
/// deviation from the rotation against both bounds.
pub fn check_hn_bounds(
    f: &RamifiedPowerMap,
    g: &AnalyticGerm,
    levels: &[u32],
    radius_fractions: &[f64],
    n_angles: usize,
) -> Result<BoundReport> {
    g.check_unimodular()?;
    let tau = admissible_tau(g);
    let c = g.coefficient_bound();
    let radii: Vec<f64> = radius_fractions.iter().map(|s| s * tau).collect();
    let pts = f.sector_points(&radii, n_angles);
    let jobs: Vec<(u32, C64)> = levels.iter().flat_map(|&n| pts.iter().map(move |&z| (n, z))).collect();
    let samples: Vec<BoundSample> = jobs
        .par_iter()
        .map(|&(n, z)| {
            let d = hn_deviation(f, g, n, z)?;
            Ok(BoundSample {
                n,
                z,
                deviation: d,
                ln_deviation: d.ln(),
                ln_stated: ln_stated_bound(c, f.lambda, n, z.norm()),
                ln_sharp: ln_sharp_bound(c, f.lambda, n, z.norm()),
            })
        })
        .collect::<Result<_>>()?;
    let slack = BOUND_SLACK.ln_1p();
    let over = |s: &BoundSample, b: f64| s.deviation > 0.0 && s.ln_deviation > b + slack;
    let stated_violations = samples.iter().filter(|s| over(s, s.ln_stated)).cloned().collect();
    let sharp_violations = samples.iter().filter(|s| over(s, s.ln_sharp)).cloned().collect();
    let sup_deviation = levels
        .iter()
        .map(|&n| {
            let m = samples.iter().filter(|s| s.n == n).map(|s| s.deviation).fold(0.0, f64::max);
            (n, m)
        })
        .collect();
    Ok(BoundReport {
        lambda: f.lambda,
        alpha: g.rotation_number(),
        c,
        tau,
        truncation_tail: g.truncation_tail(),
        samples: samples.len(),
        stated_violations,
        sharp_violations,
        sup_deviation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationApprox {
    pub n: u32,
    pub beta: f64,
    pub kn: u64,
    pub tau: f64,
    /// `(z, hₙ^{kₙ}(z))` pairs.
    pub samples: Vec<(C64, C64)>,
    pub sup_error: f64,
    /// `|β − kₙα/λⁿ|`, in turns.
    pub angle_error: f64,
    /// `(2βC/α) τ^{λ^{2n−1}} + 2π|β − kₙα/λⁿ|·τ/2`.
    pub majorant: f64,
}

fn rotation_precondition(beta: f64, alpha: f64, c: f64, lambda: f64, tau: f64, n: u32) -> bool {
    2.0 * beta * c / alpha * tau.powf(lambda.powf(2.0 * n as f64 - 1.0)) <= 0.5 * tau
}

/// Iterates `hₙ` `kₙ = ⌊βλⁿ/α⌋` times on `|z| ≤ τ/2` and measures the distance
/// to the rotation `z ↦ e^{2πiβ} z`.
pub fn rotation_approx(
    f: &RamifiedPowerMap,
    g: &AnalyticGerm,
    beta: f64,
    n: u32,
    radius_fractions: &[f64],
    n_angles: usize,
) -> Result<RotationApprox> {
    g.check_unimodular()?;
    let alpha = g.rotation_number();
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(PseudogroupError::InvalidGerm("need α > 0 and β > 0".into()));
    }
    let tau = admissible_tau(g);
    let c = g.coefficient_bound();
    if !rotation_precondition(beta, alpha, c, f.lambda, tau, n) {
        let minimal = (n + 1..n + 64)
            .find(|&m| rotation_precondition(beta, alpha, c, f.lambda, tau, m))
            .unwrap_or(u32::MAX);
        return Err(PseudogroupError::NTooSmall { n, minimal });
    }
    let ln = lambda_pow(f.lambda, n);
    let kn = (beta * ln / alpha).floor() as u64;
    let radii: Vec<f64> = radius_fractions.iter().map(|s| s * 0.5 * tau).collect();
    let pts = f.sector_points(&radii, n_angles);
    let rot = C64::from_polar(1.0, TAU * beta);
    let samples: Vec<(C64, C64)> = pts
        .par_iter()
        .map(|&z| {
            let mut ell = f.log(z)?;
            for _ in 0..kn {
                ell = hn_log_step(f, g, n, ell).0;
                check_domain(ell.exp(), tau)?;
            }
            Ok((z, ell.exp()))
        })
        .collect::<Result<_>>()?;
    let sup_error = samples.iter().map(|(z, w)| (w - rot * z).norm()).fold(0.0, f64::max);
    let angle_error = (beta - kn as f64 * alpha / ln).abs();
    let majorant = 2.0 * beta * c / alpha * tau.powf(f.lambda.powf(2.0 * n as f64 - 1.0))
        + TAU * angle_error * 0.5 * tau;
    Ok(RotationApprox {
        n,
        beta,
        kn,
        tau,
        samples,
        sup_error,
        angle_error,
        majorant,
    })
}

/// Density `T(r)` of a rotation-invariant measure `T(r) dr dθ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialDensity {
    /// `1/(r log²(1/r))`.
    LogSquared,
    /// `r`, the Lebesgue measure in polar coordinates.
    Lebesgue,
    /// `r^exponent`.
    Power { exponent: f64 },
    /// Samples interpolated linearly in `(log r, log T)`.
    Sampled { r: Vec<f64>, t: Vec<f64> },
}

impl RadialDensity {
    pub fn eval(&self, r: f64) -> Result<f64> {
        let v = match self {
            Self::LogSquared => {
                let l = r.ln();
                1.0 / (r * l * l)
            }
            Self::Lebesgue => r,
            Self::Power { exponent } => r.powf(*exponent),
            Self::Sampled { r: rs, t } => {
                if rs.len() != t.len() || rs.len() < 2 || r < rs[0] || r > rs[rs.len() - 1] {
                    return Err(PseudogroupError::InvalidDensity { r });
                }
                let i = rs.partition_point(|&x| x <= r).clamp(1, rs.len() - 1);
                let (x0, x1) = (rs[i - 1].ln(), rs[i].ln());
                if t[i - 1] <= 0.0 || t[i] <= 0.0 {
                    return Err(PseudogroupError::InvalidDensity { r });
                }
                let w = (r.ln() - x0) / (x1 - x0);
                ((1.0 - w) * t[i - 1].ln() + w * t[i].ln()).exp()
            }
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(PseudogroupError::InvalidDensity { r });
        }
        Ok(v)
    }
}

/// `max |T(r) − λ² r^{λ−1} T(r^λ)| / T(r)` over the grid.
pub fn radial_density_check(t: &RadialDensity, lambda: f64, r_grid: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &r in r_grid {
        if !(r > 0.0 && r < 1.0) {
            return Err(PseudogroupError::InvalidDensity { r });
        }
        let lhs = t.eval(r)?;
        let rhs = lambda * lambda * r.powf(lambda - 1.0) * t.eval(r.powf(lambda))?;
        worst = worst.max((lhs - rhs).abs() / lhs);
    }
    Ok(worst)
}

/// Residual of the Lebesgue density, `|1 − λ² r^{2λ−2}|`.
pub fn lebesgue_residual_profile(lambda: f64, r: f64) -> f64 {
    (1.0 - lambda * lambda * r.powf(2.0 * lambda - 2.0)).abs()
}

/// Holomorphic field `v(z) ∂z` with its derivative.
trait Field: Sync {
    fn v(&self, z: C64) -> (C64, C64);
}

struct Euler;

impl Field for Euler {
    fn v(&self, z: C64) -> (C64, C64) {
        (z, c64(1.0, 0.0))
    }
}

struct Scaled<'a> {
    c: &'a AnalyticGerm,
    dc: AnalyticGerm,
}

impl Field for Scaled<'_> {
    fn v(&self, z: C64) -> (C64, C64) {
        let c = self.c.eval(z);
        (c * z, self.dc.eval(z) * z + c)
    }
}

const ESCAPE: f64 = 1e6;

/// Flow of `i·v` for time `time`, with the variational factor.
fn imaginary_flow(field: &dyn Field, z: C64, d: C64, time: f64) -> Result<(C64, C64)> {
    let ctl = StepControl {
        rtol: 1e-13,
        atol: 1e-15,
        h_init: 1e-3,
        h_max: 0.05,
        ..StepControl::default()
    };
    let out = integrate(
        |_, y: &[C64]| {
            if y[0].norm() > ESCAPE || !y[0].re.is_finite() {
                return Err(PseudogroupError::FlowEscape(format!("|z| = {}", y[0].norm())));
            }
            let (v, dv) = field.v(y[0]);
            let i = c64(0.0, 1.0);
            Ok(vec![i * v, i * dv * y[1]])
        },
        0.0,
        time,
        &[z, d],
        &ctl,
    )
    .map_err(|e| match e {
        crate::ode::OdeError::Rhs(e) => e,
        other => PseudogroupError::FlowEscape(format!("{other:?}")),
    })?;
    Ok((out[0], out[1]))
}

fn four_legs(x: &dyn Field, x1: &dyn Field, p: C64, times: [f64; 4]) -> Result<(C64, C64)> {
    let (mut z, mut d) = (p, c64(1.0, 0.0));
    for (k, &t) in times.iter().enumerate() {
        let field = if k % 2 == 0 { x } else { x1 };
        (z, d) = imaginary_flow(field, z, d, t)?;
    }
    Ok((z, d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub p: C64,
    pub s: f64,
    pub t: f64,
    /// Closing times `s′, t′` of the third and fourth legs.
    pub s_close: f64,
    pub t_close: f64,
    /// `[X, X₁](p) = −p² c′(p)`.
    pub bracket: C64,
    pub derivative: C64,
    /// `1 − st·[X, X₁](p)`.
    pub predicted: C64,
    pub error: f64,
}

/// Derivative at `p` of `D^{st}`: the imaginary flows of `X = z∂z` for time `s`,
/// of `X₁ = c(z)z∂z` for time `t`, then of `X` and `X₁` again for the times
/// `s′ ≈ −s`, `t′ ≈ −t` that bring `p` back to itself.
pub fn commutator_derivative(c: &AnalyticGerm, p: C64, s: f64, t: f64) -> Result<CommutatorReport> {
    let x1 = Scaled { c, dc: c.derivative() };
    let close = |sc: f64, tc: f64| four_legs(&Euler, &x1, p, [s, t, sc, tc]);
    let (mut sc, mut tc) = (-s, -t);
    let mut residual = f64::INFINITY;
    for _ in 0..40 {
        let (z, _) = close(sc, tc)?;
        let r = z - p;
        residual = r.norm();
        if residual < 1e-14 * (1.0 + p.norm()) {
            break;
        }
        let h = 1e-6;
        let js = (close(sc + h, tc)?.0 - close(sc - h, tc)?.0) / (2.0 * h);
        let jt = (close(sc, tc + h)?.0 - close(sc, tc - h)?.0) / (2.0 * h);
        let det = js.re * jt.im - js.im * jt.re;
        if det.abs() < 1e-300 {
            return Err(PseudogroupError::NoClosure { residual });
        }
        sc -= (r.re * jt.im - r.im * jt.re) / det;
        tc -= (js.re * r.im - js.im * r.re) / det;
    }
    if residual > 1e-10 * (1.0 + p.norm()) {
        return Err(PseudogroupError::NoClosure { residual });
    }
    let (_, derivative) = close(sc, tc)?;
    let bracket = -p * p * c.derivative().eval(p);
    let predicted = c64(1.0, 0.0) - bracket * (s * t);
    Ok(CommutatorReport {
        p,
        s,
        t,
        s_close: sc,
        t_close: tc,
        bracket,
        derivative,
        predicted,
        error: (derivative - predicted).norm(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorSweep {
    pub reports: Vec<CommutatorReport>,
    /// `error / (s² + t²)` along the sweep.
    pub scaled_errors: Vec<f64>,
    /// Extrapolation of the scaled error to `s = t = 0`.
    pub richardson_limit: f64,
    /// Slope of `log error` against `log ε`.
    pub empirical_order: f64,
    /// `error = o(s² + t²)`: the extrapolated scaled error vanishes and the
    /// order is at least two.
    pub matches_expansion: bool,
}

/// Runs [`commutator_derivative`] at `s = t = ε` for each `ε` in `eps`
/// (decreasing) and tests whether the error is `o(s² + t²)`.
pub fn commutator_sweep(c: &AnalyticGerm, p: C64, eps: &[f64]) -> Result<CommutatorSweep> {
    let reports: Vec<CommutatorReport> = eps
        .par_iter()
        .map(|&e| commutator_derivative(c, p, e, e))
        .collect::<Result<_>>()?;
    let scaled_errors: Vec<f64> = reports.iter().map(|r| r.error / (r.s * r.s + r.t * r.t)).collect();
    let m = eps.len();
    let richardson_limit = if m >= 2 {
        let (e1, e2) = (eps[m - 2], eps[m - 1]);
        let (f1, f2) = (scaled_errors[m - 2], scaled_errors[m - 1]);
        (e1 * f2 - e2 * f1) / (e1 - e2)
    } else {
        f64::NAN
    };
    let pairs: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.error > 0.0)
        .map(|r| (r.s.ln(), r.error.ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let empirical_order = linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::INFINITY);
    let scale = 1.0 + reports.first().map(|r| r.bracket.norm()).unwrap_or(0.0);
    let all_tiny = reports.iter().all(|r| r.error < 1e-10);
    let matches_expansion =
        all_tiny || (empirical_order >= 2.0 && richardson_limit.abs() <= 1e-3 * scale);
    Ok(CommutatorSweep {
        reports,
        scaled_errors,
        richardson_limit,
        empirical_order,
        matches_expansion,
    })
}

/// Böttcher coordinate of `f(z) = z^d (1 + u(z))` for integer `d ≥ 2`, as a
/// series `φ(z) = z (1 + ψ(z))` with `φ ∘ f = φ^d`, found by iterating
/// `ψ ← ((1 + u)(1 + ψ ∘ f))^{1/d} − 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bottcher {
    pub degree: u32,
    pub phi: AnalyticGerm,
    pub iterations: usize,
    /// `sup |φ(f(z)) − φ(z)^d| / |φ(z)|^d` on the check circle.
    pub residual: f64,
    pub check_radius: f64,
}

pub fn bottcher_series(degree: u32, u: &AnalyticGerm, check_radius: f64) -> Result<Bottcher> {
    if degree < 2 {
        return Err(PseudogroupError::InvalidMap("degree must be at least 2".into()));
    }
    if u.coefficient(0).norm() != 0.0 {
        return Err(PseudogroupError::InvalidGerm("u(0) must vanish".into()));
    }
    let n = u.order();
    let mut fc = vec![c64(0.0, 0.0); n + 1];
    for (k, c) in u.coefficients.iter().enumerate() {
        if k + degree as usize <= n {
            fc[k + degree as usize] += c;
        }
    }
    if (degree as usize) <= n {
        fc[degree as usize] += c64(1.0, 0.0);
    }
    let f = AnalyticGerm::new(fc, u.radius_hint)?;
    let one_u = u.add(&AnalyticGerm::new(vec![c64(1.0, 0.0)], u.radius_hint)?);
    let mut psi = AnalyticGerm::new(vec![c64(0.0, 0.0); n + 1], u.radius_hint)?;
    let mut iterations = 0;
    for it in 0..4 * n + 8 {
        iterations = it + 1;
        let mut inner = psi.compose(&f)?;
        inner.coefficients[0] += c64(1.0, 0.0);
        let mut prod = one_u.truncate(n).mul(&inner);
        prod.coefficients[0] -= c64(1.0, 0.0);
        let mut next = prod.pow1p(1.0 / degree as f64)?;
        next.coefficients[0] -= c64(1.0, 0.0);
        let delta = next
            .coefficients
            .iter()
            .zip(&psi.coefficients)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        psi = next;
        if delta == 0.0 {
            break;
        }
    }
    let mut phi_c = vec![c64(0.0, 0.0); n + 1];
    for k in 0..n {
        phi_c[k + 1] = psi.coefficients[k];
    }
    phi_c[1] += c64(1.0, 0.0);
    let phi = AnalyticGerm::new(phi_c, u.radius_hint)?;
    let residual = (0..64)
        .map(|j| {
            let z = C64::from_polar(check_radius, TAU * j as f64 / 64.0);
            let fz = z.powu(degree) * (c64(1.0, 0.0) + u.eval(z));
            let pz = phi.eval(z).powu(degree);
            (phi.eval(fz) - pz).norm() / pz.norm()
        })
        .fold(0.0, f64::max);
    Ok(Bottcher {
        degree,
        phi,
        iterations,
        residual,
        check_radius,
    })
}

/// A germ together with the power map it is renormalized by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusGerm {
    pub name: String,
    pub germ: AnalyticGerm,
    pub map: RamifiedPowerMap,
    /// Accuracy of the Böttcher normalization, when one was applied.
    pub normalization_residual: Option<f64>,
}

/// `e^{2πiα} z (1 + z²)^{1/2}` truncated at `order`, with `R = 1`.
pub fn sqrt_germ(alpha: f64, order: usize) -> AnalyticGerm {
    let mut s = vec![c64(0.0, 0.0); order + 1];
    if order >= 2 {
        s[2] = c64(1.0, 0.0);
    }
    let root = AnalyticGerm { coefficients: s, radius_hint: 1.0 }.pow1p(0.5).expect("s(0) = 0");
    let mut c = vec![c64(0.0, 0.0); order + 1];
    for k in 0..order {
        c[k + 1] = root.coefficients[k];
    }
    AnalyticGerm { coefficients: c, radius_hint: 1.0 }.scale(C64::from_polar(1.0, TAU * alpha))
}

/// The germ family used by the renormalization experiments.
pub fn corpus_germs() -> Vec<CorpusGerm> {
    let n = DEFAULT_ORDER;
    let fifth = 0.2;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let mut out = vec![CorpusGerm {
        name: "sqrt_fifth".into(),
        germ: sqrt_germ(fifth, n),
        map: RamifiedPowerMap::centred(2.0, 0.9).expect("valid"),
        normalization_residual: None,
    }];
    let mut quad = AnalyticGerm::rotation(fifth, n);
    quad.coefficients[2] = C64::from_polar(0.25, TAU * fifth);
    out.push(CorpusGerm {
        name: "quadratic_fifth".into(),
        germ: quad,
        map: RamifiedPowerMap::centred(2.0, 0.9).expect("valid"),
        normalization_residual: None,
    });
    let rot = C64::from_polar(1.0, TAU * golden);
    let mut expc = vec![c64(0.0, 0.0); n + 1];
    let mut fact = 1.0;
    for k in 1..=n {
        expc[k] = rot * 0.5f64.powi(k as i32 - 1) / fact;
        fact *= k as f64;
    }
    out.push(CorpusGerm {
        name: "exp_golden".into(),
        germ: AnalyticGerm { coefficients: expc, radius_hint: 1.0 },
        map: RamifiedPowerMap::centred(1.5, 0.9).expect("valid"),
        normalization_residual: None,
    });
    // Return map z²(1 + z/4) brought to z² by its Böttcher coordinate; the
    // transverse germ is conjugated along.
    let mut u = vec![c64(0.0, 0.0); n + 1];
    u[1] = c64(0.25, 0.0);
    let u = AnalyticGerm { coefficients: u, radius_hint: 0.5 };
    let b = bottcher_series(2, &u, 0.1).expect("degree 2");
    let mut raw = AnalyticGerm::rotation(fifth, n);
    raw.coefficients[2] = c64(0.125, 0.0);
    raw.radius_hint = 0.5;
    let inv = b.phi.inverse().expect("phi'(0) = 1");
    let g = b.phi.compose(&raw.compose(&inv).expect("fixes 0")).expect("fixes 0");
    let g = AnalyticGerm { coefficients: g.coefficients, radius_hint: 0.25 };
    out.push(CorpusGerm {
        name: "normalized_fifth".into(),
        germ: g,
        map: RamifiedPowerMap::centred(2.0, 0.9).expect("valid"),
        normalization_residual: Some(b.residual),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn series_inverse_round_trip() {
        let g = sqrt_germ(0.2, 16);
        let inv = g.inverse().unwrap();
        let id = g.compose(&inv).unwrap();
        assert!(close(id.coefficient(1), c64(1.0, 0.0), 1e-13));
        for k in 2..=16 {
            assert!(id.coefficient(k).norm() < 1e-12, "k = {k}");
        }
        let z = c64(0.1, 0.05);
        assert!(close(inv.eval(g.eval(z)), z, 1e-12));
    }

    #[test]
    fn pow1p_matches_closed_form() {
        let mut s = vec![c64(0.0, 0.0); 20];
        s[1] = c64(1.0, 0.0);
        let s = AnalyticGerm::new(s, 0.5).unwrap();
        let p = s.pow1p(0.5).unwrap();
        let z = c64(0.2, -0.1);
        assert!(close(p.eval(z), (c64(1.0, 0.0) + z).sqrt(), 1e-12));
    }

    #[test]
    fn sqrt_germ_has_unit_constant() {
        let g = sqrt_germ(0.2, DEFAULT_ORDER);
        let c = g.coefficient_bound();
        assert!(c > 0.85 && c <= 1.0, "C = {c}");
        assert!((g.rotation_number() - 0.2).abs() < 1e-14);
        assert!((admissible_tau(&g) - 0.5 / c).abs() < 1e-14);
    }

    #[test]
    fn linear_germ_conjugates_to_rotation() {
        let f = RamifiedPowerMap::centred(2.0, 0.9).unwrap();
        let g = AnalyticGerm::rotation(0.2, 8);
        let z = c64(0.3, 0.1);
        for n in 0..6 {
            let h = conjugate_hn(&f, &g, n, z).unwrap();
            let want = C64::from_polar(1.0, TAU * 0.2 / 2f64.powi(n as i32)) * z;
            assert!(close(h, want, 1e-15));
            assert_eq!(hn_deviation(&f, &g, n, z).unwrap(), 0.0);
        }
    }

    #[test]
    fn level_zero_is_the_germ() {
        let f = RamifiedPowerMap::centred(1.5, 0.9).unwrap();
        for cg in corpus_germs() {
            let z = C64::from_polar(0.3 * admissible_tau(&cg.germ), 0.2);
            let h = conjugate_hn(&f, &cg.germ, 0, z).unwrap();
            assert!(close(h, cg.germ.eval(z), 1e-14), "{}", cg.name);
        }
    }

    #[test]
    fn integer_power_matches_direct_composition() {
        let f = RamifiedPowerMap::centred(2.0, 0.9).unwrap();
        let g = sqrt_germ(0.2, DEFAULT_ORDER);
        let z = C64::from_polar(0.4, 0.3);
        for n in 1..=3u32 {
            let d = 2u32.pow(n);
            let gw = g.eval(z.powu(d));
            let lin = C64::from_polar(1.0, TAU * 0.2 / d as f64) * z;
            // The d-th root of g(z^d) closest to the rotated point.
            let root = (0..d)
                .map(|k| gw.powf(1.0 / d as f64) * C64::from_polar(1.0, TAU * k as f64 / d as f64))
                .min_by(|a, b| (a - lin).norm().total_cmp(&(b - lin).norm()))
                .unwrap();
            assert!(close(conjugate_hn(&f, &g, n, z).unwrap(), root, 1e-14));
        }
    }

    #[test]
    fn domain_and_branch_errors() {
        let f = RamifiedPowerMap::centred(2.0, 0.9).unwrap();
        let g = sqrt_germ(0.2, DEFAULT_ORDER);
        let tau = admissible_tau(&g);
        assert!(matches!(
            conjugate_hn(&f, &g, 1, c64(tau, 0.0)),
            Err(PseudogroupError::OutOfDomain { .. })
        ));
        assert!(matches!(
            conjugate_hn(&f, &g, 1, c64(-0.1, 0.0)),
            Err(PseudogroupError::BranchCrossing { .. })
        ));
        assert!(RamifiedPowerMap::new(2.0, Sector { base: 0.0, opening: PI }, 0).is_err());
        assert!(RamifiedPowerMap::new(1.0, Sector { base: 0.0, opening: 1.0 }, 0).is_err());
        let w = f.apply(c64(0.2, 0.1)).unwrap();
        assert!(close(f.inverse(w).unwrap(), c64(0.2, 0.1), 1e-15));
    }

    #[test]
    fn sharp_bound_holds_everywhere() {
        for cg in corpus_germs() {
            let r = check_hn_bounds(&cg.map, &cg.germ, &[0, 1, 2, 3, 4, 5, 6], &[0.99, 0.6, 0.3, 0.1], 7).unwrap();
            assert!(r.sharp_violations.is_empty(), "{}: {:?}", cg.name, r.sharp_violations.first());
        }
    }

    #[test]
    fn stated_exponent_bound_fails_beyond_first_level() {
        let f = RamifiedPowerMap::centred(2.0, 0.9).unwrap();
        let g = sqrt_germ(0.2, DEFAULT_ORDER);
        let r = check_hn_bounds(&f, &g, &[1], &[0.99, 0.5, 0.1], 5).unwrap();
        assert!(r.stated_holds());
        let z = c64(0.3, 0.0);
        let d = hn_deviation(&f, &g, 3, z).unwrap();
        assert!(d.ln() > ln_stated_bound(g.coefficient_bound(), 2.0, 3, 0.3));
        assert!(d.ln() < ln_sharp_bound(g.coefficient_bound(), 2.0, 3, 0.3));
    }

    #[test]
    fn rotation_counts_and_majorant() {
        let f = RamifiedPowerMap::centred(2.0, 0.9).unwrap();
        let g = sqrt_germ(0.2, DEFAULT_ORDER);
        let r = rotation_approx(&f, &g, 1.0 / 3.0, 4, &[1.0, 0.5], 5).unwrap();
        assert_eq!(r.kn, 26);
        assert!((r.angle_error - 1.0 / 120.0).abs() < 1e-15);
        assert!(r.sup_error <= r.majorant);
        let lin = AnalyticGerm::rotation(0.2, 8);
        let r = rotation_approx(&f, &lin, 1.0 / 3.0, 4, &[1.0], 3).unwrap();
        for (z, w) in &r.samples {
            assert!(close(*w, C64::from_polar(1.0, TAU * 26.0 / 80.0) * z, 1e-14));
        }
    }

    #[test]
    fn rotation_reports_minimal_level() {
        let f = RamifiedPowerMap::centred(2.0, 0.9).unwrap();
        let mut g = AnalyticGerm::rotation(0.01, 8);
        g.coefficients[2] = C64::from_polar(10.0, TAU * 0.01);
        match rotation_approx(&f, &g, 0.9, 0, &[1.0], 3) {
            Err(PseudogroupError::NTooSmall { n: 0, minimal }) => assert!(minimal >= 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn log_squared_density_is_invariant() {
        let grid: Vec<f64> = (1..200).map(|k| k as f64 / 200.0).collect();
        for lambda in [1.5, 2.0, std::f64::consts::E] {
            let res = radial_density_check(&RadialDensity::LogSquared, lambda, &grid).unwrap();
            assert!(res < 1e-12, "lambda {lambda}: {res}");
        }
        let res = radial_density_check(&RadialDensity::Lebesgue, 1.0, &grid).unwrap();
        assert_eq!(res, 0.0);
    }

    #[test]
    fn lebesgue_residual_profile_matches() {
        for &r in &[0.1, 0.3, 0.5, 0.8] {
            let res = radial_density_check(&RadialDensity::Lebesgue, 2.0, &[r]).unwrap();
            assert!((res - (r - 4.0 * r * r * r).abs() / r).abs() < 1e-14);
            assert!((res - lebesgue_residual_profile(2.0, r)).abs() < 1e-14);
        }
        assert!(radial_density_check(&RadialDensity::Lebesgue, 2.0, &[1.5]).is_err());
        let bad = RadialDensity::Sampled { r: vec![0.1, 0.5], t: vec![1.0, -1.0] };
        assert!(bad.eval(0.3).is_err());
    }

    #[test]
    fn constant_scaling_commutes() {
        let c = AnalyticGerm::new(vec![c64(2.0, 0.5)], 1.0).unwrap();
        let r = commutator_derivative(&c, c64(1.0, 0.0), 0.1, 0.1).unwrap();
        assert!((r.derivative.norm() - 1.0).abs() < 1e-10);
        assert!(r.error < 1e-10);
    }

    #[test]
    fn euclidean_commutator_has_unit_modulus() {
        // With c(z) = z both flows act as isometries of w = 1/z.
        let c = AnalyticGerm::new(vec![c64(0.0, 0.0), c64(1.0, 0.0)], 1.0).unwrap();
        let r = commutator_derivative(&c, c64(1.0, 0.0), 0.1, 0.1).unwrap();
        assert!((r.derivative.norm() - 1.0).abs() < 1e-9);
        assert!((r.bracket - c64(-1.0, 0.0)).norm() < 1e-15);
        assert!(close(r.predicted, c64(1.01, 0.0), 1e-15));
    }

    #[test]
    fn bottcher_conjugates_to_pure_power() {
        let mut u = vec![c64(0.0, 0.0); 25];
        u[1] = c64(0.25, 0.0);
        u[2] = c64(0.0, 0.1);
        let u = AnalyticGerm::new(u, 0.5).unwrap();
        let b = bottcher_series(2, &u, 0.1).unwrap();
        assert!(b.residual < 1e-12, "{}", b.residual);
        assert!(close(b.phi.coefficient(1), c64(1.0, 0.0), 0.0));
    }
}
