//! Transport along leaves, holonomy between transverse sections, and
//! contraction fits along `ℋ` trajectories.

use std::cell::RefCell;
use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Var;
use crate::forms::{CompiledForm, MeromorphicOneForm};
use crate::leafflow::{LeafError, LeafField, TrajectorySegment};
use crate::numeric::{c64, gauss_legendre, linear_fit, C64};
use crate::ode::{integrate, OdeError, StepControl};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HolonomyError {
    #[error("leaf path failed at ({x}, {y}): {reason}")]
    Path { x: C64, y: C64, reason: String },
    #[error("invalid section: {0}")]
    Section(String),
    #[error("insufficient data: {samples} samples (need at least 5)")]
    InsufficientData { samples: usize },
    #[error("section coordinate inversion did not converge for {0}")]
    Inversion(C64),
}

fn path_error(e: LeafError, reason: &str) -> HolonomyError {
    let (x, y) = match e {
        LeafError::NearPole { x, y } | LeafError::Singular { x, y } | LeafError::SaddleProximity { x, y, .. } => (x, y),
    };
    HolonomyError::Path { x, y, reason: reason.to_string() }
}

fn index(v: Var) -> usize {
    match v {
        Var::X => 0,
        Var::Y => 1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PathPiece {
    Line { to: C64 },
    /// Arc around `center`, counterclockwise for positive `sweep` (radians).
    Arc { center: C64, sweep: f64 },
}

impl PathPiece {
    fn end(&self, from: C64) -> C64 {
        match self {
            PathPiece::Line { to } => *to,
            PathPiece::Arc { center, sweep } => center + (from - center) * C64::from_polar(1.0, *sweep),
        }
    }

    fn at(&self, from: C64, tau: f64) -> (C64, C64) {
        match self {
            PathPiece::Line { to } => (from + (to - from) * tau, to - from),
            PathPiece::Arc { center, sweep } => {
                let g = center + (from - center) * C64::from_polar(1.0, sweep * tau);
                (g, (g - center) * c64(0.0, *sweep))
            }
        }
    }
}

/// A path in one coordinate of the chart; the leaf is lifted over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafPath {
    pub coordinate: Var,
    pub start: C64,
    pub pieces: Vec<PathPiece>,
}

impl LeafPath {
    pub fn line(coordinate: Var, from: C64, to: C64) -> Self {
        Self { coordinate, start: from, pieces: vec![PathPiece::Line { to }] }
    }

    /// `turns` counterclockwise turns (negative for clockwise) starting at `from`.
    pub fn circle(coordinate: Var, center: C64, from: C64, turns: f64) -> Self {
        Self { coordinate, start: from, pieces: vec![PathPiece::Arc { center, sweep: TAU * turns }] }
    }

    pub fn polyline(coordinate: Var, points: &[C64]) -> Self {
        Self {
            coordinate,
            start: points[0],
            pieces: points[1..].iter().map(|&to| PathPiece::Line { to }).collect(),
        }
    }

    pub fn end(&self) -> C64 {
        self.pieces.iter().fold(self.start, |p, piece| piece.end(p))
    }

    /// Concatenation: `self` followed by `next`.
    pub fn then(&self, next: &LeafPath) -> Result<LeafPath, HolonomyError> {
        let gap = (self.end() - next.start).norm();
        if self.coordinate != next.coordinate || gap > 1e-12 * (1.0 + next.start.norm()) {
            return Err(HolonomyError::Section("paths do not concatenate".into()));
        }
        let mut out = self.clone();
        out.pieces.extend(next.pieces.iter().cloned());
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportControls {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// The lifted coordinate may not exceed this modulus.
    pub escape_bound: f64,
    /// `|Y_k| / |Y|` below this means the leaf is tangent to the fibre.
    pub pole_tol: f64,
    /// Base step of the finite-difference derivative.
    pub fd_step: f64,
}

impl Default for TransportControls {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-15,
            max_steps: 200_000,
            escape_bound: 1e6,
            pole_tol: 1e-12,
            fd_step: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub end: [C64; 2],
    pub omega1_integral: C64,
    pub length: f64,
}

fn transport_piece<F: LeafField + ?Sized>(
    field: &F,
    k: usize,
    p: [C64; 2],
    piece: &PathPiece,
    ctl: &TransportControls,
) -> Result<(C64, C64, f64), HolonomyError> {
    let from = p[k];
    let step = StepControl {
        rtol: ctl.rtol,
        atol: ctl.atol,
        h_init: 1e-3,
        h_min: 1e-14,
        h_max: 0.02,
        max_steps: ctl.max_steps,
    };
    let out = integrate(
        |tau, st: &[C64]| {
            let (g, dg) = piece.at(from, tau);
            let mut q = [g, g];
            q[1 - k] = st[0];
            if st[0].norm() > ctl.escape_bound {
                return Err(HolonomyError::Path { x: q[0], y: q[1], reason: "leaf escapes the chart".into() });
            }
            let t = field.tangent(q);
            let nt = (t[0].norm_sqr() + t[1].norm_sqr()).sqrt();
            if !(t[k].norm() > ctl.pole_tol * nt) {
                return Err(HolonomyError::Path { x: q[0], y: q[1], reason: "leaf tangent to the fibre".into() });
            }
            let slope = t[1 - k] / t[k];
            let o = field.omega1_y(q).map_err(|e| path_error(e, "pole of the foliated form"))?;
            Ok(vec![slope * dg, o / t[k] * dg, c64((1.0 + slope.norm_sqr()).sqrt() * dg.norm(), 0.0)])
        },
        0.0,
        1.0,
        &[p[1 - k], c64(0.0, 0.0), c64(0.0, 0.0)],
        &step,
    )
    .map_err(|e| match e {
        OdeError::Rhs(e) => e,
        OdeError::StepCollapse { s, .. } | OdeError::TooManySteps { s } => {
            let (g, _) = piece.at(from, s);
            HolonomyError::Path { x: g, y: g, reason: format!("step control failed at path parameter {s}") }
        }
    })?;
    Ok((out[0], out[1], out[2].re))
}

/// Lifts `path` to the leaf through `start`; `start` must lie over the path start.
pub fn transport<F: LeafField + ?Sized>(
    field: &F,
    start: [C64; 2],
    path: &LeafPath,
    ctl: &TransportControls,
) -> Result<TransportResult, HolonomyError> {
    let k = index(path.coordinate);
    if (start[k] - path.start).norm() > 1e-12 * (1.0 + path.start.norm()) {
        return Err(HolonomyError::Section("start point does not lie over the path start".into()));
    }
    let mut p = start;
    p[k] = path.start;
    let mut integral = c64(0.0, 0.0);
    let mut length = 0.0;
    for piece in &path.pieces {
        let (other, di, dl) = transport_piece(field, k, p, piece, ctl)?;
        p[k] = piece.end(p[k]);
        p[1 - k] = other;
        integral += di;
        length += dl;
    }
    Ok(TransportResult { end: p, omega1_integral: integral, length })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    Hermitian,
    /// Coordinate `φ(p) = ∫ω` from the base along the section.
    OmegaParametrized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseSection {
    pub base: [C64; 2],
    pub direction: [C64; 2],
    pub parametrization: Parametrization,
    pub radius: f64,
}

impl TransverseSection {
    /// The fibre `x = base.x`, or `y = base.y` when `coordinate` is `Y`.
    pub fn fibre(coordinate: Var, base: [C64; 2], parametrization: Parametrization, radius: f64) -> Self {
        let direction = match coordinate {
            Var::X => [c64(0.0, 0.0), c64(1.0, 0.0)],
            Var::Y => [c64(1.0, 0.0), c64(0.0, 0.0)],
        };
        Self { base, direction, parametrization, radius }
    }

    fn at(&self, t: C64) -> [C64; 2] {
        [self.base[0] + self.direction[0] * t, self.base[1] + self.direction[1] * t]
    }

    /// Transversality at the base. Returns `true` when `ω(direction)` is
    /// small there, i.e. the `ω` coordinate is ramified.
    pub fn validate<F: LeafField + ?Sized>(&self, field: &F) -> Result<bool, HolonomyError> {
        let nd = (self.direction[0].norm_sqr() + self.direction[1].norm_sqr()).sqrt();
        if !(nd > 0.0) || !(self.radius >= 0.0) {
            return Err(HolonomyError::Section("degenerate direction or radius".into()));
        }
        let y = field.tangent(self.base);
        let wedge = (y[0] * self.direction[1] - y[1] * self.direction[0]).norm();
        let ny = (y[0].norm_sqr() + y[1].norm_sqr()).sqrt();
        if !(wedge > 1e-10 * ny * nd) {
            return Err(HolonomyError::Section("direction is tangent to the foliation at the base".into()));
        }
        let w = field
            .omega(self.base, self.direction)
            .map_err(|_| HolonomyError::Section("ω has a pole at the base".into()))?;
        Ok(w.norm() < 1e-8 * nd)
    }

    fn omega_dir(&self, field: &(impl LeafField + ?Sized), t: C64) -> Result<C64, HolonomyError> {
        field.omega(self.at(t), self.direction).map_err(|e| path_error(e, "pole of ω on the section"))
    }

    /// Section coordinate of the parameter `t`.
    fn coord_of(&self, field: &(impl LeafField + ?Sized), t: C64) -> Result<C64, HolonomyError> {
        match self.parametrization {
            Parametrization::Hermitian => {
                let nd = (self.direction[0].norm_sqr() + self.direction[1].norm_sqr()).sqrt();
                Ok(t * nd)
            }
            Parametrization::OmegaParametrized => {
                let bad = RefCell::new(None);
                let v = gauss_legendre(
                    |s| match self.omega_dir(field, t * s) {
                        Ok(w) => w * t,
                        Err(e) => {
                            bad.borrow_mut().get_or_insert(e);
                            c64(0.0, 0.0)
                        }
                    },
                    0.0,
                    1.0,
                    4,
                );
                match bad.into_inner() {
                    Some(e) => Err(e),
                    None => Ok(v),
                }
            }
        }
    }

    fn param_of(&self, p: [C64; 2]) -> C64 {
        let d = self.direction;
        let dd = d[0].norm_sqr() + d[1].norm_sqr();
        ((p[0] - self.base[0]) * d[0].conj() + (p[1] - self.base[1]) * d[1].conj()) / dd
    }

    /// Section coordinate of a point on the section.
    pub fn coordinate<F: LeafField + ?Sized>(&self, field: &F, p: [C64; 2]) -> Result<C64, HolonomyError> {
        self.coord_of(field, self.param_of(p))
    }

    /// Point of the section with the given coordinate.
    pub fn point<F: LeafField + ?Sized>(&self, field: &F, coord: C64) -> Result<[C64; 2], HolonomyError> {
        match self.parametrization {
            Parametrization::Hermitian => {
                let nd = (self.direction[0].norm_sqr() + self.direction[1].norm_sqr()).sqrt();
                Ok(self.at(coord / nd))
            }
            Parametrization::OmegaParametrized => {
                let w0 = self.omega_dir(field, c64(0.0, 0.0))?;
                if w0.norm() == 0.0 {
                    return Err(HolonomyError::Inversion(coord));
                }
                let mut t = coord / w0;
                for _ in 0..60 {
                    let r = self.coord_of(field, t)? - coord;
                    let dt = r / self.omega_dir(field, t)?;
                    t -= dt;
                    if dt.norm() <= 1e-15 * (1.0 + t.norm()) {
                        return Ok(self.at(t));
                    }
                }
                Err(HolonomyError::Inversion(coord))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomySample {
    pub input: C64,
    pub output: Option<C64>,
    /// Failure description when the probe could not be transported.
    pub flag: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyResult {
    pub samples: Vec<HolonomySample>,
    /// Richardson-extrapolated central difference at the base.
    pub derivative_at_base: C64,
    /// `exp(−∫_c Ω₁)` along the lift of the base point.
    pub plemma_derivative: C64,
    pub omega1_integral: C64,
    pub path_length: f64,
    pub relative_deviation: f64,
    /// Some section coordinate is ramified at its base.
    pub ramified: bool,
}

fn check_fibre(section: &TransverseSection, k: usize, over: C64, which: &str) -> Result<(), HolonomyError> {
    let nd = (section.direction[0].norm_sqr() + section.direction[1].norm_sqr()).sqrt();
    if section.direction[k].norm() > 1e-14 * nd {
        return Err(HolonomyError::Section(format!("{which} must be a fibre of the path coordinate")));
    }
    if (section.base[k] - over).norm() > 1e-12 * (1.0 + over.norm()) {
        return Err(HolonomyError::Section(format!("{which} does not lie over the path endpoint")));
    }
    Ok(())
}

/// Holonomy from `sigma0` to `sigma1` along `path`. Both sections must be
/// fibres of the path coordinate over the path endpoints.
pub fn holonomy_map<F: LeafField + ?Sized>(
    field: &F,
    sigma0: &TransverseSection,
    sigma1: &TransverseSection,
    path: &LeafPath,
    probes: &[C64],
    ctl: &TransportControls,
) -> Result<HolonomyResult, HolonomyError> {
    let k = index(path.coordinate);
    check_fibre(sigma0, k, path.start, "sigma0")?;
    check_fibre(sigma1, k, path.end(), "sigma1")?;
    let ramified = sigma0.validate(field)? | sigma1.validate(field)?;
    let map = |c: C64| -> Result<C64, HolonomyError> {
        let p = sigma0.point(field, c)?;
        let r = transport(field, p, path, ctl)?;
        sigma1.coordinate(field, r.end)
    };
    let samples: Vec<HolonomySample> = probes
        .par_iter()
        .map(|&c| {
            if c.norm() > sigma0.radius {
                return HolonomySample { input: c, output: None, flag: Some("outside the section radius".into()) };
            }
            match map(c) {
                Ok(v) => HolonomySample { input: c, output: Some(v), flag: None },
                Err(e) => HolonomySample { input: c, output: None, flag: Some(e.to_string()) },
            }
        })
        .collect();
    let base = transport(field, sigma0.point(field, c64(0.0, 0.0))?, path, ctl)?;
    let h = ctl.fd_step * sigma0.radius.clamp(1e-6, 1.0);
    let central = |h: f64| -> Result<C64, HolonomyError> { Ok((map(c64(h, 0.0))? - map(c64(-h, 0.0))?) / (2.0 * h)) };
    let (d1, d2) = (central(h)?, central(h / 2.0)?);
    let derivative_at_base = (d2 * 4.0 - d1) / 3.0;
    let plemma_derivative = (-base.omega1_integral).exp();
    Ok(HolonomyResult {
        samples,
        derivative_at_base,
        plemma_derivative,
        omega1_integral: base.omega1_integral,
        path_length: base.length,
        relative_deviation: (derivative_at_base - plemma_derivative).norm() / plemma_derivative.norm(),
        ramified,
    })
}

/// Multiplier of the loop holonomy of `λ₁ x dy − λ₂ y dx` around `{x = 0}`
/// for `turns` counterclockwise turns: `exp(2πi·turns·λ₂/λ₁)`.
pub fn linear_loop_multiplier(lambda1: C64, lambda2: C64, turns: f64) -> C64 {
    (c64(0.0, TAU * turns) * lambda2 / lambda1).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionFit {
    /// Slope of `log|Hol′|` against length, equal to `−k/2`.
    pub slope: f64,
    pub intercept: f64,
    pub c: f64,
    pub k: f64,
    /// Largest residual over the range of `log|Hol′|` in the window.
    pub relative_residual: f64,
    pub window: (f64, f64),
    /// `(length, log|Hol′|)` pairs used in the fit.
    pub samples: Vec<(f64, f64)>,
}

fn interpolate(lengths: &[f64], values: &[f64], s: f64) -> f64 {
    let i = lengths.partition_point(|&l| l < s).clamp(1, lengths.len() - 1);
    let (l0, l1) = (lengths[i - 1], lengths[i]);
    let w = if l1 > l0 { (s - l0) / (l1 - l0) } else { 0.0 };
    values[i - 1] + w * (values[i] - values[i - 1])
}

/// Fits `log|Hol′| = −Re ∫Ω₁` against prefix length on a trajectory segment,
/// sampled at `n_samples` log-spaced lengths in `window` (default: the last
/// two decades of the segment length).
pub fn contraction_fit(
    segment: &TrajectorySegment,
    window: Option<(f64, f64)>,
    n_samples: usize,
) -> Result<ContractionFit, HolonomyError> {
    let total = segment.length;
    let raw = segment.lengths.len();
    if raw < 5 || !(total > 0.0) {
        return Err(HolonomyError::InsufficientData { samples: raw });
    }
    let (lo, hi) = window.unwrap_or((total / 100.0, total));
    let hi = hi.min(total);
    let inside = segment.lengths.iter().filter(|&&l| l >= lo && l <= hi).count();
    if !(lo > 0.0 && hi > lo) || inside < 5 || n_samples < 5 {
        return Err(HolonomyError::InsufficientData { samples: inside });
    }
    let values: Vec<f64> = segment.integrals.iter().map(|i| -i.re).collect();
    let samples: Vec<(f64, f64)> = (0..n_samples)
        .map(|j| {
            let s = lo * (hi / lo).powf(j as f64 / (n_samples - 1) as f64);
            (s, interpolate(&segment.lengths, &values, s))
        })
        .collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let fit = linear_fit(&xs, &ys).ok_or(HolonomyError::InsufficientData { samples: n_samples })?;
    Ok(ContractionFit {
        slope: fit.slope,
        intercept: fit.intercept,
        c: fit.intercept.exp(),
        k: -2.0 * fit.slope,
        relative_residual: fit.relative_residual,
        window: (lo, hi),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainCheckpoint {
    pub length: f64,
    pub diameter: f64,
    /// `2δ·|∂(lifted coordinate)|` predicted from `exp(−∫Ω₁)`.
    pub predicted: f64,
    pub distortion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainEscape {
    pub probe: usize,
    pub prefix_length: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainCheckReport {
    pub delta: f64,
    pub checkpoints: Vec<DomainCheckpoint>,
    pub escape: Option<DomainEscape>,
    pub max_distortion: f64,
    pub passed: bool,
}

/// Transports a disc of radius `delta` in the fibre through the segment start
/// along the segment, and compares image diameters with the contraction
/// predicted by `exp(−∫Ω₁)`.
pub fn uniform_domain_check<F: LeafField + ?Sized>(
    field: &F,
    segment: &TrajectorySegment,
    delta: f64,
    n_probes: usize,
    distortion_bound: f64,
    ctl: &TransportControls,
) -> Result<DomainCheckReport, HolonomyError> {
    let vacuous = DomainCheckReport { delta, checkpoints: vec![], escape: None, max_distortion: 1.0, passed: true };
    if delta == 0.0 || segment.points.len() < 2 {
        return Ok(vacuous);
    }
    let var = |k: usize| segment.points.windows(2).map(|w| (w[1][k] - w[0][k]).norm()).sum::<f64>();
    let k = if var(0) >= var(1) { 0 } else { 1 };
    let o = 1 - k;
    let mut e = [c64(0.0, 0.0); 2];
    e[o] = c64(1.0, 0.0);
    let pts = &segment.points;
    let stride = (pts.len() / 20).max(1);
    let mut probes: Vec<[C64; 2]> = (0..n_probes.max(3))
        .map(|j| {
            let mut p = pts[0];
            p[o] += C64::from_polar(delta, TAU * j as f64 / n_probes.max(3) as f64);
            p
        })
        .collect();
    let w0 = field.omega(pts[0], e).map_err(|e| path_error(e, "pole of ω at the start"))?;
    let mut report = vacuous;
    let mut idx = 0;
    while idx + 1 < pts.len() {
        let next = (idx + stride).min(pts.len() - 1);
        let piece_path: Vec<C64> = pts[idx..=next].iter().map(|p| p[k]).collect();
        for (j, p) in probes.iter_mut().enumerate() {
            for b in piece_path.iter().skip(1) {
                match transport_piece(field, k, *p, &PathPiece::Line { to: *b }, ctl) {
                    Ok((other, _, _)) => {
                        p[k] = *b;
                        p[o] = other;
                    }
                    Err(err) => {
                        report.escape = Some(DomainEscape {
                            probe: j,
                            prefix_length: segment.lengths[idx],
                            reason: err.to_string(),
                        });
                        report.passed = false;
                        return Ok(report);
                    }
                }
            }
        }
        idx = next;
        let mut diameter = 0.0f64;
        for a in &probes {
            for b in &probes {
                diameter = diameter.max((a[o] - b[o]).norm());
            }
        }
        let w1 = field.omega(pts[idx], e).map_err(|e| path_error(e, "pole of ω on the path"))?;
        let deriv = (-segment.integrals[idx]).exp() * w0 / w1;
        let predicted = 2.0 * delta * deriv.norm();
        let distortion = diameter / predicted;
        report.max_distortion = report.max_distortion.max(distortion).max(1.0 / distortion);
        report.checkpoints.push(DomainCheckpoint { length: segment.lengths[idx], diameter, predicted, distortion });
    }
    report.passed = report.max_distortion <= distortion_bound;
    Ok(report)
}

/// A leaf path with a base point and section radius, on a textual form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusPath {
    pub name: String,
    pub form: String,
    pub base: [C64; 2],
    pub path: LeafPath,
    pub radius: f64,
}

impl CorpusPath {
    /// Holonomy between `ω`-parametrized fibre sections over the endpoints.
    pub fn holonomy(&self, ctl: &TransportControls) -> Result<HolonomyResult, HolonomyError> {
        let form = MeromorphicOneForm::parse(&self.form)
            .map_err(|e| HolonomyError::Section(format!("form: {e}")))?;
        let cf = CompiledForm::from_form(&form).map_err(|e| HolonomyError::Section(format!("form: {e}")))?;
        let end = transport(&cf, self.base, &self.path, ctl)?.end;
        let p = Parametrization::OmegaParametrized;
        let s0 = TransverseSection::fibre(self.path.coordinate, self.base, p, self.radius);
        let s1 = TransverseSection::fibre(self.path.coordinate, end, p, self.radius);
        holonomy_map(&cf, &s0, &s1, &self.path, &[], ctl)
    }
}

/// Twenty leaf paths over linear, Siegel, hyperbolic and nonlinear forms.
pub fn corpus_paths() -> Vec<CorpusPath> {
    let z = |re: f64, im: f64| c64(re, im);
    let o = z(0.0, 0.0);
    let mut out = Vec::new();
    let mut push = |name: &str, form: &str, base: [C64; 2], path: LeafPath, radius: f64| {
        out.push(CorpusPath { name: name.into(), form: form.into(), base, path, radius });
    };
    let lin = "3*x dy - y dx";
    push("linear_loop", lin, [z(1.0, 0.0), z(0.5, 0.0)], LeafPath::circle(Var::X, o, z(1.0, 0.0), 1.0), 0.1);
    push("linear_loop_cw", lin, [z(1.0, 0.0), z(0.5, 0.2)], LeafPath::circle(Var::X, o, z(1.0, 0.0), -1.0), 0.1);
    push("linear_double_loop", lin, [z(0.5, 0.5), z(0.3, 0.0)], LeafPath::circle(Var::X, o, z(0.5, 0.5), 2.0), 0.05);
    push("linear_half_turn", lin, [z(2.0, 0.0), z(1.0, -1.0)], LeafPath::circle(Var::X, o, z(2.0, 0.0), 0.5), 0.1);
    let hyp = "x dy - i*y dx";
    push("hyperbolic_loop", hyp, [z(1.0, 0.0), z(0.1, 0.0)], LeafPath::circle(Var::X, o, z(1.0, 0.0), 1.0), 0.01);
    push("hyperbolic_loop_cw", hyp, [z(1.0, 0.0), z(0.01, 0.0)], LeafPath::circle(Var::X, o, z(1.0, 0.0), -1.0), 0.001);
    let nl = "(1 + x*y) dy + (y^2 - x) dx";
    push("nonlinear_line", nl, [z(0.3, 0.1), z(0.2, -0.1)], LeafPath::line(Var::X, z(0.3, 0.1), z(0.8, 0.4)), 0.05);
    push(
        "nonlinear_polyline",
        nl,
        [z(0.0, 0.0), z(0.5, 0.0)],
        LeafPath::polyline(Var::X, &[z(0.0, 0.0), z(0.4, 0.2), z(0.1, 0.5), z(-0.3, 0.2)]),
        0.05,
    );
    push("nonlinear_y_line", nl, [z(0.6, 0.2), z(0.1, 0.1)], LeafPath::line(Var::Y, z(0.1, 0.1), z(0.4, -0.2)), 0.05);
    let sq = "x dy + y^2 dx";
    push("riccati_line", sq, [z(1.0, 0.0), z(0.5, 0.0)], LeafPath::line(Var::X, z(1.0, 0.0), z(2.0, 1.0)), 0.05);
    push("riccati_loop", sq, [z(1.0, 0.0), z(0.2, 0.1)], LeafPath::circle(Var::X, o, z(1.0, 0.0), 1.0), 0.02);
    push(
        "riccati_polyline",
        sq,
        [z(0.5, 0.5), z(-0.3, 0.2)],
        LeafPath::polyline(Var::X, &[z(0.5, 0.5), z(1.5, 0.5), z(1.5, -0.5)]),
        0.05,
    );
    let siegel = "2*x dy + y dx";
    push("siegel_arc", siegel, [z(0.5, 0.0), z(0.1, 0.0)], LeafPath::circle(Var::X, o, z(0.5, 0.0), 0.25), 0.02);
    push("siegel_line", siegel, [z(0.2, 0.0), z(0.3, 0.1)], LeafPath::line(Var::X, z(0.2, 0.0), z(1.0, 0.0)), 0.05);
    let quad = "(x^2 + 1) dy - y dx";
    push("quadratic_line", quad, [z(0.0, 0.0), z(1.0, 0.0)], LeafPath::line(Var::X, o, z(1.0, 0.5)), 0.1);
    push(
        "quadratic_loop",
        quad,
        [z(0.0, 0.5), z(0.5, 0.5)],
        LeafPath::circle(Var::X, z(0.0, 1.0), z(0.0, 0.5), 1.0),
        0.05,
    );
    let conic = "y dy + x dx";
    push("conic_line", conic, [z(0.0, 0.0), z(1.0, 0.0)], LeafPath::line(Var::X, o, z(0.5, 0.2)), 0.05);
    let mixed = "(1 + y) dy + x*y dx";
    push("mixed_line", mixed, [z(0.0, 0.0), z(0.5, 0.0)], LeafPath::line(Var::X, o, z(0.6, -0.3)), 0.05);
    push(
        "mixed_polyline",
        mixed,
        [z(0.2, 0.2), z(0.3, -0.2)],
        LeafPath::polyline(Var::X, &[z(0.2, 0.2), z(-0.2, 0.4), z(-0.4, 0.0)]),
        0.05,
    );
    let euler = "x^2 dy - (y + x) dx";
    push("euler_line", euler, [z(1.0, 0.0), z(0.3, 0.0)], LeafPath::line(Var::X, z(1.0, 0.0), z(2.0, 0.5)), 0.05);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leafflow::{trace_until, SiegelModel, TrajectoryControls};

    fn compiled(text: &str) -> CompiledForm {
        CompiledForm::from_form(&MeromorphicOneForm::parse(text).unwrap()).unwrap()
    }

    #[test]
    fn linear_loop_closed_form() {
        // λ₁ = 3, λ₂ = 1.
        let cf = compiled("3*x dy - y dx");
        let path = LeafPath::circle(Var::X, c64(0.0, 0.0), c64(1.0, 0.0), 1.0);
        let r = transport(&cf, [c64(1.0, 0.0), c64(0.2, 0.1)], &path, &TransportControls::default()).unwrap();
        let want = linear_loop_multiplier(c64(3.0, 0.0), c64(1.0, 0.0), 1.0) * c64(0.2, 0.1);
        assert!((r.end[1] - want).norm() < 1e-10);
        assert!((r.end[0] - c64(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn hyperbolic_loop_multiplier() {
        // λ₂/λ₁ = i: clockwise loop gives e^{2π}.
        let m = linear_loop_multiplier(c64(1.0, 0.0), c64(0.0, 1.0), -1.0);
        assert!((m - c64(TAU.exp(), 0.0)).norm() < 1e-9 * TAU.exp());
        let cf = compiled("x dy - i*y dx");
        let path = LeafPath::circle(Var::X, c64(0.0, 0.0), c64(1.0, 0.0), -1.0);
        let r = transport(&cf, [c64(1.0, 0.0), c64(1e-3, 0.0)], &path, &TransportControls::default()).unwrap();
        assert!((r.end[1] / c64(1e-3, 0.0) - m).norm() < 1e-8 * m.norm());
    }

    #[test]
    fn trivial_path_is_identity() {
        let cf = compiled("3*x dy - y dx");
        let path = LeafPath { coordinate: Var::X, start: c64(1.0, 0.0), pieces: vec![] };
        let p = [c64(1.0, 0.0), c64(0.3, 0.0)];
        let r = transport(&cf, p, &path, &TransportControls::default()).unwrap();
        assert_eq!(r.end, p);
        assert_eq!(r.length, 0.0);
    }

    #[test]
    fn plemma_on_loop_matches_multiplier() {
        let cf = compiled("3*x dy - y dx");
        let base = [c64(1.0, 0.0), c64(0.5, 0.0)];
        let s0 = TransverseSection::fibre(Var::X, base, Parametrization::OmegaParametrized, 0.1);
        let s1 = s0;
        let path = LeafPath::circle(Var::X, c64(0.0, 0.0), c64(1.0, 0.0), 1.0);
        let r = holonomy_map(&cf, &s0, &s1, &path, &[c64(0.01, 0.0)], &TransportControls::default()).unwrap();
        let want = linear_loop_multiplier(c64(3.0, 0.0), c64(1.0, 0.0), 1.0);
        assert!((r.plemma_derivative - want).norm() < 1e-8);
        assert!(r.relative_deviation < 1e-6, "{}", r.relative_deviation);
    }

    #[test]
    fn plemma_on_nonlinear_path() {
        let cf = compiled("(1 + x*y) dy + (y^2 - x) dx");
        let base = [c64(0.3, 0.1), c64(0.2, -0.1)];
        let path = LeafPath::line(Var::X, base[0], c64(0.8, 0.4));
        let t = transport(&cf, base, &path, &TransportControls::default()).unwrap();
        let s0 = TransverseSection::fibre(Var::X, base, Parametrization::OmegaParametrized, 0.05);
        let s1 = TransverseSection::fibre(Var::X, t.end, Parametrization::OmegaParametrized, 0.05);
        let r = holonomy_map(&cf, &s0, &s1, &path, &[], &TransportControls::default()).unwrap();
        assert!(r.relative_deviation < 1e-6, "{}", r.relative_deviation);
    }

    #[test]
    fn functoriality() {
        let cf = compiled("(1 + x*y) dy + (y^2 - x) dx");
        let ctl = TransportControls::default();
        let p0 = [c64(0.3, 0.1), c64(0.2, -0.1)];
        let c1 = LeafPath::line(Var::X, p0[0], c64(0.6, 0.0));
        let c2 = LeafPath::line(Var::X, c64(0.6, 0.0), c64(0.7, 0.3));
        let both = c1.then(&c2).unwrap();
        for dy in [c64(0.0, 0.0), c64(0.01, 0.02), c64(-0.02, 0.01)] {
            let p = [p0[0], p0[1] + dy];
            let direct = transport(&cf, p, &both, &ctl).unwrap().end;
            let mid = transport(&cf, p, &c1, &ctl).unwrap().end;
            let composed = transport(&cf, mid, &c2, &ctl).unwrap().end;
            assert!((direct[1] - composed[1]).norm() < 1e-8);
        }
    }

    #[test]
    fn homotopic_loops_agree() {
        let cf = compiled("3*x dy - y dx");
        let ctl = TransportControls::default();
        let p = [c64(1.0, 0.0), c64(0.4, 0.0)];
        let circle = LeafPath::circle(Var::X, c64(0.0, 0.0), c64(1.0, 0.0), 1.0);
        let square = LeafPath::polyline(
            Var::X,
            &[c64(1.0, 0.0), c64(1.0, 1.0), c64(-1.0, 1.0), c64(-1.0, -1.0), c64(1.0, -1.0), c64(1.0, 0.0)],
        );
        let a = transport(&cf, p, &circle, &ctl).unwrap().end[1];
        let b = transport(&cf, p, &square, &ctl).unwrap().end[1];
        assert!((a - b).norm() < 1e-8);
    }

    #[test]
    fn omega_section_round_trip() {
        let cf = compiled("(1 + x*y) dy + (y^2 - x) dx");
        let s = TransverseSection::fibre(Var::X, [c64(0.3, 0.1), c64(0.2, -0.1)], Parametrization::OmegaParametrized, 0.1);
        for c in [c64(0.05, 0.0), c64(-0.02, 0.03)] {
            let p = s.point(&cf, c).unwrap();
            assert!((s.coordinate(&cf, p).unwrap() - c).norm() < 1e-13);
        }
    }

    #[test]
    fn contraction_on_radial_model() {
        // x dy: Ω₁ = −dx/x; ℋ runs from x = 100 toward 0 along ℝ.
        let cf = compiled("x dy");
        let ctl = TrajectoryControls { length_budget: 10.0, step_max: 0.05, ..Default::default() };
        let tree = trace_until(&cf, [c64(100.0, 0.0), c64(0.0, 0.0)], &[], &ctl, &|_| false).unwrap();
        let fit = contraction_fit(tree.root(), Some((0.1, 10.0)), 60).unwrap();
        assert!(fit.slope < 0.0);
        assert!(fit.relative_residual < 0.05, "{}", fit.relative_residual);
        assert!(matches!(
            contraction_fit(&TrajectorySegment { length: 0.0, ..tree.root().clone() }, None, 60),
            Err(HolonomyError::InsufficientData { .. })
        ));
    }

    #[test]
    fn siegel_contraction_scales_with_cos_theta() {
        let m = SiegelModel::new(2.0, 1.0, 0, 0);
        let mut slopes = vec![];
        for theta in [-std::f64::consts::FRAC_PI_4, 0.0, std::f64::consts::FRAC_PI_4] {
            let ctl = TrajectoryControls { theta, length_budget: 0.1, step_max: 1e-3, ..Default::default() };
            let tree = trace_until(&m, [c64(1.0, 0.0), c64(0.01, 0.0)], &[], &ctl, &|_| false).unwrap();
            let fit = contraction_fit(tree.root(), None, 40).unwrap();
            assert!(fit.slope < 0.0 && fit.relative_residual < 0.05);
            slopes.push(fit.slope);
        }
        let c = std::f64::consts::FRAC_PI_4.cos();
        assert!((slopes[0] / slopes[1] - c).abs() < 0.02);
        assert!((slopes[2] / slopes[1] - c).abs() < 0.02);
    }

    #[test]
    fn domain_check_on_radial_model() {
        let cf = compiled("x dy + y^2 dx");
        let ctl = TrajectoryControls { length_budget: 2.0, ..Default::default() };
        let tree = trace_until(&cf, [c64(2.0, 0.0), c64(0.1, 0.0)], &[], &ctl, &|_| false).unwrap();
        let r = uniform_domain_check(&cf, tree.root(), 1e-3, 8, 1.5, &TransportControls::default()).unwrap();
        assert!(r.passed && r.escape.is_none(), "{r:?}");
        assert!(!r.checkpoints.is_empty());
        let z = uniform_domain_check(&cf, tree.root(), 0.0, 8, 1.5, &TransportControls::default()).unwrap();
        assert!(z.passed && z.checkpoints.is_empty());
    }

    #[test]
    fn corpus_paths_satisfy_plemma() {
        let paths = corpus_paths();
        assert_eq!(paths.len(), 20);
        for cp in &paths {
            let r = cp.holonomy(&TransportControls::default()).unwrap();
            assert!(r.relative_deviation < 1e-6, "{}: {}", cp.name, r.relative_deviation);
        }
    }
}
