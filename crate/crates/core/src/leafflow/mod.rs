//! Real trajectories of the leafwise flows `ℋ^θ`.
//!
//! On a leaf the field `ℋ^θ` is the unit vector `V` tangent to the foliation
//! with `Ω₁(V) ∈ e^{iθ}ℝ₊`. The tracer integrates `V` together with `∫Ω₁`,
//! stops on declared features, and branches at saddles, holomorphic corners,
//! and invariant critical components.

mod field;
mod saddle;

pub use field::*;
pub use saddle::*;

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{BivariatePolynomial, CompiledPoly, Var};
use crate::blowup::{irrational_focus_type, FocusType};
use crate::numeric::{c64, C64};
use crate::ode::{dp_step, integrate, next_step, StepControl};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("invalid trajectory controls: {0}")]
    InvalidControls(String),
    #[error("start point is not usable: {0}")]
    Start(LeafError),
    #[error("leaf transport failed: {0}")]
    Transport(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryControls {
    /// Direction of `Ω₁(V)`; must lie in `(−π/2, π/2)`.
    pub theta: f64,
    pub direction: Direction,
    pub step_init: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Event radius around declared points.
    pub singular_radius: f64,
    /// Event radius around declared curves, measured as `|f|/|∇f|`.
    pub divisor_radius: f64,
    /// `|Ω₁(Y)| / |Y|` below this counts as a saddle of the leafwise flow.
    pub saddle_tol: f64,
    /// Arc-length budget per branch.
    pub length_budget: f64,
    /// Maximum number of segments in the branch tree.
    pub branch_limit: usize,
    /// Length of the `ℋ^⊥` arcs used to go around holomorphic corners.
    pub joint_length: f64,
    /// Trajectories with `max(|x|, |y|)` above this leave the chart.
    pub region_bound: f64,
    pub max_steps: usize,
}

impl Default for TrajectoryControls {
    fn default() -> Self {
        Self {
            theta: 0.0,
            direction: Direction::Forward,
            step_init: 1e-3,
            step_min: 1e-13,
            step_max: 0.05,
            rtol: 1e-10,
            atol: 1e-13,
            singular_radius: 1e-2,
            divisor_radius: 1e-2,
            saddle_tol: 1e-10,
            length_budget: 50.0,
            branch_limit: 64,
            joint_length: 0.05,
            region_bound: 1e3,
            max_steps: 500_000,
        }
    }
}

impl TrajectoryControls {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::InvalidControls(m.to_string()));
        if !(self.theta.abs() < FRAC_PI_2) {
            return bad("theta must lie in the open interval (-pi/2, pi/2)");
        }
        for (name, v) in [
            ("step_init", self.step_init),
            ("step_min", self.step_min),
            ("step_max", self.step_max),
            ("rtol", self.rtol),
            ("singular_radius", self.singular_radius),
            ("divisor_radius", self.divisor_radius),
            ("length_budget", self.length_budget),
            ("joint_length", self.joint_length),
            ("region_bound", self.region_bound),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive and finite"));
            }
        }
        if !(self.step_min <= self.step_init && self.step_init <= self.step_max) {
            return bad("need step_min <= step_init <= step_max");
        }
        if self.branch_limit == 0 || self.max_steps == 0 {
            return bad("branch_limit and max_steps must be positive");
        }
        Ok(())
    }
}

fn norm2(v: [C64; 2]) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

/// The unit field `ℋ^θ` at `p` and the value `Ω₁(ℋ^θ) = e^{iθ}|Ω₁(Y)|/|Y|`.
pub fn h_velocity<F: LeafField + ?Sized>(
    field: &F,
    p: [C64; 2],
    theta: f64,
    saddle_tol: f64,
) -> Result<([C64; 2], C64), LeafError> {
    let y = field.tangent(p);
    let ny = norm2(y);
    if !(ny > 1e-300) {
        return Err(LeafError::Singular { x: p[0], y: p[1] });
    }
    let o = field.omega1_y(p)?;
    if o.norm() <= saddle_tol * ny {
        return Err(LeafError::SaddleProximity { x: p[0], y: p[1], value: o });
    }
    let rot = C64::from_polar(1.0 / ny, theta - o.arg());
    Ok(([y[0] * rot, y[1] * rot], o * rot))
}

/// Follows the holomorphic flow of `Y` for complex time `tau`.
pub fn flow_complex_time<F: LeafField + ?Sized>(field: &F, p: [C64; 2], tau: C64) -> Result<[C64; 2], TraceError> {
    let dir = C64::from_polar(1.0, tau.arg());
    let ctl = StepControl {
        rtol: 1e-12,
        atol: 1e-15,
        h_max: tau.norm() / 8.0 + 1e-12,
        ..StepControl::default()
    };
    let out = integrate(
        |_, st: &[C64]| {
            let t = field.tangent([st[0], st[1]]);
            Ok::<_, LeafError>(vec![t[0] * dir, t[1] * dir])
        },
        0.0,
        tau.norm(),
        &p,
        &ctl,
    )
    .map_err(|e| TraceError::Transport(format!("{e:?}")))?;
    Ok([out[0], out[1]])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveRole {
    /// Component of `(ω)₀^⊥`: trajectories end there as sinks.
    ZeroPerp,
    /// Component of `(ω)_∞^⊥`: sources.
    PolePerp,
    /// Invariant component carrying critical behaviour; trajectories hop to
    /// the listed points.
    InvariantCritical { hops: Vec<[C64; 2]> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum PointRole {
    Sink,
    Source,
    /// Irrational focus with local model `x^a y^b (λ₁ x dy + λ₂ y dx)`.
    Focus { lambda1: f64, lambda2: f64, a: i64, b: i64 },
    /// Zero of `Ω₁|_leaf` of order `m − 1`.
    Saddle { m: u32 },
    /// Siegel corner whose separatrices are parallel to the axes.
    HolomorphicCorner { lambda1: f64, lambda2: f64 },
    Singular,
}

#[derive(Clone, Debug)]
pub enum Feature {
    Curve { poly: BivariatePolynomial, role: CurveRole },
    Point { at: [C64; 2], role: PointRole },
}

enum Probe {
    Curve { f: CompiledPoly, fx: CompiledPoly, fy: CompiledPoly },
    Point([C64; 2]),
}

impl Probe {
    fn new(f: &Feature) -> Self {
        match f {
            Feature::Curve { poly, .. } => Probe::Curve {
                f: CompiledPoly::new(poly),
                fx: CompiledPoly::new(&poly.partial(Var::X)),
                fy: CompiledPoly::new(&poly.partial(Var::Y)),
            },
            Feature::Point { at, .. } => Probe::Point(*at),
        }
    }

    fn distance(&self, p: [C64; 2]) -> f64 {
        match self {
            Probe::Curve { f, fx, fy } => {
                let v = f.eval(p[0], p[1]).norm();
                let g = norm2([fx.eval(p[0], p[1]), fy.eval(p[0], p[1])]);
                if g > 0.0 {
                    v / g
                } else if v == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Probe::Point(q) => norm2([p[0] - q[0], p[1] - q[1]]),
        }
    }
}

fn radius_of(f: &Feature, ctl: &TrajectoryControls) -> f64 {
    match f {
        Feature::Curve { .. } => ctl.divisor_radius,
        Feature::Point { .. } => ctl.singular_radius,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Saddle,
    HolomorphicCorner,
    InvariantComponent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TerminalEvent {
    SinkEndpoint { features: Vec<usize> },
    SourceEndpoint { features: Vec<usize> },
    IrrationalFocusEndpoint { features: Vec<usize> },
    /// Features of mixed endpoint type were hit at once.
    MixedEndpoint { features: Vec<usize> },
    EnteredCriticalRegion { kind: CriticalKind, feature: usize },
    BudgetExhausted,
    LeftRegion,
    ReachedSection,
    NearSingularity,
    SaddleProximity,
    Stalled,
    Loop { period_length: f64 },
}

impl TerminalEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TerminalEvent::SinkEndpoint { .. } => "sink_endpoint",
            TerminalEvent::SourceEndpoint { .. } => "source_endpoint",
            TerminalEvent::IrrationalFocusEndpoint { .. } => "irrational_focus_endpoint",
            TerminalEvent::MixedEndpoint { .. } => "mixed_endpoint",
            TerminalEvent::EnteredCriticalRegion { .. } => "entered_critical_region",
            TerminalEvent::BudgetExhausted => "budget_exhausted",
            TerminalEvent::LeftRegion => "left_region",
            TerminalEvent::ReachedSection => "reached_section",
            TerminalEvent::NearSingularity => "near_singularity",
            TerminalEvent::SaddleProximity => "saddle_proximity",
            TerminalEvent::Stalled => "stalled",
            TerminalEvent::Loop { .. } => "loop",
        }
    }

    fn endpoint_features(&self) -> Option<&[usize]> {
        match self {
            TerminalEvent::SinkEndpoint { features }
            | TerminalEvent::SourceEndpoint { features }
            | TerminalEvent::IrrationalFocusEndpoint { features }
            | TerminalEvent::MixedEndpoint { features } => Some(features),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Sink,
    Source,
    IrrationalFocusSink,
    IrrationalFocusSource,
    IrrationalFocusNeutral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub kinds: Vec<EndpointKind>,
    /// Set when the hit features disagree.
    pub ambiguous: bool,
}

fn endpoint_kind(f: &Feature) -> Option<EndpointKind> {
    match f {
        Feature::Curve { role: CurveRole::ZeroPerp, .. } => Some(EndpointKind::Sink),
        Feature::Curve { role: CurveRole::PolePerp, .. } => Some(EndpointKind::Source),
        Feature::Point { role: PointRole::Sink, .. } => Some(EndpointKind::Sink),
        Feature::Point { role: PointRole::Source, .. } => Some(EndpointKind::Source),
        Feature::Point { role: PointRole::Focus { lambda1, lambda2, a, b }, .. } => {
            Some(match irrational_focus_type(*lambda1, *lambda2, *a, *b) {
                FocusType::Sink => EndpointKind::IrrationalFocusSink,
                FocusType::Source => EndpointKind::IrrationalFocusSource,
                FocusType::Neutral => EndpointKind::IrrationalFocusNeutral,
            })
        }
        _ => None,
    }
}

/// Endpoint classification of a terminal event against the declared features.
pub fn classify_endpoint(event: &TerminalEvent, features: &[Feature]) -> Option<EndpointReport> {
    let idx = event.endpoint_features()?;
    let mut kinds: Vec<EndpointKind> = idx.iter().filter_map(|&i| features.get(i).and_then(endpoint_kind)).collect();
    kinds.sort_by_key(|k| *k as u8);
    kinds.dedup();
    let ambiguous = kinds.len() > 1;
    Some(EndpointReport { kinds, ambiguous })
}

fn event_for_hits(hits: &[usize], features: &[Feature]) -> TerminalEvent {
    for &i in hits {
        let kind = match &features[i] {
            Feature::Point { role: PointRole::Saddle { .. }, .. } => Some(CriticalKind::Saddle),
            Feature::Point { role: PointRole::HolomorphicCorner { .. }, .. } => Some(CriticalKind::HolomorphicCorner),
            Feature::Curve { role: CurveRole::InvariantCritical { .. }, .. } => Some(CriticalKind::InvariantComponent),
            _ => None,
        };
        if let Some(kind) = kind {
            return TerminalEvent::EnteredCriticalRegion { kind, feature: i };
        }
    }
    if hits.iter().any(|&i| matches!(features[i], Feature::Point { role: PointRole::Singular, .. })) {
        return TerminalEvent::NearSingularity;
    }
    let kinds: Vec<EndpointKind> = hits.iter().filter_map(|&i| endpoint_kind(&features[i])).collect();
    let features = hits.to_vec();
    let all = |pred: fn(&EndpointKind) -> bool| kinds.iter().all(pred);
    if all(|k| *k == EndpointKind::Sink) {
        TerminalEvent::SinkEndpoint { features }
    } else if all(|k| *k == EndpointKind::Source) {
        TerminalEvent::SourceEndpoint { features }
    } else if all(|k| {
        matches!(
            k,
            EndpointKind::IrrationalFocusSink | EndpointKind::IrrationalFocusSource | EndpointKind::IrrationalFocusNeutral
        )
    }) {
        TerminalEvent::IrrationalFocusEndpoint { features }
    } else {
        TerminalEvent::MixedEndpoint { features }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Integral curve of `ℋ^θ`.
    Trajectory,
    /// Short `ℋ^⊥` arc around a holomorphic corner.
    Joint,
    /// Jump across a holomorphic corner along the local first integral.
    Passage,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub id: usize,
    pub parent: Option<usize>,
    pub branch_id: String,
    pub kind: SegmentKind,
    pub theta: f64,
    pub points: Vec<[C64; 2]>,
    /// Arc length at each point, from the segment start.
    pub lengths: Vec<f64>,
    /// `∫Ω₁` at each point, from the segment start.
    pub integrals: Vec<C64>,
    pub length: f64,
    pub omega1_integral: C64,
    /// Length from the root of the tree to the end of this segment.
    pub branch_length: f64,
    pub terminal_event: TerminalEvent,
    pub endpoint: Option<EndpointReport>,
    /// More rejected than accepted steps.
    pub stiff: bool,
    /// `Re ∫Ω₁` moved strictly in the flow direction on every step.
    pub monotone: bool,
    /// Largest deviation of `arg ΔΩ₁` from the prescribed direction.
    pub max_angle_error: f64,
    /// Largest first-integral drift corrected on a step.
    pub leaf_drift: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchTree {
    pub start: [C64; 2],
    pub theta: f64,
    pub direction: Direction,
    pub segments: Vec<TrajectorySegment>,
    /// Branching stopped at `branch_limit`.
    pub truncated: bool,
    pub max_branch_length: f64,
    /// Some branch is periodic or ran out of length budget.
    pub infinite_length: bool,
    /// Every branch ended at a sink, source, or focus.
    pub all_branches_end: bool,
}

impl BranchTree {
    pub fn leaves(&self) -> impl Iterator<Item = &TrajectorySegment> {
        self.segments
            .iter()
            .filter(move |s| !self.segments.iter().any(|c| c.parent == Some(s.id)))
    }

    pub fn root(&self) -> &TrajectorySegment {
        &self.segments[0]
    }
}

struct Pending {
    start: [C64; 2],
    parent: Option<usize>,
    branch_id: String,
    kind: SegmentKind,
    theta: f64,
    budget: f64,
    ignore: Option<usize>,
    offset: f64,
}

struct RunConfig<'a> {
    theta: f64,
    sign: f64,
    budget: f64,
    ignore: Option<usize>,
    check_monotone: bool,
    stop: &'a (dyn Fn([C64; 2]) -> bool + Sync),
}

struct Run {
    points: Vec<[C64; 2]>,
    lengths: Vec<f64>,
    integrals: Vec<C64>,
    event: TerminalEvent,
    stiff: bool,
    monotone: bool,
    max_angle_error: f64,
    leaf_drift: f64,
}

fn leaf_event(e: &LeafError) -> TerminalEvent {
    match e {
        LeafError::SaddleProximity { .. } => TerminalEvent::SaddleProximity,
        _ => TerminalEvent::NearSingularity,
    }
}

fn wrap_angle(a: f64) -> f64 {
    let t = a.rem_euclid(std::f64::consts::TAU);
    if t > std::f64::consts::PI {
        t - std::f64::consts::TAU
    } else {
        t
    }
}

fn run_segment<F: LeafField + ?Sized>(
    field: &F,
    features: &[Feature],
    probes: &[Probe],
    start: [C64; 2],
    cfg: &RunConfig,
    ctl: &TrajectoryControls,
) -> Run {
    let mut run = Run {
        points: vec![start],
        lengths: vec![0.0],
        integrals: vec![c64(0.0, 0.0)],
        event: TerminalEvent::Stalled,
        stiff: false,
        monotone: true,
        max_angle_error: 0.0,
        leaf_drift: 0.0,
    };
    let mut ignore = cfg.ignore;
    let hits_at = |p: [C64; 2], ignore: &mut Option<usize>| -> Vec<usize> {
        if let Some(i) = *ignore {
            if probes[i].distance(p) > 1.5 * radius_of(&features[i], ctl) {
                *ignore = None;
            }
        }
        (0..probes.len())
            .filter(|&i| Some(i) != *ignore && probes[i].distance(p) < radius_of(&features[i], ctl))
            .collect()
    };
    let hits = hits_at(start, &mut ignore);
    if !hits.is_empty() {
        run.event = event_for_hits(&hits, features);
        return run;
    }
    let (theta, sign) = (cfg.theta, cfg.sign);
    let mut rhs = |_: f64, st: &[C64]| -> Result<Vec<C64>, LeafError> {
        let (v, o) = h_velocity(field, [st[0], st[1]], theta, ctl.saddle_tol)?;
        Ok(vec![v[0] * sign, v[1] * sign, o * sign])
    };
    let step_ctl = StepControl {
        rtol: ctl.rtol,
        atol: ctl.atol,
        h_init: ctl.step_init,
        h_min: ctl.step_min,
        h_max: ctl.step_max,
        max_steps: ctl.max_steps,
    };
    let mut y = vec![start[0], start[1], c64(0.0, 0.0)];
    let mut k1 = match rhs(0.0, &y) {
        Ok(k) => k,
        Err(e) => {
            run.event = leaf_event(&e);
            return run;
        }
    };
    let v0 = [k1[0], k1[1]];
    let loop_probe = |p: [C64; 2]| ((p[0] - start[0]) * v0[0].conj() + (p[1] - start[1]) * v0[1].conj()).re;
    let loop_tol = 1e-6 * (1.0 + norm2(start));
    let mut went_behind = false;
    let expected = theta + if sign < 0.0 { std::f64::consts::PI } else { 0.0 };
    let mut s = 0.0;
    let mut h = ctl.step_init;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    for _ in 0..ctl.max_steps {
        if s >= cfg.budget {
            run.event = TerminalEvent::BudgetExhausted;
            return run;
        }
        let h_try = h.min(cfg.budget - s).max(ctl.step_min);
        let (y5, k7, err) = match dp_step(&mut rhs, s, &y, &k1, h_try, &step_ctl) {
            Ok(r) => r,
            Err(e) => {
                h = h_try * 0.25;
                if h < ctl.step_min {
                    run.event = leaf_event(&e);
                    return run;
                }
                continue;
            }
        };
        if !(err <= 1.0) {
            rejected += 1;
            run.stiff = rejected > accepted.max(16);
            h = next_step(h_try, if err.is_finite() { err } else { 1e10 }).min(ctl.step_max);
            if h < ctl.step_min {
                run.event = TerminalEvent::Stalled;
                return run;
            }
            continue;
        }
        accepted += 1;
        let prev = [y[0], y[1]];
        let prev_int = y[2];
        let mut next = [y5[0], y5[1]];
        let mut k_next = k7;
        if let Some(drift) = field.integral_increment(prev, next) {
            run.leaf_drift = run.leaf_drift.max(drift.norm());
            if drift.norm() > 0.0 {
                next = field.correct(next, drift);
                match rhs(s + h_try, &[next[0], next[1], y5[2]]) {
                    Ok(k) => k_next = k,
                    Err(e) => {
                        run.event = leaf_event(&e);
                        return run;
                    }
                }
            }
        }
        let d_int = y5[2] - prev_int;
        if d_int.norm() > 0.0 {
            run.max_angle_error = run.max_angle_error.max(wrap_angle(d_int.arg() - expected).abs());
        }
        if cfg.check_monotone && !(d_int.re * sign > 0.0) {
            run.monotone = false;
        }
        s += h_try;
        y = vec![next[0], next[1], y5[2]];
        k1 = k_next;
        run.points.push(next);
        run.lengths.push(s);
        run.integrals.push(y5[2]);
        h = next_step(h_try, err).min(ctl.step_max);

        let hits = hits_at(next, &mut ignore);
        if !hits.is_empty() {
            run.event = event_for_hits(&hits, features);
            return run;
        }
        if (cfg.stop)(next) {
            run.event = TerminalEvent::ReachedSection;
            return run;
        }
        if next[0].norm().max(next[1].norm()) > ctl.region_bound {
            run.event = TerminalEvent::LeftRegion;
            return run;
        }
        let (g0, g1) = (loop_probe(prev), loop_probe(next));
        if g1 < 0.0 {
            went_behind = true;
        }
        if went_behind && g0 < 0.0 && g1 >= 0.0 {
            let w = -g0 / (g1 - g0);
            let pc = [prev[0] + (next[0] - prev[0]) * w, prev[1] + (next[1] - prev[1]) * w];
            if norm2([pc[0] - start[0], pc[1] - start[1]]) < loop_tol + h_try * h_try {
                run.event = TerminalEvent::Loop { period_length: s - h_try * (1.0 - w) };
                return run;
            }
        }
    }
    run.event = TerminalEvent::Stalled;
    run
}

/// Traces the `ℋ^θ` trajectory through `start` with branching.
pub fn trace<F: LeafField + ?Sized>(
    field: &F,
    start: [C64; 2],
    features: &[Feature],
    ctl: &TrajectoryControls,
) -> Result<BranchTree, TraceError> {
    trace_until(field, start, features, ctl, &|_| false)
}

/// As [`trace`], additionally stopping with `ReachedSection` when `stop` holds.
pub fn trace_until<F: LeafField + ?Sized>(
    field: &F,
    start: [C64; 2],
    features: &[Feature],
    ctl: &TrajectoryControls,
    stop: &(dyn Fn([C64; 2]) -> bool + Sync),
) -> Result<BranchTree, TraceError> {
    ctl.validate()?;
    h_velocity(field, start, ctl.theta, ctl.saddle_tol).map_err(TraceError::Start)?;
    let probes: Vec<Probe> = features.iter().map(Probe::new).collect();
    let sign = ctl.direction.sign();
    let mut segments: Vec<TrajectorySegment> = Vec::new();
    let mut truncated = false;
    let mut queue = VecDeque::from([Pending {
        start,
        parent: None,
        branch_id: "0".into(),
        kind: SegmentKind::Trajectory,
        theta: ctl.theta,
        budget: ctl.length_budget,
        ignore: None,
        offset: 0.0,
    }]);
    while let Some(job) = queue.pop_front() {
        if segments.len() >= ctl.branch_limit {
            truncated = true;
            break;
        }
        let id = segments.len();
        let run = if job.kind == SegmentKind::Passage {
            Run {
                points: vec![job.start],
                lengths: vec![0.0],
                integrals: vec![c64(0.0, 0.0)],
                event: TerminalEvent::BudgetExhausted,
                stiff: false,
                monotone: true,
                max_angle_error: 0.0,
                leaf_drift: 0.0,
            }
        } else {
            let cfg = RunConfig {
                theta: job.theta,
                sign,
                budget: job.budget,
                ignore: job.ignore,
                check_monotone: job.kind == SegmentKind::Trajectory,
                stop,
            };
            run_segment(field, features, &probes, job.start, &cfg, ctl)
        };
        let length = *run.lengths.last().unwrap();
        let end = *run.points.last().unwrap();
        let seg = TrajectorySegment {
            id,
            parent: job.parent,
            branch_id: job.branch_id.clone(),
            kind: job.kind,
            theta: job.theta,
            omega1_integral: *run.integrals.last().unwrap(),
            endpoint: classify_endpoint(&run.event, features),
            terminal_event: run.event.clone(),
            lengths: run.lengths,
            integrals: run.integrals,
            points: run.points,
            length,
            branch_length: job.offset + length,
            stiff: run.stiff,
            monotone: run.monotone,
            max_angle_error: run.max_angle_error,
            leaf_drift: run.leaf_drift,
        };
        let remaining = ctl.length_budget - seg.branch_length;
        let mut child_no = 0usize;
        let mut push = |queue: &mut VecDeque<Pending>, start, kind, theta, ignore| {
            child_no += 1;
            queue.push_back(Pending {
                start,
                parent: Some(id),
                branch_id: format!("{}.{}", job.branch_id, child_no),
                kind,
                theta,
                budget: if kind == SegmentKind::Joint { ctl.joint_length.min(remaining) } else { remaining },
                ignore,
                offset: seg.branch_length,
            });
        };
        match (&seg.kind, &seg.terminal_event) {
            (SegmentKind::Joint, TerminalEvent::BudgetExhausted) | (SegmentKind::Passage, _) if remaining > 0.0 => {
                push(&mut queue, end, SegmentKind::Trajectory, ctl.theta, job.ignore);
            }
            (_, TerminalEvent::EnteredCriticalRegion { feature, .. }) if remaining > 0.0 => {
                let fi = *feature;
                match &features[fi] {
                    Feature::Point { at, role: PointRole::Saddle { m } } => {
                        for child in saddle_children(field, *at, *m, ctl, sign)? {
                            push(&mut queue, child, SegmentKind::Trajectory, ctl.theta, Some(fi));
                        }
                    }
                    Feature::Point { at, role: PointRole::HolomorphicCorner { lambda1, lambda2 } } => {
                        push(&mut queue, end, SegmentKind::Joint, ctl.theta + FRAC_PI_2, Some(fi));
                        if let Some(exit) = corner_passage(*at, end, *lambda1, *lambda2, 2.0 * ctl.singular_radius) {
                            child_no += 1;
                            queue.push_back(Pending {
                                start: exit,
                                parent: Some(id),
                                branch_id: format!("{}.{}", job.branch_id, child_no),
                                kind: SegmentKind::Passage,
                                theta: ctl.theta,
                                budget: remaining,
                                ignore: Some(fi),
                                offset: seg.branch_length,
                            });
                        }
                    }
                    Feature::Curve { poly, role: CurveRole::InvariantCritical { hops } } => {
                        let fx = CompiledPoly::new(&poly.partial(Var::X));
                        let fy = CompiledPoly::new(&poly.partial(Var::Y));
                        for h in hops {
                            let g = [fx.eval(h[0], h[1]).conj(), fy.eval(h[0], h[1]).conj()];
                            let ng = norm2(g);
                            let off = if ng > 0.0 { 2.0 * ctl.divisor_radius / ng } else { 0.0 };
                            let start = [h[0] + g[0] * off, h[1] + g[1] * off];
                            push(&mut queue, start, SegmentKind::Trajectory, ctl.theta, Some(fi));
                        }
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        segments.push(seg);
    }
    // Passage segments record the jump from the entry point.
    for i in 0..segments.len() {
        if segments[i].kind == SegmentKind::Passage {
            if let Some(p) = segments[i].parent {
                let entry = *segments[p].points.last().unwrap();
                segments[i].points.insert(0, entry);
                segments[i].lengths.insert(0, 0.0);
                segments[i].integrals.insert(0, c64(0.0, 0.0));
            }
        }
    }
    let ids_with_children: Vec<bool> = (0..segments.len())
        .map(|i| segments.iter().any(|c| c.parent == Some(i)))
        .collect();
    let leaves: Vec<&TrajectorySegment> = segments.iter().filter(|s| !ids_with_children[s.id]).collect();
    let max_branch_length = leaves.iter().map(|s| s.branch_length).fold(0.0, f64::max);
    let infinite_length = leaves.iter().any(|s| {
        matches!(s.terminal_event, TerminalEvent::Loop { .. })
            || (s.kind == SegmentKind::Trajectory && s.terminal_event == TerminalEvent::BudgetExhausted)
    });
    let all_branches_end = !truncated && leaves.iter().all(|s| s.endpoint.is_some());
    Ok(BranchTree {
        start,
        theta: ctl.theta,
        direction: ctl.direction,
        segments,
        truncated,
        max_branch_length,
        infinite_length,
        all_branches_end,
    })
}

/// Start points of the separatrices leaving a saddle at `q` (approaching ones
/// when tracing backward), placed at distance about `2·singular_radius`.
fn saddle_children<F: LeafField + ?Sized>(
    field: &F,
    q: [C64; 2],
    m: u32,
    ctl: &TrajectoryControls,
    sign: f64,
) -> Result<Vec<[C64; 2]>, TraceError> {
    let ny = norm2(field.tangent(q));
    if !(ny > 0.0) || m < 2 {
        return Ok(Vec::new());
    }
    // Leaf coordinate: complex time of Y from q, with Ω₁(Y) ≈ c·m·T^{m−1}.
    let rho = 0.1 * ctl.singular_radius / ny;
    let probe = flow_complex_time(field, q, c64(rho, 0.0))?;
    let o = field.omega1_y(probe).map_err(|e| TraceError::Transport(e.to_string()))?;
    let c = o / (m as f64 * rho.powi(m as i32 - 1));
    let dirs = saddle_separatrices(c, m, ctl.theta).map_err(|e| TraceError::Transport(e.to_string()))?;
    let r = 2.0 * ctl.singular_radius / ny;
    dirs.iter()
        .filter(|d| d.leaving == (sign > 0.0))
        .map(|d| flow_complex_time(field, q, C64::from_polar(r, d.angle)))
        .collect()
}

/// Exit point of the passage through a Siegel corner at `q` along the first
/// integral `u^{λ₂} v^{λ₁}`, with `(u, v)` the offsets from `q`.
pub fn corner_passage(q: [C64; 2], entry: [C64; 2], lambda1: f64, lambda2: f64, exit_radius: f64) -> Option<[C64; 2]> {
    let (u, v) = (entry[0] - q[0], entry[1] - q[1]);
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return None;
    }
    let (u2, v2) = if u.norm() >= v.norm() {
        let v2 = v * (exit_radius / v.norm());
        (u * (v.norm() / exit_radius).powf(lambda1 / lambda2), v2)
    } else {
        let u2 = u * (exit_radius / u.norm());
        (u2, v * (u.norm() / exit_radius).powf(lambda2 / lambda1))
    };
    Some([q[0] + u2, q[1] + v2])
}

/// A leaf field with a constant tangent `(1, 0)` and `Ω₁(Y) = w(x)`.
pub struct HorizontalLeaves<W: Fn(C64) -> C64 + Sync> {
    pub omega1: W,
}

impl<W: Fn(C64) -> C64 + Sync> LeafField for HorizontalLeaves<W> {
    fn tangent(&self, _p: [C64; 2]) -> [C64; 2] {
        [c64(1.0, 0.0), c64(0.0, 0.0)]
    }

    fn omega1_y(&self, p: [C64; 2]) -> Result<C64, LeafError> {
        let v = (self.omega1)(p[0]);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LeafError::NearPole { x: p[0], y: p[1] })
        }
    }

    fn omega(&self, _p: [C64; 2], v: [C64; 2]) -> Result<C64, LeafError> {
        Ok(v[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{CompiledForm, MeromorphicOneForm};

    fn compiled(text: &str) -> CompiledForm {
        CompiledForm::from_form(&MeromorphicOneForm::parse(text).unwrap()).unwrap()
    }

    #[test]
    fn rejects_bad_theta() {
        let cf = compiled("dy");
        let ctl = TrajectoryControls { theta: FRAC_PI_2, ..Default::default() };
        assert!(matches!(trace(&cf, [c64(1.0, 0.0); 2], &[], &ctl), Err(TraceError::InvalidControls(_))));
    }

    #[test]
    fn velocity_has_prescribed_direction() {
        let cf = compiled("2*x dy + y dx");
        let p = [c64(0.4, 0.2), c64(-0.3, 0.5)];
        for theta in [-1.0, 0.0, 0.7] {
            let (v, o) = h_velocity(&cf, p, theta, 1e-12).unwrap();
            assert!((norm2(v) - 1.0).abs() < 1e-12);
            assert!((o.arg() - theta).abs() < 1e-12);
            assert!(cf.omega(p[0], p[1], v).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn siegel_trajectory_is_monotone_and_stays_on_leaf() {
        let m = SiegelModel::new(2.0, 1.0, 0, 0);
        let start = [c64(1.0, 0.0), c64(0.01, 0.0)];
        let ctl = TrajectoryControls { length_budget: 5.0, ..Default::default() };
        let tree = trace_until(&m, start, &[], &ctl, &|p| p[1].norm() >= 1.0).unwrap();
        let seg = tree.root();
        assert_eq!(seg.terminal_event, TerminalEvent::ReachedSection);
        assert!(seg.monotone);
        let end = *seg.points.last().unwrap();
        let fi = |p: [C64; 2]| p[0] * p[1] * p[1];
        assert!((fi(end) - fi(start)).norm() < 1e-9);
        // ∫Ω₁ = −K·∫dt along Y, real and increasing.
        assert!(seg.omega1_integral.re > 0.0 && seg.omega1_integral.im.abs() < 1e-9);
    }

    #[test]
    fn zero_perp_curve_is_a_sink() {
        // x dy: Ω₁ = −dx/x, so ℋ⁰ runs radially into x = 0.
        let cf = compiled("x dy");
        let features = vec![Feature::Curve { poly: BivariatePolynomial::x(), role: CurveRole::ZeroPerp }];
        let tree = trace(&cf, [c64(1.0, 0.5), c64(0.0, 0.0)], &features, &TrajectoryControls::default()).unwrap();
        assert_eq!(tree.segments.len(), 1);
        assert_eq!(tree.root().terminal_event, TerminalEvent::SinkEndpoint { features: vec![0] });
        let want = 1.25f64.sqrt() - 0.01;
        assert!(tree.root().length >= want - 1e-9 && tree.root().length < want + 0.05);
        assert!(tree.all_branches_end && !tree.infinite_length);
    }

    #[test]
    fn loop_detected_on_circular_flow() {
        let f = HorizontalLeaves { omega1: |x: C64| c64(0.0, -1.0) / x };
        let ctl = TrajectoryControls { length_budget: 20.0, ..Default::default() };
        let tree = trace(&f, [c64(1.0, 0.0), c64(0.0, 0.0)], &[], &ctl).unwrap();
        match tree.root().terminal_event {
            TerminalEvent::Loop { period_length } => {
                assert!((period_length - std::f64::consts::TAU).abs() < 1e-4)
            }
            ref e => panic!("{e:?}"),
        }
        assert!(tree.infinite_length);
    }

    #[test]
    fn saddle_branches_into_leaving_separatrices() {
        // Ω₁(Y) = 2x on horizontal leaves: saddle of multiplicity 2 at x = 0.
        let f = HorizontalLeaves { omega1: |x: C64| x * 2.0 };
        let features = vec![Feature::Point { at: [c64(0.0, 0.0); 2], role: PointRole::Saddle { m: 2 } }];
        let ctl = TrajectoryControls { length_budget: 3.0, ..Default::default() };
        // Start on the incoming separatrix arg x = π/2.
        let tree = trace(&f, [c64(0.0, 1.0), c64(0.0, 0.0)], &features, &ctl).unwrap();
        assert!(matches!(
            tree.root().terminal_event,
            TerminalEvent::EnteredCriticalRegion { kind: CriticalKind::Saddle, .. }
        ));
        let children: Vec<_> = tree.segments.iter().filter(|s| s.parent == Some(0)).collect();
        assert_eq!(children.len(), 2);
        for c in children {
            let end = c.points.last().unwrap()[0];
            assert!(end.im.abs() < 1e-6 * end.norm().max(1.0), "{end}");
            assert!(end.re.abs() > 1.0);
        }
        assert!(tree.infinite_length);
    }

    #[test]
    fn branch_limit_truncates() {
        let f = HorizontalLeaves { omega1: |x: C64| x * 2.0 };
        let features = vec![Feature::Point { at: [c64(0.0, 0.0); 2], role: PointRole::Saddle { m: 2 } }];
        let ctl = TrajectoryControls { length_budget: 3.0, branch_limit: 2, ..Default::default() };
        let tree = trace(&f, [c64(0.0, 1.0), c64(0.0, 0.0)], &features, &ctl).unwrap();
        assert!(tree.truncated);
        assert_eq!(tree.segments.len(), 2);
    }

    #[test]
    fn corner_passage_preserves_first_integral() {
        let q = [c64(0.0, 0.0); 2];
        let e = [c64(0.01, 0.0), c64(1e-4, 1e-4)];
        let x = corner_passage(q, e, 3.0, 2.0, 0.02).unwrap();
        let fi = |p: [C64; 2]| p[0].norm().powf(2.0) * p[1].norm().powf(3.0);
        assert!((fi(x) / fi(e) - 1.0).abs() < 1e-12);
        assert!((x[1].norm() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn endpoint_classification() {
        let features = vec![
            Feature::Curve { poly: BivariatePolynomial::x(), role: CurveRole::ZeroPerp },
            Feature::Point { at: [c64(0.0, 0.0); 2], role: PointRole::Source },
        ];
        let r = classify_endpoint(&TerminalEvent::SinkEndpoint { features: vec![0] }, &features).unwrap();
        assert_eq!(r.kinds, vec![EndpointKind::Sink]);
        assert!(!r.ambiguous);
        let r = classify_endpoint(&TerminalEvent::MixedEndpoint { features: vec![0, 1] }, &features).unwrap();
        assert!(r.ambiguous);
        assert!(classify_endpoint(&TerminalEvent::BudgetExhausted, &features).is_none());
    }
}
