//! Subcommand drivers. Each command reads a parsed scenario and produces one
//! JSON report plus optional side artifacts.

use std::f64::consts::{E, PI, TAU};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use foliation_core::algebra::{BivariatePolynomial, Var};
use foliation_core::blowup::{blowup_at, normalize, radial_with_pole, seidenberg_reduce, DEFAULT_MAX_DEPTH};
use foliation_core::dulac::{
    corpus_chains, dulac_map, flat_chain, gdul_exponent, gdul_map, loglog_slope, DulacChainSpec, DulacMode, SiegelCornerData,
};
use foliation_core::forms::syntax::parse_expression;
use foliation_core::forms::{compute_omega1, split_divisors, CompiledForm, DivisorSplit};
use foliation_core::holonomy::{
    contraction_fit, corpus_paths, holonomy_map, transport, LeafPath, Parametrization, PathPiece, TransportControls,
    TransverseSection,
};
use foliation_core::leafflow::{trace, CurveRole, Direction, Feature, PointRole, TrajectoryControls};
use foliation_core::numeric::c64;
use foliation_core::pseudogroup::{
    check_hn_bounds, commutator_sweep, corpus_germs, lebesgue_residual_profile, radial_density_check, rotation_approx,
    sqrt_germ, AnalyticGerm, PseudogroupError, RadialDensity, RamifiedPowerMap, BOUND_SLACK, DEFAULT_ORDER,
};
use foliation_core::singularities::{find_singularities, Location, Region, SingularityControls};
use foliation_core::{DivisorComponent, GaussianRational, MeromorphicOneForm, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::report::{envelope, error_json, ErrorBody};
use crate::scenario::{as_integer, complex, parse_scenario, real, Block, ScenarioError, ScenarioFile, Value};
use crate::svg::{Curve, Marker, Portrait};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Inspect,
    Classify,
    Reduce,
    Trace,
    Holonomy,
    Dulac,
    Renorm,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Inspect,
        Command::Classify,
        Command::Reduce,
        Command::Trace,
        Command::Holonomy,
        Command::Dulac,
        Command::Renorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Inspect => "inspect",
            Command::Classify => "classify",
            Command::Reduce => "reduce",
            Command::Trace => "trace",
            Command::Holonomy => "holonomy",
            Command::Dulac => "dulac",
            Command::Renorm => "renorm",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_depth: Option<usize>,
}

#[derive(Debug)]
pub enum RunError {
    Scenario(ScenarioError),
    /// Scenario is well-formed but its content cannot be used.
    Input(String),
    Compute(String),
    Io(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Scenario(e) => write!(f, "scenario syntax: {e}"),
            RunError::Input(m) => write!(f, "invalid scenario content: {m}"),
            RunError::Compute(m) => write!(f, "computation failed: {m}"),
            RunError::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Scenario(_) | RunError::Input(_) => 2,
            RunError::Compute(_) | RunError::Io(_) => 1,
        }
    }

    fn body(&self) -> ErrorBody {
        let (kind, line, column, expected) = match self {
            RunError::Scenario(e) => ("syntax", Some(e.line), Some(e.column), e.expected.clone()),
            RunError::Input(_) => ("input", None, None, vec![]),
            RunError::Compute(_) => ("compute", None, None, vec![]),
            RunError::Io(_) => ("io", None, None, vec![]),
        };
        ErrorBody { kind: kind.into(), message: self.to_string(), line, column, expected }
    }
}

fn input<E: fmt::Display>(e: E) -> RunError {
    RunError::Input(e.to_string())
}

fn compute<E: fmt::Display>(e: E) -> RunError {
    RunError::Compute(e.to_string())
}

/// Report text plus extra files, keyed by file name.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub report: String,
    pub extra: Vec<(String, String)>,
}

struct Ctx<'a> {
    s: &'a ScenarioFile,
    seed: u64,
    tol: Option<f64>,
    max_depth: usize,
}

/// Runs `cmd` on scenario text and returns the artifacts without touching disk.
pub fn execute(cmd: Command, text: &str, ov: &Overrides) -> Result<Artifacts, RunError> {
    let s = parse_scenario(text).map_err(RunError::Scenario)?;
    let control = |k: &str| s.block("controls").and_then(|b| b.get(k));
    let tol = ov.tol.or_else(|| control("tol").and_then(real));
    let max_depth = match ov.max_depth {
        Some(d) => d,
        None => match control("max_depth") {
            Some(Value::Scalar(v)) => as_integer(v).map_or(DEFAULT_MAX_DEPTH, |d| d.max(0) as usize),
            _ => DEFAULT_MAX_DEPTH,
        },
    };
    let ctx = Ctx { s: &s, seed: ov.seed.or(s.seed()).unwrap_or(0), tol, max_depth };
    let (result, extra) = match cmd {
        Command::Inspect => (inspect(&ctx)?, vec![]),
        Command::Classify => (classify(&ctx)?, vec![]),
        Command::Reduce => reduce(&ctx)?,
        Command::Trace => run_trace(&ctx)?,
        Command::Holonomy => (holonomy(&ctx)?, vec![]),
        Command::Dulac => (dulac(&ctx)?, vec![]),
        Command::Renorm => renorm(&ctx)?,
    };
    Ok(Artifacts { report: envelope(cmd.name(), &s.name(), ctx.seed, &result), extra })
}

/// Runs `cmd` on the scenario at `path`, writing `<command>.json` and side
/// artifacts into `out`. On failure writes `error.json` and returns the exit code.
pub fn run(cmd: Command, path: &Path, out: &Path, ov: &Overrides) -> i32 {
    let result = fs::read_to_string(path)
        .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
        .and_then(|text| execute(cmd, &text, ov));
    let write = |name: &str, body: &str| -> Result<(), RunError> {
        fs::create_dir_all(out).map_err(|e| RunError::Io(format!("{}: {e}", out.display())))?;
        let p: PathBuf = out.join(name);
        fs::write(&p, body).map_err(|e| RunError::Io(format!("{}: {e}", p.display())))
    };
    let outcome = result.and_then(|a| {
        write(&format!("{}.json", cmd.name()), &a.report)?;
        for (name, body) in &a.extra {
            write(name, body)?;
        }
        Ok(())
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let body = error_json(cmd.name(), &e.body());
            if write("error.json", &body).is_err() {
                eprint!("{body}");
            }
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

// Scenario helpers.

fn form(ctx: &Ctx) -> Result<MeromorphicOneForm, RunError> {
    let text = ctx.s.omega_text().ok_or_else(|| RunError::Input("missing `omega`".into()))?;
    MeromorphicOneForm::parse(text).map_err(input)
}

fn polynomial(text: &str) -> Result<BivariatePolynomial, RunError> {
    parse_expression(text)
        .map_err(|e| RunError::Input(format!("polynomial `{text}`: {e}")))?
        .as_polynomial()
        .ok_or_else(|| RunError::Input(format!("`{text}` is not a polynomial")))
}

fn components(ctx: &Ctx, w: &MeromorphicOneForm) -> Result<Vec<DivisorComponent>, RunError> {
    ctx.s
        .all("divisor")
        .map(|v| {
            let Value::Block(b) = v else { unreachable!("schema checked") };
            let poly = match b.get("poly") {
                Some(Value::Str(t)) => polynomial(t)?,
                _ => return Err(RunError::Input("divisor needs `poly`".into())),
            };
            let mult = int_field(b, "mult")?.ok_or_else(|| RunError::Input("divisor needs `mult`".into()))?;
            DivisorComponent::detect(w, poly, mult).map_err(input)
        })
        .collect()
}

fn int_field(b: &Block, key: &str) -> Result<Option<i64>, RunError> {
    match b.get(key) {
        None => Ok(None),
        Some(Value::Scalar(s)) => as_integer(s).map(Some).ok_or_else(|| RunError::Input(format!("`{key}` must be an integer"))),
        Some(_) => Err(RunError::Input(format!("`{key}` must be an integer"))),
    }
}

/// Real value, accepting the constants `e` and `pi` as identifiers.
fn real_value(v: &Value) -> Option<f64> {
    match v {
        Value::Ident(s) if s == "e" => Some(E),
        Value::Ident(s) if s == "pi" => Some(PI),
        _ => real(v),
    }
}

fn real_field(b: &Block, key: &str, default: f64) -> Result<f64, RunError> {
    match b.get(key) {
        None => Ok(default),
        Some(v) => real_value(v).ok_or_else(|| RunError::Input(format!("`{key}` must be real"))),
    }
}

fn list<'a>(b: &'a Block, key: &str) -> Option<&'a [Value]> {
    match b.get(key) {
        Some(Value::List(l)) => Some(l),
        _ => None,
    }
}

fn reals(b: &Block, key: &str) -> Result<Option<Vec<f64>>, RunError> {
    list(b, key)
        .map(|l| {
            l.iter()
                .map(|v| real_value(v).ok_or_else(|| RunError::Input(format!("`{key}` entries must be real"))))
                .collect()
        })
        .transpose()
}

fn point(v: &Value, what: &str) -> Result<[C64; 2], RunError> {
    match v {
        Value::List(l) if l.len() == 2 => match (complex(&l[0]), complex(&l[1])) {
            (Some(x), Some(y)) => Ok([x, y]),
            _ => Err(RunError::Input(format!("{what}: coordinates must be scalars"))),
        },
        _ => Err(RunError::Input(format!("{what}: expected [x, y]"))),
    }
}

fn ident<'a>(b: &'a Block, key: &str) -> Option<&'a str> {
    match b.get(key) {
        Some(Value::Ident(s)) => Some(s),
        _ => None,
    }
}

fn corpus(ctx: &Ctx, name: &str) -> bool {
    ctx.s.all("corpus").any(|v| matches!(v, Value::Ident(s) if s == name))
}

fn region_radius(ctx: &Ctx) -> Result<f64, RunError> {
    match ctx.s.block("region") {
        Some(b) => real_field(b, "radius", 2.0),
        None => Ok(2.0),
    }
}

fn singularity_controls(ctx: &Ctx) -> SingularityControls {
    let mut c = SingularityControls::default();
    if let Some(t) = ctx.tol {
        c.residual_tol = t;
    }
    c
}

fn loc_json(l: &Location) -> Json {
    let (x, y) = l.value();
    match l.exact() {
        Some((ex, ey)) => json!({ "x": x, "y": y, "exact": [ex.to_string(), ey.to_string()] }),
        None => json!({ "x": x, "y": y, "residual": l.residual() }),
    }
}

fn names(cs: &[DivisorComponent]) -> Vec<Json> {
    cs.iter()
        .map(|c| json!({ "poly": c.defining_poly.to_string(), "mult": c.multiplicity, "invariant": c.invariant_flag }))
        .collect()
}

// inspect

fn inspect(ctx: &Ctx) -> Result<Json, RunError> {
    let w = form(ctx)?;
    let rep = compute_omega1(&w).map_err(compute)?;
    let defect = rep.identity_defect(&w);
    let comps = components(ctx, &w)?;
    let split: DivisorSplit = split_divisors(&w, &comps).map_err(input)?;
    let (a, b) = w.foliation_pair();
    Ok(json!({
        "omega": w.to_text(),
        "closed": w.is_closed(),
        "foliation_pair": { "dx": a.to_string(), "dy": b.to_string() },
        "omega1": {
            "dx": rep.coeff_dx.to_string(),
            "dy": rep.coeff_dy.to_string(),
            "gauge": rep.gauge_note,
        },
        "identity_defect": defect.to_string(),
        "identity_holds": defect.is_zero(),
        "divisor_split": {
            "zero_fol": names(&split.zero_fol),
            "zero_perp": names(&split.zero_perp),
            "pole_fol": names(&split.pole_fol),
            "pole_perp": names(&split.pole_perp),
        },
    }))
}

// classify

fn classify(ctx: &Ctx) -> Result<Json, RunError> {
    let w = form(ctx)?;
    let r = region_radius(ctx)?;
    let recs = find_singularities(&w, &Region::square(r), &singularity_controls(ctx)).map_err(compute)?;
    let out: Vec<Json> = recs
        .iter()
        .map(|s| {
            json!({
                "location": loc_json(&s.location),
                "linear_part": s.linear_part,
                "eigenvalues": s.eigenvalues,
                "tag": s.quotient_class.name(),
                "reduced": s.quotient_class.is_reduced(),
                "order": s.order,
                "tolerance_based": s.tolerance_based,
            })
        })
        .collect();
    Ok(json!({ "omega": w.to_text(), "region_radius": r, "singularities": out }))
}

// reduce

fn reduce(ctx: &Ctx) -> Result<(Json, Vec<(String, String)>), RunError> {
    let mut family = Json::Null;
    let w = if let Some(b) = ctx.s.block("family") {
        let v = match b.get("v") {
            Some(Value::Str(t)) => polynomial(t)?,
            _ => return Err(RunError::Input("family needs `v`".into())),
        };
        let d = int_field(b, "degree")?.ok_or_else(|| RunError::Input("family needs `degree`".into()))?;
        let d = u32::try_from(d).ok().filter(|&d| d >= 1).ok_or_else(|| RunError::Input("degree must be >= 1".into()))?;
        if v.constant_term().is_zero() {
            return Err(RunError::Input("family needs v(0, 0) != 0".into()));
        }
        let w = radial_with_pole(&v, d).map_err(input)?;
        let origin = Location::Exact { x: GaussianRational::zero(), y: GaussianRational::zero() };
        let charts = blowup_at(&w, &origin).map_err(compute)?;
        let k = charts[0].exceptional_order;
        family = json!({
            "v": v.to_string(),
            "degree": d,
            "omega": w.to_text(),
            "exceptional_exponent": k,
            "exceptional_factor": format!("x^({k})"),
            "proper_form": charts[0].proper_form.to_text(),
            "dicritical": charts[0].dicritical_flag,
            "zero_free_divisor": k <= 0,
            "unit_removed": true,
        });
        // The unit v has no zeros near the origin and shares a factor with
        // both coefficients; reduce the foliation of w / v instead.
        radial_with_pole(&BivariatePolynomial::one(), d).map_err(input)?
    } else {
        form(ctx)?
    };
    let comps = components(ctx, &w)?;
    let region = Region::square(region_radius(ctx)?);
    let sc = singularity_controls(ctx);
    let tree = if comps.is_empty() {
        seidenberg_reduce(&w, &region, ctx.max_depth, &sc)
    } else {
        normalize(&w, &comps, &region, ctx.max_depth, &sc)
    }
    .map_err(compute)?;
    let charts: Vec<Json> = tree
        .nodes
        .iter()
        .map(|n| {
            let chart = n.chart.as_ref().map(|c| {
                json!({
                    "chart_id": c.chart_id,
                    "transform": c.transform,
                    "center": [c.center.0.to_string(), c.center.1.to_string()],
                    "exceptional_order": c.exceptional_order,
                    "exceptional_factor": format!("{}^({})", c.exceptional_poly, c.exceptional_order),
                    "dicritical": c.dicritical_flag,
                    "proper_form": c.proper_form.to_text(),
                })
            });
            json!({
                "id": n.id,
                "parent": n.parent,
                "depth": n.depth,
                "chart": chart,
                "form": n.form.to_text(),
                "leaves": n.leaves.iter().map(|s| json!({
                    "location": loc_json(&s.location),
                    "eigenvalues": s.eigenvalues,
                    "tag": s.quotient_class.name(),
                })).collect::<Vec<_>>(),
                "unreduced": n.unreduced.len(),
                "notes": n.notes,
            })
        })
        .collect();
    let result = json!({
        "omega": w.to_text(),
        "family": family,
        "max_depth": ctx.max_depth,
        "depth": tree.depth,
        "depth_exhausted": tree.depth_exhausted,
        "all_reduced": tree.all_reduced(),
        "has_dicritical_component": tree.has_dicritical_component(),
        "charts": charts,
        "divisor_graph": tree.divisor_graph,
    });
    Ok((result, vec![("divisor.dot".into(), tree.to_dot())]))
}

// trace

fn trajectory_controls(ctx: &Ctx, b: &Block) -> Result<TrajectoryControls, RunError> {
    let mut c = TrajectoryControls::default();
    if let Some(g) = ctx.s.block("controls") {
        c.theta = real_field(g, "theta", c.theta)?;
        c.length_budget = real_field(g, "budget", c.length_budget)?;
        c.step_max = real_field(g, "step_max", c.step_max)?;
        c.singular_radius = real_field(g, "singular_radius", c.singular_radius)?;
        c.divisor_radius = real_field(g, "divisor_radius", c.divisor_radius)?;
        if let Some(n) = int_field(g, "branch_limit")? {
            c.branch_limit = n.max(0) as usize;
        }
    }
    if let Some(t) = ctx.tol {
        c.rtol = t;
    }
    c.theta = real_field(b, "theta", c.theta)?;
    c.length_budget = real_field(b, "budget", c.length_budget)?;
    c.direction = match ident(b, "direction") {
        None | Some("forward") => Direction::Forward,
        Some("backward") => Direction::Backward,
        Some(o) => return Err(RunError::Input(format!("direction `{o}`: expected forward or backward"))),
    };
    c.step_init = c.step_init.min(c.step_max);
    c.validate().map_err(input)?;
    Ok(c)
}

#[derive(Serialize)]
struct SegmentSummary {
    id: usize,
    parent: Option<usize>,
    branch_id: String,
    kind: foliation_core::leafflow::SegmentKind,
    points: usize,
    length: f64,
    branch_length: f64,
    omega1_integral: C64,
    terminal_event: &'static str,
    endpoint: Option<[C64; 2]>,
    stiff: bool,
    leaf_drift: f64,
}

fn plane_of(b: &Block) -> Result<fn([C64; 2]) -> (f64, f64), RunError> {
    Ok(match ident(b, "plane") {
        None | Some("x") => |p: [C64; 2]| (p[0].re, p[0].im),
        Some("y") => |p: [C64; 2]| (p[1].re, p[1].im),
        Some("real") => |p: [C64; 2]| (p[0].re, p[1].re),
        Some(o) => return Err(RunError::Input(format!("plane `{o}`: expected x, y or real"))),
    })
}

fn run_trace(ctx: &Ctx) -> Result<(Json, Vec<(String, String)>), RunError> {
    let w = form(ctx)?;
    let cf = CompiledForm::from_form(&w).map_err(compute)?;
    let comps = components(ctx, &w)?;
    let split = split_divisors(&w, &comps).map_err(input)?;
    let mut base = Vec::new();
    for c in &split.zero_perp {
        base.push(Feature::Curve { poly: c.defining_poly.clone(), role: CurveRole::ZeroPerp });
    }
    for c in &split.pole_perp {
        base.push(Feature::Curve { poly: c.defining_poly.clone(), role: CurveRole::PolePerp });
    }
    let mut portrait = Portrait { title: format!("{}: {}", ctx.s.name(), w.to_text()), ..Default::default() };
    let mut csv = String::from("trajectory,segment,index,length,x_re,x_im,y_re,y_im\n");
    let mut out = Vec::new();
    let blocks: Vec<&Block> = ctx
        .s
        .all("trajectory")
        .map(|v| match v {
            Value::Block(b) => b,
            _ => unreachable!("schema checked"),
        })
        .collect();
    if blocks.is_empty() {
        return Err(RunError::Input("trace needs at least one `trajectory`".into()));
    }
    for (ti, b) in blocks.iter().enumerate() {
        let start = point(b.get("start").ok_or_else(|| RunError::Input("trajectory needs `start`".into()))?, "start")?;
        let ctl = trajectory_controls(ctx, b)?;
        let plane = plane_of(b)?;
        let mut features = base.clone();
        for v in list(b, "sinks").unwrap_or(&[]) {
            features.push(Feature::Point { at: point(v, "sink")?, role: PointRole::Sink });
        }
        for v in list(b, "saddles").unwrap_or(&[]) {
            let (at, m) = match v {
                Value::List(l) if l.len() == 3 => {
                    let at = point(&Value::List(l[..2].to_vec()), "saddle")?;
                    let m = match &l[2] {
                        Value::Scalar(s) => as_integer(s).and_then(|m| u32::try_from(m).ok()),
                        _ => None,
                    };
                    (at, m.ok_or_else(|| RunError::Input("saddle order must be a positive integer".into()))?)
                }
                _ => return Err(RunError::Input("saddle: expected [x, y, m]".into())),
            };
            features.push(Feature::Point { at, role: PointRole::Saddle { m } });
        }
        let tree = trace(&cf, start, &features, &ctl).map_err(compute)?;
        let fit = contraction_fit(tree.root(), None, 40).ok();
        let segs: Vec<SegmentSummary> = tree
            .segments
            .iter()
            .map(|s| SegmentSummary {
                id: s.id,
                parent: s.parent,
                branch_id: s.branch_id.clone(),
                kind: s.kind,
                points: s.points.len(),
                length: s.length,
                branch_length: s.branch_length,
                omega1_integral: s.omega1_integral,
                terminal_event: s.terminal_event.name(),
                endpoint: s.points.last().copied(),
                stiff: s.stiff,
                leaf_drift: s.leaf_drift,
            })
            .collect();
        for s in &tree.segments {
            let class = match s.kind {
                foliation_core::leafflow::SegmentKind::Trajectory => "trajectory",
                foliation_core::leafflow::SegmentKind::Joint => "joint",
                foliation_core::leafflow::SegmentKind::Passage => "passage",
            };
            portrait.curves.push(Curve { points: s.points.iter().map(|&p| plane(p)).collect(), class });
            for (i, (p, l)) in s.points.iter().zip(&s.lengths).enumerate() {
                csv.push_str(&format!(
                    "{ti},{},{i},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    s.id, l, p[0].re, p[0].im, p[1].re, p[1].im
                ));
            }
        }
        portrait.markers.push(Marker { at: plane(start), class: "start", label: format!("trajectory {ti}") });
        for f in &features {
            if let Feature::Point { at, role } = f {
                let class = if matches!(role, PointRole::Sink) { "sink" } else { "source" };
                portrait.markers.push(Marker { at: plane(*at), class, label: format!("{role:?}") });
            }
        }
        out.push(json!({
            "start": start,
            "theta": ctl.theta,
            "direction": ctl.direction,
            "segments": segs,
            "truncated": tree.truncated,
            "max_branch_length": tree.max_branch_length,
            "infinite_length": tree.infinite_length,
            "all_branches_end": tree.all_branches_end,
            "contraction": fit.map(|f| json!({
                "slope": f.slope,
                "k": f.k,
                "c": f.c,
                "relative_residual": f.relative_residual,
                "window": f.window,
            })),
        }));
    }
    let result = json!({ "omega": w.to_text(), "trajectories": out });
    Ok((result, vec![("portrait.svg".into(), portrait.render()), ("trace.csv".into(), csv)]))
}

// holonomy

fn path_of(b: &Block, coordinate: Var, start: C64) -> Result<LeafPath, RunError> {
    let mut pieces = Vec::new();
    for v in list(b, "pieces").ok_or_else(|| RunError::Input("holonomy needs `pieces`".into()))? {
        let Value::Block(p) = v else {
            return Err(RunError::Input("each piece is a block {to: z} or {center: z, turns: t}".into()));
        };
        let piece = if let Some(to) = p.get("to").and_then(complex) {
            PathPiece::Line { to }
        } else if let Some(center) = p.get("center").and_then(complex) {
            PathPiece::Arc { center, sweep: TAU * real_field(p, "turns", 1.0)? }
        } else {
            return Err(RunError::Input("piece needs `to` or `center`".into()));
        };
        pieces.push(piece);
    }
    if pieces.is_empty() {
        return Err(RunError::Input("path has no pieces".into()));
    }
    Ok(LeafPath { coordinate, start, pieces })
}

fn holonomy(ctx: &Ctx) -> Result<Json, RunError> {
    let tc = TransportControls { rtol: ctx.tol.unwrap_or(1e-12), ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut runs = Vec::new();
    let blocks: Vec<&Block> = ctx.s.all("holonomy").filter_map(|v| if let Value::Block(b) = v { Some(b) } else { None }).collect();
    if !blocks.is_empty() {
        let w = form(ctx)?;
        let cf = CompiledForm::from_form(&w).map_err(compute)?;
        for b in blocks {
            let coordinate = match ident(b, "coordinate") {
                None | Some("x") => Var::X,
                Some("y") => Var::Y,
                Some(o) => return Err(RunError::Input(format!("coordinate `{o}`: expected x or y"))),
            };
            let base = point(b.get("base").ok_or_else(|| RunError::Input("holonomy needs `base`".into()))?, "base")?;
            let radius = real_field(b, "radius", 0.05)?;
            let k = if coordinate == Var::X { 0 } else { 1 };
            let path = path_of(b, coordinate, base[k])?;
            let end = transport(&cf, base, &path, &tc).map_err(compute)?.end;
            let p = Parametrization::OmegaParametrized;
            let s0 = TransverseSection::fibre(coordinate, base, p, radius);
            let s1 = TransverseSection::fibre(coordinate, end, p, radius);
            let mut probes: Vec<C64> = list(b, "probes").unwrap_or(&[]).iter().filter_map(complex).collect();
            let n_random = int_field(b, "random_probes")?.unwrap_or(0).max(0);
            for _ in 0..n_random {
                let r = 0.5 * radius * rng.gen::<f64>().sqrt();
                probes.push(C64::from_polar(r, TAU * rng.gen::<f64>()));
            }
            let res = holonomy_map(&cf, &s0, &s1, &path, &probes, &tc).map_err(compute)?;
            runs.push(json!({ "base": base, "end": end, "path": path, "radius": radius, "result": res }));
        }
    }
    let mut corpus_out = Vec::new();
    if corpus(ctx, "paths") {
        for cp in corpus_paths() {
            let r = cp.holonomy(&tc).map_err(|e| RunError::Compute(format!("{}: {e}", cp.name)))?;
            corpus_out.push(json!({
                "name": cp.name,
                "form": cp.form,
                "derivative": r.derivative_at_base,
                "plemma_derivative": r.plemma_derivative,
                "relative_deviation": r.relative_deviation,
                "path_length": r.path_length,
            }));
        }
    }
    if runs.is_empty() && corpus_out.is_empty() {
        return Err(RunError::Input("holonomy needs a `holonomy` block or `corpus: paths`".into()));
    }
    let worst = corpus_out.iter().filter_map(|c| c["relative_deviation"].as_f64()).fold(0.0, f64::max);
    Ok(json!({ "runs": runs, "corpus": corpus_out, "corpus_max_relative_deviation": worst }))
}

// dulac

fn corner_of(v: &Value) -> Result<SiegelCornerData, RunError> {
    let bad = || RunError::Input("corner: expected [lambda1, lambda2, a, b]".into());
    let Value::List(l) = v else { return Err(bad()) };
    if l.len() != 4 {
        return Err(bad());
    }
    let l1 = real_value(&l[0]).ok_or_else(bad)?;
    let l2 = real_value(&l[1]).ok_or_else(bad)?;
    let int = |v: &Value| match v {
        Value::Scalar(s) => as_integer(s),
        _ => None,
    };
    Ok(SiegelCornerData::new(l1, l2, int(&l[2]).ok_or_else(bad)?, int(&l[3]).ok_or_else(bad)?))
}

fn chain_report(name: String, chain: &DulacChainSpec, radii: (f64, f64)) -> Json {
    match gdul_exponent(chain) {
        Ok(e) => {
            let slope = loglog_slope(|v| gdul_map(chain, v), radii.0, radii.1, 25);
            let target = 1.0 / e.lambda;
            let slope_json = match &slope {
                Ok(s) => json!(s),
                Err(err) => json!(err.to_string()),
            };
            let rel = slope.as_ref().map(|s| ((s - target) / target).abs()).unwrap_or(f64::NAN);
            json!({
                "name": name,
                "chain": chain,
                "valid": true,
                "lambda": e.lambda,
                "strict": e.strict,
                "flat_flag": e.flat_flag,
                "factors": e.factors,
                "slope": slope_json,
                "predicted_slope": target,
                "relative_slope_error": rel,
            })
        }
        Err(err) => json!({ "name": name, "chain": chain, "valid": false, "error": err.to_string() }),
    }
}

fn dulac(ctx: &Ctx) -> Result<Json, RunError> {
    let mut corners = Vec::new();
    for v in ctx.s.all("dulac") {
        let Value::Block(b) = v else { continue };
        let l1 = real_field(b, "lambda1", f64::NAN)?;
        let l2 = real_field(b, "lambda2", f64::NAN)?;
        let a = int_field(b, "a")?.unwrap_or(0);
        let bb = int_field(b, "b")?.unwrap_or(0);
        let c = SiegelCornerData::new(l1, l2, a, bb);
        let radii = reals(b, "radii")?.unwrap_or_else(|| vec![1e-4, 1e-2]);
        let (r0, r1) = match radii[..] {
            [r0, r1] if 0.0 < r0 && r0 < r1 => (r0, r1),
            _ => return Err(RunError::Input("`radii` must be [r_min, r_max] with 0 < r_min < r_max".into())),
        };
        let angle = real_field(b, "angle", 0.0)?;
        let rot = C64::from_polar(1.0, angle);
        let mode = ident(b, "mode").unwrap_or("both");
        let slope = loglog_slope(|v| dulac_map(&c, v * rot, DulacMode::LinearModel), r0, r1, 25).map_err(compute)?;
        let mut entry = json!({
            "lambda1": l1,
            "lambda2": l2,
            "a": a,
            "b": bb,
            "k": c.k(),
            "exponent": c.exponent(),
            "angle": angle,
            "radii": [r0, r1],
            "linear_slope": slope,
            "linear_slope_relative_error": ((slope - c.exponent()) / c.exponent()).abs(),
        });
        match mode {
            "linear" => {}
            "numeric" | "both" => {
                let v = rot * r1;
                let closed = dulac_map(&c, v, DulacMode::LinearModel).map_err(compute)?;
                let numeric = dulac_map(&c, v, DulacMode::Numeric).map_err(compute)?;
                entry["numeric"] = json!({
                    "v": v,
                    "closed_form": closed,
                    "numeric": numeric,
                    "relative_deviation": (numeric - closed).norm() / closed.norm(),
                });
                if mode == "numeric" {
                    let ns = loglog_slope(|v| dulac_map(&c, v * rot, DulacMode::Numeric), r0, r1, 9).map_err(compute)?;
                    entry["numeric_slope"] = json!(ns);
                }
            }
            o => return Err(RunError::Input(format!("mode `{o}`: expected linear, numeric or both"))),
        }
        corners.push(entry);
    }
    let mut chains = Vec::new();
    for (i, v) in ctx.s.all("chain").enumerate() {
        let Value::Block(b) = v else { continue };
        let need = |k: &str| b.get(k).ok_or_else(|| RunError::Input(format!("chain needs `{k}`")));
        let entry = corner_of(need("entry")?)?;
        let exit = corner_of(need("exit")?)?;
        let mids = list(b, "corners").unwrap_or(&[]).iter().map(corner_of).collect::<Result<Vec<_>, _>>()?;
        let orders = list(b, "orders")
            .ok_or_else(|| RunError::Input("chain needs `orders`".into()))?
            .iter()
            .map(|v| match v {
                Value::Scalar(s) => as_integer(s).ok_or_else(|| RunError::Input("orders must be integers".into())),
                _ => Err(RunError::Input("orders must be integers".into())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let chain = DulacChainSpec {
            entry,
            corners: mids,
            exit,
            divisor_orders: orders,
            branch_turns: int_field(b, "turns")?.unwrap_or(0),
        };
        chains.push(chain_report(format!("chain_{i}"), &chain, (1e-4, 1e-2)));
    }
    if corpus(ctx, "chains") {
        for (i, c) in corpus_chains().iter().enumerate() {
            chains.push(chain_report(format!("corpus_{i}"), c, (1e-4, 1e-2)));
        }
        chains.push(chain_report("flat".into(), &flat_chain(), (1e-4, 1e-2)));
    }
    if corners.is_empty() && chains.is_empty() {
        return Err(RunError::Input("dulac needs a `dulac` or `chain` block, or `corpus: chains`".into()));
    }
    Ok(json!({ "corners": corners, "chains": chains }))
}

// renorm

const RADIUS_FRACTIONS: [f64; 4] = [0.99, 0.6, 0.3, 0.1];
const N_ANGLES: usize = 7;
/// Target rotation for corpus germs; small enough that every level is admissible.
pub const CORPUS_BETA: f64 = 1.0 / 7.0;

struct Experiment {
    name: String,
    germ: AnalyticGerm,
    map: RamifiedPowerMap,
    beta: Option<f64>,
    levels: Vec<u32>,
}

fn germ_of(b: &Block) -> Result<AnalyticGerm, RunError> {
    let alpha = real_field(b, "alpha", 0.2)?;
    match ident(b, "germ").unwrap_or("linear") {
        "linear" => Ok(AnalyticGerm::rotation(alpha, DEFAULT_ORDER)),
        "sqrt" => Ok(sqrt_germ(alpha, DEFAULT_ORDER)),
        "series" => {
            let cs: Vec<C64> = list(b, "coefficients")
                .ok_or_else(|| RunError::Input("series germ needs `coefficients`".into()))?
                .iter()
                .map(|v| complex(v).ok_or_else(|| RunError::Input("coefficients must be scalars".into())))
                .collect::<Result<_, _>>()?;
            let r = real_field(b, "radius", 1.0)?;
            let mut all = vec![c64(0.0, 0.0)];
            all.extend(cs);
            AnalyticGerm::new(all, r).map_err(input)
        }
        o => Err(RunError::Input(format!("germ `{o}`: expected linear, sqrt or series"))),
    }
}

fn levels_of(b: &Block) -> Result<Vec<u32>, RunError> {
    match list(b, "levels") {
        None => Ok((0..=6).collect()),
        Some(l) => l
            .iter()
            .map(|v| match v {
                Value::Scalar(s) => as_integer(s).and_then(|n| u32::try_from(n).ok()),
                _ => None,
            })
            .map(|n| n.ok_or_else(|| RunError::Input("levels must be non-negative integers".into())))
            .collect(),
    }
}

fn experiment_report(e: &Experiment) -> Result<(Json, String), RunError> {
    let mut csv = String::new();
    let bounds = check_hn_bounds(&e.map, &e.germ, &e.levels, &RADIUS_FRACTIONS, N_ANGLES).map_err(compute)?;
    for (n, d) in &bounds.sup_deviation {
        csv.push_str(&format!("{},hn_deviation,{n},{d:.12e},\n", e.name));
    }
    let mut rotation = Vec::new();
    let mut last: Option<f64> = None;
    let mut monotone = true;
    let mut below = true;
    if let Some(beta) = e.beta {
        for &n in &e.levels {
            match rotation_approx(&e.map, &e.germ, beta, n, &[1.0, 0.5], 5) {
                Ok(r) => {
                    if let Some(prev) = last {
                        monotone &= r.sup_error <= prev;
                    }
                    last = Some(r.sup_error);
                    let ok = r.sup_error <= r.majorant + BOUND_SLACK;
                    below &= ok;
                    csv.push_str(&format!("{},rotation,{n},{:.12e},{:.12e}\n", e.name, r.sup_error, r.majorant));
                    rotation.push(json!({
                        "n": n,
                        "kn": r.kn,
                        "tau": r.tau,
                        "sup_error": r.sup_error,
                        "angle_error": r.angle_error,
                        "majorant": r.majorant,
                        "below_majorant": ok,
                    }));
                }
                Err(PseudogroupError::NTooSmall { n, minimal }) => {
                    rotation.push(json!({ "n": n, "skipped": "n below the admissible level", "minimal": minimal }));
                }
                Err(err) => return Err(compute(err)),
            }
        }
    }
    let report = json!({
        "name": e.name,
        "lambda": e.map.lambda,
        "alpha": bounds.alpha,
        "c": bounds.c,
        "tau": bounds.tau,
        "truncation_tail": bounds.truncation_tail,
        "samples": bounds.samples,
        "levels": e.levels,
        "sup_error": bounds.sup_deviation.iter().map(|(_, d)| *d).fold(0.0, f64::max),
        "stated_bound_holds": bounds.stated_holds(),
        "stated_violations": bounds.stated_violations.len(),
        "first_stated_violation": bounds.stated_violations.first(),
        "sharp_bound_holds": bounds.sharp_violations.is_empty(),
        "sharp_violations": bounds.sharp_violations.len(),
        "sup_deviation": bounds.sup_deviation,
        "rotation": rotation,
        "rotation_monotone": monotone,
        "rotation_below_majorant": below,
    });
    Ok((report, csv))
}

fn density_of(b: &Block) -> Result<RadialDensity, RunError> {
    Ok(match ident(b, "kind").unwrap_or("log_squared") {
        "log_squared" => RadialDensity::LogSquared,
        "lebesgue" => RadialDensity::Lebesgue,
        "power" => RadialDensity::Power { exponent: real_field(b, "exponent", 1.0)? },
        o => return Err(RunError::Input(format!("density kind `{o}`: expected log_squared, lebesgue or power"))),
    })
}

fn renorm(ctx: &Ctx) -> Result<(Json, Vec<(String, String)>), RunError> {
    let mut experiments = Vec::new();
    for v in ctx.s.all("renorm") {
        let Value::Block(b) = v else { continue };
        let lambda = real_field(b, "lambda", 2.0)?;
        let map = RamifiedPowerMap::centred(lambda, 0.9).map_err(input)?;
        experiments.push(Experiment {
            name: format!("{}_{}", ident(b, "germ").unwrap_or("linear"), experiments.len()),
            germ: germ_of(b)?,
            map,
            beta: b.get("beta").map(|_| real_field(b, "beta", 0.0)).transpose()?,
            levels: levels_of(b)?,
        });
    }
    if corpus(ctx, "germs") {
        for cg in corpus_germs() {
            experiments.push(Experiment { name: cg.name, germ: cg.germ, map: cg.map, beta: Some(CORPUS_BETA), levels: (0..=6).collect() });
        }
    }
    let mut csv = String::from("experiment,quantity,n,value,majorant\n");
    let mut reports = Vec::new();
    for e in &experiments {
        let (r, c) = experiment_report(e)?;
        reports.push(r);
        csv.push_str(&c);
    }
    let mut densities = Vec::new();
    for v in ctx.s.all("density") {
        let Value::Block(b) = v else { continue };
        let t = density_of(b)?;
        let lambdas = reals(b, "lambdas")?.unwrap_or_else(|| vec![1.5, 2.0, E]);
        let n = int_field(b, "grid")?.unwrap_or(64).max(2) as usize;
        let grid: Vec<f64> = (0..n).map(|j| 1e-3 * (0.9f64 / 1e-3).powf(j as f64 / (n - 1) as f64)).collect();
        for lambda in lambdas {
            let residual = radial_density_check(&t, lambda, &grid).map_err(compute)?;
            let mut entry = json!({ "density": t, "lambda": lambda, "grid": n, "residual": residual });
            if t == RadialDensity::Lebesgue {
                let mut worst: f64 = 0.0;
                for &r in &grid {
                    let got = radial_density_check(&t, lambda, &[r]).map_err(compute)?;
                    worst = worst.max((got - lebesgue_residual_profile(lambda, r)).abs());
                }
                entry["profile_max_deviation"] = json!(worst);
            }
            densities.push(entry);
        }
    }
    let mut commutators = Vec::new();
    for v in ctx.s.all("commutator") {
        let Value::Block(b) = v else { continue };
        let cs: Vec<C64> = list(b, "c")
            .ok_or_else(|| RunError::Input("commutator needs `c`".into()))?
            .iter()
            .map(|v| complex(v).ok_or_else(|| RunError::Input("`c` entries must be scalars".into())))
            .collect::<Result<_, _>>()?;
        let c = AnalyticGerm::new(cs, 1.0).map_err(input)?;
        let p = b.get("p").and_then(complex).unwrap_or(c64(1.0, 0.0));
        let eps = reals(b, "eps")?.unwrap_or_else(|| vec![0.08, 0.04, 0.02, 0.01]);
        let sweep = commutator_sweep(&c, p, &eps).map_err(compute)?;
        commutators.push(json!({ "p": p, "eps": eps, "sweep": sweep }));
    }
    if reports.is_empty() && densities.is_empty() && commutators.is_empty() {
        return Err(RunError::Input("renorm needs a `renorm`, `density` or `commutator` block, or `corpus: germs`".into()));
    }
    let result = json!({ "experiments": reports, "densities": densities, "commutators": commutators });
    Ok((result, vec![("renorm.csv".into(), csv)]))
}
