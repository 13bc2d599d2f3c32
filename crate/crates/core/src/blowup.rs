//! Quadratic blow-ups, Seidenberg reduction and the normalization pipeline.
//!
//! Chart `XT` uses coordinates `(x, t)` with `y = t·x`, exceptional divisor
//! `{x = 0}`. Chart `SY` uses `(s, y)` with `x = s·y`, exceptional divisor
//! `{y = 0}`. Both are stored as polynomials in the generic variables `x, y`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{BivariatePolynomial, GaussianRational, RationalFunction, Var};
use crate::forms::{curve_invariant, split_divisors, DivisorComponent, FormError, MeromorphicOneForm};
use crate::numeric::C64;
use crate::singularities::{
    common_zeros, find_singularities, Location, Region, SingularityControls, SingularityError, SingularityRecord,
    TaxonomyTag,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error("blow-up center must be exact; got numeric point ({x}, {y}) in chart {chart}")]
    NonExactCenter { x: String, y: String, chart: usize },
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Singularity(#[from] SingularityError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    /// `y = t·x`, coordinates `(x, t)`.
    Xt,
    /// `x = s·y`, coordinates `(s, y)`.
    Sy,
}

impl ChartKind {
    pub fn exceptional_var(self) -> Var {
        match self {
            ChartKind::Xt => Var::X,
            ChartKind::Sy => Var::Y,
        }
    }

    pub fn exceptional_poly(self) -> BivariatePolynomial {
        BivariatePolynomial::var(self.exceptional_var())
    }

    /// Substitution `(x, y) ↦ (sx, sy)` expressing parent coordinates.
    fn substitution(self) -> (BivariatePolynomial, BivariatePolynomial) {
        let xy = BivariatePolynomial::from_int_terms(&[(1, 1, 1)]);
        match self {
            ChartKind::Xt => (BivariatePolynomial::x(), xy),
            ChartKind::Sy => (xy, BivariatePolynomial::y()),
        }
    }

    /// Parent coordinates (relative to the center) of a chart point.
    pub fn to_parent(self, u: C64, v: C64) -> (C64, C64) {
        match self {
            ChartKind::Xt => (u, u * v),
            ChartKind::Sy => (u * v, v),
        }
    }

    /// Pushes a chart tangent vector to the parent.
    pub fn push_vector(self, u: C64, v: C64, w: [C64; 2]) -> [C64; 2] {
        match self {
            ChartKind::Xt => [w[0], v * w[0] + u * w[1]],
            ChartKind::Sy => [v * w[0] + u * w[1], w[1]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupChart {
    pub chart_id: String,
    pub transform: ChartKind,
    pub center: (GaussianRational, GaussianRational),
    /// Total pull-back, including the exceptional factor.
    pub pulled_form: MeromorphicOneForm,
    /// Pull-back divided by the exceptional power.
    pub proper_form: MeromorphicOneForm,
    pub exceptional_poly: BivariatePolynomial,
    pub exceptional_order: i64,
    pub dicritical_flag: bool,
}

fn pull_back(
    w: &MeromorphicOneForm,
    center: (&GaussianRational, &GaussianRational),
    kind: ChartKind,
) -> Result<MeromorphicOneForm, FormError> {
    let p = w.p().translate(center.0, center.1);
    let q = w.q().translate(center.0, center.1);
    let (sx, sy) = kind.substitution();
    let (pt, qt) = (p.compose(&sx, &sy), q.compose(&sx, &sy));
    let (x, y) = (BivariatePolynomial::x(), BivariatePolynomial::y());
    match kind {
        ChartKind::Xt => MeromorphicOneForm::new(pt.add(&qt.mul_poly(&y)), qt.mul_poly(&x)),
        ChartKind::Sy => MeromorphicOneForm::new(pt.mul_poly(&y), pt.mul_poly(&x).add(&qt)),
    }
}

/// Order of `ω` along `{v = 0}` for a coordinate `v`.
pub fn coordinate_order(w: &MeromorphicOneForm, v: Var) -> i64 {
    [w.p(), w.q()]
        .iter()
        .filter_map(|f| f.valuation(v))
        .min()
        .unwrap_or(0)
}

fn divide_coordinate(w: &MeromorphicOneForm, v: Var, k: i64) -> Result<MeromorphicOneForm, FormError> {
    MeromorphicOneForm::new(w.p().shift(v, -k), w.q().shift(v, -k))
}

fn chart(w: &MeromorphicOneForm, center: (&GaussianRational, &GaussianRational), kind: ChartKind) -> Result<BlowupChart, FormError> {
    let pulled = pull_back(w, center, kind)?;
    let var = kind.exceptional_var();
    let order = coordinate_order(&pulled, var);
    let proper = divide_coordinate(&pulled, var, order)?;
    let e = kind.exceptional_poly();
    let dicritical = !curve_invariant(&proper, &e)?;
    Ok(BlowupChart {
        chart_id: match kind {
            ChartKind::Xt => "xt".into(),
            ChartKind::Sy => "sy".into(),
        },
        transform: kind,
        center: (center.0.clone(), center.1.clone()),
        pulled_form: pulled,
        proper_form: proper,
        exceptional_poly: e,
        exceptional_order: order,
        dicritical_flag: dicritical,
    })
}

pub fn blowup_at(w: &MeromorphicOneForm, p: &Location) -> Result<[BlowupChart; 2], BlowupError> {
    let (x, y) = exact_center(p, 0)?;
    Ok([chart(w, (x, y), ChartKind::Xt)?, chart(w, (x, y), ChartKind::Sy)?])
}

fn exact_center(p: &Location, chart: usize) -> Result<(&GaussianRational, &GaussianRational), BlowupError> {
    p.exact().ok_or_else(|| {
        let (x, y) = p.value();
        BlowupError::NonExactCenter {
            x: format!("{x}"),
            y: format!("{y}"),
            chart,
        }
    })
}

/// Strict transform of a curve, or `None` when it leaves the chart.
pub fn strict_transform(
    f: &BivariatePolynomial,
    center: (&GaussianRational, &GaussianRational),
    kind: ChartKind,
) -> Option<BivariatePolynomial> {
    let (sx, sy) = kind.substitution();
    let g = f.translate(center.0, center.1).compose(&sx, &sy);
    let k = g.valuation(kind.exceptional_var()).unwrap_or(0);
    let g = match kind {
        ChartKind::Xt => g.shift_down(k, 0),
        ChartKind::Sy => g.shift_down(0, k),
    };
    (!g.is_constant()).then_some(g)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentOrigin {
    Exceptional { node: usize },
    Declared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorNode {
    pub id: usize,
    pub label: String,
    pub origin: ComponentOrigin,
    /// Tracked for exceptional curves only.
    pub self_intersection: Option<i64>,
    /// Order of `ω` along the component: positive in `(ω)₀`, negative in `(ω)_∞`.
    pub multiplicity: i64,
    pub invariant: bool,
}

impl DivisorNode {
    pub fn is_perp(&self) -> bool {
        self.multiplicity != 0 && !self.invariant
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub components: (usize, usize),
    pub node: usize,
    pub location: Location,
    pub eigenvalues: [C64; 2],
    pub tag: TaxonomyTag,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DivisorGraph {
    pub components: Vec<DivisorNode>,
    pub corners: Vec<Corner>,
}

impl DivisorGraph {
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph divisor {\n");
        for c in &self.components {
            let si = c.self_intersection.map_or_else(|| "-".to_string(), |v| v.to_string());
            let kind = if c.invariant { "invariant" } else { "dicritical" };
            let _ = writeln!(
                s,
                "  {} [label=\"{}\\nmult={} self={} {}\"];",
                c.label, c.label, c.multiplicity, si, kind
            );
        }
        for k in &self.corners {
            let (a, b) = k.components;
            let _ = writeln!(
                s,
                "  {} -- {} [label=\"{} ({:.6}{:+.6}i, {:.6}{:+.6}i)\"];",
                self.components[a].label,
                self.components[b].label,
                k.tag.name(),
                k.eigenvalues[0].re,
                k.eigenvalues[0].im,
                k.eigenvalues[1].re,
                k.eigenvalues[1].im
            );
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentTrace {
    pub component: usize,
    pub poly: BivariatePolynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub chart: Option<BlowupChart>,
    /// Total form in chart coordinates.
    pub form: MeromorphicOneForm,
    pub components: Vec<ComponentTrace>,
    pub leaves: Vec<SingularityRecord>,
    pub unreduced: Vec<SingularityRecord>,
    pub centers: Vec<(GaussianRational, GaussianRational)>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionTree {
    pub nodes: Vec<ChartNode>,
    pub divisor_graph: DivisorGraph,
    pub depth: usize,
    pub depth_exhausted: bool,
}

impl ReductionTree {
    pub fn leaves(&self) -> impl Iterator<Item = &SingularityRecord> {
        self.nodes.iter().flat_map(|n| n.leaves.iter())
    }

    pub fn all_reduced(&self) -> bool {
        !self.depth_exhausted && self.leaves().all(|s| s.quotient_class.is_reduced())
    }

    pub fn has_dicritical_component(&self) -> bool {
        self.divisor_graph
            .components
            .iter()
            .any(|c| matches!(c.origin, ComponentOrigin::Exceptional { .. }) && !c.invariant)
    }

    pub fn to_dot(&self) -> String {
        self.divisor_graph.to_dot()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Seidenberg,
    Normalize,
}

pub const DEFAULT_MAX_DEPTH: usize = 12;

pub fn seidenberg_reduce(
    w: &MeromorphicOneForm,
    region: &Region,
    max_depth: usize,
    ctl: &SingularityControls,
) -> Result<ReductionTree, BlowupError> {
    Engine::new(region, ctl, max_depth, Mode::Seidenberg).run(w, &[])
}

/// Seidenberg reduction followed by blow-ups separating the non-invariant
/// divisor components from singular points, from each other, and from
/// tangencies with the foliation.
pub fn normalize(
    w: &MeromorphicOneForm,
    components: &[DivisorComponent],
    region: &Region,
    max_depth: usize,
    ctl: &SingularityControls,
) -> Result<ReductionTree, BlowupError> {
    split_divisors(w, components)?;
    Engine::new(region, ctl, max_depth, Mode::Normalize).run(w, components)
}

struct Engine<'a> {
    region: &'a Region,
    ctl: &'a SingularityControls,
    max_depth: usize,
    mode: Mode,
}

const ON_DIVISOR_TOL: f64 = 1e-9;

impl<'a> Engine<'a> {
    fn new(region: &'a Region, ctl: &'a SingularityControls, max_depth: usize, mode: Mode) -> Self {
        Self {
            region,
            ctl,
            max_depth,
            mode,
        }
    }

    fn run(&self, w: &MeromorphicOneForm, declared: &[DivisorComponent]) -> Result<ReductionTree, BlowupError> {
        let mut graph = DivisorGraph::default();
        let mut traces = Vec::new();
        for (i, d) in declared.iter().enumerate() {
            graph.components.push(DivisorNode {
                id: i,
                label: format!("C{}", i + 1),
                origin: ComponentOrigin::Declared,
                self_intersection: None,
                multiplicity: d.multiplicity,
                invariant: d.invariant_flag,
            });
            traces.push(ComponentTrace {
                component: i,
                poly: d.defining_poly.clone(),
            });
        }
        let mut nodes = vec![ChartNode {
            id: 0,
            parent: None,
            depth: 0,
            chart: None,
            form: w.clone(),
            components: traces,
            leaves: Vec::new(),
            unreduced: Vec::new(),
            centers: Vec::new(),
            notes: Vec::new(),
        }];
        let mut exhausted = false;
        let mut queue = VecDeque::from([0usize]);
        let mut exceptional_count = 0usize;
        while let Some(id) = queue.pop_front() {
            let (leaves, centers, notes) = self.inspect(&nodes[id], &graph)?;
            let node = &mut nodes[id];
            node.notes.extend(notes);
            for leaf in &leaves {
                let through = components_through(&node.components, &leaf.location);
                for i in 0..through.len() {
                    for j in i + 1..through.len() {
                        graph.corners.push(Corner {
                            components: (through[i], through[j]),
                            node: id,
                            location: leaf.location.clone(),
                            eigenvalues: leaf.eigenvalues,
                            tag: leaf.quotient_class,
                        });
                    }
                }
            }
            node.leaves = leaves;
            if centers.is_empty() {
                continue;
            }
            if node.depth >= self.max_depth {
                exhausted = true;
                node.unreduced = centers.into_iter().map(|(_, r)| r).collect();
                node.notes.push("depth limit reached with unreduced points".into());
                continue;
            }
            let parent_form = node.form.clone();
            let parent_components = node.components.clone();
            let depth = node.depth;
            let built: Vec<_> = centers
                .par_iter()
                .map(|(c, _)| {
                    let loc = Location::Exact {
                        x: c.0.clone(),
                        y: c.1.clone(),
                    };
                    blowup_at(&parent_form, &loc)
                })
                .collect::<Result<_, _>>()?;
            for ((center, _), charts) in centers.iter().zip(built) {
                nodes[id].centers.push(center.clone());
                for t in &parent_components {
                    if t.poly.eval_exact(&center.0, &center.1).is_zero() {
                        if let Some(si) = graph.components[t.component].self_intersection.as_mut() {
                            *si -= 1;
                        }
                    }
                }
                let e_id = graph.components.len();
                exceptional_count += 1;
                graph.components.push(DivisorNode {
                    id: e_id,
                    label: format!("E{exceptional_count}"),
                    origin: ComponentOrigin::Exceptional { node: id },
                    self_intersection: Some(-1),
                    multiplicity: charts[0].exceptional_order,
                    invariant: !charts[0].dicritical_flag,
                });
                for ch in charts {
                    let mut comps: Vec<ComponentTrace> = parent_components
                        .iter()
                        .filter_map(|t| {
                            strict_transform(&t.poly, (&center.0, &center.1), ch.transform).map(|poly| ComponentTrace {
                                component: t.component,
                                poly,
                            })
                        })
                        .collect();
                    comps.push(ComponentTrace {
                        component: e_id,
                        poly: ch.exceptional_poly.clone(),
                    });
                    let child = nodes.len();
                    nodes.push(ChartNode {
                        id: child,
                        parent: Some(id),
                        depth: depth + 1,
                        form: ch.pulled_form.clone(),
                        chart: Some(ch),
                        components: comps,
                        leaves: Vec::new(),
                        unreduced: Vec::new(),
                        centers: Vec::new(),
                        notes: Vec::new(),
                    });
                    queue.push_back(child);
                }
            }
        }
        let depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        Ok(ReductionTree {
            nodes,
            divisor_graph: graph,
            depth,
            depth_exhausted: exhausted,
        })
    }

    /// Points of the node's domain: the region at the root, the exceptional
    /// line in chart `XT`, the origin in chart `SY`.
    fn in_domain(&self, node: &ChartNode, loc: &Location) -> bool {
        let (x, y) = loc.value();
        match node.chart.as_ref().map(|c| c.transform) {
            None => self.region.contains(x, y),
            Some(ChartKind::Xt) => match loc.exact() {
                Some((ex, _)) => ex.is_zero(),
                None => x.norm() < ON_DIVISOR_TOL,
            },
            Some(ChartKind::Sy) => match loc.exact() {
                Some((ex, ey)) => ex.is_zero() && ey.is_zero(),
                None => x.norm() + y.norm() < ON_DIVISOR_TOL,
            },
        }
    }

    fn search_region(&self, node: &ChartNode) -> Region {
        match node.chart {
            None => *self.region,
            Some(_) => Region::square(1e6),
        }
    }

    #[allow(clippy::type_complexity)]
    fn inspect(
        &self,
        node: &ChartNode,
        graph: &DivisorGraph,
    ) -> Result<
        (
            Vec<SingularityRecord>,
            Vec<((GaussianRational, GaussianRational), SingularityRecord)>,
            Vec<String>,
        ),
        BlowupError,
    > {
        let sings: Vec<SingularityRecord> = find_singularities(&node.form, &self.search_region(node), self.ctl)?
            .into_iter()
            .filter(|s| self.in_domain(node, &s.location))
            .collect();
        let mut centers: Vec<((GaussianRational, GaussianRational), SingularityRecord)> = Vec::new();
        let mut leaves = Vec::new();
        let mut notes = Vec::new();
        let push_center = |loc: &Location,
                               rec: SingularityRecord,
                               centers: &mut Vec<((GaussianRational, GaussianRational), SingularityRecord)>|
         -> Result<(), BlowupError> {
            let (x, y) = exact_center(loc, node.id)?;
            if !centers.iter().any(|(c, _)| &c.0 == x && &c.1 == y) {
                centers.push(((x.clone(), y.clone()), rec));
            }
            Ok(())
        };
        let perp: Vec<&ComponentTrace> = node
            .components
            .iter()
            .filter(|t| graph.components[t.component].is_perp())
            .collect();
        for s in sings.iter() {
            let on_perp = perp.iter().any(|t| passes_through(&t.poly, &s.location));
            let blow = !s.quotient_class.is_reduced() || (self.mode == Mode::Normalize && on_perp);
            if blow {
                push_center(&s.location, s.clone(), &mut centers)?;
            } else {
                leaves.push(s.clone());
            }
        }
        if self.mode == Mode::Normalize {
            let (a, b) = node.form.foliation_pair();
            let mut extra: Vec<(Location, &str)> = Vec::new();
            let divisorial: Vec<&ComponentTrace> = node
                .components
                .iter()
                .filter(|t| graph.components[t.component].multiplicity != 0)
                .collect();
            for t in &divisorial {
                let (fx, fy) = (t.poly.partial(Var::X), t.poly.partial(Var::Y));
                for loc in zeros_or_note(&fx, &fy, self.ctl, &mut notes) {
                    if passes_through(&t.poly, &loc) {
                        extra.push((loc, "singular point of a divisor component"));
                    }
                }
            }
            for (i, ti) in divisorial.iter().enumerate() {
                for tj in divisorial.iter().skip(i + 1) {
                    let (ci, cj) = (&graph.components[ti.component], &graph.components[tj.component]);
                    let both_perp = ci.is_perp() && cj.is_perp();
                    let zero_pole = (ci.multiplicity > 0) != (cj.multiplicity > 0);
                    if !both_perp && !zero_pole {
                        continue;
                    }
                    for loc in zeros_or_note(&ti.poly, &tj.poly, self.ctl, &mut notes) {
                        let regular = !sings.iter().any(|s| same_point(&s.location, &loc));
                        if both_perp || regular {
                            extra.push((loc, "divisor components meet"));
                        }
                    }
                }
            }
            for t in &perp {
                let yf = &(&b * &t.poly.partial(Var::X)) - &(&a * &t.poly.partial(Var::Y));
                for loc in zeros_or_note(&t.poly, &yf, self.ctl, &mut notes) {
                    extra.push((loc, "tangency with a non-invariant component"));
                }
            }
            for (loc, why) in extra {
                if !self.in_domain(node, &loc) {
                    continue;
                }
                let rec = regular_record(loc.clone());
                notes.push(format!("blow up {}: {why}", point_text(&loc)));
                push_center(&loc, rec, &mut centers)?;
            }
            leaves.retain(|l| !centers.iter().any(|(c, _)| same_exact(&l.location, c)));
        }
        Ok((leaves, centers, notes))
    }
}

fn zeros_or_note(
    f: &BivariatePolynomial,
    g: &BivariatePolynomial,
    ctl: &SingularityControls,
    notes: &mut Vec<String>,
) -> Vec<Location> {
    match common_zeros(f, g, ctl) {
        Ok(z) => z,
        Err(e) => {
            notes.push(format!("skipped: {e}"));
            Vec::new()
        }
    }
}

fn regular_record(location: Location) -> SingularityRecord {
    let zero = C64::new(0.0, 0.0);
    SingularityRecord {
        location,
        linear_part: [[zero; 2]; 2],
        eigenvalues: [zero; 2],
        quotient_class: TaxonomyTag::Degenerate,
        order: 0,
        tolerance_based: false,
    }
}

fn point_text(loc: &Location) -> String {
    match loc {
        Location::Exact { x, y } => format!("({x}, {y})"),
        Location::Numeric { x, y, .. } => format!("({x}, {y})"),
    }
}

fn passes_through(f: &BivariatePolynomial, loc: &Location) -> bool {
    match loc.exact() {
        Some((x, y)) => f.eval_exact(x, y).is_zero(),
        None => {
            let (x, y) = loc.value();
            f.eval(x, y).norm() < ON_DIVISOR_TOL
        }
    }
}

fn components_through(traces: &[ComponentTrace], loc: &Location) -> Vec<usize> {
    let mut ids: Vec<usize> = traces
        .iter()
        .filter(|t| passes_through(&t.poly, loc))
        .map(|t| t.component)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn same_point(a: &Location, b: &Location) -> bool {
    match (a.exact(), b.exact()) {
        (Some(p), Some(q)) => p == q,
        _ => {
            let (ax, ay) = a.value();
            let (bx, by) = b.value();
            (ax - bx).norm() + (ay - by).norm() < ON_DIVISOR_TOL
        }
    }
}

fn same_exact(a: &Location, c: &(GaussianRational, GaussianRational)) -> bool {
    a.exact().is_some_and(|(x, y)| x == &c.0 && y == &c.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkSource {
    SinkOnV0Axis,
    SourceOnV0Axis,
    HolomorphicCase,
}

/// Orientation of `ℋ` on the separatrices of a Siegel point
/// `u^a v^b (λ₁ u dv + λ₂ v du)`, decided by `K = λ₁(1+a) − λ₂(1+b)`.
pub fn sink_source_sign(l1: f64, l2: f64, a: i64, b: i64) -> SinkSource {
    let k = l1 * (1 + a) as f64 - l2 * (1 + b) as f64;
    let scale = l1.abs() * (1 + a).unsigned_abs() as f64 + l2.abs() * (1 + b).unsigned_abs() as f64;
    if k.abs() <= 1e-12 * scale.max(1.0) {
        SinkSource::HolomorphicCase
    } else if k > 0.0 {
        SinkSource::SinkOnV0Axis
    } else {
        SinkSource::SourceOnV0Axis
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusType {
    Sink,
    Source,
    Neutral,
}

/// An irrational focus `u^a v^b (λ₁ u dv − λ₂ v du)` with positive ratio is a
/// sink for `ℋ` on both separatrices when `λ₁(a+1) + λ₂(b+1) > 0`.
pub fn irrational_focus_type(l1: f64, l2: f64, a: i64, b: i64) -> FocusType {
    let k = l1 * (1 + a) as f64 + l2 * (1 + b) as f64;
    if k.abs() < 1e-12 {
        FocusType::Neutral
    } else if k > 0.0 {
        FocusType::Sink
    } else {
        FocusType::Source
    }
}

/// Evaluates both charts at matched overlap points and returns the largest
/// normalized wedge of the pushed-forward tangent directions.
pub fn chart_consistency(charts: &[BlowupChart; 2], samples: &[(C64, C64)]) -> Result<f64, FormError> {
    let fa = crate::forms::CompiledForm::from_form(&charts[0].proper_form)?;
    let fb = crate::forms::CompiledForm::from_form(&charts[1].proper_form)?;
    let mut worst: f64 = 0.0;
    for &(x, t) in samples {
        // (x, t) in XT corresponds to (s, y) = (1/t, t·x) in SY.
        let (s, y) = (1.0 / t, t * x);
        let va = ChartKind::Xt.push_vector(x, t, fa.tangent(x, t));
        let vb = ChartKind::Sy.push_vector(s, y, fb.tangent(s, y));
        let wedge = va[0] * vb[1] - va[1] * vb[0];
        let norm = (va[0].norm() + va[1].norm()) * (vb[0].norm() + vb[1].norm());
        if norm > 0.0 {
            worst = worst.max(wedge.norm() / norm);
        }
    }
    Ok(worst)
}

/// `v(x, y)·x^{1−d}·(x dy − y dx)` for the given unit `v`.
pub fn radial_with_pole(v: &BivariatePolynomial, d: u32) -> Result<MeromorphicOneForm, FormError> {
    let radial_p = &BivariatePolynomial::y() * &BivariatePolynomial::constant(GaussianRational::from_int(-1));
    let radial_q = BivariatePolynomial::x();
    let factor = RationalFunction::from(v.clone()).shift(Var::X, 1 - d as i64);
    MeromorphicOneForm::new(factor.mul_poly(&radial_p), factor.mul_poly(&radial_q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form(text: &str) -> MeromorphicOneForm {
        MeromorphicOneForm::parse(text).unwrap()
    }

    fn origin() -> Location {
        Location::Exact {
            x: GaussianRational::zero(),
            y: GaussianRational::zero(),
        }
    }

    #[test]
    fn radial_blowup_is_dicritical() {
        let [a, b] = blowup_at(&form("x dy - y dx"), &origin()).unwrap();
        assert_eq!(a.exceptional_order, 2);
        assert!(a.dicritical_flag && b.dicritical_flag);
        assert_eq!(a.pulled_form, form("x^2 dy"));
        assert_eq!(a.proper_form, form("dy"));
    }

    #[test]
    fn two_to_one_node_first_divisor_invariant() {
        let [a, b] = blowup_at(&form("2*x dy - y dx"), &origin()).unwrap();
        assert!(!a.dicritical_flag);
        assert!(!b.dicritical_flag);
        let tree = seidenberg_reduce(&form("2*x dy - y dx"), &Region::square(1.0), 12, &Default::default()).unwrap();
        assert!(tree.has_dicritical_component());
        assert!(tree.all_reduced());
    }

    #[test]
    fn pole_example_has_no_zeros_on_divisor() {
        for d in 3..6 {
            let v = BivariatePolynomial::from_int_terms(&[(1, 0, 0), (1, 1, 1)]);
            let w = radial_with_pole(&v, d).unwrap();
            let [a, _] = blowup_at(&w, &origin()).unwrap();
            assert_eq!(a.exceptional_order, 3 - d as i64);
            let s = find_singularities(&a.proper_form, &Region::square(10.0), &Default::default()).unwrap();
            assert!(s.iter().all(|r| r.location.value().0.norm() > 1e-6));
        }
    }

    #[test]
    fn numeric_center_refused() {
        let loc = Location::Numeric {
            x: C64::new(0.1, 0.0),
            y: C64::new(0.0, 0.0),
            residual: 0.0,
        };
        assert!(matches!(
            blowup_at(&form("x dy - y dx"), &loc),
            Err(BlowupError::NonExactCenter { .. })
        ));
    }

    #[test]
    fn radial_reduction_depth_one() {
        let tree = seidenberg_reduce(&form("x dy - y dx"), &Region::square(1.0), 12, &Default::default()).unwrap();
        assert_eq!(tree.depth, 1);
        assert_eq!(tree.leaves().count(), 0);
        assert!(tree.has_dicritical_component());
        assert_eq!(tree.divisor_graph.components[0].self_intersection, Some(-1));
    }

    #[test]
    fn siegel_needs_no_reduction() {
        let tree = seidenberg_reduce(&form("-2*x dy - y dx"), &Region::square(1.0), 12, &Default::default()).unwrap();
        assert_eq!(tree.depth, 0);
        assert_eq!(tree.leaves().next().unwrap().quotient_class, TaxonomyTag::Siegel);
    }

    #[test]
    fn cusp_reduces() {
        let tree = seidenberg_reduce(&form("2*y dy - 3*x^2 dx"), &Region::square(1.0), 12, &Default::default()).unwrap();
        assert!(tree.all_reduced(), "{:?}", tree.nodes.iter().map(|n| &n.notes).collect::<Vec<_>>());
        assert!(tree.depth <= 6);
        assert!(tree.divisor_graph.components.iter().all(|c| c.self_intersection.unwrap() < 0));
        assert!(!tree.divisor_graph.corners.is_empty());
    }

    #[test]
    fn sink_source_examples() {
        assert_eq!(sink_source_sign(2.0, 1.0, 0, 0), SinkSource::SinkOnV0Axis);
        assert_eq!(sink_source_sign(1.0, 1.0, 0, 0), SinkSource::HolomorphicCase);
        assert_eq!(sink_source_sign(1.0, 2.0, 0, 0), SinkSource::SourceOnV0Axis);
        assert_eq!(irrational_focus_type(2f64.sqrt(), 1.0, 0, 0), FocusType::Sink);
    }

    #[test]
    fn charts_agree_on_overlap() {
        let w = form("(x^2 + 3*y) dy - (y + x*y^2) dx");
        let charts = blowup_at(&w, &origin()).unwrap();
        let samples: Vec<_> = (1..20)
            .map(|k| {
                let k = k as f64;
                (C64::new(0.1 * k.cos(), 0.2), C64::new(1.0 + 0.1 * k, 0.3 * k.sin()))
            })
            .collect();
        assert!(chart_consistency(&charts, &samples).unwrap() < 1e-10);
    }

    #[test]
    fn normalize_radial_with_zero_line() {
        let w = form("x*(x dy - y dx)");
        let comp = DivisorComponent::detect(&w, BivariatePolynomial::x(), 1).unwrap();
        let tree = normalize(&w, &[comp], &Region::square(1.0), 12, &Default::default()).unwrap();
        assert!(!tree.depth_exhausted);
        assert!(tree.leaves().all(|s| s.quotient_class.is_reduced()));
    }

    #[test]
    fn dot_export_mentions_components() {
        let tree = seidenberg_reduce(&form("2*y dy - 3*x^2 dx"), &Region::square(1.0), 12, &Default::default()).unwrap();
        let dot = tree.to_dot();
        assert!(dot.starts_with("graph divisor {"));
        assert!(dot.contains("E1"));
    }
}
