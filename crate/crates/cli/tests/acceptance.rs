//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the default harness so the report is always printed.
//! Criteria listed in `KNOWN_FAILING` are reported as FAIL and are expected
//! to stay that way; the process fails if any other criterion fails or if a
//! known failure starts passing.

use std::f64::consts::E;
use std::path::{Path, PathBuf};
use std::process::Command as Proc;
use std::time::Instant;

use foliation_cli::run::CORPUS_BETA;
use foliation_core::algebra::{BivariatePolynomial, GaussianRational, RationalFunction};
use foliation_core::blowup::{blowup_at, coordinate_order};
use foliation_core::dulac::{
    corpus_chains, dulac_map, flat_chain, gdul_exponent, gdul_map, loglog_slope, DulacMode, SiegelCornerData,
};
use foliation_core::forms::{compute_omega1, leafwise_pole_data, CompiledForm, DivisorComponent, MeromorphicOneForm};
use foliation_core::holonomy::{contraction_fit, corpus_paths, TransportControls};
use foliation_core::leafflow::{count_separatrices, trace_until, SiegelModel, TrajectoryControls};
use foliation_core::numeric::c64;
use foliation_core::pseudogroup::{
    check_hn_bounds, commutator_sweep, corpus_germs, lebesgue_residual_profile, radial_density_check, rotation_approx,
    AnalyticGerm, PseudogroupError, RadialDensity, BOUND_SLACK,
};
use foliation_core::singularities::Location;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that cannot be met as stated; see the notes printed with each.
const KNOWN_FAILING: &[u32] = &[9, 11];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn form(text: &str) -> MeromorphicOneForm {
    MeromorphicOneForm::parse(text).expect("valid form")
}

fn random_poly(rng: &mut ChaCha8Rng, max_deg: u32, terms: usize) -> BivariatePolynomial {
    loop {
        let mut p = BivariatePolynomial::zero();
        for _ in 0..terms {
            let i = rng.gen_range(0..=max_deg);
            let j = rng.gen_range(0..=max_deg - i);
            let c = GaussianRational::from_parts(
                (rng.gen_range(-9..=9), rng.gen_range(1..=6)),
                (rng.gen_range(-4..=4), rng.gen_range(1..=3)),
            );
            p.add_term((i, j), &c);
        }
        if !p.is_zero() {
            return p;
        }
    }
}

fn c1_omega1_identity() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut bad = 0;
    for _ in 0..50 {
        let mut part = || {
            let n = random_poly(&mut rng, 6, 6);
            let d = random_poly(&mut rng, 2, 3);
            RationalFunction::new(n, d).expect("nonzero denominator")
        };
        let (p, q) = (part(), part());
        let w = MeromorphicOneForm::new(p, q).expect("nonzero form");
        let o = compute_omega1(&w).expect("omega1");
        if !o.identity_defect(&w).is_zero() {
            bad += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(bad == 0 && secs < 10.0, format!("50 forms, {bad} nonzero defects, {secs:.2} s"))
}

fn c2_leafwise_residues() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in 1..=3i64 {
        for sign in [1i64, -1] {
            let w = form(&format!("x^{} dy", sign * m));
            let o = compute_omega1(&w).expect("omega1");
            let c = DivisorComponent::detect(&w, BivariatePolynomial::x(), sign * m).expect("component");
            let d = leafwise_pole_data(&w, &o, &c, [c64(0.0, 0.0), c64(5.0, 0.0)], 0.1).expect("residue");
            worst = worst.max((d.residue - c64(-(sign * m) as f64, 0.0)).norm());
        }
    }
    outcome(worst < 1e-8, format!("max |residue - expected| = {worst:.2e}"))
}

fn c3_poincare_lemma() -> Outcome {
    let paths = corpus_paths();
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for cp in &paths {
        match cp.holonomy(&TransportControls::default()) {
            Ok(r) => worst = worst.max(r.relative_deviation),
            Err(e) => failed.push(format!("{}: {e}", cp.name)),
        }
    }
    outcome(
        paths.len() == 20 && failed.is_empty() && worst < 1e-6,
        format!("{} paths, max relative deviation {worst:.2e}, errors {failed:?}", paths.len()),
    )
}

fn c4_contraction() -> Outcome {
    // x dy: start at distance 10 from the sink {x = 0} and trace one unit of length.
    let cf = CompiledForm::from_form(&form("x dy")).expect("compiled");
    let ctl = TrajectoryControls { length_budget: 1.0, step_max: 1e-2, ..Default::default() };
    let radial = trace_until(&cf, [c64(10.0, 0.0), c64(0.5, 0.0)], &[], &ctl, &|_| false)
        .map_err(|e| e.to_string())
        .and_then(|t| contraction_fit(t.root(), None, 40).map_err(|e| e.to_string()));
    let m = SiegelModel::new(2.0, 1.0, 0, 0);
    let ctl = TrajectoryControls { length_budget: 0.1, step_max: 1e-3, ..Default::default() };
    let siegel = trace_until(&m, [c64(1.0, 0.0), c64(0.01, 0.0)], &[], &ctl, &|_| false)
        .map_err(|e| e.to_string())
        .and_then(|t| contraction_fit(t.root(), None, 40).map_err(|e| e.to_string()));
    match (radial, siegel) {
        (Ok(a), Ok(b)) => {
            let decades = |f: &foliation_core::holonomy::ContractionFit| (f.window.1 / f.window.0).log10();
            let pass = a.slope < 0.0
                && b.slope < 0.0
                && a.relative_residual < 0.05
                && b.relative_residual < 0.05
                && decades(&a) >= 2.0 - 1e-9
                && decades(&b) >= 2.0 - 1e-9;
            outcome(
                pass,
                format!(
                    "x dy slope {:.4} residual {:.2}%, Siegel slope {:.4} residual {:.2}%",
                    a.slope,
                    100.0 * a.relative_residual,
                    b.slope,
                    100.0 * b.relative_residual
                ),
            )
        }
        (a, b) => outcome(false, format!("fit failed: {:?} {:?}", a.err(), b.err())),
    }
}

fn c5_dulac_exponent() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (l1, l2) in [(2.0, 1.0), (1.5, 1.0), (311.0 / 99.0, 1.0)] {
        let c = SiegelCornerData::new(l1, l2, 0, 0);
        let slope = loglog_slope(|v| dulac_map(&c, v, DulacMode::Numeric), 1e-4, 1e-2, 9);
        let v = c64(1e-2, 0.0);
        let dev = dulac_map(&c, v, DulacMode::Numeric).and_then(|n| {
            let closed = dulac_map(&c, v, DulacMode::LinearModel)?;
            Ok((n - closed).norm() / closed.norm())
        });
        match (slope, dev) {
            (Ok(s), Ok(d)) => {
                let rel = ((s - l1 / l2) / (l1 / l2)).abs();
                pass &= rel < 0.01 && d < 1e-4;
                lines.push(format!("{:.4}: slope {s:.6}, numeric/closed {d:.1e}", l1 / l2));
            }
            (s, d) => {
                pass = false;
                lines.push(format!("{:.4}: {:?} {:?}", l1 / l2, s.err(), d.err()));
            }
        }
    }
    outcome(pass, lines.join("; "))
}

fn c6_generalized_dulac() -> Outcome {
    let chains = corpus_chains();
    let mut worst: f64 = 0.0;
    let mut pass = chains.len() == 10;
    for ch in &chains {
        match gdul_exponent(ch) {
            Ok(e) => {
                pass &= e.strict && e.lambda < 1.0 && !e.flat_flag;
                match loglog_slope(|v| gdul_map(ch, v), 1e-4, 1e-2, 25) {
                    Ok(s) => worst = worst.max((s * e.lambda - 1.0).abs()),
                    Err(_) => pass = false,
                }
            }
            Err(_) => pass = false,
        }
    }
    let flat = gdul_exponent(&flat_chain()).map(|e| e.flat_flag).unwrap_or(false);
    pass &= worst < 0.01 && flat;
    outcome(pass, format!("{} chains, max |slope*lambda - 1| = {worst:.2e}, flat chain flagged: {flat}", chains.len()))
}

fn c7_blowup() -> Outcome {
    let origin = Location::Exact { x: GaussianRational::zero(), y: GaussianRational::zero() };
    let charts = blowup_at(&form("x dy - y dx"), &origin).expect("blow-up");
    let radial_ok = charts
        .iter()
        .all(|c| c.dicritical_flag && coordinate_order(&c.proper_form, c.transform.exceptional_var()) == 0);
    let mut exps = Vec::new();
    let mut family_ok = true;
    for d in 2..=5i64 {
        let text = format!("name: family\nfamily: {{ v: \"1 + x + y^2\", degree: {d} }}\nregion: {{ radius: 1/4 }}\n");
        let Ok(a) = foliation_cli::execute(foliation_cli::Command::Reduce, &text, &Default::default()) else {
            family_ok = false;
            continue;
        };
        let v: serde_json::Value = serde_json::from_str(&a.report).expect("json");
        let k = v["result"]["family"]["exceptional_exponent"].as_i64().unwrap_or(i64::MIN);
        let zero_free = v["result"]["family"]["zero_free_divisor"].as_bool().unwrap_or(false);
        let factor = v["result"]["family"]["exceptional_factor"].as_str().unwrap_or("").to_string();
        family_ok &= k == 3 - d && zero_free == (d >= 3) && factor == format!("x^({})", 3 - d);
        exps.push(format!("d={d}: {factor}"));
    }
    outcome(radial_ok && family_ok, format!("radial dicritical and clean: {radial_ok}; {}", exps.join(", ")))
}

fn c8_saddles() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for m in 2..=4u32 {
        let cf = CompiledForm::from_form(&form(&format!("{m}*x^{}*y dx + dy", m - 1))).expect("compiled");
        match count_separatrices(&cf, [c64(0.0, 0.0), c64(1.0, 0.0)], 0.1, 0.0, 720) {
            Ok(r) => {
                pass &= r.m_fit == m as i64 && r.crossings.len() == 2 * m as usize && r.alternating;
                lines.push(format!("m={m}: {} separatrices, alternating {}", r.crossings.len(), r.alternating));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("m={m}: {e}"));
            }
        }
    }
    outcome(pass, lines.join("; "))
}

fn c9_renormalization() -> Outcome {
    let fractions = [0.99, 0.6, 0.3, 0.1];
    let levels: Vec<u32> = (0..=6).collect();
    let mut lines = Vec::new();
    let mut pass = true;
    for cg in corpus_germs() {
        let b = match check_hn_bounds(&cg.map, &cg.germ, &levels, &fractions, 7) {
            Ok(b) => b,
            Err(e) => {
                pass = false;
                lines.push(format!("{}: {e}", cg.name));
                continue;
            }
        };
        let first = b.stated_violations.iter().map(|s| s.n).min();
        let mut errors = Vec::new();
        let mut below = true;
        for &n in &levels {
            match rotation_approx(&cg.map, &cg.germ, CORPUS_BETA, n, &[1.0, 0.5], 5) {
                Ok(r) => {
                    below &= r.sup_error <= r.majorant + BOUND_SLACK;
                    errors.push(r.sup_error);
                }
                Err(PseudogroupError::NTooSmall { .. }) => {}
                Err(e) => {
                    below = false;
                    lines.push(format!("{}: {e}", cg.name));
                }
            }
        }
        let strictly = errors.windows(2).all(|w| w[1] < w[0]);
        pass &= b.stated_holds() && strictly && below && errors.len() >= 2;
        lines.push(format!(
            "{}: {} stated-bound violations (first at n={}), sharp bound violations {}, sup_error strictly decreasing {strictly}, below majorant {below}",
            cg.name,
            b.stated_violations.len(),
            first.map_or("-".into(), |n| n.to_string()),
            b.sharp_violations.len(),
        ));
    }
    outcome(pass, lines.join("; "))
}

fn c10_radial_density() -> Outcome {
    let grid: Vec<f64> = (0..64).map(|j| 1e-3 * (0.9f64 / 1e-3).powf(j as f64 / 63.0)).collect();
    let mut worst_log: f64 = 0.0;
    let mut min_leb = f64::INFINITY;
    let mut profile: f64 = 0.0;
    for lambda in [1.5, 2.0, E] {
        worst_log = worst_log.max(radial_density_check(&RadialDensity::LogSquared, lambda, &grid).unwrap_or(f64::INFINITY));
        min_leb = min_leb.min(radial_density_check(&RadialDensity::Lebesgue, lambda, &grid).unwrap_or(0.0));
        for &r in &grid {
            let got = radial_density_check(&RadialDensity::Lebesgue, lambda, &[r]).unwrap_or(f64::NAN);
            let d = (got - lebesgue_residual_profile(lambda, r)).abs();
            profile = if d.is_nan() { f64::INFINITY } else { profile.max(d) };
        }
    }
    outcome(
        worst_log < 1e-12 && min_leb > 1e-3 && profile < 1e-12,
        format!("log-squared residual {worst_log:.1e}; Lebesgue residual >= {min_leb:.3}, profile deviation {profile:.1e}"),
    )
}

fn c11_commutator() -> Outcome {
    let c = AnalyticGerm::new(vec![c64(0.0, 0.0), c64(1.0, 0.0)], 1.0).expect("germ");
    match commutator_sweep(&c, c64(1.0, 0.0), &[0.08, 0.04, 0.02, 0.01]) {
        Ok(s) => {
            let r = s.reports.last().expect("reports");
            outcome(
                s.matches_expansion,
                format!(
                    "|D'| = {:.15}, predicted 1 + st = {:.6}; error/(s^2+t^2) -> {:.3}, order {:.3}",
                    r.derivative.norm(),
                    r.predicted.re,
                    s.richardson_limit,
                    s.empirical_order
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn c12_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_foliation-lab");
    let runs = [
        ("inspect", "sink_divisor.scn"),
        ("classify", "radial.scn"),
        ("reduce", "family_d3.scn"),
        ("trace", "sink_divisor.scn"),
        ("holonomy", "holonomy.scn"),
        ("dulac", "chains.scn"),
        ("renorm", "renorm_corpus.scn"),
    ];
    let base = std::env::temp_dir().join(format!("foliation-lab-acceptance-{}", std::process::id()));
    let mut bad = Vec::new();
    for (cmd, file) in runs {
        let mut outputs = Vec::new();
        for k in 0..2 {
            let out = base.join(format!("{cmd}-{k}"));
            let status = Proc::new(bin)
                .args([cmd, "--scenario"])
                .arg(scenario(file))
                .arg("--out")
                .arg(&out)
                .args(["--seed", "42"])
                .status();
            match status {
                Ok(s) if s.success() => outputs.push(std::fs::read(out.join(format!("{cmd}.json"))).unwrap_or_default()),
                _ => bad.push(format!("{cmd} exited with failure")),
            }
        }
        if outputs.len() == 2 && (outputs[0] != outputs[1] || outputs[0].is_empty()) {
            bad.push(format!("{cmd} differs"));
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    outcome(bad.is_empty(), if bad.is_empty() { "7 subcommands byte-identical".into() } else { bad.join(", ") })
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "omega1 identity", c1_omega1_identity),
        (2, "leafwise residues", c2_leafwise_residues),
        (3, "holonomy derivative", c3_poincare_lemma),
        (4, "contraction fit", c4_contraction),
        (5, "Dulac exponent", c5_dulac_exponent),
        (6, "generalized Dulac", c6_generalized_dulac),
        (7, "blow-up exactness", c7_blowup),
        (8, "saddle separatrices", c8_saddles),
        (9, "renormalization bounds", c9_renormalization),
        (10, "radial functional equation", c10_radial_density),
        (11, "commutator expansion", c11_commutator),
        (12, "determinism", c12_determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        let o = f();
        println!("criterion {id:>2} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        let known = KNOWN_FAILING.contains(&id);
        if o.pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
    println!("known failing criteria: {KNOWN_FAILING:?}");
}
