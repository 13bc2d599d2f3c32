//! Minimal SVG portraits of traced trajectories.

use std::fmt::Write as _;

#[derive(Clone, Debug, Default)]
pub struct Portrait {
    pub title: String,
    pub curves: Vec<Curve>,
    pub markers: Vec<Marker>,
}

#[derive(Clone, Debug)]
pub struct Curve {
    pub points: Vec<(f64, f64)>,
    pub class: &'static str,
}

#[derive(Clone, Debug)]
pub struct Marker {
    pub at: (f64, f64),
    pub class: &'static str,
    pub label: String,
}

const SIZE: f64 = 640.0;
const PAD: f64 = 32.0;

fn colour(class: &str) -> &'static str {
    match class {
        "trajectory" => "#1f5fa8",
        "joint" => "#c0392b",
        "passage" => "#8e44ad",
        "start" => "#27ae60",
        "sink" => "#2c3e50",
        "source" => "#d35400",
        _ => "#555555",
    }
}

impl Portrait {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self.curves.iter().flat_map(|c| c.points.iter()).chain(self.markers.iter().map(|m| &m.at));
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if !x0.is_finite() {
            return (-1.0, 1.0, -1.0, 1.0);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-9);
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        (cx - 0.5 * span, cx + 0.5 * span, cy - 0.5 * span, cy + 0.5 * span)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let sx = (SIZE - 2.0 * PAD) / (x1 - x0);
        let sy = (SIZE - 2.0 * PAD) / (y1 - y0);
        let map = |(x, y): (f64, f64)| (PAD + (x - x0) * sx, SIZE - PAD - (y - y0) * sy);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="20" font-family="monospace" font-size="12">{}</text>"#,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{:.1}" font-family="monospace" font-size="10">[{x0:.4}, {x1:.4}] x [{y0:.4}, {y1:.4}]</text>"#,
            SIZE - 8.0
        );
        for c in &self.curves {
            let pts: Vec<String> = c
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&p| {
                    let (u, v) = map(p);
                    format!("{u:.3},{v:.3}")
                })
                .collect();
            if pts.len() < 2 {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<polyline class="{}" fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                c.class,
                colour(c.class),
                pts.join(" ")
            );
        }
        for m in &self.markers {
            let (u, v) = map(m.at);
            let _ = writeln!(
                s,
                r#"<circle class="{}" cx="{u:.3}" cy="{v:.3}" r="3" fill="{}"><title>{}</title></circle>"#,
                m.class,
                colour(m.class),
                escape(&m.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_curves_and_markers() {
        let p = Portrait {
            title: "a < b".into(),
            curves: vec![Curve { points: vec![(0.0, 0.0), (1.0, 1.0)], class: "trajectory" }],
            markers: vec![Marker { at: (0.0, 0.0), class: "start", label: "p".into() }],
        };
        let s = p.render();
        assert!(s.starts_with("<svg"));
        assert!(s.contains("polyline"));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s, p.render());
    }
}
