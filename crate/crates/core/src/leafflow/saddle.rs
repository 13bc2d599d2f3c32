//! Saddles of the leafwise flow: zeros of `Ω₁` restricted to a leaf.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::field::{LeafError, LeafField};
use crate::numeric::{c64, unwrap_angle, C64};
use crate::ode::{integrate, StepControl};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaddleError {
    #[error("multiplicity {m} is not a saddle (need m >= 2)")]
    NotASaddle { m: u32 },
    #[error("leaf transport failed: {0}")]
    Transport(String),
    #[error(transparent)]
    Leaf(#[from] LeafError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleDirection {
    /// Argument of the direction in the leaf coordinate.
    pub angle: f64,
    /// `true` for trajectories leaving the saddle.
    pub leaving: bool,
}

/// The `2m` separatrix directions of `ℋ^θ` at a zero of `Ω₁ ≈ c·m·X^{m−1} dX`.
///
/// Along `arg X = (kπ + θ − arg c)/m` the primitive `c X^m` lies on
/// `±e^{iθ}ℝ₊`; even `k` leave the saddle, odd `k` approach it.
pub fn saddle_separatrices(c: C64, m: u32, theta: f64) -> Result<Vec<SaddleDirection>, SaddleError> {
    if m < 2 {
        return Err(SaddleError::NotASaddle { m });
    }
    let base = theta - c.arg();
    Ok((0..2 * m)
        .map(|k| SaddleDirection {
            angle: (k as f64 * PI + base).rem_euclid(TAU * m as f64) / m as f64,
            leaving: k % 2 == 0,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixCount {
    /// Winding number of the leafwise `Ω₁` coefficient around the point.
    pub winding: i64,
    /// Multiplicity fitted from the winding, `winding + 1`.
    pub m_fit: i64,
    /// Radial directions of the flow found on the sampling circle.
    pub crossings: Vec<SaddleDirection>,
    pub alternating: bool,
}

/// Samples a small circle around `q` inside its leaf, parametrized by the
/// dominant coordinate of the tangent field, and counts the directions in which
/// the `ℋ^θ` velocity is radial.
pub fn count_separatrices<F: LeafField>(
    field: &F,
    q: [C64; 2],
    radius: f64,
    theta: f64,
    samples: usize,
) -> Result<SeparatrixCount, SaddleError> {
    let y = field.tangent(q);
    let k = if y[0].norm() >= y[1].norm() { 0 } else { 1 };
    let ctl = StepControl {
        rtol: 1e-12,
        atol: 1e-15,
        h_max: 0.02,
        ..StepControl::default()
    };
    // Leaf equation in the chosen coordinate: d(other)/dX = Y_other / Y_k.
    let slope = |p: [C64; 2]| -> Result<C64, LeafError> {
        let t = field.tangent(p);
        if t[k].norm() == 0.0 {
            return Err(LeafError::Singular { x: p[0], y: p[1] });
        }
        Ok(t[1 - k] / t[k])
    };
    let point = |xk: C64, other: C64| {
        let mut p = [c64(0.0, 0.0); 2];
        p[k] = xk;
        p[1 - k] = other;
        p
    };
    // Radial leg out to the circle.
    let leg = integrate(
        |s, st: &[C64]| {
            let xk = q[k] + c64(s, 0.0);
            Ok::<_, LeafError>(vec![slope(point(xk, st[0]))?])
        },
        0.0,
        radius,
        &[q[1 - k]],
        &ctl,
    )
    .map_err(|e| SaddleError::Transport(format!("{e:?}")))?;
    let mut other = leg[0];
    let mut prev_psi = 0.0;
    let mut wind_prev: Option<f64> = None;
    let mut wind_total = 0.0;
    let mut rad_prev: Option<(f64, f64, f64)> = None;
    let mut crossings = Vec::new();
    for j in 0..=samples {
        let psi = TAU * j as f64 / samples as f64;
        if j > 0 {
            let out = integrate(
                |s, st: &[C64]| {
                    let e = C64::from_polar(radius, s);
                    let xk = q[k] + e;
                    Ok::<_, LeafError>(vec![slope(point(xk, st[0]))? * c64(0.0, 1.0) * e])
                },
                prev_psi,
                psi,
                &[other],
                &ctl,
            )
            .map_err(|e| SaddleError::Transport(format!("{e:?}")))?;
            other = out[0];
        }
        prev_psi = psi;
        let p = point(q[k] + C64::from_polar(radius, psi), other);
        let t = field.tangent(p);
        // Ω₁ applied to ∂/∂X along the leaf.
        let coef = field.omega1_y(p)? / t[k];
        let arg = coef.arg();
        match wind_prev {
            Some(prev) => {
                let a = unwrap_angle(prev, arg);
                wind_total += a - prev;
                wind_prev = Some(a);
            }
            None => wind_prev = Some(arg),
        }
        if j == samples {
            break;
        }
        // ℋ^θ velocity in the X coordinate, relative to the radial direction.
        let vel = C64::from_polar(1.0, theta) / coef;
        let rel = vel * C64::from_polar(1.0, -psi);
        let rel = rel / rel.norm();
        if let Some((ppsi, pim, pre)) = rad_prev {
            if pim == 0.0 || pim.signum() != rel.im.signum() {
                let w = pim.abs() / (pim.abs() + rel.im.abs()).max(1e-300);
                let angle = ppsi + w * (psi - ppsi);
                crossings.push(SaddleDirection {
                    angle,
                    leaving: pre + w * (rel.re - pre) > 0.0,
                });
            }
        }
        rad_prev = Some((psi, rel.im, rel.re));
    }
    // Close the circle: compare the last sample with the first.
    if let Some((ppsi, pim, pre)) = rad_prev {
        let p0 = point(q[k] + C64::from_polar(radius, 0.0), leg[0]);
        let coef0 = field.omega1_y(p0)? / field.tangent(p0)[k];
        let rel0 = C64::from_polar(1.0, theta) / coef0;
        let rel0 = rel0 / rel0.norm();
        if pim.signum() != rel0.im.signum() {
            let w = pim.abs() / (pim.abs() + rel0.im.abs()).max(1e-300);
            crossings.push(SaddleDirection {
                angle: ppsi + w * (TAU - ppsi),
                leaving: pre + w * (rel0.re - pre) > 0.0,
            });
        }
    }
    let winding = (wind_total / TAU).round() as i64;
    let alternating = crossings.len() >= 2
        && (0..crossings.len()).all(|i| crossings[i].leaving != crossings[(i + 1) % crossings.len()].leaving);
    Ok(SeparatrixCount {
        winding,
        m_fit: winding + 1,
        crossings,
        alternating,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{CompiledForm, MeromorphicOneForm};

    #[test]
    fn analytic_directions() {
        let d = saddle_separatrices(c64(1.0, 0.0), 2, 0.0).unwrap();
        let angles: Vec<f64> = d.iter().map(|s| s.angle).collect();
        for (a, want) in angles.iter().zip([0.0, PI / 2.0, PI, 3.0 * PI / 2.0]) {
            assert!((a - want).abs() < 1e-12);
        }
        assert!(d[0].leaving && !d[1].leaving && d[2].leaving && !d[3].leaving);
        let d = saddle_separatrices(c64(1.0, 0.0), 3, 0.0).unwrap();
        assert_eq!(d.len(), 6);
        assert!((d[1].angle - d[0].angle - PI / 3.0).abs() < 1e-12);
        assert!(saddle_separatrices(c64(1.0, 0.0), 1, 0.0).is_err());
    }

    #[test]
    fn traced_count_matches_multiplicity() {
        for m in 2..=4u32 {
            let text = format!("{m}*x^{}*y dx + dy", m - 1);
            let cf = CompiledForm::from_form(&MeromorphicOneForm::parse(&text).unwrap()).unwrap();
            let q = [c64(0.0, 0.0), c64(1.0, 0.0)];
            let r = count_separatrices(&cf, q, 0.1, 0.0, 720).unwrap();
            assert_eq!(r.m_fit, m as i64);
            assert_eq!(r.crossings.len(), 2 * m as usize);
            assert!(r.alternating);
        }
    }
}
