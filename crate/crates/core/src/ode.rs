//! Dormand–Prince 5(4) for complex state vectors with a real independent variable.

use crate::numeric::C64;

#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-14,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: 0.1,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeError<E> {
    Rhs(E),
    StepCollapse { s: f64, h: f64 },
    TooManySteps { s: f64 },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &[C64], terms: &[(f64, &[C64])], h: f64) -> Vec<C64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        let ch = c * h;
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o += ki * ch;
        }
    }
    out
}

/// One trial step; returns the 5th-order solution and the scaled error norm.
pub fn dp_step<E, F>(f: &mut F, s: f64, y: &[C64], k1: &[C64], h: f64, ctl: &StepControl) -> Result<(Vec<C64>, Vec<C64>, f64), E>
where
    F: FnMut(f64, &[C64]) -> Result<Vec<C64>, E>,
{
    let k2 = f(s + C2 * h, &axpy(y, &[(A21, k1)], h))?;
    let k3 = f(s + C3 * h, &axpy(y, &[(A31, k1), (A32, &k2)], h))?;
    let k4 = f(s + C4 * h, &axpy(y, &[(A41, k1), (A42, &k2), (A43, &k3)], h))?;
    let k5 = f(s + C5 * h, &axpy(y, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)], h))?;
    let k6 = f(s + h, &axpy(y, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h))?;
    let y5 = axpy(y, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
    let k7 = f(s + h, &y5)?;
    let mut err = 0.0f64;
    for i in 0..y.len() {
        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        let sc = ctl.atol + ctl.rtol * y[i].norm().max(y5[i].norm());
        err = err.max(e.norm() / sc);
    }
    Ok((y5, k7, err))
}

pub fn next_step(h: f64, err: f64) -> f64 {
    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
    h * fac
}

/// Integrates from `s0` to `s1` (either direction), returning the final state.
pub fn integrate<E, F>(mut f: F, s0: f64, s1: f64, y0: &[C64], ctl: &StepControl) -> Result<Vec<C64>, OdeError<E>>
where
    F: FnMut(f64, &[C64]) -> Result<Vec<C64>, E>,
{
    let span = s1 - s0;
    if span == 0.0 {
        return Ok(y0.to_vec());
    }
    let dir = span.signum();
    let mut s = s0;
    let mut y = y0.to_vec();
    let mut h = ctl.h_init.min(span.abs()).min(ctl.h_max) * dir;
    let mut k1 = f(s, &y).map_err(OdeError::Rhs)?;
    for _ in 0..ctl.max_steps {
        if (s1 - s) * dir <= 0.0 {
            return Ok(y);
        }
        if (s + h - s1) * dir > 0.0 {
            h = s1 - s;
        }
        let (y5, k7, err) = dp_step(&mut f, s, &y, &k1, h, ctl).map_err(OdeError::Rhs)?;
        if err <= 1.0 {
            s += h;
            y = y5;
            k1 = k7;
            if (s1 - s).abs() <= 1e-15 * span.abs() {
                return Ok(y);
            }
        }
        h = next_step(h.abs(), err).min(ctl.h_max) * dir;
        if h.abs() < ctl.h_min {
            return Err(OdeError::StepCollapse { s, h });
        }
    }
    Err(OdeError::TooManySteps { s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::c64;

    #[test]
    fn complex_exponential() {
        // y' = i y, y(0) = 1 => y(2π) = 1.
        let r: Result<_, OdeError<()>> = integrate(
            |_, y| Ok(vec![y[0] * c64(0.0, 1.0)]),
            0.0,
            std::f64::consts::TAU,
            &[c64(1.0, 0.0)],
            &StepControl::default(),
        );
        let y = r.unwrap();
        assert!((y[0] - c64(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn backward_direction() {
        let r: Result<_, OdeError<()>> =
            integrate(|_, y| Ok(vec![y[0]]), 1.0, 0.0, &[c64(1.0, 0.0)], &StepControl::default());
        assert!((r.unwrap()[0].re - (-1.0f64).exp()).abs() < 1e-10);
    }
}
